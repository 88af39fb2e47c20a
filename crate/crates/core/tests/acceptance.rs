//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion before asserting it.
//!
//! ```text
//! cargo test -p voxevo --test acceptance -- --nocapture --test-threads=1
//! ```

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use voxevo::advisor::{
    scripted_advisor, AuditLog, EndpointConfig, LlmAdvisor, ReplySource, RetryPolicy, Transport, TransportError,
    ADVISOR_SCHEMA_VERSION,
};
use voxevo::bench::{run_bench, synthetic_population, BenchConfig};
use voxevo::config::RunConfig;
use voxevo::evolution::{diversity, GenerationReport, HyperParams};
use voxevo::genome::gaussian_encode;
use voxevo::morphology::{
    build_mass_spring, MassSpringSystem, Material, MaterialTable, PlaneParams, PointMass, Spring, VoxelGrid,
};
use voxevo::physics::{SimConfig, Simulator};
use voxevo::run::{run_dir, run_repetition, AUDIT_FILE, CURVES_FILE};
use voxevo::AdvisorRequest;

fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {n:>2} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} {name} failed: {detail}");
}

fn secs(d: Duration) -> String {
    format!("{:.3} s", d.as_secs_f64())
}

// ---------------------------------------------------------------- 1

/// Plain scalar loop over `[cos(2π B v), sin(2π B v)]`.
fn encode_oracle(b: &[[f64; 3]], v: [f64; 3]) -> Vec<f64> {
    let m = b.len();
    let mut out = vec![0.0; 2 * m];
    for r in 0..m {
        let mut dot = 0.0;
        for c in 0..3 {
            dot += b[r][c] * v[c];
        }
        out[r] = (2.0 * PI * dot).cos();
        out[m + r] = (2.0 * PI * dot).sin();
    }
    out
}

#[test]
fn criterion_01_encoding_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let b: Vec<[f64; 3]> = (0..32)
            .map(|_| std::array::from_fn(|_| StandardNormal.sample(&mut rng)))
            .collect();
        let v: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
        let flat: Vec<f64> = b.iter().flatten().copied().collect();
        let got = gaussian_encode(v, &flat);
        let want = encode_oracle(&b, v);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    let t = started.elapsed();
    verdict(
        1,
        "encoding oracle equivalence",
        worst <= 1e-12 && t < Duration::from_secs(1),
        format!("max abs error {worst:.3e} <= 1e-12, {} < 1 s", secs(t)),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_undamped_energy_drift() {
    let started = Instant::now();
    let (k, m, rest) = (1e3, 0.1, 0.1);
    let system = MassSpringSystem {
        masses: vec![
            PointMass {
                position: [0.0, 0.0, 0.0],
                velocity: [0.0; 3],
                mass: m,
            },
            PointMass {
                position: [0.12, 0.0, 0.0],
                velocity: [0.0, 0.3, 0.0],
                mass: m,
            },
        ],
        springs: vec![Spring {
            i: 0,
            j: 1,
            stiffness: k,
            rest_length: rest,
            damping_ratio: 0.0,
            actuation: None,
        }],
        plane: PlaneParams::default(),
    };
    let cfg = SimConfig {
        gravity: 0.0,
        dt: 1e-5,
        contact: false,
        ..SimConfig::default()
    };
    let energy = |s: &MassSpringSystem| {
        let [a, b] = [&s.masses[0], &s.masses[1]];
        let kinetic: f64 = s
            .masses
            .iter()
            .map(|p| 0.5 * p.mass * p.velocity.iter().map(|v| v * v).sum::<f64>())
            .sum();
        let len = (0..3)
            .map(|c| (b.position[c] - a.position[c]).powi(2))
            .sum::<f64>()
            .sqrt();
        kinetic + 0.5 * k * (len - rest).powi(2)
    };
    let e0 = energy(&system);
    let mut sim = Simulator::new(system, cfg).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        sim.step().unwrap();
        worst = worst.max((energy(sim.system()) - e0).abs());
    }
    let rel = worst / e0;
    let t = started.elapsed();
    verdict(
        2,
        "undamped energy drift",
        rel <= 0.01 && t < Duration::from_secs(5),
        format!(
            "max drift {:.4}% of E0 = {e0:.4e} J <= 1%, {} < 5 s",
            rel * 100.0,
            secs(t)
        ),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_momentum_conservation() {
    let started = Instant::now();
    let mut grid = VoxelGrid::new([2, 2, 2]).unwrap();
    let mats = [
        Material::MuscleExpand,
        Material::MuscleContract,
        Material::SoftTissue,
        Material::HardBone,
    ];
    for i in 0..grid.len() {
        let [x, y, z] = grid.coords(i);
        grid.set(x, y, z, mats[i % 4], 0.3 + 0.08 * i as f64);
    }
    let mut system = build_mass_spring(&grid, &MaterialTable::default()).unwrap();
    assert!(system.has_actuation() && system.springs.iter().all(|s| s.damping_ratio > 0.0));
    let drift = [0.7, -0.4, 0.2];
    for p in &mut system.masses {
        p.velocity = drift;
    }
    let com_velocity = |s: &MassSpringSystem| -> [f64; 3] {
        let total: f64 = s.masses.iter().map(|p| p.mass).sum();
        std::array::from_fn(|c| s.masses.iter().map(|p| p.mass * p.velocity[c]).sum::<f64>() / total)
    };
    let v0 = com_velocity(&system);
    let speed0 = v0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cfg = SimConfig {
        gravity: 0.0,
        contact: false,
        ..SimConfig::default()
    };
    let mut sim = Simulator::new(system, cfg).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        sim.step().unwrap();
        let v = com_velocity(sim.system());
        let d = (0..3).map(|c| (v[c] - v0[c]).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(d / speed0);
    }
    let t = started.elapsed();
    verdict(
        3,
        "momentum conservation",
        worst <= 1e-9 && t < Duration::from_secs(10),
        format!(
            "max relative COM velocity drift {worst:.3e} <= 1e-9, {} < 10 s",
            secs(t)
        ),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_resting_contact() {
    let started = Instant::now();
    let mut grid = VoxelGrid::new([1, 1, 1]).unwrap();
    grid.set(0, 0, 0, Material::SoftTissue, 0.5);
    let table = MaterialTable::default();
    let mut system = build_mass_spring(&grid, &table).unwrap();
    for p in &mut system.masses {
        p.position[2] += 0.05;
    }
    let weight = system.masses.iter().map(|p| p.mass).sum::<f64>() * 9.81;
    let cfg = SimConfig {
        dt: 1e-4,
        ..SimConfig::default()
    };
    let steps = (1.0 / cfg.dt).round() as usize;
    let mut sim = Simulator::new(system, cfg).unwrap();
    let mut lowest = f64::INFINITY;
    let mut settled_at = None;
    for n in 1..=steps {
        sim.step().unwrap();
        let s = sim.system();
        lowest = lowest.min(s.masses.iter().map(|p| p.position[2]).fold(f64::INFINITY, f64::min));
        let fastest = s
            .masses
            .iter()
            .map(|p| p.velocity.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if fastest < 1e-3 {
            settled_at.get_or_insert(n as f64 * cfg.dt);
        } else {
            settled_at = None;
        }
    }
    let s = sim.system();
    let contacting = s.masses.iter().filter(|p| p.position[2] <= 0.0).count().max(1);
    let penetration = -s.masses.iter().map(|p| p.position[2]).fold(f64::INFINITY, f64::min);
    let bound = 2.0 * weight / (table.plane.stiffness * contacting as f64);
    let t = started.elapsed();
    let pass = settled_at.is_some() && penetration <= bound && lowest >= -0.01 && t < Duration::from_secs(10);
    verdict(
        4,
        "resting contact",
        pass,
        format!(
            "settled at {:?} s, penetration {penetration:.3e} m <= {bound:.3e} m ({contacting} contacts), \
             lowest z {lowest:.3e} >= -0.01, {} < 10 s",
            settled_at,
            secs(t)
        ),
    );
}

// ---------------------------------------------------------------- 5-8

const DESK_SEEDS: [u64; 3] = [1, 2, 3];

fn desk_config(out: &Path, seed: u64, threads: usize) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        generations: 20,
        population: 12,
        grid: [3, 3, 3],
        repetitions: 1,
        threads,
        output: out.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.sim.duration = 0.5;
    cfg.sim.dt = 1e-4;
    cfg
}

struct DeskRun {
    curves: Vec<u8>,
    rows: Vec<Vec<f64>>,
    elapsed: Duration,
}

fn desk_run(seed: u64, threads: usize) -> DeskRun {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path(), seed, threads);
    let started = Instant::now();
    run_repetition(&cfg, 0, None).unwrap();
    let elapsed = started.elapsed();
    let curves = std::fs::read(run_dir(&cfg, 0).join(CURVES_FILE)).unwrap();
    let rows = String::from_utf8(curves.clone())
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    DeskRun { curves, rows, elapsed }
}

fn desk_runs() -> &'static Vec<DeskRun> {
    static RUNS: OnceLock<Vec<DeskRun>> = OnceLock::new();
    RUNS.get_or_init(|| DESK_SEEDS.iter().map(|&s| desk_run(s, 1)).collect())
}

const BEST: usize = 5;
const DIVERSITY: usize = 8;

#[test]
fn criterion_05_elitism_monotonicity() {
    let runs = desk_runs();
    let run = &runs[0];
    let best: Vec<f64> = run.rows.iter().map(|r| r[BEST]).collect();
    let monotone = best.windows(2).all(|w| w[1] >= w[0]);
    let pass = monotone && run.rows.len() == 21 && run.elapsed < Duration::from_secs(300);
    verdict(
        5,
        "elitism monotonicity",
        pass,
        format!(
            "seed {} best {:.4} -> {:.4} over {} rows, non-decreasing = {monotone}, {} < 300 s",
            DESK_SEEDS[0],
            best[0],
            best[best.len() - 1],
            run.rows.len(),
            secs(run.elapsed)
        ),
    );
}

#[test]
fn criterion_06_evolution_efficacy() {
    let runs = desk_runs();
    let improved: Vec<bool> = runs
        .iter()
        .map(|r| r.rows.last().unwrap()[BEST] > r.rows[0][BEST])
        .collect();
    let count = improved.iter().filter(|&&b| b).count();
    verdict(
        6,
        "evolution efficacy",
        count >= 2,
        format!("{count}/3 seeds end above their generation-0 best (need >= 2): {improved:?}"),
    );
}

fn uniform(material: Material, n: usize) -> VoxelGrid {
    let mut g = VoxelGrid::new([n, 1, 1]).unwrap();
    for x in 0..n {
        g.set(x, 0, 0, material, 0.5);
    }
    g
}

#[test]
fn criterion_07_diversity_bounds() {
    let runs = desk_runs();
    let all: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.rows.iter().map(|row| row[DIVERSITY]))
        .collect();
    let in_range = all.iter().all(|d| (0.0..=1.0).contains(d));
    let same = diversity(&[
        uniform(Material::SoftTissue, 5),
        uniform(Material::SoftTissue, 5),
        uniform(Material::SoftTissue, 5),
    ]);
    let different = diversity(&[uniform(Material::HardBone, 5), uniform(Material::MuscleExpand, 5)]);
    verdict(
        7,
        "diversity bounds",
        in_range && same == 0.0 && different == 1.0,
        format!(
            "{} generations in [0, 1] = {in_range}, identical = {same}, all-different = {different}",
            all.len()
        ),
    );
}

#[test]
fn criterion_08_determinism_across_threads() {
    let seed = DESK_SEEDS[0];
    let files: Vec<Vec<u8>> = [1, 1, 8, 8].iter().map(|&t| desk_run(seed, t).curves).collect();
    let identical = files.windows(2).all(|w| w[0] == w[1]);
    verdict(
        8,
        "determinism across thread counts",
        identical,
        format!(
            "4 curves.csv files (threads 1, 1, 8, 8) byte-identical = {identical}, {} bytes",
            files[0].len()
        ),
    );
}

// ---------------------------------------------------------------- 9

#[derive(Clone)]
enum Fixture {
    Valid,
    Prose,
    OutOfRange,
    Garbage,
    Down,
}

const FIXTURES: [Fixture; 5] = [
    Fixture::Valid,
    Fixture::Prose,
    Fixture::OutOfRange,
    Fixture::Garbage,
    Fixture::Down,
];

fn chat(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

/// Replays a queue of canned responses, one per POST.
struct FixtureTransport {
    queue: VecDeque<Result<String, TransportError>>,
}

impl Transport for FixtureTransport {
    fn post(&mut self, _: &str, _: Option<&str>, body: &Value, _: Duration) -> Result<String, TransportError> {
        assert!(body["messages"][1]["content"].as_str().is_some_and(|p| !p.is_empty()));
        self.queue
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::Request("fixture queue exhausted".into())))
    }
}

fn fixture_queue(consultations: usize) -> VecDeque<Result<String, TransportError>> {
    let mut q = VecDeque::new();
    for n in 0..consultations {
        match FIXTURES[n % FIXTURES.len()] {
            Fixture::Valid => q.push_back(Ok(chat(
                r#"{"mutation_rate": 0.2, "mutation_scale": 0.15, "crossover_rate": 0.5, "elite_fraction": 0.25}"#,
            ))),
            Fixture::Prose => q.push_back(Ok(chat(
                "Diversity is healthy, so I would ease off. Proposed: {\"mutation_rate\": 0.05, \
                 \"mutation_scale\": 0.08, \"crossover_rate\": 0.6, \"elite_fraction\": 0.3} Good luck!",
            ))),
            Fixture::OutOfRange => q.push_back(Ok(chat(
                r#"{"mutation_rate": 7.5, "mutation_scale": -3, "crossover_rate": 1.8, "elite_fraction": 0.0}"#,
            ))),
            Fixture::Garbage => {
                for _ in 0..3 {
                    q.push_back(Ok(chat("I am unable to help with hyperparameters today.")));
                }
            }
            Fixture::Down => {
                for _ in 0..3 {
                    q.push_back(Err(TransportError::Request("connection refused".into())));
                }
            }
        }
    }
    q
}

fn window(bests: &[f64], diversity: f64) -> AdvisorRequest {
    AdvisorRequest {
        window: bests
            .iter()
            .enumerate()
            .map(|(g, &b)| GenerationReport {
                generation: g as u64,
                params: HyperParams::default(),
                best_fitness: b,
                mean_fitness: b / 2.0,
                std_fitness: 0.01,
                diversity,
                evaluations: 30,
                wall_time: 0.0,
            })
            .collect(),
        current_params: HyperParams::default(),
        schema_version: ADVISOR_SCHEMA_VERSION.into(),
    }
}

#[test]
fn criterion_09_advisor_robustness() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path(), 5, 1);
    let run = run_dir(&cfg, 0);
    std::fs::create_dir_all(&run).unwrap();
    let audit = run.join(AUDIT_FILE);
    let endpoint = EndpointConfig {
        url: "http://fixture.invalid/v1/chat/completions".into(),
        model: "fixture".into(),
        temperature: 0.7,
        timeout: Duration::from_secs(1),
        api_key: None,
        allow_material_updates: false,
        retry: RetryPolicy {
            max_retries: 2,
            base_delay: Duration::ZERO,
        },
    };
    let advisor = LlmAdvisor::new(
        endpoint,
        FixtureTransport {
            queue: fixture_queue(20),
        },
    )
    .with_sleep(|_| {})
    .with_audit(AuditLog::new(&audit));
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        run_repetition(&cfg, 0, Some(Box::new(advisor)))
    }));
    let completed = matches!(outcome, Ok(Ok(_)));
    let text = std::fs::read_to_string(run.join(CURVES_FILE)).unwrap_or_default();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();

    let finals: Vec<_> = AuditLog::read(&audit)
        .unwrap_or_default()
        .into_iter()
        .filter(|e| e.is_final)
        .collect();
    let mut ok = completed && rows.len() == 21 && finals.len() == 20;
    let mut notes = Vec::new();
    for (n, e) in finals.iter().enumerate() {
        // Consultation n picks the parameters for generation n + 1.
        let used = &rows[n + 1][1..5];
        let before = &rows[n][1..5];
        let params = e.params.unwrap();
        let got = [
            params.mutation_rate,
            params.mutation_scale,
            params.crossover_rate,
            params.elite_fraction,
        ];
        ok &= used == got;
        match FIXTURES[n % FIXTURES.len()] {
            Fixture::Valid => ok &= e.source == Some(ReplySource::Llm) && got == [0.2, 0.15, 0.5, 0.25],
            Fixture::Prose => ok &= e.source == Some(ReplySource::Llm) && got == [0.05, 0.08, 0.6, 0.3],
            Fixture::OutOfRange => {
                let clamped = e.source == Some(ReplySource::Llm) && got == [1.0, 0.001, 1.0, 0.05];
                if !clamped {
                    notes.push(format!("out-of-range not clamped: {got:?}"));
                }
                ok &= clamped;
            }
            Fixture::Garbage | Fixture::Down => {
                let fell_back = e.source == Some(ReplySource::FallbackPrevious) && e.attempt == 2 && used == before;
                if !fell_back {
                    notes.push(format!("consultation {n} did not fall back"));
                }
                ok &= fell_back;
            }
        }
    }

    let calm = scripted_advisor(&window(&[0.1, 0.2, 0.3], 0.5));
    let diverse_low = scripted_advisor(&window(&[0.1, 0.2], 0.01));
    let stalled = scripted_advisor(&window(&[0.3, 0.3, 0.3], 0.5));
    let rules = calm.params == HyperParams::default()
        && calm.source == ReplySource::Scripted
        && (diverse_low.params.mutation_rate - 0.15).abs() < 1e-15
        && (diverse_low.params.mutation_scale - 0.15).abs() < 1e-15
        && diverse_low.params.crossover_rate == 0.4
        && stalled.params.crossover_rate == 0.5
        && stalled.params.mutation_rate == 0.1;
    verdict(
        9,
        "advisor robustness",
        ok && rules,
        format!(
            "run completed = {completed}, {} curve rows, {} decisions checked, scripted rules = {rules} {}",
            rows.len(),
            finals.len(),
            notes.join("; ")
        ),
    );
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_throughput_scaling() {
    let cfg = BenchConfig {
        steps: 200,
        thread_counts: vec![1, 8],
        ..BenchConfig::default()
    };
    let springs: u64 = synthetic_population(&cfg, &MaterialTable::default())
        .iter()
        .map(|s| s.springs.len() as u64)
        .sum();
    let rows = run_bench(&cfg);
    let counts_exact = rows.iter().all(|r| r.spring_updates == cfg.steps * springs);
    let speedup = rows[1].updates_per_second / rows[0].updates_per_second;
    verdict(
        10,
        "throughput scaling",
        counts_exact && speedup >= 3.0,
        format!(
            "8-thread speedup {speedup:.2}x >= 3x on {} available cores, {:.3e} updates/s at 1 thread, \
             update count {} = {} steps x {springs} springs: {counts_exact}",
            voxevo::bench::available_threads(),
            rows[0].updates_per_second,
            rows[0].spring_updates,
            cfg.steps
        ),
    );
}

// ---------------------------------------------------------------- 11

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn criterion_11_morphology_construction() {
    let table = MaterialTable::default();
    let mut one = VoxelGrid::new([1, 1, 1]).unwrap();
    one.set(0, 0, 0, Material::SoftTissue, 0.5);
    let mut two = VoxelGrid::new([2, 1, 1]).unwrap();
    two.set(0, 0, 0, Material::SoftTissue, 0.5);
    two.set(1, 0, 0, Material::MuscleExpand, 0.7);
    let a = build_mass_spring(&one, &table).unwrap();
    let b = build_mass_spring(&two, &table).unwrap();
    let mut worst: f64 = 0.0;
    for s in [&a, &b] {
        for sp in &s.springs {
            worst = worst.max((sp.rest_length - dist(s.masses[sp.i].position, s.masses[sp.j].position)).abs());
        }
    }
    let counts = [a.masses.len(), a.springs.len(), b.masses.len(), b.springs.len()];
    verdict(
        11,
        "morphology construction",
        counts == [8, 28, 12, 50] && worst <= 1e-12,
        format!("masses/springs {counts:?} = [8, 28, 12, 50], max rest-length error {worst:.1e} <= 1e-12"),
    );
}
