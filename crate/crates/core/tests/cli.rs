use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use voxevo::checkpoint::{Checkpoint, GenomeRecord};
use voxevo::config::{AdvisorMode, RunConfig};
use voxevo::run::{self, run_dir, CHECKPOINT_FILE, CURVES_FILE};

fn voxevo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxevo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small(out: &Path, generations: u64) -> RunConfig {
    let mut cfg = RunConfig {
        seed: 11,
        generations,
        population: 6,
        grid: [2, 2, 2],
        repetitions: 1,
        hidden: vec![8],
        threads: 2,
        output: out.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.encoding.frequencies = 4;
    cfg.sim.duration = 0.05;
    cfg.sim.dt = 1e-4;
    cfg
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn curves(cfg: &RunConfig, rep: u32) -> String {
    std::fs::read_to_string(run_dir(cfg, rep).join(CURVES_FILE)).unwrap()
}

#[test]
fn run_writes_artifacts_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(&tmp.path().join("a"), 3);
    cfg.repetitions = 2;
    let path = write_config(tmp.path(), &cfg);
    let out = voxevo(&["run", "--config", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.contains("best fitness")).count(), 2);
    assert!(stdout.contains("seed 11") && stdout.contains("seed 12"));

    for rep in 0..2 {
        let dir = run_dir(&cfg, rep);
        for f in [
            "curves.csv",
            "checkpoint.ckpt",
            "best_genome.ckpt",
            "best_robot.mesh",
            "best_robot.voxels",
        ] {
            assert!(dir.join(f).is_file(), "missing {f}");
        }
        let text = curves(&cfg, rep);
        assert!(text.starts_with("# voxevo curves v1\n"));
        assert_eq!(text.lines().count(), 2 + 4);
    }

    let again = tmp.path().join("b");
    let out = voxevo(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    assert!(out.status.success());
    let mut other = cfg.clone();
    other.output = again;
    assert_eq!(curves(&cfg, 0), curves(&other, 0));
    assert_eq!(curves(&cfg, 1), curves(&other, 1));
    assert_ne!(curves(&cfg, 0), curves(&cfg, 1));
}

#[test]
fn zero_generations_writes_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path(), 0);
    let s = run::run_repetition(&cfg, 0, None).unwrap();
    assert_eq!(s.generations, 1);
    assert_eq!(curves(&cfg, 0).lines().count(), 3);
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path(), 5);
    let path = write_config(tmp.path(), &cfg);
    let out = voxevo(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--generations",
        "1",
        "--population",
        "4",
        "--seed",
        "3",
        "--advisor",
        "scripted",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed 3"));
    let ck = Checkpoint::load(&run_dir(&cfg, 0).join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ck.config.generations, 1);
    assert_eq!(ck.config.population, 4);
    assert_eq!(ck.config.advisor.mode, AdvisorMode::Scripted);
    assert_eq!(ck.state.population.len(), 4);
}

#[test]
fn invalid_config_fails_with_field_name() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "population = 1\n").unwrap();
    let out = voxevo(&["run", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("population"));
}

/// Interrupts a run at `stop` by running with a shorter horizon, then resumes
/// under the full one.
fn interrupted(cfg: &RunConfig, stop: u64) {
    let mut short = cfg.clone();
    short.generations = stop;
    run::run_repetition(&short, 0, None).unwrap();
    let file = run_dir(cfg, 0).join(CHECKPOINT_FILE);
    let mut ck = Checkpoint::load(&file).unwrap();
    ck.config.generations = cfg.generations;
    ck.save(&file).unwrap();
    let out = voxevo(&["resume", file.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn resume_matches_uninterrupted_run() {
    for mode in [AdvisorMode::Off, AdvisorMode::Scripted] {
        let tmp = tempfile::tempdir().unwrap();
        let mut straight = small(&tmp.path().join("straight"), 6);
        straight.advisor.mode = mode;
        run::run_repetition(&straight, 0, None).unwrap();
        let mut resumed = straight.clone();
        resumed.output = tmp.path().join("resumed");
        interrupted(&resumed, 3);
        assert_eq!(curves(&straight, 0), curves(&resumed, 0), "{mode:?}");
        let a = GenomeRecord::load(&run_dir(&straight, 0).join("best_genome.ckpt")).unwrap();
        let b = GenomeRecord::load(&run_dir(&resumed, 0).join("best_genome.ckpt")).unwrap();
        assert_eq!(a, b);
        // Wall time and output path legitimately differ; the evolutionary state must not.
        let a = Checkpoint::load(&run_dir(&straight, 0).join(CHECKPOINT_FILE))
            .unwrap()
            .state;
        let b = Checkpoint::load(&run_dir(&resumed, 0).join(CHECKPOINT_FILE))
            .unwrap()
            .state;
        assert_eq!(a.population, b.population);
        assert_eq!(a.fitnesses, b.fitnesses);
        assert_eq!(a.params, b.params);
        assert_eq!(a.rng, b.rng);
        assert_eq!(a.best, b.best);
    }
}

#[test]
fn resume_at_final_generation_rewrites_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path(), 2);
    run::run_repetition(&cfg, 0, None).unwrap();
    let dir = run_dir(&cfg, 0);
    let before = std::fs::read(dir.join(CURVES_FILE)).unwrap();
    std::fs::remove_file(dir.join("best_robot.mesh")).unwrap();
    let out = voxevo(&["resume", dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(dir.join(CURVES_FILE)).unwrap(), before);
    assert!(dir.join("best_robot.mesh").is_file());
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path(), 1);
    run::run_repetition(&cfg, 0, None).unwrap();
    let file = run_dir(&cfg, 0).join(CHECKPOINT_FILE);
    let mut bytes = std::fs::read(&file).unwrap();
    let n = bytes.len() - 10;
    bytes[n] ^= 0x01;
    std::fs::write(&file, &bytes).unwrap();
    let out = voxevo(&["resume", file.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupt"));

    let text = std::fs::read_to_string(&file).unwrap().replacen(" v1", " v9", 1);
    std::fs::write(&file, text).unwrap();
    let out = voxevo(&["resume", file.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

#[test]
fn export_mesh_from_either_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path(), 1);
    run::run_repetition(&cfg, 0, None).unwrap();
    let dir = run_dir(&cfg, 0);
    let expected = std::fs::read_to_string(dir.join("best_robot.mesh")).unwrap();
    for src in ["best_genome.ckpt", CHECKPOINT_FILE] {
        let out_path = tmp.path().join(format!("{src}.obj"));
        let out = voxevo(&[
            "export-mesh",
            dir.join(src).to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(std::fs::read_to_string(out_path).unwrap(), expected);
    }
}

#[test]
fn bench_prints_one_row_per_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bench.csv");
    let out = voxevo(&[
        "bench",
        "--robots",
        "2",
        "--steps",
        "5",
        "--trials",
        "1",
        "--max-threads",
        "4",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(
        rows.iter().map(|r| r.split(',').next().unwrap()).collect::<Vec<_>>(),
        ["1", "2", "4"]
    );
}
