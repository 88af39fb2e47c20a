//! Physics throughput benchmark over a fixed synthetic population.

use std::io::{self, Write};
use std::time::Instant;

use rayon::prelude::*;

use crate::morphology::{build_mass_spring, MassSpringSystem, Material, MaterialTable, VoxelGrid};
use crate::physics::{SimConfig, Simulator};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub robots: usize,
    pub dims: [usize; 3],
    pub steps: u64,
    pub trials: usize,
    pub thread_counts: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            robots: 30,
            dims: [5, 5, 5],
            steps: 1000,
            trials: 5,
            thread_counts: thread_ladder(available_threads()),
        }
    }
}

pub fn available_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// 1, 2, 4, … up to `max`, always ending at `max`.
pub fn thread_ladder(max: usize) -> Vec<usize> {
    let max = max.max(1);
    let mut out = Vec::new();
    let mut t = 1;
    while t < max {
        out.push(t);
        t *= 2;
    }
    out.push(max);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub threads: usize,
    /// Spring updates in one trial.
    pub spring_updates: u64,
    /// Median wall time over the trials, seconds.
    pub median_seconds: f64,
    pub updates_per_second: f64,
}

/// Fully occupied robots with materials cycling through the four solids,
/// offset per robot so the population is not uniform.
pub fn synthetic_population(cfg: &BenchConfig, table: &MaterialTable) -> Vec<MassSpringSystem> {
    (0..cfg.robots)
        .map(|r| {
            let mut grid = VoxelGrid::new(cfg.dims).expect("bench dims are positive");
            for i in 0..grid.len() {
                let [x, y, z] = grid.coords(i);
                let m = Material::ALL[1 + (i + r) % 4];
                let w = 0.1 + 0.8 * (((i * 7 + r * 3) % 10) as f64 / 10.0);
                grid.set(x, y, z, m, w);
            }
            build_mass_spring(&grid, table).expect("non-empty grid")
        })
        .collect()
}

fn trial(population: &[MassSpringSystem], sim: &SimConfig, steps: u64) -> u64 {
    population
        .par_iter()
        .map(|sys| {
            let mut s = Simulator::new(sys.clone(), *sim).expect("bench config is valid");
            for _ in 0..steps {
                if s.step().is_err() {
                    break;
                }
            }
            s.spring_updates()
        })
        .sum()
}

pub fn run_bench(cfg: &BenchConfig) -> Vec<BenchRow> {
    let table = MaterialTable::default();
    let sim = SimConfig::default();
    let population = synthetic_population(cfg, &table);
    let mut rows = Vec::new();
    for &threads in &cfg.thread_counts {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        let mut times = Vec::with_capacity(cfg.trials);
        let mut updates = 0;
        for _ in 0..cfg.trials.max(1) {
            let start = Instant::now();
            updates = pool.install(|| trial(&population, &sim, cfg.steps));
            times.push(start.elapsed().as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        let median = times[times.len() / 2];
        rows.push(BenchRow {
            threads,
            spring_updates: updates,
            median_seconds: median,
            updates_per_second: updates as f64 / median.max(f64::MIN_POSITIVE),
        });
    }
    rows
}

pub fn write_csv<W: Write>(mut w: W, rows: &[BenchRow]) -> io::Result<()> {
    writeln!(w, "threads,spring_updates,median_seconds,updates_per_second")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.threads, r.spring_updates, r.median_seconds, r.updates_per_second
        )?;
    }
    Ok(())
}

pub fn write_table<W: Write>(mut w: W, rows: &[BenchRow]) -> io::Result<()> {
    writeln!(
        w,
        "{:>7}  {:>14}  {:>10}  {:>14}  {:>7}",
        "threads", "updates", "median s", "updates/s", "speedup"
    )?;
    let base = rows.first().map_or(1.0, |r| r.updates_per_second);
    for r in rows {
        writeln!(
            w,
            "{:>7}  {:>14}  {:>10.4}  {:>14.4e}  {:>6.2}x",
            r.threads,
            r.spring_updates,
            r.median_seconds,
            r.updates_per_second,
            r.updates_per_second / base
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder() {
        assert_eq!(thread_ladder(1), vec![1]);
        assert_eq!(thread_ladder(8), vec![1, 2, 4, 8]);
        assert_eq!(thread_ladder(6), vec![1, 2, 4, 6]);
    }

    #[test]
    fn update_count_matches_topology() {
        let cfg = BenchConfig {
            robots: 3,
            dims: [2, 2, 2],
            steps: 10,
            trials: 1,
            thread_counts: vec![1, 2],
        };
        let springs: u64 = synthetic_population(&cfg, &MaterialTable::default())
            .iter()
            .map(|s| s.springs.len() as u64)
            .sum();
        let rows = run_bench(&cfg);
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.spring_updates, 10 * springs);
            assert!(r.updates_per_second > 0.0);
        }
    }
}
