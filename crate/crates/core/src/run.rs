//! Run orchestration: repetitions, per-generation checkpoints, artifacts.
//!
//! Each repetition `k` runs with seed `seed + k` in `<output>/run_<k>`:
//!
//! | file | content |
//! |------|---------|
//! | `curves.csv` | one row per generation |
//! | `checkpoint.ckpt` | latest full state, rewritten every generation |
//! | `best_genome.ckpt` | best genome found and its grid size |
//! | `best_robot.mesh` | Wavefront OBJ of the best body |
//! | `best_robot.voxels` | voxel listing of the best body |
//! | `best_trajectory.csv` | COM path of the best body (when enabled) |
//! | `advisor_audit.jsonl` | every advisor exchange (llm mode) |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::advisor::{
    Advisor, AuditLog, EndpointConfig, HttpTransport, LlmAdvisor, ReplayAdvisor, RetryPolicy, ScriptedAdvisor,
    LLM_KEY_ENV,
};
use crate::checkpoint::{Checkpoint, CheckpointError, GenomeRecord, FORMAT_VERSION};
use crate::config::{AdvisorMode, ConfigError, RunConfig};
use crate::evolution::{evolve_generation, phenotype, EvolutionContext, EvolutionState};
use crate::export;
use crate::morphology::build_mass_spring;
use crate::physics::simulate_observed;

pub const CURVES_FILE: &str = "curves.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const BEST_GENOME_FILE: &str = "best_genome.ckpt";
pub const MESH_FILE: &str = "best_robot.mesh";
pub const VOXELS_FILE: &str = "best_robot.voxels";
pub const TRAJECTORY_FILE: &str = "best_trajectory.csv";
pub const AUDIT_FILE: &str = "advisor_audit.jsonl";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Setup(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_index: u32,
    pub seed: u64,
    pub dir: PathBuf,
    pub best_fitness: f64,
    pub generations: u64,
}

pub fn run_dir(config: &RunConfig, rep: u32) -> PathBuf {
    config.output.join(format!("run_{rep:03}"))
}

fn context(config: &RunConfig) -> EvolutionContext {
    EvolutionContext {
        dims: config.grid,
        table: config.materials.clone(),
        sim: config.sim,
        allow_material_updates: config.advisor.allow_material_updates,
    }
}

fn thread_pool(config: &RunConfig) -> Result<rayon::ThreadPool, RunError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_threads())
        .build()
        .map_err(|e| RunError::Setup(format!("thread pool: {e}")))
}

/// Locates the audit log to replay for repetition `rep`: either the file
/// itself or an earlier output directory with one log per run.
fn replay_source(path: &Path, rep: u32) -> PathBuf {
    if path.is_dir() {
        let per_run = path.join(format!("run_{rep:03}")).join(AUDIT_FILE);
        if per_run.exists() {
            return per_run;
        }
        return path.join(AUDIT_FILE);
    }
    path.to_path_buf()
}

/// Builds the advisor selected by the config for one repetition.
pub fn make_advisor(config: &RunConfig, rep: u32, dir: &Path) -> Result<Option<Box<dyn Advisor>>, RunError> {
    let a = &config.advisor;
    Ok(match a.mode {
        AdvisorMode::Off => None,
        AdvisorMode::Scripted => Some(Box::new(ScriptedAdvisor)),
        AdvisorMode::Llm => {
            let endpoint = EndpointConfig {
                url: a.endpoint.clone(),
                model: a.model.clone(),
                temperature: a.temperature,
                timeout: Duration::from_secs_f64(a.timeout_secs),
                api_key: std::env::var(LLM_KEY_ENV).ok().filter(|k| !k.is_empty()),
                allow_material_updates: a.allow_material_updates,
                retry: RetryPolicy {
                    max_retries: a.max_retries,
                    base_delay: Duration::from_secs_f64(a.backoff_secs),
                },
            };
            let llm = LlmAdvisor::new(endpoint, HttpTransport).with_audit(AuditLog::new(dir.join(AUDIT_FILE)));
            Some(Box::new(llm))
        }
        AdvisorMode::Replay => {
            let log = a
                .replay_log
                .as_deref()
                .ok_or_else(|| RunError::Setup("replay mode needs advisor.replay_log".into()))?;
            let path = replay_source(log, rep);
            Some(Box::new(ReplayAdvisor::open(&path).map_err(io_err(&path))?))
        }
    })
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(&tmp))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_curves(config: &RunConfig, dir: &Path, state: &EvolutionState) -> Result<(), RunError> {
    write_file(&dir.join(CURVES_FILE), |w| {
        export::write_curves(w, &state.history, config.record_wall_time)
    })
}

/// Writes the best-individual artifacts for a finished run.
fn write_best(config: &RunConfig, dir: &Path, state: &EvolutionState) -> Result<f64, RunError> {
    let Some(best) = &state.best else {
        return Ok(0.0);
    };
    let record = GenomeRecord {
        format_version: FORMAT_VERSION,
        dims: config.grid,
        fitness: Some(best.fitness),
        generation: Some(best.generation),
        genome: best.genome.clone(),
    };
    record.save(&dir.join(BEST_GENOME_FILE))?;
    let grid = phenotype(&best.genome, config.grid);
    let edge = config.materials.voxel_edge;
    write_file(&dir.join(MESH_FILE), |w| export::write_obj(w, &grid, edge))?;
    write_file(&dir.join(VOXELS_FILE), |w| export::write_voxels(w, &grid))?;
    if config.trajectory_stride > 0 && grid.occupied() > 0 {
        let table = context(config).table_for(&state.params);
        if let Ok(system) = build_mass_spring(&grid, &table) {
            let mut samples = Vec::new();
            let _ = simulate_observed(&system, &config.sim, config.trajectory_stride, |t, c| {
                samples.push((t, c))
            });
            write_file(&dir.join(TRAJECTORY_FILE), |w| export::write_trajectory(w, &samples))?;
        }
    }
    Ok(best.fitness)
}

/// Runs generations until `config.generations` has been evaluated,
/// checkpointing after each one.
fn drive(
    config: &RunConfig,
    rep: u32,
    seed: u64,
    dir: &Path,
    mut state: EvolutionState,
    mut advisor: Option<Box<dyn Advisor>>,
) -> Result<RunSummary, RunError> {
    let ctx = context(config);
    let pool = thread_pool(config)?;
    while state.generation <= config.generations {
        let adv: Option<&mut dyn Advisor> = match &mut advisor {
            Some(a) => Some(&mut **a),
            None => None,
        };
        pool.install(|| evolve_generation(&mut state, adv, &ctx));
        Checkpoint::new(config, rep, seed, &state).save(&dir.join(CHECKPOINT_FILE))?;
        write_curves(config, dir, &state)?;
    }
    write_curves(config, dir, &state)?;
    let best_fitness = write_best(config, dir, &state)?;
    Ok(RunSummary {
        run_index: rep,
        seed,
        dir: dir.to_path_buf(),
        best_fitness,
        generations: state.history.len() as u64,
    })
}

/// One repetition. `advisor` overrides the configured mode when given.
pub fn run_repetition(config: &RunConfig, rep: u32, advisor: Option<Box<dyn Advisor>>) -> Result<RunSummary, RunError> {
    config.validate()?;
    let dir = run_dir(config, rep);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let audit = dir.join(AUDIT_FILE);
    if audit.exists() {
        std::fs::remove_file(&audit).map_err(io_err(&audit))?;
    }
    let advisor = match advisor {
        Some(a) => Some(a),
        None => make_advisor(config, rep, &dir)?,
    };
    let seed = config.seed.wrapping_add(rep as u64);
    let state = EvolutionState::new(seed, config.population, config.encoding, &config.hidden, config.params)
        .map_err(|e| RunError::Setup(e.to_string()))?;
    drive(config, rep, seed, &dir, state, advisor)
}

/// All repetitions, sequentially.
pub fn run(config: &RunConfig) -> Result<Vec<RunSummary>, RunError> {
    config.validate()?;
    (0..config.repetitions)
        .map(|rep| run_repetition(config, rep, None))
        .collect()
}

/// Continues the run recorded in a checkpoint file (or a run directory
/// holding `checkpoint.ckpt`).
pub fn resume(path: &Path) -> Result<RunSummary, RunError> {
    let file = if path.is_dir() {
        path.join(CHECKPOINT_FILE)
    } else {
        path.to_path_buf()
    };
    let ck = Checkpoint::load(&file)?;
    ck.config.validate()?;
    let dir = file
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let state = ck.state.restore()?;
    let advisor = make_advisor(&ck.config, ck.run_index, &dir)?;
    drive(&ck.config, ck.run_index, ck.seed, &dir, state, advisor)
}

/// Writes the OBJ mesh of the best body stored in a genome or run
/// checkpoint.
pub fn export_mesh(checkpoint: &Path, out: &Path) -> Result<(), RunError> {
    let text = std::fs::read_to_string(checkpoint).map_err(io_err(checkpoint))?;
    let (genome, dims, edge) = match crate::checkpoint::peek_kind(&text) {
        Some(crate::checkpoint::CHECKPOINT_KIND) => {
            let ck = Checkpoint::from_text(&text)?;
            let best = ck
                .state
                .best
                .ok_or_else(|| RunError::Setup("checkpoint has no evaluated individual".into()))?;
            (best.genome, ck.config.grid, ck.config.materials.voxel_edge)
        }
        _ => {
            let rec = GenomeRecord::from_text(&text)?;
            (
                rec.genome,
                rec.dims,
                crate::morphology::MaterialTable::default().voxel_edge,
            )
        }
    };
    let grid = phenotype(&genome, dims);
    write_file(out, |w| export::write_obj(w, &grid, edge))
}
