//! Run configuration: one TOML file, every field defaulted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::HyperParams;
use crate::genome::{EncodingSpec, DEFAULT_HIDDEN};
use crate::morphology::MaterialTable;
use crate::physics::SimConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AdvisorMode {
    #[default]
    Off,
    Scripted,
    Llm,
    Replay,
}

impl std::str::FromStr for AdvisorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Self::Off),
            "scripted" => Ok(Self::Scripted),
            "llm" => Ok(Self::Llm),
            "replay" => Ok(Self::Replay),
            other => Err(format!("unknown advisor mode `{other}` (off|scripted|llm|replay)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvisorConfig {
    pub mode: AdvisorMode,
    /// Chat-completion URL.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_secs: f64,
    /// Let the advisor rescale material stiffness mid-run.
    pub allow_material_updates: bool,
    /// Audit log to replay, or an earlier output directory holding one per run.
    pub replay_log: Option<PathBuf>,
}

impl Default for AdvisorConfig {
    fn default() -> Self {
        Self {
            mode: AdvisorMode::Off,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4-turbo".into(),
            temperature: 0.7,
            timeout_secs: 60.0,
            max_retries: 2,
            backoff_secs: 1.0,
            allow_material_updates: false,
            replay_log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub generations: u64,
    pub population: usize,
    pub grid: [usize; 3],
    pub repetitions: u32,
    pub hidden: Vec<usize>,
    /// Worker threads for population evaluation; 0 means all cores.
    pub threads: usize,
    pub output: PathBuf,
    /// Write measured seconds into the `wall_time` column of `curves.csv`.
    /// Off by default so the file is reproducible byte for byte.
    pub record_wall_time: bool,
    /// COM sampling stride (steps) for `best_trajectory.csv`; 0 disables it.
    pub trajectory_stride: u64,
    pub params: HyperParams,
    pub encoding: EncodingSpec,
    pub sim: SimConfig,
    pub materials: MaterialTable,
    pub advisor: AdvisorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            generations: 100,
            population: 30,
            grid: [5, 5, 5],
            repetitions: 3,
            hidden: DEFAULT_HIDDEN.to_vec(),
            threads: 0,
            output: PathBuf::from("runs"),
            record_wall_time: false,
            trajectory_stride: 0,
            params: HyperParams::default(),
            encoding: EncodingSpec::default(),
            sim: SimConfig::default(),
            materials: MaterialTable::default(),
            advisor: AdvisorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population < 2 {
            return Err(invalid("population", "must be >= 2"));
        }
        if self.grid.contains(&0) {
            return Err(invalid("grid", "dimensions must be >= 1"));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions", "must be >= 1"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden", "layer widths must be >= 1"));
        }
        if self.encoding.frequencies == 0 {
            return Err(invalid("encoding.frequencies", "must be >= 1"));
        }
        if !(self.encoding.sigma.is_finite() && self.encoding.sigma > 0.0) {
            return Err(invalid("encoding.sigma", "must be > 0"));
        }
        if !self.params.is_in_range() {
            return Err(invalid("params", "hyperparameters outside their allowed ranges"));
        }
        self.sim.validate().map_err(|e| invalid("sim", e.to_string()))?;
        if self.sim.dt > self.sim.duration && self.sim.duration > 0.0 {
            return Err(invalid("sim.duration", "must be >= sim.dt"));
        }
        self.materials.validate().map_err(|m| invalid("materials", m))?;
        let a = &self.advisor;
        if !(a.timeout_secs.is_finite() && a.timeout_secs > 0.0) {
            return Err(invalid("advisor.timeout_secs", "must be > 0"));
        }
        if !(a.backoff_secs.is_finite() && a.backoff_secs >= 0.0) {
            return Err(invalid("advisor.backoff_secs", "must be >= 0"));
        }
        if a.mode == AdvisorMode::Llm && a.endpoint.trim().is_empty() {
            return Err(invalid("advisor.endpoint", "required for llm mode"));
        }
        if a.mode == AdvisorMode::Replay && a.replay_log.is_none() {
            return Err(invalid("advisor.replay_log", "required for replay mode"));
        }
        Ok(())
    }

    pub fn worker_threads(&self) -> usize {
        if self.threads == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.threads
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn default_config_values() {
        let c = RunConfig::default();
        assert_eq!(c.generations, 100);
        assert_eq!(c.population, 30);
        assert_eq!(c.grid, [5, 5, 5]);
        assert_eq!(c.repetitions, 3);
        assert_eq!(c.params.mutation_rate, 0.1);
        assert_eq!(c.params.mutation_scale, 0.1);
        assert_eq!(c.params.crossover_rate, 0.4);
        assert_eq!(c.params.elite_fraction, 0.3);
        assert_eq!(c.sim.gravity, 9.81);
        assert_eq!(c.sim.dt, 1e-5);
        let m = &c.materials;
        assert_eq!((m.k_muscle, m.k_soft, m.k_bone), (2e3, 1e3, 1e4));
        assert_eq!((m.damping_ratio, m.amp_max, m.phase_max), (0.1, 0.25, PI));
        assert_eq!((m.voxel_edge, m.mass_per_index), (0.1, 0.1));
        assert_eq!(m.plane.stiffness, 1e5);
        assert_eq!(m.plane.damping_ratio, 0.1);
        assert_eq!((m.plane.mu_static, m.plane.mu_kinetic), (0.6, 1.0));
        c.validate().unwrap();
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c = RunConfig::from_toml(
            r#"
            seed = 9
            grid = [3, 3, 3]
            [sim]
            dt = 1e-4
            [advisor]
            mode = "scripted"
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.grid, [3, 3, 3]);
        assert_eq!(c.sim.dt, 1e-4);
        assert_eq!(c.sim.gravity, 9.81);
        assert_eq!(c.advisor.mode, AdvisorMode::Scripted);
        assert_eq!(c.population, 30);
    }

    #[test]
    fn toml_round_trips() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::from_toml("population = 1").unwrap_err();
        assert!(e.to_string().contains("population"), "{e}");
        let e = RunConfig::from_toml("[sim]\ndt = -1.0").unwrap_err();
        assert!(e.to_string().contains("sim"), "{e}");
        let e = RunConfig::from_toml("[params]\nmutation_rate = 3.0").unwrap_err();
        assert!(e.to_string().contains("params"), "{e}");
        let e = RunConfig::from_toml("bogus = 1").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = RunConfig::from_toml("[advisor]\nmode = \"replay\"").unwrap_err();
        assert!(e.to_string().contains("advisor.replay_log"), "{e}");
    }
}
