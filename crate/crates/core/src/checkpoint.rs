//! Versioned, integrity-checked checkpoint files.
//!
//! Layout (UTF-8 text):
//!
//! ```text
//! <kind> v<version>
//! sha256:<hex digest of the body line>
//! <body: one line of JSON>
//! ```
//!
//! The body is compact JSON with shortest round-trip float formatting, so
//! save → load → save reproduces identical bytes. Two kinds exist:
//! `voxevo-checkpoint` (a whole run) and `voxevo-genome` (one genome plus the
//! grid it decodes onto).

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::RunConfig;
use crate::evolution::{BestIndividual, EvolutionState, GenerationReport, HyperParams, RngState};
use crate::genome::Genome;

pub const CHECKPOINT_KIND: &str = "voxevo-checkpoint";
pub const GENOME_KIND: &str = "voxevo-genome";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

fn digest(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

pub fn encode<T: Serialize>(kind: &str, value: &T) -> String {
    let body = serde_json::to_string(value).expect("checkpoint records are always serializable");
    format!("{kind} v{FORMAT_VERSION}\nsha256:{}\n{body}\n", digest(&body))
}

pub fn decode<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T, CheckpointError> {
    let mut lines = text.splitn(3, '\n');
    let header = lines.next().unwrap_or_default();
    let (found_kind, version) = header
        .split_once(' ')
        .ok_or_else(|| CheckpointError::Corrupt("missing header".into()))?;
    if found_kind != kind {
        return Err(CheckpointError::Corrupt(format!(
            "expected a {kind} file, found `{found_kind}`"
        )));
    }
    if version != format!("v{FORMAT_VERSION}") {
        return Err(CheckpointError::VersionMismatch {
            found: version.to_string(),
            expected: FORMAT_VERSION,
        });
    }
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("sha256:"))
        .ok_or_else(|| CheckpointError::Corrupt("missing digest".into()))?;
    let body = lines
        .next()
        .ok_or_else(|| CheckpointError::Corrupt("missing body".into()))?;
    let body = body.strip_suffix('\n').unwrap_or(body);
    if digest(body) != hash {
        return Err(CheckpointError::Corrupt("digest mismatch".into()));
    }
    serde_json::from_str(body).map_err(|e| CheckpointError::Corrupt(e.to_string()))
}

/// Reads just the kind from a file header.
pub fn peek_kind(text: &str) -> Option<&str> {
    text.lines().next()?.split_once(' ').map(|(k, _)| k)
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(tmp, path)
}

/// Serializable form of [`EvolutionState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub generation: u64,
    pub population: Vec<Genome>,
    pub fitnesses: Vec<Option<f64>>,
    pub params: HyperParams,
    pub history: Vec<GenerationReport>,
    pub best: Option<BestIndividual>,
    pub rng: RngState,
}

impl From<&EvolutionState> for StateRecord {
    fn from(s: &EvolutionState) -> Self {
        Self {
            generation: s.generation,
            population: s.population.clone(),
            fitnesses: s.fitnesses.clone(),
            params: s.params,
            history: s.history.clone(),
            best: s.best.clone(),
            rng: RngState::capture(&s.rng),
        }
    }
}

impl StateRecord {
    pub fn restore(&self) -> Result<EvolutionState, CheckpointError> {
        if self.population.len() != self.fitnesses.len() {
            return Err(CheckpointError::Corrupt("population and fitnesses misaligned".into()));
        }
        for g in &self.population {
            g.validate().map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        }
        Ok(EvolutionState {
            generation: self.generation,
            population: self.population.clone(),
            fitnesses: self.fitnesses.clone(),
            params: self.params,
            history: self.history.clone(),
            best: self.best.clone(),
            rng: self.rng.restore().map_err(CheckpointError::Corrupt)?,
        })
    }
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: RunConfig,
    pub run_index: u32,
    pub seed: u64,
    pub state: StateRecord,
}

impl Checkpoint {
    pub fn new(config: &RunConfig, run_index: u32, seed: u64, state: &EvolutionState) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            run_index,
            seed,
            state: state.into(),
        }
    }

    pub fn to_text(&self) -> String {
        encode(CHECKPOINT_KIND, self)
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        decode(CHECKPOINT_KIND, text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        Ok(write_atomic(path, &self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// A single genome with the grid it is decoded onto.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenomeRecord {
    pub format_version: u32,
    pub dims: [usize; 3],
    pub fitness: Option<f64>,
    pub generation: Option<u64>,
    pub genome: Genome,
}

impl GenomeRecord {
    pub fn to_text(&self) -> String {
        encode(GENOME_KIND, self)
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let rec: GenomeRecord = decode(GENOME_KIND, text)?;
        rec.genome
            .validate()
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        Ok(rec)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        Ok(write_atomic(path, &self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::EncodingSpec;

    fn state() -> EvolutionState {
        let spec = EncodingSpec {
            frequencies: 3,
            sigma: 1.0,
        };
        EvolutionState::new(4, 3, spec, &[4], HyperParams::default()).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let ck = Checkpoint::new(&RunConfig::default(), 0, 4, &state());
        let text = ck.to_text();
        let back = Checkpoint::from_text(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.state.restore().unwrap(), state());
    }

    #[test]
    fn flipped_byte_is_corrupt() {
        let text = Checkpoint::new(&RunConfig::default(), 0, 4, &state()).to_text();
        let mut bytes = text.into_bytes();
        let n = bytes.len();
        bytes[n - 20] = if bytes[n - 20] == b'1' { b'2' } else { b'1' };
        let err = Checkpoint::from_text(&String::from_utf8(bytes).unwrap()).unwrap_err();
        assert!(matches!(err, CheckpointError::Corrupt(_)), "{err}");
    }

    #[test]
    fn future_version_is_rejected() {
        let text = Checkpoint::new(&RunConfig::default(), 0, 4, &state())
            .to_text()
            .replacen("v1", "v2", 1);
        assert!(matches!(
            Checkpoint::from_text(&text),
            Err(CheckpointError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn wrong_kind_and_garbage_are_corrupt() {
        let g = GenomeRecord {
            format_version: FORMAT_VERSION,
            dims: [2, 2, 2],
            fitness: None,
            generation: None,
            genome: state().population[0].clone(),
        };
        assert!(matches!(
            Checkpoint::from_text(&g.to_text()),
            Err(CheckpointError::Corrupt(_))
        ));
        assert!(matches!(
            Checkpoint::from_text("hello"),
            Err(CheckpointError::Corrupt(_))
        ));
        assert_eq!(GenomeRecord::from_text(&g.to_text()).unwrap(), g);
        assert_eq!(peek_kind(&g.to_text()), Some(GENOME_KIND));
    }
}
