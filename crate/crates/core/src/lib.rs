//! Co-design of voxel soft robots by evolving a single implicit genome.
//!
//! A [`genome::Genome`] maps a spatial query through random Fourier features
//! into an MLP with two heads: a softmax over five materials and a sigmoid
//! weight that scales the chosen material's parameters. The decoded voxel
//! grid becomes a mass-spring network, which is simulated on a penalty-contact
//! ground plane; horizontal centre-of-mass travel is the fitness. A
//! generational GA evolves the MLP weights while an [`advisor::Advisor`]
//! rewrites GA hyperparameters between generations.

pub mod advisor;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod evolution;
pub mod export;
pub mod genome;
pub mod morphology;
pub mod physics;
pub mod run;

pub use advisor::{Advisor, AdvisorReply, AdvisorRequest, ReplySource};
pub use evolution::{EvolutionState, GenerationReport, HyperParams};
pub use genome::{EncodingSpec, Genome, MaterialQuery};
pub use morphology::{MassSpringSystem, Material, MaterialTable, VoxelGrid};
pub use physics::{SimConfig, TrajectorySummary};
