//! Deterministic synthetic multi-video world: ground-truth timelines, seeded
//! tool error channels, simulated tools, a task generator and an oracle.

pub mod backend;
pub mod fixtures;
pub mod perturb;
pub mod taskgen;
pub mod world;

pub use backend::{mentioned_categories, SimBackend, NO_SUBTITLES_NOTE};
pub use perturb::{substream, ForcedBias, PerturbError, PerturbationModel};
pub use taskgen::{gen_task, gen_tasks, oracle_answer, OracleError, TaskGenError};
pub use world::{gen_world, similarity, SimVideo, World, WorldConfig, WorldError};
