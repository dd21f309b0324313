//! Agent core for multi-video question answering: the planner tag protocol,
//! the skill library, tool dispatch, the verification layer and the episode loop.

pub mod lexicon;
pub mod planner;
pub mod protocol;
pub mod scalar;
pub mod skills;
pub mod task;
pub mod tools;
pub mod verification;

/// Default scalar for scores and similarities.
pub type Score = f64;
