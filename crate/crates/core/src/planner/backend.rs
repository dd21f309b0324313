use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::prompt::Message;
use crate::task::Task;
use crate::verification::{Conflict, EvidenceMemory};

/// Structured episode state exposed alongside the messages. Text-only
/// backends ignore it; the rule-based planners read it instead of re-parsing
/// their own context.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeView<'a> {
    /// The task without its gold letter.
    pub task: &'a Task,
    pub memory: &'a EvidenceMemory,
    pub pending_conflicts: &'a [Conflict],
    pub tool_round: u32,
    pub max_rounds: u32,
    /// This prompt must be answered with `<answer>`.
    pub final_prompt: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerRequest<'a> {
    pub messages: &'a [Message],
    pub temperature: f64,
    pub seed: u64,
    /// Zero-based index of this prompt within the episode.
    pub round: u32,
    pub view: EpisodeView<'a>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlannerError {
    #[error("planner backend unavailable: {0}")]
    Unavailable(String),
}

/// Produces one reply text per prompt.
pub trait PlannerBackend: Send {
    fn reply(&mut self, request: &PlannerRequest<'_>) -> Result<String, PlannerError>;
}

/// Replays a fixed list of replies; answers an empty string once exhausted.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPlanner {
    replies: Vec<String>,
    next: usize,
}

impl ScriptedPlanner {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        ScriptedPlanner { replies: replies.into_iter().map(Into::into).collect(), next: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.next
    }
}

impl PlannerBackend for ScriptedPlanner {
    fn reply(&mut self, _request: &PlannerRequest<'_>) -> Result<String, PlannerError> {
        let r = self.replies.get(self.next).cloned().unwrap_or_default();
        self.next += 1;
        Ok(r)
    }
}

/// Answers immediately with a uniformly drawn option letter.
#[derive(Debug, Clone, Default)]
pub struct RandomPlanner;

impl PlannerBackend for RandomPlanner {
    fn reply(&mut self, request: &PlannerRequest<'_>) -> Result<String, PlannerError> {
        let letters: Vec<char> = request.view.task.letters().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed ^ u64::from(request.round));
        let pick = letters.choose(&mut rng).copied().unwrap_or('A');
        Ok(format!("<thinking>guess</thinking><answer>{pick}</answer>"))
    }
}
