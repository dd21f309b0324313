use serde::{Deserialize, Serialize};

use super::{PlannerReply, ToolCall};

/// How a reply breaks the reply contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MixedAnswerAndCalls,
    EmptyReply,
    BudgetExceeded,
    /// Answer letter outside the task's options. Raised by the episode loop,
    /// which knows the option set.
    InvalidOption,
}

impl ViolationKind {
    /// Corrective user message restating the broken rule.
    pub fn corrective_message(self) -> &'static str {
        match self {
            ViolationKind::MixedAnswerAndCalls => {
                "Format violation. Never include both <answer></answer> and agent calls in the same response. \
                 Either call agents and end with [Pause], or give only <answer></answer>."
            }
            ViolationKind::EmptyReply => {
                "Format violation. Your response contained neither an agent call nor <answer></answer>. \
                 Output one agent call in strict XML format followed by [Pause], or your final <answer></answer>."
            }
            ViolationKind::BudgetExceeded => {
                "The maximum number of iterations has been reached. No more agent calls are allowed. \
                 Select the most likely answer now and output only <answer></answer>."
            }
            ViolationKind::InvalidOption => {
                "Invalid answer. The answer must be exactly one of the option letters listed in the question."
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Proceed(Vec<ToolCall>),
    Final(char),
    Violation(ViolationKind),
}

/// Judges a reply. `round` counts planner prompts already answered, so the
/// reply to the prompt after the last tool round arrives with `round == max_rounds`.
///
/// A call reply missing `[Pause]` is accepted; the marker only delimits trailing text.
pub fn validate_reply(reply: &PlannerReply, max_rounds: u32, round: u32) -> Verdict {
    match (reply.answer, reply.actions.is_empty()) {
        (Some(_), false) => Verdict::Violation(ViolationKind::MixedAnswerAndCalls),
        (None, true) => Verdict::Violation(ViolationKind::EmptyReply),
        (None, false) if round >= max_rounds => Verdict::Violation(ViolationKind::BudgetExceeded),
        (None, false) => Verdict::Proceed(reply.actions.clone()),
        (Some(a), true) => Verdict::Final(a),
    }
}
