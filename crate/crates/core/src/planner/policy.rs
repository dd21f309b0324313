//! Deterministic rule-based planner. It writes the same tag text a language
//! model would and reads its evidence from the episode view.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::backend::{PlannerBackend, PlannerError, PlannerRequest};
use super::decision::{decide, forced_answer};
use super::prompt::Role;
use crate::lexicon::plural;
use crate::protocol::{ParamValue, TimeWindow, ToolCall, ToolId, PAUSE_MARKER};
use crate::skills::{skill_header, META_SKILL};
use crate::task::{Task, TaskKind};
use crate::verification::{plan_reread, Aspect, ClaimValue, EvidenceMemory, VerificationConfig};

/// Reader question used to survey a video without a counting target.
pub const DESCRIBE_QUERY: &str = "Describe the scene: the actions, objects and their colors.";

/// Surveys every video once, answers from memory, and re-reads each surfaced
/// conflict once. Which tools it reaches for depends on the skills present in
/// its system message. Holds per-episode state; use a fresh one per episode.
#[derive(Debug, Clone, Default)]
pub struct PolicyPlanner {
    addressed: BTreeSet<(String, Aspect, String)>,
    verification: VerificationConfig,
}

impl PolicyPlanner {
    pub fn new(verification: VerificationConfig) -> Self {
        PolicyPlanner { addressed: BTreeSet::new(), verification }
    }
}

#[derive(Debug, Clone, Copy)]
struct Skills {
    meta: bool,
    compare: bool,
}

fn whole(task: &Task, video: &str) -> TimeWindow {
    let d = task.videos.iter().find(|v| v.id == video).map_or(1, |v| v.duration);
    TimeWindow::whole(d)
}

fn reader(task: &Task, video: &str, query: impl Into<String>) -> ToolCall {
    ToolCall::new(ToolId::VideoReader).on(video).window(whole(task, video)).query(query)
}

fn count_survey(task: &Task, video: &str, skills: Skills) -> Vec<ToolCall> {
    let Some(target) = task.target_for(video) else {
        return vec![reader(task, video, DESCRIBE_QUERY)];
    };
    let mut calls = vec![reader(task, video, format!("How many {} are visible?", plural(target)))];
    if skills.meta {
        calls.push(
            ToolCall::new(ToolId::SceneGraph)
                .on(video)
                .window(whole(task, video))
                .param("prompts", ParamValue::List(vec![target.to_string()])),
        );
    }
    calls
}

fn survey(task: &Task, skills: Skills) -> Vec<ToolCall> {
    let reference = task.reference().map(|v| v.id.clone());
    match task.kind {
        TaskKind::Counting | TaskKind::Sequence => {
            task.videos.iter().flat_map(|v| count_survey(task, &v.id, skills)).collect()
        }
        TaskKind::ArtStyle | TaskKind::VideoSimilarity if skills.compare && reference.is_some() => {
            let r = reference.unwrap_or_default();
            task.option_videos()
                .into_iter()
                .map(|(_, v)| {
                    ToolCall::new(ToolId::VisualSimilarity)
                        .on(r.clone())
                        .on(v)
                        .param("a", ParamValue::Window(whole(task, &r)))
                        .param("b", ParamValue::Window(whole(task, v)))
                })
                .collect()
        }
        TaskKind::ActionMatching => task
            .videos
            .iter()
            .map(|v| reader(task, &v.id, "What action is being performed? Describe the actions shown."))
            .collect(),
        _ => task.videos.iter().map(|v| reader(task, &v.id, DESCRIBE_QUERY)).collect(),
    }
}

/// Option whose video shares the most (aspect, subject, value) facts with the
/// reference; ties go to the earliest letter.
fn closest_by_description(task: &Task, memory: &EvidenceMemory) -> Option<char> {
    let facts = |video: &str| -> BTreeSet<(Aspect, String, String)> {
        memory
            .live_claims(video)
            .filter(|c| !matches!(c.value, ClaimValue::Score(_)))
            .map(|c| (c.key.aspect.clone(), c.key.subject.clone(), c.value.to_string()))
            .collect()
    };
    let r = facts(&task.reference()?.id);
    let mut best: Option<(char, usize)> = None;
    for (letter, v) in task.option_videos() {
        let shared = facts(v).intersection(&r).count();
        if best.is_none_or(|(_, b)| shared > b) {
            best = Some((letter, shared));
        }
    }
    best.map(|(l, _)| l)
}

fn answer(letter: char, why: &str) -> String {
    format!("<thinking>{why}</thinking><answer>{letter}</answer>")
}

fn calls(why: &str, calls: &[ToolCall]) -> String {
    let mut out = format!("<thinking>{why}</thinking>");
    for c in calls {
        let _ = write!(out, "{}", c.to_tag());
    }
    out.push_str(PAUSE_MARKER);
    out
}

impl PlannerBackend for PolicyPlanner {
    fn reply(&mut self, request: &PlannerRequest<'_>) -> Result<String, PlannerError> {
        let view = &request.view;
        let task = view.task;
        let system = request.messages.iter().find(|m| m.role == Role::System).map_or("", |m| m.content.as_str());
        let skills = Skills {
            meta: system.contains(&skill_header(META_SKILL)),
            compare: system.contains(&skill_header("multi-video-compare")),
        };
        let settle = || {
            let memory = view.memory;
            let decided = decide(task, memory).or_else(|| match task.kind {
                TaskKind::ArtStyle | TaskKind::VideoSimilarity if !skills.compare => {
                    closest_by_description(task, memory)
                }
                _ => None,
            });
            match decided {
                Some(l) => answer(l, "The evidence singles out one option."),
                None => answer(forced_answer(task, memory), "No option is pinned down; taking the best supported."),
            }
        };
        if view.final_prompt {
            return Ok(settle());
        }
        if view.tool_round == 0 {
            return Ok(calls("Survey every video first.", &survey(task, skills)));
        }
        let fresh: Vec<_> = view
            .pending_conflicts
            .iter()
            .filter(|c| !self.addressed.contains(&(c.video.clone(), c.aspect.clone(), c.subject.clone())))
            .cloned()
            .collect();
        if !fresh.is_empty() {
            if let Ok(registry) = task.registry() {
                let mut rereads = Vec::new();
                for c in &fresh {
                    self.addressed.insert((c.video.clone(), c.aspect.clone(), c.subject.clone()));
                    rereads.extend(plan_reread(c, &registry, &self.verification));
                }
                if !rereads.is_empty() {
                    return Ok(calls("Tools disagree; re-read the disputed attribute.", &rereads));
                }
            }
        }
        Ok(settle())
    }
}
