use std::collections::{BTreeMap, BTreeSet};

use super::*;
use crate::protocol::{TimeWindow, ToolId};
use crate::task::{CountRelation, Referent, TaskKind, TaskMeta, TaskOption, TaskVideo};
use crate::tools::{
    BackendError, BackendResponse, Detections, LabelSummary, Payload, ResolvedCall, Track, VideoRole,
};
use crate::verification::Aspect;

/// Cup counts per video: (what the reader says, the true count).
struct Stub {
    cups: BTreeMap<String, (u32, u32)>,
    fail: bool,
}

impl Stub {
    fn new(cups: &[(&str, u32, u32)]) -> Self {
        Stub { cups: cups.iter().map(|(v, r, t)| (v.to_string(), (*r, *t))).collect(), fail: false }
    }
}

impl ToolBackend for Stub {
    fn capabilities(&self) -> BTreeSet<ToolId> {
        ToolId::ALL.into_iter().collect()
    }

    fn invoke(&self, call: &ResolvedCall, _registry: &VideoRegistry) -> Result<BackendResponse, BackendError> {
        if self.fail {
            return Err(BackendError("connection refused".into()));
        }
        let (said, truth) = self.cups.get(call.video()).copied().unwrap_or((0, 0));
        let payload = match call.tool() {
            ToolId::VideoReader => Payload::ReaderAnswer { text: format!("I can see {said} cups on the table.") },
            ToolId::SceneGraph => Payload::Detections(Detections {
                frames: Vec::new(),
                aggregate: vec![LabelSummary {
                    label: "cup".into(),
                    max_count: truth,
                    typical_count: truth,
                    colors: Vec::new(),
                }],
                prompted: vec!["cup".into()],
            }),
            ToolId::ObjectTracker => Payload::TrackSummary {
                tracks: vec![Track { label: "cup".into(), peak: truth, trajectory: String::new() }],
            },
            ToolId::VisualSimilarity => Payload::Similarity { score: 0.5 },
            _ => Payload::SceneCuts { cuts: Vec::new() },
        };
        Ok(payload.into())
    }
}

fn video(id: &str, role: VideoRole) -> TaskVideo {
    TaskVideo { id: id.into(), duration: 60, role, source: String::new(), has_subtitles: false }
}

fn counting_task() -> Task {
    Task {
        id: "count-1".into(),
        kind: TaskKind::Counting,
        question: "Which video shows as many cups as the reference?".into(),
        videos: vec![
            video("R", VideoRole::Ref),
            video("V1", VideoRole::Candidate),
            video("V2", VideoRole::Candidate),
        ],
        options: vec![
            TaskOption { letter: 'A', referent: Referent::Video("V1".into()) },
            TaskOption { letter: 'B', referent: Referent::Video("V2".into()) },
        ],
        gold: Some('A'),
        meta: TaskMeta { target: Some("cup".into()), relation: Some(CountRelation::Same), ..TaskMeta::default() },
    }
}

const CALL: &str = "<thinking>look</thinking><video_reader id=\"R\">0:60</video_reader>\
<video_reader_question>How many cups?</video_reader_question>[Pause]";

fn run(task: &Task, planner: &mut dyn PlannerBackend, tools: &dyn ToolBackend, cfg: &EpisodeConfig) -> EpisodeResult {
    run_episode(task, planner, tools, Some(&SkillLibrary::builtin()), cfg).unwrap()
}

#[test]
fn call_then_answer() {
    let stub = Stub::new(&[("R", 2, 2), ("V1", 2, 2), ("V2", 3, 3)]);
    let mut p = ScriptedPlanner::new([CALL, "<answer>A</answer>"]);
    let r = run(&counting_task(), &mut p, &stub, &EpisodeConfig::default());
    assert_eq!(r.termination, TerminationCause::Answered);
    assert_eq!((r.answer, r.rounds_used, r.tool_rounds), ('A', 2, 1));
    assert_eq!(r.correct(), Some(true));
    assert_eq!(r.turns[0].events.len(), 1);
    assert!(r.turns[0].events[0].observation.starts_with("[Turn 1] video_reader(R 0:60"));
}

#[test]
fn budget_forces_answer() {
    let stub = Stub::new(&[("R", 2, 2)]);
    let cfg = EpisodeConfig { max_rounds: 3, ..EpisodeConfig::default() };
    let mut p = ScriptedPlanner::new(vec![CALL; 20]);
    let r = run(&counting_task(), &mut p, &stub, &cfg);
    assert_eq!(r.termination, TerminationCause::ForcedAtBudget);
    assert_eq!(r.tool_rounds, 3);
    assert_eq!(r.rounds_used, 4);
    let final_turn = r.turns.last().unwrap();
    assert!(final_turn.final_prompt);
    assert!(final_turn.events.is_empty());
    assert!(matches!(final_turn.verdict, VerdictRecord::Violation { violation: ViolationKind::BudgetExceeded }));
    assert!(r.turns[..3].iter().all(|t| !t.final_prompt));
}

#[test]
fn final_notice_precedes_last_prompt() {
    let stub = Stub::new(&[("R", 2, 2)]);
    let cfg = EpisodeConfig { max_rounds: 1, skills_enabled: false, ..EpisodeConfig::default() };
    let task = counting_task();
    let mut ep = Episode::new(&task, &stub, None, &cfg).unwrap();
    assert!(!ep.is_final_prompt());
    ep.state.prompts += 1;
    assert_eq!(ep.step(CALL, String::new(), 0), Transition::Continue);
    assert!(ep.is_final_prompt());
    assert!(ep.state.history.last().unwrap().content.ends_with(FINAL_NOTICE));
}

#[test]
fn violations_are_corrected_then_abort() {
    let stub = Stub::new(&[("R", 2, 2)]);
    let mixed = "<video_reader id=\"R\">0:10</video_reader><video_reader_question>q</video_reader_question><answer>A</answer>";
    let mut p = ScriptedPlanner::new([mixed, "<answer>B</answer>"]);
    let r = run(&counting_task(), &mut p, &stub, &EpisodeConfig::default());
    assert_eq!((r.answer, r.violations, r.termination), ('B', 1, TerminationCause::Answered));
    assert!(r.turns[0].events.is_empty());

    let mut p = ScriptedPlanner::new(["nothing", "<answer>Z</answer>", mixed, "<answer>A</answer>"]);
    let r = run(&counting_task(), &mut p, &stub, &EpisodeConfig::default());
    assert_eq!(r.termination, TerminationCause::AbortedOnRepeatedViolations);
    assert_eq!(r.violations, 3);
    assert!(matches!(r.turns[1].verdict, VerdictRecord::Violation { violation: ViolationKind::InvalidOption }));
}

#[test]
fn corrective_message_reaches_planner() {
    let stub = Stub::new(&[("R", 2, 2)]);
    let task = counting_task();
    let cfg = EpisodeConfig { skills_enabled: false, ..EpisodeConfig::default() };
    let mut ep = Episode::new(&task, &stub, None, &cfg).unwrap();
    ep.state.prompts += 1;
    ep.step("<video_reader id=\"R\">0:10</video_reader><video_reader_question>q</video_reader_question><answer>A</answer>", String::new(), 0);
    let ctx = ep.context();
    assert!(ctx.last().unwrap().content.contains("Never include both <answer></answer> and agent calls"));
}

#[test]
fn unavailable_planner_is_recorded() {
    struct Down;
    impl PlannerBackend for Down {
        fn reply(&mut self, _: &PlannerRequest<'_>) -> Result<String, PlannerError> {
            Err(PlannerError::Unavailable("503".into()))
        }
    }
    let stub = Stub::new(&[]);
    let r = run(&counting_task(), &mut Down, &stub, &EpisodeConfig::default());
    assert_eq!(r.termination, TerminationCause::BackendUnavailable);
    assert_eq!(r.correct(), Some(false));
}

#[test]
fn tool_failure_is_rendered_not_fatal() {
    let mut stub = Stub::new(&[]);
    stub.fail = true;
    let mut p = ScriptedPlanner::new([CALL, "<answer>A</answer>"]);
    let r = run(&counting_task(), &mut p, &stub, &EpisodeConfig::default());
    let ev = &r.turns[0].events[0];
    assert!(!ev.ok);
    assert!(ev.observation.ends_with("failed: connection refused"), "{}", ev.observation);
    assert_eq!(r.termination, TerminationCause::Answered);
}

const DISAGREE: &str = "<video_reader id=\"V1\">0:60</video_reader>\
<video_reader_question>How many cups?</video_reader_question><scene_graph id=\"V1\">0:60;prompts=cup</scene_graph>[Pause]";

#[test]
fn in_turn_conflict_resolution() {
    // reader overcounts V1; scene graph and tracker see 2
    let stub = Stub::new(&[("R", 2, 2), ("V1", 3, 2), ("V2", 1, 1)]);
    let mut p = ScriptedPlanner::new([DISAGREE, "<answer>A</answer>"]);
    let r = run(&counting_task(), &mut p, &stub, &EpisodeConfig::default());
    let turn = &r.turns[0];
    assert_eq!(turn.conflicts.len(), 1);
    assert_eq!(turn.conflicts[0].aspect, Aspect::Count);
    assert_eq!(turn.resolutions.len(), 1);
    assert_eq!(turn.resolutions[0].value, ClaimValueCount(2));
    let rereads: Vec<_> = turn.events.iter().filter(|e| e.reread).collect();
    assert_eq!(rereads.len(), 2);
    assert!(rereads.iter().all(|e| e.resolved.as_ref().unwrap().window.unwrap().len() <= 10));
    assert_eq!(decision::count_estimate(&r.memory, "V1", "cup"), Some(2));
    assert_eq!((r.conflicts_detected, r.conflicts_resolved), (1, 1));
    let obs = &r.turns[1];
    assert!(obs.claims.is_empty());

    let off = EpisodeConfig { conflict_enabled: false, ..EpisodeConfig::default() };
    let mut p = ScriptedPlanner::new([DISAGREE, "<answer>A</answer>"]);
    let r = run(&counting_task(), &mut p, &stub, &off);
    assert!(r.turns[0].conflicts.is_empty());
    assert!(r.turns[0].events.iter().all(|e| !e.reread));
    assert_eq!(decision::count_estimate(&r.memory, "V1", "cup"), Some(3));
}

#[allow(non_snake_case)]
fn ClaimValueCount(n: u32) -> crate::verification::ClaimValue {
    crate::verification::ClaimValue::Count(n)
}

#[test]
fn planner_mediated_conflicts_wait_for_the_planner() {
    let stub = Stub::new(&[("R", 2, 2), ("V1", 3, 2), ("V2", 1, 1)]);
    let cfg = EpisodeConfig { reread_mode: RereadMode::PlannerMediated, ..EpisodeConfig::default() };
    let mut p = PolicyPlanner::new(cfg.verification.clone());
    let task = counting_task();
    let r = run(&task, &mut p, &stub, &cfg);
    let first = &r.turns[0];
    assert!(!first.conflicts.is_empty());
    assert!(first.resolutions.is_empty());
    assert!(first.events.iter().all(|e| !e.reread));
    // the policy issues the suggested re-reads next turn and they resolve it
    let second = &r.turns[1];
    assert!(!second.resolutions.is_empty());
    assert_eq!(r.answer, 'A');
}

#[test]
fn policy_survey_then_answer() {
    let stub = Stub::new(&[("R", 2, 2), ("V1", 2, 2), ("V2", 3, 3)]);
    let cfg = EpisodeConfig::default();
    let mut p = PolicyPlanner::new(cfg.verification.clone());
    let r = run(&counting_task(), &mut p, &stub, &cfg);
    assert_eq!(r.termination, TerminationCause::Answered);
    assert_eq!(r.answer, 'A');
    assert_eq!(r.tool_rounds, 1);
    // skills on: reader plus scene graph per video
    assert_eq!(r.turns[0].events.len(), 6);

    let no_skills = EpisodeConfig { skills_enabled: false, ..EpisodeConfig::default() };
    let mut p = PolicyPlanner::new(cfg.verification.clone());
    let r = run(&counting_task(), &mut p, &stub, &no_skills);
    assert_eq!(r.turns[0].events.len(), 3);
    assert_eq!(r.answer, 'A');
}

#[test]
fn context_stays_within_budget() {
    let stub = Stub::new(&[("R", 2, 2), ("V1", 3, 2)]);
    let task = counting_task();
    let cfg = EpisodeConfig {
        skills_enabled: false,
        max_rounds: 40,
        distill_threshold: 600,
        context_budget: 9000,
        ..EpisodeConfig::default()
    };
    let mut ep = Episode::new(&task, &stub, None, &cfg).unwrap();
    let opening: usize = ep.context().iter().map(|m| m.content.len()).sum();
    assert!(opening < 9000);
    for _ in 0..30 {
        ep.state.prompts += 1;
        ep.step(DISAGREE, String::new(), 0);
        let ctx = ep.context();
        let bytes: usize = ctx.iter().map(|m| m.content.len()).sum();
        assert!(bytes <= cfg.context_budget, "{bytes}");
    }
    let ctx = ep.context();
    assert_eq!(ctx.len(), 4);
    assert!(ctx[1].content.contains("Evidence memory:"));
    // every claim stays addressable after distillation
    let total: usize = ep.state.turns.iter().map(|t| t.claims.len() + t.resolutions.len()).sum();
    assert_eq!(ep.state.memory.claim_count(), total);
}

#[test]
fn oversized_prompt_rejected() {
    let stub = Stub::new(&[]);
    let cfg = EpisodeConfig { context_budget: 100, ..EpisodeConfig::default() };
    let err = Episode::new(&counting_task(), &stub, Some(&SkillLibrary::builtin()), &cfg).err();
    assert!(matches!(err, Some(EpisodeError::ContextBudgetTooSmall { .. })));
    let cfg = EpisodeConfig { max_rounds: 0, ..EpisodeConfig::default() };
    assert!(matches!(
        Episode::new(&counting_task(), &stub, None, &cfg).err(),
        Some(EpisodeError::Config(ConfigError::ZeroRounds))
    ));
}

#[test]
fn whole_window_defaults() {
    let stub = Stub::new(&[("R", 2, 2)]);
    let mut p = ScriptedPlanner::new([CALL, "<answer>A</answer>"]);
    let r = run(&counting_task(), &mut p, &stub, &EpisodeConfig::default());
    assert_eq!(r.turns[0].events[0].resolved.as_ref().unwrap().window, Some(TimeWindow { start: 0, end: 60 }));
}
