//! Acceptance criteria. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line regardless of output capture; exits non-zero on any FAIL.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use vidagent_core::planner::{
    run_episode, EpisodeConfig, PlannerBackend, PlannerError, PlannerRequest, PolicyPlanner, RandomPlanner,
    ScriptedPlanner, TerminationCause,
};
use vidagent_core::protocol::{parse_planner_reply, parse_tool_tag, ParamValue, TimeWindow, ToolCall, ToolId};
use vidagent_core::skills::SkillLibrary;
use vidagent_core::task::{Referent, Task, TaskKind, TaskOption};
use vidagent_core::verification::{Aspect, ClaimSource};
use vidagent_harness::trace::{parse_trace, terminals};
use vidagent_harness::{render_tasks, parse_tasks, run_benchmark, Ablation, BenchConfig, Report, TraceRecord, TraceWriter};
use vidagent_simworld::fixtures::{case1, case2_tasks, case2_world};
use vidagent_simworld::{gen_tasks, gen_world, oracle_answer, OracleError, PerturbationModel, SimBackend, World, WorldConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn w(start: u32, end: u32) -> TimeWindow {
    TimeWindow { start, end }
}

fn list(items: &[&str]) -> ParamValue {
    ParamValue::List(items.iter().map(|s| s.to_string()).collect())
}

/// Tag examples from the planner prompt and skill files, with the expected
/// call. Placeholders such as `start:end` are instantiated with concrete
/// windows; everything else is verbatim.
fn tag_corpus() -> Vec<(&'static str, ToolCall)> {
    let q1 = "The question is \"The brown dog is playing with a ball. What color is the ball? A. red B. blue\". Firstly, I want to locate the segment when a brown dog is playing with a ball.";
    let q2 = "The question is \"What is the man who is talking to a brown hair woman doing afterward? A. driving B. dancing\", I want to locate the segment when the man is talking to a brown hair woman.";
    let reader = |a, b, q: &str| ToolCall::new(ToolId::VideoReader).window(w(a, b)).query(q);
    vec![
        (
            "<temporal_grounding_agent>The question is \"The brown dog is playing with a ball. What color is the ball? A. red B. blue\". Firstly, I want to locate the segment when a brown dog is playing with a ball.</temporal_grounding_agent>",
            ToolCall::new(ToolId::TemporalGroundingAgent).query(q1),
        ),
        (
            "<temporal_grounding_agent>The question is \"What is the man who is talking to a brown hair woman doing afterward? A. driving B. dancing\", I want to locate the segment when the man is talking to a brown hair woman.</temporal_grounding_agent>",
            ToolCall::new(ToolId::TemporalGroundingAgent).query(q2),
        ),
        (
            "<video_reader>75:75</video_reader><video_reader_question>the_question_and_options</video_reader_question>",
            reader(75, 75, "the_question_and_options"),
        ),
        (
            "<video_reader>613:754</video_reader><video_reader_question>the_question_and_options</video_reader_question>",
            reader(613, 754, "the_question_and_options"),
        ),
        (
            "<video_reader>0:120</video_reader><video_reader_question>the_question_and_options</video_reader_question>",
            reader(0, 120, "the_question_and_options"),
        ),
        ("<video_reader>90:100</video_reader><video_reader_question>your_question</video_reader_question>", reader(90, 100, "your_question")),
        ("<video_reader>20:30</video_reader><video_reader_question>your_question</video_reader_question>", reader(20, 30, "your_question")),
        ("<video_reader>30:40</video_reader><video_reader_question>your_question</video_reader_question>", reader(30, 40, "your_question")),
        (
            "<video_reader id=\"VIDEO_ID\">0:10</video_reader><video_reader_question>question</video_reader_question>",
            reader(0, 10, "question").on("VIDEO_ID"),
        ),
        (
            "<subtitle_retriever id=\"VIDEO_ID\">query</subtitle_retriever>",
            ToolCall::new(ToolId::SubtitleRetriever).on("VIDEO_ID").query("query"),
        ),
        (
            "<subtitle_extractor id=\"VIDEO_ID\">0:10</subtitle_extractor>",
            ToolCall::new(ToolId::SubtitleExtractor).on("VIDEO_ID").window(w(0, 10)),
        ),
        ("<subtitle_extractor>200:210</subtitle_extractor>", ToolCall::new(ToolId::SubtitleExtractor).window(w(200, 210))),
        (
            "<scene_detector id=\"VIDEO_ID\">fps=1;threshold=0.6</scene_detector>",
            ToolCall::new(ToolId::SceneDetector)
                .on("VIDEO_ID")
                .param("fps", ParamValue::Number(1.0))
                .param("threshold", ParamValue::Number(0.6)),
        ),
        (
            "<object_tracker id=\"VIDEO_ID\">0:10;target=person;fps=2;conf=0.25</object_tracker>",
            ToolCall::new(ToolId::ObjectTracker)
                .on("VIDEO_ID")
                .window(w(0, 10))
                .param("target", list(&["person"]))
                .param("fps", ParamValue::Number(2.0))
                .param("conf", ParamValue::Number(0.25)),
        ),
        (
            "<spatial_relation id=\"VIDEO_ID\">0:10;targets=person,table;fps=2;conf=0.25</spatial_relation>",
            ToolCall::new(ToolId::SpatialRelation)
                .on("VIDEO_ID")
                .window(w(0, 10))
                .param("targets", list(&["person", "table"]))
                .param("fps", ParamValue::Number(2.0))
                .param("conf", ParamValue::Number(0.25)),
        ),
        (
            "<scene_graph id=\"VIDEO_ID\">0:10;targets=person,table;fps=2;conf=0.25</scene_graph>",
            ToolCall::new(ToolId::SceneGraph)
                .on("VIDEO_ID")
                .window(w(0, 10))
                .param("targets", list(&["person", "table"]))
                .param("fps", ParamValue::Number(2.0))
                .param("conf", ParamValue::Number(0.25)),
        ),
        (
            "<scene_graph id=\"VIDEO_ID\">0:10;prompts=person,table;model=groundingdino</scene_graph>",
            ToolCall::new(ToolId::SceneGraph)
                .on("VIDEO_ID")
                .window(w(0, 10))
                .param("prompts", list(&["person", "table"]))
                .param("model", ParamValue::Text("groundingdino".into())),
        ),
        (
            "<scene_graph id=\"V1\">0:10;prompts=bag, grocery bag, shopping bag</scene_graph>",
            ToolCall::new(ToolId::SceneGraph)
                .on("V1")
                .window(w(0, 10))
                .param("prompts", list(&["bag", "grocery bag", "shopping bag"])),
        ),
        (
            "<visual_similarity id=\"A,B\">a=0:10;b=20:30;fps=2;model=clip</visual_similarity>",
            ToolCall::new(ToolId::VisualSimilarity)
                .on("A")
                .on("B")
                .param("a", ParamValue::Window(w(0, 10)))
                .param("b", ParamValue::Window(w(20, 30)))
                .param("fps", ParamValue::Number(2.0))
                .param("model", ParamValue::Text("clip".into())),
        ),
    ]
}

fn criterion_1() -> Outcome {
    let corpus = tag_corpus();
    let forms: std::collections::BTreeSet<ToolId> = corpus.iter().map(|(_, c)| c.tool).collect();
    for (text, expected) in &corpus {
        let parsed = parse_tool_tag(text).map_err(|e| format!("{text}: {e}"))?;
        check(&parsed == expected, || format!("{text}: parsed {parsed:?}"))?;
        let again = parse_tool_tag(&parsed.to_tag()).map_err(|e| format!("re-parse {}: {e}", parsed.to_tag()))?;
        check(&again == expected, || format!("{text}: round trip gave {again:?}"))?;
    }
    let replies = [
        (
            "<thinking>locate goal</thinking><video_reader>75:75</video_reader><video_reader_question>the_question_and_options</video_reader_question>[Pause]",
            1,
            None,
        ),
        (
            "<thinking>compare styles</thinking><visual_similarity id=\"A,B\">a=0:10;b=20:30;fps=2;model=clip</visual_similarity>\n<scene_graph id=\"V1\">0:10;prompts=bag, grocery bag, shopping bag</scene_graph>\n[Pause]",
            2,
            None,
        ),
        ("<thinking>counts aligned</thinking><answer>C</answer>", 0, Some('C')),
    ];
    for (text, calls, answer) in replies {
        let r = parse_planner_reply(text);
        check(r.is_valid() && r.actions.len() == calls && r.answer == answer, || format!("{text}: {r:?}"))?;
        let back = parse_planner_reply(&r.to_text());
        check(back == r, || format!("{text}: reply round trip gave {back:?}"))?;
    }
    let first = parse_planner_reply(replies[0].0);
    check(
        first.thinking.as_deref() == Some("locate goal")
            && first.paused
            && first.actions[0] == ToolCall::new(ToolId::VideoReader).window(w(75, 75)).query("the_question_and_options"),
        || format!("pause example: {first:?}"),
    )?;
    check(corpus.len() >= 12, || format!("only {} tag examples", corpus.len()))?;
    Ok(format!("{} tag examples over {} tools, {} replies round-trip", corpus.len(), forms.len(), replies.len()))
}

fn criterion_2() -> Outcome {
    let mut per_letter: BTreeMap<char, usize> = BTreeMap::new();
    let (mut total, mut four, mut ambiguous, mut disagree) = (0, 0, 0, 0);
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for seed in 0..10u64 {
        let world = gen_world(100 + seed, &WorldConfig::default()).map_err(|e| e.to_string())?;
        let tasks = gen_tasks(&world, &TaskKind::GENERATED, 1000, seed).map_err(|e| e.to_string())?;
        for t in &tasks {
            total += 1;
            *kinds.entry(t.kind.as_str().to_string()).or_default() += 1;
            match oracle_answer(t, &world) {
                Ok(a) if Some(a) == t.gold => {}
                Ok(_) => disagree += 1,
                Err(OracleError::Ambiguous { .. }) => ambiguous += 1,
                Err(e) => return Err(e.to_string()),
            }
            if t.options.len() == 4 {
                four += 1;
                *per_letter.entry(t.gold.unwrap_or('?')).or_default() += 1;
            }
        }
    }
    check(total == 10_000 && kinds.len() == 5, || format!("{total} tasks over {} kinds", kinds.len()))?;
    check(disagree == 0 && ambiguous == 0, || format!("{disagree} disagreements, {ambiguous} ambiguous"))?;
    let freqs: Vec<String> = per_letter.iter().map(|(l, n)| format!("{l}={:.4}", *n as f64 / four as f64)).collect();
    check(per_letter.values().all(|&n| (n as f64 / four as f64 - 0.25).abs() <= 0.02), || freqs.join(" "))?;
    Ok(format!("{total} tasks, oracle agrees on all; gold frequencies {}", freqs.join(" ")))
}

fn run_fixture(task: &Task, world: World, perturbation: PerturbationModel, config: &EpisodeConfig) -> Result<(char, TerminationCause), String> {
    let backend = SimBackend::new(Arc::new(world), perturbation);
    let mut planner = PolicyPlanner::new(config.verification.clone());
    let r = run_episode(task, &mut planner, &backend, Some(&SkillLibrary::builtin()), config).map_err(|e| e.to_string())?;
    Ok((r.answer, r.termination))
}

fn criterion_3() -> Outcome {
    let (world, task, perturbation) = case1();
    let on = run_fixture(&task, world.clone(), perturbation.clone(), &EpisodeConfig::default())?;
    let off = run_fixture(&task, world, perturbation, &EpisodeConfig { conflict_enabled: false, ..EpisodeConfig::default() })?;
    check(on == ('C', TerminationCause::Answered), || format!("conflict on: {on:?}"))?;
    check(off == ('D', TerminationCause::Answered), || format!("conflict off: {off:?}"))?;
    Ok("conflict on answers C, conflict off answers D".into())
}

fn criterion_4() -> Outcome {
    let world = case2_world(7).map_err(|e| e.to_string())?;
    let tasks = case2_tasks(&world, 100, 7).map_err(|e| e.to_string())?;
    let backend = SimBackend::new(Arc::new(world), PerturbationModel::none());
    let lib = SkillLibrary::builtin();
    let factory = |_: &Task, _: u64| -> Box<dyn PlannerBackend> { Box::new(PolicyPlanner::default()) };
    let run = |no_skills| {
        let config = BenchConfig { ablation: Ablation { no_skills, no_conflict: false }, ..BenchConfig::default() };
        run_benchmark(&tasks, &backend, &factory, Some(&lib), &config, None).map(|o| o.report.accuracy).map_err(|e| e.to_string())
    };
    let (with, without) = (run(false)?, run(true)?);
    check(with == 1.0 && without <= 0.40, || format!("skills {with:.3}, no skills {without:.3}"))?;
    Ok(format!("100 style tasks: skills {:.1}%, no skills {:.1}%", 100.0 * with, 100.0 * without))
}

fn criterion_5() -> Outcome {
    let factory = |_: &Task, _: u64| -> Box<dyn PlannerBackend> { Box::new(PolicyPlanner::default()) };
    let lib = SkillLibrary::builtin();
    let mut rows = Vec::new();
    let (mut sum_full, mut sum_off) = (0.0, 0.0);
    for seed in 1..=5u64 {
        let world = gen_world(seed, &WorldConfig::default()).map_err(|e| e.to_string())?;
        let tasks = gen_tasks(&world, &[TaskKind::Counting], 200, seed).map_err(|e| e.to_string())?;
        let backend = SimBackend::new(Arc::new(world), PerturbationModel::counting(0.3, 0.1));
        let acc = |no_conflict| {
            let config = BenchConfig {
                ablation: Ablation { no_skills: false, no_conflict },
                parallelism: 4,
                ..BenchConfig::default()
            };
            run_benchmark(&tasks, &backend, &factory, Some(&lib), &config, None).map(|o| o.report.accuracy).map_err(|e| e.to_string())
        };
        let (full, off) = (acc(false)?, acc(true)?);
        rows.push(format!("seed {seed}: {:.1}/{:.1}", 100.0 * full, 100.0 * off));
        check(full >= off, || format!("seed {seed}: full {full} < no-conflict {off}"))?;
        sum_full += full;
        sum_off += off;
    }
    let gap = 100.0 * (sum_full - sum_off) / 5.0;
    check(gap >= 5.0, || format!("mean gap {gap:.2}pp; {}", rows.join(", ")))?;
    Ok(format!("mean gap {gap:.1}pp; {}", rows.join(", ")))
}

/// Keeps calling tools and never answers.
struct Stubborn;

impl PlannerBackend for Stubborn {
    fn reply(&mut self, r: &PlannerRequest<'_>) -> Result<String, PlannerError> {
        let v = &r.view.task.videos[0];
        Ok(format!(
            "<thinking>more evidence</thinking><video_reader id=\"{}\">0:{}</video_reader><video_reader_question>What is happening?</video_reader_question>[Pause]",
            v.id, v.duration
        ))
    }
}

/// Emits unparseable or rule-breaking text.
struct Garbage;

impl PlannerBackend for Garbage {
    fn reply(&mut self, r: &PlannerRequest<'_>) -> Result<String, PlannerError> {
        Ok(match r.round % 3 {
            0 => "I think the answer is probably the second one.".into(),
            1 => "<answer>A</answer><video_reader>0:5</video_reader><video_reader_question>q</video_reader_question>".into(),
            _ => "<answer>Z</answer>".into(),
        })
    }
}

fn criterion_6() -> Outcome {
    let world = gen_world(60, &WorldConfig::default()).map_err(|e| e.to_string())?;
    let tasks = gen_tasks(&world, &TaskKind::GENERATED, 1000, 60).map_err(|e| e.to_string())?;
    let backend = SimBackend::new(Arc::new(world), PerturbationModel::counting(0.3, 0.1));
    let lib = SkillLibrary::builtin();
    let factory = |_: &Task, seed: u64| -> Box<dyn PlannerBackend> {
        match seed % 4 {
            0 => Box::new(Stubborn),
            1 => Box::new(Garbage),
            2 => Box::new(RandomPlanner),
            _ => Box::new(PolicyPlanner::default()),
        }
    };
    let max_rounds = 4;
    let config = BenchConfig {
        episode: EpisodeConfig { max_rounds, ..EpisodeConfig::default() },
        parallelism: 8,
        ..BenchConfig::default()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("trace.jsonl");
    let writer = TraceWriter::create(&path).map_err(|e| e.to_string())?;
    let out = run_benchmark(&tasks, &backend, &factory, Some(&lib), &config, Some(&writer)).map_err(|e| e.to_string())?;
    drop(writer);
    let mut causes: BTreeMap<String, usize> = BTreeMap::new();
    for (t, o) in tasks.iter().zip(&out.outcomes) {
        let term = &o.terminal;
        check(term.rounds <= max_rounds + 1, || format!("{}: {} prompts", t.id, term.rounds))?;
        check(term.answer.is_some_and(|a| t.is_option(a)), || format!("{}: answer {:?}", t.id, term.answer))?;
        *causes.entry(format!("{:?}", term.termination)).or_default() += 1;
    }
    let recomputed = Report::from_trace(&path).map_err(|e| e.to_string())?;
    check(recomputed == out.report, || "trace recomputation differs from the run report".into())?;
    check(out.report.episodes == 1000, || format!("{} episodes", out.report.episodes))?;
    Ok(format!("1000 episodes within {} prompts, all answered with an option; {causes:?}; recompute exact", max_rounds + 1))
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("elapsed_us");
            m.remove("wall_ms");
            m.values_mut().for_each(strip_timing);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

fn episodes_by_task(text: &str) -> Result<BTreeMap<String, Vec<Value>>, String> {
    let (_, records) = parse_trace(text.as_bytes()).map_err(|e| e.to_string())?;
    let mut by: BTreeMap<String, Vec<Value>> = BTreeMap::new();
    for r in &records {
        let id = match r {
            TraceRecord::Turn { task_id, .. } => task_id.clone(),
            TraceRecord::Terminal(t) => t.task_id.clone(),
            TraceRecord::Header { .. } => continue,
        };
        let mut v = serde_json::to_value(r).map_err(|e| e.to_string())?;
        strip_timing(&mut v);
        by.entry(id).or_default().push(v);
    }
    Ok(by)
}

fn criterion_7() -> Outcome {
    let world = gen_world(70, &WorldConfig::default()).map_err(|e| e.to_string())?;
    let generated = gen_tasks(&world, &TaskKind::GENERATED, 150, 70).map_err(|e| e.to_string())?;
    let tasks = parse_tasks(&render_tasks(&generated)).map_err(|e| e.to_string())?;
    let world = Arc::new(world);
    let lib = SkillLibrary::builtin();
    let factory = |_: &Task, _: u64| -> Box<dyn PlannerBackend> { Box::new(PolicyPlanner::default()) };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut results = Vec::new();
    for parallelism in [1, 8] {
        let backend = SimBackend::new(world.clone(), PerturbationModel::counting(0.3, 0.1));
        let path = dir.path().join(format!("trace-{parallelism}.jsonl"));
        let writer = TraceWriter::create(&path).map_err(|e| e.to_string())?;
        let config = BenchConfig { parallelism, ..BenchConfig::default() };
        let out = run_benchmark(&tasks, &backend, &factory, Some(&lib), &config, Some(&writer)).map_err(|e| e.to_string())?;
        drop(writer);
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        results.push((out.report, episodes_by_task(&text)?, text));
    }
    let (a, b) = (&results[0], &results[1]);
    check(a.0 == b.0, || "reports differ between parallelism 1 and 8".into())?;
    check(a.1.len() == 150 && a.1 == b.1, || "per-episode traces differ".into())?;
    let (_, ra) = parse_trace(a.2.as_bytes()).map_err(|e| e.to_string())?;
    check(terminals(&ra).len() == 150, || "missing terminal records".into())?;
    Ok(format!("150 episodes: identical report (accuracy {:.1}%) and per-episode traces", 100.0 * a.0.accuracy))
}

/// Two-option version of a task: gold plus one distractor, gold position drawn from `rng`.
fn two_option(task: &Task, rng: &mut ChaCha8Rng) -> Task {
    let gold = task.gold.and_then(|g| task.option(g)).cloned().expect("generated tasks have gold");
    let distractor = task.options.iter().find(|o| Some(o.letter) != task.gold).cloned().expect("four options");
    let mut pair = [gold.referent.clone(), distractor.referent];
    let gold_first = rng.random_bool(0.5);
    if !gold_first {
        pair.swap(0, 1);
    }
    let mut t = task.clone();
    t.options = pair
        .into_iter()
        .enumerate()
        .map(|(i, referent)| TaskOption { letter: (b'A' + i as u8) as char, referent })
        .collect();
    t.gold = Some(if gold_first { 'A' } else { 'B' });
    t
}

fn criterion_8() -> Outcome {
    let world = gen_world(80, &WorldConfig::default()).map_err(|e| e.to_string())?;
    let mut kinds = TaskKind::GENERATED.to_vec();
    kinds.shuffle(&mut ChaCha8Rng::seed_from_u64(80));
    let four = gen_tasks(&world, &kinds, 2000, 80).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let two: Vec<Task> = four
        .iter()
        .map(|t| {
            let mut t = two_option(t, &mut rng);
            t.id = format!("pair-{}", t.id);
            t
        })
        .collect();
    check(two.iter().all(|t| t.validate().is_ok() && t.options.len() == 2), || "bad two-option task".into())?;
    check(
        two.iter().all(|t| matches!(&t.options[0].referent, Referent::Video(_) | Referent::Ordering(_))),
        || "bad referent".into(),
    )?;
    let backend = SimBackend::new(Arc::new(world), PerturbationModel::none());
    let factory = |_: &Task, _: u64| -> Box<dyn PlannerBackend> { Box::new(RandomPlanner) };
    let config = BenchConfig { planner_backend: "random".into(), parallelism: 4, ..BenchConfig::default() };
    let lib = SkillLibrary::builtin();
    let acc = |tasks: &[Task]| {
        run_benchmark(tasks, &backend, &factory, Some(&lib), &config, None).map(|o| o.report).map_err(|e| e.to_string())
    };
    let (r4, r2) = (acc(&four)?, acc(&two)?);
    check((r4.accuracy - 0.25).abs() <= 0.03, || format!("four-option {:.4}", r4.accuracy))?;
    check((r2.accuracy - 0.50).abs() <= 0.03, || format!("two-option {:.4}", r2.accuracy))?;
    check(r4.random_baseline == 0.25 && r2.random_baseline == 0.5, || "baseline arithmetic".into())?;
    Ok(format!("random planner: four-option {:.1}%, two-option {:.1}%", 100.0 * r4.accuracy, 100.0 * r2.accuracy))
}

fn criterion_9() -> Outcome {
    let (world, task, _) = case1();
    let backend = SimBackend::new(Arc::new(world), PerturbationModel::none());
    let n = 50u32;
    let windows: Vec<TimeWindow> = (0..n).map(|i| w(i % 40, i % 40 + 10)).collect();
    let replies: Vec<String> = windows
        .iter()
        .enumerate()
        .map(|(i, win)| {
            format!(
                "<thinking>step {i}</thinking><video_reader id=\"ref\">{}:{}</video_reader><video_reader_question>How many cups are visible in part {i}?</video_reader_question>[Pause]",
                win.start, win.end
            )
        })
        .chain(std::iter::once("<thinking>done</thinking><answer>C</answer>".to_string()))
        .collect();
    let budget = 16_384;
    let config = EpisodeConfig {
        max_rounds: n + 5,
        context_budget: budget,
        distill_threshold: 4096,
        conflict_enabled: false,
        ..EpisodeConfig::default()
    };
    let mut planner = ScriptedPlanner::new(replies);
    let started = Instant::now();
    let r = run_episode(&task, &mut planner, &backend, Some(&SkillLibrary::builtin()), &config).map_err(|e| e.to_string())?;
    let calls = r.dispatched_calls().count();
    check(calls == n as usize, || format!("{calls} calls dispatched"))?;
    let peak = r.turns.iter().map(|t| t.context_bytes).max().unwrap_or(0);
    check(peak < budget, || format!("context peaked at {peak} bytes, budget {budget}"))?;
    for (i, win) in windows.iter().enumerate() {
        let turn = i as u32 + 1;
        let found = r.memory.claims("ref").iter().any(|c| {
            c.turn == turn && c.key.aspect == Aspect::Count && c.key.subject == "cup" && c.key.scope == *win && c.source == ClaimSource::Tool(ToolId::VideoReader)
        });
        check(found, || format!("claim from call {turn} ({win}) not in memory"))?;
    }
    check(r.termination == TerminationCause::Answered && r.answer == 'C', || format!("{:?} {}", r.termination, r.answer))?;
    Ok(format!(
        "{calls} reader calls, peak context {peak} of {budget} bytes, {} claims queryable ({} ms)",
        r.memory.claim_count(),
        started.elapsed().as_millis()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 protocol corpus round trip", criterion_1),
        ("2 generator/oracle agreement", criterion_2),
        ("3 counting case regression", criterion_3),
        ("4 art style case regression", criterion_4),
        ("5 conflict ablation direction", criterion_5),
        ("6 budget and termination", criterion_6),
        ("7 determinism across parallelism", criterion_7),
        ("8 random baseline sanity", criterion_8),
        ("9 memory bound", criterion_9),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
