//! Benchmark execution: one episode per task, optionally in parallel, with
//! per-episode seeds derived from the run seed and the task id.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use vidagent_core::planner::{run_episode, EpisodeConfig, EpisodeResult, PlannerBackend};
use vidagent_core::skills::SkillLibrary;
use vidagent_core::task::Task;
use vidagent_core::tools::ToolBackend;

use crate::report::{Report, RunEcho};
use crate::trace::{Terminal, TraceError, TraceWriter};

/// Builds a fresh planner for one episode from the task and its seed.
pub type PlannerFactory<'a> = dyn Fn(&Task, u64) -> Box<dyn PlannerBackend> + Sync + 'a;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    pub no_skills: bool,
    pub no_conflict: bool,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub episode: EpisodeConfig,
    pub ablation: Ablation,
    pub parallelism: usize,
    /// Evaluate a uniform sample of this many tasks, drawn with the run seed.
    pub sample: Option<usize>,
    pub tool_backend: String,
    pub planner_backend: String,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            episode: EpisodeConfig::default(),
            ablation: Ablation::default(),
            parallelism: 1,
            sample: None,
            tool_backend: "simworld".into(),
            planner_backend: "policy".into(),
        }
    }
}

impl BenchConfig {
    /// The episode configuration with ablation flags applied.
    pub fn effective_episode(&self) -> EpisodeConfig {
        let mut e = self.episode.clone();
        if self.ablation.no_skills {
            e.skills_enabled = false;
        }
        if self.ablation.no_conflict {
            e.conflict_enabled = false;
        }
        e
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
}

/// Result of one task: the terminal record plus the full episode when it ran.
#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub terminal: Terminal,
    pub episode: Option<EpisodeResult>,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub report: Report,
    /// In task order (after sampling).
    pub outcomes: Vec<TaskOutcome>,
}

/// Seed of one episode: the first eight bytes of SHA-256 over the run seed and task id.
pub fn episode_seed(run_seed: u64, task_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(task_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Chooses `n` tasks uniformly without replacement, keeping file order.
pub fn sample_tasks(tasks: &[Task], n: usize, seed: u64) -> Vec<Task> {
    if n >= tasks.len() {
        return tasks.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, tasks.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| tasks[i].clone()).collect()
}

fn run_one(
    task: &Task,
    tools: &dyn ToolBackend,
    planners: &PlannerFactory<'_>,
    library: Option<&SkillLibrary>,
    base: &EpisodeConfig,
    run_seed: u64,
) -> TaskOutcome {
    let seed = episode_seed(run_seed, &task.id);
    let config = EpisodeConfig { seed, ..base.clone() };
    let failed = |error: String| Terminal {
        task_id: task.id.clone(),
        kind: task.kind.as_str().to_string(),
        option_count: task.options.len(),
        answer: None,
        gold: task.gold,
        correct: task.gold.map(|_| false),
        termination: None,
        error: Some(error),
        rounds: 0,
        tool_rounds: 0,
        violations: 0,
        conflicts_detected: 0,
        conflicts_resolved: 0,
        episode_seed: seed,
        wall_ms: 0,
    };
    let ran = catch_unwind(AssertUnwindSafe(|| {
        let mut planner = planners(task, seed);
        run_episode(task, planner.as_mut(), tools, library, &config)
    }));
    match ran {
        Ok(Ok(r)) => TaskOutcome {
            terminal: Terminal {
                task_id: r.task_id.clone(),
                kind: task.kind.as_str().to_string(),
                option_count: task.options.len(),
                answer: Some(r.answer),
                gold: r.gold,
                correct: r.correct(),
                termination: Some(r.termination),
                error: None,
                rounds: r.rounds_used,
                tool_rounds: r.tool_rounds,
                violations: r.violations,
                conflicts_detected: r.conflicts_detected,
                conflicts_resolved: r.conflicts_resolved,
                episode_seed: seed,
                wall_ms: r.wall_ms,
            },
            episode: Some(r),
        },
        Ok(Err(e)) => TaskOutcome { terminal: failed(e.to_string()), episode: None },
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "episode panicked".into());
            TaskOutcome { terminal: failed(format!("panic: {msg}")), episode: None }
        }
    }
}

/// Runs every task (or the configured sample) and writes each finished episode to `trace`.
pub fn run_benchmark(
    tasks: &[Task],
    tools: &dyn ToolBackend,
    planners: &PlannerFactory<'_>,
    library: Option<&SkillLibrary>,
    config: &BenchConfig,
    trace: Option<&TraceWriter>,
) -> Result<BenchOutcome, BenchError> {
    if config.parallelism == 0 {
        return Err(BenchError::ZeroParallelism);
    }
    let episode = config.effective_episode();
    let run_seed = config.episode.seed;
    let (selected, sampled_ids) = match config.sample {
        Some(n) => {
            let s = sample_tasks(tasks, n, run_seed);
            let ids = s.iter().map(|t| t.id.clone()).collect();
            (s, ids)
        }
        None => (tasks.to_vec(), Vec::new()),
    };
    let run = run_echo(config, &episode, sampled_ids);
    if let Some(w) = trace {
        w.begin(&run)?;
    }
    let exec = |task: &Task| -> Result<TaskOutcome, TraceError> {
        let o = run_one(task, tools, planners, library, &episode, run_seed);
        if let Some(w) = trace {
            let turns = o.episode.as_ref().map(|e| e.turns.as_slice()).unwrap_or(&[]);
            w.write_episode(&task.id, turns, &o.terminal)?;
        }
        Ok(o)
    };
    let outcomes: Vec<TaskOutcome> = if config.parallelism == 1 {
        selected.iter().map(exec).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| BenchError::Pool(e.to_string()))?;
        pool.install(|| selected.par_iter().map(exec).collect::<Result<_, _>>())?
    };
    if let Some(w) = trace {
        w.flush()?;
    }
    let report = Report::from_terminals(run, outcomes.iter().map(|o| &o.terminal));
    Ok(BenchOutcome { report, outcomes })
}

pub fn run_echo(config: &BenchConfig, episode: &EpisodeConfig, sampled_ids: Vec<String>) -> RunEcho {
    RunEcho {
        seed: config.episode.seed,
        temperature: episode.temperature,
        max_rounds: episode.max_rounds,
        skills_enabled: episode.skills_enabled,
        conflict_enabled: episode.conflict_enabled,
        tool_backend: config.tool_backend.clone(),
        planner_backend: config.planner_backend.clone(),
        sampled_ids,
    }
}
