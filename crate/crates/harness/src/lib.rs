//! Benchmark harness: task files, trace persistence, accuracy reports,
//! remote backend adapters and parallel benchmark execution.

pub mod bench;
pub mod remote;
pub mod report;
pub mod taskfile;
pub mod trace;

use std::path::Path;

use vidagent_core::planner::{run_episode, EpisodeConfig, EpisodeError, EpisodeResult, ScriptedPlanner};
use vidagent_core::skills::{parse_skill, SkillError, SkillLibrary};
use vidagent_core::task::Task;
use vidagent_core::tools::ToolBackend;

pub use bench::{episode_seed, run_benchmark, sample_tasks, Ablation, BenchConfig, BenchError, BenchOutcome, TaskOutcome};
pub use remote::{EndpointConfig, RemoteError, RemotePlannerBackend, RemoteToolBackend};
pub use report::{compute_random_baseline, KindStats, Report, RunEcho};
pub use taskfile::{load_tasks, parse_tasks, render_tasks, save_tasks, TaskFileError};
pub use trace::{read_trace, Terminal, TraceError, TraceRecord, TraceWriter, TRACE_FORMAT};

#[derive(Debug, thiserror::Error)]
pub enum SkillDirError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {err}")]
    Skill { path: String, err: SkillError },
}

/// Loads every `*.md` file in `dir` as a skill.
pub fn load_skill_dir(dir: &Path) -> Result<SkillLibrary, SkillDirError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "md"))
        .collect();
    paths.sort();
    let mut skills = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = std::fs::read_to_string(p)?;
        let skill = parse_skill(&text).map_err(|err| SkillDirError::Skill { path: p.display().to_string(), err })?;
        skills.push(skill);
    }
    SkillLibrary::new(skills).map_err(|err| SkillDirError::Skill { path: dir.display().to_string(), err })
}

/// Re-drives one traced episode by feeding its recorded replies back in order.
pub fn replay_episode(
    task: &Task,
    records: &[TraceRecord],
    tools: &dyn ToolBackend,
    library: Option<&SkillLibrary>,
    config: &EpisodeConfig,
) -> Result<EpisodeResult, EpisodeError> {
    let replies: Vec<String> = trace::turns_of(records, &task.id).into_iter().map(|t| t.reply.clone()).collect();
    let seed = trace::terminals(records)
        .into_iter()
        .find(|t| t.task_id == task.id)
        .map_or(config.seed, |t| t.episode_seed);
    let mut planner = ScriptedPlanner::new(replies);
    run_episode(task, &mut planner, tools, library, &EpisodeConfig { seed, ..config.clone() })
}
