use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use vidagent_core::planner::{EpisodeConfig, PlannerBackend, PolicyPlanner, RandomPlanner};
use vidagent_core::protocol::ToolId;
use vidagent_core::skills::SkillLibrary;
use vidagent_core::task::TaskKind;
use vidagent_core::tools::ToolBackend;
use vidagent_harness::{
    load_skill_dir, load_tasks, read_trace, replay_episode, run_benchmark, save_tasks, Ablation, BenchConfig,
    EndpointConfig, RemotePlannerBackend, RemoteToolBackend, Report, TraceWriter,
};
use vidagent_simworld::{gen_tasks, gen_world, PerturbationModel, SimBackend, World, WorldConfig};

#[derive(Parser)]
#[command(name = "vidagent", about = "Multi-video question answering agent benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ToolSource {
    Simworld,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerSource {
    Policy,
    Random,
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AblateFlag {
    NoSkills,
    NoConflict,
}

#[derive(clap::Args)]
struct BackendArgs {
    /// World file for the simulated tool backend.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "simworld")]
    tools: ToolSource,
    /// Probability that a reader count is off.
    #[arg(long, default_value_t = 0.0)]
    reader_noise: f64,
    /// Probability that the detector misses one instance.
    #[arg(long, default_value_t = 0.0)]
    detector_drop: f64,
    #[arg(long, env = "VIDAGENT_TOOL_URL")]
    tool_url: Option<String>,
    #[arg(long, env = "VIDAGENT_PLANNER_URL")]
    planner_url: Option<String>,
    /// Request timeout for remote endpoints, in seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// Directory of skill files; the built-in skills are used otherwise.
    #[arg(long)]
    skills: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark over a task file.
    Run {
        #[arg(long)]
        tasks: PathBuf,
        #[command(flatten)]
        backends: BackendArgs,
        #[arg(long, value_enum, default_value = "policy")]
        planner: PlannerSource,
        #[arg(long, value_enum, value_delimiter = ',')]
        ablate: Vec<AblateFlag>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long, env = "VIDAGENT_SEED", default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        max_rounds: u32,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        /// Evaluate a uniform sample of this many tasks.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value = "trace.jsonl")]
        trace: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a synthetic world.
    GenWorld {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        videos: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate tasks over a world.
    GenTasks {
        #[arg(long)]
        world: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Kind mix, cycled in order.
        #[arg(long, value_delimiter = ',', default_value = "counting,action_matching,art_style,video_similarity,sequence")]
        kinds: Vec<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-drive one episode from the replies recorded in a trace.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        task_id: String,
        #[command(flatten)]
        backends: BackendArgs,
    },
    /// Recompute the report of a run from its trace.
    Report {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn load_world(path: &Path) -> Result<World> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(World::from_json(&text)?)
}

fn endpoint(url: &Option<String>, token_env: &str, args: &BackendArgs, what: &str) -> Result<EndpointConfig> {
    let Some(url) = url else { bail!("{what} endpoint URL not set") };
    let mut cfg = EndpointConfig::new(url.clone()).with_token_env(token_env);
    cfg.timeout = Duration::from_secs(args.timeout);
    cfg.retries = args.retries;
    Ok(cfg)
}

fn tool_backend(args: &BackendArgs) -> Result<Box<dyn ToolBackend>> {
    match args.tools {
        ToolSource::Simworld => {
            let Some(path) = &args.world else { bail!("--world is required for the simworld backend") };
            let perturbation = PerturbationModel::counting(args.reader_noise, args.detector_drop);
            perturbation.validate()?;
            Ok(Box::new(SimBackend::new(Arc::new(load_world(path)?), perturbation)))
        }
        ToolSource::Remote => {
            let cfg = endpoint(&args.tool_url, "VIDAGENT_TOOL_TOKEN", args, "tool")?;
            Ok(Box::new(RemoteToolBackend::new(cfg, ToolId::ALL.into_iter().collect::<BTreeSet<_>>())?))
        }
    }
}

fn library(args: &BackendArgs) -> Result<SkillLibrary> {
    match &args.skills {
        Some(dir) => Ok(load_skill_dir(dir)?),
        None => Ok(SkillLibrary::builtin()),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            tasks,
            backends,
            planner,
            ablate,
            parallelism,
            seed,
            max_rounds,
            temperature,
            sample,
            trace,
            report,
        } => {
            let tasks = load_tasks(&tasks)?;
            let tools = tool_backend(&backends)?;
            let library = library(&backends)?;
            let episode = EpisodeConfig { seed, max_rounds, temperature, ..EpisodeConfig::default() };
            let verification = episode.verification.clone();
            let remote = match planner {
                PlannerSource::Remote => Some(RemotePlannerBackend::new(endpoint(
                    &backends.planner_url,
                    "VIDAGENT_PLANNER_TOKEN",
                    &backends,
                    "planner",
                )?)?),
                _ => None,
            };
            let factory = move |_: &vidagent_core::task::Task, _: u64| -> Box<dyn PlannerBackend> {
                match (&remote, planner) {
                    (Some(client), _) => Box::new(client.clone()),
                    (None, PlannerSource::Random) => Box::new(RandomPlanner),
                    (None, _) => Box::new(PolicyPlanner::new(verification.clone())),
                }
            };
            let config = BenchConfig {
                episode,
                ablation: Ablation {
                    no_skills: ablate.contains(&AblateFlag::NoSkills),
                    no_conflict: ablate.contains(&AblateFlag::NoConflict),
                },
                parallelism,
                sample,
                tool_backend: match backends.tools {
                    ToolSource::Simworld => "simworld".into(),
                    ToolSource::Remote => "remote".into(),
                },
                planner_backend: match planner {
                    PlannerSource::Policy => "policy".into(),
                    PlannerSource::Random => "random".into(),
                    PlannerSource::Remote => "remote".into(),
                },
            };
            let writer = TraceWriter::create(&trace)?;
            let outcome = run_benchmark(&tasks, tools.as_ref(), &factory, Some(&library), &config, Some(&writer))?;
            print!("{}", outcome.report.render());
            if let Some(path) = report {
                std::fs::write(path, serde_json::to_string_pretty(&outcome.report)?)?;
            }
        }
        Command::GenWorld { seed, videos, out } => {
            let world = gen_world(seed, &WorldConfig { videos, ..WorldConfig::default() })?;
            std::fs::write(&out, world.to_json())?;
            println!("wrote {} videos to {}", world.videos.len(), out.display());
        }
        Command::GenTasks { world, count, kinds, seed, out } => {
            let world = load_world(&world)?;
            let kinds: Vec<TaskKind> = kinds.into_iter().map(TaskKind::from).collect();
            let tasks = gen_tasks(&world, &kinds, count, seed)?;
            save_tasks(&out, &tasks)?;
            println!("wrote {} tasks to {}", tasks.len(), out.display());
        }
        Command::Replay { trace, tasks, task_id, backends } => {
            let (run, records) = read_trace(&trace)?;
            let tasks = load_tasks(&tasks)?;
            let Some(task) = tasks.iter().find(|t| t.id == task_id) else { bail!("no task {task_id}") };
            let tools = tool_backend(&backends)?;
            let library = library(&backends)?;
            let config = EpisodeConfig {
                max_rounds: run.max_rounds,
                temperature: run.temperature,
                skills_enabled: run.skills_enabled,
                conflict_enabled: run.conflict_enabled,
                ..EpisodeConfig::default()
            };
            let r = replay_episode(task, &records, tools.as_ref(), Some(&library), &config)?;
            let recorded = vidagent_harness::trace::terminals(&records)
                .into_iter()
                .find(|t| t.task_id == task_id)
                .and_then(|t| t.answer);
            println!(
                "answer {} ({:?}, {} prompts); recorded {}",
                r.answer,
                r.termination,
                r.rounds_used,
                recorded.map_or("-".to_string(), |a| a.to_string())
            );
        }
        Command::Report { trace, json } => {
            let report = Report::from_trace(&trace)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render());
            }
        }
    }
    Ok(())
}
