//! The episode loop: prompt assembly, turn-by-turn planner interaction,
//! dispatch, verification, budget enforcement and termination.

mod backend;
pub mod decision;
mod policy;
mod prompt;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{EpisodeView, PlannerBackend, PlannerError, PlannerRequest, RandomPlanner, ScriptedPlanner};
pub use decision::forced_answer;
pub use policy::PolicyPlanner;
pub use prompt::{base_template, build_prompt, Message, PromptError, Role, FINAL_NOTICE, MAX_ROUND_PLACEHOLDER};

use crate::protocol::{
    parse_planner_reply, render_failure, render_observation, render_payload, truncate_to_budget, validate_reply,
    ToolCall, ToolId, Verdict, ViolationKind,
};
use crate::skills::{all_skills, compose_context, select_skills, InjectionMode, SelectionTable, SkillLibrary};
use crate::task::{Task, TaskError};
use crate::tools::{dispatch, validate_call, ToolBackend, ToolError, VideoRegistry};
use crate::verification::{
    detect_conflicts, extract_claims, plan_reread, resolve, Claim, Conflict, EvidenceMemory, Resolution,
    VerificationConfig,
};

/// Where conflict-triggered re-reads run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RereadMode {
    /// Dispatched in the same turn, before observations render.
    #[default]
    InTurn,
    /// Surfaced to the planner with suggested calls; resolved when it issues them.
    PlannerMediated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub max_rounds: u32,
    pub seed: u64,
    pub temperature: f64,
    pub skills_enabled: bool,
    pub conflict_enabled: bool,
    pub injection: InjectionMode,
    pub selection: SelectionTable,
    /// Cap in bytes on one rendered observation.
    pub observation_budget: usize,
    /// Once the post-prompt history exceeds this many bytes, older raw
    /// observations are replaced by the memory summaries.
    pub distill_threshold: usize,
    /// Cap in bytes on each video's memory summary.
    pub summary_budget: usize,
    /// Hard cap in bytes on the rendered planner context.
    pub context_budget: usize,
    /// Format violations tolerated before the episode is cut short.
    pub max_violations: u32,
    pub reread_mode: RereadMode,
    pub verification: VerificationConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_rounds: 10,
            seed: 42,
            temperature: 0.0,
            skills_enabled: true,
            conflict_enabled: true,
            injection: InjectionMode::InjectAll,
            selection: SelectionTable::default(),
            observation_budget: 4096,
            distill_threshold: 8192,
            summary_budget: 1024,
            context_budget: 32 * 1024,
            max_violations: 3,
            reread_mode: RereadMode::InTurn,
            verification: VerificationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("max_rounds must be at least 1")]
    ZeroRounds,
    #[error("{0} must be positive")]
    ZeroBudget(&'static str),
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_rounds == 0 {
            return Err(ConfigError::ZeroRounds);
        }
        for (name, v) in [
            ("observation_budget", self.observation_budget),
            ("distill_threshold", self.distill_threshold),
            ("summary_budget", self.summary_budget),
            ("context_budget", self.context_budget),
            ("max_violations", self.max_violations as usize),
        ] {
            if v == 0 {
                return Err(ConfigError::ZeroBudget(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("skills are enabled but no skill library was given")]
    MissingSkills,
    #[error("context budget {budget} is below the {needed} bytes of the opening prompt")]
    ContextBudgetTooSmall { budget: usize, needed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    Answered,
    ForcedAtBudget,
    AbortedOnRepeatedViolations,
    BackendUnavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictRecord {
    Proceed,
    Final { answer: char },
    Violation { violation: ViolationKind },
    BackendError { cause: String },
}

/// One dispatched call as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolEvent {
    pub call: ToolCall,
    /// The call after validation (ids resolved, windows clamped, defaults filled).
    pub resolved: Option<ToolCall>,
    pub reread: bool,
    pub ok: bool,
    pub observation: String,
    /// SHA-256 of the rendered payload (or of the error text).
    pub digest: String,
    pub bytes: usize,
    pub retries: u32,
    pub elapsed_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    /// Zero-based prompt index.
    pub round: u32,
    /// Tool rounds completed before this prompt.
    pub tool_round: u32,
    pub final_prompt: bool,
    pub prompt_hash: String,
    pub context_bytes: usize,
    pub reply: String,
    pub actions: Vec<ToolCall>,
    pub verdict: VerdictRecord,
    pub events: Vec<ToolEvent>,
    pub claims: Vec<Claim>,
    pub conflicts: Vec<Conflict>,
    pub resolutions: Vec<Resolution>,
    pub unresolved: Vec<Conflict>,
    pub summary_sizes: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task_id: String,
    pub answer: char,
    pub gold: Option<char>,
    pub termination: TerminationCause,
    /// Planner prompts issued, including re-prompts and the final prompt.
    pub rounds_used: u32,
    pub tool_rounds: u32,
    pub violations: u32,
    pub conflicts_detected: usize,
    pub conflicts_resolved: usize,
    pub wall_ms: u64,
    pub turns: Vec<TurnRecord>,
    pub memory: EvidenceMemory,
}

impl EpisodeResult {
    /// `None` for blind tasks. Episodes cut off by an unavailable backend never count as correct.
    pub fn correct(&self) -> Option<bool> {
        self.gold.map(|g| g == self.answer && self.termination != TerminationCause::BackendUnavailable)
    }

    pub fn dispatched_calls(&self) -> impl Iterator<Item = &ToolEvent> {
        self.turns.iter().flat_map(|t| t.events.iter())
    }
}

/// Mutable per-episode state.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub tool_round: u32,
    pub prompts: u32,
    /// Every message exchanged, append-only.
    pub history: Vec<Message>,
    pub memory: EvidenceMemory,
    pub pending: Vec<Conflict>,
    pub violations: u32,
    pub conflicts_detected: usize,
    pub conflicts_resolved: usize,
    pub turns: Vec<TurnRecord>,
}

/// Outcome of feeding one reply into the episode.
#[derive(Debug, Clone, PartialEq)]
pub enum Transition {
    /// A follow-up user message was appended; prompt again.
    Continue,
    Final(char),
    /// The last allowed prompt passed without a valid answer.
    Exhausted,
    /// Too many format violations.
    Aborted,
}

pub struct Episode<'a> {
    task: &'a Task,
    blind: Task,
    registry: VideoRegistry,
    tools: &'a dyn ToolBackend,
    capabilities: BTreeSet<ToolId>,
    config: &'a EpisodeConfig,
    pub state: AgentState,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash identifying a rendered context.
pub fn prompt_hash(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(format!("{:?}", m.role).as_bytes());
        h.update([0]);
        h.update(m.content.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

impl<'a> Episode<'a> {
    pub fn new(
        task: &'a Task,
        tools: &'a dyn ToolBackend,
        library: Option<&SkillLibrary>,
        config: &'a EpisodeConfig,
    ) -> Result<Self, EpisodeError> {
        config.validate()?;
        task.validate()?;
        let registry = task.registry()?;
        let skills = if config.skills_enabled {
            let lib = library.ok_or(EpisodeError::MissingSkills)?;
            let chosen = match config.injection {
                InjectionMode::InjectAll => all_skills(lib),
                InjectionMode::SelectByKind => select_skills(&task.kind, lib, &config.selection),
            };
            Some(compose_context(&chosen))
        } else {
            None
        };
        let history = build_prompt(task, skills.as_ref(), config, &registry)?;
        let needed: usize = history.iter().map(|m| m.content.len()).sum();
        if needed > config.context_budget {
            return Err(EpisodeError::ContextBudgetTooSmall { budget: config.context_budget, needed });
        }
        Ok(Episode {
            task,
            blind: task.blind(),
            registry,
            tools,
            capabilities: tools.capabilities(),
            config,
            state: AgentState {
                tool_round: 0,
                prompts: 0,
                history,
                memory: EvidenceMemory::new(config.summary_budget),
                pending: Vec::new(),
                violations: 0,
                conflicts_detected: 0,
                conflicts_resolved: 0,
                turns: Vec::new(),
            },
        })
    }

    /// The next prompt must yield the answer.
    pub fn is_final_prompt(&self) -> bool {
        self.state.tool_round >= self.config.max_rounds || self.state.prompts >= self.config.max_rounds
    }

    pub fn view(&self) -> EpisodeView<'_> {
        EpisodeView {
            task: &self.blind,
            memory: &self.state.memory,
            pending_conflicts: &self.state.pending,
            tool_round: self.state.tool_round,
            max_rounds: self.config.max_rounds,
            final_prompt: self.is_final_prompt(),
        }
    }

    /// What the planner sees: the full history while it is small, otherwise the
    /// opening prompt, the memory summaries, the last reply and the last
    /// observation. Never exceeds `context_budget`.
    pub fn context(&self) -> Vec<Message> {
        let h = &self.state.history;
        let rest = &h[2..];
        let total: usize = h.iter().map(|m| m.content.len()).sum();
        let raw: usize = rest.iter().map(|m| m.content.len()).sum();
        if raw <= self.config.distill_threshold && total <= self.config.context_budget {
            return h.clone();
        }
        let system = h[0].clone();
        let mut initial = h[1].clone();
        let last_obs = rest.last().filter(|m| m.role == Role::User);
        let last_reply = rest.iter().rev().find(|m| m.role == Role::Assistant);
        let mut avail = self.config.context_budget.saturating_sub(system.content.len() + initial.content.len());

        let obs = last_obs.map(|m| truncate_to_budget(&m.content, avail));
        avail -= obs.as_ref().map_or(0, String::len);
        let memory = self.state.memory.render();
        if !memory.is_empty() {
            let block = truncate_to_budget(&format!("\n\nEvidence memory:\n{memory}"), avail);
            avail -= block.len();
            initial.content.push_str(&block);
        }
        let reply = last_reply.map(|m| truncate_to_budget(&m.content, avail));

        let mut out = vec![system, initial];
        if let Some(r) = reply {
            out.push(Message::assistant(r));
        }
        if let Some(o) = obs {
            out.push(Message::user(o));
        }
        out
    }

    fn run_call(&mut self, call: &ToolCall, turn: u32, reread: bool) -> (String, Vec<Claim>, ToolEvent) {
        let budget = self.config.observation_budget;
        let failed = |cause: String, resolved: Option<ToolCall>, retries: u32, elapsed_us: u64| {
            let line = render_failure(call, &cause, turn, budget);
            let event = ToolEvent {
                call: call.clone(),
                resolved,
                reread,
                ok: false,
                observation: line.clone(),
                digest: sha_hex(cause.as_bytes()),
                bytes: cause.len(),
                retries,
                elapsed_us,
            };
            (line, Vec::new(), event)
        };
        let resolved = match validate_call(call, &self.registry, &self.capabilities) {
            Ok(r) => r,
            Err(e) => return failed(e.to_string(), None, 0, 0),
        };
        let d = dispatch(&resolved, self.tools, &self.registry);
        match d.outcome {
            Err(e) => {
                let cause = match e {
                    ToolError::BackendFailure { cause, .. } => cause,
                    other => other.to_string(),
                };
                failed(cause, Some(d.call), d.retries, d.elapsed_us)
            }
            Ok(result) => {
                let line = render_observation(&result, &d.call, turn, budget);
                let mut claims = extract_claims(&result, &d.call, turn, &self.config.verification);
                for c in &mut claims {
                    c.narrowed = reread;
                }
                let claims = self.state.memory.admit(claims);
                if let Some(v) = result.video_ids.first() {
                    self.state.memory.add_raw_bytes(v, line.len());
                }
                let payload = render_payload(&result.payload);
                let event = ToolEvent {
                    call: call.clone(),
                    resolved: Some(d.call),
                    reread,
                    ok: true,
                    observation: line.clone(),
                    digest: sha_hex(payload.as_bytes()),
                    bytes: d.bytes,
                    retries: d.retries,
                    elapsed_us: d.elapsed_us,
                };
                (line, claims, event)
            }
        }
    }

    /// Dispatches one turn's calls, runs verification and returns the observation message.
    fn execute(&mut self, actions: &[ToolCall], record: &mut TurnRecord) -> String {
        let turn = self.state.tool_round + 1;
        let cfg = self.config;
        let mut lines = Vec::new();
        let mut batch = Vec::new();
        for call in actions {
            let (line, claims, event) = self.run_call(call, turn, false);
            lines.push(line);
            batch.extend(claims);
            record.events.push(event);
        }
        let mut resolutions = Vec::new();
        let mut already_aggregated = 0;
        let mut reread_claims = Vec::new();
        if cfg.conflict_enabled {
            // pending conflicts resolve against this turn's claims
            let pending = std::mem::take(&mut self.state.pending);
            let mut early = Vec::new();
            for c in pending {
                let relevant: Vec<Claim> = batch
                    .iter()
                    .filter(|k| k.video == c.video && k.key.aspect == c.aspect && k.key.subject == c.subject)
                    .cloned()
                    .collect();
                match resolve(&c, &relevant, turn, &cfg.verification) {
                    Ok(r) => {
                        lines.push(r.to_string());
                        early.push(r);
                    }
                    Err(_) => self.state.pending.push(c),
                }
            }
            if !early.is_empty() {
                self.state.memory.aggregate(Vec::new(), &early);
                self.state.conflicts_resolved += early.len();
                already_aggregated = early.len();
                resolutions.extend(early);
            }
            let superseded: BTreeSet<_> = resolutions.iter().flat_map(|r| r.superseded.iter().copied()).collect();
            let live: Vec<Claim> = batch.iter().filter(|c| !superseded.contains(&c.id)).cloned().collect();
            let conflicts = detect_conflicts(&self.state.memory, &live, turn, &cfg.verification);
            self.state.conflicts_detected += conflicts.len();
            for conflict in &conflicts {
                lines.push(conflict.to_string());
                let calls = plan_reread(conflict, &self.registry, &cfg.verification);
                match cfg.reread_mode {
                    RereadMode::InTurn => {
                        let mut these = Vec::new();
                        for call in &calls {
                            let (line, claims, event) = self.run_call(call, turn, true);
                            lines.push(format!("Re-read: {line}"));
                            these.extend(claims);
                            record.events.push(event);
                        }
                        match resolve(conflict, &these, turn, &cfg.verification) {
                            Ok(r) => {
                                lines.push(r.to_string());
                                resolutions.push(r);
                                self.state.conflicts_resolved += 1;
                            }
                            Err(u) => {
                                lines.push(u.to_string());
                                record.unresolved.push(conflict.clone());
                                self.state.pending.push(conflict.clone());
                            }
                        }
                        reread_claims.extend(these);
                    }
                    RereadMode::PlannerMediated => {
                        let tags: Vec<String> = calls.iter().map(ToolCall::to_tag).collect();
                        lines.push(format!("Suggested re-read: {}", tags.join("")));
                        self.state.pending.push(conflict.clone());
                    }
                }
            }
            record.conflicts = conflicts;
        }
        let mut claims = batch;
        claims.extend(reread_claims);
        record.claims = claims.clone();
        self.state.memory.aggregate(claims, &resolutions[already_aggregated..]);
        record.resolutions = resolutions;
        record.summary_sizes =
            self.state.memory.videos().map(|(id, v)| (id.to_string(), v.summary.len())).collect();
        lines.join("\n")
    }

    /// Feeds one reply for the prompt just issued.
    pub fn step(&mut self, reply_text: &str, prompt_hash: String, context_bytes: usize) -> Transition {
        let final_prompt = self.state.prompts > 0 && {
            // the prompt being answered was final if the state before it was
            let prompts_before = self.state.prompts - 1;
            self.state.tool_round >= self.config.max_rounds || prompts_before >= self.config.max_rounds
        };
        let reply = parse_planner_reply(reply_text);
        let round_arg = if final_prompt { self.config.max_rounds } else { self.state.tool_round };
        let mut verdict = validate_reply(&reply, self.config.max_rounds, round_arg);
        if let Verdict::Final(a) = verdict {
            if !self.task.is_option(a) {
                verdict = Verdict::Violation(ViolationKind::InvalidOption);
            }
        }
        self.state.history.push(Message::assistant(reply_text));
        let mut record = TurnRecord {
            round: self.state.prompts.saturating_sub(1),
            tool_round: self.state.tool_round,
            final_prompt,
            prompt_hash,
            context_bytes,
            reply: reply_text.to_string(),
            actions: reply.actions.clone(),
            verdict: VerdictRecord::Proceed,
            events: Vec::new(),
            claims: Vec::new(),
            conflicts: Vec::new(),
            resolutions: Vec::new(),
            unresolved: Vec::new(),
            summary_sizes: BTreeMap::new(),
        };
        let transition = match verdict {
            Verdict::Final(a) => {
                record.verdict = VerdictRecord::Final { answer: a };
                Transition::Final(a)
            }
            Verdict::Violation(kind) => {
                record.verdict = VerdictRecord::Violation { violation: kind };
                self.state.violations += 1;
                if final_prompt {
                    Transition::Exhausted
                } else if self.state.violations >= self.config.max_violations {
                    Transition::Aborted
                } else {
                    let mut msg = kind.corrective_message().to_string();
                    if self.is_final_prompt() && kind != ViolationKind::BudgetExceeded {
                        msg.push_str("\n\n");
                        msg.push_str(FINAL_NOTICE);
                    }
                    self.state.history.push(Message::user(msg));
                    Transition::Continue
                }
            }
            Verdict::Proceed(actions) => {
                let mut obs = self.execute(&actions, &mut record);
                self.state.tool_round += 1;
                if self.is_final_prompt() {
                    obs.push_str("\n\n");
                    obs.push_str(FINAL_NOTICE);
                }
                self.state.history.push(Message::user(obs));
                Transition::Continue
            }
        };
        self.state.turns.push(record);
        transition
    }

    fn finish(self, answer: char, termination: TerminationCause, started: Instant) -> EpisodeResult {
        EpisodeResult {
            task_id: self.task.id.clone(),
            answer,
            gold: self.task.gold,
            termination,
            rounds_used: self.state.prompts,
            tool_rounds: self.state.tool_round,
            violations: self.state.violations,
            conflicts_detected: self.state.conflicts_detected,
            conflicts_resolved: self.state.conflicts_resolved,
            wall_ms: started.elapsed().as_millis() as u64,
            turns: self.state.turns,
            memory: self.state.memory,
        }
    }
}

/// Runs one task to a final option letter.
pub fn run_episode(
    task: &Task,
    planner: &mut dyn PlannerBackend,
    tools: &dyn ToolBackend,
    library: Option<&SkillLibrary>,
    config: &EpisodeConfig,
) -> Result<EpisodeResult, EpisodeError> {
    let started = Instant::now();
    let mut ep = Episode::new(task, tools, library, config)?;
    loop {
        let context = ep.context();
        let hash = prompt_hash(&context);
        let bytes: usize = context.iter().map(|m| m.content.len()).sum();
        let reply = {
            let request = PlannerRequest {
                messages: &context,
                temperature: config.temperature,
                seed: config.seed,
                round: ep.state.prompts,
                view: ep.view(),
            };
            planner.reply(&request)
        };
        ep.state.prompts += 1;
        let text = match reply {
            Ok(t) => t,
            Err(e) => {
                let final_prompt = ep.view().final_prompt;
                ep.state.turns.push(TurnRecord {
                    round: ep.state.prompts - 1,
                    tool_round: ep.state.tool_round,
                    final_prompt,
                    prompt_hash: hash,
                    context_bytes: bytes,
                    reply: String::new(),
                    actions: Vec::new(),
                    verdict: VerdictRecord::BackendError { cause: e.to_string() },
                    events: Vec::new(),
                    claims: Vec::new(),
                    conflicts: Vec::new(),
                    resolutions: Vec::new(),
                    unresolved: Vec::new(),
                    summary_sizes: BTreeMap::new(),
                });
                let answer = forced_answer(task, &ep.state.memory);
                return Ok(ep.finish(answer, TerminationCause::BackendUnavailable, started));
            }
        };
        match ep.step(&text, hash, bytes) {
            Transition::Continue => {}
            Transition::Final(a) => return Ok(ep.finish(a, TerminationCause::Answered, started)),
            Transition::Exhausted => {
                let answer = forced_answer(task, &ep.state.memory);
                return Ok(ep.finish(answer, TerminationCause::ForcedAtBudget, started));
            }
            Transition::Aborted => {
                let answer = forced_answer(task, &ep.state.memory);
                return Ok(ep.finish(answer, TerminationCause::AbortedOnRepeatedViolations, started));
            }
        }
    }
}

#[cfg(test)]
mod tests;
