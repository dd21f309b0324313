use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EpisodeConfig;
use crate::skills::ComposedContext;
use crate::task::{Referent, Task};
use crate::tools::VideoRegistry;

const WITH_SUBTITLES: &str = include_str!("../../assets/prompts/with_subtitles.md");
const NO_SUBTITLES: &str = include_str!("../../assets/prompts/no_subtitles.md");
const INPUT: &str = include_str!("../../assets/prompts/input.md");

/// The only substitution point in the base templates.
pub const MAX_ROUND_PLACEHOLDER: &str = "{MAX_DS_ROUND}";

/// Appended to the prompt that must produce the answer.
pub const FINAL_NOTICE: &str = "The maximum number of iterations has been reached. \
Do not call any more agents. Select the most likely answer now and output only <answer></answer>.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("no duration for video {0}")]
    MissingDuration(String),
}

/// Base template for the task: the subtitle variant when any video has subtitles.
pub fn base_template(task: &Task) -> &'static str {
    if task.has_subtitles() {
        WITH_SUBTITLES
    } else {
        NO_SUBTITLES
    }
}

fn video_legend(task: &Task, registry: &VideoRegistry) -> Result<String, PromptError> {
    let mut out = String::from("Videos:\n");
    for v in &task.videos {
        let d = registry.duration(&v.id).ok_or_else(|| PromptError::MissingDuration(v.id.clone()))?;
        let subs = if v.has_subtitles { ", subtitles" } else { "" };
        let _ = writeln!(out, "- id=\"{}\" ({}, duration {d} s{subs})", v.id, v.role);
    }
    out.push_str("Options:\n");
    for o in &task.options {
        let referent = match &o.referent {
            Referent::Video(v) => format!("video {v}"),
            Referent::Ordering(vs) => vs.join(" -> "),
        };
        let _ = writeln!(out, "{}. {referent}", o.letter);
    }
    Ok(out.trim_end().to_string())
}

/// System message (template, then skills) and the opening user message
/// (question and per-video legend).
pub fn build_prompt(
    task: &Task,
    skills: Option<&ComposedContext>,
    config: &EpisodeConfig,
    registry: &VideoRegistry,
) -> Result<Vec<Message>, PromptError> {
    let mut system = base_template(task).replace(MAX_ROUND_PLACEHOLDER, &config.max_rounds.to_string());
    if let Some(ctx) = skills.filter(|c| !c.is_empty()) {
        if !system.ends_with('\n') {
            system.push('\n');
        }
        system.push('\n');
        system.push_str(&ctx.text);
    }
    let input = INPUT
        .replace("{question}", &task.question)
        .replace("{video_legend}", &video_legend(task, registry)?);
    Ok(vec![Message::system(system), Message::user(input)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skills::{all_skills, compose_context, SkillLibrary};
    use crate::task::{TaskKind, TaskMeta, TaskOption, TaskVideo};
    use crate::tools::VideoRole;

    fn task(subs: bool) -> Task {
        Task {
            id: "t".into(),
            kind: TaskKind::Counting,
            question: "Which video has as many cups as the reference?".into(),
            videos: vec![
                TaskVideo { id: "R".into(), duration: 40, role: VideoRole::Ref, source: String::new(), has_subtitles: subs },
                TaskVideo {
                    id: "V1".into(),
                    duration: 50,
                    role: VideoRole::Candidate,
                    source: String::new(),
                    has_subtitles: false,
                },
            ],
            options: vec![TaskOption { letter: 'A', referent: Referent::Video("V1".into()) }],
            gold: Some('A'),
            meta: TaskMeta::default(),
        }
    }

    #[test]
    fn round_placeholder_substituted() {
        let t = task(false);
        let msgs = build_prompt(&t, None, &EpisodeConfig::default(), &t.registry().unwrap()).unwrap();
        assert!(msgs[0].content.contains("maximum number of iterations allowed is 10."));
        assert!(!msgs[0].content.contains(MAX_ROUND_PLACEHOLDER));
        assert!(msgs[1].content.contains("id=\"V1\" (candidate, duration 50 s)"));
        assert!(msgs[1].content.starts_with("Input\nQuestion: Which video"));
    }

    #[test]
    fn subtitle_variant_selected() {
        let t = task(true);
        let msgs = build_prompt(&t, None, &EpisodeConfig::default(), &t.registry().unwrap()).unwrap();
        assert!(msgs[0].content.contains("<subtitle_extractor>200:210</subtitle_extractor>"));
        let t = task(false);
        let msgs = build_prompt(&t, None, &EpisodeConfig::default(), &t.registry().unwrap()).unwrap();
        assert!(!msgs[0].content.contains("subtitle_extractor"));
    }

    #[test]
    fn skills_appended_only_when_given() {
        let lib = SkillLibrary::builtin();
        let ctx = compose_context(&all_skills(&lib));
        let t = task(false);
        let reg = t.registry().unwrap();
        let with = build_prompt(&t, Some(&ctx), &EpisodeConfig::default(), &reg).unwrap();
        let without = build_prompt(&t, None, &EpisodeConfig::default(), &reg).unwrap();
        for name in lib.names() {
            let body = &lib.get(name).unwrap().body;
            assert!(with[0].content.contains(body.as_str()));
            assert!(!without[0].content.contains(body.as_str()));
        }
    }

    #[test]
    fn missing_duration() {
        let t = task(false);
        let mut reg = VideoRegistry::new();
        reg.insert("R", crate::tools::VideoEntry { duration: 40, role: VideoRole::Ref, source: String::new() })
            .unwrap();
        assert_eq!(
            build_prompt(&t, None, &EpisodeConfig::default(), &reg),
            Err(PromptError::MissingDuration("V1".into()))
        );
    }
}
