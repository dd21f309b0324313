//! Multiple-choice task model shared by the generator, the loop and the harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tools::{RegistryError, VideoEntry, VideoRegistry, VideoRole};

/// Task kind. The first five have generators; the rest are reserved names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum TaskKind {
    Counting,
    ActionMatching,
    ArtStyle,
    VideoSimilarity,
    Sequence,
    ForensicDetection,
    ReIdentification,
    MultiView,
    Counterfactual,
    DefeasibleEntailment,
    SpatialRelation,
    Other(String),
}

impl TaskKind {
    pub const GENERATED: [TaskKind; 5] = [
        TaskKind::Counting,
        TaskKind::ActionMatching,
        TaskKind::ArtStyle,
        TaskKind::VideoSimilarity,
        TaskKind::Sequence,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            TaskKind::Counting => "counting",
            TaskKind::ActionMatching => "action_matching",
            TaskKind::ArtStyle => "art_style",
            TaskKind::VideoSimilarity => "video_similarity",
            TaskKind::Sequence => "sequence",
            TaskKind::ForensicDetection => "forensic_detection",
            TaskKind::ReIdentification => "re_identification",
            TaskKind::MultiView => "multi_view",
            TaskKind::Counterfactual => "counterfactual",
            TaskKind::DefeasibleEntailment => "defeasible_entailment",
            TaskKind::SpatialRelation => "spatial_relation",
            TaskKind::Other(s) => s,
        }
    }
}

impl From<String> for TaskKind {
    fn from(s: String) -> Self {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "counting" => TaskKind::Counting,
            "action_matching" => TaskKind::ActionMatching,
            "art_style" | "art_style_similarity" => TaskKind::ArtStyle,
            "video_similarity" => TaskKind::VideoSimilarity,
            "sequence" | "sequence_reasoning" => TaskKind::Sequence,
            "forensic_detection" => TaskKind::ForensicDetection,
            "re_identification" | "reidentification" => TaskKind::ReIdentification,
            "multi_view" => TaskKind::MultiView,
            "counterfactual" => TaskKind::Counterfactual,
            "defeasible_entailment" => TaskKind::DefeasibleEntailment,
            "spatial_relation" => TaskKind::SpatialRelation,
            _ => TaskKind::Other(s),
        }
    }
}

impl From<&str> for TaskKind {
    fn from(s: &str) -> Self {
        TaskKind::from(s.to_string())
    }
}

impl From<TaskKind> for String {
    fn from(k: TaskKind) -> String {
        k.as_str().to_string()
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What an option letter stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Referent {
    Video(String),
    Ordering(Vec<String>),
}

impl Referent {
    pub fn video(&self) -> Option<&str> {
        match self {
            Referent::Video(v) => Some(v),
            Referent::Ordering(_) => None,
        }
    }

    pub fn ordering(&self) -> Option<&[String]> {
        match self {
            Referent::Ordering(o) => Some(o),
            Referent::Video(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOption {
    pub letter: char,
    pub referent: Referent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskVideo {
    pub id: String,
    pub duration: u32,
    pub role: VideoRole,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub has_subtitles: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountRelation {
    Same,
    Greater,
    Less,
}

impl CountRelation {
    /// Whether a candidate count satisfies the relation against the reference count.
    pub fn holds(self, candidate: u32, reference: u32) -> bool {
        match self {
            CountRelation::Same => candidate == reference,
            CountRelation::Greater => candidate > reference,
            CountRelation::Less => candidate < reference,
        }
    }
}

/// Kind-specific facts the decision rules need; none of them reveal the gold.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMeta {
    /// Counted category (counting) or the progress object (sequence).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<CountRelation>,
    /// Per-video override of `target`, for tasks that count different categories per video.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub video_targets: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub kind: TaskKind,
    pub question: String,
    pub videos: Vec<TaskVideo>,
    pub options: Vec<TaskOption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<char>,
    #[serde(default)]
    pub meta: TaskMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskError {
    #[error("task {task}: {field}: {reason}")]
    Schema { task: String, field: &'static str, reason: String },
    #[error("task {0}: {1}")]
    Registry(String, RegistryError),
}

impl Task {
    pub fn letters(&self) -> impl Iterator<Item = char> + '_ {
        self.options.iter().map(|o| o.letter)
    }

    pub fn is_option(&self, letter: char) -> bool {
        self.options.iter().any(|o| o.letter == letter)
    }

    pub fn option(&self, letter: char) -> Option<&TaskOption> {
        self.options.iter().find(|o| o.letter == letter)
    }

    pub fn reference(&self) -> Option<&TaskVideo> {
        self.videos.iter().find(|v| v.role == VideoRole::Ref)
    }

    /// Category counted in `video`.
    pub fn target_for(&self, video: &str) -> Option<&str> {
        self.meta.video_targets.get(video).or(self.meta.target.as_ref()).map(String::as_str)
    }

    /// Video ids of the options, in option order. Ordering options are skipped.
    pub fn option_videos(&self) -> Vec<(char, &str)> {
        self.options.iter().filter_map(|o| o.referent.video().map(|v| (o.letter, v))).collect()
    }

    pub fn has_subtitles(&self) -> bool {
        self.videos.iter().any(|v| v.has_subtitles)
    }

    /// The same task with the gold letter removed, as handed to planners.
    pub fn blind(&self) -> Task {
        Task { gold: None, ..self.clone() }
    }

    pub fn registry(&self) -> Result<VideoRegistry, TaskError> {
        let mut reg = VideoRegistry::new();
        for v in &self.videos {
            reg.insert(
                v.id.clone(),
                VideoEntry { duration: v.duration, role: v.role, source: v.source.clone() },
            )
            .map_err(|e| TaskError::Registry(self.id.clone(), e))?;
        }
        Ok(reg)
    }

    /// Option letters contiguous from `A`, gold among them, referents point at task videos.
    pub fn validate(&self) -> Result<(), TaskError> {
        let schema = |field: &'static str, reason: String| TaskError::Schema { task: self.id.clone(), field, reason };
        if self.id.is_empty() {
            return Err(schema("id", "empty".into()));
        }
        if self.options.is_empty() {
            return Err(schema("options", "no options".into()));
        }
        for (i, o) in self.options.iter().enumerate() {
            let expected = (b'A' + i as u8) as char;
            if i >= 26 || o.letter != expected {
                return Err(schema("options", format!("letter {} where {expected} expected", o.letter)));
            }
        }
        if let Some(g) = self.gold {
            if !self.is_option(g) {
                return Err(schema("gold", format!("{g} is not an option letter")));
            }
        }
        let ids: BTreeSet<&str> = self.videos.iter().map(|v| v.id.as_str()).collect();
        for o in &self.options {
            let refs: Vec<&str> = match &o.referent {
                Referent::Video(v) => vec![v.as_str()],
                Referent::Ordering(vs) => vs.iter().map(String::as_str).collect(),
            };
            if let Some(missing) = refs.iter().find(|r| !ids.contains(*r)) {
                return Err(schema("options", format!("option {} refers to unknown video {missing}", o.letter)));
            }
        }
        self.registry().map(|_| ())
    }
}
