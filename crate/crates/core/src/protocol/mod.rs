//! Planner tag protocol.
//!
//! The planner speaks a small XML-like tag language: `<thinking>`, `<answer>`,
//! one tag per tool, the `<video_reader_question>` companion block, and the
//! literal `[Pause]` marker. This module parses raw planner text into a
//! [`PlannerReply`], serializes [`ToolCall`]s back into canonical tags, renders
//! tool results as observation text, and judges replies against the
//! turn budget.

mod parse;
mod render;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use parse::{parse_planner_reply, parse_tool_tag, PAUSE_MARKER};
pub use render::{render_failure, render_observation, render_payload, truncate_to_budget, TRUNCATION_MARKER};
pub(crate) use render::format_score;
pub use validate::{validate_reply, Verdict, ViolationKind};

/// Closed set of tools the planner may address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolId {
    VideoReader,
    TemporalGroundingAgent,
    SceneDetector,
    ObjectTracker,
    SpatialRelation,
    SceneGraph,
    VisualSimilarity,
    SubtitleRetriever,
    SubtitleExtractor,
}

impl ToolId {
    pub const ALL: [ToolId; 9] = [
        ToolId::VideoReader,
        ToolId::TemporalGroundingAgent,
        ToolId::SceneDetector,
        ToolId::ObjectTracker,
        ToolId::SpatialRelation,
        ToolId::SceneGraph,
        ToolId::VisualSimilarity,
        ToolId::SubtitleRetriever,
        ToolId::SubtitleExtractor,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ToolId::VideoReader => "video_reader",
            ToolId::TemporalGroundingAgent => "temporal_grounding_agent",
            ToolId::SceneDetector => "scene_detector",
            ToolId::ObjectTracker => "object_tracker",
            ToolId::SpatialRelation => "spatial_relation",
            ToolId::SceneGraph => "scene_graph",
            ToolId::VisualSimilarity => "visual_similarity",
            ToolId::SubtitleRetriever => "subtitle_retriever",
            ToolId::SubtitleExtractor => "subtitle_extractor",
        }
    }

    pub fn from_tag(tag: &str) -> Option<ToolId> {
        ToolId::ALL.into_iter().find(|t| t.tag() == tag)
    }

    /// Tools whose whole body is a free-text query rather than `window;params`.
    pub fn takes_query_body(self) -> bool {
        matches!(self, ToolId::TemporalGroundingAgent | ToolId::SubtitleRetriever)
    }
}

impl fmt::Display for ToolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Inclusive window in integer seconds. `start == end` is a point query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: u32,
    pub end: u32,
}

impl TimeWindow {
    pub fn new(start: u32, end: u32) -> Option<TimeWindow> {
        (start <= end).then_some(TimeWindow { start, end })
    }

    pub fn whole(duration: u32) -> TimeWindow {
        TimeWindow { start: 0, end: duration }
    }

    /// Span in seconds; zero-length windows are points, see [`TimeWindow::is_point`].
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u32 {
        self.end - self.start
    }

    pub fn is_point(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &TimeWindow) -> bool {
        self.start.max(other.start) <= self.end.min(other.end)
    }

    pub fn intersection(&self, other: &TimeWindow) -> Option<TimeWindow> {
        TimeWindow::new(self.start.max(other.start), self.end.min(other.end))
    }

    pub fn contains(&self, t: u32) -> bool {
        self.start <= t && t <= self.end
    }

    /// Clamps both ends into `[0, duration]`. Idempotent.
    pub fn clamp_to(&self, duration: u32) -> TimeWindow {
        TimeWindow { start: self.start.min(duration), end: self.end.min(duration) }
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WindowError {
    #[error("not an integer window: {0:?}")]
    NotIntegers(String),
    #[error("window start {start} after end {end}")]
    Reversed { start: u32, end: u32 },
}

impl FromStr for TimeWindow {
    type Err = WindowError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(':').ok_or_else(|| WindowError::NotIntegers(s.to_string()))?;
        let (a, b) = (a.trim(), b.trim());
        let digits = |x: &str| !x.is_empty() && x.bytes().all(|c| c.is_ascii_digit());
        if !digits(a) || !digits(b) {
            return Err(WindowError::NotIntegers(s.to_string()));
        }
        let start: u32 = a.parse().map_err(|_| WindowError::NotIntegers(s.to_string()))?;
        let end: u32 = b.parse().map_err(|_| WindowError::NotIntegers(s.to_string()))?;
        TimeWindow::new(start, end).ok_or(WindowError::Reversed { start, end })
    }
}

/// Whether `s` has the lexical shape `digits:digits`, regardless of order.
pub(crate) fn looks_like_window(s: &str) -> bool {
    match s.split_once(':') {
        Some((a, b)) => {
            let (a, b) = (a.trim(), b.trim());
            !a.is_empty()
                && !b.is_empty()
                && a.bytes().all(|c| c.is_ascii_digit())
                && b.bytes().all(|c| c.is_ascii_digit())
        }
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Window(TimeWindow),
    List(Vec<String>),
    Text(String),
}

impl ParamValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            ParamValue::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_window(&self) -> Option<TimeWindow> {
        match self {
            ParamValue::Window(w) => Some(*w),
            _ => None,
        }
    }

    /// List items; a bare text value reads as a one-element list.
    pub fn as_list(&self) -> Vec<String> {
        match self {
            ParamValue::List(items) => items.clone(),
            ParamValue::Text(t) => vec![t.clone()],
            _ => Vec::new(),
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ParamValue::Text(t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Number(n) => f.write_str(&format_number(*n)),
            ParamValue::Window(w) => write!(f, "{w}"),
            ParamValue::List(items) => f.write_str(&items.join(",")),
            ParamValue::Text(t) => f.write_str(t),
        }
    }
}

pub(crate) fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

/// Value schema for a parameter key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Number,
    List,
    Window,
    Text,
}

pub fn param_kind(key: &str) -> Option<ParamKind> {
    match key {
        "fps" | "conf" | "threshold" => Some(ParamKind::Number),
        "targets" | "target" | "prompts" => Some(ParamKind::List),
        "a" | "b" => Some(ParamKind::Window),
        "model" => Some(ParamKind::Text),
        _ => None,
    }
}

/// Ordered `key=value` pairs from a tag body. Unknown keys are kept as text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamMap {
    entries: Vec<(String, ParamValue)>,
}

impl ParamMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a new key; returns `false` (and leaves the map unchanged) if the key exists.
    pub fn insert(&mut self, key: impl Into<String>, value: ParamValue) -> bool {
        let key = key.into();
        if self.get(&key).is_some() {
            return false;
        }
        self.entries.push((key, value));
        true
    }

    /// Sets a key, replacing any existing value in place.
    pub fn set(&mut self, key: impl Into<String>, value: ParamValue) {
        let key = key.into();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&ParamValue> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamValue)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keys outside the known parameter schema.
    pub fn unknown_keys(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(k, _)| param_kind(k).is_none())
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

impl Serialize for ParamMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.entries.len()))?;
        for (k, v) in &self.entries {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ParamMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ParamMapVisitor;

        impl<'de> Visitor<'de> for ParamMapVisitor {
            type Value = ParamMap;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of tool parameters")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<ParamMap, A::Error> {
                let mut out = ParamMap::new();
                while let Some((k, v)) = access.next_entry::<String, ParamValue>()? {
                    if !out.insert(k.clone(), v) {
                        return Err(serde::de::Error::custom(format!("duplicate parameter {k}")));
                    }
                }
                Ok(out)
            }
        }

        deserializer.deserialize_map(ParamMapVisitor)
    }
}

/// One parsed tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: ToolId,
    #[serde(default)]
    pub video_ids: Vec<String>,
    #[serde(default)]
    pub window: Option<TimeWindow>,
    #[serde(default)]
    pub params: ParamMap,
    #[serde(default)]
    pub query: Option<String>,
}

impl ToolCall {
    pub fn new(tool: ToolId) -> Self {
        ToolCall { tool, video_ids: Vec::new(), window: None, params: ParamMap::new(), query: None }
    }

    pub fn on(mut self, video: impl Into<String>) -> Self {
        self.video_ids.push(video.into());
        self
    }

    pub fn window(mut self, window: TimeWindow) -> Self {
        self.window = Some(window);
        self
    }

    pub fn param(mut self, key: &str, value: ParamValue) -> Self {
        self.params.set(key, value);
        self
    }

    pub fn query(mut self, query: impl Into<String>) -> Self {
        self.query = Some(query.into());
        self
    }

    /// Canonical tag form. Parsing the output yields an equal call.
    pub fn to_tag(&self) -> String {
        let tag = self.tool.tag();
        let id_attr = if self.video_ids.is_empty() {
            String::new()
        } else {
            format!(" id=\"{}\"", self.video_ids.join(","))
        };
        let body = if self.tool.takes_query_body() {
            self.query.clone().unwrap_or_default()
        } else {
            let mut segments: Vec<String> = Vec::new();
            if let Some(w) = self.window {
                segments.push(w.to_string());
            }
            segments.extend(self.params.iter().map(|(k, v)| format!("{k}={v}")));
            segments.join(";")
        };
        let mut out = format!("<{tag}{id_attr}>{body}</{tag}>");
        if self.tool == ToolId::VideoReader {
            if let Some(q) = &self.query {
                out.push_str(&format!("<video_reader_question>{q}</video_reader_question>"));
            }
        }
        out
    }
}

/// Why one tag in a reply could not be turned into an action.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TagError {
    #[error("malformed tag: {0}")]
    MalformedTag(String),
    #[error("video_reader_question without a preceding video_reader")]
    OrphanQuestion,
    #[error("bad window: {0}")]
    BadWindow(String),
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("arity mismatch: {0}")]
    ArityMismatch(String),
}

/// A per-tag failure, located by byte offset in the reply text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagIssue {
    pub position: usize,
    pub tag: String,
    pub error: TagError,
}

impl fmt::Display for TagIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}> at byte {}: {}", self.tag, self.position, self.error)
    }
}

/// Structured form of one planner reply.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlannerReply {
    pub thinking: Option<String>,
    pub actions: Vec<ToolCall>,
    pub answer: Option<char>,
    pub paused: bool,
    pub trailing_garbage: Option<String>,
    pub issues: Vec<TagIssue>,
}

impl PlannerReply {
    /// Calls-then-pause, or answer-only.
    pub fn is_valid(&self) -> bool {
        let calls = !self.actions.is_empty() && self.paused && self.answer.is_none();
        let answer = self.answer.is_some() && self.actions.is_empty();
        calls || answer
    }

    pub fn is_mixed(&self) -> bool {
        self.answer.is_some() && !self.actions.is_empty()
    }

    /// Canonical text: thinking, calls, answer, then the pause marker. Issues and garbage are dropped.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(t) = &self.thinking {
            out.push_str(&format!("<thinking>{t}</thinking>"));
        }
        for a in &self.actions {
            out.push_str(&a.to_tag());
        }
        if let Some(a) = self.answer {
            out.push_str(&format!("<answer>{a}</answer>"));
        }
        if self.paused {
            out.push_str(PAUSE_MARKER);
        }
        out
    }
}
