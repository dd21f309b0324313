//! Tool call validation, dispatch and the normalized result model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::protocol::{ParamValue, TimeWindow, ToolCall, ToolId};
use crate::scalar::{normalize_similarity, ScalarError};
use crate::Score;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoRole {
    Ref,
    Candidate,
    Update,
    Premise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub duration: u32,
    pub role: VideoRole,
    #[serde(default)]
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("duplicate video id {0}")]
    DuplicateId(String),
    #[error("video {0} has zero duration")]
    ZeroDuration(String),
}

/// Videos addressable in one episode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoRegistry {
    videos: BTreeMap<String, VideoEntry>,
}

impl VideoRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, entry: VideoEntry) -> Result<(), RegistryError> {
        let id = id.into();
        if entry.duration == 0 {
            return Err(RegistryError::ZeroDuration(id));
        }
        if self.videos.contains_key(&id) {
            return Err(RegistryError::DuplicateId(id));
        }
        self.videos.insert(id, entry);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&VideoEntry> {
        self.videos.get(id)
    }

    pub fn duration(&self, id: &str) -> Option<u32> {
        self.videos.get(id).map(|v| v.duration)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.videos.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub count: u32,
    #[serde(default)]
    pub colors: Vec<String>,
    #[serde(default)]
    pub boxes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub t_ms: u32,
    pub objects: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub label: String,
    pub max_count: u32,
    pub typical_count: u32,
    #[serde(default)]
    pub colors: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detections {
    pub frames: Vec<Frame>,
    pub aggregate: Vec<LabelSummary>,
    /// Categories the call asked for, after alias resolution.
    #[serde(default)]
    pub prompted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Track {
    pub label: String,
    pub peak: u32,
    pub trajectory: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtitleLine {
    pub window: TimeWindow,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    ReaderAnswer { text: String },
    Timestamps { windows: Vec<TimeWindow> },
    Detections(Detections),
    TrackSummary { tracks: Vec<Track> },
    Similarity { score: Score },
    SubtitleHits { hits: Vec<SubtitleLine> },
    SubtitleText { text: String, #[serde(default)] note: Option<String> },
    SceneCuts { cuts: Vec<u32> },
    Relations { relations: Vec<String> },
}

impl Payload {
    /// Whether this payload variant is the one `tool` produces.
    pub fn matches(&self, tool: ToolId) -> bool {
        matches!(
            (tool, self),
            (ToolId::VideoReader, Payload::ReaderAnswer { .. })
                | (ToolId::TemporalGroundingAgent, Payload::Timestamps { .. })
                | (ToolId::SceneGraph, Payload::Detections(_))
                | (ToolId::ObjectTracker, Payload::TrackSummary { .. })
                | (ToolId::VisualSimilarity, Payload::Similarity { .. })
                | (ToolId::SubtitleRetriever, Payload::SubtitleHits { .. })
                | (ToolId::SubtitleExtractor, Payload::SubtitleText { .. })
                | (ToolId::SceneDetector, Payload::SceneCuts { .. })
                | (ToolId::SpatialRelation, Payload::Relations { .. })
        )
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Payload::ReaderAnswer { .. } => "reader_answer",
            Payload::Timestamps { .. } => "timestamps",
            Payload::Detections(_) => "detections",
            Payload::TrackSummary { .. } => "track_summary",
            Payload::Similarity { .. } => "similarity",
            Payload::SubtitleHits { .. } => "subtitle_hits",
            Payload::SubtitleText { .. } => "subtitle_text",
            Payload::SceneCuts { .. } => "scene_cuts",
            Payload::Relations { .. } => "relations",
        }
    }

    /// Checks the payload's own invariants (score range, timestamp bounds).
    pub fn check(&self, durations: &[u32]) -> Result<(), String> {
        match self {
            Payload::Similarity { score } if !(0.0..=1.0).contains(score) => {
                Err(format!("similarity {score} outside [0, 1]"))
            }
            Payload::Timestamps { windows } => {
                let limit = durations.first().copied().unwrap_or(u32::MAX);
                match windows.iter().find(|w| w.end > limit) {
                    Some(w) => Err(format!("timestamp {w} beyond duration {limit}")),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool: ToolId,
    pub video_ids: Vec<String>,
    pub window: Option<TimeWindow>,
    pub payload: Payload,
}

/// A [`ToolCall`] whose targets exist, windows are clamped and defaults filled.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedCall(ToolCall);

impl ResolvedCall {
    pub fn call(&self) -> &ToolCall {
        &self.0
    }

    pub fn into_call(self) -> ToolCall {
        self.0
    }

    pub fn tool(&self) -> ToolId {
        self.0.tool
    }

    pub fn video(&self) -> &str {
        &self.0.video_ids[0]
    }

    /// Effective window; resolved calls on windowed tools always carry one.
    pub fn window(&self) -> Option<TimeWindow> {
        self.0.window
    }

    pub fn list_param(&self, key: &str) -> Vec<String> {
        self.0.params.get(key).map(ParamValue::as_list).unwrap_or_default()
    }

    pub fn number_param(&self, key: &str) -> Option<f64> {
        self.0.params.get(key).and_then(ParamValue::as_number)
    }

    pub fn window_param(&self, key: &str) -> Option<TimeWindow> {
        self.0.params.get(key).and_then(ParamValue::as_window)
    }

    /// Wraps a call without validation. Intended for backend tests.
    pub fn assume_valid(call: ToolCall) -> Self {
        ResolvedCall(call)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ToolError {
    #[error("unknown video {0}")]
    UnknownVideo(String),
    #[error("no video id given and {0} videos are registered")]
    AmbiguousTarget(usize),
    #[error("tool {0} is not supported by this backend")]
    UnsupportedTool(ToolId),
    #[error("{tool} is missing required parameter {param}")]
    MissingParam { tool: ToolId, param: &'static str },
    #[error("{tool} failed: {cause}")]
    BackendFailure { tool: ToolId, cause: String },
}

fn windowed(tool: ToolId) -> bool {
    !matches!(
        tool,
        ToolId::TemporalGroundingAgent | ToolId::SubtitleRetriever | ToolId::SceneDetector | ToolId::VisualSimilarity
    )
}

/// Resolves a call against the registry and backend capabilities.
///
/// A missing id resolves to the sole registered video. Windows are clamped to
/// the video's duration (a missing window on a windowed tool becomes the whole
/// video), and sampling parameters get their prompt defaults: `fps=1`,
/// `threshold=0.6` for `scene_detector`; `fps=2`, `conf=0.25` for the detection tools.
pub fn validate_call(
    call: &ToolCall,
    registry: &VideoRegistry,
    capabilities: &BTreeSet<ToolId>,
) -> Result<ResolvedCall, ToolError> {
    if !capabilities.contains(&call.tool) {
        return Err(ToolError::UnsupportedTool(call.tool));
    }
    let mut call = call.clone();
    if call.video_ids.is_empty() {
        if registry.len() == 1 {
            call.video_ids.push(registry.ids().next().unwrap_or_default().to_string());
        } else {
            return Err(ToolError::AmbiguousTarget(registry.len()));
        }
    }
    let mut durations = Vec::with_capacity(call.video_ids.len());
    for id in &call.video_ids {
        let d = registry.duration(id).ok_or_else(|| ToolError::UnknownVideo(id.clone()))?;
        durations.push(d);
    }
    let tool = call.tool;
    if windowed(tool) {
        let d = durations[0];
        call.window = Some(call.window.map_or(TimeWindow::whole(d), |w| w.clamp_to(d)));
    }
    if tool == ToolId::VisualSimilarity {
        for (key, d) in [("a", durations[0]), ("b", *durations.get(1).unwrap_or(&durations[0]))] {
            let w = call.params.get(key).and_then(ParamValue::as_window).unwrap_or(TimeWindow::whole(d));
            call.params.set(key, ParamValue::Window(w.clamp_to(d)));
        }
    }
    let mut default = |key: &str, value: f64| {
        if call.params.get(key).is_none() {
            call.params.set(key, ParamValue::Number(value));
        }
    };
    match tool {
        ToolId::SceneDetector => {
            default("fps", 1.0);
            default("threshold", 0.6);
        }
        ToolId::SceneGraph | ToolId::ObjectTracker | ToolId::SpatialRelation => {
            default("fps", 2.0);
            default("conf", 0.25);
        }
        ToolId::VisualSimilarity => default("fps", 2.0),
        _ => {}
    }
    let has_targets = |c: &ToolCall| {
        ["targets", "target", "prompts"].iter().any(|k| c.params.get(k).is_some())
    };
    match tool {
        ToolId::SceneGraph | ToolId::SpatialRelation if !has_targets(&call) => {
            return Err(ToolError::MissingParam { tool, param: "targets" });
        }
        ToolId::ObjectTracker if !has_targets(&call) => {
            return Err(ToolError::MissingParam { tool, param: "target" });
        }
        ToolId::TemporalGroundingAgent | ToolId::SubtitleRetriever if call.query.is_none() => {
            return Err(ToolError::MissingParam { tool, param: "query" });
        }
        _ => {}
    }
    Ok(ResolvedCall(call))
}

/// Error raised by a backend for one call.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct BackendError(pub String);

/// What a backend returns for one call.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendResponse {
    pub payload: Payload,
    /// Transport retries spent before the payload arrived.
    pub retries: u32,
}

impl From<Payload> for BackendResponse {
    fn from(payload: Payload) -> Self {
        BackendResponse { payload, retries: 0 }
    }
}

/// Something that can execute tool calls: the simulated world, a remote
/// service, or a test double.
pub trait ToolBackend: Send + Sync {
    fn capabilities(&self) -> BTreeSet<ToolId>;

    fn invoke(&self, call: &ResolvedCall, registry: &VideoRegistry) -> Result<BackendResponse, BackendError>;
}

/// Trace data for one dispatched call.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatched {
    pub call: ToolCall,
    pub outcome: Result<ToolResult, ToolError>,
    pub elapsed_us: u64,
    pub bytes: usize,
    pub retries: u32,
}

/// Runs one resolved call on `backend`.
///
/// Backend errors, payload/tool mismatches and invariant violations all come
/// back as `BackendFailure` inside [`Dispatched::outcome`]; this never panics
/// on backend misbehaviour.
pub fn dispatch(call: &ResolvedCall, backend: &dyn ToolBackend, registry: &VideoRegistry) -> Dispatched {
    let started = Instant::now();
    let tool = call.tool();
    let mut retries = 0;
    let outcome = if !backend.capabilities().contains(&tool) {
        Err(ToolError::UnsupportedTool(tool))
    } else {
        match backend.invoke(call, registry) {
            Ok(resp) => {
                retries = resp.retries;
                let durations: Vec<u32> =
                    call.call().video_ids.iter().filter_map(|id| registry.duration(id)).collect();
                if !resp.payload.matches(tool) {
                    Err(ToolError::BackendFailure {
                        tool,
                        cause: format!("payload {} does not match tool", resp.payload.variant_name()),
                    })
                } else if let Err(cause) = resp.payload.check(&durations) {
                    Err(ToolError::BackendFailure { tool, cause })
                } else {
                    Ok(ToolResult {
                        tool,
                        video_ids: call.call().video_ids.clone(),
                        window: call.window(),
                        payload: resp.payload,
                    })
                }
            }
            Err(e) => Err(ToolError::BackendFailure { tool, cause: e.0 }),
        }
    };
    let bytes = match &outcome {
        Ok(r) => payload_bytes(&r.payload),
        Err(e) => e.to_string().len(),
    };
    Dispatched {
        call: call.call().clone(),
        outcome,
        elapsed_us: started.elapsed().as_micros() as u64,
        bytes,
        retries,
    }
}

fn payload_bytes(payload: &Payload) -> usize {
    crate::protocol::render_payload(payload).len()
}

/// Unit-interval similarity from a raw cosine, via `(raw + 1) / 2`.
pub fn normalize_similarity_score(raw: Score) -> Result<Score, ScalarError> {
    normalize_similarity(raw)
}

impl fmt::Display for VideoRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VideoRole::Ref => "ref",
            VideoRole::Candidate => "candidate",
            VideoRole::Update => "update",
            VideoRole::Premise => "premise",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::parse_tool_tag;

    fn registry(entries: &[(&str, u32)]) -> VideoRegistry {
        let mut r = VideoRegistry::new();
        for (id, d) in entries {
            r.insert(*id, VideoEntry { duration: *d, role: VideoRole::Candidate, source: String::new() }).unwrap();
        }
        r
    }

    fn all() -> BTreeSet<ToolId> {
        ToolId::ALL.into_iter().collect()
    }

    #[test]
    fn unknown_video_rejected() {
        let call = parse_tool_tag(r#"<scene_graph id="Z">0:10;prompts=cup</scene_graph>"#).unwrap();
        let err = validate_call(&call, &registry(&[("A", 60), ("B", 60)]), &all()).unwrap_err();
        assert_eq!(err, ToolError::UnknownVideo("Z".into()));
    }

    #[test]
    fn missing_id_resolves_or_is_ambiguous() {
        let call = parse_tool_tag("<subtitle_extractor>200:210</subtitle_extractor>").unwrap();
        let one = validate_call(&call, &registry(&[("A", 300)]), &all()).unwrap();
        assert_eq!(one.call().video_ids, vec!["A"]);
        let err = validate_call(&call, &registry(&[("A", 300), ("B", 300)]), &all()).unwrap_err();
        assert_eq!(err, ToolError::AmbiguousTarget(2));
    }

    #[test]
    fn scene_graph_defaults() {
        let call = parse_tool_tag(r#"<scene_graph id="A">0:10;prompts=cup</scene_graph>"#).unwrap();
        let r = validate_call(&call, &registry(&[("A", 60)]), &all()).unwrap();
        assert_eq!(r.number_param("conf"), Some(0.25));
        assert_eq!(r.number_param("fps"), Some(2.0));
        let det = parse_tool_tag(r#"<scene_detector id="A">threshold=0.5</scene_detector>"#).unwrap();
        let r = validate_call(&det, &registry(&[("A", 60)]), &all()).unwrap();
        assert_eq!(r.number_param("fps"), Some(1.0));
        assert_eq!(r.number_param("threshold"), Some(0.5));
    }

    #[test]
    fn reader_window_clamped() {
        let call = parse_tool_tag(
            "<video_reader id=\"A\">500:900</video_reader><video_reader_question>q</video_reader_question>",
        )
        .unwrap();
        let r = validate_call(&call, &registry(&[("A", 600)]), &all()).unwrap();
        assert_eq!(r.window(), Some(TimeWindow { start: 500, end: 600 }));
        let again = validate_call(r.call(), &registry(&[("A", 600)]), &all()).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn unsupported_tool() {
        let call = parse_tool_tag(r#"<object_tracker id="A">0:10;target=person</object_tracker>"#).unwrap();
        let caps: BTreeSet<_> = [ToolId::VideoReader].into_iter().collect();
        assert_eq!(
            validate_call(&call, &registry(&[("A", 60)]), &caps).unwrap_err(),
            ToolError::UnsupportedTool(ToolId::ObjectTracker)
        );
    }

    #[test]
    fn registry_invariants() {
        let mut r = registry(&[("A", 10)]);
        let e = VideoEntry { duration: 5, role: VideoRole::Ref, source: String::new() };
        assert_eq!(r.insert("A", e.clone()), Err(RegistryError::DuplicateId("A".into())));
        assert_eq!(
            r.insert("B", VideoEntry { duration: 0, ..e }),
            Err(RegistryError::ZeroDuration("B".into()))
        );
    }

    #[test]
    fn payload_tool_matching_is_exhaustive() {
        let samples = [
            Payload::ReaderAnswer { text: String::new() },
            Payload::Timestamps { windows: vec![] },
            Payload::Detections(Detections::default()),
            Payload::TrackSummary { tracks: vec![] },
            Payload::Similarity { score: 0.5 },
            Payload::SubtitleHits { hits: vec![] },
            Payload::SubtitleText { text: String::new(), note: None },
            Payload::SceneCuts { cuts: vec![] },
            Payload::Relations { relations: vec![] },
        ];
        for tool in ToolId::ALL {
            let n = samples.iter().filter(|p| p.matches(tool)).count();
            assert_eq!(n, 1, "{tool} should match exactly one payload variant");
        }
    }

    #[test]
    fn similarity_normalization_examples() {
        assert_eq!(normalize_similarity_score(1.0).unwrap(), 1.0);
        assert_eq!(normalize_similarity_score(0.0).unwrap(), 0.5);
        assert_eq!(normalize_similarity_score(-1.0).unwrap(), 0.0);
        assert!(normalize_similarity_score(1.5).is_err());
    }

    struct Liar;

    impl ToolBackend for Liar {
        fn capabilities(&self) -> BTreeSet<ToolId> {
            [ToolId::SceneGraph, ToolId::VisualSimilarity].into_iter().collect()
        }

        fn invoke(&self, call: &ResolvedCall, _: &VideoRegistry) -> Result<BackendResponse, BackendError> {
            match call.tool() {
                ToolId::SceneGraph => Ok(Payload::Similarity { score: 0.3 }.into()),
                _ => Ok(Payload::Similarity { score: 1.7 }.into()),
            }
        }
    }

    #[test]
    fn dispatch_turns_misbehaviour_into_failures() {
        let reg = registry(&[("A", 60), ("B", 60)]);
        let sg = validate_call(
            &parse_tool_tag(r#"<scene_graph id="A">0:10;prompts=cup</scene_graph>"#).unwrap(),
            &reg,
            &all(),
        )
        .unwrap();
        let d = dispatch(&sg, &Liar, &reg);
        assert!(matches!(d.outcome, Err(ToolError::BackendFailure { .. })));

        let vs = validate_call(
            &parse_tool_tag(r#"<visual_similarity id="A,B">a=0:10;b=0:10</visual_similarity>"#).unwrap(),
            &reg,
            &all(),
        )
        .unwrap();
        assert!(matches!(dispatch(&vs, &Liar, &reg).outcome, Err(ToolError::BackendFailure { .. })));

        let tr = ResolvedCall::assume_valid(
            parse_tool_tag(r#"<object_tracker id="A">0:10;target=cup</object_tracker>"#).unwrap(),
        );
        assert_eq!(dispatch(&tr, &Liar, &reg).outcome, Err(ToolError::UnsupportedTool(ToolId::ObjectTracker)));
    }
}
