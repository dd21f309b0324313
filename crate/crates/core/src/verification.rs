//! Verification layer: claims from tool results, cross-tool conflict detection,
//! narrowed re-reads, resolution, and the per-video evidence memory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::lexicon::{self, canonical_category, canonical_label, plural};
use crate::protocol::{format_score, ParamValue, TimeWindow, ToolCall, ToolId};
use crate::tools::{Payload, ToolResult, VideoRegistry};
use crate::Score;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClaimId(pub u32);

impl fmt::Display for ClaimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Count,
    Color,
    ActionPresent,
    EventWindow,
    SimilarityTo(String),
    SubtitleText,
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aspect::Count => f.write_str("count"),
            Aspect::Color => f.write_str("color"),
            Aspect::ActionPresent => f.write_str("action"),
            Aspect::EventWindow => f.write_str("event"),
            Aspect::SimilarityTo(o) => write!(f, "similarity_to {o}"),
            Aspect::SubtitleText => f.write_str("subtitle"),
        }
    }
}

/// What a claim is about: aspect, subject (category, action, query) and time scope.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeKey {
    pub aspect: Aspect,
    pub subject: String,
    pub scope: TimeWindow,
}

impl AttributeKey {
    pub fn same_attribute(&self, other: &AttributeKey) -> bool {
        self.aspect == other.aspect && self.subject == other.subject
    }
}

impl fmt::Display for AttributeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.subject.is_empty() {
            write!(f, "{}@{}", self.aspect, self.scope)
        } else {
            write!(f, "{}:{}@{}", self.aspect, self.subject, self.scope)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimValue {
    Count(u32),
    Label(String),
    Present(bool),
    Windows(Vec<TimeWindow>),
    Score(Score),
    Text(String),
}

impl ClaimValue {
    /// Whether two values disagree. Scores disagree beyond `score_threshold`.
    pub fn differs(&self, other: &ClaimValue, score_threshold: Score) -> bool {
        match (self, other) {
            (ClaimValue::Score(a), ClaimValue::Score(b)) => (a - b).abs() > score_threshold,
            (ClaimValue::Label(a), ClaimValue::Label(b)) => canonical_label(a) != canonical_label(b),
            (a, b) => a != b,
        }
    }

    pub fn as_count(&self) -> Option<u32> {
        match self {
            ClaimValue::Count(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_score(&self) -> Option<Score> {
        match self {
            ClaimValue::Score(s) => Some(*s),
            _ => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            ClaimValue::Label(l) => Some(l),
            _ => None,
        }
    }
}

impl fmt::Display for ClaimValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClaimValue::Count(n) => write!(f, "{n}"),
            ClaimValue::Label(l) => f.write_str(l),
            ClaimValue::Present(p) => f.write_str(if *p { "present" } else { "absent" }),
            ClaimValue::Windows(ws) if ws.is_empty() => f.write_str("none"),
            ClaimValue::Windows(ws) => {
                let parts: Vec<String> = ws.iter().map(ToString::to_string).collect();
                f.write_str(&parts.join(","))
            }
            ClaimValue::Score(s) => f.write_str(&format_score(*s)),
            ClaimValue::Text(t) => write!(f, "\"{t}\""),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimSource {
    Tool(ToolId),
    Resolution,
}

impl fmt::Display for ClaimSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClaimSource::Tool(t) => f.write_str(t.tag()),
            ClaimSource::Resolution => f.write_str("resolved"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Reliable,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: ClaimId,
    pub video: String,
    pub key: AttributeKey,
    pub value: ClaimValue,
    pub source: ClaimSource,
    pub turn: u32,
    pub confidence: Confidence,
    /// Produced by a conflict-triggered re-read.
    #[serde(default)]
    pub narrowed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationConfig {
    pub reliable_tools: BTreeSet<ToolId>,
    /// Similarity claims further apart than this conflict.
    pub similarity_threshold: Score,
    /// Cap on re-read calls per conflict.
    pub max_reread_calls: usize,
    /// Upper bound in seconds on a narrowed re-read window.
    pub narrow_cap_secs: u32,
    /// The narrowed window is at most `duration / narrow_fraction` seconds (rounded up).
    pub narrow_fraction: u32,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            reliable_tools: [ToolId::ObjectTracker, ToolId::SceneGraph, ToolId::SubtitleExtractor]
                .into_iter()
                .collect(),
            similarity_threshold: 0.15,
            max_reread_calls: 2,
            narrow_cap_secs: 10,
            narrow_fraction: 5,
        }
    }
}

impl VerificationConfig {
    pub fn confidence(&self, tool: ToolId) -> Confidence {
        if self.reliable_tools.contains(&tool) {
            Confidence::Reliable
        } else {
            Confidence::Noisy
        }
    }
}

/// Scope used for claims that describe a whole video (e.g. grounding results).
pub const WHOLE_VIDEO: TimeWindow = TimeWindow { start: 0, end: u32::MAX };

fn reader_patterns() -> &'static (Regex, Regex) {
    static RE: OnceLock<(Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        let forms: Vec<String> = lexicon::noun_forms().into_iter().map(|(f, _)| regex::escape(&f)).collect();
        let colors = lexicon::COLORS.join("|");
        let count = format!(
            r"(?i)\b(\d+|zero|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|thirteen|fourteen|fifteen|sixteen|seventeen|eighteen|nineteen|twenty)\s+(?:({colors})\s+)?({})\b(?:\s*\(({colors})\))?(\s+not\s+visible)?",
            forms.join("|")
        );
        (
            Regex::new(&count).expect("count pattern"),
            Regex::new(r"(?i)\bactions?(?:\s+seen)?:\s*([^.;\n]+)").expect("action pattern"),
        )
    })
}

/// A claim before it is admitted to memory; `id` is assigned by [`EvidenceMemory::admit`].
fn draft(video: &str, key: AttributeKey, value: ClaimValue, tool: ToolId, turn: u32, cfg: &VerificationConfig) -> Claim {
    Claim {
        id: ClaimId(0),
        video: video.to_string(),
        key,
        value,
        source: ClaimSource::Tool(tool),
        turn,
        confidence: cfg.confidence(tool),
        narrowed: false,
    }
}

fn reader_claims(text: &str, video: &str, scope: TimeWindow, turn: u32, cfg: &VerificationConfig) -> Vec<Claim> {
    let (count_re, action_re) = reader_patterns();
    let mut counts: BTreeMap<&'static str, BTreeSet<u32>> = BTreeMap::new();
    let mut colors: BTreeMap<&'static str, BTreeSet<String>> = BTreeMap::new();
    for cap in count_re.captures_iter(text) {
        if cap.get(5).is_some() {
            continue;
        }
        let Some(category) = canonical_category(&cap[3]) else { continue };
        let Some(n) = lexicon::parse_number(&cap[1]) else { continue };
        counts.entry(category).or_default().insert(n);
        if let Some(c) = cap.get(2).or(cap.get(4)) {
            colors.entry(category).or_default().insert(c.as_str().to_ascii_lowercase());
        }
    }
    let key = |aspect: Aspect, subject: &str| AttributeKey { aspect, subject: subject.to_string(), scope };
    let mut out = Vec::new();
    // contradictory mentions inside one answer are dropped rather than guessed
    for (category, ns) in &counts {
        if ns.len() == 1 {
            let n = *ns.iter().next().unwrap_or(&0);
            out.push(draft(video, key(Aspect::Count, category), ClaimValue::Count(n), ToolId::VideoReader, turn, cfg));
        }
    }
    for (category, cs) in &colors {
        if cs.len() == 1 {
            let c = cs.iter().next().cloned().unwrap_or_default();
            out.push(draft(video, key(Aspect::Color, category), ClaimValue::Label(c), ToolId::VideoReader, turn, cfg));
        }
    }
    for cap in action_re.captures_iter(text) {
        for label in cap[1].split(',').map(canonical_label).filter(|l| !l.is_empty() && l != "none") {
            out.push(draft(
                video,
                key(Aspect::ActionPresent, &label),
                ClaimValue::Present(true),
                ToolId::VideoReader,
                turn,
                cfg,
            ));
        }
    }
    out
}

fn call_categories(call: &ToolCall, keys: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for k in keys {
        for item in call.params.get(k).map(ParamValue::as_list).unwrap_or_default() {
            let c = canonical_label(&item);
            if !c.is_empty() && !out.contains(&c) {
                out.push(c);
            }
        }
    }
    out
}

/// Turns one tool result into comparable claims.
///
/// Unparseable reader text yields no claims; "not visible" never becomes a zero count.
pub fn extract_claims(result: &ToolResult, call: &ToolCall, turn: u32, cfg: &VerificationConfig) -> Vec<Claim> {
    let Some(video) = result.video_ids.first() else { return Vec::new() };
    let scope = result.window.or(call.window).unwrap_or(WHOLE_VIDEO);
    let key = |aspect: Aspect, subject: &str| AttributeKey { aspect, subject: subject.to_string(), scope };
    let tool = result.tool;
    match &result.payload {
        Payload::ReaderAnswer { text } => reader_claims(text, video, scope, turn, cfg),
        Payload::Detections(d) => {
            let mut prompted: Vec<String> = d.prompted.iter().map(|p| canonical_label(p)).collect();
            if prompted.is_empty() {
                prompted = call_categories(call, &["prompts", "targets", "target"]);
            }
            let mut out = Vec::new();
            for category in prompted.iter().fold(Vec::<&String>::new(), |mut acc, c| {
                if !acc.contains(&c) {
                    acc.push(c);
                }
                acc
            }) {
                let summary = d.aggregate.iter().find(|s| canonical_label(&s.label) == *category);
                let n = summary.map_or(0, |s| s.max_count);
                out.push(draft(video, key(Aspect::Count, category), ClaimValue::Count(n), tool, turn, cfg));
                if let Some(s) = summary.filter(|s| s.colors.len() == 1) {
                    out.push(draft(
                        video,
                        key(Aspect::Color, category),
                        ClaimValue::Label(s.colors[0].to_ascii_lowercase()),
                        tool,
                        turn,
                        cfg,
                    ));
                }
            }
            out
        }
        Payload::TrackSummary { tracks } => {
            let mut subjects = call_categories(call, &["target", "targets", "prompts"]);
            for t in tracks {
                let l = canonical_label(&t.label);
                if !subjects.contains(&l) {
                    subjects.push(l);
                }
            }
            subjects
                .iter()
                .map(|s| {
                    let peak = tracks.iter().filter(|t| canonical_label(&t.label) == *s).map(|t| t.peak).max();
                    draft(video, key(Aspect::Count, s), ClaimValue::Count(peak.unwrap_or(0)), tool, turn, cfg)
                })
                .collect()
        }
        Payload::Similarity { score } => match result.video_ids.get(1) {
            Some(other) => {
                let scope = call.params.get("a").and_then(ParamValue::as_window).unwrap_or(scope);
                vec![draft(
                    video,
                    AttributeKey { aspect: Aspect::SimilarityTo(other.clone()), subject: String::new(), scope },
                    ClaimValue::Score(*score),
                    tool,
                    turn,
                    cfg,
                )]
            }
            None => Vec::new(),
        },
        Payload::Timestamps { windows } => {
            let subject = canonical_label(call.query.as_deref().unwrap_or_default());
            vec![draft(video, key(Aspect::EventWindow, &subject), ClaimValue::Windows(windows.clone()), tool, turn, cfg)]
        }
        Payload::SubtitleText { text, .. } => {
            vec![draft(video, key(Aspect::SubtitleText, ""), ClaimValue::Text(text.clone()), tool, turn, cfg)]
        }
        Payload::SubtitleHits { .. } | Payload::SceneCuts { .. } | Payload::Relations { .. } => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub video: String,
    pub aspect: Aspect,
    pub subject: String,
    /// Intersection of the scopes of the first disagreeing pair.
    pub overlap: TimeWindow,
    pub claims: Vec<Claim>,
    pub turn: u32,
}

impl Conflict {
    pub fn key(&self) -> AttributeKey {
        AttributeKey { aspect: self.aspect.clone(), subject: self.subject.clone(), scope: self.overlap }
    }

    pub fn tools(&self) -> BTreeSet<ToolId> {
        self.claims
            .iter()
            .filter_map(|c| match c.source {
                ClaimSource::Tool(t) => Some(t),
                ClaimSource::Resolution => None,
            })
            .collect()
    }

    /// Shape check: ≥2 claims from ≥2 tools, shared video/attribute, overlapping scopes, some disagreement.
    pub fn is_sound(&self, score_threshold: Score) -> bool {
        self.claims.len() >= 2
            && self.tools().len() >= 2
            && self.claims.iter().all(|c| {
                c.video == self.video
                    && c.key.aspect == self.aspect
                    && c.key.subject == self.subject
                    && c.key.scope.overlaps(&self.overlap)
            })
            && self
                .claims
                .iter()
                .any(|a| self.claims.iter().any(|b| a.value.differs(&b.value, score_threshold)))
    }
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> =
            self.claims.iter().map(|c| format!("{}={} ({})", c.source, c.value, c.key.scope)).collect();
        let subject = if self.subject.is_empty() { String::new() } else { format!(" {}", self.subject) };
        write!(f, "Conflict on {} {}{}: {}", self.video, self.aspect, subject, parts.join(", "))
    }
}

fn comparable(a: &Claim, b: &Claim) -> bool {
    a.video == b.video
        && a.key.same_attribute(&b.key)
        && a.key.scope.overlaps(&b.key.scope)
        && matches!((a.source, b.source), (ClaimSource::Tool(x), ClaimSource::Tool(y)) if x != y)
}

/// Cross-tool disagreements between `new_claims` and live memory (or earlier
/// claims of the same batch). One conflict per (video, aspect, subject).
pub fn detect_conflicts(
    memory: &EvidenceMemory,
    new_claims: &[Claim],
    turn: u32,
    cfg: &VerificationConfig,
) -> Vec<Conflict> {
    let mut out: Vec<Conflict> = Vec::new();
    for (i, c) in new_claims.iter().enumerate() {
        if c.source == ClaimSource::Resolution {
            continue;
        }
        let prior = memory.live_claims(&c.video).chain(new_claims[..i].iter());
        for p in prior {
            if !comparable(c, p) || !c.value.differs(&p.value, cfg.similarity_threshold) {
                continue;
            }
            let existing = out
                .iter_mut()
                .find(|x| x.video == c.video && x.aspect == c.key.aspect && x.subject == c.key.subject);
            match existing {
                Some(x) => {
                    for claim in [p, c] {
                        if !x.claims.iter().any(|k| k.id == claim.id) {
                            x.claims.push(claim.clone());
                        }
                    }
                }
                None => out.push(Conflict {
                    video: c.video.clone(),
                    aspect: c.key.aspect.clone(),
                    subject: c.key.subject.clone(),
                    overlap: p.key.scope.intersection(&c.key.scope).unwrap_or(c.key.scope),
                    claims: vec![p.clone(), c.clone()],
                    turn,
                }),
            }
        }
    }
    out
}

/// The narrowed window for a re-read: the first `min(cap, ceil(duration / fraction))`
/// seconds of the overlap.
pub fn narrowed_window(overlap: TimeWindow, duration: u32, cfg: &VerificationConfig) -> TimeWindow {
    let overlap = overlap.clamp_to(duration);
    let span = cfg.narrow_cap_secs.min(duration.div_ceil(cfg.narrow_fraction.max(1))).max(1);
    TimeWindow { start: overlap.start, end: overlap.end.min(overlap.start.saturating_add(span)) }
}

/// Focused re-read calls on a narrowed window: a reader question on the
/// disputed attribute plus the reliable channel for it.
pub fn plan_reread(conflict: &Conflict, registry: &VideoRegistry, cfg: &VerificationConfig) -> Vec<ToolCall> {
    let Some(duration) = registry.duration(&conflict.video) else { return Vec::new() };
    let w = narrowed_window(conflict.overlap, duration, cfg);
    let reader = |q: String| ToolCall::new(ToolId::VideoReader).on(conflict.video.clone()).window(w).query(q);
    let subject = &conflict.subject;
    let mut calls = match &conflict.aspect {
        Aspect::Count => vec![
            reader(format!("How many {} are visible?", plural(subject))),
            ToolCall::new(ToolId::ObjectTracker)
                .on(conflict.video.clone())
                .window(w)
                .param("target", ParamValue::List(vec![subject.clone()])),
        ],
        Aspect::Color => vec![
            reader(format!("What color is the {subject}?")),
            ToolCall::new(ToolId::SceneGraph)
                .on(conflict.video.clone())
                .window(w)
                .param("prompts", ParamValue::List(vec![subject.clone()])),
        ],
        Aspect::ActionPresent => vec![reader(format!("Is anyone {subject}? Describe the actions shown."))],
        Aspect::SimilarityTo(other) => {
            let other_w = registry.duration(other).map_or(w, |d| narrowed_window(conflict.overlap, d, cfg));
            vec![ToolCall::new(ToolId::VisualSimilarity)
                .on(conflict.video.clone())
                .on(other.clone())
                .param("a", ParamValue::Window(w))
                .param("b", ParamValue::Window(other_w))]
        }
        Aspect::SubtitleText => vec![ToolCall::new(ToolId::SubtitleExtractor).on(conflict.video.clone()).window(w)],
        Aspect::EventWindow => vec![reader(format!("Does this segment show {subject}?"))],
    };
    calls.truncate(cfg.max_reread_calls);
    calls
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    ReliableReread,
    Majority,
    LatestNarrowed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub video: String,
    pub aspect: Aspect,
    pub subject: String,
    pub scope: TimeWindow,
    pub value: ClaimValue,
    pub rationale: Rationale,
    pub superseded: Vec<ClaimId>,
    pub turn: u32,
}

impl Resolution {
    /// The resolution as a reliable claim.
    pub fn as_claim(&self) -> Claim {
        Claim {
            id: ClaimId(0),
            video: self.video.clone(),
            key: AttributeKey { aspect: self.aspect.clone(), subject: self.subject.clone(), scope: self.scope },
            value: self.value.clone(),
            source: ClaimSource::Resolution,
            turn: self.turn,
            confidence: Confidence::Reliable,
            narrowed: true,
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let why = match self.rationale {
            Rationale::ReliableReread => "reliable re-read",
            Rationale::Majority => "majority",
            Rationale::LatestNarrowed => "latest narrowed read",
        };
        let subject = if self.subject.is_empty() { String::new() } else { format!(" {}", self.subject) };
        write!(f, "Resolved {} {}{} = {} ({why})", self.video, self.aspect, subject, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("unresolved: {0}")]
pub struct Unresolved(pub Conflict);

/// Reconciles a conflict with the claims its re-read produced.
///
/// Precedence: a reliable re-read claim, then a strict majority over all
/// claims involved, then the latest narrowed claim.
pub fn resolve(
    conflict: &Conflict,
    reread_claims: &[Claim],
    turn: u32,
    cfg: &VerificationConfig,
) -> Result<Resolution, Unresolved> {
    let relevant: Vec<&Claim> = reread_claims
        .iter()
        .filter(|c| c.video == conflict.video && c.key.aspect == conflict.aspect && c.key.subject == conflict.subject)
        .collect();
    let Some(latest) = relevant.last() else { return Err(Unresolved(conflict.clone())) };
    let (value, rationale) = if let Some(r) = relevant.iter().rev().find(|c| c.confidence == Confidence::Reliable) {
        (r.value.clone(), Rationale::ReliableReread)
    } else {
        let all: Vec<&Claim> = conflict.claims.iter().chain(relevant.iter().copied()).collect();
        let mut tallies: Vec<(&ClaimValue, usize)> = Vec::new();
        for c in &all {
            match tallies.iter_mut().find(|(v, _)| !v.differs(&c.value, cfg.similarity_threshold)) {
                Some(t) => t.1 += 1,
                None => tallies.push((&c.value, 1)),
            }
        }
        tallies.sort_by_key(|t| std::cmp::Reverse(t.1));
        match tallies.as_slice() {
            [(v, n), rest @ ..] if rest.first().is_none_or(|(_, m)| m < n) => ((*v).clone(), Rationale::Majority),
            _ => (latest.value.clone(), Rationale::LatestNarrowed),
        }
    };
    let superseded = conflict
        .claims
        .iter()
        .chain(relevant.iter().copied())
        .filter(|c| c.value.differs(&value, cfg.similarity_threshold))
        .map(|c| c.id)
        .collect();
    Ok(Resolution {
        video: conflict.video.clone(),
        aspect: conflict.aspect.clone(),
        subject: conflict.subject.clone(),
        scope: conflict.overlap,
        value,
        rationale,
        superseded,
        turn,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoEvidence {
    pub claims: Vec<Claim>,
    pub summary: String,
    pub raw_bytes: usize,
}

/// Per-video claim store with budget-bounded summaries. Claims are never removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceMemory {
    videos: BTreeMap<String, VideoEvidence>,
    superseded: BTreeSet<ClaimId>,
    next_id: u32,
    summary_budget: usize,
}

impl EvidenceMemory {
    pub fn new(summary_budget: usize) -> Self {
        EvidenceMemory { videos: BTreeMap::new(), superseded: BTreeSet::new(), next_id: 1, summary_budget }
    }

    /// Assigns fresh ids to drafted claims. Does not store them.
    pub fn admit(&mut self, mut claims: Vec<Claim>) -> Vec<Claim> {
        for c in &mut claims {
            c.id = ClaimId(self.next_id);
            self.next_id += 1;
        }
        claims
    }

    pub fn videos(&self) -> impl Iterator<Item = (&str, &VideoEvidence)> {
        self.videos.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn video(&self, id: &str) -> Option<&VideoEvidence> {
        self.videos.get(id)
    }

    pub fn claims(&self, video: &str) -> &[Claim] {
        self.videos.get(video).map_or(&[], |v| v.claims.as_slice())
    }

    pub fn all_claims(&self) -> impl Iterator<Item = &Claim> {
        self.videos.values().flat_map(|v| v.claims.iter())
    }

    pub fn claim(&self, id: ClaimId) -> Option<&Claim> {
        self.all_claims().find(|c| c.id == id)
    }

    pub fn is_superseded(&self, id: ClaimId) -> bool {
        self.superseded.contains(&id)
    }

    pub fn live_claims<'a>(&'a self, video: &str) -> impl Iterator<Item = &'a Claim> + 'a {
        self.claims(video).iter().filter(move |c| !self.superseded.contains(&c.id))
    }

    pub fn claim_count(&self) -> usize {
        self.videos.values().map(|v| v.claims.len()).sum()
    }

    pub fn summary_budget(&self) -> usize {
        self.summary_budget
    }

    pub fn add_raw_bytes(&mut self, video: &str, bytes: usize) {
        self.videos.entry(video.to_string()).or_default().raw_bytes += bytes;
    }

    pub fn raw_bytes(&self) -> usize {
        self.videos.values().map(|v| v.raw_bytes).sum()
    }

    /// Appends claims, records resolutions as reliable claims, marks losers
    /// superseded and regenerates the affected summaries.
    pub fn aggregate(&mut self, claims: Vec<Claim>, resolutions: &[Resolution]) -> Vec<Claim> {
        let mut touched: BTreeSet<String> = BTreeSet::new();
        for c in claims {
            touched.insert(c.video.clone());
            self.videos.entry(c.video.clone()).or_default().claims.push(c);
        }
        let resolved = self.admit(resolutions.iter().map(Resolution::as_claim).collect());
        for (r, c) in resolutions.iter().zip(&resolved) {
            self.superseded.extend(r.superseded.iter().copied());
            touched.insert(c.video.clone());
            self.videos.entry(c.video.clone()).or_default().claims.push(c.clone());
        }
        for v in touched {
            self.refresh_summary(&v);
        }
        resolved
    }

    fn refresh_summary(&mut self, video: &str) {
        let budget = self.summary_budget;
        let mut latest: BTreeMap<(Aspect, String), &Claim> = BTreeMap::new();
        for c in self.live_claims(video) {
            latest.insert((c.key.aspect.clone(), c.key.subject.clone()), c);
        }
        // newest attributes first so that truncation drops stale lines
        let mut lines: Vec<(u32, String)> = latest
            .values()
            .map(|c| {
                let subject = if c.key.subject.is_empty() { String::new() } else { format!(" {}", c.key.subject) };
                let scope = if c.key.scope == WHOLE_VIDEO { String::new() } else { format!(" @{}", c.key.scope) };
                (c.id.0, format!("{}{}{} = {} [{}]", c.key.aspect, subject, scope, c.value, c.source))
            })
            .collect();
        lines.sort_by_key(|l| std::cmp::Reverse(l.0));
        let mut kept: Vec<String> = Vec::new();
        let mut used = 0;
        let mut dropped = 0;
        for (_, l) in lines {
            let cost = l.len() + 1;
            if used + cost + 24 <= budget {
                used += cost;
                kept.push(l);
            } else {
                dropped += 1;
            }
        }
        let mut summary = kept.join("\n");
        if dropped > 0 {
            let marker = format!("(+{dropped} older attributes)");
            if summary.len() + marker.len() < budget {
                if !summary.is_empty() {
                    summary.push('\n');
                }
                summary.push_str(&marker);
            }
        }
        let summary = crate::protocol::truncate_to_budget(&summary, budget);
        if let Some(v) = self.videos.get_mut(video) {
            v.summary = summary;
        }
    }

    /// Planner-visible memory block: one section per video.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (id, v) in &self.videos {
            if v.summary.is_empty() {
                continue;
            }
            out.push_str(&format!("[{id}]\n{}\n", v.summary));
        }
        out
    }

    /// Latest live claim on (video, aspect, subject) matching `pred`.
    pub fn latest<'a>(
        &'a self,
        video: &str,
        aspect: &Aspect,
        subject: &str,
        pred: impl Fn(&Claim) -> bool,
    ) -> Option<&'a Claim> {
        self.live_claims(video)
            .filter(|c| c.key.aspect == *aspect && c.key.subject == subject && pred(c))
            .last()
    }
}
