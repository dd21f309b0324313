//! Tool simulators answering from ground truth through the perturbation model.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use vidagent_core::lexicon::{canonical_category, noun, noun_forms, number_word, plural};
use vidagent_core::protocol::{TimeWindow, ToolId};
use vidagent_core::tools::{
    BackendError, BackendResponse, Detection, Detections, Frame, LabelSummary, Payload, ResolvedCall,
    SubtitleLine, ToolBackend, Track, VideoRegistry,
};

use crate::perturb::PerturbationModel;
use crate::world::{similarity, Position, SimVideo, World};

/// Note attached to extractor output on videos without subtitles.
pub const NO_SUBTITLES_NOTE: &str = "video has no subtitle track";

/// Upper bound on sampled frames per scene_graph call; samples spread evenly.
pub const DEFAULT_MAX_FRAMES: usize = 32;

/// Canonical categories named in free text, in order of first mention.
pub fn mentioned_categories(text: &str) -> Vec<&'static str> {
    let mut hay = format!(" {} ", text.to_ascii_lowercase().replace(|c: char| !c.is_alphanumeric(), " "));
    let mut found: Vec<(usize, &'static str)> = Vec::new();
    for (form, category) in noun_forms() {
        let needle = format!(" {form} ");
        while let Some(pos) = hay.find(&needle) {
            if !found.iter().any(|(_, c)| *c == category) {
                found.push((pos, category));
            }
            hay.replace_range(pos + 1..pos + needle.len() - 1, &" ".repeat(form.len()));
        }
    }
    found.sort();
    found.into_iter().map(|(_, c)| c).collect()
}

fn words(text: &str) -> BTreeSet<String> {
    const STOP: [&str; 12] = ["a", "an", "the", "is", "are", "of", "in", "on", "to", "and", "where", "when"];
    text.to_ascii_lowercase()
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty() && !STOP.contains(w))
        .map(str::to_string)
        .collect()
}

fn canonical_list(items: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in items.iter().filter_map(|i| canonical_category(i)) {
        if !out.iter().any(|x| x == c) {
            out.push(c.to_string());
        }
    }
    out
}

/// The simulated tool suite over one immutable world.
#[derive(Debug, Clone)]
pub struct SimBackend {
    world: Arc<World>,
    perturbation: PerturbationModel,
    pub max_frames: usize,
}

impl SimBackend {
    pub fn new(world: Arc<World>, perturbation: PerturbationModel) -> Self {
        SimBackend { world, perturbation, max_frames: DEFAULT_MAX_FRAMES }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn perturbation(&self) -> &PerturbationModel {
        &self.perturbation
    }

    fn seed(&self) -> u64 {
        self.world.seed
    }

    /// Templated reader answer. Queried categories get a count sentence, or
    /// "not visible" when absent from the window; unqueried questions get a
    /// description of every visible object. Actions are always listed.
    pub fn video_reader(&self, video: &SimVideo, window: TimeWindow, question: &str) -> Payload {
        let queried = mentioned_categories(question);
        let visible = video.visible_objects(window);
        let p = &self.perturbation;
        let phrase = |category: &str, n: u32, color: &str| format!("{} {} ({color})", number_word(n), noun(category, n));
        let mut parts: Vec<String> = Vec::new();
        if queried.is_empty() {
            let described: Vec<String> = visible
                .iter()
                .map(|o| {
                    let color = p.reader_color(self.seed(), &video.id, window, &o.category, &o.color);
                    phrase(&o.category, o.count, &color)
                })
                .collect();
            if !described.is_empty() {
                parts.push(format!("Visible: {}.", described.join(", ")));
            }
        } else {
            let answers: Vec<String> = queried
                .iter()
                .map(|category| match visible.iter().find(|o| o.category == *category) {
                    Some(o) => {
                        let bias = p.reader_bias(self.seed(), &video.id, window, category);
                        let mut n = o.count as i64 + i64::from(bias);
                        // a miscount never turns a visible object into "none"
                        if n < 1 {
                            n = o.count as i64 + i64::from(bias.unsigned_abs().max(1));
                        }
                        let color = p.reader_color(self.seed(), &video.id, window, category, &o.color);
                        format!("I can see {}", phrase(category, n as u32, &color))
                    }
                    None => format!("{} not visible", plural(category)),
                })
                .collect();
            parts.push(format!("{}.", answers.join("; ")));
        }
        let actions: Vec<&str> = {
            let mut seen: Vec<&str> = Vec::new();
            for e in video.events_in(window) {
                if !seen.contains(&e.action.as_str()) {
                    seen.push(&e.action);
                }
            }
            seen
        };
        if actions.is_empty() {
            parts.push("Nothing is happening in this segment.".into());
        } else {
            parts.push(format!("Actions: {}.", actions.join(", ")));
        }
        Payload::ReaderAnswer { text: parts.join(" ") }
    }

    pub fn temporal_grounding(&self, video: &SimVideo, query: &str) -> Payload {
        let q = words(query);
        let cats: BTreeSet<&str> = mentioned_categories(query).into_iter().collect();
        let windows = video
            .events
            .iter()
            .filter(|e| {
                !words(&e.action).is_disjoint(&q)
                    || e.objects.iter().any(|o| o.count > 0 && cats.contains(o.category.as_str()))
            })
            .map(|e| e.window)
            .filter(|w| !self.perturbation.grounding_drops(self.seed(), &video.id, *w))
            .collect();
        Payload::Timestamps { windows }
    }

    fn frame_times(&self, window: TimeWindow, fps: f64) -> Vec<u32> {
        let start_ms = u64::from(window.start) * 1000;
        let end_ms = u64::from(window.end) * 1000;
        let step = (1000.0 / fps.max(1e-3)).max(1.0) as u64;
        let total = ((end_ms - start_ms) / step + 1) as usize;
        let take = total.min(self.max_frames.max(1));
        (0..take)
            .map(|i| {
                let idx = if take == 1 { 0 } else { i * (total - 1) / (take - 1) };
                (start_ms + idx as u64 * step).min(end_ms) as u32
            })
            .collect()
    }

    pub fn scene_graph(&self, video: &SimVideo, window: TimeWindow, prompts: &[String], fps: f64) -> Payload {
        let prompted = canonical_list(prompts);
        let loss: BTreeMap<&str, u32> = prompted
            .iter()
            .map(|c| (c.as_str(), self.perturbation.detector_loss(self.seed(), &video.id, window, c)))
            .collect();
        let mut frames = Vec::new();
        let mut per_label: BTreeMap<String, (Vec<u32>, BTreeSet<String>)> = BTreeMap::new();
        for t_ms in self.frame_times(window, fps) {
            let objects: Vec<Detection> = video
                .event_at(t_ms / 1000)
                .map(|e| {
                    e.objects
                        .iter()
                        .filter(|o| prompted.contains(&o.category))
                        .filter_map(|o| {
                            let count = o.count.saturating_sub(loss[o.category.as_str()]);
                            (count > 0).then(|| Detection {
                                label: o.category.clone(),
                                count,
                                colors: vec![o.color.clone()],
                                boxes: (0..count).map(|i| format!("{}#{}", o.position.as_str(), i + 1)).collect(),
                            })
                        })
                        .collect()
                })
                .unwrap_or_default();
            for d in &objects {
                let entry = per_label.entry(d.label.clone()).or_default();
                entry.0.push(d.count);
                entry.1.extend(d.colors.iter().cloned());
            }
            frames.push(Frame { t_ms, objects });
        }
        let aggregate = per_label
            .into_iter()
            .map(|(label, (counts, colors))| {
                let mut tally: BTreeMap<u32, usize> = BTreeMap::new();
                for c in &counts {
                    *tally.entry(*c).or_default() += 1;
                }
                let typical = tally.iter().max_by_key(|(c, n)| (**n, **c)).map_or(0, |(c, _)| *c);
                LabelSummary {
                    label,
                    max_count: counts.iter().copied().max().unwrap_or(0),
                    typical_count: typical,
                    colors: colors.into_iter().collect(),
                }
            })
            .collect();
        Payload::Detections(Detections { frames, aggregate, prompted })
    }

    /// True peak simultaneous count; no error channel.
    pub fn object_tracker(&self, video: &SimVideo, window: TimeWindow, targets: &[String]) -> Payload {
        let tracks = canonical_list(targets)
            .into_iter()
            .filter_map(|category| {
                let peak = video.peak_in(window, &category);
                let spans: Vec<TimeWindow> = video
                    .events_in(window)
                    .filter(|e| e.objects.iter().any(|o| o.category == category && o.count > 0))
                    .map(|e| e.window)
                    .collect();
                let first = spans.first()?.start.max(window.start);
                let last = spans.last()?.end.min(window.end);
                (peak > 0).then(|| Track { label: category, peak, trajectory: format!("visible {first}s-{last}s") })
            })
            .collect();
        Payload::TrackSummary { tracks }
    }

    /// Window-independent: the embeddings do not vary along the video.
    pub fn visual_similarity(&self, a: &SimVideo, b: &SimVideo) -> Payload {
        Payload::Similarity { score: similarity(a, b, self.world.config.alpha) }
    }

    pub fn subtitle_retrieve(&self, video: &SimVideo, query: &str) -> Payload {
        let q = words(query);
        let mut scored: Vec<(usize, &crate::world::SubtitleEntry)> = video
            .subtitles
            .iter()
            .map(|s| (words(&s.text).intersection(&q).count(), s))
            .filter(|(n, _)| *n > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.window.cmp(&b.1.window)));
        Payload::SubtitleHits {
            hits: scored.into_iter().map(|(_, s)| SubtitleLine { window: s.window, text: s.text.clone() }).collect(),
        }
    }

    pub fn subtitle_extract(&self, video: &SimVideo, window: TimeWindow) -> Payload {
        if !video.has_subtitles() {
            return Payload::SubtitleText { text: String::new(), note: Some(NO_SUBTITLES_NOTE.into()) };
        }
        let text =
            video.subtitles.iter().filter(|s| s.window.overlaps(&window)).map(|s| s.text.as_str()).collect::<Vec<_>>();
        Payload::SubtitleText { text: text.join(" "), note: None }
    }

    pub fn scene_detector(&self, video: &SimVideo, window: TimeWindow) -> Payload {
        let mut cuts: BTreeSet<u32> = BTreeSet::new();
        for e in &video.events {
            for t in [e.window.start, e.window.end] {
                if t > window.start && t < window.end && t < video.duration {
                    cuts.insert(t);
                }
            }
        }
        Payload::SceneCuts { cuts: cuts.into_iter().collect() }
    }

    pub fn spatial_relation(&self, video: &SimVideo, window: TimeWindow, prompts: &[String]) -> Payload {
        let wanted = canonical_list(prompts);
        let visible = video.visible_objects(window);
        let placed: Vec<(&str, Position)> = wanted
            .iter()
            .filter_map(|c| visible.iter().find(|o| o.category == *c).map(|o| (c.as_str(), o.position)))
            .collect();
        let mut relations = Vec::new();
        for (i, (a, pa)) in placed.iter().enumerate() {
            for (b, pb) in &placed[i + 1..] {
                let rel = match pa.cmp(pb) {
                    std::cmp::Ordering::Less => "left of",
                    std::cmp::Ordering::Greater => "right of",
                    std::cmp::Ordering::Equal => "next to",
                };
                relations.push(format!("{a} {rel} {b}"));
            }
        }
        Payload::Relations { relations }
    }
}

impl ToolBackend for SimBackend {
    fn capabilities(&self) -> BTreeSet<ToolId> {
        ToolId::ALL.into_iter().collect()
    }

    fn invoke(&self, call: &ResolvedCall, _registry: &VideoRegistry) -> Result<BackendResponse, BackendError> {
        let lookup = |id: &str| self.world.video(id).ok_or_else(|| BackendError(format!("video {id} not in world")));
        let video = lookup(call.video())?;
        let window = call.window().unwrap_or(TimeWindow::whole(video.duration));
        let query = call.call().query.clone().unwrap_or_default();
        let payload = match call.tool() {
            ToolId::VideoReader => self.video_reader(video, window, &query),
            ToolId::TemporalGroundingAgent => self.temporal_grounding(video, &query),
            ToolId::SceneGraph => {
                let fps = call.number_param("fps").unwrap_or(2.0);
                self.scene_graph(video, window, &prompt_list(call), fps)
            }
            ToolId::ObjectTracker => self.object_tracker(video, window, &prompt_list(call)),
            ToolId::VisualSimilarity => {
                let other = call.call().video_ids.get(1).ok_or_else(|| BackendError("second video missing".into()))?;
                self.visual_similarity(video, lookup(other)?)
            }
            ToolId::SubtitleRetriever => self.subtitle_retrieve(video, &query),
            ToolId::SubtitleExtractor => self.subtitle_extract(video, window),
            ToolId::SceneDetector => self.scene_detector(video, window),
            ToolId::SpatialRelation => self.spatial_relation(video, window, &prompt_list(call)),
        };
        Ok(payload.into())
    }
}

fn prompt_list(call: &ResolvedCall) -> Vec<String> {
    ["prompts", "targets", "target"].iter().flat_map(|k| call.list_param(k)).collect()
}
