//! Ground-truth videos and the world generator.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use vidagent_core::lexicon::{canonical_category, CATEGORIES, COLORS};
use vidagent_core::protocol::TimeWindow;
use vidagent_core::task::TaskKind;
use vidagent_core::tools::{normalize_similarity_score, VideoEntry, VideoRegistry, VideoRole};
use vidagent_core::Score;

pub const ACTIONS: [&str; 20] = [
    "pouring water",
    "chopping vegetables",
    "playing guitar",
    "riding a bike",
    "walking the dog",
    "reading a book",
    "juggling",
    "dancing",
    "washing dishes",
    "painting a wall",
    "typing on a laptop",
    "skateboarding",
    "folding laundry",
    "watering plants",
    "shooting hoops",
    "stretching",
    "sweeping the floor",
    "carrying groceries",
    "drinking coffee",
    "playing chess",
];

pub const SUBTITLE_LINES: [&str; 10] = [
    "give me a hand",
    "watch out for the step",
    "where did you put the keys",
    "let's start over",
    "it is almost ready",
    "turn the music down",
    "we need more cups",
    "see you tomorrow",
    "hold the door please",
    "that was the last one",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Left,
    Center,
    Right,
}

impl Position {
    pub const ALL: [Position; 3] = [Position::Left, Position::Center, Position::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Position::Left => "left",
            Position::Center => "center",
            Position::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub category: String,
    pub count: u32,
    pub color: String,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub window: TimeWindow,
    pub action: String,
    pub objects: Vec<ObjectInstance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtitleEntry {
    pub window: TimeWindow,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SequenceKey {
    pub group: u32,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimVideo {
    pub id: String,
    pub duration: u32,
    pub events: Vec<Event>,
    #[serde(default)]
    pub subtitles: Vec<SubtitleEntry>,
    pub style_vector: Vec<Score>,
    pub content_vector: Vec<Score>,
    pub show_id: String,
    #[serde(default)]
    pub sequence_key: Option<SequenceKey>,
    /// Videos sharing a group are near-duplicates of each other.
    #[serde(default)]
    pub near_duplicate_group: Option<u32>,
    /// Reserved; no generator fills it.
    #[serde(default)]
    pub motion_labels: BTreeSet<String>,
}

fn norm(v: &[Score]) -> Score {
    v.iter().map(|x| x * x).sum::<Score>().sqrt()
}

impl SimVideo {
    /// The video's action: every event of a generated video carries the same label.
    pub fn action(&self) -> Option<&str> {
        self.events.first().map(|e| e.action.as_str())
    }

    pub fn events_in(&self, window: TimeWindow) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.window.overlaps(&window))
    }

    pub fn event_at(&self, t: u32) -> Option<&Event> {
        self.events.iter().find(|e| e.window.contains(t))
    }

    /// Peak simultaneous count of `category` over events overlapping `window`.
    pub fn peak_in(&self, window: TimeWindow, category: &str) -> u32 {
        self.events_in(window)
            .flat_map(|e| e.objects.iter())
            .filter(|o| o.category == category)
            .map(|o| o.count)
            .max()
            .unwrap_or(0)
    }

    /// Peak count over the whole video.
    pub fn true_count(&self, category: &str) -> u32 {
        self.peak_in(TimeWindow::whole(self.duration), category)
    }

    /// Objects with a positive count in `window`, one per category, in first-seen order.
    pub fn visible_objects(&self, window: TimeWindow) -> Vec<&ObjectInstance> {
        let mut out: Vec<&ObjectInstance> = Vec::new();
        for o in self.events_in(window).flat_map(|e| e.objects.iter()).filter(|o| o.count > 0) {
            match out.iter_mut().find(|x| x.category == o.category) {
                Some(x) if x.count < o.count => *x = o,
                Some(_) => {}
                None => out.push(o),
            }
        }
        out
    }

    pub fn has_subtitles(&self) -> bool {
        !self.subtitles.is_empty()
    }

    pub fn check(&self) -> Result<(), String> {
        if self.duration == 0 {
            return Err(format!("{}: zero duration", self.id));
        }
        if let Some(e) = self.events.iter().find(|e| e.window.end > self.duration || e.window.start > e.window.end) {
            return Err(format!("{}: event window {} outside 0:{}", self.id, e.window, self.duration));
        }
        for (name, v) in [("style", &self.style_vector), ("content", &self.content_vector)] {
            if (norm(v) - 1.0).abs() > 1e-9 {
                return Err(format!("{}: {name} vector not unit norm", self.id));
            }
        }
        Ok(())
    }
}

/// Style/content mix used for similarity. Window-independent.
pub fn embedding(video: &SimVideo, alpha: Score) -> Vec<Score> {
    video
        .style_vector
        .iter()
        .zip(&video.content_vector)
        .map(|(s, c)| alpha * s + (1.0 - alpha) * c)
        .collect()
}

/// Unit-interval similarity of two videos' mixed embeddings.
pub fn similarity(a: &SimVideo, b: &SimVideo, alpha: Score) -> Score {
    if a.id == b.id {
        return 1.0;
    }
    let (ea, eb) = (embedding(a, alpha), embedding(b, alpha));
    let (na, nb) = (norm(&ea), norm(&eb));
    if na == 0.0 || nb == 0.0 {
        return 0.5;
    }
    let cos = (ea.iter().zip(&eb).map(|(x, y)| x * y).sum::<Score>() / (na * nb)).clamp(-1.0, 1.0);
    normalize_similarity_score(cos).unwrap_or(0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub videos: usize,
    /// Inclusive duration range in seconds.
    pub duration: (u32, u32),
    pub events_per_video: (usize, usize),
    /// Object categories per video (inclusive range).
    pub objects_per_video: (usize, usize),
    /// Object counts are drawn from `0..=max_count`.
    pub max_count: u32,
    pub actions: Vec<String>,
    pub categories: Vec<String>,
    pub shows: usize,
    pub sequence_groups: usize,
    /// Clips per sequence group (inclusive range).
    pub sequence_len: (usize, usize),
    pub near_duplicate_pairs: usize,
    pub subtitle_fraction: f64,
    pub embedding_dim: usize,
    /// Weight of the style vector in the similarity embedding.
    pub alpha: Score,
    /// Kinds the world must be able to generate tasks for.
    pub kinds: Vec<TaskKind>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            videos: 40,
            duration: (30, 120),
            events_per_video: (1, 4),
            objects_per_video: (2, 4),
            max_count: 5,
            actions: ACTIONS.iter().map(|s| s.to_string()).collect(),
            categories: CATEGORIES.iter().map(|s| s.to_string()).collect(),
            shows: 8,
            sequence_groups: 3,
            sequence_len: (3, 4),
            near_duplicate_pairs: 4,
            subtitle_fraction: 0.3,
            embedding_dim: 128,
            alpha: 0.5,
            kinds: TaskKind::GENERATED.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("infeasible world config: {0}")]
    InfeasibleConfig(String),
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error("world file: {0}")]
    Format(String),
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InfeasibleConfig(m.to_string()));
        if self.videos == 0 {
            return bad("no videos");
        }
        if self.duration.0 == 0 || self.duration.0 > self.duration.1 {
            return bad("duration range must be positive and ordered");
        }
        if self.events_per_video.0 == 0 || self.events_per_video.0 > self.events_per_video.1 {
            return bad("events per video must be positive and ordered");
        }
        if self.objects_per_video.0 > self.objects_per_video.1 || self.objects_per_video.1 > self.categories.len() {
            return bad("objects per video must be ordered and within the category vocabulary");
        }
        if self.duration.0 < self.events_per_video.1 as u32 {
            return bad("videos too short for the event count");
        }
        if self.actions.is_empty() || self.categories.is_empty() {
            return bad("empty action or category vocabulary");
        }
        if let Some(c) = self.categories.iter().find(|c| canonical_category(c) != Some(c.as_str())) {
            return bad(&format!("{c} is not a canonical category"));
        }
        if self.shows == 0 || self.videos < 2 * self.shows {
            return bad("every show needs at least two videos");
        }
        if !(0.0..=1.0).contains(&self.subtitle_fraction) || !(0.0..=1.0).contains(&self.alpha) {
            return bad("subtitle_fraction and alpha must lie in [0, 1]");
        }
        if self.embedding_dim < 2 {
            return bad("embedding_dim must be at least 2");
        }
        if self.sequence_len.0 > self.sequence_len.1 {
            return bad("sequence length range must be ordered");
        }
        let seq_clips = self.sequence_groups * self.sequence_len.1;
        if seq_clips + 2 * self.near_duplicate_pairs > self.videos {
            return bad("not enough videos for sequence groups and near-duplicate pairs");
        }
        if self.sequence_groups > 0 && self.max_count < self.sequence_len.1 as u32 {
            return bad("sequence clips need max_count at least the group length");
        }
        for kind in &self.kinds {
            let ok = match kind {
                TaskKind::Counting => self.videos >= 5,
                TaskKind::ActionMatching => self.actions.len() >= 4 && self.videos >= 5,
                TaskKind::ArtStyle => self.shows >= 4,
                TaskKind::VideoSimilarity => self.near_duplicate_pairs >= 1 && self.videos >= 5,
                TaskKind::Sequence => self.sequence_groups >= 1 && self.sequence_len.0 >= 3,
                _ => false,
            };
            if !ok {
                return bad(&format!("world cannot support {kind} tasks"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub seed: u64,
    pub config: WorldConfig,
    pub videos: BTreeMap<String, SimVideo>,
}

const WORLD_FORMAT: &str = "vidagent-world/1";

#[derive(Serialize, Deserialize)]
struct WorldFile {
    format: String,
    #[serde(flatten)]
    world: World,
}

impl World {
    pub fn video(&self, id: &str) -> Option<&SimVideo> {
        self.videos.get(id)
    }

    pub fn registry(&self) -> VideoRegistry {
        let mut reg = VideoRegistry::new();
        for v in self.videos.values() {
            // ids are map keys and durations are checked at generation
            let _ = reg.insert(v.id.clone(), VideoEntry { duration: v.duration, role: VideoRole::Candidate, source: self.source(&v.id) });
        }
        reg
    }

    pub fn source(&self, id: &str) -> String {
        format!("sim://{}/{id}", self.seed)
    }

    pub fn check(&self) -> Result<(), WorldError> {
        for (k, v) in &self.videos {
            if *k != v.id {
                return Err(WorldError::Invalid(format!("key {k} holds video {}", v.id)));
            }
            v.check().map_err(WorldError::Invalid)?;
        }
        Ok(())
    }

    /// Same-show pairs outscore every cross-show pair.
    pub fn similarity_separated(&self) -> bool {
        let vs: Vec<&SimVideo> = self.videos.values().collect();
        let mut min_same = Score::INFINITY;
        let mut max_cross = Score::NEG_INFINITY;
        for (i, a) in vs.iter().enumerate() {
            for b in &vs[i + 1..] {
                let s = similarity(a, b, self.config.alpha);
                if a.show_id == b.show_id {
                    min_same = min_same.min(s);
                } else {
                    max_cross = max_cross.max(s);
                }
            }
        }
        min_same > max_cross
    }

    pub fn to_json(&self) -> String {
        let file = WorldFile { format: WORLD_FORMAT.to_string(), world: self.clone() };
        serde_json::to_string_pretty(&file).unwrap_or_default()
    }

    pub fn from_json(text: &str) -> Result<World, WorldError> {
        let file: WorldFile = serde_json::from_str(text).map_err(|e| WorldError::Format(e.to_string()))?;
        if file.format != WORLD_FORMAT {
            return Err(WorldError::Format(format!("unsupported format {}", file.format)));
        }
        file.world.check()?;
        Ok(file.world)
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Score> {
    loop {
        let v: Vec<Score> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn renormalize(v: Vec<Score>) -> Vec<Score> {
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Contiguous event windows from 0, leaving an idle tail of at most a fifth of the video.
fn tile_events(rng: &mut ChaCha8Rng, duration: u32, k: usize) -> Vec<TimeWindow> {
    let tail = rng.random_range(0..=duration / 5);
    let end = (duration - tail).max(k as u32);
    let mut cuts: BTreeSet<u32> = BTreeSet::new();
    while cuts.len() < k - 1 && end > k as u32 {
        cuts.insert(rng.random_range(1..end));
    }
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(end);
    bounds.windows(2).map(|w| TimeWindow { start: w[0], end: w[1] }).collect()
}

struct Blueprint {
    show: usize,
    sequence: Option<(SequenceKey, String)>,
}

fn build_video(rng: &mut ChaCha8Rng, id: String, cfg: &WorldConfig, bp: &Blueprint) -> SimVideo {
    let duration = rng.random_range(cfg.duration.0..=cfg.duration.1);
    let k = rng.random_range(cfg.events_per_video.0..=cfg.events_per_video.1);
    let action = cfg.actions.choose(rng).cloned().unwrap_or_default();
    let mut categories: Vec<&String> = cfg.categories.iter().collect();
    if let Some((_, progress)) = &bp.sequence {
        categories.retain(|c| *c != progress);
    }
    categories.shuffle(rng);
    let m = rng.random_range(cfg.objects_per_video.0..=cfg.objects_per_video.1).min(categories.len());
    let mut objects: Vec<ObjectInstance> = categories[..m]
        .iter()
        .map(|c| ObjectInstance {
            category: (*c).clone(),
            count: rng.random_range(0..=cfg.max_count),
            color: COLORS.choose(rng).map(|s| s.to_string()).unwrap_or_default(),
            position: *Position::ALL.choose(rng).unwrap_or(&Position::Center),
        })
        .collect();
    if let Some((key, progress)) = &bp.sequence {
        objects.push(ObjectInstance {
            category: progress.clone(),
            count: key.index + 1,
            color: COLORS.choose(rng).map(|s| s.to_string()).unwrap_or_default(),
            position: *Position::ALL.choose(rng).unwrap_or(&Position::Center),
        });
    }
    let events = tile_events(rng, duration, k)
        .into_iter()
        .map(|window| Event { window, action: action.clone(), objects: objects.clone() })
        .collect();
    let mut subtitles = Vec::new();
    if rng.random_bool(cfg.subtitle_fraction) {
        let lines = rng.random_range(1..=3);
        for _ in 0..lines {
            let start = rng.random_range(0..duration.saturating_sub(6).max(1));
            let end = (start + rng.random_range(2..=6)).min(duration);
            let text = SUBTITLE_LINES.choose(rng).map(|s| s.to_string()).unwrap_or_default();
            subtitles.push(SubtitleEntry { window: TimeWindow { start, end }, text });
        }
        subtitles.sort_by_key(|s| s.window);
    }
    SimVideo {
        id,
        duration,
        events,
        subtitles,
        style_vector: Vec::new(),
        content_vector: unit_vector(rng, cfg.embedding_dim),
        show_id: format!("show-{:02}", bp.show),
        sequence_key: bp.sequence.as_ref().map(|(k, _)| *k),
        near_duplicate_group: None,
        motion_labels: BTreeSet::new(),
    }
}

const SEPARATION_ATTEMPTS: usize = 32;

/// Deterministic in `(seed, config)`.
pub fn gen_world(seed: u64, config: &WorldConfig) -> Result<World, WorldError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.videos;
    let width = n.to_string().len().max(3);
    let ids: Vec<String> = (0..n).map(|i| format!("v{i:0width$}")).collect();

    let mut blueprints: Vec<Blueprint> = Vec::with_capacity(n);
    let mut progress: Vec<&String> = config.categories.iter().collect();
    progress.shuffle(&mut rng);
    for g in 0..config.sequence_groups {
        let len = rng.random_range(config.sequence_len.0..=config.sequence_len.1);
        let category = progress[g % progress.len()].clone();
        for index in 0..len {
            blueprints.push(Blueprint {
                show: 0,
                sequence: Some((SequenceKey { group: g as u32, index: index as u32 }, category.clone())),
            });
        }
    }
    while blueprints.len() < n {
        blueprints.push(Blueprint { show: 0, sequence: None });
    }
    // round-robin shows over a shuffled order guarantees two videos per show
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for (slot, &i) in order.iter().enumerate() {
        blueprints[i].show = slot % config.shows;
    }

    let mut videos: Vec<SimVideo> =
        ids.iter().zip(&blueprints).map(|(id, bp)| build_video(&mut rng, id.clone(), config, bp)).collect();

    // near-duplicates: re-uploads of a plain video, same show and scene
    let mut plain: Vec<usize> = (0..n).filter(|&i| videos[i].sequence_key.is_none()).collect();
    plain.shuffle(&mut rng);
    for (g, pair) in plain.chunks(2).take(config.near_duplicate_pairs).enumerate() {
        if let [a, b] = *pair {
            let src = videos[a].clone();
            let dup = &mut videos[b];
            dup.duration = src.duration;
            dup.events = src.events.clone();
            dup.subtitles = src.subtitles.clone();
            dup.show_id = src.show_id.clone();
            dup.near_duplicate_group = Some(g as u32);
            videos[a].near_duplicate_group = Some(g as u32);
        }
    }

    let show_ids: BTreeSet<String> = videos.iter().map(|v| v.show_id.clone()).collect();
    for _ in 0..SEPARATION_ATTEMPTS {
        let styles: BTreeMap<&String, Vec<Score>> =
            show_ids.iter().map(|s| (s, unit_vector(&mut rng, config.embedding_dim))).collect();
        let mut sources: BTreeMap<u32, Vec<Score>> = BTreeMap::new();
        for v in &mut videos {
            v.style_vector = styles[&v.show_id].clone();
            v.content_vector = unit_vector(&mut rng, config.embedding_dim);
            if let Some(g) = v.near_duplicate_group {
                match sources.get(&g) {
                    Some(src) => {
                        let jitter = unit_vector(&mut rng, config.embedding_dim);
                        v.content_vector = renormalize(src.iter().zip(&jitter).map(|(s, j)| s + 0.05 * j).collect());
                    }
                    None => {
                        sources.insert(g, v.content_vector.clone());
                    }
                }
            }
        }
        let world = World {
            seed,
            config: config.clone(),
            videos: videos.iter().map(|v| (v.id.clone(), v.clone())).collect(),
        };
        if world.similarity_separated() {
            world.check()?;
            return Ok(world);
        }
    }
    Err(WorldError::InfeasibleConfig("could not separate same-show from cross-show similarity".into()))
}
