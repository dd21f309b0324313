//! Hand-built worlds reproducing two worked scenarios: a counting task where
//! tool disagreement must be resolved, and a style task where reader text
//! cannot discriminate between candidates.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use vidagent_core::protocol::{TimeWindow, ToolId};
use vidagent_core::task::{CountRelation, Referent, Task, TaskKind, TaskMeta, TaskOption, TaskVideo};
use vidagent_core::tools::VideoRole;

use crate::perturb::{ForcedBias, PerturbationModel};
use crate::taskgen::{gen_tasks, TaskGenError};
use crate::world::{gen_world, Event, ObjectInstance, Position, SimVideo, World, WorldConfig, WorldError};

pub const CASE1_DURATION: u32 = 50;

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// A counting world: the reference shows two cups; candidate C shows two
/// people, D one grocery bag, A three books and B four bottles.
///
/// On whole-video windows the reader overcounts both C and D by one, so the
/// unverified reading points at D. Scene graph and tracker report the truth.
pub fn case1() -> (World, Task, PerturbationModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layout = [
        ("ref", "cup", 2, "white"),
        ("A", "book", 3, "red"),
        ("B", "bottle", 4, "green"),
        ("C", "person", 2, "blue"),
        ("D", "grocery bag", 1, "brown"),
    ];
    let config = WorldConfig {
        videos: layout.len(),
        duration: (CASE1_DURATION, CASE1_DURATION),
        shows: 1,
        sequence_groups: 0,
        near_duplicate_pairs: 0,
        kinds: vec![TaskKind::Counting],
        ..WorldConfig::default()
    };
    let mut videos = BTreeMap::new();
    let mut targets = BTreeMap::new();
    for (id, category, count, color) in layout {
        let objects = vec![ObjectInstance {
            category: category.to_string(),
            count,
            color: color.to_string(),
            position: Position::Center,
        }];
        let video = SimVideo {
            id: id.to_string(),
            duration: CASE1_DURATION,
            events: vec![Event {
                window: TimeWindow { start: 0, end: CASE1_DURATION },
                action: "carrying groceries".into(),
                objects,
            }],
            subtitles: Vec::new(),
            style_vector: unit(&mut rng, config.embedding_dim),
            content_vector: unit(&mut rng, config.embedding_dim),
            show_id: "show-00".into(),
            sequence_key: None,
            near_duplicate_group: None,
            motion_labels: BTreeSet::new(),
        };
        targets.insert(id.to_string(), category.to_string());
        videos.insert(id.to_string(), video);
    }
    let world = World { seed: 1, config, videos };
    let task = Task {
        id: "case1-counting".into(),
        kind: TaskKind::Counting,
        question: "Which candidate video contains the same number of objects as the reference video?".into(),
        videos: layout
            .iter()
            .map(|(id, ..)| TaskVideo {
                id: id.to_string(),
                duration: CASE1_DURATION,
                role: if *id == "ref" { VideoRole::Ref } else { VideoRole::Candidate },
                source: world.source(id),
                has_subtitles: false,
            })
            .collect(),
        options: ['A', 'B', 'C', 'D']
            .into_iter()
            .map(|l| TaskOption { letter: l, referent: Referent::Video(l.to_string()) })
            .collect(),
        gold: Some('C'),
        meta: TaskMeta { relation: Some(CountRelation::Same), video_targets: targets, ..TaskMeta::default() },
    };
    let overcount = |video: &str, category: &str| ForcedBias {
        tool: ToolId::VideoReader,
        video: video.into(),
        category: category.into(),
        bias: 1,
        wide_only: true,
    };
    let perturbation = PerturbationModel {
        forced: vec![overcount("C", "person"), overcount("D", "grocery bag")],
        ..PerturbationModel::none()
    };
    (world, task, perturbation)
}

/// A style world whose videos share one scene, action and duration, so every
/// reader description is identical; only the show-level style differs.
pub fn case2_world(seed: u64) -> Result<World, WorldError> {
    let config = WorldConfig {
        videos: 24,
        shows: 8,
        sequence_groups: 0,
        near_duplicate_pairs: 0,
        subtitle_fraction: 0.0,
        kinds: vec![TaskKind::ArtStyle],
        ..WorldConfig::default()
    };
    let mut world = gen_world(seed, &config)?;
    let template = world.videos.values().next().cloned().ok_or_else(|| WorldError::Invalid("empty world".into()))?;
    for v in world.videos.values_mut() {
        v.duration = template.duration;
        v.events = template.events.clone();
    }
    world.check()?;
    Ok(world)
}

pub fn case2_tasks(world: &World, count: usize, seed: u64) -> Result<Vec<Task>, TaskGenError> {
    gen_tasks(world, &[TaskKind::ArtStyle], count, seed)
}
