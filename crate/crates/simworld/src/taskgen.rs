//! Multiple-choice task generation over a world, and the brute-force oracle.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vidagent_core::lexicon::plural;
use vidagent_core::task::{CountRelation, Referent, Task, TaskKind, TaskMeta, TaskOption, TaskVideo};
use vidagent_core::tools::VideoRole;

use crate::world::{SimVideo, World};

const MAX_ATTEMPTS: usize = 256;
const CANDIDATES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskGenError {
    #[error("no valid {0} task found after bounded rejection sampling")]
    Infeasible(TaskKind),
    #[error("no generator for {0} tasks")]
    Unsupported(TaskKind),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("task {task}: {satisfying} options satisfy the question")]
    Ambiguous { task: String, satisfying: usize },
    #[error("task {task}: video {video} is not in the world")]
    UnknownVideo { task: String, video: String },
    #[error("task {task}: missing {what}")]
    Incomplete { task: String, what: &'static str },
    #[error("no oracle for {0} tasks")]
    Unsupported(TaskKind),
}

fn task_video(world: &World, v: &SimVideo, role: VideoRole) -> TaskVideo {
    TaskVideo {
        id: v.id.clone(),
        duration: v.duration,
        role,
        source: world.source(&v.id),
        has_subtitles: v.has_subtitles(),
    }
}

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

/// The videos of one reference-plus-candidates task.
struct Lineup<'a> {
    reference: &'a SimVideo,
    positive: &'a SimVideo,
    negatives: Vec<&'a SimVideo>,
}

/// Reference-plus-candidates task with the options in shuffled order.
fn comparison(world: &World, rng: &mut ChaCha8Rng, id: String, kind: TaskKind, question: String, lineup: Lineup<'_>, meta: TaskMeta) -> Task {
    let Lineup { reference, positive, negatives } = lineup;
    let mut candidates: Vec<(&SimVideo, bool)> = vec![(positive, true)];
    candidates.extend(negatives.into_iter().map(|v| (v, false)));
    candidates.shuffle(rng);
    let mut videos = vec![task_video(world, reference, VideoRole::Ref)];
    let mut options = Vec::new();
    let mut gold = None;
    for (i, (v, pos)) in candidates.iter().enumerate() {
        videos.push(task_video(world, v, VideoRole::Candidate));
        options.push(TaskOption { letter: letter(i), referent: Referent::Video(v.id.clone()) });
        if *pos {
            gold = Some(letter(i));
        }
    }
    Task { id, kind, question, videos, options, gold, meta }
}

fn gen_counting(world: &World, rng: &mut ChaCha8Rng, id: String) -> Option<Task> {
    let all: Vec<&SimVideo> = world.videos.values().collect();
    let category = world.config.categories.choose(rng)?.clone();
    let refs: Vec<&&SimVideo> = all.iter().filter(|v| v.true_count(&category) >= 1).collect();
    let reference = **refs.choose(rng)?;
    let relation = *[CountRelation::Same, CountRelation::Greater, CountRelation::Less].choose(rng)?;
    let c = reference.true_count(&category);
    let pool = all.iter().filter(|v| v.id != reference.id);
    let (pos, neg): (Vec<&&SimVideo>, Vec<&&SimVideo>) = pool.partition(|v| relation.holds(v.true_count(&category), c));
    if neg.len() < CANDIDATES - 1 {
        return None;
    }
    let positive = **pos.choose(rng)?;
    let negatives: Vec<&SimVideo> = neg.choose_multiple(rng, CANDIDATES - 1).map(|v| **v).collect();
    let things = plural(&category);
    let question = match relation {
        CountRelation::Same => format!("Which candidate video shows the same number of {things} as the reference video?"),
        CountRelation::Greater => format!("Which candidate video shows more {things} than the reference video?"),
        CountRelation::Less => format!("Which candidate video shows fewer {things} than the reference video?"),
    };
    let meta = TaskMeta { target: Some(category), relation: Some(relation), ..TaskMeta::default() };
    Some(comparison(world, rng, id, TaskKind::Counting, question, Lineup { reference, positive, negatives }, meta))
}

fn gen_action(world: &World, rng: &mut ChaCha8Rng, id: String) -> Option<Task> {
    let all: Vec<&SimVideo> = world.videos.values().collect();
    let reference = *all.choose(rng)?;
    let label = reference.action()?;
    let positive = *all.iter().filter(|v| v.id != reference.id && v.action() == Some(label)).choose(rng)?;
    let mut others: Vec<&SimVideo> = all.iter().copied().filter(|v| v.action().is_some_and(|a| a != label)).collect();
    others.shuffle(rng);
    let mut used: BTreeSet<&str> = BTreeSet::new();
    let negatives: Vec<&SimVideo> =
        others.into_iter().filter(|v| used.insert(v.action().unwrap_or_default())).take(CANDIDATES - 1).collect();
    if negatives.len() < CANDIDATES - 1 {
        return None;
    }
    let question = "Which candidate video shows the same action as the reference video?".to_string();
    Some(comparison(world, rng, id, TaskKind::ActionMatching, question, Lineup { reference, positive, negatives }, TaskMeta::default()))
}

fn gen_style(world: &World, rng: &mut ChaCha8Rng, id: String) -> Option<Task> {
    let all: Vec<&SimVideo> = world.videos.values().collect();
    let reference = *all.choose(rng)?;
    let positive = *all.iter().filter(|v| v.id != reference.id && v.show_id == reference.show_id).choose(rng)?;
    let mut others: Vec<&SimVideo> = all.iter().copied().filter(|v| v.show_id != reference.show_id).collect();
    others.shuffle(rng);
    let mut used: BTreeSet<&str> = BTreeSet::new();
    let negatives: Vec<&SimVideo> =
        others.into_iter().filter(|v| used.insert(v.show_id.as_str())).take(CANDIDATES - 1).collect();
    if negatives.len() < CANDIDATES - 1 {
        return None;
    }
    let question = "Which candidate clip comes from the same show as the reference video, judging by its art style?".to_string();
    Some(comparison(world, rng, id, TaskKind::ArtStyle, question, Lineup { reference, positive, negatives }, TaskMeta::default()))
}

fn gen_near_duplicate(world: &World, rng: &mut ChaCha8Rng, id: String) -> Option<Task> {
    let all: Vec<&SimVideo> = world.videos.values().collect();
    let reference = *all.iter().filter(|v| v.near_duplicate_group.is_some()).choose(rng)?;
    let group = reference.near_duplicate_group;
    let positive = *all.iter().filter(|v| v.id != reference.id && v.near_duplicate_group == group).choose(rng)?;
    let pool: Vec<&&SimVideo> = all.iter().filter(|v| v.near_duplicate_group != group).collect();
    if pool.len() < CANDIDATES - 1 {
        return None;
    }
    let negatives: Vec<&SimVideo> = pool.choose_multiple(rng, CANDIDATES - 1).map(|v| **v).collect();
    let question = "Which candidate video is a near-duplicate of the reference video?".to_string();
    Some(comparison(world, rng, id, TaskKind::VideoSimilarity, question, Lineup { reference, positive, negatives }, TaskMeta::default()))
}

/// The category whose count equals the clip index plus one in every clip of the group.
fn progress_category(world: &World, clips: &[&SimVideo]) -> Option<String> {
    world.config.categories.iter().find(|c| {
        clips.iter().all(|v| v.sequence_key.is_some_and(|k| v.true_count(c) == k.index + 1))
    }).cloned()
}

fn gen_sequence(world: &World, rng: &mut ChaCha8Rng, id: String) -> Option<Task> {
    let groups: BTreeSet<u32> = world.videos.values().filter_map(|v| v.sequence_key.map(|k| k.group)).collect();
    let group = *groups.iter().choose(rng)?;
    let members: Vec<&SimVideo> =
        world.videos.values().filter(|v| v.sequence_key.is_some_and(|k| k.group == group)).collect();
    if members.len() < 3 {
        return None;
    }
    let k = rng.random_range(3..=members.len().min(CANDIDATES));
    let mut clips: Vec<&SimVideo> = members.choose_multiple(rng, k).copied().collect();
    let target = progress_category(world, &clips)?;
    clips.shuffle(rng);
    let mut truth: Vec<&SimVideo> = clips.clone();
    truth.sort_by_key(|v| v.sequence_key);
    let truth: Vec<String> = truth.iter().map(|v| v.id.clone()).collect();
    let mut orderings: Vec<Vec<String>> = vec![truth.clone()];
    while orderings.len() < CANDIDATES {
        let mut o = truth.clone();
        o.shuffle(rng);
        if !orderings.contains(&o) {
            orderings.push(o);
        }
    }
    orderings.shuffle(rng);
    let gold = orderings.iter().position(|o| *o == truth).map(letter);
    Some(Task {
        id,
        kind: TaskKind::Sequence,
        question: "These clips show one activity in shuffled order. Which option gives the correct chronological order?"
            .to_string(),
        videos: clips.iter().map(|v| task_video(world, v, VideoRole::Candidate)).collect(),
        options: orderings
            .into_iter()
            .enumerate()
            .map(|(i, o)| TaskOption { letter: letter(i), referent: Referent::Ordering(o) })
            .collect(),
        gold,
        meta: TaskMeta { target: Some(target), ..TaskMeta::default() },
    })
}

/// One task of `kind`, by bounded rejection sampling.
pub fn gen_task(kind: &TaskKind, world: &World, rng: &mut ChaCha8Rng, id: String) -> Result<Task, TaskGenError> {
    let generator: fn(&World, &mut ChaCha8Rng, String) -> Option<Task> = match kind {
        TaskKind::Counting => gen_counting,
        TaskKind::ActionMatching => gen_action,
        TaskKind::ArtStyle => gen_style,
        TaskKind::VideoSimilarity => gen_near_duplicate,
        TaskKind::Sequence => gen_sequence,
        other => return Err(TaskGenError::Unsupported(other.clone())),
    };
    for _ in 0..MAX_ATTEMPTS {
        if let Some(t) = generator(world, rng, id.clone()) {
            return Ok(t);
        }
    }
    Err(TaskGenError::Infeasible(kind.clone()))
}

/// `count` tasks cycling through `kinds`, deterministic in `seed`.
pub fn gen_tasks(world: &World, kinds: &[TaskKind], count: usize, seed: u64) -> Result<Vec<Task>, TaskGenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .filter_map(|i| kinds.get(i % kinds.len().max(1)).map(|k| (i, k)))
        .map(|(i, kind)| gen_task(kind, world, &mut rng, format!("{kind}-{i:05}")))
        .collect()
}

/// Peak count read straight off the event lists.
fn raw_count(v: &SimVideo, category: &str) -> u32 {
    let mut best = 0;
    for e in &v.events {
        for o in &e.objects {
            if o.category == category && o.count > best {
                best = o.count;
            }
        }
    }
    best
}

/// Recomputes the gold letter by checking every option against ground truth.
pub fn oracle_answer(task: &Task, world: &World) -> Result<char, OracleError> {
    let get = |id: &str| {
        world.video(id).ok_or_else(|| OracleError::UnknownVideo { task: task.id.clone(), video: id.to_string() })
    };
    let incomplete = |what| OracleError::Incomplete { task: task.id.clone(), what };
    let reference = || -> Result<&SimVideo, OracleError> {
        let r = task.videos.iter().find(|v| v.role == VideoRole::Ref).ok_or_else(|| incomplete("reference video"))?;
        get(&r.id)
    };
    let mut satisfying = Vec::new();
    for o in &task.options {
        let ok = match (&task.kind, &o.referent) {
            (TaskKind::Counting, Referent::Video(v)) => {
                let r = reference()?;
                let relation = task.meta.relation.ok_or_else(|| incomplete("relation"))?;
                let rt = task.target_for(&r.id).ok_or_else(|| incomplete("target"))?;
                let vt = task.target_for(v).ok_or_else(|| incomplete("target"))?;
                relation.holds(raw_count(get(v)?, vt), raw_count(r, rt))
            }
            (TaskKind::ActionMatching, Referent::Video(v)) => {
                let ra: BTreeSet<&str> = reference()?.events.iter().map(|e| e.action.as_str()).collect();
                get(v)?.events.iter().any(|e| ra.contains(e.action.as_str()))
            }
            (TaskKind::ArtStyle, Referent::Video(v)) => get(v)?.show_id == reference()?.show_id,
            (TaskKind::VideoSimilarity, Referent::Video(v)) => {
                let r = reference()?;
                r.near_duplicate_group.is_some() && get(v)?.near_duplicate_group == r.near_duplicate_group
            }
            (TaskKind::Sequence, Referent::Ordering(ids)) => {
                let keys = ids
                    .iter()
                    .map(|id| get(id).map(|v| v.sequence_key))
                    .collect::<Result<Vec<_>, _>>()?;
                keys.iter().all(Option::is_some)
                    && keys.windows(2).all(|w| w[0].map(|k| k.group) == w[1].map(|k| k.group) && w[0] < w[1])
            }
            (TaskKind::Counting | TaskKind::ActionMatching | TaskKind::ArtStyle | TaskKind::VideoSimilarity, _)
            | (TaskKind::Sequence, _) => false,
            (other, _) => return Err(OracleError::Unsupported(other.clone())),
        };
        if ok {
            satisfying.push(o.letter);
        }
    }
    match satisfying.as_slice() {
        [one] => Ok(*one),
        _ => Err(OracleError::Ambiguous { task: task.id.clone(), satisfying: satisfying.len() }),
    }
}
