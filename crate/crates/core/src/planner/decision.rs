//! Per-kind decision rules over evidence memory, shared by the policy
//! planner and the forced-answer fallback.

use std::collections::BTreeSet;

use crate::protocol::ToolId;
use crate::task::{CountRelation, Task, TaskKind};
use crate::verification::{Aspect, Claim, ClaimSource, EvidenceMemory};
use crate::Score;

/// Count estimate for `video`: latest resolution, else the earliest reader
/// claim, else the earliest claim from any other tool.
pub fn count_estimate(memory: &EvidenceMemory, video: &str, category: &str) -> Option<u32> {
    let claims: Vec<&Claim> = memory
        .live_claims(video)
        .filter(|c| c.key.aspect == Aspect::Count && c.key.subject == category)
        .collect();
    claims
        .iter()
        .rev()
        .find(|c| c.source == ClaimSource::Resolution)
        .or_else(|| claims.iter().find(|c| c.source == ClaimSource::Tool(ToolId::VideoReader)))
        .or_else(|| claims.first())
        .and_then(|c| c.value.as_count())
}

/// Highest live similarity score recorded between two videos, in either direction.
pub fn best_similarity(memory: &EvidenceMemory, a: &str, b: &str) -> Option<Score> {
    let from = |x: &str, y: &str| {
        memory
            .live_claims(x)
            .filter(|c| c.key.aspect == Aspect::SimilarityTo(y.to_string()))
            .filter_map(|c| c.value.as_score())
            .collect::<Vec<_>>()
    };
    from(a, b).into_iter().chain(from(b, a)).reduce(Score::max)
}

fn similarity_claims(memory: &EvidenceMemory, a: &str, b: &str) -> usize {
    let n = |x: &str, y: &str| {
        memory.live_claims(x).filter(|c| c.key.aspect == Aspect::SimilarityTo(y.to_string())).count()
    };
    n(a, b) + n(b, a)
}

/// Action labels with a live presence claim on `video`.
pub fn action_labels(memory: &EvidenceMemory, video: &str) -> BTreeSet<String> {
    memory
        .live_claims(video)
        .filter(|c| c.key.aspect == Aspect::ActionPresent)
        .map(|c| c.key.subject.clone())
        .collect()
}

/// Support per option letter: the number of memory claims consistent with the
/// option under the kind's decision rule.
pub fn option_support(task: &Task, memory: &EvidenceMemory) -> Vec<(char, usize)> {
    let reference = task.reference().map(|r| r.id.as_str());
    task.options
        .iter()
        .map(|o| {
            let support = match (&task.kind, o.referent.video(), reference) {
                (TaskKind::Counting, Some(v), Some(r)) => {
                    let relation = task.meta.relation.unwrap_or(CountRelation::Same);
                    match (task.target_for(r), task.target_for(v)) {
                        (Some(rt), Some(vt)) => match count_estimate(memory, r, rt) {
                            Some(rc) => memory
                                .live_claims(v)
                                .filter(|c| c.key.aspect == Aspect::Count && c.key.subject == vt)
                                .filter_map(|c| c.value.as_count())
                                .filter(|n| relation.holds(*n, rc))
                                .count(),
                            None => 0,
                        },
                        _ => 0,
                    }
                }
                (TaskKind::ArtStyle | TaskKind::VideoSimilarity, Some(v), Some(r)) => {
                    let best = task
                        .option_videos()
                        .iter()
                        .filter_map(|(_, ov)| best_similarity(memory, r, ov))
                        .reduce(Score::max);
                    match (best, best_similarity(memory, r, v)) {
                        (Some(b), Some(s)) if s >= b => similarity_claims(memory, r, v),
                        _ => 0,
                    }
                }
                (TaskKind::ActionMatching, Some(v), Some(r)) => {
                    let wanted = action_labels(memory, r);
                    memory
                        .live_claims(v)
                        .filter(|c| c.key.aspect == Aspect::ActionPresent && wanted.contains(&c.key.subject))
                        .count()
                }
                (TaskKind::Sequence, None, _) => {
                    let order = o.referent.ordering().unwrap_or_default();
                    order
                        .windows(2)
                        .filter(|pair| {
                            let est = |v: &str| task.target_for(v).and_then(|t| count_estimate(memory, v, t));
                            matches!((est(&pair[0]), est(&pair[1])), (Some(a), Some(b)) if a < b)
                        })
                        .count()
                }
                _ => 0,
            };
            (o.letter, support)
        })
        .collect()
}

/// Option with the most support; ties and empty memory go to the earliest letter.
pub fn forced_answer(task: &Task, memory: &EvidenceMemory) -> char {
    let support = option_support(task, memory);
    let mut best: Option<(char, usize)> = None;
    for (letter, s) in support {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((letter, s)),
        }
    }
    best.map_or('A', |(l, _)| l)
}

/// A confident decision from the kind's rule, when memory pins exactly one option.
pub fn decide(task: &Task, memory: &EvidenceMemory) -> Option<char> {
    let reference = task.reference()?.id.as_str();
    let videos = task.option_videos();
    let unique = |hits: Vec<char>| if hits.len() == 1 { Some(hits[0]) } else { None };
    match task.kind {
        TaskKind::Counting => {
            let relation = task.meta.relation?;
            let rc = count_estimate(memory, reference, task.target_for(reference)?)?;
            unique(
                videos
                    .iter()
                    .filter(|(_, v)| {
                        task.target_for(v)
                            .and_then(|t| count_estimate(memory, v, t))
                            .is_some_and(|n| relation.holds(n, rc))
                    })
                    .map(|(l, _)| *l)
                    .collect(),
            )
        }
        TaskKind::ArtStyle | TaskKind::VideoSimilarity => {
            let scored: Vec<(char, Score)> = videos
                .iter()
                .map(|(l, v)| best_similarity(memory, reference, v).map(|s| (*l, s)))
                .collect::<Option<_>>()?;
            // first maximum wins ties
            scored.iter().fold(None, |acc: Option<(char, Score)>, (l, s)| match acc {
                Some((_, b)) if *s <= b => acc,
                _ => Some((*l, *s)),
            })
            .map(|(l, _)| l)
        }
        TaskKind::ActionMatching => {
            let wanted = action_labels(memory, reference);
            if wanted.is_empty() {
                return None;
            }
            unique(
                videos
                    .iter()
                    .filter(|(_, v)| !action_labels(memory, v).is_disjoint(&wanted))
                    .map(|(l, _)| *l)
                    .collect(),
            )
        }
        TaskKind::Sequence => {
            let clips: Vec<&str> = task.videos.iter().map(|v| v.id.as_str()).collect();
            let mut est: Vec<(u32, &str)> = clips
                .iter()
                .map(|v| task.target_for(v).and_then(|t| count_estimate(memory, v, t)).map(|n| (n, *v)))
                .collect::<Option<_>>()?;
            est.sort();
            let order: Vec<&str> = est.iter().map(|(_, v)| *v).collect();
            task.options
                .iter()
                .find(|o| o.referent.ordering().is_some_and(|ord| ord.iter().map(String::as_str).eq(order.iter().copied())))
                .map(|o| o.letter)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::TimeWindow;
    use crate::task::{Referent, TaskMeta, TaskOption, TaskVideo};
    use crate::tools::VideoRole;
    use crate::verification::{AttributeKey, ClaimId, ClaimValue, Confidence};

    fn counting_task(letters: usize) -> Task {
        let mut videos =
            vec![TaskVideo { id: "R".into(), duration: 30, role: VideoRole::Ref, source: String::new(), has_subtitles: false }];
        let mut options = Vec::new();
        for i in 0..letters {
            let id = format!("V{i}");
            videos.push(TaskVideo {
                id: id.clone(),
                duration: 30,
                role: VideoRole::Candidate,
                source: String::new(),
                has_subtitles: false,
            });
            options.push(TaskOption { letter: (b'A' + i as u8) as char, referent: Referent::Video(id) });
        }
        Task {
            id: "t".into(),
            kind: TaskKind::Counting,
            question: String::new(),
            videos,
            options,
            gold: None,
            meta: TaskMeta { target: Some("cup".into()), relation: Some(CountRelation::Same), ..TaskMeta::default() },
        }
    }

    fn count(video: &str, n: u32, tool: ToolId) -> Claim {
        Claim {
            id: ClaimId(0),
            video: video.into(),
            key: AttributeKey { aspect: Aspect::Count, subject: "cup".into(), scope: TimeWindow { start: 0, end: 30 } },
            value: ClaimValue::Count(n),
            source: ClaimSource::Tool(tool),
            turn: 1,
            confidence: Confidence::Noisy,
            narrowed: false,
        }
    }

    fn memory(claims: Vec<Claim>) -> EvidenceMemory {
        let mut m = EvidenceMemory::new(1024);
        let admitted = m.admit(claims);
        m.aggregate(admitted, &[]);
        m
    }

    #[test]
    fn empty_memory_forces_a() {
        assert_eq!(forced_answer(&counting_task(4), &EvidenceMemory::new(1024)), 'A');
    }

    #[test]
    fn support_majority_and_ties() {
        let t = counting_task(4);
        let mut claims = vec![count("R", 2, ToolId::VideoReader)];
        for tool in [ToolId::VideoReader, ToolId::SceneGraph, ToolId::ObjectTracker] {
            claims.push(count("V2", 2, tool));
        }
        claims.push(count("V1", 2, ToolId::VideoReader));
        let m = memory(claims);
        // oracle: count matching claims per option by hand
        assert_eq!(option_support(&t, &m), vec![('A', 0), ('B', 1), ('C', 3), ('D', 0)]);
        assert_eq!(forced_answer(&t, &m), 'C');

        let tie = memory(vec![count("R", 2, ToolId::VideoReader), count("V1", 2, ToolId::VideoReader), count("V2", 2, ToolId::VideoReader)]);
        assert_eq!(forced_answer(&t, &tie), 'B');
    }

    #[test]
    fn estimate_prefers_reader_over_other_tools() {
        let m = memory(vec![count("R", 1, ToolId::SceneGraph), count("R", 2, ToolId::VideoReader)]);
        assert_eq!(count_estimate(&m, "R", "cup"), Some(2));
        let m = memory(vec![count("R", 1, ToolId::SceneGraph)]);
        assert_eq!(count_estimate(&m, "R", "cup"), Some(1));
    }

    #[test]
    fn unique_count_decision() {
        let t = counting_task(3);
        let m = memory(vec![
            count("R", 2, ToolId::VideoReader),
            count("V0", 1, ToolId::VideoReader),
            count("V1", 2, ToolId::VideoReader),
            count("V2", 3, ToolId::VideoReader),
        ]);
        assert_eq!(decide(&t, &m), Some('B'));
    }
}
