use std::collections::BTreeMap;

use proptest::prelude::*;
use vidagent_core::task::TaskKind;
use vidagent_simworld::world::{gen_world, similarity, SimVideo, World, WorldConfig, WorldError};

fn no_sequences() -> WorldConfig {
    WorldConfig {
        sequence_groups: 0,
        kinds: vec![TaskKind::Counting, TaskKind::ActionMatching, TaskKind::ArtStyle, TaskKind::VideoSimilarity],
        ..WorldConfig::default()
    }
}

#[test]
fn same_seed_same_bytes() {
    let cfg = WorldConfig::default();
    assert_eq!(gen_world(7, &cfg).unwrap().to_json(), gen_world(7, &cfg).unwrap().to_json());
    assert_ne!(gen_world(7, &cfg).unwrap().to_json(), gen_world(8, &cfg).unwrap().to_json());
}

#[test]
fn zero_max_count_gives_zero_counts() {
    let cfg = WorldConfig { max_count: 0, ..no_sequences() };
    let w = gen_world(3, &cfg).unwrap();
    assert!(w.videos.values().flat_map(|v| &v.events).flat_map(|e| &e.objects).all(|o| o.count == 0));
}

#[test]
fn durations_within_range_seed_42() {
    let cfg = WorldConfig { videos: 40, ..WorldConfig::default() };
    let w = gen_world(42, &cfg).unwrap();
    assert_eq!(w.videos.len(), 40);
    for v in w.videos.values() {
        assert!((30..=120).contains(&v.duration), "{} has duration {}", v.id, v.duration);
    }
}

#[test]
fn structural_guarantees() {
    let w = gen_world(11, &WorldConfig::default()).unwrap();
    w.check().unwrap();
    let mut shows: BTreeMap<&str, usize> = BTreeMap::new();
    let mut groups: BTreeMap<u32, usize> = BTreeMap::new();
    let mut dups: BTreeMap<u32, usize> = BTreeMap::new();
    for v in w.videos.values() {
        *shows.entry(&v.show_id).or_default() += 1;
        if let Some(k) = v.sequence_key {
            *groups.entry(k.group).or_default() += 1;
        }
        if let Some(g) = v.near_duplicate_group {
            *dups.entry(g).or_default() += 1;
        }
        for (a, b) in [(&v.style_vector, "style"), (&v.content_vector, "content")] {
            let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() <= 1e-9, "{b} norm {n}");
        }
    }
    assert_eq!(shows.len(), 8);
    assert!(shows.values().all(|&n| n >= 2));
    assert_eq!(groups.len(), 3);
    assert!(groups.values().all(|&n| n >= 3));
    assert!(dups.values().all(|&n| n == 2));
}

#[test]
fn infeasible_configs() {
    let one_show = WorldConfig { shows: 1, ..WorldConfig::default() };
    assert!(matches!(gen_world(1, &one_show), Err(WorldError::InfeasibleConfig(_))));
    let shows_only = WorldConfig { shows: 1, kinds: vec![TaskKind::Counting], sequence_groups: 0, ..WorldConfig::default() };
    assert!(gen_world(1, &shows_only).is_ok());
    let bad_range = WorldConfig { duration: (50, 10), ..WorldConfig::default() };
    assert!(gen_world(1, &bad_range).is_err());
}

#[test]
fn json_round_trip() {
    let w = gen_world(5, &WorldConfig::default()).unwrap();
    let back = World::from_json(&w.to_json()).unwrap();
    assert_eq!(back, w);
    assert!(World::from_json("{}").is_err());
}

fn cosine_score(a: &SimVideo, b: &SimVideo, alpha: f64) -> f64 {
    // reference computation: explicit mix, dot and norms
    let mix = |v: &SimVideo| -> Vec<f64> {
        (0..v.style_vector.len()).map(|i| alpha * v.style_vector[i] + (1.0 - alpha) * v.content_vector[i]).collect()
    };
    let (x, y) = (mix(a), mix(b));
    let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
    let nx: f64 = x.iter().map(|p| p * p).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|p| p * p).sum::<f64>().sqrt();
    (dot / (nx * ny) + 1.0) / 2.0
}

#[test]
fn same_show_outranks_cross_show_exhaustively() {
    for seed in [42, 43, 44] {
        let w = gen_world(seed, &WorldConfig::default()).unwrap();
        let vs: Vec<&SimVideo> = w.videos.values().collect();
        let (mut min_same, mut max_cross) = (f64::MAX, f64::MIN);
        for i in 0..vs.len() {
            for j in 0..vs.len() {
                if i == j {
                    continue;
                }
                let s = cosine_score(vs[i], vs[j], 0.5);
                assert!((similarity(vs[i], vs[j], 0.5) - s).abs() < 1e-12);
                if vs[i].show_id == vs[j].show_id {
                    min_same = min_same.min(s);
                } else {
                    max_cross = max_cross.max(s);
                }
            }
        }
        assert!(min_same > max_cross, "seed {seed}: {min_same} <= {max_cross}");
    }
}

#[test]
fn similarity_identity_and_symmetry() {
    let w = gen_world(9, &WorldConfig::default()).unwrap();
    let vs: Vec<&SimVideo> = w.videos.values().collect();
    assert_eq!(similarity(vs[0], vs[0], 0.5), 1.0);
    assert_eq!(similarity(vs[0], vs[1], 0.5), similarity(vs[1], vs[0], 0.5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_worlds_are_valid(seed in any::<u64>(), videos in 24usize..48, max_count in 4u32..7) {
        let cfg = WorldConfig { videos, max_count, ..WorldConfig::default() };
        let w = gen_world(seed, &cfg).unwrap();
        prop_assert!(w.check().is_ok());
        for v in w.videos.values() {
            prop_assert!(v.events.iter().all(|e| e.window.end <= v.duration));
            prop_assert!(v.events.iter().flat_map(|e| &e.objects).all(|o| o.count <= max_count));
        }
    }
}
