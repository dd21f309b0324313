//! Seeded error channels. Every draw comes from a substream keyed by
//! (world seed, tool, video, window, channel), so a repeated query always
//! gets the same perturbation and a narrowed window gets a fresh one.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vidagent_core::lexicon::COLORS;
use vidagent_core::protocol::{TimeWindow, ToolId};

/// A deterministic count bias pinned to one (tool, video, category), for fixtures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForcedBias {
    pub tool: ToolId,
    pub video: String,
    pub category: String,
    pub bias: i32,
    /// Applies only to windows longer than the narrowing threshold.
    #[serde(default)]
    pub wide_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationModel {
    /// Probability that the reader misreports a queried count.
    pub reader_count_noise: f64,
    /// Additive biases drawn uniformly when the count channel fires.
    pub reader_count_bias: Vec<i32>,
    /// Probability that the reader reports a wrong color.
    pub reader_attribute_flip: f64,
    /// Probability that grounding omits a matching window.
    pub grounding_miss: f64,
    /// Probability that scene_graph misses one instance in a window.
    pub detector_drop: f64,
    /// Error-rate multiplier for narrowed windows.
    pub narrow_factor: f64,
    /// Windows no longer than this many seconds count as narrowed.
    pub narrow_max_secs: u32,
    pub forced: Vec<ForcedBias>,
}

impl Default for PerturbationModel {
    fn default() -> Self {
        PerturbationModel {
            reader_count_noise: 0.0,
            reader_count_bias: vec![-1, 1],
            reader_attribute_flip: 0.0,
            grounding_miss: 0.0,
            detector_drop: 0.0,
            narrow_factor: 0.25,
            narrow_max_secs: 10,
            forced: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerturbError {
    #[error("{name} = {value} is not a probability")]
    Probability { name: &'static str, value: f64 },
    #[error("reader_count_bias must be non-empty when reader_count_noise > 0")]
    EmptyBias,
}

/// Independent generator for one (tool, video, window, channel) query.
pub fn substream(seed: u64, tool: ToolId, video: &str, window: TimeWindow, channel: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for part in [tool.tag(), video, channel] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    h.update(window.start.to_le_bytes());
    h.update(window.end.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

impl PerturbationModel {
    /// The channel-free model.
    pub fn none() -> Self {
        PerturbationModel::default()
    }

    /// Counting noise: reader miscounts with probability `reader`, scene_graph drops with `detector`.
    pub fn counting(reader: f64, detector: f64) -> Self {
        PerturbationModel { reader_count_noise: reader, detector_drop: detector, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), PerturbError> {
        for (name, value) in [
            ("reader_count_noise", self.reader_count_noise),
            ("reader_attribute_flip", self.reader_attribute_flip),
            ("grounding_miss", self.grounding_miss),
            ("detector_drop", self.detector_drop),
            ("narrow_factor", self.narrow_factor),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(PerturbError::Probability { name, value });
            }
        }
        if self.reader_count_noise > 0.0 && self.reader_count_bias.is_empty() {
            return Err(PerturbError::EmptyBias);
        }
        Ok(())
    }

    pub fn is_narrow(&self, window: TimeWindow) -> bool {
        window.len() <= self.narrow_max_secs
    }

    fn rate(&self, base: f64, window: TimeWindow) -> f64 {
        if self.is_narrow(window) {
            base * self.narrow_factor
        } else {
            base
        }
    }

    fn forced(&self, tool: ToolId, video: &str, category: &str, window: TimeWindow) -> Option<i32> {
        self.forced
            .iter()
            .find(|f| {
                f.tool == tool && f.video == video && f.category == category && !(f.wide_only && self.is_narrow(window))
            })
            .map(|f| f.bias)
    }

    /// Additive bias on the reader's count of `category` in `window`.
    pub fn reader_bias(&self, seed: u64, video: &str, window: TimeWindow, category: &str) -> i32 {
        if let Some(b) = self.forced(ToolId::VideoReader, video, category, window) {
            return b;
        }
        let mut rng = substream(seed, ToolId::VideoReader, video, window, &format!("count/{category}"));
        if rng.random_bool(self.rate(self.reader_count_noise, window)) {
            self.reader_count_bias.choose(&mut rng).copied().unwrap_or(0)
        } else {
            0
        }
    }

    /// Color the reader reports for an object whose true color is `truth`.
    pub fn reader_color(&self, seed: u64, video: &str, window: TimeWindow, category: &str, truth: &str) -> String {
        let mut rng = substream(seed, ToolId::VideoReader, video, window, &format!("color/{category}"));
        if rng.random_bool(self.rate(self.reader_attribute_flip, window)) {
            let others: Vec<&&str> = COLORS.iter().filter(|c| **c != truth).collect();
            if let Some(c) = others.choose(&mut rng) {
                return c.to_string();
            }
        }
        truth.to_string()
    }

    /// Instances scene_graph misses for `category` in `window` (0 or more).
    pub fn detector_loss(&self, seed: u64, video: &str, window: TimeWindow, category: &str) -> u32 {
        if let Some(b) = self.forced(ToolId::SceneGraph, video, category, window) {
            return b.min(0).unsigned_abs();
        }
        let mut rng = substream(seed, ToolId::SceneGraph, video, window, &format!("drop/{category}"));
        u32::from(rng.random_bool(self.rate(self.detector_drop, window)))
    }

    /// Whether grounding omits the matching event at `event`.
    pub fn grounding_drops(&self, seed: u64, video: &str, event: TimeWindow) -> bool {
        let mut rng = substream(seed, ToolId::TemporalGroundingAgent, video, event, "miss");
        rng.random_bool(self.grounding_miss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: TimeWindow = TimeWindow { start: 0, end: 60 };

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let draw = |w: TimeWindow, ch: &str| substream(7, ToolId::VideoReader, "v1", w, ch).random::<u64>();
        assert_eq!(draw(W, "a"), draw(W, "a"));
        assert_ne!(draw(W, "a"), draw(W, "b"));
        assert_ne!(draw(W, "a"), draw(TimeWindow { start: 0, end: 10 }, "a"));
    }

    #[test]
    fn forced_channels() {
        let p = PerturbationModel { reader_count_noise: 1.0, reader_count_bias: vec![2], ..Default::default() };
        assert_eq!(p.reader_bias(1, "v", W, "cup"), 2);
        let p = PerturbationModel { detector_drop: 1.0, ..Default::default() };
        assert_eq!(p.detector_loss(1, "v", W, "cup"), 1);
        assert_eq!(PerturbationModel::none().reader_bias(1, "v", W, "cup"), 0);
        let p = PerturbationModel {
            forced: vec![ForcedBias {
                tool: ToolId::VideoReader,
                video: "D".into(),
                category: "grocery bag".into(),
                bias: 1,
                wide_only: true,
            }],
            ..Default::default()
        };
        assert_eq!(p.reader_bias(1, "D", W, "grocery bag"), 1);
        assert_eq!(p.reader_bias(1, "D", TimeWindow { start: 0, end: 10 }, "grocery bag"), 0);
    }

    #[test]
    fn narrowed_windows_are_less_noisy() {
        let p = PerturbationModel { reader_count_noise: 0.4, ..Default::default() };
        let fires = |w: fn(u32) -> TimeWindow| {
            (0..4000u32).filter(|&i| p.reader_bias(i as u64, "v", w(i), "cup") != 0).count() as f64 / 4000.0
        };
        let wide = fires(|_| W);
        let narrow = fires(|_| TimeWindow { start: 0, end: 10 });
        // expected rates 0.4 and 0.1
        assert!((wide - 0.4).abs() < 0.04, "{wide}");
        assert!((narrow - 0.1).abs() < 0.03, "{narrow}");
    }

    #[test]
    fn validation() {
        assert!(PerturbationModel { detector_drop: 1.5, ..Default::default() }.validate().is_err());
        assert!(PerturbationModel { reader_count_noise: 0.3, reader_count_bias: vec![], ..Default::default() }
            .validate()
            .is_err());
        assert!(PerturbationModel::counting(0.3, 0.1).validate().is_ok());
    }
}
