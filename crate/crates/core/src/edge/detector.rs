//! Scenario-oracle detector: ground-truth boxes with seeded misses and jitter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EdgeError;
use crate::scenario::{BBox, GroundTruthFrame, ObjectClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub miss_rate: f64,
    pub jitter_px: f64,
    pub seed: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            miss_rate: 0.0,
            jitter_px: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: ObjectClass,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

pub struct Detector {
    noise: NoiseParams,
    rng: ChaCha8Rng,
}

impl Detector {
    /// `stream` separates the random streams of detectors sharing a seed
    /// (one per camera).
    pub fn new(noise: NoiseParams, stream: u64) -> Result<Self, EdgeError> {
        if !(0.0..1.0).contains(&noise.miss_rate) {
            return Err(EdgeError::InvalidNoise(format!(
                "miss_rate {} outside [0, 1)",
                noise.miss_rate
            )));
        }
        if !(noise.jitter_px >= 0.0 && noise.jitter_px.is_finite()) {
            return Err(EdgeError::InvalidNoise(format!(
                "jitter_px {} must be finite and >= 0",
                noise.jitter_px
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        rng.set_stream(stream);
        Ok(Self { noise, rng })
    }

    pub fn for_camera(noise: NoiseParams, camera_id: &str) -> Result<Self, EdgeError> {
        Self::new(noise, fnv1a(camera_id.as_bytes()))
    }

    pub fn detect(&mut self, frame: &GroundTruthFrame) -> Vec<Detection> {
        let NoiseParams { miss_rate, jitter_px, .. } = self.noise;
        let mut out = Vec::with_capacity(frame.boxes.len());
        for gt in &frame.boxes {
            if miss_rate > 0.0 && self.rng.random::<f64>() < miss_rate {
                continue;
            }
            let mut bbox = gt.bbox;
            if jitter_px > 0.0 {
                bbox.x += self.rng.random_range(-jitter_px..=jitter_px);
                bbox.y += self.rng.random_range(-jitter_px..=jitter_px);
            }
            out.push(Detection {
                class: gt.class,
                bbox,
                confidence: 1.0 - miss_rate,
            });
        }
        out
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}
