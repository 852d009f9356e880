//! Per-camera edge pipeline: detector at a fixed cadence, tracker in between,
//! and the feature-extractor registry.

mod agent;
pub mod audit;
pub mod detector;
pub mod features;
pub mod record;
pub mod tracker;

use thiserror::Error;

pub use audit::{TrackAudit, TrackerStats};
pub use agent::{EdgeAgent, EdgeParams, FrameOutput};
pub use detector::{Detection, Detector, NoiseParams};
pub use features::{ExtractCtx, ExtractFn, Emission, ExtractorDef, ExtractorLevel, ExtractorRegistry, RegistryError};
pub use record::{FeatureLog, FeatureRecord, LineError};
pub use tracker::{iou, TrackEvent, TrackState, Tracker, TrackerParams};

#[derive(Debug, Error)]
pub enum EdgeError {
    #[error("invalid noise parameters: {0}")]
    InvalidNoise(String),
    #[error("frame {got} arrived after frame {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error("frame for camera `{got}` sent to tracker of `{expected}`")]
    CameraMismatch { expected: String, got: String },
    #[error("detector cadence must be >= 1")]
    InvalidCadence,
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
}
