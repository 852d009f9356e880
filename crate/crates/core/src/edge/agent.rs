use serde::{Deserialize, Serialize};

use super::detector::{Detector, NoiseParams};
use super::features::{ExtractCtx, ExtractorRegistry};
use super::record::FeatureRecord;
use super::tracker::{TrackEvent, Tracker, TrackerParams};
use super::EdgeError;
use crate::scenario::{GroundTruthFrame, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeParams {
    /// Detector fires on frames where `frame_no % cadence == 0`.
    pub cadence: u32,
    pub noise: NoiseParams,
    pub tracker: TrackerParams,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            cadence: 15,
            noise: NoiseParams::default(),
            tracker: TrackerParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame: GroundTruthFrame,
    pub detector_fired: bool,
    pub records: Vec<FeatureRecord>,
    pub events: Vec<TrackEvent>,
}

/// One camera's agent. Frames must be fed in order.
pub struct EdgeAgent<'w> {
    world: &'w WorldConfig,
    camera_id: String,
    params: EdgeParams,
    detector: Detector,
    tracker: Tracker,
    registry: ExtractorRegistry,
    next_frame: u64,
}

impl<'w> EdgeAgent<'w> {
    pub fn new(world: &'w WorldConfig, camera_id: &str, params: EdgeParams) -> Result<Self, EdgeError> {
        Self::with_registry(world, camera_id, params, ExtractorRegistry::with_builtins())
    }

    pub fn with_registry(
        world: &'w WorldConfig,
        camera_id: &str,
        params: EdgeParams,
        registry: ExtractorRegistry,
    ) -> Result<Self, EdgeError> {
        if params.cadence == 0 {
            return Err(EdgeError::InvalidCadence);
        }
        if world.camera(camera_id).is_none() {
            return Err(crate::scenario::ScenarioError::UnknownCamera(camera_id.to_string()).into());
        }
        Ok(Self {
            world,
            camera_id: camera_id.to_string(),
            params,
            detector: Detector::for_camera(params.noise, camera_id)?,
            tracker: Tracker::new(camera_id, params.tracker, world.fps),
            registry,
            next_frame: 0,
        })
    }

    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }

    pub fn params(&self) -> &EdgeParams {
        &self.params
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn registry_mut(&mut self) -> &mut ExtractorRegistry {
        &mut self.registry
    }

    pub fn is_done(&self) -> bool {
        self.next_frame >= self.world.frame_count()
    }

    pub fn next_frame_no(&self) -> u64 {
        self.next_frame
    }

    /// Capture, detect (on cadence), track and extract the next frame.
    pub fn process_next(&mut self) -> Result<Option<FrameOutput>, EdgeError> {
        if self.is_done() {
            return Ok(None);
        }
        let frame = self.world.ground_truth(&self.camera_id, self.next_frame)?;
        self.next_frame += 1;
        let fired = frame.frame_no % self.params.cadence as u64 == 0;
        let detections = fired.then(|| self.detector.detect(&frame));
        let events = self.tracker.step(detections.as_deref(), &frame)?;
        let ctx = ExtractCtx {
            frame: &frame,
            tracks: self.tracker.tracks().iter().filter(|t| t.is_active()).collect(),
            frame_period_s: self.tracker.frame_period_s(),
        };
        let records = self.registry.extract(&ctx)?;
        Ok(Some(FrameOutput {
            frame,
            detector_fired: fired,
            records,
            events,
        }))
    }

    /// Process the rest of the current cadence interval, returning its frames.
    /// Intervals are `[k * cadence, (k + 1) * cadence)`; the last may be short.
    pub fn process_interval(&mut self) -> Result<Vec<FrameOutput>, EdgeError> {
        let cadence = self.params.cadence as u64;
        let mut out = Vec::with_capacity(cadence as usize);
        while let Some(o) = self.process_next()? {
            out.push(o);
            if self.next_frame.is_multiple_of(cadence) {
                break;
            }
        }
        Ok(out)
    }
}
