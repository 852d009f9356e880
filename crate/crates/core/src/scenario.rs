//! Synthetic camera world.
//!
//! Entities move piecewise-linearly between waypoints on one camera's image
//! plane. Each frame yields the ground-truth boxes the rest of the pipeline
//! treats as what the sensor saw.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::DailyInterval;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown camera `{0}`")]
    UnknownCamera(String),
    #[error("frame {frame_no} out of range (scenario has {frame_count} frames)")]
    FrameOutOfRange { frame_no: u64, frame_count: u64 },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Axis-aligned bounding box in pixels, `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Person,
    Vehicle,
    Other,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 3] = [ObjectClass::Person, ObjectClass::Vehicle, ObjectClass::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Person => "person",
            ObjectClass::Vehicle => "vehicle",
            ObjectClass::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDef {
    pub camera_id: String,
    pub width: u32,
    pub height: u32,
    pub location: String,
    pub zone: String,
    pub open_hours: DailyInterval,
    pub terrain: String,
}

/// `(time_s, x, y)`; `(x, y)` is the box's top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint(pub f64, pub f64, pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityDef {
    pub entity_id: String,
    pub camera_id: String,
    pub class: ObjectClass,
    pub waypoints: Vec<Waypoint>,
    pub box_size: (f64, f64),
}

impl EntityDef {
    /// Top-left position at scenario time `t` (seconds), or `None` outside
    /// the waypoint span.
    pub fn position_at(&self, t: f64) -> Option<(f64, f64)> {
        let first = self.waypoints.first()?;
        let last = self.waypoints.last()?;
        if t < first.0 || t > last.0 {
            return None;
        }
        if self.waypoints.len() == 1 {
            return Some((first.1, first.2));
        }
        let i = self
            .waypoints
            .windows(2)
            .position(|w| t <= w[1].0)
            .unwrap_or(self.waypoints.len() - 2);
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let f = (t - a.0) / (b.0 - a.0);
        Some((a.1 + (b.1 - a.1) * f, a.2 + (b.2 - a.2) * f))
    }

    /// Velocity (px/s) of the segment active at `t`, if any.
    pub fn velocity_at(&self, t: f64) -> Option<(f64, f64)> {
        let i = self
            .waypoints
            .windows(2)
            .position(|w| w[0].0 <= t && t <= w[1].0)?;
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let dt = b.0 - a.0;
        Some(((b.1 - a.1) / dt, (b.2 - a.2) / dt))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub entity_id: String,
    pub class: ObjectClass,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub camera_id: String,
    pub frame_no: u64,
    pub ts: i64,
    pub boxes: Vec<GtBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub start_epoch_ms: i64,
    pub fps: u32,
    pub duration_s: u32,
    pub cameras: Vec<CameraDef>,
    pub entities: Vec<EntityDef>,
}

/// Parse and validate a scenario document.
pub fn load_world(config_text: &str) -> Result<WorldConfig, ScenarioError> {
    let world: WorldConfig = serde_json::from_str(config_text)?;
    world.validate()?;
    Ok(world)
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.fps < 1 {
            return Err(invalid("fps", "must be >= 1"));
        }
        if self.duration_s < 1 {
            return Err(invalid("duration_s", "must be >= 1"));
        }
        let mut seen = HashSet::new();
        for (i, cam) in self.cameras.iter().enumerate() {
            if !is_token(&cam.camera_id) {
                return Err(invalid(
                    format!("cameras[{i}].camera_id"),
                    "must be a nonempty identifier ([A-Za-z_][A-Za-z0-9_]*)",
                ));
            }
            if !seen.insert(cam.camera_id.as_str()) {
                return Err(invalid(
                    format!("cameras[{i}].camera_id"),
                    format!("duplicate camera id `{}`", cam.camera_id),
                ));
            }
            if cam.width == 0 || cam.height == 0 {
                return Err(invalid(format!("cameras[{i}].width/height"), "must be > 0"));
            }
        }
        let mut seen = HashSet::new();
        for (i, ent) in self.entities.iter().enumerate() {
            let field = |f: &str| format!("entities[{i}].{f}");
            if ent.entity_id.is_empty() {
                return Err(invalid(field("entity_id"), "must be nonempty"));
            }
            if !seen.insert(ent.entity_id.as_str()) {
                return Err(invalid(
                    field("entity_id"),
                    format!("duplicate entity id `{}`", ent.entity_id),
                ));
            }
            let cam = self
                .camera(&ent.camera_id)
                .ok_or_else(|| invalid(field("camera_id"), format!("unknown camera `{}`", ent.camera_id)))?;
            let (w, h) = ent.box_size;
            if !(w > 0.0 && h > 0.0) {
                return Err(invalid(field("box_size"), "width and height must be > 0"));
            }
            if ent.waypoints.is_empty() {
                return Err(invalid(field("waypoints"), "at least one waypoint required"));
            }
            if ent.waypoints.windows(2).any(|p| p[0].0.partial_cmp(&p[1].0) != Some(std::cmp::Ordering::Less)) {
                return Err(invalid(field("waypoints"), "times must be strictly increasing"));
            }
            for (j, wp) in ent.waypoints.iter().enumerate() {
                let Waypoint(t, x, y) = *wp;
                if !(t.is_finite() && x.is_finite() && y.is_finite()) {
                    return Err(invalid(format!("entities[{i}].waypoints[{j}]"), "must be finite"));
                }
                if x < 0.0 || y < 0.0 || x + w > cam.width as f64 || y + h > cam.height as f64 {
                    return Err(invalid(
                        format!("entities[{i}].waypoints[{j}]"),
                        "box leaves camera bounds",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn camera(&self, camera_id: &str) -> Option<&CameraDef> {
        self.cameras.iter().find(|c| c.camera_id == camera_id)
    }

    pub fn frame_count(&self) -> u64 {
        self.fps as u64 * self.duration_s as u64
    }

    /// Epoch timestamp of a frame, floored to whole milliseconds.
    pub fn frame_ts(&self, frame_no: u64) -> i64 {
        self.start_epoch_ms + (frame_no as i64 * 1000) / self.fps as i64
    }

    /// Exact scenario time of a frame in seconds.
    pub fn frame_time_s(&self, frame_no: u64) -> f64 {
        frame_no as f64 / self.fps as f64
    }

    pub fn end_epoch_ms(&self) -> i64 {
        self.frame_ts(self.frame_count() - 1)
    }

    pub fn ground_truth(&self, camera_id: &str, frame_no: u64) -> Result<GroundTruthFrame, ScenarioError> {
        let cam = self
            .camera(camera_id)
            .ok_or_else(|| ScenarioError::UnknownCamera(camera_id.to_string()))?;
        if frame_no >= self.frame_count() {
            return Err(ScenarioError::FrameOutOfRange {
                frame_no,
                frame_count: self.frame_count(),
            });
        }
        let t = self.frame_time_s(frame_no);
        let boxes = self
            .entities
            .iter()
            .filter(|e| e.camera_id == camera_id)
            .filter_map(|e| {
                let (x, y) = e.position_at(t)?;
                let (w, h) = e.box_size;
                let x = x.clamp(0.0, (cam.width as f64 - w).max(0.0));
                let y = y.clamp(0.0, (cam.height as f64 - h).max(0.0));
                Some(GtBox {
                    entity_id: e.entity_id.clone(),
                    class: e.class,
                    bbox: BBox::new(x, y, w, h),
                })
            })
            .collect();
        Ok(GroundTruthFrame {
            camera_id: camera_id.to_string(),
            frame_no,
            ts: self.frame_ts(frame_no),
            boxes,
        })
    }

    /// Frames with `start_ts <= ts <= end_ts`, in frame order. Ranges outside
    /// the scenario yield an empty clip.
    pub fn clip(&self, camera_id: &str, start_ts: i64, end_ts: i64) -> Result<Vec<GroundTruthFrame>, ScenarioError> {
        if self.camera(camera_id).is_none() {
            return Err(ScenarioError::UnknownCamera(camera_id.to_string()));
        }
        let Some((first, last)) = self.frame_range(start_ts, end_ts) else {
            return Ok(Vec::new());
        };
        (first..=last).map(|f| self.ground_truth(camera_id, f)).collect()
    }

    /// Inclusive frame-number range whose timestamps fall in `[start_ts, end_ts]`.
    pub fn frame_range(&self, start_ts: i64, end_ts: i64) -> Option<(u64, u64)> {
        if start_ts > end_ts {
            return None;
        }
        let fps = self.fps as i64;
        let lo = (start_ts - self.start_epoch_ms).max(0);
        let hi = end_ts - self.start_epoch_ms;
        if hi < 0 {
            return None;
        }
        let first = (lo * fps + 999).div_euclid(1000);
        let last = ((hi + 1) * fps + 999).div_euclid(1000) - 1;
        let last = last.min(self.frame_count() as i64 - 1);
        (first <= last).then_some((first as u64, last as u64))
    }
}

pub(crate) fn is_token(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
