//! Constant-velocity multi-object tracker with greedy IoU association.
//!
//! Detections arrive only on detector-cadence frames. In between, every
//! track's box is extrapolated from its last matched detection using the
//! velocity measured between its last two matches.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::detector::Detection;
use super::EdgeError;
use crate::scenario::{BBox, GroundTruthFrame, ObjectClass};

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    /// Minimum IoU for a detection to continue a track.
    pub iou_threshold: f64,
    /// Detector firings a track may go unmatched before it is retired.
    pub max_misses: u32,
    /// Samples kept in each track's motion history.
    pub history_len: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.3,
            max_misses: 10,
            history_len: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistorySample {
    pub frame_no: u64,
    pub ts: i64,
    pub center: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub track_id: u64,
    pub camera_id: String,
    pub class: ObjectClass,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub history: VecDeque<HistorySample>,
    /// Pixels per second.
    pub velocity: (f64, f64),
    /// Consecutive detector firings without a match.
    pub misses: u32,
    pub born_frame: u64,
    pub frames_alive: u64,
    last_match: (u64, BBox),
}

impl TrackState {
    /// Matched at the most recent detector firing.
    pub fn is_active(&self) -> bool {
        self.misses == 0
    }

    #[cfg(test)]
    pub(crate) fn fixture(track_id: u64, class: ObjectClass, bbox: BBox) -> Self {
        Self {
            track_id,
            camera_id: "cam1".into(),
            class,
            bbox,
            history: VecDeque::new(),
            velocity: (0.0, 0.0),
            misses: 0,
            born_frame: 0,
            frames_alive: 0,
            last_match: (0, bbox),
        }
    }

    pub fn last_match_frame(&self) -> u64 {
        self.last_match.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TrackEvent {
    Opened { track_id: u64, frame_no: u64 },
    Retired { track_id: u64, frame_no: u64 },
}

pub struct Tracker {
    camera_id: String,
    params: TrackerParams,
    frame_period_s: f64,
    tracks: Vec<TrackState>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(camera_id: impl Into<String>, params: TrackerParams, fps: u32) -> Self {
        Self {
            camera_id: camera_id.into(),
            params,
            frame_period_s: 1.0 / fps.max(1) as f64,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    /// Live tracks in ascending id order.
    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    pub fn frame_period_s(&self) -> f64 {
        self.frame_period_s
    }

    /// Number of track ids handed out so far.
    pub fn tracks_opened(&self) -> u64 {
        self.next_id - 1
    }

    pub fn step(
        &mut self,
        detections: Option<&[Detection]>,
        frame: &GroundTruthFrame,
    ) -> Result<Vec<TrackEvent>, EdgeError> {
        if frame.camera_id != self.camera_id {
            return Err(EdgeError::CameraMismatch {
                expected: self.camera_id.clone(),
                got: frame.camera_id.clone(),
            });
        }
        if let Some(last) = self.last_frame {
            if frame.frame_no <= last {
                return Err(EdgeError::OutOfOrder {
                    last,
                    got: frame.frame_no,
                });
            }
        }
        self.last_frame = Some(frame.frame_no);
        let period = self.frame_period_s;

        for t in &mut self.tracks {
            let (f0, b0) = t.last_match;
            let dt = (frame.frame_no - f0) as f64 * period;
            t.bbox = b0.translated(t.velocity.0 * dt, t.velocity.1 * dt);
        }

        let mut events = Vec::new();
        if let Some(dets) = detections {
            let mut pairs = Vec::new();
            for (ti, t) in self.tracks.iter().enumerate() {
                for (di, d) in dets.iter().enumerate() {
                    if d.class != t.class {
                        continue;
                    }
                    let score = iou(&t.bbox, &d.bbox);
                    if score >= self.params.iou_threshold {
                        pairs.push((score, ti, di));
                    }
                }
            }
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

            let mut track_used = vec![false; self.tracks.len()];
            let mut det_used = vec![false; dets.len()];
            for (_, ti, di) in pairs {
                if track_used[ti] || det_used[di] {
                    continue;
                }
                track_used[ti] = true;
                det_used[di] = true;
                let t = &mut self.tracks[ti];
                let d = &dets[di];
                let (f0, b0) = t.last_match;
                let dt = (frame.frame_no - f0) as f64 * period;
                let (c0, c1) = (b0.center(), d.bbox.center());
                t.velocity = ((c1.0 - c0.0) / dt, (c1.1 - c0.1) / dt);
                t.bbox = d.bbox;
                t.last_match = (frame.frame_no, d.bbox);
                t.misses = 0;
            }
            for (t, used) in self.tracks.iter_mut().zip(&track_used) {
                if !used {
                    t.misses += 1;
                }
            }

            let max_misses = self.params.max_misses;
            self.tracks.retain(|t| {
                let keep = t.misses <= max_misses;
                if !keep {
                    events.push(TrackEvent::Retired {
                        track_id: t.track_id,
                        frame_no: frame.frame_no,
                    });
                }
                keep
            });

            for (d, _) in dets.iter().zip(&det_used).filter(|(_, used)| !**used) {
                let track_id = self.next_id;
                self.next_id += 1;
                self.tracks.push(TrackState {
                    track_id,
                    camera_id: self.camera_id.clone(),
                    class: d.class,
                    bbox: d.bbox,
                    history: VecDeque::with_capacity(self.params.history_len),
                    velocity: (0.0, 0.0),
                    misses: 0,
                    born_frame: frame.frame_no,
                    frames_alive: 0,
                    last_match: (frame.frame_no, d.bbox),
                });
                events.push(TrackEvent::Opened {
                    track_id,
                    frame_no: frame.frame_no,
                });
            }
        }

        let cap = self.params.history_len.max(1);
        for t in &mut self.tracks {
            if t.history.len() == cap {
                t.history.pop_front();
            }
            t.history.push_back(HistorySample {
                frame_no: frame.frame_no,
                ts: frame.ts,
                center: t.bbox.center(),
            });
            t.frames_alive += 1;
        }
        Ok(events)
    }
}
