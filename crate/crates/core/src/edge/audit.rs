//! Scores a tracker against scenario ground truth.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tracker::{iou, TrackState};
use crate::scenario::GroundTruthFrame;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerStats {
    pub tracks: u64,
    pub id_switches: u64,
}

/// Counts identity switches: a ground-truth entity matched to a different
/// track than the one it was last matched to.
#[derive(Debug, Clone)]
pub struct TrackAudit {
    min_iou: f64,
    last: HashMap<String, u64>,
    switches: u64,
}

impl Default for TrackAudit {
    fn default() -> Self {
        Self::new(0.5)
    }
}

impl TrackAudit {
    pub fn new(min_iou: f64) -> Self {
        Self {
            min_iou,
            last: HashMap::new(),
            switches: 0,
        }
    }

    /// Match active tracks to ground-truth boxes greedily by IoU (same class).
    pub fn observe<'a>(&mut self, frame: &GroundTruthFrame, tracks: impl IntoIterator<Item = &'a TrackState>) {
        let tracks: Vec<&TrackState> = tracks.into_iter().filter(|t| t.is_active()).collect();
        let mut pairs = Vec::new();
        for (gi, g) in frame.boxes.iter().enumerate() {
            for (ti, t) in tracks.iter().enumerate() {
                if t.class != g.class {
                    continue;
                }
                let s = iou(&g.bbox, &t.bbox);
                if s >= self.min_iou {
                    pairs.push((s, gi, ti));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut g_used = vec![false; frame.boxes.len()];
        let mut t_used = vec![false; tracks.len()];
        for (_, gi, ti) in pairs {
            if g_used[gi] || t_used[ti] {
                continue;
            }
            g_used[gi] = true;
            t_used[ti] = true;
            let id = tracks[ti].track_id;
            if let Some(prev) = self.last.insert(frame.boxes[gi].entity_id.clone(), id) {
                if prev != id {
                    self.switches += 1;
                }
            }
        }
    }

    pub fn id_switches(&self) -> u64 {
        self.switches
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{BBox, GtBox, ObjectClass};

    fn track(id: u64, x: f64) -> TrackState {
        TrackState::fixture(id, ObjectClass::Person, BBox::new(x, 0.0, 10.0, 10.0))
    }

    fn frame(n: u64, x: f64) -> GroundTruthFrame {
        GroundTruthFrame {
            camera_id: "cam1".into(),
            frame_no: n,
            ts: 0,
            boxes: vec![GtBox {
                entity_id: "e".into(),
                class: ObjectClass::Person,
                bbox: BBox::new(x, 0.0, 10.0, 10.0),
            }],
        }
    }

    #[test]
    fn switch_counted_once() {
        let mut a = TrackAudit::default();
        a.observe(&frame(0, 0.0), &[track(1, 0.0)]);
        a.observe(&frame(1, 0.0), &[track(1, 0.0)]);
        assert_eq!(a.id_switches(), 0);
        a.observe(&frame(2, 0.0), &[track(2, 0.0)]);
        a.observe(&frame(3, 0.0), &[track(2, 0.0)]);
        assert_eq!(a.id_switches(), 1);
        // unmatched frames do not reset identity
        a.observe(&frame(4, 100.0), &[track(2, 0.0)]);
        a.observe(&frame(5, 0.0), &[track(2, 0.0)]);
        assert_eq!(a.id_switches(), 1);
    }
}
