//! Feature-extractor registry.
//!
//! Each extractor is a small service declaring the keys it emits. Adding an
//! extractor widens the set of keys the fog can index.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::record::FeatureRecord;
use super::tracker::TrackState;
use crate::scenario::{GroundTruthFrame, ObjectClass};
use crate::value::Value;

pub const KEY_POS_X: &str = "pos_x";
pub const KEY_POS_Y: &str = "pos_y";
pub const KEY_SPEED: &str = "speed";
pub const KEY_DIRECTION: &str = "direction";

/// Direction is emitted only past this displacement (px) over the window.
pub const MIN_DIRECTION_DISPLACEMENT: f64 = 1.0;

pub fn count_key(class: ObjectClass) -> String {
    format!("count_{class}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorLevel {
    PerTrack,
    PerFrame,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorDef {
    pub name: String,
    pub level: ExtractorLevel,
    pub emitted_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("key `{key}` already emitted by extractor `{owner}`")]
    KeyCollision { key: String, owner: String },
    #[error("extractor `{0}` already registered")]
    DuplicateName(String),
    #[error("extractor `{extractor}` emitted undeclared key `{key}`")]
    UndeclaredKey { extractor: String, key: String },
    #[error("extractor `{extractor}` emitted a record at the wrong level")]
    LevelMismatch { extractor: String },
    #[error("extractor `{extractor}` emitted `{key}` twice for the same subject")]
    DuplicateRecord { extractor: String, key: String },
    #[error("invalid extractor definition: {0}")]
    InvalidDef(String),
}

/// What an extractor sees for one frame.
pub struct ExtractCtx<'a> {
    pub frame: &'a GroundTruthFrame,
    /// Tracks matched at the latest detector firing, ascending by id.
    pub tracks: Vec<&'a TrackState>,
    pub frame_period_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub track_id: Option<u64>,
    pub key: String,
    pub value: Value,
}

impl Emission {
    pub fn track(track_id: u64, key: &str, value: impl Into<Value>) -> Self {
        Self {
            track_id: Some(track_id),
            key: key.to_string(),
            value: value.into(),
        }
    }

    pub fn frame(key: &str, value: impl Into<Value>) -> Self {
        Self {
            track_id: None,
            key: key.to_string(),
            value: value.into(),
        }
    }
}

pub type ExtractFn = Box<dyn Fn(&ExtractCtx<'_>) -> Vec<Emission> + Send + Sync>;

struct Registered {
    def: ExtractorDef,
    run: ExtractFn,
}

pub struct ExtractorRegistry {
    extractors: Vec<Registered>,
}

impl Default for ExtractorRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl ExtractorRegistry {
    pub fn empty() -> Self {
        Self {
            extractors: Vec::new(),
        }
    }

    /// Motion (`pos_x`, `pos_y`, `speed`, `direction`) and per-class counts.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        let (def, f) = motion_extractor();
        reg.register(def, f).expect("builtin");
        let (def, f) = class_count_extractor();
        reg.register(def, f).expect("builtin");
        reg
    }

    pub fn register(&mut self, def: ExtractorDef, run: ExtractFn) -> Result<(), RegistryError> {
        if def.name.is_empty() || def.emitted_keys.is_empty() {
            return Err(RegistryError::InvalidDef(
                "name and emitted_keys must be nonempty".into(),
            ));
        }
        if let Some(k) = def.emitted_keys.iter().find(|k| !crate::scenario::is_token(k)) {
            return Err(RegistryError::InvalidDef(format!("key `{k}` is not an identifier")));
        }
        if self.extractors.iter().any(|r| r.def.name == def.name) {
            return Err(RegistryError::DuplicateName(def.name));
        }
        let mut own = HashSet::new();
        for key in &def.emitted_keys {
            if !own.insert(key) {
                return Err(RegistryError::InvalidDef(format!("key `{key}` declared twice")));
            }
            if let Some(r) = self.extractors.iter().find(|r| r.def.emitted_keys.contains(key)) {
                return Err(RegistryError::KeyCollision {
                    key: key.clone(),
                    owner: r.def.name.clone(),
                });
            }
        }
        self.extractors.push(Registered { def, run });
        Ok(())
    }

    pub fn deregister(&mut self, name: &str) -> Option<ExtractorDef> {
        let i = self.extractors.iter().position(|r| r.def.name == name)?;
        Some(self.extractors.remove(i).def)
    }

    pub fn defs(&self) -> impl Iterator<Item = &ExtractorDef> {
        self.extractors.iter().map(|r| &r.def)
    }

    /// Run every extractor over one frame. Records come out in registration
    /// order, each extractor's output in the order it emitted them.
    pub fn extract(&self, ctx: &ExtractCtx<'_>) -> Result<Vec<FeatureRecord>, RegistryError> {
        let mut out = Vec::new();
        for r in &self.extractors {
            let mut seen = HashSet::new();
            for e in (r.run)(ctx) {
                if !r.def.emitted_keys.contains(&e.key) {
                    return Err(RegistryError::UndeclaredKey {
                        extractor: r.def.name.clone(),
                        key: e.key,
                    });
                }
                let level_ok = match r.def.level {
                    ExtractorLevel::PerTrack => e.track_id.is_some(),
                    ExtractorLevel::PerFrame => e.track_id.is_none(),
                };
                if !level_ok {
                    return Err(RegistryError::LevelMismatch {
                        extractor: r.def.name.clone(),
                    });
                }
                if !seen.insert((e.track_id, e.key.clone())) {
                    return Err(RegistryError::DuplicateRecord {
                        extractor: r.def.name.clone(),
                        key: e.key,
                    });
                }
                out.push(FeatureRecord {
                    ts: ctx.frame.ts,
                    camera_id: ctx.frame.camera_id.clone(),
                    frame_no: ctx.frame.frame_no,
                    track_id: e.track_id,
                    key: e.key,
                    value: e.value,
                });
            }
        }
        Ok(out)
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Speed (px/s) and, past the displacement floor, direction (degrees,
/// counterclockwise from +x) over the track's history window.
pub fn window_motion(track: &TrackState, frame_period_s: f64) -> Option<(f64, Option<f64>)> {
    let (first, last) = (track.history.front()?, track.history.back()?);
    let elapsed = (last.frame_no - first.frame_no) as f64 * frame_period_s;
    if elapsed <= 0.0 {
        return None;
    }
    let dx = last.center.0 - first.center.0;
    let dy = last.center.1 - first.center.1;
    let dist = dx.hypot(dy);
    let direction = (dist > MIN_DIRECTION_DISPLACEMENT).then(|| dy.atan2(dx).to_degrees().rem_euclid(360.0));
    Some((dist / elapsed, direction))
}

pub fn motion_extractor() -> (ExtractorDef, ExtractFn) {
    let def = ExtractorDef {
        name: "motion".into(),
        level: ExtractorLevel::PerTrack,
        emitted_keys: [KEY_POS_X, KEY_POS_Y, KEY_SPEED, KEY_DIRECTION]
            .map(String::from)
            .to_vec(),
    };
    let run: ExtractFn = Box::new(|ctx| {
        let mut out = Vec::new();
        for t in &ctx.tracks {
            let (cx, cy) = t.bbox.center();
            out.push(Emission::track(t.track_id, KEY_POS_X, round3(cx)));
            out.push(Emission::track(t.track_id, KEY_POS_Y, round3(cy)));
            if let Some((speed, direction)) = window_motion(t, ctx.frame_period_s) {
                out.push(Emission::track(t.track_id, KEY_SPEED, round3(speed)));
                if let Some(d) = direction {
                    let d = round3(d);
                    let d = if d >= 360.0 { 0.0 } else { d };
                    out.push(Emission::track(t.track_id, KEY_DIRECTION, d));
                }
            }
        }
        out
    });
    (def, run)
}

pub fn class_count_extractor() -> (ExtractorDef, ExtractFn) {
    let def = ExtractorDef {
        name: "class_count".into(),
        level: ExtractorLevel::PerFrame,
        emitted_keys: ObjectClass::ALL.iter().map(|c| count_key(*c)).collect(),
    };
    let run: ExtractFn = Box::new(|ctx| {
        let mut counts: BTreeMap<ObjectClass, i64> = ObjectClass::ALL.iter().map(|c| (*c, 0)).collect();
        for t in &ctx.tracks {
            *counts.entry(t.class).or_default() += 1;
        }
        ObjectClass::ALL
            .iter()
            .map(|c| Emission::frame(&count_key(*c), counts[c]))
            .collect()
    });
    (def, run)
}

/// Seconds each active track has existed: frames alive times frame period.
pub fn dwell_time_extractor() -> (ExtractorDef, ExtractFn) {
    let def = ExtractorDef {
        name: "dwell".into(),
        level: ExtractorLevel::PerTrack,
        emitted_keys: vec!["dwell_time".into()],
    };
    let run: ExtractFn = Box::new(|ctx| {
        ctx.tracks
            .iter()
            .map(|t| {
                Emission::track(
                    t.track_id,
                    "dwell_time",
                    round3(t.frames_alive as f64 * ctx.frame_period_s),
                )
            })
            .collect()
    });
    (def, run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::tracker::{HistorySample, Tracker, TrackerParams};
    use crate::edge::Detection;
    use crate::scenario::{BBox, GtBox};

    fn frame(n: u64, boxes: Vec<(ObjectClass, BBox)>) -> GroundTruthFrame {
        GroundTruthFrame {
            camera_id: "cam1".into(),
            frame_no: n,
            ts: 1000 + n as i64 * 100,
            boxes: boxes
                .into_iter()
                .enumerate()
                .map(|(i, (class, bbox))| GtBox {
                    entity_id: format!("e{i}"),
                    class,
                    bbox,
                })
                .collect(),
        }
    }

    fn step_all(tr: &mut Tracker, f: &GroundTruthFrame) {
        let dets: Vec<_> = f
            .boxes
            .iter()
            .map(|g| Detection {
                class: g.class,
                bbox: g.bbox,
                confidence: 1.0,
            })
            .collect();
        tr.step(Some(&dets), f).unwrap();
    }

    fn ctx<'a>(f: &'a GroundTruthFrame, tr: &'a Tracker) -> ExtractCtx<'a> {
        ExtractCtx {
            frame: f,
            tracks: tr.tracks().iter().filter(|t| t.is_active()).collect(),
            frame_period_s: tr.frame_period_s(),
        }
    }

    fn track_with_history(samples: &[(u64, (f64, f64))]) -> TrackState {
        let mut tr = Tracker::new("cam1", TrackerParams::default(), 10);
        let f = frame(0, vec![(ObjectClass::Person, BBox::new(0.0, 0.0, 2.0, 2.0))]);
        step_all(&mut tr, &f);
        let mut t = tr.tracks()[0].clone();
        t.history = samples
            .iter()
            .map(|&(frame_no, center)| HistorySample {
                frame_no,
                ts: frame_no as i64 * 100,
                center,
            })
            .collect();
        t
    }

    #[test]
    fn speed_is_displacement_over_elapsed_time() {
        // (0,0) -> (3,4) over 10 frames at 10 fps = 1 s
        let t = track_with_history(&[(0, (0.0, 0.0)), (5, (1.0, 1.0)), (10, (3.0, 4.0))]);
        let (speed, dir) = window_motion(&t, 0.1).unwrap();
        assert!((speed - 5.0).abs() < 1e-12);
        assert!((dir.unwrap() - 53.130_102_354_155_98).abs() < 1e-9);
    }

    #[test]
    fn direction_conventions() {
        let up = track_with_history(&[(0, (0.0, 0.0)), (10, (0.0, 7.0))]);
        assert_eq!(window_motion(&up, 0.1).unwrap().1, Some(90.0));
        let left = track_with_history(&[(0, (0.0, 0.0)), (10, (-7.0, 0.0))]);
        assert_eq!(window_motion(&left, 0.1).unwrap().1, Some(180.0));
        let down = track_with_history(&[(0, (0.0, 0.0)), (10, (0.0, -7.0))]);
        assert_eq!(window_motion(&down, 0.1).unwrap().1, Some(270.0));
        let still = track_with_history(&[(0, (0.0, 0.0)), (10, (0.5, 0.5))]);
        assert_eq!(window_motion(&still, 0.1).unwrap().1, None);
        let single = track_with_history(&[(0, (0.0, 0.0))]);
        assert_eq!(window_motion(&single, 0.1), None);
    }

    #[test]
    fn counts_per_class() {
        let mut tr = Tracker::new("cam1", TrackerParams::default(), 10);
        let mut boxes: Vec<_> = (0..12)
            .map(|i| (ObjectClass::Person, BBox::new(i as f64 * 50.0, 0.0, 20.0, 40.0)))
            .collect();
        boxes.push((ObjectClass::Vehicle, BBox::new(0.0, 200.0, 100.0, 50.0)));
        let f = frame(0, boxes);
        step_all(&mut tr, &f);
        let recs = ExtractorRegistry::with_builtins().extract(&ctx(&f, &tr)).unwrap();
        let get = |k: &str| recs.iter().find(|r| r.key == k).unwrap().value.clone();
        assert_eq!(get("count_person"), Value::Int(12));
        assert_eq!(get("count_vehicle"), Value::Int(1));
        assert_eq!(get("count_other"), Value::Int(0));
        // no history window yet: positions only
        assert_eq!(recs.iter().filter(|r| r.key == KEY_POS_X).count(), 13);
        assert_eq!(recs.iter().filter(|r| r.key == KEY_SPEED).count(), 0);
    }

    #[test]
    fn extraction_is_pure() {
        let mut tr = Tracker::new("cam1", TrackerParams::default(), 10);
        for n in 0..6 {
            let f = frame(n, vec![(ObjectClass::Person, BBox::new(n as f64 * 4.0, 0.0, 20.0, 40.0))]);
            step_all(&mut tr, &f);
        }
        let f = frame(5, vec![]);
        let reg = ExtractorRegistry::with_builtins();
        let a = reg.extract(&ctx(&f, &tr)).unwrap();
        let b = reg.extract(&ctx(&f, &tr)).unwrap();
        assert_eq!(a, b);
        let speed = a.iter().find(|r| r.key == KEY_SPEED).unwrap();
        assert_eq!(speed.value, Value::Num(40.0));
    }

    #[test]
    fn custom_extractor_lifecycle() {
        let mut reg = ExtractorRegistry::with_builtins();
        let (def, f) = dwell_time_extractor();
        reg.register(def, f).unwrap();

        let mut tr = Tracker::new("cam1", TrackerParams::default(), 10);
        let mut last = None;
        for n in 0..8 {
            let f = frame(n, vec![(ObjectClass::Person, BBox::new(5.0, 5.0, 20.0, 40.0))]);
            step_all(&mut tr, &f);
            last = Some(f);
        }
        let f = last.unwrap();
        let recs = reg.extract(&ctx(&f, &tr)).unwrap();
        let dwell = recs.iter().find(|r| r.key == "dwell_time").unwrap();
        // 8 frames alive at 10 fps
        assert_eq!(dwell.value, Value::Num(0.8));

        let clash = ExtractorDef {
            name: "fast".into(),
            level: ExtractorLevel::PerTrack,
            emitted_keys: vec!["speed".into()],
        };
        match reg.register(clash, Box::new(|_| vec![])) {
            Err(RegistryError::KeyCollision { key, owner }) => {
                assert_eq!(key, "speed");
                assert_eq!(owner, "motion");
            }
            other => panic!("{other:?}"),
        }

        reg.deregister("dwell").unwrap();
        let recs = reg.extract(&ctx(&f, &tr)).unwrap();
        assert!(recs.iter().all(|r| r.key != "dwell_time"));
    }

    #[test]
    fn undeclared_key_is_a_violation() {
        let mut reg = ExtractorRegistry::empty();
        let def = ExtractorDef {
            name: "liar".into(),
            level: ExtractorLevel::PerFrame,
            emitted_keys: vec!["declared".into()],
        };
        reg.register(def, Box::new(|_| vec![Emission::frame("other", 1i64)]))
            .unwrap();
        let f = frame(0, vec![]);
        let tr = Tracker::new("cam1", TrackerParams::default(), 10);
        assert!(matches!(
            reg.extract(&ctx(&f, &tr)),
            Err(RegistryError::UndeclaredKey { .. })
        ));
    }
}
