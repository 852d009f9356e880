//! Cloud tier: hourly `count_person` profiles, z-score alarms and
//! feedback-driven sensitivity.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::features::count_key;
use crate::fog::ContextualizedRecord;
use crate::scenario::ObjectClass;

pub const STD_FLOOR: f64 = 1e-6;
pub const N_MIN: u64 = 10;

/// Running moments for one hour of day.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HourStats {
    pub n: u64,
    sum: f64,
    /// Welford running mean, used only to update `m2`.
    run_mean: f64,
    m2: f64,
}

impl HourStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        let d = x - self.run_mean;
        self.run_mean += d / self.n as f64;
        self.m2 += d * (x - self.run_mean);
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }

    /// Population standard deviation.
    pub fn std(&self) -> Option<f64> {
        (self.n > 0).then(|| (self.m2.max(0.0) / self.n as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraProfile {
    pub camera_id: String,
    pub hours: [HourStats; 24],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourSnapshot {
    pub h: u8,
    pub n: u64,
    pub mean: f64,
    pub std: f64,
}

/// `{camera_id, hours:[{h, n, mean, std}]}`; hours without samples are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSnapshot {
    pub camera_id: String,
    pub hours: Vec<HourSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Score {
    Z(f64),
    InsufficientData,
}

impl CameraProfile {
    pub fn new(camera_id: impl Into<String>) -> Self {
        Self {
            camera_id: camera_id.into(),
            hours: [HourStats::default(); 24],
        }
    }

    pub fn observe(&mut self, hour: u8, value: f64) {
        self.hours[hour as usize].push(value);
    }

    pub fn zscore(&self, hour: u8, value: f64) -> Score {
        let s = &self.hours[hour as usize % 24];
        match (s.n >= N_MIN, s.mean(), s.std()) {
            (true, Some(mean), Some(std)) => Score::Z((value - mean) / std.max(STD_FLOOR)),
            _ => Score::InsufficientData,
        }
    }

    pub fn snapshot(&self) -> ProfileSnapshot {
        ProfileSnapshot {
            camera_id: self.camera_id.clone(),
            hours: self
                .hours
                .iter()
                .enumerate()
                .filter(|(_, s)| s.n > 0)
                .map(|(h, s)| HourSnapshot {
                    h: h as u8,
                    n: s.n,
                    mean: s.mean().unwrap_or_default(),
                    std: s.std().unwrap_or_default(),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snap: &ProfileSnapshot) -> Result<Self, CloudError> {
        let mut p = Self::new(snap.camera_id.clone());
        for h in &snap.hours {
            if h.h > 23 || h.std.partial_cmp(&0.0).is_none_or(|o| o.is_lt()) || !h.mean.is_finite() {
                return Err(CloudError::BadSnapshot(format!("hour entry {h:?}")));
            }
            let n = h.n as f64;
            p.hours[h.h as usize] = HourStats {
                n: h.n,
                sum: h.mean * n,
                run_mean: h.mean,
                m2: h.std * h.std * n,
            };
        }
        Ok(p)
    }
}

/// Profile `count_person` per local hour for one camera.
pub fn build_profile<'a>(records: impl IntoIterator<Item = &'a ContextualizedRecord>, camera_id: &str) -> CameraProfile {
    let key = count_key(ObjectClass::Person);
    let mut p = CameraProfile::new(camera_id);
    for r in records {
        if r.record.camera_id != camera_id || r.record.key != key {
            continue;
        }
        if let Some(v) = r.record.value.as_f64() {
            p.observe(r.hour_of_day, v);
        }
    }
    p
}

#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("unknown event `{0}`")]
    UnknownEvent(String),
    #[error("invalid sensitivity: {0}")]
    BadSensitivity(String),
    #[error("invalid profile snapshot: {0}")]
    BadSnapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    TrueAlarm,
    FalseAlarm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmDecision {
    Fire,
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub event_id: String,
    pub verdict: Verdict,
    pub k_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityState {
    pub k: f64,
    pub delta: f64,
    pub k_min: f64,
    pub k_max: f64,
    #[serde(default)]
    pub known_events: BTreeSet<String>,
    #[serde(default)]
    pub feedback_log: Vec<FeedbackEntry>,
}

impl Default for SensitivityState {
    fn default() -> Self {
        Self {
            k: 3.0,
            delta: 0.5,
            k_min: 1.0,
            k_max: 6.0,
            known_events: BTreeSet::new(),
            feedback_log: Vec::new(),
        }
    }
}

impl SensitivityState {
    pub fn validate(&self) -> Result<(), CloudError> {
        let ok = self.k_min > 0.0
            && self.k_min <= self.k_max
            && (self.k_min..=self.k_max).contains(&self.k)
            && self.delta > 0.0
            && self.k_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(CloudError::BadSensitivity(format!(
                "k={} in [{}, {}], delta={}",
                self.k, self.k_min, self.k_max, self.delta
            )))
        }
    }

    pub fn alarm(&self, score: Score) -> AlarmDecision {
        match score {
            Score::Z(z) if z >= self.k => AlarmDecision::Fire,
            _ => AlarmDecision::Hold,
        }
    }

    pub fn register_event(&mut self, event_id: impl Into<String>) {
        self.known_events.insert(event_id.into());
    }

    pub fn feedback(&mut self, event_id: &str, verdict: Verdict) -> Result<f64, CloudError> {
        if !self.known_events.contains(event_id) {
            return Err(CloudError::UnknownEvent(event_id.to_string()));
        }
        self.k = match verdict {
            Verdict::FalseAlarm => (self.k + self.delta).min(self.k_max),
            Verdict::TrueAlarm => (self.k - self.delta / 2.0).max(self.k_min),
        };
        self.feedback_log.push(FeedbackEntry {
            event_id: event_id.to_string(),
            verdict,
            k_after: self.k,
        });
        Ok(self.k)
    }
}
