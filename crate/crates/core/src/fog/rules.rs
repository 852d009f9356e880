//! Windowed anomaly rules over contextualized records.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::context::ContextualizedRecord;
use crate::value::{Cmp, Value};

pub const EVENT_KEY: &str = "event";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleGuard {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open_now: Option<bool>,
}

impl RuleGuard {
    pub fn holds(&self, rec: &ContextualizedRecord) -> bool {
        self.open_now.is_none_or(|want| rec.open_now == want)
    }
}

/// `{name, key, cmp, threshold, guard:{open_now}, window_ms, min_hits}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyRule {
    pub name: String,
    pub key: String,
    pub cmp: Cmp,
    pub threshold: Value,
    #[serde(default)]
    pub guard: RuleGuard,
    pub window_ms: i64,
    pub min_hits: u32,
}

impl AnomalyRule {
    pub fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() || self.key.is_empty() {
            return Err("rule name and key must be nonempty".into());
        }
        if self.window_ms <= 0 {
            return Err(format!("rule `{}`: window_ms must be > 0", self.name));
        }
        if self.min_hits < 1 {
            return Err(format!("rule `{}`: min_hits must be >= 1", self.name));
        }
        Ok(())
    }

    pub fn matches(&self, rec: &ContextualizedRecord) -> bool {
        rec.record.key == self.key && self.guard.holds(rec) && self.cmp.holds(&rec.record.value, &self.threshold)
    }
}

pub fn parse_rules(text: &str) -> Result<Vec<AnomalyRule>, String> {
    let rules: Vec<AnomalyRule> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    for r in &rules {
        r.validate()?;
    }
    let mut names: Vec<_> = rules.iter().map(|r| &r.name).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(format!("duplicate rule name `{}`", w[0]));
    }
    Ok(rules)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: String,
    pub rule: String,
    pub camera_id: String,
    pub ts: i64,
    pub frame_no: u64,
}

impl EventRecord {
    pub fn id_for(rule: &str, camera_id: &str, frame_no: u64) -> String {
        format!("{rule}@{camera_id}#{frame_no}")
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Window {
    hits: VecDeque<i64>,
    open: bool,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEngine {
    rules: Vec<AnomalyRule>,
    /// Per rule: camera -> trailing window.
    windows: Vec<BTreeMap<String, Window>>,
}

impl RuleEngine {
    pub fn new(rules: Vec<AnomalyRule>) -> Self {
        Self {
            windows: vec![BTreeMap::new(); rules.len()],
            rules,
        }
    }

    pub fn rules(&self) -> &[AnomalyRule] {
        &self.rules
    }

    /// Whether an event of `rule` is currently open on `camera_id`.
    pub fn is_open(&self, rule: &str, camera_id: &str) -> bool {
        self.rules
            .iter()
            .position(|r| r.name == rule)
            .and_then(|i| self.windows[i].get(camera_id))
            .is_some_and(|w| w.open)
    }

    /// Advance every rule's window on this record's camera to the record's
    /// time, then count it as a hit where it matches. Hits are kept in the
    /// trailing window `(ts - window_ms, ts]`.
    pub fn observe(&mut self, rec: &ContextualizedRecord) -> Vec<EventRecord> {
        let now = rec.record.ts;
        let camera = &rec.record.camera_id;
        let mut out = Vec::new();
        for (i, rule) in self.rules.iter().enumerate() {
            let hit = rule.matches(rec);
            let windows = &mut self.windows[i];
            let w = match windows.get_mut(camera) {
                Some(w) => w,
                None if hit => windows.entry(camera.clone()).or_default(),
                None => continue,
            };
            while w.hits.front().is_some_and(|&t| t <= now - rule.window_ms) {
                w.hits.pop_front();
            }
            if w.hits.is_empty() {
                w.open = false;
            }
            if hit {
                w.hits.push_back(now);
                if !w.open && w.hits.len() >= rule.min_hits as usize {
                    w.open = true;
                    out.push(EventRecord {
                        event_id: EventRecord::id_for(&rule.name, camera, rec.record.frame_no),
                        rule: rule.name.clone(),
                        camera_id: camera.clone(),
                        ts: now,
                        frame_no: rec.record.frame_no,
                    });
                }
            }
        }
        out
    }
}
