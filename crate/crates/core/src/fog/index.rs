//! Inverted index: `(key, value bucket) -> clips`.
//!
//! Numeric values land in fixed-width interval buckets per key, strings in
//! literal buckets. Buckets only narrow the candidate set; callers verify
//! candidates against raw records for exact answers.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Bound;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::value::{Cmp, Value};

/// Position of a clip: camera index (cameras sorted by id) and the block seq
/// on that camera's channel. Orders like `(camera_id, start_ts)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClipKey {
    pub camera: u32,
    pub seq: u64,
}

/// A replayable span of one camera's footage.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClipRef {
    pub camera_id: String,
    pub start_ts: i64,
    pub end_ts: i64,
    pub first_frame: u64,
    pub last_frame: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BucketConfig {
    /// Interval width per numeric key.
    pub widths: BTreeMap<String, f64>,
    /// Width for numeric keys not listed above. 1 makes integer keys exact.
    pub default_width: f64,
}

impl Default for BucketConfig {
    fn default() -> Self {
        let widths = [("speed", 10.0), ("direction", 45.0), ("pos_x", 64.0), ("pos_y", 64.0)]
            .into_iter()
            .map(|(k, w)| (k.to_string(), w))
            .collect();
        Self {
            widths,
            default_width: 1.0,
        }
    }
}

impl BucketConfig {
    pub fn width(&self, key: &str) -> f64 {
        self.widths.get(key).copied().unwrap_or(self.default_width)
    }

    pub fn validate(&self) -> Result<(), String> {
        std::iter::once(("<default>", &self.default_width))
            .chain(self.widths.iter().map(|(k, w)| (k.as_str(), w)))
            .find(|(_, w)| !(**w > 0.0 && w.is_finite()))
            .map_or(Ok(()), |(k, w)| Err(format!("bucket width for `{k}` must be > 0, got {w}")))
    }
}

fn numeric_bucket(v: f64, width: f64) -> i64 {
    // saturating cast keeps the mapping monotone for extreme values
    (v / width).floor() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueBucket {
    Exact { value: i64 },
    Literal { value: String },
    Interval { lo: f64, hi: f64 },
}

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct KeyIndex {
    numeric: BTreeMap<i64, BTreeSet<ClipKey>>,
    strings: BTreeMap<String, BTreeSet<ClipKey>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry<P = ClipKey> {
    pub key: String,
    pub bucket: ValueBucket,
    pub postings: Vec<P>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    buckets: BucketConfig,
    keys: BTreeMap<Arc<str>, KeyIndex>,
}

impl InvertedIndex {
    pub fn new(buckets: BucketConfig) -> Self {
        Self {
            buckets,
            keys: BTreeMap::new(),
        }
    }

    pub fn bucket_config(&self) -> &BucketConfig {
        &self.buckets
    }

    pub fn insert(&mut self, key: &Arc<str>, value: &Value, clip: ClipKey) {
        let width = self.buckets.width(key);
        let entry = match self.keys.get_mut(key) {
            Some(e) => e,
            None => self.keys.entry(key.clone()).or_default(),
        };
        let set = match value {
            Value::Str(s) => match entry.strings.get_mut(s) {
                Some(set) => set,
                None => entry.strings.entry(s.clone()).or_default(),
            },
            v => {
                let b = numeric_bucket(v.as_f64().expect("numeric"), width);
                entry.numeric.entry(b).or_default()
            }
        };
        set.insert(clip);
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.keys.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.keys.keys().map(|k| &**k)
    }

    /// Clips in every bucket that can hold a value satisfying
    /// `value <cmp> literal`. A superset of the exact answer.
    pub fn candidates(&self, key: &str, cmp: Cmp, literal: &Value) -> BTreeSet<ClipKey> {
        let mut out = BTreeSet::new();
        let Some(entry) = self.keys.get(key) else {
            return out;
        };
        match literal {
            Value::Str(s) => {
                let range: Box<dyn Iterator<Item = &BTreeSet<ClipKey>>> = match cmp {
                    Cmp::Eq => Box::new(entry.strings.get(s).into_iter()),
                    Cmp::Ne => Box::new(entry.strings.values()),
                    Cmp::Lt | Cmp::Le => Box::new(
                        entry
                            .strings
                            .range::<str, _>((Bound::Unbounded, Bound::Included(s.as_str())))
                            .map(|(_, v)| v),
                    ),
                    Cmp::Gt | Cmp::Ge => Box::new(
                        entry
                            .strings
                            .range::<str, _>((Bound::Included(s.as_str()), Bound::Unbounded))
                            .map(|(_, v)| v),
                    ),
                };
                range.for_each(|set| out.extend(set.iter().copied()));
            }
            lit => {
                let x = lit.as_f64().expect("numeric");
                let width = self.buckets.width(key);
                let b = numeric_bucket(x, width);
                // a literal on a bucket's lower edge excludes that bucket for `<`
                let lt_end = if cmp == Cmp::Lt && b as f64 * width == x { b - 1 } else { b };
                let range: Box<dyn Iterator<Item = &BTreeSet<ClipKey>>> = match cmp {
                    Cmp::Eq => Box::new(entry.numeric.get(&b).into_iter()),
                    Cmp::Ne => Box::new(entry.numeric.values()),
                    Cmp::Lt | Cmp::Le => Box::new(entry.numeric.range(..=lt_end).map(|(_, v)| v)),
                    Cmp::Gt | Cmp::Ge => Box::new(entry.numeric.range(b..).map(|(_, v)| v)),
                };
                range.for_each(|set| out.extend(set.iter().copied()));
            }
        }
        out
    }

    /// Every `(key, bucket)` entry, keys in order, numeric buckets before
    /// string buckets.
    pub fn entries(&self) -> Vec<IndexEntry> {
        let mut out = Vec::new();
        for (key, e) in &self.keys {
            let width = self.buckets.width(key);
            for (b, set) in &e.numeric {
                let bucket = if width == 1.0 {
                    ValueBucket::Exact { value: *b }
                } else {
                    ValueBucket::Interval {
                        lo: *b as f64 * width,
                        hi: (*b + 1) as f64 * width,
                    }
                };
                out.push(IndexEntry {
                    key: key.to_string(),
                    bucket,
                    postings: set.iter().copied().collect(),
                });
            }
            for (s, set) in &e.strings {
                out.push(IndexEntry {
                    key: key.to_string(),
                    bucket: ValueBucket::Literal { value: s.clone() },
                    postings: set.iter().copied().collect(),
                });
            }
        }
        out
    }
}
