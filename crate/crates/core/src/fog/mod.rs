//! Fog tier: verifies edge blocks, contextualizes their records, indexes
//! them by key and value, and runs anomaly rules.

pub mod context;
pub mod index;
pub mod rules;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chainlog::{ChainHead, ChannelKey, Digest32, LedgerBlock, TamperReport, GENESIS_PREV};
use crate::edge::{FeatureRecord, LineError};
use crate::scenario::CameraDef;
use crate::value::{Cmp, Value};

pub use context::{contextualize, ContextualizedRecord};
pub use index::{BucketConfig, ClipKey, ClipRef, IndexEntry, InvertedIndex, ValueBucket};
pub use rules::{parse_rules, AnomalyRule, EventRecord, RuleEngine, RuleGuard, EVENT_KEY};

#[derive(Debug, Error)]
pub enum FogError {
    #[error("unknown camera `{0}`")]
    UnknownCamera(String),
    #[error("replay on `{channel}`: seq {seq} already accepted (next is {next})")]
    Replay { channel: String, seq: u64, next: u64 },
    #[error("block rejected: {0}")]
    Tampered(TamperReport),
    #[error(transparent)]
    Malformed(#[from] LineError),
    #[error("record for camera `{camera}` on channel `{channel}`")]
    ForeignRecord { channel: String, camera: String },
    #[error("invalid fog config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FogConfig {
    pub cameras: Vec<CameraDef>,
    #[serde(default)]
    pub rules: Vec<AnomalyRule>,
    #[serde(default)]
    pub tz_offset_min: i32,
    #[serde(default)]
    pub buckets: BucketConfig,
}

/// A retained raw record. Camera comes from the owning clip.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoredRecord {
    pub ts: i64,
    pub frame_no: u64,
    pub track_id: Option<u64>,
    pub key: Arc<str>,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoredClip {
    pub clip_ref: ClipRef,
    pub records: Vec<StoredRecord>,
    #[serde(skip)]
    by_key: BTreeMap<Arc<str>, Vec<u32>>,
}

impl StoredClip {
    /// Whether any record with `key` satisfies `value <cmp> literal`.
    pub fn any_match(&self, key: &str, cmp: Cmp, literal: &Value) -> bool {
        self.by_key
            .get(key)
            .is_some_and(|ix| ix.iter().any(|&i| cmp.holds(&self.records[i as usize].value, literal)))
    }

    pub fn has_key(&self, key: &str) -> bool {
        self.by_key.contains_key(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
struct ChannelState {
    next_seq: u64,
    #[serde(with = "crate::wire::hex32")]
    head: Digest32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub seq: u64,
    pub clip: ClipRef,
    /// Feature records plus emitted event records.
    pub indexed: usize,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupStats {
    pub lookups: u64,
    pub candidates_checked: u64,
}

#[derive(Debug, Serialize)]
pub struct FogState {
    #[serde(skip)]
    config: FogConfig,
    /// Sorted by id; position is the `ClipKey::camera` index.
    #[serde(skip)]
    cameras: Vec<CameraDef>,
    channels: BTreeMap<String, ChannelState>,
    #[serde(serialize_with = "clips_as_seq")]
    clips: BTreeMap<ClipKey, StoredClip>,
    index: InvertedIndex,
    rules: RuleEngine,
    events: Vec<EventRecord>,
    #[serde(skip)]
    interned: BTreeSet<Arc<str>>,
    #[serde(skip)]
    lookups: AtomicU64,
    #[serde(skip)]
    candidates_checked: AtomicU64,
}

fn clips_as_seq<S: serde::Serializer>(clips: &BTreeMap<ClipKey, StoredClip>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(clips.iter())
}

impl FogState {
    pub fn new(config: FogConfig) -> Result<Self, FogError> {
        config.buckets.validate().map_err(FogError::Config)?;
        for r in &config.rules {
            r.validate().map_err(FogError::Config)?;
        }
        let mut cameras = config.cameras.clone();
        cameras.sort_by(|a, b| a.camera_id.cmp(&b.camera_id));
        if let Some(w) = cameras.windows(2).find(|w| w[0].camera_id == w[1].camera_id) {
            return Err(FogError::Config(format!("duplicate camera `{}`", w[0].camera_id)));
        }
        Ok(Self {
            index: InvertedIndex::new(config.buckets.clone()),
            rules: RuleEngine::new(config.rules.clone()),
            config,
            cameras,
            channels: BTreeMap::new(),
            clips: BTreeMap::new(),
            events: Vec::new(),
            interned: BTreeSet::new(),
            lookups: AtomicU64::new(0),
            candidates_checked: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &FogConfig {
        &self.config
    }

    pub fn cameras(&self) -> &[CameraDef] {
        &self.cameras
    }

    fn camera_index(&self, camera_id: &str) -> Option<usize> {
        self.cameras
            .binary_search_by(|c| c.camera_id.as_str().cmp(camera_id))
            .ok()
    }

    pub fn camera_id_of(&self, clip: ClipKey) -> &str {
        &self.cameras[clip.camera as usize].camera_id
    }

    fn intern(&mut self, key: &str) -> Arc<str> {
        if let Some(k) = self.interned.get(key) {
            return k.clone();
        }
        let k: Arc<str> = Arc::from(key);
        self.interned.insert(k.clone());
        k
    }

    /// Verify `block` as the next block on `channel` (a camera id) and index
    /// its records. On any error the state is unchanged.
    pub fn ingest_block(
        &mut self,
        channel: &str,
        block: &LedgerBlock,
        key: &ChannelKey,
    ) -> Result<IngestReport, FogError> {
        let cam_ix = self
            .camera_index(channel)
            .ok_or_else(|| FogError::UnknownCamera(channel.to_string()))?;
        let (next, prev) = self
            .channels
            .get(channel)
            .map_or((0, GENESIS_PREV), |c| (c.next_seq, c.head));
        if block.seq < next {
            return Err(FogError::Replay {
                channel: channel.to_string(),
                seq: block.seq,
                next,
            });
        }
        block.check(next, &prev, key).map_err(|reason| {
            FogError::Tampered(TamperReport {
                first_bad_seq: block.seq,
                reason,
            })
        })?;
        let camera = self.cameras[cam_ix].clone();
        let mut ctx = Vec::with_capacity(block.payload.len());
        for line in &block.payload {
            let rec = FeatureRecord::parse_line(line)?;
            if rec.camera_id != channel {
                return Err(FogError::ForeignRecord {
                    channel: channel.to_string(),
                    camera: rec.camera_id,
                });
            }
            ctx.push(contextualize(&rec, &camera, self.config.tz_offset_min)?);
        }

        // Everything checked; mutate.
        let clip_key = ClipKey {
            camera: cam_ix as u32,
            seq: block.seq,
        };
        let mut records = Vec::with_capacity(ctx.len());
        let mut events = Vec::new();
        for c in &ctx {
            let r = &c.record;
            records.push(StoredRecord {
                ts: r.ts,
                frame_no: r.frame_no,
                track_id: r.track_id,
                key: self.intern(&r.key),
                value: r.value.clone(),
            });
            for ev in self.rules.observe(c) {
                records.push(StoredRecord {
                    ts: ev.ts,
                    frame_no: ev.frame_no,
                    track_id: None,
                    key: self.intern(EVENT_KEY),
                    value: Value::Str(ev.rule.clone()),
                });
                events.push(ev);
            }
        }
        let clip_ref = ClipRef {
            camera_id: channel.to_string(),
            start_ts: records.iter().map(|r| r.ts).min().unwrap_or_default(),
            end_ts: records.iter().map(|r| r.ts).max().unwrap_or_default(),
            first_frame: records.iter().map(|r| r.frame_no).min().unwrap_or_default(),
            last_frame: records.iter().map(|r| r.frame_no).max().unwrap_or_default(),
        };
        let mut by_key: BTreeMap<Arc<str>, Vec<u32>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            self.index.insert(&r.key, &r.value, clip_key);
            by_key.entry(r.key.clone()).or_default().push(i as u32);
        }
        let indexed = records.len();
        self.clips.insert(
            clip_key,
            StoredClip {
                clip_ref: clip_ref.clone(),
                records,
                by_key,
            },
        );
        self.channels.insert(
            channel.to_string(),
            ChannelState {
                next_seq: block.seq + 1,
                head: block.head_hash(),
            },
        );
        self.events.extend(events.iter().cloned());
        log::debug!("ingested {channel}#{} ({indexed} records)", block.seq);
        Ok(IngestReport {
            seq: block.seq,
            clip: clip_ref,
            indexed,
            events,
        })
    }

    /// Exact set of clips holding a record with `key` whose value satisfies
    /// `value <cmp> literal`.
    pub fn index_lookup(&self, key: &str, cmp: Cmp, literal: &Value) -> BTreeSet<ClipKey> {
        self.lookups.fetch_add(1, Ordering::Relaxed);
        let candidates = self.index.candidates(key, cmp, literal);
        self.candidates_checked
            .fetch_add(candidates.len() as u64, Ordering::Relaxed);
        candidates
            .into_iter()
            .filter(|c| self.clips[c].any_match(key, cmp, literal))
            .collect()
    }

    pub fn lookup_refs(&self, key: &str, cmp: Cmp, literal: &Value) -> Vec<ClipRef> {
        self.resolve(&self.index_lookup(key, cmp, literal))
    }

    pub fn resolve<'a>(&self, keys: impl IntoIterator<Item = &'a ClipKey>) -> Vec<ClipRef> {
        keys.into_iter().map(|k| self.clips[k].clip_ref.clone()).collect()
    }

    pub fn lookup_stats(&self) -> LookupStats {
        LookupStats {
            lookups: self.lookups.load(Ordering::Relaxed),
            candidates_checked: self.candidates_checked.load(Ordering::Relaxed),
        }
    }

    /// Every indexed clip.
    pub fn universe(&self) -> BTreeSet<ClipKey> {
        self.clips.keys().copied().collect()
    }

    pub fn clip(&self, key: ClipKey) -> Option<&StoredClip> {
        self.clips.get(&key)
    }

    pub fn clips(&self) -> impl Iterator<Item = (ClipKey, &StoredClip)> {
        self.clips.iter().map(|(k, c)| (*k, c))
    }

    /// Retained feature records (events excluded) with their context
    /// recomputed, in clip order.
    pub fn contextualized(&self) -> impl Iterator<Item = ContextualizedRecord> + '_ {
        self.clips.iter().flat_map(move |(k, clip)| {
            let camera = &self.cameras[k.camera as usize];
            clip.records.iter().filter(|r| &*r.key != EVENT_KEY).map(move |r| {
                let rec = FeatureRecord {
                    ts: r.ts,
                    camera_id: camera.camera_id.clone(),
                    frame_no: r.frame_no,
                    track_id: r.track_id,
                    key: r.key.to_string(),
                    value: r.value.clone(),
                };
                contextualize(&rec, camera, self.config.tz_offset_min).expect("camera matches")
            })
        })
    }

    pub fn record_count(&self) -> usize {
        self.clips.values().map(|c| c.records.len()).sum()
    }

    pub fn has_key(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.index.keys()
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn index_entries(&self) -> Vec<IndexEntry<ClipRef>> {
        self.index
            .entries()
            .into_iter()
            .map(|e| IndexEntry {
                postings: self.resolve(&e.postings),
                key: e.key,
                bucket: e.bucket,
            })
            .collect()
    }

    pub fn head(&self, channel: &str) -> Option<ChainHead> {
        self.channels.get(channel).map(|c| ChainHead {
            channel_id: channel.to_string(),
            seq: c.next_seq - 1,
            head_hash: c.head,
        })
    }

    /// Canonical bytes of the ingest-visible state (channels, clips, index,
    /// rule windows, events).
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("fog state serializes")
    }
}
