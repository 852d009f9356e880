use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ast::{Predicate, Query};
use crate::fog::{ClipKey, ClipRef, FogState, StoredClip};
use crate::time::local_time_of_day_ms;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRow {
    pub camera_id: String,
    pub start_ts: i64,
    pub end_ts: i64,
    pub matched_keys: Vec<String>,
    pub clip_ref: ClipRef,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub rows: Vec<ResultRow>,
}

impl QueryResult {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn time_matches(fog: &FogState, clip: &ClipRef, pred: &Predicate) -> bool {
    match pred {
        Predicate::Time { range } => {
            range.contains_ms(local_time_of_day_ms(clip.start_ts, fog.config().tz_offset_min))
        }
        Predicate::Camera { ids } => ids.contains(&clip.camera_id),
        _ => unreachable!("not a context predicate"),
    }
}

fn leaf_set(fog: &FogState, pred: &Predicate) -> BTreeSet<ClipKey> {
    match pred.lookup() {
        Some((key, cmp, literal)) => fog.index_lookup(&key, cmp, &literal),
        None => fog
            .clips()
            .filter(|(_, c)| time_matches(fog, &c.clip_ref, pred))
            .map(|(k, _)| k)
            .collect(),
    }
}

/// Clip set of `q` by index lookups and set algebra.
pub fn clip_set(fog: &FogState, q: &Query) -> BTreeSet<ClipKey> {
    match q {
        Query::And { lhs, rhs } => {
            let l = clip_set(fog, lhs);
            if l.is_empty() {
                return l;
            }
            let r = clip_set(fog, rhs);
            l.intersection(&r).copied().collect()
        }
        Query::Or { lhs, rhs } => {
            let mut l = clip_set(fog, lhs);
            l.extend(clip_set(fog, rhs));
            l
        }
        Query::Not { inner } => {
            let i = clip_set(fog, inner);
            fog.universe().difference(&i).copied().collect()
        }
        Query::Pred { pred } => leaf_set(fog, pred),
    }
}

fn assemble(
    fog: &FogState,
    q: &Query,
    clips: &BTreeSet<ClipKey>,
    key_holds: impl Fn(ClipKey, &Predicate) -> bool,
) -> QueryResult {
    let leaves: Vec<(String, &Predicate)> = q
        .positive_leaves()
        .into_iter()
        .filter_map(|p| p.lookup().map(|(k, _, _)| (k, p)))
        .collect();
    let mut rows: Vec<ResultRow> = clips
        .iter()
        .map(|&k| {
            let clip_ref = fog.clip(k).expect("indexed clip").clip_ref.clone();
            let mut matched_keys: Vec<String> = Vec::new();
            for (key, p) in &leaves {
                if !matched_keys.contains(key) && key_holds(k, p) {
                    matched_keys.push(key.clone());
                }
            }
            ResultRow {
                camera_id: clip_ref.camera_id.clone(),
                start_ts: clip_ref.start_ts,
                end_ts: clip_ref.end_ts,
                matched_keys,
                clip_ref,
            }
        })
        .collect();
    rows.sort_by(|a, b| (a.start_ts, &a.camera_id, &a.clip_ref).cmp(&(b.start_ts, &b.camera_id, &b.clip_ref)));
    QueryResult { rows }
}

/// Evaluate through the inverted index.
pub fn evaluate(fog: &FogState, q: &Query) -> QueryResult {
    let clips = clip_set(fog, q);
    let leaf_sets: Vec<(&Predicate, BTreeSet<ClipKey>)> = q
        .positive_leaves()
        .into_iter()
        .filter(|p| p.lookup().is_some())
        .map(|p| (p, leaf_set(fog, p)))
        .collect();
    assemble(fog, q, &clips, |k, p| {
        leaf_sets
            .iter()
            .any(|(lp, set)| std::ptr::eq(*lp, p) && set.contains(&k))
    })
}

fn clip_holds(fog: &FogState, clip: &StoredClip, q: &Query) -> bool {
    match q {
        Query::And { lhs, rhs } => clip_holds(fog, clip, lhs) && clip_holds(fog, clip, rhs),
        Query::Or { lhs, rhs } => clip_holds(fog, clip, lhs) || clip_holds(fog, clip, rhs),
        Query::Not { inner } => !clip_holds(fog, clip, inner),
        Query::Pred { pred } => pred_holds_scan(fog, clip, pred),
    }
}

fn pred_holds_scan(fog: &FogState, clip: &StoredClip, pred: &Predicate) -> bool {
    match pred.lookup() {
        Some((key, cmp, literal)) => clip
            .records
            .iter()
            .any(|r| *r.key == *key && cmp.holds(&r.value, &literal)),
        None => time_matches(fog, &clip.clip_ref, pred),
    }
}

/// Evaluate by scanning every retained record, bypassing the index.
pub fn evaluate_scan(fog: &FogState, q: &Query) -> QueryResult {
    let clips: BTreeSet<ClipKey> = fog
        .clips()
        .filter(|(_, c)| clip_holds(fog, c, q))
        .map(|(k, _)| k)
        .collect();
    assemble(fog, q, &clips, |k, p| {
        pred_holds_scan(fog, fog.clip(k).expect("indexed clip"), p)
    })
}
