//! Test oracles shared by the integration suites: a brute-force clip
//! evaluator over raw ledger blocks and a seeded query generator.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;

use eiqis_core::chainlog::LedgerBlock;
use eiqis_core::edge::FeatureRecord;
use eiqis_core::fog::EventRecord;
use eiqis_core::query::{Predicate, Query};
use eiqis_core::time::{DailyInterval, TimeOfDay};
use eiqis_core::{Cmp, ObjectClass, Value};

/// One ledger block seen as a clip, rebuilt straight from its payload.
#[derive(Debug, Clone)]
pub struct OracleClip {
    pub camera_id: String,
    pub first_frame: u64,
    pub last_frame: u64,
    pub start_ts: i64,
    pub facts: Vec<(String, Value)>,
}

/// Rebuild clips from raw blocks. Each event lands in the clip whose frame
/// range holds its frame.
pub fn oracle_clips<'a>(
    blocks: impl IntoIterator<Item = (&'a str, &'a LedgerBlock)>,
    events: &[EventRecord],
) -> Vec<OracleClip> {
    let mut clips: Vec<OracleClip> = blocks
        .into_iter()
        .filter(|(_, b)| !b.payload.is_empty())
        .map(|(cam, b)| {
            let recs: Vec<FeatureRecord> = b
                .payload
                .iter()
                .map(|l| FeatureRecord::parse_line(l).expect("payload line"))
                .collect();
            OracleClip {
                camera_id: cam.to_string(),
                first_frame: recs.iter().map(|r| r.frame_no).min().unwrap(),
                last_frame: recs.iter().map(|r| r.frame_no).max().unwrap(),
                start_ts: recs.iter().map(|r| r.ts).min().unwrap(),
                facts: recs.into_iter().map(|r| (r.key, r.value)).collect(),
            }
        })
        .collect();
    for e in events {
        let c = clips
            .iter_mut()
            .find(|c| c.camera_id == e.camera_id && c.first_frame <= e.frame_no && e.frame_no <= c.last_frame)
            .expect("event inside some clip");
        c.facts.push(("event".into(), Value::Str(e.rule.clone())));
    }
    clips
}

fn as_num(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Num(f) => Some(*f),
        Value::Str(_) => None,
    }
}

fn satisfies(v: &Value, cmp: Cmp, lit: &Value) -> bool {
    let ord = match (v, lit) {
        (Value::Str(a), Value::Str(b)) => a.cmp(b),
        (Value::Str(_), _) | (_, Value::Str(_)) => return false,
        (Value::Int(a), Value::Int(b)) => a.cmp(b),
        _ => match as_num(v).unwrap().partial_cmp(&as_num(lit).unwrap()) {
            Some(o) => o,
            None => return false,
        },
    };
    use std::cmp::Ordering::*;
    match cmp {
        Cmp::Eq => ord == Equal,
        Cmp::Ne => ord != Equal,
        Cmp::Lt => ord == Less,
        Cmp::Le => ord != Greater,
        Cmp::Gt => ord == Greater,
        Cmp::Ge => ord != Less,
    }
}

fn in_daily(range: &DailyInterval, ts: i64, tz_offset_min: i32) -> bool {
    let day = 86_400_000;
    let tod = ((ts + tz_offset_min as i64 * 60_000) % day + day) % day;
    let s = (range.start.hour() as i64 * 60 + range.start.minute() as i64) * 60_000;
    let e = (range.end.hour() as i64 * 60 + range.end.minute() as i64) * 60_000;
    match s.cmp(&e) {
        std::cmp::Ordering::Equal => true,
        std::cmp::Ordering::Less => s <= tod && tod < e,
        std::cmp::Ordering::Greater => tod >= s || tod < e,
    }
}

fn holds(c: &OracleClip, q: &Query, tz: i32) -> bool {
    match q {
        Query::And { lhs, rhs } => holds(c, lhs, tz) && holds(c, rhs, tz),
        Query::Or { lhs, rhs } => holds(c, lhs, tz) || holds(c, rhs, tz),
        Query::Not { inner } => !holds(c, inner, tz),
        Query::Pred { pred } => match pred {
            Predicate::Key { key, cmp, literal } => {
                c.facts.iter().any(|(k, v)| k == key && satisfies(v, *cmp, literal))
            }
            Predicate::Count { class, cmp, n } => {
                let key = format!("count_{}", class.as_str());
                c.facts.iter().any(|(k, v)| *k == key && satisfies(v, *cmp, &Value::Int(*n)))
            }
            Predicate::Time { range } => in_daily(range, c.start_ts, tz),
            Predicate::Camera { ids } => ids.contains(&c.camera_id),
        },
    }
}

/// `(camera_id, first_frame)` of every clip satisfying `q`.
pub fn oracle_eval(clips: &[OracleClip], q: &Query, tz_offset_min: i32) -> BTreeSet<(String, u64)> {
    clips
        .iter()
        .filter(|c| holds(c, q, tz_offset_min))
        .map(|c| (c.camera_id.clone(), c.first_frame))
        .collect()
}

pub fn row_set(rows: &[eiqis_core::query::ResultRow]) -> BTreeSet<(String, u64)> {
    rows.iter().map(|r| (r.camera_id.clone(), r.clip_ref.first_frame)).collect()
}

fn tod<R: Rng>(rng: &mut R) -> TimeOfDay {
    TimeOfDay::new(rng.random_range(0..24), [0, 15, 30, 45][rng.random_range(0..4)]).unwrap()
}

fn literal<R: Rng>(rng: &mut R, key: &str) -> Value {
    match key {
        "speed" => Value::Num(rng.random_range(0..1200) as f64 / 10.0),
        "direction" => Value::Num(rng.random_range(0..360) as f64),
        "pos_x" | "pos_y" => Value::Int(rng.random_range(0..640)),
        "dwell_time" => Value::Num(rng.random_range(0..600) as f64 / 10.0),
        "event" => Value::Str(["congestion", "loitering"][rng.random_range(0..2)].into()),
        _ => Value::Int(rng.random_range(-1..5)),
    }
}

/// A random predicate over the keys a pipeline run produces. Literals sit
/// in the ranges those keys actually take so results are rarely trivial.
pub fn random_pred<R: Rng>(rng: &mut R, cameras: &[&str]) -> Predicate {
    const KEYS: [&str; 7] = ["speed", "direction", "pos_x", "pos_y", "dwell_time", "event", "missing_key"];
    let cmp = Cmp::ALL[rng.random_range(0..Cmp::ALL.len())];
    match rng.random_range(0..10) {
        0..=4 => {
            let key = KEYS[rng.random_range(0..KEYS.len())];
            let mut literal = literal(rng, key);
            if rng.random_range(0..20) == 0 {
                literal = Value::Str("x".into());
            }
            Predicate::Key { key: key.into(), cmp, literal }
        }
        5..=6 => Predicate::Count {
            class: ObjectClass::ALL[rng.random_range(0..3)],
            cmp,
            n: rng.random_range(0..14),
        },
        7 => Predicate::Time {
            range: DailyInterval::new(tod(rng), tod(rng)),
        },
        _ => {
            let n = rng.random_range(1..=cameras.len());
            Predicate::Camera {
                ids: (0..n).map(|_| cameras[rng.random_range(0..cameras.len())].to_string()).collect(),
            }
        }
    }
}

pub fn random_query<R: Rng>(rng: &mut R, depth: u32, cameras: &[&str]) -> Query {
    if depth == 0 || rng.random_range(0..3) == 0 {
        return Query::pred(random_pred(rng, cameras));
    }
    match rng.random_range(0..3) {
        0 => Query::and(random_query(rng, depth - 1, cameras), random_query(rng, depth - 1, cameras)),
        1 => Query::or(random_query(rng, depth - 1, cameras), random_query(rng, depth - 1, cameras)),
        _ => Query::not(random_query(rng, depth - 1, cameras)),
    }
}

/// `(query, offset)` pairs from a caret-annotated fixture.
pub fn malformed_fixtures(text: &str) -> Vec<(String, usize)> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    lines
        .chunks(2)
        .map(|p| {
            let caret = p[1].find('^').expect("caret line");
            (p[0].to_string(), caret)
        })
        .collect()
}

pub fn camera(id: &str, open: (&str, &str)) -> eiqis_core::CameraDef {
    eiqis_core::CameraDef {
        camera_id: id.into(),
        width: 640,
        height: 480,
        location: format!("{id} post"),
        zone: "yard".into(),
        open_hours: DailyInterval::new(open.0.parse().unwrap(), open.1.parse().unwrap()),
        terrain: "paved".into(),
    }
}

/// A fog fed with `blocks` (camera, records) in order, plus the sealed
/// blocks for the oracle.
pub fn synthetic_fog(
    config: eiqis_core::fog::FogConfig,
    blocks: &[(String, Vec<FeatureRecord>)],
) -> (eiqis_core::fog::FogState, Vec<(String, LedgerBlock)>) {
    use std::collections::BTreeMap;
    let key = eiqis_core::chainlog::ChannelKey::new(b"k".to_vec());
    let mut fog = eiqis_core::fog::FogState::new(config).unwrap();
    let mut chains: BTreeMap<String, eiqis_core::chainlog::Chain> = BTreeMap::new();
    let mut sealed = Vec::new();
    for (cam, recs) in blocks {
        let chain = chains
            .entry(cam.clone())
            .or_insert_with(|| eiqis_core::chainlog::Chain::new(cam.clone()));
        let b = chain.append_records(recs, &key).unwrap().clone();
        fog.ingest_block(cam, &b, &key).unwrap();
        sealed.push((cam.clone(), b));
    }
    (fog, sealed)
}

/// Worst-case motion error against scenario ground truth.
#[derive(Debug, Default, Clone, Copy)]
pub struct MotionCheck {
    pub speed_samples: usize,
    pub direction_samples: usize,
    pub max_speed_rel_err: f64,
    pub max_direction_err_deg: f64,
}

/// Compare every emitted `speed`/`direction` with the generating entity's
/// true velocity, wherever that entity moved on one straight segment for the
/// whole history window (`history_len` detections, `cadence` frames apart).
pub fn motion_check(
    world: &eiqis_core::WorldConfig,
    camera_id: &str,
    blocks: &[LedgerBlock],
    cadence: u64,
    history_len: u64,
) -> MotionCheck {
    use std::collections::BTreeMap;
    let mut per_track: BTreeMap<(u64, u64), BTreeMap<String, f64>> = BTreeMap::new();
    for b in blocks {
        for l in &b.payload {
            let r = FeatureRecord::parse_line(l).unwrap();
            if let (Some(t), Some(v)) = (r.track_id, as_num(&r.value)) {
                per_track.entry((r.frame_no, t)).or_default().insert(r.key, v);
            }
        }
    }
    let fps = world.fps as f64;
    let mut out = MotionCheck::default();
    for ((frame, _), f) in &per_track {
        let Some(&speed) = f.get("speed") else { continue };
        let (px, py) = (f["pos_x"], f["pos_y"]);
        let t = *frame as f64 / fps;
        let last_detection = frame - frame % cadence;
        let Some(window_start) = last_detection.checked_sub((history_len - 1) * cadence) else {
            continue;
        };
        let t0 = window_start as f64 / fps;
        let entity = world
            .entities
            .iter()
            .filter(|e| e.camera_id == camera_id)
            .filter_map(|e| {
                let (x, y) = e.position_at(t)?;
                let d = (x + e.box_size.0 / 2.0 - px).hypot(y + e.box_size.1 / 2.0 - py);
                (d < 2.0).then_some(e)
            })
            .next();
        let Some(e) = entity else { continue };
        let straight = e.waypoints.windows(2).any(|w| w[0].0 <= t0 && t <= w[1].0);
        if !straight {
            continue;
        }
        let (vx, vy) = e.velocity_at(t).unwrap();
        let v = vx.hypot(vy);
        out.speed_samples += 1;
        let err = if v > 0.0 { (speed - v).abs() / v } else { speed.abs() };
        out.max_speed_rel_err = out.max_speed_rel_err.max(err);
        if let Some(&dir) = f.get("direction") {
            if v > 0.0 {
                let truth = vy.atan2(vx).to_degrees().rem_euclid(360.0);
                let d = (dir - truth).rem_euclid(360.0);
                out.direction_samples += 1;
                out.max_direction_err_deg = out.max_direction_err_deg.max(d.min(360.0 - d));
            }
        }
    }
    out
}
