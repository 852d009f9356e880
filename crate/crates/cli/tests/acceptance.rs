//! Acceptance run over the campus fixture. Prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use eiqis_cli::run::{run_in_process, run_multi_process, InProcessRun};
use eiqis_cli::Deployment;
use eiqis_core::cloud::{build_profile, CameraProfile, Score, SensitivityState, Verdict};
use eiqis_core::edge::{FeatureRecord, TrackerParams};
use eiqis_core::fog::FogState;
use eiqis_core::pipeline::{bench_query, tamper_drills, RunOptions};
use eiqis_core::query::{evaluate, parse_query, Query};
use eiqis_core::queryd::Queryd;
use eiqis_core::time::local_hour;
use eiqis_core::wire::{Request, Status, WireMessage};
use eiqis_core::ObjectClass;

use common::{malformed_fixtures, motion_check, oracle_clips, oracle_eval, random_query, row_set};

const ORACLE_QUERIES: usize = 100;
const ORACLE_SEED: u64 = 0x5eed;
const ORACLE_BUDGET_S: f64 = 60.0;
const MIN_RECORDS: u64 = 100_000;
const MIN_SPEEDUP: f64 = 10.0;
const SELECTIVE_QUERY: &str = "speed > 95";
const BENCH_REPEATS: usize = 11;
const SPEED_REL_TOL: f64 = 0.01;
const DIRECTION_TOL_DEG: f64 = 1.0;
const DRILLS: usize = 50;
const DRILL_SEED: u64 = 2024;
const ROUND_TRIPS: usize = 500;
const DE_MORGAN_PAIRS: usize = 100;
const PROFILE_REL_TOL: f64 = 1e-9;
const FEEDBACK_SEQUENCES: usize = 1_000;
const CONGESTION_QUERY: &str = "COUNT(person) >= 10 AND TIME IN [22:00,06:00]";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn oracle_for(run: &InProcessRun) -> Vec<common::OracleClip> {
    let blocks = run
        .runs
        .iter()
        .flat_map(|r| r.chain.blocks().iter().map(move |b| (r.camera_id.as_str(), b)));
    oracle_clips(blocks, run.fog.events())
}

fn cameras(dep: &Deployment) -> Vec<&str> {
    dep.world.cameras.iter().map(|c| c.camera_id.as_str()).collect()
}

fn oracle_equivalence(dep: &Deployment, run: &InProcessRun) -> Outcome {
    let started = Instant::now();
    let clips = oracle_for(run);
    let cams = cameras(dep);
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_SEED);
    let mut equal = 0;
    let mut nonempty = 0;
    let mut first_bad = None;
    for _ in 0..ORACLE_QUERIES {
        let q = random_query(&mut rng, 4, &cams);
        let got = row_set(&evaluate(&run.fog, &q).rows);
        let want = oracle_eval(&clips, &q, dep.file.tz_offset_min);
        nonempty += usize::from(!want.is_empty());
        if got == want {
            equal += 1;
        } else if first_bad.is_none() {
            first_bad = Some(q.to_string());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        equal == ORACLE_QUERIES && secs <= ORACLE_BUDGET_S,
        format!(
            "{equal}/{ORACLE_QUERIES} equal ({nonempty} non-empty), {secs:.2}s{}",
            first_bad.map(|q| format!(", first mismatch `{q}`")).unwrap_or_default()
        ),
    )
}

fn congestion(dep: &Deployment, run: &InProcessRun) -> Outcome {
    let tz = dep.file.tz_offset_min;
    let events = run.fog.events();
    let night_ok = events.len() == 1 && events[0].rule == "congestion" && {
        let ev = &events[0];
        let tod_min = eiqis_core::time::local_time_of_day_ms(ev.ts, tz) / 60_000;
        (23 * 60 + 29..=23 * 60 + 31).contains(&tod_min)
    };
    let rows = evaluate(&run.fog, &parse_query(CONGESTION_QUERY).unwrap()).rows;
    let contains = events.first().is_some_and(|ev| {
        rows.iter().any(|r| {
            r.camera_id == ev.camera_id && r.clip_ref.first_frame <= ev.frame_no && ev.frame_no <= r.clip_ref.last_frame
        })
    });

    let mut day = dep.clone();
    // Same scenario, starting 13:55 local instead of 23:25.
    day.world.start_epoch_ms -= 9 * 3_600_000 + 30 * 60_000;
    let day_run = run_in_process(&day, RunOptions::default()).expect("afternoon run");
    let day_events = day_run.fog.events().len();
    let day_peak = peak_count(&day_run.fog);
    outcome(
        night_ok && contains && day_events == 0 && day_peak >= 12,
        format!(
            "23:30 events={} query rows={} contains event clip={contains}; 14:00 events={day_events} (peak count_person {day_peak})",
            events.len(),
            rows.len()
        ),
    )
}

fn peak_count(fog: &FogState) -> i64 {
    fog.clips()
        .flat_map(|(_, c)| c.records.iter())
        .filter(|r| &*r.key == "count_person")
        .filter_map(|r| match r.value {
            eiqis_core::Value::Int(i) => Some(i),
            _ => None,
        })
        .max()
        .unwrap_or(0)
}

fn speedup(run: &InProcessRun) -> Outcome {
    let records = run.fog.record_count() as u64;
    let b = bench_query(&run.fog, SELECTIVE_QUERY, BENCH_REPEATS).unwrap();
    let ratio = b.scan_ms / b.indexed_ms.max(1e-9);
    outcome(
        records >= MIN_RECORDS && b.equal && ratio >= MIN_SPEEDUP,
        format!(
            "{records} records, `{SELECTIVE_QUERY}` {} rows, indexed {:.3} ms vs scan {:.3} ms ({ratio:.1}x), equal={}",
            b.rows, b.indexed_ms, b.scan_ms, b.equal
        ),
    )
}

fn tracker_fidelity(dep: &Deployment, run: &InProcessRun) -> Outcome {
    let switches: u64 = run.runs.iter().map(|r| r.tracker.id_switches).sum();
    let history = TrackerParams::default().history_len as u64;
    let mut worst_speed = 0.0f64;
    let mut worst_dir = 0.0f64;
    let mut samples = 0;
    let mut dir_samples = 0;
    for r in &run.runs {
        let m = motion_check(&dep.world, &r.camera_id, r.chain.blocks(), dep.file.cadence as u64, history);
        worst_speed = worst_speed.max(m.max_speed_rel_err);
        worst_dir = worst_dir.max(m.max_direction_err_deg);
        samples += m.speed_samples;
        dir_samples += m.direction_samples;
    }
    outcome(
        switches == 0 && samples > 0 && dir_samples > 0 && worst_speed <= SPEED_REL_TOL && worst_dir <= DIRECTION_TOL_DEG,
        format!(
            "id_switches={switches}, speed max rel err {worst_speed:.2e} over {samples}, direction max err {worst_dir:.2e} deg over {dir_samples}"
        ),
    )
}

fn tamper(dep: &Deployment, run: &InProcessRun) -> Outcome {
    let drills = tamper_drills(&dep.fog_config(), &run.runs, &dep.keys, DRILL_SEED, DRILLS).unwrap();
    let passed = drills.iter().filter(|d| d.passed()).count();
    let unchanged = drills.iter().filter(|d| d.fog_unchanged).count();
    outcome(
        drills.len() == DRILLS && passed == DRILLS,
        format!("{passed}/{} detected, fog state unchanged in {unchanged}", drills.len()),
    )
}

fn protocol(dep: &Deployment, run: &InProcessRun) -> Outcome {
    let d = Queryd {
        fog: &run.fog,
        access: &dep.file.access,
        world: Some(&dep.world),
    };
    let req = |requester: &str, body: serde_json::Value| Request {
        req_id: json!(requester),
        requester: requester.into(),
        body,
    };
    let level = |name: &str| dep.file.access.level_of(name).to_string();
    let mut notes = Vec::new();

    let before = run.fog.lookup_stats().lookups;
    let r = d.handle_request(&WireMessage::Query(req("visitor", json!(CONGESTION_QUERY))));
    let lookups = run.fog.lookup_stats().lookups - before;
    let step_none = r.status == Status::Denied && lookups == 0;
    notes.push(format!("none({}): {:?} lookups={lookups}", level("visitor"), r.status));

    let r = d.handle_request(&WireMessage::Query(req("analyst", json!(CONGESTION_QUERY))));
    let rows: Vec<eiqis_core::query::ResultRow> = serde_json::from_value(r.rows.clone().unwrap_or_default()).unwrap_or_default();
    let Some(row) = rows.iter().find(|r| r.camera_id == "gate").cloned() else {
        return outcome(false, format!("analyst query returned {:?} with no gate rows", r.status));
    };
    let clip_body = json!({"camera_id": row.camera_id, "start_ts": row.start_ts, "end_ts": row.end_ts});
    let c = d.handle_request(&WireMessage::Clip(req("analyst", clip_body.clone())));
    let step_query = r.status == Status::Ok && c.status == Status::Denied;
    notes.push(format!("query({}): search {:?} clip {:?}", level("analyst"), r.status, c.status));

    let r = d.handle_request(&WireMessage::Query(req("operator", json!(CONGESTION_QUERY))));
    let c = d.handle_request(&WireMessage::Clip(req("operator", clip_body)));
    let frames: Vec<eiqis_core::GroundTruthFrame> =
        serde_json::from_value(c.frames.clone().unwrap_or_default()).unwrap_or_default();
    let crowd = frames
        .iter()
        .map(|f| f.boxes.iter().filter(|b| b.class == ObjectClass::Person).count())
        .max()
        .unwrap_or(0);
    let step_clip = r.status == Status::Ok && c.status == Status::Ok && !frames.is_empty() && crowd >= 12;
    notes.push(format!(
        "clip({}): search {:?} clip {:?} with {} frames, {crowd} people max",
        level("operator"),
        r.status,
        c.status,
        frames.len()
    ));
    outcome(step_none && step_query && step_clip, notes.join("; "))
}

fn parser(dep: &Deployment, run: &InProcessRun) -> Outcome {
    let cams = cameras(dep);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let round_trips = (0..ROUND_TRIPS)
        .filter(|_| {
            let q = random_query(&mut rng, 5, &cams);
            parse_query(&q.to_string()).as_ref() == Ok(&q)
        })
        .count();
    let set = |q: &Query| row_set(&evaluate(&run.fog, q).rows);
    let de_morgan = (0..DE_MORGAN_PAIRS)
        .filter(|_| {
            let a = random_query(&mut rng, 2, &cams);
            let b = random_query(&mut rng, 2, &cams);
            let l1 = set(&Query::not(Query::and(a.clone(), b.clone())));
            let r1 = set(&Query::or(Query::not(a.clone()), Query::not(b.clone())));
            let l2 = set(&Query::not(Query::or(a.clone(), b.clone())));
            let r2 = set(&Query::and(Query::not(a), Query::not(b)));
            l1 == r1 && l2 == r2
        })
        .count();
    let malformed = malformed_fixtures(&std::fs::read_to_string(fixture("malformed_queries.txt")).unwrap());
    let offsets_ok = malformed
        .iter()
        .filter(|(q, off)| parse_query(q).is_err_and(|e| e.offset == *off))
        .count();
    outcome(
        round_trips == ROUND_TRIPS && de_morgan == DE_MORGAN_PAIRS && offsets_ok == malformed.len(),
        format!(
            "round-trip {round_trips}/{ROUND_TRIPS}, De Morgan {de_morgan}/{DE_MORGAN_PAIRS}, malformed offsets {offsets_ok}/{}",
            malformed.len()
        ),
    )
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= PROFILE_REL_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn cloud(dep: &Deployment, run: &InProcessRun) -> Outcome {
    // Two-pass oracle straight from the raw gate chain.
    let tz = dep.file.tz_offset_min;
    let mut by_hour: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for r in run.runs.iter().filter(|r| r.camera_id == "gate") {
        for b in r.chain.blocks() {
            for l in &b.payload {
                let rec = FeatureRecord::parse_line(l).unwrap();
                if rec.key == "count_person" {
                    by_hour.entry(local_hour(rec.ts, tz)).or_default().push(rec.value.as_f64().unwrap());
                }
            }
        }
    }
    let records: Vec<_> = run.fog.contextualized().collect();
    let profile = build_profile(&records, "gate");
    let mut profile_ok = !by_hour.is_empty();
    for (h, xs) in &by_hour {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let s = &profile.hours[*h as usize];
        profile_ok &= s.n == xs.len() as u64
            && s.mean().is_some_and(|m| rel_close(m, mean))
            && s.std().is_some_and(|v| rel_close(v, std));
    }

    let mut flat = CameraProfile::new("flat");
    (0..20).for_each(|_| flat.observe(3, 4.0));
    let floor_ok = flat.zscore(3, 4.0) == Score::Z(0.0)
        && matches!(flat.zscore(3, 5.0), Score::Z(z) if z.is_finite() && rel_close(z, 1e6))
        && flat.zscore(4, 5.0) == Score::InsufficientData;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut bounds_ok = 0;
    for _ in 0..FEEDBACK_SEQUENCES {
        let mut s = SensitivityState::default();
        s.register_event("e");
        let len = rng.random_range(1..60);
        let ok = (0..len).all(|_| {
            let v = if rng.random_bool(0.5) { Verdict::TrueAlarm } else { Verdict::FalseAlarm };
            s.feedback("e", v).is_ok_and(|k| (1.0..=6.0).contains(&k))
        });
        bounds_ok += usize::from(ok);
    }
    outcome(
        profile_ok && floor_ok && bounds_ok == FEEDBACK_SEQUENCES,
        format!(
            "profile vs two-pass over {} hours: {profile_ok}; epsilon floor: {floor_ok}; k in [1,6] for {bounds_ok}/{FEEDBACK_SEQUENCES} sequences",
            by_hour.len()
        ),
    )
}

fn transport(dep: &Deployment, run: &InProcessRun) -> Outcome {
    let exe = Path::new(env!("CARGO_BIN_EXE_eiqis"));
    let multi = match run_multi_process(dep, RunOptions::default(), exe) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("multi-process run failed: {e:#}")),
    };
    let single = &run.report;
    let records = multi.summary.records_ingested == single.summary.records_ingested;
    let events = multi.summary.events == single.summary.events;
    let key = |r: &eiqis_cli::RunReport| {
        r.queries
            .iter()
            .map(|q| (q.text.clone(), q.row_count, q.digest.clone()))
            .collect::<Vec<_>>()
    };
    let queries = key(&multi) == key(single);
    outcome(
        records && events && queries && multi.ok() && single.ok(),
        format!(
            "records {} vs {}, events {} vs {}, {} query digests equal={queries}, violations {}+{}",
            multi.summary.records_ingested,
            single.summary.records_ingested,
            multi.summary.events.len(),
            single.summary.events.len(),
            single.queries.len(),
            multi.summary.violations.len(),
            single.summary.violations.len()
        ),
    )
}

fn main() {
    let dep = Deployment::load(&fixture("deploy.json")).expect("campus deployment");
    let run = run_in_process(&dep, RunOptions::default()).expect("in-process run");

    let criteria: [(&str, &dyn Fn() -> Outcome); 9] = [
        ("oracle equivalence", &|| oracle_equivalence(&dep, &run)),
        ("congestion scenario", &|| congestion(&dep, &run)),
        ("index speedup", &|| speedup(&run)),
        ("tracker fidelity", &|| tracker_fidelity(&dep, &run)),
        ("tamper evidence", &|| tamper(&dep, &run)),
        ("protocol access levels", &|| protocol(&dep, &run)),
        ("parser", &|| parser(&dep, &run)),
        ("cloud analytics", &|| cloud(&dep, &run)),
        ("transport equivalence", &|| transport(&dep, &run)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} criterion {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
