//! Drives edge agents into chains and a fog node without any transport.

use std::collections::BTreeMap;
use std::error::Error as StdError;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chainlog::{verify_blocks, Chain, ChainError, ChannelKey, LedgerBlock, TamperReason};
use crate::edge::{EdgeAgent, EdgeError, EdgeParams, FeatureLog, TrackAudit, TrackerStats};
use crate::fog::{FogConfig, FogError, FogState};
use crate::query::{evaluate, evaluate_scan, parse_query, ParseError};
use crate::scenario::WorldConfig;

pub type SinkError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("edge `{camera}`: {source}")]
    Edge { camera: String, source: EdgeError },
    #[error("chain `{camera}`: {source}")]
    Chain { camera: String, source: ChainError },
    #[error("block sink for `{camera}`: {source}")]
    Sink { camera: String, source: SinkError },
    #[error("feature log for `{camera}`: {source}")]
    Log { camera: String, source: std::io::Error },
    #[error("no channel key for `{0}`")]
    MissingKey(String),
}

#[derive(Debug, Clone)]
pub struct CameraRun {
    pub camera_id: String,
    pub chain: Chain,
    pub records: u64,
    pub tracker: TrackerStats,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Sleep so each frame takes at least one frame period of wall time.
    pub realtime: bool,
}

/// Run one camera's agent to the end of the scenario. Each cadence interval
/// becomes one block, handed to `sink` as soon as it is sealed.
pub fn run_camera(
    world: &WorldConfig,
    camera_id: &str,
    params: EdgeParams,
    key: &ChannelKey,
    opts: RunOptions,
    mut log: Option<&mut FeatureLog>,
    mut sink: impl FnMut(&LedgerBlock) -> Result<(), SinkError>,
) -> Result<CameraRun, PipelineError> {
    let edge_err = |source| PipelineError::Edge {
        camera: camera_id.to_string(),
        source,
    };
    let mut agent = EdgeAgent::new(world, camera_id, params).map_err(edge_err)?;
    let mut chain = Chain::new(camera_id);
    let mut audit = TrackAudit::default();
    let mut records = 0u64;
    let period = Duration::from_secs_f64(1.0 / world.fps as f64);
    let started = Instant::now();
    loop {
        let frames = agent.process_interval().map_err(edge_err)?;
        if frames.is_empty() {
            break;
        }
        let mut lines = Vec::new();
        for f in &frames {
            if f.detector_fired {
                audit.observe(&f.frame, agent.tracker().tracks());
            }
            lines.extend(f.records.iter().map(|r| r.to_line()));
        }
        if opts.realtime {
            let due = period * (agent.next_frame_no() as u32);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        if lines.is_empty() {
            continue;
        }
        if let Some(log) = log.as_deref_mut() {
            for l in &lines {
                log.append(l).map_err(|source| PipelineError::Log {
                    camera: camera_id.to_string(),
                    source,
                })?;
            }
        }
        records += lines.len() as u64;
        let block = chain.append(lines, key).map_err(|source| PipelineError::Chain {
            camera: camera_id.to_string(),
            source,
        })?;
        sink(block).map_err(|source| PipelineError::Sink {
            camera: camera_id.to_string(),
            source,
        })?;
    }
    if let Some(log) = log {
        log.flush().map_err(|source| PipelineError::Log {
            camera: camera_id.to_string(),
            source,
        })?;
    }
    Ok(CameraRun {
        camera_id: camera_id.to_string(),
        chain,
        records,
        tracker: TrackerStats {
            tracks: agent.tracker().tracks_opened(),
            id_switches: audit.id_switches(),
        },
    })
}

/// Run every camera in `world` straight into `fog`.
pub fn run_in_process(
    world: &WorldConfig,
    fog: &mut FogState,
    keys: &BTreeMap<String, ChannelKey>,
    params: EdgeParams,
    opts: RunOptions,
) -> Result<Vec<CameraRun>, PipelineError> {
    let mut runs = Vec::new();
    for cam in &world.cameras {
        let key = keys
            .get(&cam.camera_id)
            .ok_or_else(|| PipelineError::MissingKey(cam.camera_id.clone()))?;
        let run = run_camera(world, &cam.camera_id, params, key, opts, None, |b| {
            fog.ingest_block(&cam.camera_id, b, key)
                .map(|_| ())
                .map_err(|e: FogError| Box::new(e) as SinkError)
        })?;
        runs.push(run);
    }
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub indexed_ms: f64,
    pub scan_ms: f64,
    pub equal: bool,
    pub rows: usize,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Median wall time of indexed and scan evaluation over `repeats` runs each,
/// and whether the two agree.
pub fn bench_query(fog: &FogState, text: &str, repeats: usize) -> Result<BenchResult, ParseError> {
    let ast = parse_query(text)?;
    let repeats = repeats.max(1);
    let mut indexed = Vec::with_capacity(repeats);
    let mut scan = Vec::with_capacity(repeats);
    let mut equal = true;
    let mut rows = 0;
    for _ in 0..repeats {
        let t = Instant::now();
        let a = evaluate(fog, &ast);
        indexed.push(t.elapsed().as_secs_f64() * 1e3);
        let t = Instant::now();
        let b = evaluate_scan(fog, &ast);
        scan.push(t.elapsed().as_secs_f64() * 1e3);
        equal &= a == b;
        rows = a.len();
    }
    Ok(BenchResult {
        indexed_ms: median(indexed),
        scan_ms: median(scan),
        equal,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockField {
    Seq,
    PrevHash,
    PayloadHash,
    Hmac,
    Payload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrillOutcome {
    pub camera_id: String,
    pub mutated_seq: u64,
    pub field: BlockField,
    pub offset: usize,
    pub first_bad_seq: Option<u64>,
    pub reason: Option<TamperReason>,
    pub fog_rejected: bool,
    pub fog_unchanged: bool,
}

impl DrillOutcome {
    pub fn passed(&self) -> bool {
        self.first_bad_seq.is_some_and(|s| s <= self.mutated_seq) && self.fog_rejected && self.fog_unchanged
    }
}

const HEX: &[u8] = b"0123456789abcdef";

fn other_byte(rng: &mut ChaCha8Rng, alphabet: &[u8], old: u8) -> u8 {
    loop {
        let b = alphabet[rng.random_range(0..alphabet.len())];
        if b != old {
            return b;
        }
    }
}

fn mutate_hex(rng: &mut ChaCha8Rng, d: &mut [u8; 32], at: usize) {
    let mut s = hex::encode(*d).into_bytes();
    s[at] = other_byte(rng, HEX, s[at]);
    hex::decode_to_slice(&s, d).expect("hex digits");
}

/// Change one byte of one field of `b`'s text form. Returns the field and
/// the byte offset within it.
fn mutate_block(rng: &mut ChaCha8Rng, b: &mut LedgerBlock) -> (BlockField, usize) {
    let seq_len = b.seq.to_string().len();
    let payload_len: usize = b.payload.iter().map(String::len).sum();
    let total = seq_len + 3 * 64 + payload_len;
    let mut at = rng.random_range(0..total);
    if at < seq_len {
        let mut s = b.seq.to_string().into_bytes();
        s[at] = other_byte(rng, b"0123456789", s[at]);
        b.seq = std::str::from_utf8(&s).expect("digits").parse().expect("digits");
        return (BlockField::Seq, at);
    }
    at -= seq_len;
    for (field, d) in [
        (BlockField::PrevHash, &mut b.prev_hash),
        (BlockField::PayloadHash, &mut b.payload_hash),
        (BlockField::Hmac, &mut b.hmac),
    ] {
        if at < 64 {
            mutate_hex(rng, d, at);
            return (field, at);
        }
        at -= 64;
    }
    let offset = at;
    let printable: Vec<u8> = (0x20u8..0x7f).collect();
    for line in &mut b.payload {
        if at < line.len() {
            let mut bytes = std::mem::take(line).into_bytes();
            bytes[at] = other_byte(rng, &printable, bytes[at]);
            *line = String::from_utf8_lossy(&bytes).into_owned();
            return (BlockField::Payload, offset);
        }
        at -= line.len();
    }
    unreachable!("offset within block")
}

fn state_digest(fog: &FogState) -> [u8; 32] {
    Sha256::digest(fog.snapshot_bytes()).into()
}

/// Seeded single-byte tamper drills against the chains of a completed run.
///
/// Each drill mutates one block, then checks that chain verification flags
/// it no later than its seq and that a fog holding every earlier block
/// rejects it without changing state.
pub fn tamper_drills(
    fog_config: &FogConfig,
    runs: &[CameraRun],
    keys: &BTreeMap<String, ChannelKey>,
    seed: u64,
    drills: usize,
) -> Result<Vec<DrillOutcome>, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<usize> = (0..runs.len()).filter(|&i| !runs[i].chain.is_empty()).collect();
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let mut plan: Vec<(usize, u64)> = (0..drills)
        .map(|_| {
            let r = candidates[rng.random_range(0..candidates.len())];
            (r, rng.random_range(0..runs[r].chain.len() as u64))
        })
        .collect();
    plan.sort_unstable();

    let mut fog = FogState::new(fog_config.clone()).map_err(|e| PipelineError::Sink {
        camera: String::new(),
        source: Box::new(e),
    })?;
    let mut out = Vec::with_capacity(drills);
    let mut next = plan.iter().peekable();
    for (ri, run) in runs.iter().enumerate() {
        let cam = run.camera_id.as_str();
        let key = keys.get(cam).ok_or_else(|| PipelineError::MissingKey(cam.to_string()))?;
        let sink_err = |e: FogError| PipelineError::Sink {
            camera: cam.to_string(),
            source: Box::new(e),
        };
        for (seq, honest) in run.chain.blocks().iter().enumerate() {
            while next.next_if(|&&(r, s)| r == ri && s == seq as u64).is_some() {
                let before = state_digest(&fog);
                let mut bad = honest.clone();
                let (field, offset) = mutate_block(&mut rng, &mut bad);
                let mut blocks = run.chain.blocks().to_vec();
                blocks[seq] = bad.clone();
                let report = verify_blocks(&blocks, key).err();
                let fog_rejected = fog.ingest_block(cam, &bad, key).is_err();
                out.push(DrillOutcome {
                    camera_id: cam.to_string(),
                    mutated_seq: seq as u64,
                    field,
                    offset,
                    first_bad_seq: report.map(|r| r.first_bad_seq),
                    reason: report.map(|r| r.reason),
                    fog_rejected,
                    fog_unchanged: state_digest(&fog) == before,
                });
            }
            if next.peek().is_none() {
                return Ok(out);
            }
            fog.ingest_block(cam, honest, key).map_err(sink_err)?;
        }
    }
    Ok(out)
}
