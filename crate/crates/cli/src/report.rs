//! Run reports: one JSON line per measured query and a final summary line.

use std::io::Write;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use eiqis_core::fog::{EventRecord, FogState};
use eiqis_core::pipeline::bench_query;
use eiqis_core::query::{evaluate, parse_query, ResultRow};

use crate::config::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub text: String,
    pub row_count: usize,
    pub indexed_eval_ms: f64,
    pub scan_eval_ms: f64,
    /// Indexed and scan evaluation returned the same rows.
    pub equal: bool,
    /// SHA-256 of the result rows' JSON.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CameraSummary {
    pub camera_id: String,
    pub records: u64,
    pub blocks: u64,
    pub tracks: u64,
    pub id_switches: u64,
    pub chain_verified: bool,
    /// The fog's head for this channel matches the edge's.
    pub head_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub records_ingested: u64,
    pub blocks: u64,
    pub events: Vec<EventRecord>,
    pub tracks: u64,
    pub id_switches: u64,
    pub chain_verified: bool,
    pub cameras: Vec<CameraSummary>,
    pub violations: Vec<String>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub queries: Vec<QueryReport>,
    pub summary: RunSummary,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Query(QueryReport),
    Summary(RunSummary),
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.summary.violations.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for q in &self.queries {
            serde_json::to_writer(&mut w, &Line::Query(q.clone()))?;
            writeln!(w)?;
        }
        serde_json::to_writer(&mut w, &Line::Summary(self.summary.clone()))?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<Self> {
        let mut queries = Vec::new();
        let mut summary = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str(line)? {
                Line::Query(q) => queries.push(q),
                Line::Summary(s) => summary = Some(s),
            }
        }
        Ok(Self {
            queries,
            summary: summary.ok_or_else(|| anyhow::anyhow!("report has no summary line"))?,
        })
    }
}

pub fn rows_digest(rows: &[ResultRow]) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(rows).expect("rows serialize")))
}

/// Time `text` both ways on `fog` and digest the indexed result.
pub fn measure_query(fog: &FogState, text: &str, repeats: usize) -> Result<QueryReport> {
    let bench = bench_query(fog, text, repeats)?;
    let rows = evaluate(fog, &parse_query(text)?).rows;
    Ok(QueryReport {
        text: text.to_string(),
        row_count: rows.len(),
        indexed_eval_ms: bench.indexed_ms,
        scan_eval_ms: bench.scan_ms,
        equal: bench.equal,
        digest: rows_digest(&rows),
    })
}

/// Sort events into a transport-independent order.
pub fn sort_events(events: &mut [EventRecord]) {
    events.sort_by(|a, b| (&a.camera_id, a.ts, &a.rule).cmp(&(&b.camera_id, b.ts, &b.rule)));
}
