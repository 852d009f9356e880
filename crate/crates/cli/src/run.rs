//! End-to-end runs, in one process or as a fog process plus one edge
//! process per camera.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use eiqis_core::chainlog::{sync_heads, SyncStatus};
use eiqis_core::fog::FogState;
use eiqis_core::pipeline::{run_in_process as drive, CameraRun, RunOptions};
use eiqis_core::query::ResultRow;
use eiqis_core::wire::Status;

use crate::config::{Deployment, Mode};
use crate::net::{BenchRequest, Client, FogAddrs};
use crate::report::{measure_query, rows_digest, sort_events, CameraSummary, QueryReport, RunReport, RunSummary};

/// Timing repeats per logged query.
pub const QUERY_REPEATS: usize = 5;

pub struct InProcessRun {
    pub report: RunReport,
    pub fog: FogState,
    pub runs: Vec<CameraRun>,
}

fn summarize(mode: Mode, cameras: Vec<CameraSummary>, mut events: Vec<eiqis_core::fog::EventRecord>, fog_records: u64) -> RunSummary {
    sort_events(&mut events);
    let mut violations = Vec::new();
    for c in &cameras {
        if !c.chain_verified {
            violations.push(format!("chain `{}` failed verification", c.camera_id));
        }
        if !c.head_consistent {
            violations.push(format!("fog head for `{}` disagrees with the edge", c.camera_id));
        }
    }
    let edge_records: u64 = cameras.iter().map(|c| c.records).sum();
    if edge_records != fog_records {
        violations.push(format!("edges sent {edge_records} records, fog indexed {fog_records}"));
    }
    RunSummary {
        mode,
        records_ingested: fog_records,
        blocks: cameras.iter().map(|c| c.blocks).sum(),
        events,
        tracks: cameras.iter().map(|c| c.tracks).sum(),
        id_switches: cameras.iter().map(|c| c.id_switches).sum(),
        chain_verified: cameras.iter().all(|c| c.chain_verified),
        cameras,
        violations,
        elapsed_ms: 0.0,
    }
}

fn check_queries(summary: &mut RunSummary, queries: &[QueryReport]) {
    for q in queries.iter().filter(|q| !q.equal) {
        summary.violations.push(format!("indexed and scan results differ for `{}`", q.text));
    }
}

pub fn run_in_process(dep: &Deployment, opts: RunOptions) -> Result<InProcessRun> {
    let started = Instant::now();
    let mut fog = FogState::new(dep.fog_config()).context("fog")?;
    let runs = drive(&dep.world, &mut fog, &dep.keys, dep.edge_params(), opts)?;
    let cameras = runs
        .iter()
        .map(|r| {
            let head_consistent = match (r.chain.head(), fog.head(&r.camera_id)) {
                (None, None) => true,
                (Some(e), Some(f)) => sync_heads(&f, &e).is_ok_and(|s| s == SyncStatus::Consistent),
                _ => false,
            };
            CameraSummary {
                camera_id: r.camera_id.clone(),
                records: r.records,
                blocks: r.chain.len() as u64,
                tracks: r.tracker.tracks,
                id_switches: r.tracker.id_switches,
                chain_verified: r.chain.verify(&dep.keys[&r.camera_id]).is_ok(),
                head_consistent,
            }
        })
        .collect();
    let fog_records = (fog.record_count() - fog.events().len()) as u64;
    let mut summary = summarize(Mode::InProcess, cameras, fog.events().to_vec(), fog_records);
    let queries = dep
        .queries
        .iter()
        .map(|q| measure_query(&fog, q, QUERY_REPEATS).with_context(|| format!("query `{q}`")))
        .collect::<Result<Vec<_>>>()?;
    check_queries(&mut summary, &queries);
    summary.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(InProcessRun {
        report: RunReport { queries, summary },
        fog,
        runs,
    })
}

/// Kills the child if the harness bails out early.
struct Proc {
    name: String,
    child: Child,
}

impl Proc {
    fn spawn(name: String, cmd: &mut Command) -> Result<Self> {
        let child = cmd
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .with_context(|| format!("{name}: failed to start"))?;
        Ok(Self { name, child })
    }

    fn finish(mut self) -> Result<String> {
        let mut out = String::new();
        if let Some(mut s) = self.child.stdout.take() {
            s.read_to_string(&mut out)?;
        }
        let status = self.child.wait()?;
        if !status.success() {
            bail!("{}: exited with {status}", self.name);
        }
        Ok(out)
    }
}

impl Drop for Proc {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// `exe` is the `eiqis` binary used for the fog and edge processes.
pub fn run_multi_process(dep: &Deployment, opts: RunOptions, exe: &Path) -> Result<RunReport> {
    let started = Instant::now();
    let config = dep.path.to_str().ok_or_else(|| anyhow!("config path is not UTF-8"))?;
    let mut fog = Proc::spawn("fog".into(), Command::new(exe).args(["fog", "--config", config]))?;
    let mut first = String::new();
    BufReader::new(fog.child.stdout.as_mut().expect("piped"))
        .read_line(&mut first)
        .context("fog: reading listen addresses")?;
    let addrs: FogAddrs = serde_json::from_str(first.trim())
        .with_context(|| format!("fog: bad startup line `{}`", first.trim()))?;

    let ingest = addrs.ingest.to_string();
    let edges = dep
        .world
        .cameras
        .iter()
        .map(|c| {
            let mut cmd = Command::new(exe);
            cmd.args(["edge", "--config", config, "--camera", &c.camera_id, "--fog", &ingest]);
            if opts.realtime {
                cmd.arg("--realtime");
            }
            Proc::spawn(format!("edge `{}`", c.camera_id), &mut cmd)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cameras = Vec::new();
    for e in edges {
        let name = e.name.clone();
        let out = e.finish()?;
        let line = out.lines().last().ok_or_else(|| anyhow!("{name}: no summary"))?;
        cameras.push(serde_json::from_str::<CameraSummary>(line).with_context(|| format!("{name}: bad summary"))?);
    }

    let mut client = Client::connect(addrs.query).context("fog query port")?;
    let stats = client.stats()?;
    let mut summary = summarize(Mode::MultiProcess, cameras, stats.events, stats.records);
    let mut queries = Vec::new();
    for q in &dep.queries {
        let body = serde_json::to_value(BenchRequest {
            query: q.clone(),
            repeats: QUERY_REPEATS,
        })?;
        let resp = client.request("bench", &dep.file.operator, body)?;
        if resp.status != Status::Ok {
            bail!("query `{q}`: {:?} {}", resp.status, resp.detail.unwrap_or_default());
        }
        let report: QueryReport = serde_json::from_value(resp.detail.unwrap_or_default())?;

        let resp = client.request("query", &dep.file.operator, json!(q))?;
        if resp.status != Status::Ok {
            summary
                .violations
                .push(format!("operator query `{q}` answered {:?}", resp.status));
        } else {
            let rows: Vec<ResultRow> = serde_json::from_value(resp.rows.unwrap_or_default())?;
            if rows_digest(&rows) != report.digest {
                summary.violations.push(format!("wire rows differ from fog rows for `{q}`"));
            }
        }
        queries.push(report);
    }
    check_queries(&mut summary, &queries);
    client.request("shutdown", &dep.file.operator, json!(null))?;
    drop(client);
    fog.finish()?;
    summary.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(RunReport { queries, summary })
}

pub fn run(dep: &Deployment, mode: Mode, opts: RunOptions, exe: &Path) -> Result<RunReport> {
    match mode {
        Mode::InProcess => Ok(run_in_process(dep, opts)?.report),
        Mode::MultiProcess => run_multi_process(dep, opts, exe),
    }
}
