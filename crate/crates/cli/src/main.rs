use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use eiqis_cli::config::{parse_query_file, Deployment, Mode};
use eiqis_cli::net::{run_edge, Client, FogServer};
use eiqis_cli::run::{run, run_in_process};
use eiqis_core::cloud::{build_profile, CameraProfile, ProfileSnapshot, SensitivityState, Verdict};
use eiqis_core::pipeline::{bench_query, tamper_drills, RunOptions};
use eiqis_core::wire::Status;

#[derive(Parser)]
#[command(name = "eiqis", version, about = "Indexable, queryable surveillance pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the whole pipeline over a scenario and write a JSON-lines report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Pace frames at the scenario's frame rate.
        #[arg(long)]
        realtime: bool,
        /// Overrides the mode in the config file.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Send one query to a running fog node.
    Query {
        #[arg(long)]
        addr: String,
        #[arg(long)]
        requester: String,
        query: String,
    },
    /// Fetch a clip's frames from a running fog node.
    Clip {
        #[arg(long)]
        addr: String,
        #[arg(long)]
        requester: String,
        #[arg(long)]
        camera: String,
        #[arg(long)]
        start_ts: i64,
        #[arg(long)]
        end_ts: i64,
    },
    /// Compare indexed and scan evaluation of each query after an in-process run.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Mutate stored blocks one byte at a time and check every change is caught.
    TamperDrill {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 50)]
        drills: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Hourly profiles, scoring and alarm feedback.
    Profile {
        #[command(subcommand)]
        cmd: ProfileCmd,
    },
    /// Serve a fog node; prints its listen addresses as one JSON line.
    Fog {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one camera's edge agent against a fog node; prints a JSON summary.
    Edge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        camera: String,
        #[arg(long)]
        fog: SocketAddr,
        #[arg(long)]
        realtime: bool,
        /// Also write the feature log here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ProfileCmd {
    /// Run the pipeline in process and profile one camera.
    Build {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        camera: String,
        #[arg(long)]
        out: PathBuf,
        /// Sensitivity state file to register the run's events in.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Score a value against a profile snapshot.
    Score {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        hour: u8,
        #[arg(long)]
        value: f64,
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Record an operator verdict on an event and retune the threshold.
    Feedback {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        event: String,
        #[arg(long, value_parser = parse_verdict)]
        verdict: Verdict,
    },
}

fn parse_verdict(s: &str) -> Result<Verdict, String> {
    serde_json::from_value(json!(s.replace('-', "_"))).map_err(|_| format!("expected true_alarm or false_alarm, got `{s}`"))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, v)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn load_state(path: &Path) -> Result<SensitivityState> {
    if !path.exists() {
        return Ok(SensitivityState::default());
    }
    let s: SensitivityState = serde_json::from_str(&fs::read_to_string(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    s.validate()?;
    Ok(s)
}

fn save_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let f = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), v)?;
    Ok(())
}

fn profile(cmd: ProfileCmd) -> Result<bool> {
    match cmd {
        ProfileCmd::Build {
            config,
            camera,
            out,
            state,
        } => {
            let dep = Deployment::load(&config)?;
            if dep.world.camera(&camera).is_none() {
                bail!("unknown camera `{camera}`");
            }
            let run = run_in_process(&dep, RunOptions::default())?;
            let records: Vec<_> = run.fog.contextualized().collect();
            let snap = build_profile(&records, &camera).snapshot();
            save_json(&out, &snap)?;
            if let Some(path) = state {
                let mut s = load_state(&path)?;
                for e in run.fog.events() {
                    s.register_event(e.event_id.clone());
                }
                save_json(&path, &s)?;
            }
            print_json(&snap)?;
            Ok(true)
        }
        ProfileCmd::Score {
            profile,
            hour,
            value,
            state,
        } => {
            if hour > 23 {
                bail!("hour must be 0..=23");
            }
            let snap: ProfileSnapshot = serde_json::from_str(&fs::read_to_string(&profile)?)?;
            let p = CameraProfile::from_snapshot(&snap)?;
            let s = match state {
                Some(path) => load_state(&path)?,
                None => SensitivityState::default(),
            };
            let score = p.zscore(hour, value);
            print_json(&json!({"score": score, "k": s.k, "decision": s.alarm(score)}))?;
            Ok(true)
        }
        ProfileCmd::Feedback { state, event, verdict } => {
            let mut s = load_state(&state)?;
            let k = s.feedback(&event, verdict)?;
            save_json(&state, &s)?;
            print_json(&json!({"event_id": event, "verdict": verdict, "k": k}))?;
            Ok(true)
        }
    }
}

fn main_inner(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Run {
            config,
            realtime,
            mode,
            report,
        } => {
            let dep = Deployment::load(&config)?;
            let mode = mode.unwrap_or(dep.file.mode);
            let exe = std::env::current_exe()?;
            let r = run(&dep, mode, RunOptions { realtime }, &exe)?;
            match report {
                Some(p) => r.write_jsonl(BufWriter::new(
                    File::create(&p).with_context(|| format!("writing {}", p.display()))?,
                ))?,
                None => r.write_jsonl(io::stdout().lock())?,
            }
            for v in &r.summary.violations {
                log::error!("{v}");
            }
            Ok(r.ok())
        }
        Cmd::Query { addr, requester, query } => {
            let resp = Client::connect(addr)?.request("query", &requester, json!(query))?;
            print_json(&resp)?;
            Ok(resp.status == Status::Ok)
        }
        Cmd::Clip {
            addr,
            requester,
            camera,
            start_ts,
            end_ts,
        } => {
            let body = json!({"camera_id": camera, "start_ts": start_ts, "end_ts": end_ts});
            let resp = Client::connect(addr)?.request("clip", &requester, body)?;
            print_json(&resp)?;
            Ok(resp.status == Status::Ok)
        }
        Cmd::Bench {
            config,
            queries,
            repeats,
        } => {
            let dep = Deployment::load(&config)?;
            let queries = parse_query_file(&fs::read_to_string(&queries)?);
            let run = run_in_process(&dep, RunOptions::default())?;
            let mut ok = true;
            for q in &queries {
                let b = bench_query(&run.fog, q, repeats).with_context(|| format!("query `{q}`"))?;
                ok &= b.equal;
                print_json(&json!({"query": q, "records": run.fog.record_count(), "result": b}))?;
            }
            Ok(ok)
        }
        Cmd::TamperDrill { config, drills, seed } => {
            let dep = Deployment::load(&config)?;
            let run = run_in_process(&dep, RunOptions::default())?;
            let outcomes = tamper_drills(&dep.fog_config(), &run.runs, &dep.keys, seed, drills)?;
            let passed = outcomes.iter().filter(|o| o.passed()).count();
            for o in &outcomes {
                print_json(o)?;
            }
            print_json(&json!({"drills": outcomes.len(), "detected": passed}))?;
            Ok(passed == outcomes.len())
        }
        Cmd::Profile { cmd } => profile(cmd),
        Cmd::Fog { config } => {
            let dep = Deployment::load(&config)?;
            let server = FogServer::bind(&dep)?;
            print_json(&server.addrs()?)?;
            server.serve()?;
            Ok(true)
        }
        Cmd::Edge {
            config,
            camera,
            fog,
            realtime,
            log,
        } => {
            let dep = Deployment::load(&config)?;
            let s = run_edge(&dep, &camera, fog, RunOptions { realtime }, log.as_deref())?;
            let ok = s.chain_verified && s.head_consistent;
            print_json(&s)?;
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
