//! TCP transport: the fog server, the edge uplink and an operator client.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::{mpsc, Arc, RwLock};
use std::thread;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use eiqis_core::chainlog::{sync_heads, ChainHead, ChannelKey, SyncStatus};
use eiqis_core::edge::FeatureLog;
use eiqis_core::fog::{EventRecord, FogState};
use eiqis_core::pipeline::{run_camera, RunOptions, SinkError};
use eiqis_core::queryd::{AccessTable, Queryd};
use eiqis_core::wire::{self, Ack, AckStatus, BlockMsg, Request, Response, Status, WireMessage};
use eiqis_core::WorldConfig;

use crate::config::Deployment;
use crate::report::{measure_query, CameraSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FogAddrs {
    pub ingest: SocketAddr,
    pub query: SocketAddr,
}

/// Body of a `stats` response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FogStats {
    pub records: u64,
    pub clips: u64,
    pub events: Vec<EventRecord>,
    /// Channel -> `(seq, head hash hex)` of the last accepted block.
    pub heads: BTreeMap<String, (u64, String)>,
    pub lookups: u64,
}

/// Body of a `bench` request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRequest {
    pub query: String,
    #[serde(default = "one")]
    pub repeats: usize,
}

fn one() -> usize {
    1
}

struct Shared {
    fog: RwLock<FogState>,
    world: WorldConfig,
    access: AccessTable,
    keys: BTreeMap<String, ChannelKey>,
}

pub struct FogServer {
    ingest: TcpListener,
    query: TcpListener,
    shared: Arc<Shared>,
}

impl FogServer {
    pub fn bind(dep: &Deployment) -> Result<Self> {
        let fog = FogState::new(dep.fog_config()).context("fog config")?;
        let ingest = TcpListener::bind(("127.0.0.1", dep.file.ports.ingest)).context("binding ingest port")?;
        let query = TcpListener::bind(("127.0.0.1", dep.file.ports.query)).context("binding query port")?;
        Ok(Self {
            ingest,
            query,
            shared: Arc::new(Shared {
                fog: RwLock::new(fog),
                world: dep.world.clone(),
                access: dep.file.access.clone(),
                keys: dep.keys.clone(),
            }),
        })
    }

    pub fn addrs(&self) -> Result<FogAddrs> {
        Ok(FogAddrs {
            ingest: self.ingest.local_addr()?,
            query: self.query.local_addr()?,
        })
    }

    /// Serve until a `shutdown` request arrives.
    pub fn serve(self) -> Result<()> {
        let (stop_tx, stop_rx) = mpsc::channel::<()>();
        let shared = self.shared.clone();
        let ingest = self.ingest;
        thread::spawn(move || {
            for conn in ingest.incoming().flatten() {
                let shared = shared.clone();
                thread::spawn(move || {
                    if let Err(e) = serve_ingest(conn, &shared) {
                        log::warn!("ingest connection: {e:#}");
                    }
                });
            }
        });
        let shared = self.shared.clone();
        let query = self.query;
        thread::spawn(move || {
            for conn in query.incoming().flatten() {
                let shared = shared.clone();
                let stop = stop_tx.clone();
                thread::spawn(move || {
                    if let Err(e) = serve_queries(conn, &shared, &stop) {
                        log::warn!("query connection: {e:#}");
                    }
                });
            }
        });
        stop_rx.recv().map_err(|_| anyhow!("query listener stopped"))?;
        Ok(())
    }
}

fn rejected(channel: &str, seq: Option<u64>, detail: String) -> Ack {
    Ack {
        channel: channel.to_string(),
        seq,
        status: AckStatus::Rejected,
        detail: Some(detail),
    }
}

fn serve_ingest(conn: TcpStream, shared: &Shared) -> Result<()> {
    let mut r = BufReader::new(conn.try_clone()?);
    let mut w = BufWriter::new(conn);
    while let Some(msg) = wire::recv_json::<_, WireMessage>(&mut r)? {
        let ack = match msg {
            WireMessage::Block(b) => {
                let (channel, block) = b.into_block();
                match shared.keys.get(&channel) {
                    None => rejected(&channel, Some(block.seq), "unknown channel".into()),
                    Some(key) => {
                        let res = shared.fog.write().expect("fog lock").ingest_block(&channel, &block, key);
                        match res {
                            Ok(_) => Ack {
                                channel,
                                seq: Some(block.seq),
                                status: AckStatus::Ok,
                                detail: None,
                            },
                            Err(e) => rejected(&channel, Some(block.seq), e.to_string()),
                        }
                    }
                }
            }
            WireMessage::Head(h) => {
                let (channel, header) = h.into_block();
                let peer = ChainHead {
                    channel_id: channel.clone(),
                    seq: header.seq,
                    head_hash: header.head_hash(),
                };
                let local = shared.fog.read().expect("fog lock").head(&channel);
                match local.map(|l| sync_heads(&l, &peer)) {
                    None => Ack {
                        channel,
                        seq: None,
                        status: AckStatus::Empty,
                        detail: None,
                    },
                    Some(Ok(SyncStatus::Consistent)) => Ack {
                        channel,
                        seq: Some(peer.seq),
                        status: AckStatus::Ok,
                        detail: None,
                    },
                    Some(Ok(SyncStatus::Diverged(s))) => rejected(&channel, Some(s), format!("diverged at seq {s}")),
                    Some(Err(e)) => rejected(&channel, None, e.to_string()),
                }
            }
            _ => rejected("", None, "unexpected message on ingest port".into()),
        };
        wire::send_json(&mut w, &WireMessage::Ack(ack))?;
    }
    Ok(())
}

fn stats(fog: &FogState) -> FogStats {
    let heads = fog
        .cameras()
        .iter()
        .filter_map(|c| fog.head(&c.camera_id))
        .map(|h| (h.channel_id, (h.seq, hex::encode(h.head_hash))))
        .collect();
    FogStats {
        records: fog.record_count() as u64 - fog.events().len() as u64,
        clips: fog.universe().len() as u64,
        events: fog.events().to_vec(),
        heads,
        lookups: fog.lookup_stats().lookups,
    }
}

fn control(req: &Request, shared: &Shared, kind: &str) -> Response {
    let fog = shared.fog.read().expect("fog lock");
    match kind {
        "stats" => Response::new(req.req_id.clone(), Status::Ok).with_detail(json!(stats(&fog))),
        _ => match serde_json::from_value::<BenchRequest>(req.body.clone()) {
            Err(e) => Response::new(req.req_id.clone(), Status::Error).with_detail(json!(e.to_string())),
            Ok(b) => match measure_query(&fog, &b.query, b.repeats) {
                Ok(r) => Response::new(req.req_id.clone(), Status::Ok).with_detail(json!(r)),
                Err(e) => Response::new(req.req_id.clone(), Status::BadQuery).with_detail(json!(e.to_string())),
            },
        },
    }
}

fn serve_queries(conn: TcpStream, shared: &Shared, stop: &mpsc::Sender<()>) -> Result<()> {
    let mut r = BufReader::new(conn.try_clone()?);
    let mut w = BufWriter::new(conn);
    while let Some(frame) = wire::read_frame(&mut r)? {
        let msg = serde_json::from_slice::<WireMessage>(&frame);
        let mut shutdown = false;
        let resp = match &msg {
            Ok(WireMessage::Stats(req)) => control(req, shared, "stats"),
            Ok(WireMessage::Bench(req)) => control(req, shared, "bench"),
            Ok(WireMessage::Shutdown(req)) => {
                shutdown = true;
                Response::new(req.req_id.clone(), Status::Ok)
            }
            _ => {
                let fog = shared.fog.read().expect("fog lock");
                let d = Queryd {
                    fog: &fog,
                    access: &shared.access,
                    world: Some(&shared.world),
                };
                d.handle_bytes(&frame)
            }
        };
        wire::send_json(&mut w, &resp)?;
        if shutdown {
            let _ = stop.send(());
            return Ok(());
        }
    }
    Ok(())
}

/// Run one camera's edge agent, shipping each block to the fog and waiting
/// for its ack. Ends with a head exchange.
pub fn run_edge(
    dep: &Deployment,
    camera_id: &str,
    fog: SocketAddr,
    opts: RunOptions,
    log_path: Option<&Path>,
) -> Result<CameraSummary> {
    let key = dep
        .keys
        .get(camera_id)
        .with_context(|| format!("no channel key for `{camera_id}`"))?;
    let conn = TcpStream::connect(fog).with_context(|| format!("connecting to fog at {fog}"))?;
    conn.set_nodelay(true)?;
    let mut r = BufReader::new(conn.try_clone()?);
    let mut w = BufWriter::new(conn);
    let mut log = log_path.map(FeatureLog::create).transpose()?;

    let mut roundtrip = |msg: WireMessage| -> Result<Ack, SinkError> {
        wire::send_json(&mut w, &msg)?;
        match wire::recv_json::<_, WireMessage>(&mut r)? {
            Some(WireMessage::Ack(a)) => Ok(a),
            other => Err(format!("expected ack, got {other:?}").into()),
        }
    };
    let run = run_camera(&dep.world, camera_id, dep.edge_params(), key, opts, log.as_mut(), |b| {
        let ack = roundtrip(WireMessage::Block(BlockMsg::from_block(camera_id, b)))?;
        if ack.status != AckStatus::Ok {
            return Err(format!("block {} rejected: {}", b.seq, ack.detail.unwrap_or_default()).into());
        }
        Ok(())
    })?;
    let head_consistent = match run.chain.blocks().last() {
        Some(last) => {
            let ack = roundtrip(WireMessage::Head(BlockMsg::header_of(camera_id, last))).map_err(|e| anyhow!(e))?;
            ack.status == AckStatus::Ok
        }
        None => true,
    };
    Ok(CameraSummary {
        camera_id: camera_id.to_string(),
        records: run.records,
        blocks: run.chain.len() as u64,
        tracks: run.tracker.tracks,
        id_switches: run.tracker.id_switches,
        chain_verified: run.chain.verify(key).is_ok(),
        head_consistent,
    })
}

/// Blocking request/response client for the fog's query port.
pub struct Client {
    r: BufReader<TcpStream>,
    w: BufWriter<TcpStream>,
    next_id: u64,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let conn = TcpStream::connect(addr).context("connecting to fog query port")?;
        conn.set_nodelay(true)?;
        Ok(Self {
            r: BufReader::new(conn.try_clone()?),
            w: BufWriter::new(conn),
            next_id: 1,
        })
    }

    /// Send `{"type": kind, "req_id", "requester", "body"}` and wait for the
    /// matching response.
    pub fn request(&mut self, kind: &str, requester: &str, body: serde_json::Value) -> Result<Response> {
        let id = self.next_id;
        self.next_id += 1;
        let msg = json!({"type": kind, "req_id": id, "requester": requester, "body": body});
        wire::send_json(&mut self.w, &msg)?;
        let resp: Response = wire::recv_json(&mut self.r)?.ok_or_else(|| anyhow!("fog closed the connection"))?;
        if resp.req_id != json!(id) {
            bail!("response for request {} while waiting for {id}", resp.req_id);
        }
        Ok(resp)
    }

    pub fn stats(&mut self) -> Result<FogStats> {
        let resp = self.request("stats", "", json!(null))?;
        Ok(serde_json::from_value(resp.detail.unwrap_or_default())?)
    }
}
