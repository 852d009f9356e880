//! Operator request handling: eligibility check, query evaluation and clip
//! retrieval.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::fog::FogState;
use crate::query::{evaluate, parse_query};
use crate::scenario::WorldConfig;
use crate::wire::{Request, Response, Status, WireMessage};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessLevel {
    #[default]
    None,
    Query,
    Clip,
}

impl fmt::Display for AccessLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessLevel::None => "none",
            AccessLevel::Query => "query",
            AccessLevel::Clip => "clip",
        })
    }
}

/// Requester id -> level. Unknown requesters hold `none`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccessTable(pub BTreeMap<String, AccessLevel>);

impl AccessTable {
    pub fn level_of(&self, requester: &str) -> AccessLevel {
        self.0.get(requester).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "held", rename_all = "snake_case")]
pub enum Authorization {
    Granted,
    Denied(AccessLevel),
}

pub fn authorize(table: &AccessTable, requester: &str, needs: AccessLevel) -> Authorization {
    let held = table.level_of(requester);
    if held >= needs {
        Authorization::Granted
    } else {
        Authorization::Denied(held)
    }
}

/// Body of a `clip` request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRequest {
    pub camera_id: String,
    pub start_ts: i64,
    pub end_ts: i64,
}

pub struct Queryd<'a> {
    pub fog: &'a FogState,
    pub access: &'a AccessTable,
    /// Source of clip frames; clip requests fail without it.
    pub world: Option<&'a WorldConfig>,
}

fn denied(req: &Request, held: AccessLevel, needed: AccessLevel) -> Response {
    Response::new(req.req_id.clone(), Status::Denied).with_detail(json!({
        "held": held,
        "needed": needed,
    }))
}

fn query_text(body: &serde_json::Value) -> Option<&str> {
    body.as_str()
        .or_else(|| body.get("query").and_then(serde_json::Value::as_str))
}

impl Queryd<'_> {
    pub fn handle_request(&self, msg: &WireMessage) -> Response {
        match msg {
            WireMessage::Query(req) => self.handle_query(req),
            WireMessage::Clip(req) => self.handle_clip(req),
            other => Response::new(serde_json::Value::Null, Status::Error)
                .with_detail(json!(format!("unsupported message type `{}`", message_type(other)))),
        }
    }

    /// Handle one raw frame. Anything that is not a well-formed message gets
    /// an `error` response.
    pub fn handle_bytes(&self, frame: &[u8]) -> Response {
        match serde_json::from_slice::<WireMessage>(frame) {
            Ok(msg) => self.handle_request(&msg),
            Err(e) => {
                let req_id = serde_json::from_slice::<serde_json::Value>(frame)
                    .ok()
                    .and_then(|v| v.get("req_id").cloned())
                    .unwrap_or(serde_json::Value::Null);
                Response::new(req_id, Status::Error).with_detail(json!(format!("malformed request: {e}")))
            }
        }
    }

    fn handle_query(&self, req: &Request) -> Response {
        if let Authorization::Denied(held) = authorize(self.access, &req.requester, AccessLevel::Query) {
            return denied(req, held, AccessLevel::Query);
        }
        let Some(text) = query_text(&req.body) else {
            return Response::new(req.req_id.clone(), Status::Error).with_detail(json!("query body must be a string"));
        };
        match parse_query(text) {
            Ok(ast) => {
                let result = evaluate(self.fog, &ast);
                Response::new(req.req_id.clone(), Status::Ok).with_rows(json!(result.rows))
            }
            Err(e) => Response::new(req.req_id.clone(), Status::BadQuery).with_detail(json!(e)),
        }
    }

    fn handle_clip(&self, req: &Request) -> Response {
        if let Authorization::Denied(held) = authorize(self.access, &req.requester, AccessLevel::Clip) {
            return denied(req, held, AccessLevel::Clip);
        }
        let clip: ClipRequest = match serde_json::from_value(req.body.clone()) {
            Ok(c) => c,
            Err(e) => {
                return Response::new(req.req_id.clone(), Status::Error)
                    .with_detail(json!(format!("bad clip request: {e}")))
            }
        };
        let Some(world) = self.world else {
            return Response::new(req.req_id.clone(), Status::Error).with_detail(json!("no footage source"));
        };
        match world.clip(&clip.camera_id, clip.start_ts, clip.end_ts) {
            Ok(frames) => Response::new(req.req_id.clone(), Status::Ok).with_frames(json!(frames)),
            Err(e) => Response::new(req.req_id.clone(), Status::Error).with_detail(json!(e.to_string())),
        }
    }
}

pub fn message_type(msg: &WireMessage) -> &'static str {
    match msg {
        WireMessage::Block(_) => "block",
        WireMessage::Head(_) => "head",
        WireMessage::Ack(_) => "ack",
        WireMessage::Query(_) => "query",
        WireMessage::Clip(_) => "clip",
        WireMessage::Stats(_) => "stats",
        WireMessage::Bench(_) => "bench",
        WireMessage::Shutdown(_) => "shutdown",
    }
}
