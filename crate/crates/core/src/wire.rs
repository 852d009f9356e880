//! Length-prefixed JSON framing shared by edge→fog block transport, head
//! gossip, and operator requests.
//!
//! Each frame is a 4-byte big-endian payload length followed by one UTF-8
//! JSON object.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chainlog::{Digest32, LedgerBlock};

pub const MAX_FRAME_LEN: usize = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds limit")]
    TooLarge(usize),
    #[error("malformed message: {0}")]
    Malformed(String),
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<(), WireError> {
    if payload.len() > MAX_FRAME_LEN {
        return Err(WireError::TooLarge(payload.len()));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

/// `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, WireError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            n => got += n,
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(WireError::TooLarge(len));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub fn send_json<W: Write, T: Serialize>(w: &mut W, msg: &T) -> Result<(), WireError> {
    let bytes = serde_json::to_vec(msg).map_err(|e| WireError::Malformed(e.to_string()))?;
    write_frame(w, &bytes)
}

pub fn recv_json<R: Read, T: for<'de> Deserialize<'de>>(r: &mut R) -> Result<Option<T>, WireError> {
    match read_frame(r)? {
        None => Ok(None),
        Some(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| WireError::Malformed(e.to_string())),
    }
}

pub mod hex32 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::chainlog::Digest32;

    pub fn serialize<S: Serializer>(d: &Digest32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Digest32, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(D::Error::custom("digest must be 64 lowercase hex chars"));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(D::Error::custom)?;
        Ok(out)
    }
}

/// A block (or, for gossip, a block header with empty payload) on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockMsg {
    pub channel: String,
    pub seq: u64,
    #[serde(with = "hex32")]
    pub prev_hash: Digest32,
    #[serde(with = "hex32")]
    pub payload_hash: Digest32,
    #[serde(with = "hex32")]
    pub hmac: Digest32,
    pub payload: Vec<String>,
}

impl BlockMsg {
    pub fn from_block(channel: &str, b: &LedgerBlock) -> Self {
        Self {
            channel: channel.to_string(),
            seq: b.seq,
            prev_hash: b.prev_hash,
            payload_hash: b.payload_hash,
            hmac: b.hmac,
            payload: b.payload.clone(),
        }
    }

    pub fn header_of(channel: &str, b: &LedgerBlock) -> Self {
        Self {
            payload: Vec::new(),
            ..Self::from_block(channel, &LedgerBlock { payload: Vec::new(), ..b.clone() })
        }
    }

    pub fn into_block(self) -> (String, LedgerBlock) {
        (
            self.channel,
            LedgerBlock {
                seq: self.seq,
                prev_hash: self.prev_hash,
                payload: self.payload,
                payload_hash: self.payload_hash,
                hmac: self.hmac,
            },
        )
    }
}

/// Operator request: `{"type":"query"|"clip","req_id":…,"requester":…,"body":…}`.
/// The harness additionally uses `stats`, `bench` and `shutdown`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub req_id: serde_json::Value,
    pub requester: String,
    #[serde(default)]
    pub body: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Block(BlockMsg),
    Head(BlockMsg),
    Ack(Ack),
    Query(Request),
    Clip(Request),
    Stats(Request),
    Bench(Request),
    Shutdown(Request),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub channel: String,
    pub seq: Option<u64>,
    pub status: AckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    Ok,
    Rejected,
    /// Head request for a channel with no accepted blocks.
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Denied,
    BadQuery,
    Error,
}

/// `{"req_id":…,"status":…,"rows"|"frames"|"detail":…}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub req_id: serde_json::Value,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl Response {
    pub fn new(req_id: serde_json::Value, status: Status) -> Self {
        Self {
            req_id,
            status,
            rows: None,
            frames: None,
            detail: None,
        }
    }

    pub fn with_rows(mut self, rows: serde_json::Value) -> Self {
        self.rows = Some(rows);
        self
    }

    pub fn with_frames(mut self, frames: serde_json::Value) -> Self {
        self.frames = Some(frames);
        self
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }
}
