//! Feature records and their one-line text encoding.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::value::Value;

/// One key/value observation. `track_id` is `None` for frame-level features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub ts: i64,
    pub camera_id: String,
    pub frame_no: u64,
    pub track_id: Option<u64>,
    pub key: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed feature line: {reason}: `{line}`")]
pub struct LineError {
    pub line: String,
    pub reason: &'static str,
}

impl FeatureRecord {
    /// `ts=<epoch_ms> cam=<id> frame=<n> track=<id|-> key=<name> val=<value>`
    pub fn to_line(&self) -> String {
        let track = match self.track_id {
            Some(t) => t.to_string(),
            None => "-".to_string(),
        };
        format!(
            "ts={} cam={} frame={} track={} key={} val={}",
            self.ts,
            self.camera_id,
            self.frame_no,
            track,
            self.key,
            self.value.to_canonical()
        )
    }

    pub fn parse_line(line: &str) -> Result<Self, LineError> {
        let err = |reason| LineError {
            line: line.to_string(),
            reason,
        };
        let mut parts = line.splitn(6, ' ');
        let mut field = |name: &'static str| -> Result<&str, LineError> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(name))
                .and_then(|p| p.strip_prefix('='))
                .ok_or_else(|| err(name))
        };
        let ts = field("ts")?.parse().map_err(|_| err("ts"))?;
        let camera_id = field("cam")?;
        let frame_no = field("frame")?.parse().map_err(|_| err("frame"))?;
        let track_id = match field("track")? {
            "-" => None,
            t => Some(t.parse().map_err(|_| err("track"))?),
        };
        let key = field("key")?;
        let value = Value::parse_canonical(field("val")?).ok_or_else(|| err("val"))?;
        if camera_id.is_empty() || key.is_empty() {
            return Err(err("empty identifier"));
        }
        Ok(FeatureRecord {
            ts,
            camera_id: camera_id.to_string(),
            frame_no,
            track_id,
            key: key.to_string(),
            value,
        })
    }
}

impl fmt::Display for FeatureRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

/// Append-only edge feature log. Keeps a running digest over the
/// `\n`-joined lines so the transported payloads can be checked against it
/// without holding the log in memory.
pub struct FeatureLog {
    out: Option<BufWriter<File>>,
    digest: Sha256,
    lines: u64,
}

impl FeatureLog {
    pub fn in_memory() -> Self {
        Self {
            out: None,
            digest: Sha256::new(),
            lines: 0,
        }
    }

    pub fn create(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        Ok(Self {
            out: Some(BufWriter::new(file)),
            ..Self::in_memory()
        })
    }

    pub fn append(&mut self, line: &str) -> io::Result<()> {
        if self.lines > 0 {
            self.digest.update(b"\n");
        }
        self.digest.update(line.as_bytes());
        self.lines += 1;
        if let Some(out) = &mut self.out {
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn line_count(&self) -> u64 {
        self.lines
    }

    pub fn digest(&self) -> [u8; 32] {
        self.digest.clone().finalize().into()
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match &mut self.out {
            Some(out) => out.flush(),
            None => Ok(()),
        }
    }
}
