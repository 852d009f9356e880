//! Tamper-evident transport log.
//!
//! Feature lines are batched into blocks. Each block commits to its payload
//! with SHA-256, links to its predecessor through the previous head hash, and
//! carries an HMAC-SHA-256 tag over its header under the channel's shared key.
//!
//! ```text
//! header_n   = seq_n (u64 BE) || prev_hash_n || payload_hash_n
//! head_n     = SHA-256(header_n)
//! prev_hash_0 = 0^32,  prev_hash_n = head_{n-1}
//! hmac_n     = HMAC-SHA-256(key, header_n)
//! ```

use std::fmt;

use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::edge::FeatureRecord;

pub const DIGEST_LEN: usize = 32;
pub type Digest32 = [u8; DIGEST_LEN];
pub const GENESIS_PREV: Digest32 = [0u8; DIGEST_LEN];

type HmacSha256 = Hmac<Sha256>;

/// Pre-shared per-channel secret.
#[derive(Clone, PartialEq, Eq)]
pub struct ChannelKey(Vec<u8>);

impl ChannelKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Self(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for ChannelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ChannelKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("refusing to append an empty payload")]
    EmptyPayload,
    #[error("payload line contains a newline")]
    MultilineRecord,
    #[error("channel mismatch: `{local}` vs `{peer}`")]
    ChannelMismatch { local: String, peer: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperReason {
    SeqMismatch,
    EmptyPayload,
    PayloadHashMismatch,
    LinkMismatch,
    HmacMismatch,
}

impl fmt::Display for TamperReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TamperReason::SeqMismatch => "seq mismatch",
            TamperReason::EmptyPayload => "empty payload",
            TamperReason::PayloadHashMismatch => "payload_hash mismatch",
            TamperReason::LinkMismatch => "prev_hash link mismatch",
            TamperReason::HmacMismatch => "hmac mismatch",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("tampering detected at block {first_bad_seq}: {reason}")]
pub struct TamperReport {
    pub first_bad_seq: u64,
    pub reason: TamperReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerBlock {
    pub seq: u64,
    pub prev_hash: Digest32,
    pub payload: Vec<String>,
    pub payload_hash: Digest32,
    pub hmac: Digest32,
}

pub fn payload_digest(lines: &[String]) -> Digest32 {
    let mut h = Sha256::new();
    for (i, line) in lines.iter().enumerate() {
        if i > 0 {
            h.update(b"\n");
        }
        h.update(line.as_bytes());
    }
    h.finalize().into()
}

fn header_bytes(seq: u64, prev_hash: &Digest32, payload_hash: &Digest32) -> [u8; 8 + 2 * DIGEST_LEN] {
    let mut buf = [0u8; 8 + 2 * DIGEST_LEN];
    buf[..8].copy_from_slice(&seq.to_be_bytes());
    buf[8..40].copy_from_slice(prev_hash);
    buf[40..].copy_from_slice(payload_hash);
    buf
}

fn mac(key: &ChannelKey) -> HmacSha256 {
    <HmacSha256 as KeyInit>::new_from_slice(key.as_bytes()).expect("HMAC accepts any key length")
}

pub fn header_hash(seq: u64, prev_hash: &Digest32, payload_hash: &Digest32) -> Digest32 {
    Sha256::digest(header_bytes(seq, prev_hash, payload_hash)).into()
}

pub fn header_tag(key: &ChannelKey, seq: u64, prev_hash: &Digest32, payload_hash: &Digest32) -> Digest32 {
    let mut m = mac(key);
    m.update(&header_bytes(seq, prev_hash, payload_hash));
    m.finalize().into_bytes().into()
}

impl LedgerBlock {
    pub fn seal(seq: u64, prev_hash: Digest32, payload: Vec<String>, key: &ChannelKey) -> Self {
        let payload_hash = payload_digest(&payload);
        let hmac = header_tag(key, seq, &prev_hash, &payload_hash);
        Self {
            seq,
            prev_hash,
            payload,
            payload_hash,
            hmac,
        }
    }

    pub fn head_hash(&self) -> Digest32 {
        header_hash(self.seq, &self.prev_hash, &self.payload_hash)
    }

    /// Lines joined by `\n`, no trailing newline.
    pub fn canonical_payload(&self) -> String {
        self.payload.join("\n")
    }

    pub fn tag_valid(&self, key: &ChannelKey) -> bool {
        let mut m = mac(key);
        m.update(&header_bytes(self.seq, &self.prev_hash, &self.payload_hash));
        m.verify_slice(&self.hmac).is_ok()
    }

    /// Check this block as the successor of `(expected_seq, expected_prev)`.
    /// Checks run in a fixed order: seq, payload, payload hash, link, tag.
    pub fn check(&self, expected_seq: u64, expected_prev: &Digest32, key: &ChannelKey) -> Result<(), TamperReason> {
        if self.seq != expected_seq {
            return Err(TamperReason::SeqMismatch);
        }
        if self.payload.is_empty() {
            return Err(TamperReason::EmptyPayload);
        }
        if payload_digest(&self.payload) != self.payload_hash {
            return Err(TamperReason::PayloadHashMismatch);
        }
        if &self.prev_hash != expected_prev {
            return Err(TamperReason::LinkMismatch);
        }
        if !self.tag_valid(key) {
            return Err(TamperReason::HmacMismatch);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainHead {
    pub channel_id: String,
    pub seq: u64,
    pub head_hash: Digest32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "seq", rename_all = "snake_case")]
pub enum SyncStatus {
    Consistent,
    /// Lowest seq at which the two copies may disagree.
    Diverged(u64),
}

/// Compare two copies' heads of the same channel.
pub fn sync_heads(local: &ChainHead, peer: &ChainHead) -> Result<SyncStatus, ChainError> {
    if local.channel_id != peer.channel_id {
        return Err(ChainError::ChannelMismatch {
            local: local.channel_id.clone(),
            peer: peer.channel_id.clone(),
        });
    }
    Ok(if local.seq != peer.seq {
        SyncStatus::Diverged(local.seq.min(peer.seq) + 1)
    } else if local.head_hash != peer.head_hash {
        SyncStatus::Diverged(local.seq)
    } else {
        SyncStatus::Consistent
    })
}

/// Verify a sequence of blocks from genesis.
pub fn verify_blocks(blocks: &[LedgerBlock], key: &ChannelKey) -> Result<(), TamperReport> {
    let mut prev = GENESIS_PREV;
    for (i, b) in blocks.iter().enumerate() {
        b.check(i as u64, &prev, key).map_err(|reason| TamperReport {
            first_bad_seq: i as u64,
            reason,
        })?;
        prev = b.head_hash();
    }
    Ok(())
}

/// One channel's chain. Single writer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    channel_id: String,
    blocks: Vec<LedgerBlock>,
}

impl Chain {
    pub fn new(channel_id: impl Into<String>) -> Self {
        Self {
            channel_id: channel_id.into(),
            blocks: Vec::new(),
        }
    }

    pub fn channel_id(&self) -> &str {
        &self.channel_id
    }

    pub fn blocks(&self) -> &[LedgerBlock] {
        &self.blocks
    }

    /// Mutable access for drills that simulate storage tampering.
    pub fn blocks_mut(&mut self) -> &mut [LedgerBlock] {
        &mut self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn head(&self) -> Option<ChainHead> {
        self.blocks.last().map(|b| ChainHead {
            channel_id: self.channel_id.clone(),
            seq: b.seq,
            head_hash: b.head_hash(),
        })
    }

    pub fn append(&mut self, lines: Vec<String>, key: &ChannelKey) -> Result<&LedgerBlock, ChainError> {
        if lines.is_empty() {
            return Err(ChainError::EmptyPayload);
        }
        if lines.iter().any(|l| l.contains('\n')) {
            return Err(ChainError::MultilineRecord);
        }
        let (seq, prev) = match self.blocks.last() {
            Some(b) => (b.seq + 1, b.head_hash()),
            None => (0, GENESIS_PREV),
        };
        self.blocks.push(LedgerBlock::seal(seq, prev, lines, key));
        Ok(self.blocks.last().expect("just pushed"))
    }

    pub fn append_records(&mut self, records: &[FeatureRecord], key: &ChannelKey) -> Result<&LedgerBlock, ChainError> {
        self.append(records.iter().map(FeatureRecord::to_line).collect(), key)
    }

    pub fn verify(&self, key: &ChannelKey) -> Result<(), TamperReport> {
        verify_blocks(&self.blocks, key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> ChannelKey {
        ChannelKey::new(b"cam1-secret".to_vec())
    }

    fn lines(i: usize) -> Vec<String> {
        (0..3)
            .map(|j| format!("ts={i} cam=cam1 frame={i} track=- key=k{j} val={j}"))
            .collect()
    }

    fn chain(n: usize) -> Chain {
        let mut c = Chain::new("cam1");
        for i in 0..n {
            c.append(lines(i), &key()).unwrap();
        }
        c
    }

    #[test]
    fn genesis_and_links() {
        let c = chain(2);
        assert_eq!(c.blocks()[0].seq, 0);
        assert_eq!(c.blocks()[0].prev_hash, GENESIS_PREV);
        assert_eq!(c.blocks()[1].prev_hash, c.blocks()[0].head_hash());
        assert_eq!(c.head().unwrap().seq, 1);
    }

    #[test]
    fn empty_payload_rejected() {
        assert_eq!(Chain::new("c").append(vec![], &key()).unwrap_err(), ChainError::EmptyPayload);
    }

    #[test]
    fn hundred_appends_verify() {
        assert_eq!(chain(100).verify(&key()), Ok(()));
        assert!(Chain::new("c").verify(&key()).is_ok());
    }

    #[test]
    fn wrong_key_fails_at_genesis() {
        let r = chain(5).verify(&ChannelKey::new(b"other".to_vec())).unwrap_err();
        assert_eq!((r.first_bad_seq, r.reason), (0, TamperReason::HmacMismatch));
    }

    #[test]
    fn payload_byte_flip_detected() {
        let mut c = chain(6);
        let mut bytes = c.blocks()[3].payload[1].clone().into_bytes();
        bytes[5] ^= 0x01;
        c.blocks_mut()[3].payload[1] = String::from_utf8(bytes).unwrap();
        let r = c.verify(&key()).unwrap_err();
        assert_eq!((r.first_bad_seq, r.reason), (3, TamperReason::PayloadHashMismatch));
    }

    #[test]
    fn keyless_rehash_detected_by_tag() {
        let mut c = chain(6);
        let b = &mut c.blocks_mut()[3];
        b.payload[0] = "ts=0 cam=cam1 frame=0 track=- key=forged val=1".into();
        b.payload_hash = payload_digest(&b.payload);
        let r = c.verify(&key()).unwrap_err();
        assert_eq!((r.first_bad_seq, r.reason), (3, TamperReason::HmacMismatch));
    }

    #[test]
    fn header_field_flips_detected_at_that_block() {
        for (field, expect) in [
            (0, TamperReason::SeqMismatch),
            (1, TamperReason::LinkMismatch),
            (2, TamperReason::PayloadHashMismatch),
            (3, TamperReason::HmacMismatch),
        ] {
            let mut c = chain(5);
            let b = &mut c.blocks_mut()[2];
            match field {
                0 => b.seq ^= 1 << 7,
                1 => b.prev_hash[31] ^= 0x80,
                2 => b.payload_hash[0] ^= 0x01,
                _ => b.hmac[16] ^= 0x10,
            }
            let r = c.verify(&key()).unwrap_err();
            assert_eq!((r.first_bad_seq, r.reason), (2, expect));
        }
    }

    #[test]
    fn head_sync() {
        let c = chain(4);
        let h = c.head().unwrap();
        assert_eq!(sync_heads(&h, &h).unwrap(), SyncStatus::Consistent);

        let behind = chain(3).head().unwrap();
        assert_eq!(sync_heads(&h, &behind).unwrap(), SyncStatus::Diverged(h.seq));

        // fork: same length, different last block
        let mut fork = chain(3);
        fork.append(vec!["ts=9 cam=cam1 frame=9 track=- key=x val=1".into()], &key())
            .unwrap();
        let f = fork.head().unwrap();
        assert_eq!(f.seq, h.seq);
        assert_eq!(sync_heads(&h, &f).unwrap(), SyncStatus::Diverged(3));

        let other = ChainHead {
            channel_id: "cam2".into(),
            ..h.clone()
        };
        assert!(sync_heads(&h, &other).is_err());
    }
}
