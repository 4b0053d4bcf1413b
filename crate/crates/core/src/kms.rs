//! Per-node key stores, a pull-style key-delivery surface, and periodic
//! rekeying consumers.
//!
//! Secret key is held in 32-byte chunks. Each completed block deposits
//! `floor(secret_bytes / 32)` chunks into the stores at both ends of its link
//! under identical key ids; the sub-chunk tail is discarded. Chunk bytes are a
//! deterministic expansion of the run seed:
//!
//! ```text
//! chunk = SHA-256("qkdsim-key-v1" || seed:u64le || len(link):u32le || link || block_seq:u64le || chunk:u32le)
//! ```
//!
//! Stores keep block-level segments rather than materialized chunks, so a
//! 60-day run does not hold gigabytes of key in memory.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::KmsError;
use crate::linkmodel::BlockRecord;
use crate::simcore::SimTime;
use crate::topology::{LinkId, NodeId};

pub const CHUNK_SIZE: u32 = 32;
pub const DEFAULT_KEY_SIZE: u32 = 32;
pub const DEFAULT_REKEY_INTERVAL_S: f64 = 60.0;

/// 128-bit key identifier: link ordinal (32 bits), block sequence (64 bits),
/// chunk index within the block (32 bits). Unique network-wide by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyId(pub u128);

impl KeyId {
    pub fn compose(link_ordinal: u32, block_seq: u64, chunk: u32) -> KeyId {
        KeyId((u128::from(link_ordinal) << 96) | (u128::from(block_seq) << 32) | u128::from(chunk))
    }

    pub fn link_ordinal(self) -> u32 {
        (self.0 >> 96) as u32
    }

    pub fn block_seq(self) -> u64 {
        (self.0 >> 32) as u64
    }

    pub fn chunk(self) -> u32 {
        self.0 as u32
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = format!("{:032x}", self.0);
        write!(f, "{}-{}-{}-{}-{}", &h[..8], &h[8..12], &h[12..16], &h[16..20], &h[20..])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsumerSpec {
    pub id: String,
    pub link: LinkId,
    pub rekey_interval: f64,
    pub key_size: u32,
    /// Boot key used until QKD key is available.
    pub psk: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyBlockEntry {
    pub key_id: KeyId,
    pub link_id: LinkId,
    pub bytes: Vec<u8>,
    pub created: SimTime,
    pub consumed: Option<SimTime>,
}

/// Deterministic key-material expander for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyMaterial {
    run_seed: u64,
}

impl KeyMaterial {
    pub fn new(run_seed: u64) -> Self {
        Self { run_seed }
    }

    pub fn chunk(&self, link: &LinkId, block_seq: u64, chunk: u32) -> [u8; CHUNK_SIZE as usize] {
        let mut h = Sha256::new();
        h.update(b"qkdsim-key-v1");
        h.update(self.run_seed.to_le_bytes());
        h.update((link.0.len() as u32).to_le_bytes());
        h.update(link.0.as_bytes());
        h.update(block_seq.to_le_bytes());
        h.update(chunk.to_le_bytes());
        h.finalize().into()
    }
}

/// Result of depositing one block: a compact description of the chunks added
/// to both stores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deposit {
    pub link_id: LinkId,
    pub link_ordinal: u32,
    pub block_seq: u64,
    pub chunks: u32,
    pub created: SimTime,
    /// Secret bytes below chunk granularity that were dropped.
    pub discarded_bytes: u64,
}

impl Deposit {
    pub fn is_empty(&self) -> bool {
        self.chunks == 0
    }

    pub fn bytes(&self) -> u64 {
        u64::from(self.chunks) * u64::from(CHUNK_SIZE)
    }

    pub fn key_ids(&self) -> impl Iterator<Item = KeyId> + '_ {
        (0..self.chunks).map(move |c| KeyId::compose(self.link_ordinal, self.block_seq, c))
    }

    /// Materializes the deposited entries.
    pub fn entries<'a>(&'a self, material: &'a KeyMaterial) -> impl Iterator<Item = KeyBlockEntry> + 'a {
        (0..self.chunks).map(move |c| KeyBlockEntry {
            key_id: KeyId::compose(self.link_ordinal, self.block_seq, c),
            link_id: self.link_id.clone(),
            bytes: material.chunk(&self.link_id, self.block_seq, c).to_vec(),
            created: self.created,
            consumed: None,
        })
    }
}

#[derive(Debug, Clone)]
struct Segment {
    block_seq: u64,
    chunks: u32,
    /// Chunks below this index are consumed.
    next: u32,
}

#[derive(Debug, Clone)]
struct LinkBuffer {
    ordinal: u32,
    segments: VecDeque<Segment>,
    /// Consumed chunks lying beyond their segment's consumed prefix.
    skipped: BTreeSet<KeyId>,
    history: Vec<(u64, u32, SimTime)>,
    deposited_bytes: u64,
    consumed_bytes: u64,
    buffered_bytes: u64,
}

impl LinkBuffer {
    fn is_consumed(&self, seg: &Segment, chunk: u32) -> bool {
        chunk < seg.next || self.skipped.contains(&KeyId::compose(self.ordinal, seg.block_seq, chunk))
    }

    /// Up to `n` unconsumed chunks in FIFO order, starting at segment `si`, chunk `from`.
    fn collect_from(&self, mut si: usize, mut from: u32, n: usize) -> Vec<(usize, u32)> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n && si < self.segments.len() {
            let seg = &self.segments[si];
            let mut c = from.max(seg.next);
            while out.len() < n && c < seg.chunks {
                if !self.is_consumed(seg, c) {
                    out.push((si, c));
                }
                c += 1;
            }
            si += 1;
            from = 0;
        }
        out
    }

    fn consume(&mut self, picks: &[(usize, u32)]) -> Vec<KeyId> {
        let mut ids = Vec::with_capacity(picks.len());
        for &(si, c) in picks {
            let seg = &self.segments[si];
            let id = KeyId::compose(self.ordinal, seg.block_seq, c);
            ids.push(id);
            self.skipped.insert(id);
        }
        // fold skipped chunks back into the consumed prefixes of touched segments
        let mut touched: Vec<usize> = picks.iter().map(|&(si, _)| si).collect();
        touched.dedup();
        for si in touched {
            let seg = &mut self.segments[si];
            while seg.next < seg.chunks && self.skipped.remove(&KeyId::compose(self.ordinal, seg.block_seq, seg.next)) {
                seg.next += 1;
            }
        }
        while self.segments.front().is_some_and(|s| s.next == s.chunks) {
            self.segments.pop_front();
        }
        let bytes = picks.len() as u64 * u64::from(CHUNK_SIZE);
        self.consumed_bytes += bytes;
        self.buffered_bytes -= bytes;
        ids
    }

    fn recount(&self) -> u64 {
        let unconsumed: u64 = self.segments.iter().map(|s| u64::from(s.chunks - s.next)).sum();
        (unconsumed - self.skipped.len() as u64) * u64::from(CHUNK_SIZE)
    }
}

/// A key handed to a consumer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveredKey {
    pub key_id: KeyId,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub time: SimTime,
    pub consumer: String,
    pub key_id: KeyId,
    pub chunks: u32,
}

/// Key store of one node, holding one FIFO buffer per attached link.
#[derive(Debug, Clone)]
pub struct KeyStore {
    node: NodeId,
    material: KeyMaterial,
    links: BTreeMap<LinkId, LinkBuffer>,
    consumed: HashMap<KeyId, SimTime>,
    deliveries: Vec<DeliveryRecord>,
}

impl KeyStore {
    /// `links` pairs each attached link with its network-wide ordinal.
    pub fn new(node: NodeId, material: KeyMaterial, links: impl IntoIterator<Item = (LinkId, u32)>) -> Self {
        let links = links
            .into_iter()
            .map(|(id, ordinal)| {
                (
                    id,
                    LinkBuffer {
                        ordinal,
                        segments: VecDeque::new(),
                        skipped: BTreeSet::new(),
                        history: Vec::new(),
                        deposited_bytes: 0,
                        consumed_bytes: 0,
                        buffered_bytes: 0,
                    },
                )
            })
            .collect();
        Self {
            node,
            material,
            links,
            consumed: HashMap::new(),
            deliveries: Vec::new(),
        }
    }

    pub fn node(&self) -> &NodeId {
        &self.node
    }

    fn buffer(&self, link: &LinkId) -> &LinkBuffer {
        self.links
            .get(link)
            .unwrap_or_else(|| panic!("link {link} is not attached to store {}", self.node))
    }

    fn buffer_mut(&mut self, link: &LinkId) -> &mut LinkBuffer {
        let node = &self.node;
        self.links
            .get_mut(link)
            .unwrap_or_else(|| panic!("link {link} is not attached to store {node}"))
    }

    pub fn buffered_bytes(&self, link: &LinkId) -> u64 {
        self.buffer(link).buffered_bytes
    }

    pub fn deposited_bytes(&self, link: &LinkId) -> u64 {
        self.buffer(link).deposited_bytes
    }

    pub fn consumed_bytes(&self, link: &LinkId) -> u64 {
        self.buffer(link).consumed_bytes
    }

    pub fn deliveries(&self) -> &[DeliveryRecord] {
        &self.deliveries
    }

    fn push_segment(&mut self, link: &LinkId, block_seq: u64, chunks: u32, created: SimTime) {
        let buf = self.buffer_mut(link);
        buf.history.push((block_seq, chunks, created));
        if chunks > 0 {
            buf.segments.push_back(Segment {
                block_seq,
                chunks,
                next: 0,
            });
        }
        let bytes = u64::from(chunks) * u64::from(CHUNK_SIZE);
        buf.deposited_bytes += bytes;
        buf.buffered_bytes += bytes;
    }

    /// Oldest unconsumed key material of at least `size` bytes (rounded up to
    /// whole chunks), FIFO.
    pub fn get_key(&mut self, link: &LinkId, consumer: &str, size: u32, now: SimTime) -> Result<DeliveredKey, KmsError> {
        let n = chunks_for(size)?;
        let buf = self.buffer(link);
        let picks = buf.collect_from(0, 0, n);
        if picks.len() < n {
            return Err(KmsError::InsufficientKey {
                available: buf.buffered_bytes,
                requested: u64::from(size),
            });
        }
        Ok(self.deliver(link, consumer, size, &picks, now))
    }

    /// Peer-side retrieval of the key a partner store delivered as `key_id`.
    pub fn get_key_with_id(
        &mut self,
        link: &LinkId,
        consumer: &str,
        key_id: KeyId,
        size: u32,
        now: SimTime,
    ) -> Result<DeliveredKey, KmsError> {
        let n = chunks_for(size)?;
        let buf = self.buffer(link);
        let unknown = || KmsError::UnknownKey(key_id.to_string());
        if key_id.link_ordinal() != buf.ordinal {
            return Err(unknown());
        }
        let si = buf
            .segments
            .iter()
            .position(|s| s.block_seq == key_id.block_seq())
            .ok_or_else(unknown)?;
        let seg = &buf.segments[si];
        if key_id.chunk() >= seg.chunks || buf.is_consumed(seg, key_id.chunk()) {
            return Err(unknown());
        }
        let picks = buf.collect_from(si, key_id.chunk(), n);
        if picks.len() < n {
            return Err(KmsError::InsufficientKey {
                available: buf.buffered_bytes,
                requested: u64::from(size),
            });
        }
        Ok(self.deliver(link, consumer, size, &picks, now))
    }

    fn deliver(&mut self, link: &LinkId, consumer: &str, size: u32, picks: &[(usize, u32)], now: SimTime) -> DeliveredKey {
        let material = self.material;
        let buf = self.buffer_mut(link);
        let mut bytes = Vec::with_capacity(picks.len() * CHUNK_SIZE as usize);
        for &(si, c) in picks {
            bytes.extend_from_slice(&material.chunk(link, buf.segments[si].block_seq, c));
        }
        bytes.truncate(size as usize);
        let ids = buf.consume(picks);
        for id in &ids {
            let fresh = self.consumed.insert(*id, now).is_none();
            assert!(fresh, "key {id} consumed twice at {}", self.node);
        }
        self.deliveries.push(DeliveryRecord {
            time: now,
            consumer: consumer.to_owned(),
            key_id: ids[0],
            chunks: ids.len() as u32,
        });
        DeliveredKey { key_id: ids[0], bytes }
    }

    /// Checks deposited - consumed = buffered for every link, recounting the
    /// buffer from its segments.
    pub fn check_conservation(&self) -> Result<(), String> {
        for (id, buf) in &self.links {
            let recount = buf.recount();
            if buf.deposited_bytes - buf.consumed_bytes != buf.buffered_bytes || recount != buf.buffered_bytes {
                return Err(format!(
                    "store {} link {id}: deposited {} consumed {} buffered {} recount {recount}",
                    self.node, buf.deposited_bytes, buf.consumed_bytes, buf.buffered_bytes
                ));
            }
        }
        Ok(())
    }

    /// Cheap per-event form of [`check_conservation`](Self::check_conservation).
    pub fn check_counters(&self) -> Result<(), String> {
        for (id, buf) in &self.links {
            if buf.deposited_bytes - buf.consumed_bytes != buf.buffered_bytes {
                return Err(format!("store {} link {id}: counters out of balance", self.node));
            }
        }
        Ok(())
    }

    /// Every entry this store ever held for `link`, with consumption times.
    /// Materializes all key bytes; meant for tests and small runs.
    pub fn held_entries(&self, link: &LinkId) -> Vec<KeyBlockEntry> {
        let buf = self.buffer(link);
        let mut out = Vec::new();
        for &(seq, chunks, created) in &buf.history {
            for c in 0..chunks {
                let key_id = KeyId::compose(buf.ordinal, seq, c);
                out.push(KeyBlockEntry {
                    key_id,
                    link_id: link.clone(),
                    bytes: self.material.chunk(link, seq, c).to_vec(),
                    created,
                    consumed: self.consumed.get(&key_id).copied(),
                });
            }
        }
        out
    }
}

fn chunks_for(size: u32) -> Result<usize, KmsError> {
    if size == 0 {
        return Err(KmsError::ZeroSize);
    }
    Ok(size.div_ceil(CHUNK_SIZE) as usize)
}

/// Deposits a completed block's secret key into both endpoint stores under
/// identical key ids. Zero-chunk blocks deposit nothing.
pub fn deposit_block(store_a: &mut KeyStore, store_b: &mut KeyStore, block: &BlockRecord) -> Deposit {
    let link = &block.link_id;
    let ordinal = store_a.buffer(link).ordinal;
    assert_eq!(ordinal, store_b.buffer(link).ordinal, "stores disagree on link ordinal for {link}");
    let chunks = u32::try_from(block.secret_bytes / u64::from(CHUNK_SIZE)).expect("block too large for 32-bit chunk index");
    store_a.push_segment(link, block.seq, chunks, block.end_time);
    store_b.push_segment(link, block.seq, chunks, block.end_time);
    Deposit {
        link_id: link.clone(),
        link_ordinal: ordinal,
        block_seq: block.seq,
        chunks,
        created: block.end_time,
        discarded_bytes: block.secret_bytes % u64::from(CHUNK_SIZE),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeySource {
    Qkd,
    Psk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RekeyEvent {
    pub time: SimTime,
    pub consumer_id: String,
    pub link_id: LinkId,
    pub source: KeySource,
    pub key_id: Option<KeyId>,
    /// Hex of the installed key, only when key recording is enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_hex: Option<String>,
    pub trace_index: u64,
}

/// One rekey attempt: pulls a key at the `near` store, fetches the same key
/// id at the `far` store, and falls back to the pre-shared key when either
/// side is short.
pub fn consumer_tick(
    consumer: &ConsumerSpec,
    near: &mut KeyStore,
    far: &mut KeyStore,
    now: SimTime,
    record_key: bool,
) -> RekeyEvent {
    let delivered = near
        .get_key(&consumer.link, &consumer.id, consumer.key_size, now)
        .and_then(|k| {
            let peer = far.get_key_with_id(&consumer.link, &consumer.id, k.key_id, consumer.key_size, now)?;
            assert_eq!(k.bytes, peer.bytes, "key {} differs across stores", k.key_id);
            Ok(k)
        });
    let (source, key_id, bytes) = match delivered {
        Ok(k) => (KeySource::Qkd, Some(k.key_id), k.bytes),
        Err(_) => (KeySource::Psk, None, consumer.psk.clone()),
    };
    RekeyEvent {
        time: now,
        consumer_id: consumer.id.clone(),
        link_id: consumer.link.clone(),
        source,
        key_id,
        key_hex: record_key.then(|| hex::encode(bytes)),
        trace_index: 0,
    }
}
