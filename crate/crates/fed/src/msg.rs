//! Protocol messages and their binary wire format: length-prefixed frames,
//! one-byte kind tag, big-endian integers, ciphertexts in the crypto
//! module's format. The ledger's byte accounting is defined over exactly
//! these encodings.

use fedgbdt_core::InstanceId;
use fedgbdt_crypto::{Ciphertext, EncKey};

use crate::error::{FedError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Host,
    Guest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartyId {
    pub role: Role,
    pub index: u32,
}

impl PartyId {
    pub fn host() -> Self {
        PartyId { role: Role::Host, index: 0 }
    }

    pub fn guest(index: u32) -> Self {
        PartyId { role: Role::Guest, index }
    }
}

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.role {
            Role::Host => write!(f, "host"),
            Role::Guest => write!(f, "guest{}", self.index),
        }
    }
}

/// Per-node payload of a gradient shard: the node's full slot list, the
/// other guests masking the same slots, and this guest's encrypted
/// gradients by slot position.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeShard {
    pub node_id: u32,
    pub slot_ids: Vec<InstanceId>,
    pub peer_guests: Vec<u32>,
    pub entries: Vec<(u32, Ciphertext)>,
}

/// One frontier node's split query: encrypted parent gradient sum plus
/// per-candidate encrypted left sums and plain left counts. Candidate
/// descriptors stay guest-side; the host only learns the winning index.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSplitQuery {
    pub query_id: u32,
    pub parent_sum: Ciphertext,
    pub parent_count: u32,
    pub candidates: Vec<(Ciphertext, u32)>,
}

/// Per-node reply to a gradient shard: one ciphertext per slot (scale
/// composed from gradient and reciprocal encodings) and, for slots this
/// guest is responsible for, the bottom-tree leaf position.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeContribution {
    pub node_id: u32,
    pub ciphertexts: Vec<Ciphertext>,
    pub positions: Vec<u16>,
}

pub const NO_POSITION: u16 = u16::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum PartyMessage {
    /// Host -> guests at setup: the homomorphic public key.
    PublicKeyAnnounce { key_bytes: Vec<u8> },
    /// Guest -> host: its DH public; host -> guests: the full roster.
    DhExchange { publics: Vec<(u32, Vec<u8>)> },
    /// Guest -> host at setup: the instance ids it holds features for.
    LinkAnnounce { instance_ids: Vec<InstanceId> },
    /// Host -> guest, once per round: per last-layer node, encrypted
    /// gradients for the slots this guest is responsible for.
    GradientShard { tree_round: u64, nodes: Vec<NodeShard> },
    /// Guest -> host in assisted mode, once per bottom layer.
    SplitQuery { tree_round: u64, layer: u16, queries: Vec<NodeSplitQuery> },
    /// Host -> guest: chosen candidate index per query, aligned by order.
    SplitReply { tree_round: u64, layer: u16, chosen: Vec<Option<u16>> },
    /// Guest -> host, once per round: masked per-slot leaf values.
    LeafContribution { tree_round: u64, nodes: Vec<NodeContribution> },
    /// Host -> guest at inference: per tree, (instance, host leaf node).
    InferenceRoute { routes: Vec<(u64, Vec<(InstanceId, u32)>)> },
    /// Guest -> host at inference: per tree, (instance, bottom leaf
    /// position), `NO_POSITION` when the guest has no tree for the node.
    InferenceLeaf { leaves: Vec<(u64, Vec<(InstanceId, u16)>)> },
    /// Host -> guest: training is over.
    Shutdown,
    /// Guest -> host after shutdown: bottom-tree structures for the
    /// persisted model bundle (leaf values are filled in host-side), plus
    /// the guest's compute time.
    ModelExport { trees: Vec<(u64, u32, String)>, compute_seconds: f64 },
}

impl PartyMessage {
    pub fn kind_tag(&self) -> u8 {
        match self {
            PartyMessage::PublicKeyAnnounce { .. } => 1,
            PartyMessage::DhExchange { .. } => 2,
            PartyMessage::LinkAnnounce { .. } => 3,
            PartyMessage::GradientShard { .. } => 4,
            PartyMessage::SplitQuery { .. } => 5,
            PartyMessage::SplitReply { .. } => 6,
            PartyMessage::LeafContribution { .. } => 7,
            PartyMessage::InferenceRoute { .. } => 8,
            PartyMessage::InferenceLeaf { .. } => 9,
            PartyMessage::Shutdown => 10,
            PartyMessage::ModelExport { .. } => 11,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PartyMessage::PublicKeyAnnounce { .. } => "public_key_announce",
            PartyMessage::DhExchange { .. } => "dh_exchange",
            PartyMessage::LinkAnnounce { .. } => "link_announce",
            PartyMessage::GradientShard { .. } => "gradient_shard",
            PartyMessage::SplitQuery { .. } => "split_query",
            PartyMessage::SplitReply { .. } => "split_reply",
            PartyMessage::LeafContribution { .. } => "leaf_contribution",
            PartyMessage::InferenceRoute { .. } => "inference_route",
            PartyMessage::InferenceLeaf { .. } => "inference_leaf",
            PartyMessage::Shutdown => "shutdown",
            PartyMessage::ModelExport { .. } => "model_export",
        }
    }

    pub fn tree_round(&self) -> Option<u64> {
        match self {
            PartyMessage::GradientShard { tree_round, .. }
            | PartyMessage::SplitQuery { tree_round, .. }
            | PartyMessage::SplitReply { tree_round, .. }
            | PartyMessage::LeafContribution { tree_round, .. } => Some(*tree_round),
            _ => None,
        }
    }

    /// Full frame: u32 length of (tag + payload), tag byte, payload.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            PartyMessage::PublicKeyAnnounce { key_bytes } => w.bytes(key_bytes),
            PartyMessage::DhExchange { publics } => {
                w.u32(publics.len() as u32);
                for (idx, bytes) in publics {
                    w.u32(*idx);
                    w.bytes(bytes);
                }
            }
            PartyMessage::LinkAnnounce { instance_ids } => {
                w.u32(instance_ids.len() as u32);
                for id in instance_ids {
                    w.u64(*id);
                }
            }
            PartyMessage::GradientShard { tree_round, nodes } => {
                w.u64(*tree_round);
                w.u32(nodes.len() as u32);
                for n in nodes {
                    w.u32(n.node_id);
                    w.u32(n.slot_ids.len() as u32);
                    for id in &n.slot_ids {
                        w.u64(*id);
                    }
                    w.u32(n.peer_guests.len() as u32);
                    for p in &n.peer_guests {
                        w.u32(*p);
                    }
                    w.u32(n.entries.len() as u32);
                    for (slot, c) in &n.entries {
                        w.u32(*slot);
                        w.raw(&c.to_bytes());
                    }
                }
            }
            PartyMessage::SplitQuery { tree_round, layer, queries } => {
                w.u64(*tree_round);
                w.u16(*layer);
                w.u32(queries.len() as u32);
                for q in queries {
                    w.u32(q.query_id);
                    w.raw(&q.parent_sum.to_bytes());
                    w.u32(q.parent_count);
                    w.u32(q.candidates.len() as u32);
                    for (c, count) in &q.candidates {
                        w.raw(&c.to_bytes());
                        w.u32(*count);
                    }
                }
            }
            PartyMessage::SplitReply { tree_round, layer, chosen } => {
                w.u64(*tree_round);
                w.u16(*layer);
                w.u32(chosen.len() as u32);
                for c in chosen {
                    match c {
                        Some(i) => {
                            w.u8(1);
                            w.u16(*i);
                        }
                        None => w.u8(0),
                    }
                }
            }
            PartyMessage::LeafContribution { tree_round, nodes } => {
                w.u64(*tree_round);
                w.u32(nodes.len() as u32);
                for n in nodes {
                    w.u32(n.node_id);
                    w.u32(n.ciphertexts.len() as u32);
                    for c in &n.ciphertexts {
                        w.raw(&c.to_bytes());
                    }
                    w.u32(n.positions.len() as u32);
                    for p in &n.positions {
                        w.u16(*p);
                    }
                }
            }
            PartyMessage::InferenceRoute { routes } => {
                w.u32(routes.len() as u32);
                for (round, items) in routes {
                    w.u64(*round);
                    w.u32(items.len() as u32);
                    for (id, node) in items {
                        w.u64(*id);
                        w.u32(*node);
                    }
                }
            }
            PartyMessage::InferenceLeaf { leaves } => {
                w.u32(leaves.len() as u32);
                for (round, items) in leaves {
                    w.u64(*round);
                    w.u32(items.len() as u32);
                    for (id, pos) in items {
                        w.u64(*id);
                        w.u16(*pos);
                    }
                }
            }
            PartyMessage::Shutdown => {}
            PartyMessage::ModelExport { trees, compute_seconds } => {
                w.f64(*compute_seconds);
                w.u32(trees.len() as u32);
                for (round, node, json) in trees {
                    w.u64(*round);
                    w.u32(*node);
                    w.bytes(json.as_bytes());
                }
            }
        }
        let payload = w.into_inner();
        let mut out = Vec::with_capacity(5 + payload.len());
        out.extend_from_slice(&(1 + payload.len() as u32).to_be_bytes());
        out.push(self.kind_tag());
        out.extend_from_slice(&payload);
        out
    }

    /// Decode one frame produced by [`encode`]; the slice must hold the
    /// whole frame.
    pub fn decode(frame: &[u8]) -> Result<PartyMessage> {
        if frame.len() < 5 {
            return Err(FedError::Wire("frame too short".into()));
        }
        let len = u32::from_be_bytes(frame[0..4].try_into().unwrap()) as usize;
        if frame.len() != 4 + len {
            return Err(FedError::Wire(format!(
                "frame length {} does not match header {}",
                frame.len(),
                4 + len
            )));
        }
        let tag = frame[4];
        let mut r = Reader::new(&frame[5..]);
        let msg = match tag {
            1 => PartyMessage::PublicKeyAnnounce { key_bytes: r.bytes()? },
            2 => {
                let n = r.u32()? as usize;
                let mut publics = Vec::with_capacity(n);
                for _ in 0..n {
                    let idx = r.u32()?;
                    let bytes = r.bytes()?;
                    publics.push((idx, bytes));
                }
                PartyMessage::DhExchange { publics }
            }
            3 => {
                let n = r.u32()? as usize;
                let mut instance_ids = Vec::with_capacity(n);
                for _ in 0..n {
                    instance_ids.push(r.u64()?);
                }
                PartyMessage::LinkAnnounce { instance_ids }
            }
            4 => {
                let tree_round = r.u64()?;
                let n = r.u32()? as usize;
                let mut nodes = Vec::with_capacity(n);
                for _ in 0..n {
                    let node_id = r.u32()?;
                    let n_slots = r.u32()? as usize;
                    let mut slot_ids = Vec::with_capacity(n_slots);
                    for _ in 0..n_slots {
                        slot_ids.push(r.u64()?);
                    }
                    let n_peers = r.u32()? as usize;
                    let mut peer_guests = Vec::with_capacity(n_peers);
                    for _ in 0..n_peers {
                        peer_guests.push(r.u32()?);
                    }
                    let n_entries = r.u32()? as usize;
                    let mut entries = Vec::with_capacity(n_entries);
                    for _ in 0..n_entries {
                        let slot = r.u32()?;
                        let c = r.ciphertext()?;
                        entries.push((slot, c));
                    }
                    nodes.push(NodeShard { node_id, slot_ids, peer_guests, entries });
                }
                PartyMessage::GradientShard { tree_round, nodes }
            }
            5 => {
                let tree_round = r.u64()?;
                let layer = r.u16()?;
                let n = r.u32()? as usize;
                let mut queries = Vec::with_capacity(n);
                for _ in 0..n {
                    let query_id = r.u32()?;
                    let parent_sum = r.ciphertext()?;
                    let parent_count = r.u32()?;
                    let n_c = r.u32()? as usize;
                    let mut candidates = Vec::with_capacity(n_c);
                    for _ in 0..n_c {
                        let c = r.ciphertext()?;
                        let count = r.u32()?;
                        candidates.push((c, count));
                    }
                    queries.push(NodeSplitQuery { query_id, parent_sum, parent_count, candidates });
                }
                PartyMessage::SplitQuery { tree_round, layer, queries }
            }
            6 => {
                let tree_round = r.u64()?;
                let layer = r.u16()?;
                let n = r.u32()? as usize;
                let mut chosen = Vec::with_capacity(n);
                for _ in 0..n {
                    let has = r.u8()?;
                    chosen.push(if has == 1 { Some(r.u16()?) } else { None });
                }
                PartyMessage::SplitReply { tree_round, layer, chosen }
            }
            7 => {
                let tree_round = r.u64()?;
                let n = r.u32()? as usize;
                let mut nodes = Vec::with_capacity(n);
                for _ in 0..n {
                    let node_id = r.u32()?;
                    let n_c = r.u32()? as usize;
                    let mut ciphertexts = Vec::with_capacity(n_c);
                    for _ in 0..n_c {
                        ciphertexts.push(r.ciphertext()?);
                    }
                    let n_p = r.u32()? as usize;
                    let mut positions = Vec::with_capacity(n_p);
                    for _ in 0..n_p {
                        positions.push(r.u16()?);
                    }
                    nodes.push(NodeContribution { node_id, ciphertexts, positions });
                }
                PartyMessage::LeafContribution { tree_round, nodes }
            }
            8 => {
                let n = r.u32()? as usize;
                let mut routes = Vec::with_capacity(n);
                for _ in 0..n {
                    let round = r.u64()?;
                    let m = r.u32()? as usize;
                    let mut items = Vec::with_capacity(m);
                    for _ in 0..m {
                        let id = r.u64()?;
                        let node = r.u32()?;
                        items.push((id, node));
                    }
                    routes.push((round, items));
                }
                PartyMessage::InferenceRoute { routes }
            }
            9 => {
                let n = r.u32()? as usize;
                let mut leaves = Vec::with_capacity(n);
                for _ in 0..n {
                    let round = r.u64()?;
                    let m = r.u32()? as usize;
                    let mut items = Vec::with_capacity(m);
                    for _ in 0..m {
                        let id = r.u64()?;
                        let pos = r.u16()?;
                        items.push((id, pos));
                    }
                    leaves.push((round, items));
                }
                PartyMessage::InferenceLeaf { leaves }
            }
            10 => PartyMessage::Shutdown,
            11 => {
                let compute_seconds = r.f64()?;
                let n = r.u32()? as usize;
                let mut trees = Vec::with_capacity(n);
                for _ in 0..n {
                    let round = r.u64()?;
                    let node = r.u32()?;
                    let json = String::from_utf8(r.bytes()?)
                        .map_err(|e| FedError::Wire(e.to_string()))?;
                    trees.push((round, node, json));
                }
                PartyMessage::ModelExport { trees, compute_seconds }
            }
            other => return Err(FedError::Wire(format!("unknown message tag {other}"))),
        };
        r.finish()?;
        Ok(msg)
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn into_inner(self) -> Vec<u8> {
        self.buf
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
    }

    fn raw(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, at: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.buf.len() {
            return Err(FedError::Wire("payload truncated".into()));
        }
        let out = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    fn ciphertext(&mut self) -> Result<Ciphertext> {
        let rest = &self.buf[self.at..];
        let (c, used) = Ciphertext::from_bytes(rest)?;
        self.at += used;
        Ok(c)
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.buf.len() {
            return Err(FedError::Wire(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.at
            )));
        }
        Ok(())
    }
}

/// Parse the announced public key back into a usable key.
pub fn decode_enc_key(bytes: &[u8]) -> Result<EncKey> {
    let (key, used) = EncKey::from_bytes(bytes)?;
    if used != bytes.len() {
        return Err(FedError::Wire("trailing bytes in public key".into()));
    }
    Ok(key)
}

/// Every label-derived field a guest can see must be a ciphertext; this
/// audit walks a guest-bound message and confirms it carries no plain
/// reals at all (the wire format admits plaintext reals only in
/// host-side-bound exports).
pub fn guest_bound_message_carries_no_plain_reals(msg: &PartyMessage) -> bool {
    match msg {
        PartyMessage::PublicKeyAnnounce { .. }
        | PartyMessage::DhExchange { .. }
        | PartyMessage::GradientShard { .. }
        | PartyMessage::SplitReply { .. }
        | PartyMessage::InferenceRoute { .. }
        | PartyMessage::Shutdown => true,
        // Host -> guest never uses these kinds.
        PartyMessage::LinkAnnounce { .. }
        | PartyMessage::SplitQuery { .. }
        | PartyMessage::LeafContribution { .. }
        | PartyMessage::InferenceLeaf { .. }
        | PartyMessage::ModelExport { .. } => false,
    }
}
