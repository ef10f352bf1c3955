//! The guest party: receives encrypted gradients for its responsible
//! instances at each host last-layer node, grows bottom layers on its own
//! features, computes encrypted leaf values, masks them, and replies.
//! Guests never see a plaintext label-derived value.

use std::collections::BTreeMap;
use std::time::Instant;

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use fedgbdt_core::binning::{compute_split_candidates, BinCuts};
use fedgbdt_core::dataset::{Dataset, InstanceId};
use fedgbdt_core::tree::{SplitCondition, Tree};

use fedgbdt_crypto::dh::{dh_keypair, dh_shared, DhPublic, SharedKey};
use fedgbdt_crypto::mask::{apply_masks, MaskCtx};
use fedgbdt_crypto::suite::{Ciphertext, EncKey};
use fedgbdt_crypto::FixedPointCodec;

use crate::error::{FedError, Result};
use crate::model::GuestSplitMode;
use crate::msg::{
    decode_enc_key, NodeContribution, NodeShard, NodeSplitQuery, PartyMessage, NO_POSITION,
};
use crate::transport::Transport;

#[derive(Debug, Clone, Copy)]
pub struct GuestConf {
    pub index: u32,
    pub e_guest: usize,
    pub lambda: f64,
    pub max_bins: usize,
    pub mode: GuestSplitMode,
    pub frac_bits: u32,
    pub seed: u64,
}

/// One host node's hand-off as the guest sees it.
struct NodeTask {
    node_id: u32,
    slot_ids: Vec<InstanceId>,
    peers: Vec<u32>,
    /// Positions into `slot_ids` this guest is responsible for.
    my_slots: Vec<u32>,
    my_ciphers: Vec<Ciphertext>,
}

/// Arena node of the bottom tree under construction; `members` index into
/// the task's `my_slots`.
struct BNode {
    members: Vec<u32>,
    depth: usize,
    split: Option<(SplitCondition, usize, usize)>,
    open: bool,
}

struct BottomBuilder {
    nodes: Vec<BNode>,
}

impl BottomBuilder {
    fn new(members: Vec<u32>) -> Self {
        BottomBuilder { nodes: vec![BNode { members, depth: 1, split: None, open: true }] }
    }

    fn frontier_at(&self, depth: usize) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|i| self.nodes[*i].open && self.nodes[*i].depth == depth)
            .collect()
    }

    fn apply_split(&mut self, node: usize, cond: SplitCondition, go_left: Vec<u32>, go_right: Vec<u32>) {
        let depth = self.nodes[node].depth;
        let left = self.nodes.len();
        self.nodes.push(BNode { members: go_left, depth: depth + 1, split: None, open: true });
        let right = self.nodes.len();
        self.nodes.push(BNode { members: go_right, depth: depth + 1, split: None, open: true });
        self.nodes[node].split = Some((cond, left, right));
        self.nodes[node].open = false;
    }

    fn close(&mut self, node: usize) {
        self.nodes[node].open = false;
    }

    /// Assemble the structural tree (leaf values zero) and return, aligned
    /// with the tree's pre-order leaves, each leaf's arena index.
    fn to_tree(&self) -> (Tree, Vec<usize>) {
        let mut leaf_arena = Vec::new();
        let tree = self.build(0, &mut leaf_arena);
        (tree, leaf_arena)
    }

    fn build(&self, at: usize, leaf_arena: &mut Vec<usize>) -> Tree {
        match &self.nodes[at].split {
            None => {
                leaf_arena.push(at);
                Tree::new_leaf(0.0)
            }
            Some((cond, l, r)) => Tree::new_split(
                *cond,
                self.build(*l, leaf_arena),
                self.build(*r, leaf_arena),
            ),
        }
    }
}

pub struct GuestSession<'a> {
    conf: GuestConf,
    data: &'a Dataset,
    cuts: BinCuts,
    rng: ChaCha20Rng,
    enc: Option<EncKey>,
    codec: Option<FixedPointCodec>,
    pair_keys: BTreeMap<u32, SharedKey>,
    dh_private: Option<fedgbdt_crypto::dh::DhPrivate>,
    /// (round, host node, structural tree) for the model export.
    trees: Vec<(u64, u32, Tree)>,
    compute: f64,
}

impl<'a> GuestSession<'a> {
    pub fn new(conf: GuestConf, data: &'a Dataset) -> Result<Self> {
        let cuts = if data.n_instances() > 0 {
            compute_split_candidates(data, &data.feature_ids().to_vec(), conf.max_bins)?
        } else {
            BinCuts::new()
        };
        let rng = ChaCha20Rng::seed_from_u64(conf.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(conf.index as u64 + 1)));
        Ok(GuestSession {
            conf,
            data,
            cuts,
            rng,
            enc: None,
            codec: None,
            pair_keys: BTreeMap::new(),
            dh_private: None,
            trees: Vec::new(),
            compute: 0.0,
        })
    }

    /// Serve the protocol until the host says shutdown.
    pub fn run<T: Transport>(mut self, transport: &mut T) -> Result<()> {
        loop {
            let (msg, _) = transport.recv()?;
            match msg {
                PartyMessage::PublicKeyAnnounce { key_bytes } => {
                    let enc = decode_enc_key(&key_bytes)?;
                    self.codec = Some(enc.codec(self.conf.frac_bits));
                    self.enc = Some(enc);
                    let (private, public) = dh_keypair(&mut self.rng);
                    self.dh_private = Some(private);
                    transport.send(&PartyMessage::DhExchange {
                        publics: vec![(self.conf.index, public.0.to_bytes_be())],
                    })?;
                    transport.send(&PartyMessage::LinkAnnounce {
                        instance_ids: self.data.instance_ids().to_vec(),
                    })?;
                }
                PartyMessage::DhExchange { publics } => {
                    let private = self
                        .dh_private
                        .as_ref()
                        .ok_or_else(|| FedError::Protocol("roster before key announce".into()))?;
                    for (idx, bytes) in publics {
                        if idx == self.conf.index {
                            continue;
                        }
                        let public = DhPublic(BigUint::from_bytes_be(&bytes));
                        self.pair_keys.insert(idx, dh_shared(private, &public)?);
                    }
                }
                PartyMessage::GradientShard { tree_round, nodes } => {
                    self.handle_round(transport, tree_round, nodes)?;
                }
                PartyMessage::Shutdown => {
                    let trees = self
                        .trees
                        .iter()
                        .map(|(r, n, t)| {
                            Ok((*r, *n, serde_json::to_string(t).map_err(|e| {
                                FedError::Protocol(e.to_string())
                            })?))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    transport.send(&PartyMessage::ModelExport {
                        trees,
                        compute_seconds: self.compute,
                    })?;
                    return Ok(());
                }
                other => {
                    return Err(FedError::Protocol(format!(
                        "guest {} got unexpected {}",
                        self.conf.index,
                        other.kind_name()
                    )))
                }
            }
        }
    }

    fn handle_round<T: Transport>(
        &mut self,
        transport: &mut T,
        round: u64,
        shards: Vec<NodeShard>,
    ) -> Result<()> {
        let mut seg = Instant::now();
        let enc = self
            .enc
            .clone()
            .ok_or_else(|| FedError::Protocol("gradient shard before key announce".into()))?;

        let mut tasks: Vec<NodeTask> = Vec::with_capacity(shards.len());
        for shard in shards {
            let my_slots: Vec<u32> = shard.entries.iter().map(|(s, _)| *s).collect();
            let my_ciphers: Vec<Ciphertext> = shard.entries.into_iter().map(|(_, c)| c).collect();
            tasks.push(NodeTask {
                node_id: shard.node_id,
                slot_ids: shard.slot_ids,
                peers: shard.peer_guests,
                my_slots,
                my_ciphers,
            });
        }

        let mut builders: Vec<BottomBuilder> = tasks
            .iter()
            .map(|t| BottomBuilder::new((0..t.my_slots.len() as u32).collect()))
            .collect();

        // Grow one layer at a time so all split decisions for a layer ride
        // in a single query/reply exchange.
        for layer in 1..self.conf.e_guest {
            match self.conf.mode {
                GuestSplitMode::Assisted => {
                    let mut queries = Vec::new();
                    let mut owners: Vec<(usize, usize, Vec<SplitCondition>)> = Vec::new();
                    for (ti, task) in tasks.iter().enumerate() {
                        for ni in builders[ti].frontier_at(layer) {
                            let members = builders[ti].nodes[ni].members.clone();
                            if members.is_empty() {
                                builders[ti].close(ni);
                                continue;
                            }
                            let (candidates, descriptors) =
                                self.encrypted_candidates(&enc, task, &members)?;
                            if descriptors.is_empty() {
                                builders[ti].close(ni);
                                continue;
                            }
                            let parent_sum = self.cipher_sum(&enc, task, &members)?;
                            queries.push(NodeSplitQuery {
                                query_id: queries.len() as u32,
                                parent_sum,
                                parent_count: members.len() as u32,
                                candidates,
                            });
                            owners.push((ti, ni, descriptors));
                        }
                    }
                    self.compute += seg.elapsed().as_secs_f64();
                    transport.send(&PartyMessage::SplitQuery {
                        tree_round: round,
                        layer: layer as u16,
                        queries,
                    })?;
                    let (reply, _) = transport.recv()?;
                    seg = Instant::now();
                    let chosen = match reply {
                        PartyMessage::SplitReply { tree_round, layer: l, chosen }
                            if tree_round == round && l == layer as u16 =>
                        {
                            chosen
                        }
                        other => {
                            return Err(FedError::Protocol(format!(
                                "expected split reply, got {}",
                                other.kind_name()
                            )))
                        }
                    };
                    if chosen.len() != owners.len() {
                        return Err(FedError::Protocol("split reply count mismatch".into()));
                    }
                    for ((ti, ni, descriptors), choice) in owners.into_iter().zip(chosen) {
                        match choice {
                            None => builders[ti].close(ni),
                            Some(c) => {
                                let cond = *descriptors.get(c as usize).ok_or_else(|| {
                                    FedError::Protocol("chosen candidate out of range".into())
                                })?;
                                self.split_node(&tasks[ti], &mut builders[ti], ni, cond);
                            }
                        }
                    }
                    continue;
                }
                GuestSplitMode::Surrogate => {
                    for (ti, task) in tasks.iter().enumerate() {
                        for ni in builders[ti].frontier_at(layer) {
                            let members = builders[ti].nodes[ni].members.clone();
                            match self.balance_split(task, &members) {
                                None => builders[ti].close(ni),
                                Some(cond) => self.split_node(task, &mut builders[ti], ni, cond),
                            }
                        }
                    }
                }
            }
        }

        // Leaf values and the masked per-slot contribution vectors.
        let codec = self.codec.clone().unwrap();
        let mut contributions = Vec::with_capacity(tasks.len());
        for (ti, task) in tasks.iter().enumerate() {
            let (tree, leaf_arena) = builders[ti].to_tree();
            let grad_scale = self.conf.frac_bits as i16;
            // The reciprocal factor is encoded at double precision so its
            // quantization does not get amplified by large gradient sums.
            let value_scale = grad_scale * 3;

            // Position of each of my slots in the finished tree's leaf order.
            let mut slot_position: BTreeMap<u32, u16> = BTreeMap::new();
            let mut leaf_cipher: Vec<Ciphertext> = Vec::with_capacity(leaf_arena.len());
            for (pos, arena_idx) in leaf_arena.iter().enumerate() {
                let members = &builders[ti].nodes[*arena_idx].members;
                let cipher = if members.is_empty() {
                    enc.zero(value_scale, &mut self.rng)?
                } else {
                    let sum = self.cipher_sum_members(&enc, task, members)?;
                    let inv = codec.encode_at(
                        -1.0 / (members.len() as f64 + self.conf.lambda),
                        2 * self.conf.frac_bits,
                    )?;
                    enc.mul_plain(&sum, &inv, 2 * grad_scale)
                };
                for m in members {
                    slot_position.insert(task.my_slots[*m as usize], pos as u16);
                }
                leaf_cipher.push(cipher);
            }

            let mut ciphertexts = Vec::with_capacity(task.slot_ids.len());
            let mut positions = Vec::with_capacity(task.slot_ids.len());
            let peer_keys: Vec<(usize, SharedKey)> = task
                .peers
                .iter()
                .map(|p| {
                    self.pair_keys
                        .get(p)
                        .map(|k| (*p as usize, *k))
                        .ok_or_else(|| FedError::Protocol(format!("no pair key for guest {p}")))
                })
                .collect::<Result<Vec<_>>>()?;
            for slot in 0..task.slot_ids.len() as u32 {
                let base = match slot_position.get(&slot) {
                    Some(pos) => {
                        positions.push(*pos);
                        leaf_cipher[*pos as usize].clone()
                    }
                    None => {
                        positions.push(NO_POSITION);
                        enc.zero(value_scale, &mut self.rng)?
                    }
                };
                let ctx = MaskCtx { round, node: task.node_id as u64, slot: slot as u64 };
                let masked = apply_masks(&base, &enc, self.conf.index as usize, &peer_keys, ctx)?;
                ciphertexts.push(masked);
            }
            contributions.push(NodeContribution { node_id: task.node_id, ciphertexts, positions });
            self.trees.push((round, task.node_id, tree));
        }
        self.compute += seg.elapsed().as_secs_f64();
        transport.send(&PartyMessage::LeafContribution { tree_round: round, nodes: contributions })?;
        Ok(())
    }

    fn value_of(&self, task: &NodeTask, member: u32, fid: u32) -> f64 {
        let slot = task.my_slots[member as usize];
        let id = task.slot_ids[slot as usize];
        self.data.value(id, fid)
    }

    fn split_node(&self, task: &NodeTask, builder: &mut BottomBuilder, ni: usize, cond: SplitCondition) {
        let members = builder.nodes[ni].members.clone();
        let mut left = Vec::new();
        let mut right = Vec::new();
        for m in members {
            if cond.goes_left(self.value_of(task, m, cond.feature)) {
                left.push(m);
            } else {
                right.push(m);
            }
        }
        builder.apply_split(ni, cond, left, right);
    }

    /// Per-candidate (encrypted left gradient sum, left count) in
    /// deterministic candidate order, plus the candidate descriptors.
    fn encrypted_candidates(
        &mut self,
        enc: &EncKey,
        task: &NodeTask,
        members: &[u32],
    ) -> Result<(Vec<(Ciphertext, u32)>, Vec<SplitCondition>)> {
        let grad_scale = self.conf.frac_bits as i16;
        let mut out = Vec::new();
        let mut descriptors = Vec::new();
        for fid in self.cuts.feature_ids().collect::<Vec<_>>() {
            let thresholds = self.cuts.thresholds(fid).to_vec();
            if thresholds.is_empty() {
                continue;
            }
            // Bucket ciphertext sums, then prefix-accumulate per cut.
            let n_buckets = thresholds.len() + 1;
            let mut bucket_sum: Vec<Option<Ciphertext>> = vec![None; n_buckets];
            let mut bucket_cnt = vec![0u32; n_buckets];
            for m in members {
                let v = self.value_of(task, *m, fid);
                let b = thresholds.partition_point(|t| *t <= v);
                let c = &task.my_ciphers[*m as usize];
                bucket_sum[b] = Some(match bucket_sum[b].take() {
                    None => c.clone(),
                    Some(prev) => enc.add(&prev, c)?,
                });
                bucket_cnt[b] += 1;
            }
            let mut acc: Option<Ciphertext> = None;
            let mut acc_cnt = 0u32;
            for (k, t) in thresholds.iter().enumerate() {
                if let Some(b) = &bucket_sum[k] {
                    acc = Some(match acc.take() {
                        None => b.clone(),
                        Some(prev) => enc.add(&prev, b)?,
                    });
                }
                acc_cnt += bucket_cnt[k];
                let cipher = match &acc {
                    Some(c) => c.clone(),
                    None => enc.zero(grad_scale, &mut self.rng)?,
                };
                out.push((cipher, acc_cnt));
                descriptors.push(SplitCondition::new(fid, *t));
            }
        }
        Ok((out, descriptors))
    }

    fn cipher_sum(&mut self, enc: &EncKey, task: &NodeTask, members: &[u32]) -> Result<Ciphertext> {
        self.cipher_sum_members(enc, task, members)
    }

    fn cipher_sum_members(
        &mut self,
        enc: &EncKey,
        task: &NodeTask,
        members: &[u32],
    ) -> Result<Ciphertext> {
        let grad_scale = self.conf.frac_bits as i16;
        let mut acc: Option<Ciphertext> = None;
        for m in members {
            let c = &task.my_ciphers[*m as usize];
            acc = Some(match acc.take() {
                None => c.clone(),
                Some(prev) => enc.add(&prev, c)?,
            });
        }
        match acc {
            Some(c) => Ok(c),
            None => Ok(enc.zero(grad_scale, &mut self.rng)?),
        }
    }

    /// Surrogate criterion: maximize |left| * |right| over local candidates,
    /// ties toward the lowest feature id then threshold; `None` when every
    /// candidate is fully unbalanced.
    fn balance_split(&self, task: &NodeTask, members: &[u32]) -> Option<SplitCondition> {
        let mut best: Option<(u64, SplitCondition)> = None;
        for fid in self.cuts.feature_ids() {
            for t in self.cuts.thresholds(fid) {
                let cond = SplitCondition::new(fid, *t);
                let left = members
                    .iter()
                    .filter(|m| cond.goes_left(self.value_of(task, **m, fid)))
                    .count() as u64;
                let right = members.len() as u64 - left;
                let score = left * right;
                if score > 0 && best.as_ref().map_or(true, |(s, _)| score > *s) {
                    best = Some((score, cond));
                }
            }
        }
        best.map(|(_, c)| c)
    }
}

/// Entry point for a guest thread or process.
pub fn run_guest<T: Transport>(conf: GuestConf, data: &Dataset, transport: &mut T) -> Result<()> {
    GuestSession::new(conf, data)?.run(transport)
}
