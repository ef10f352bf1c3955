//! The host party: owns labels and the decryption key, trains the top
//! layers, ships encrypted gradients to guests, answers split queries in
//! assisted mode, aggregates masked contributions and advances the
//! prediction vector.

use std::collections::BTreeMap;
use std::time::Instant;

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use fedgbdt_core::binning::compute_split_candidates;
use fedgbdt_core::dataset::{Dataset, InstanceId};
use fedgbdt_core::train::{compute_gradients, gain_from_sums, train_tree, GradientMap};
use fedgbdt_core::tree::{Tree, TreeNode};

use fedgbdt_crypto::suite::{keygen, Ciphertext, CipherKind, DecKey, EncKey};
use fedgbdt_crypto::FixedPointCodec;

use crate::error::{FedError, Result};
use crate::ledger::{CommLedger, Direction, Stage};
use crate::model::{CipherChoice, DistributedModel, FedParams, GuestSplitMode};
use crate::msg::{NodeShard, PartyMessage, NO_POSITION};
use crate::transport::Transport;

/// Training instances land with the lowest-indexed guest that holds them,
/// so exactly one guest consumes each gradient per round.
pub fn assign_responsible_guest(holders: &[u32]) -> Option<u32> {
    holders.iter().copied().min()
}

#[derive(Debug, Clone)]
pub struct SetupSummary {
    /// Linked instance count per guest, by transport order.
    pub linked_counts: Vec<usize>,
    /// Guests excluded for having no linked instances.
    pub excluded: Vec<u32>,
    /// Pairwise DH keys implied by the roster among active guests.
    pub pair_key_count: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: DistributedModel,
    pub ledger: CommLedger,
    pub setup: SetupSummary,
    pub host_seconds: f64,
    pub guest_seconds: f64,
}

struct GuestLink<'t> {
    index: u32,
    transport: &'t mut dyn Transport,
    linked: Vec<InstanceId>,
    active: bool,
}

pub struct HostSession<'a, 't> {
    data: &'a Dataset,
    params: FedParams,
    guests: Vec<GuestLink<'t>>,
    ledger: CommLedger,
    enc: EncKey,
    dec: DecKey,
    codec: FixedPointCodec,
    rng: ChaCha20Rng,
    /// (round, host node, guest, leaf position) -> decrypted leaf value.
    value_table: BTreeMap<(u64, u32, u32, u16), f64>,
    responsibility: BTreeMap<InstanceId, u32>,
    compute: f64,
}

impl<'a, 't> HostSession<'a, 't> {
    pub fn new(
        data: &'a Dataset,
        params: FedParams,
        transports: Vec<(u32, &'t mut dyn Transport)>,
    ) -> Result<Self> {
        params.validate()?;
        if !data.has_labels() {
            return Err(FedError::Protocol("host dataset must carry labels".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
        let (kind, bits) = match params.cipher {
            CipherChoice::Paillier { bits } => (CipherKind::Paillier, bits),
            CipherChoice::Passthrough => (CipherKind::Passthrough, 0),
        };
        let (enc, dec) = keygen(kind, if bits == 0 { 64 } else { bits }, &mut rng)?;
        let codec = enc.codec(params.frac_bits);
        let guests = transports
            .into_iter()
            .map(|(index, transport)| GuestLink { index, transport, linked: Vec::new(), active: false })
            .collect();
        Ok(HostSession {
            data,
            params,
            guests,
            ledger: CommLedger::new(),
            enc,
            dec,
            codec,
            rng,
            value_table: BTreeMap::new(),
            responsibility: BTreeMap::new(),
            compute: 0.0,
        })
    }

    fn send(&mut self, gi: usize, stage: Stage, msg: &PartyMessage) -> Result<()> {
        let kind = msg.kind_name();
        let bytes = self.guests[gi].transport.send(msg)?;
        self.ledger.record(stage, Direction::HostToGuest, kind, bytes);
        Ok(())
    }

    fn recv(&mut self, gi: usize, stage: Stage) -> Result<PartyMessage> {
        let (msg, bytes) = self.guests[gi].transport.recv()?;
        self.ledger.record(stage, Direction::GuestToHost, msg.kind_name(), bytes);
        Ok(msg)
    }

    /// Key distribution, DH roster relay and instance linkage.
    fn setup(&mut self) -> Result<SetupSummary> {
        let announce = PartyMessage::PublicKeyAnnounce { key_bytes: self.enc.to_bytes() };
        for gi in 0..self.guests.len() {
            self.send(gi, Stage::Setup, &announce)?;
        }
        let mut publics: Vec<(u32, Vec<u8>)> = Vec::new();
        let mut linked_counts = Vec::new();
        for gi in 0..self.guests.len() {
            let dh = self.recv(gi, Stage::Setup)?;
            match dh {
                PartyMessage::DhExchange { publics: mut p } => publics.append(&mut p),
                other => {
                    return Err(FedError::Protocol(format!(
                        "expected dh exchange, got {}",
                        other.kind_name()
                    )))
                }
            }
            let link = self.recv(gi, Stage::Setup)?;
            match link {
                PartyMessage::LinkAnnounce { instance_ids } => {
                    let mut linked: Vec<InstanceId> = instance_ids
                        .into_iter()
                        .filter(|id| self.data.contains_instance(*id))
                        .collect();
                    linked.sort_unstable();
                    linked.dedup();
                    linked_counts.push(linked.len());
                    self.guests[gi].active = !linked.is_empty();
                    self.guests[gi].linked = linked;
                }
                other => {
                    return Err(FedError::Protocol(format!(
                        "expected link announce, got {}",
                        other.kind_name()
                    )))
                }
            }
        }
        // Validate announced publics against the group before relaying.
        let p = fedgbdt_crypto::dh::group_prime();
        for (_, bytes) in &publics {
            let y = BigUint::from_bytes_be(bytes);
            if y <= BigUint::from(1u8) || y >= &p - BigUint::from(1u8) {
                return Err(FedError::Protocol("degenerate DH public in roster".into()));
            }
        }
        let roster = PartyMessage::DhExchange { publics };
        for gi in 0..self.guests.len() {
            self.send(gi, Stage::Setup, &roster)?;
        }

        // Responsibility: lowest active guest index per instance.
        for gi in 0..self.guests.len() {
            if !self.guests[gi].active {
                continue;
            }
            let index = self.guests[gi].index;
            for id in self.guests[gi].linked.clone() {
                self.responsibility
                    .entry(id)
                    .and_modify(|g| *g = (*g).min(index))
                    .or_insert(index);
            }
        }

        let active = self.guests.iter().filter(|g| g.active).count();
        let excluded = self
            .guests
            .iter()
            .filter(|g| !g.active)
            .map(|g| g.index)
            .collect();
        Ok(SetupSummary {
            linked_counts,
            excluded,
            pair_key_count: active * active.saturating_sub(1) / 2,
        })
    }

    pub fn train(mut self) -> Result<TrainOutcome> {
        let setup = self.setup()?;
        let labels = self.data.labels().unwrap().to_vec();
        let n = self.data.n_instances();
        let all_ids: Vec<InstanceId> = self.data.instance_ids().to_vec();
        let host_cuts = compute_split_candidates(
            self.data,
            &self.data.feature_ids().to_vec(),
            self.params.max_bins,
        )?;

        let mut model = DistributedModel::empty(self.params);
        let mut y_p = vec![0.0f64; n];
        let grad_scale = self.params.frac_bits as i16;
        // Gradients ride at f fractional bits, reciprocals at 2f, so leaf
        // values come back at 3f.
        let value_scale = grad_scale * 3;

        for round in 0..self.params.n_trees as u64 {
            let t0 = Instant::now();
            let g_rows = compute_gradients(&labels, &y_p, self.params.loss)?;
            let gmap = GradientMap::from_dataset(self.data, &g_rows);
            let trained = train_tree(
                &all_ids,
                &gmap,
                self.params.e_host,
                &host_cuts,
                self.data,
                self.params.lambda,
            )?;

            // Host leaf values double as fallbacks for uncovered instances.
            for (node_id, _) in &trained.last_layer {
                let value = leaf_value_of(&trained.tree, *node_id);
                model.fallbacks.insert((round, *node_id), value);
            }

            // Build per-guest shards: per node, the covered slot list, the
            // mask peer set, and each responsible guest's encrypted slice.
            struct NodePlan {
                node_id: u32,
                slots: Vec<InstanceId>,
                participants: Vec<u32>,
            }
            let mut plans: Vec<NodePlan> = Vec::new();
            let mut per_guest: BTreeMap<u32, Vec<NodeShard>> = BTreeMap::new();
            for (node_id, ids) in &trained.last_layer {
                let slots: Vec<InstanceId> = ids
                    .iter()
                    .copied()
                    .filter(|id| self.responsibility.contains_key(id))
                    .collect();
                if slots.is_empty() {
                    continue;
                }
                let mut participants: Vec<u32> =
                    slots.iter().map(|id| self.responsibility[id]).collect();
                participants.sort_unstable();
                participants.dedup();
                for guest in &participants {
                    let entries: Vec<(u32, Ciphertext)> = slots
                        .iter()
                        .enumerate()
                        .filter(|(_, id)| self.responsibility[id] == *guest)
                        .map(|(slot, id)| {
                            let g = gmap.get(*id).expect("gradient for every instance");
                            let m = self.codec.encode(g)?;
                            let c = self.enc.encrypt(&m, grad_scale, &mut self.rng)?;
                            Ok((slot as u32, c))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let peers: Vec<u32> =
                        participants.iter().copied().filter(|p| p != guest).collect();
                    per_guest.entry(*guest).or_default().push(NodeShard {
                        node_id: *node_id,
                        slot_ids: slots.clone(),
                        peer_guests: peers,
                        entries,
                    });
                }
                plans.push(NodePlan { node_id: *node_id, slots, participants });
            }
            self.compute += t0.elapsed().as_secs_f64();

            // Phase 1: one shard message per active guest, possibly empty.
            for gi in 0..self.guests.len() {
                if !self.guests[gi].active {
                    continue;
                }
                let nodes = per_guest.remove(&self.guests[gi].index).unwrap_or_default();
                let msg = PartyMessage::GradientShard { tree_round: round, nodes };
                self.send(gi, Stage::Round(round), &msg)?;
            }

            // Assisted: one query/reply exchange per bottom split layer.
            if self.params.mode == GuestSplitMode::Assisted {
                for layer in 1..self.params.e_guest as u16 {
                    let mut pending: Vec<(usize, PartyMessage)> = Vec::new();
                    for gi in 0..self.guests.len() {
                        if !self.guests[gi].active {
                            continue;
                        }
                        let msg = self.recv(gi, Stage::Round(round))?;
                        let reply = self.answer_split_query(round, layer, msg)?;
                        pending.push((gi, reply));
                    }
                    for (gi, reply) in pending {
                        self.send(gi, Stage::Round(round), &reply)?;
                    }
                }
            }

            // Final phase: masked leaf contributions, aggregated per slot.
            let mut per_node: BTreeMap<u32, Vec<(u32, Vec<Ciphertext>, Vec<u16>)>> = BTreeMap::new();
            for gi in 0..self.guests.len() {
                if !self.guests[gi].active {
                    continue;
                }
                let index = self.guests[gi].index;
                let msg = self.recv(gi, Stage::Round(round))?;
                match msg {
                    PartyMessage::LeafContribution { tree_round, nodes } if tree_round == round => {
                        for node in nodes {
                            per_node.entry(node.node_id).or_default().push((
                                index,
                                node.ciphertexts,
                                node.positions,
                            ));
                        }
                    }
                    other => {
                        return Err(FedError::Protocol(format!(
                            "expected leaf contribution, got {}",
                            other.kind_name()
                        )))
                    }
                }
            }

            let t1 = Instant::now();
            let mut covered: BTreeMap<InstanceId, f64> = BTreeMap::new();
            for plan in &plans {
                let parts = per_node.remove(&plan.node_id).ok_or_else(|| {
                    FedError::Protocol(format!("no contributions for node {}", plan.node_id))
                })?;
                if parts.len() != plan.participants.len() {
                    return Err(FedError::Protocol(format!(
                        "node {}: {} contributions for {} participants",
                        plan.node_id,
                        parts.len(),
                        plan.participants.len()
                    )));
                }
                for slot in 0..plan.slots.len() {
                    let mut acc: Option<Ciphertext> = None;
                    for (_, ciphers, _) in &parts {
                        let c = ciphers.get(slot).ok_or_else(|| {
                            FedError::Protocol("contribution vector too short".into())
                        })?;
                        acc = Some(match acc.take() {
                            None => c.clone(),
                            Some(prev) => self.enc.add(&prev, c)?,
                        });
                    }
                    let (ring, scale) = self.dec.decrypt(&acc.unwrap());
                    if scale != value_scale {
                        return Err(FedError::Protocol(format!(
                            "leaf value at scale {scale}, expected {value_scale}"
                        )));
                    }
                    let value = self.codec.decode_at(&ring, value_scale as u32)?;
                    if !value.is_finite() || value.abs() > 1e12 {
                        return Err(FedError::HeOverflow {
                            round,
                            node: plan.node_id,
                            msg: format!("decoded leaf value {value}"),
                        });
                    }
                    let id = plan.slots[slot];
                    covered.insert(id, value);
                    // Remember which guest leaf produced this value.
                    let guest = self.responsibility[&id];
                    if let Some((_, _, positions)) =
                        parts.iter().find(|(g, _, _)| *g == guest)
                    {
                        let pos = positions[slot];
                        if pos != NO_POSITION {
                            self.value_table.insert((round, plan.node_id, guest, pos), value);
                        }
                    }
                }
            }

            // Advance predictions: guest value when covered, host fallback
            // otherwise.
            for (node_id, ids) in &trained.last_layer {
                let fallback = model.fallbacks[&(round, *node_id)];
                for id in ids {
                    let row = self.data.row_of(*id).unwrap();
                    let v = covered.get(id).copied().unwrap_or(fallback);
                    y_p[row] += self.params.learning_rate * v;
                }
            }
            model.host_trees.push(trained.tree);
            self.compute += t1.elapsed().as_secs_f64();
        }

        // Shut down guests and collect their bottom-tree structures.
        let mut guest_seconds = 0.0;
        for gi in 0..self.guests.len() {
            self.send(gi, Stage::Export, &PartyMessage::Shutdown)?;
        }
        for gi in 0..self.guests.len() {
            let index = self.guests[gi].index;
            let msg = self.recv(gi, Stage::Export)?;
            match msg {
                PartyMessage::ModelExport { trees, compute_seconds } => {
                    guest_seconds += compute_seconds;
                    for (round, node, json) in trees {
                        let mut tree: Tree = serde_json::from_str(&json)
                            .map_err(|e| FedError::Protocol(e.to_string()))?;
                        for (pos, (leaf_id, _)) in tree.leaves().into_iter().enumerate() {
                            let v = self
                                .value_table
                                .get(&(round, node, index, pos as u16))
                                .copied()
                                .unwrap_or(0.0);
                            tree.set_leaf_value(leaf_id, v);
                        }
                        model.guest_trees.entry(index).or_default().insert((round, node), tree);
                    }
                }
                other => {
                    return Err(FedError::Protocol(format!(
                        "expected model export, got {}",
                        other.kind_name()
                    )))
                }
            }
        }

        Ok(TrainOutcome {
            model,
            ledger: self.ledger,
            setup,
            host_seconds: self.compute,
            guest_seconds,
        })
    }

    /// Decrypt per-candidate aggregates, evaluate the gain formula and
    /// return the strict argmax per query (None when no candidate has
    /// positive gain), mirroring the centralized trainer's tie-breaking.
    fn answer_split_query(
        &mut self,
        round: u64,
        layer: u16,
        msg: PartyMessage,
    ) -> Result<PartyMessage> {
        let queries = match msg {
            PartyMessage::SplitQuery { tree_round, layer: l, queries }
                if tree_round == round && l == layer =>
            {
                queries
            }
            other => {
                return Err(FedError::Protocol(format!(
                    "expected split query for round {round} layer {layer}, got {}",
                    other.kind_name()
                )))
            }
        };
        let t0 = Instant::now();
        let grad_bits = self.params.frac_bits as u32;
        let mut chosen = Vec::with_capacity(queries.len());
        for q in &queries {
            let (ring, _) = self.dec.decrypt(&q.parent_sum);
            let parent_sum = self.codec.decode_at(&ring, grad_bits)?;
            let parent_count = q.parent_count as usize;
            let mut best: Option<(f64, u16)> = None;
            for (i, (cipher, left_count)) in q.candidates.iter().enumerate() {
                let (ring, _) = self.dec.decrypt(cipher);
                let left_sum = self.codec.decode_at(&ring, grad_bits)?;
                let left_count = *left_count as usize;
                let gain = gain_from_sums(
                    left_sum,
                    left_count,
                    parent_sum - left_sum,
                    parent_count - left_count,
                    self.params.lambda,
                );
                let better = match &best {
                    None => gain > 0.0,
                    Some((g, _)) => gain > *g,
                };
                if better {
                    best = Some((gain, i as u16));
                }
            }
            chosen.push(best.map(|(_, i)| i));
        }
        self.compute += t0.elapsed().as_secs_f64();
        Ok(PartyMessage::SplitReply { tree_round: round, layer, chosen })
    }
}

fn leaf_value_of(tree: &Tree, node_id: u32) -> f64 {
    match tree.node(node_id) {
        TreeNode::Leaf { value } => *value,
        _ => unreachable!("last-layer entries are leaves"),
    }
}
