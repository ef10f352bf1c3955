//! Collaborative inference: the host routes each instance through its
//! subtree, ships (instance, last-layer node) pairs to the guests holding
//! it, and averages the leaf values behind the returned positions. Exactly
//! two communication phases per batch.

use std::collections::BTreeMap;
use std::thread;

use fedgbdt_core::dataset::{Dataset, InstanceId};
use fedgbdt_core::train::{sigmoid, LossKind};
use fedgbdt_core::tree::Tree;

use crate::error::{FedError, Result};
use crate::ledger::{CommLedger, Direction, Stage};
use crate::model::DistributedModel;
use crate::msg::{PartyMessage, NO_POSITION};
use crate::transport::{ChannelTransport, Transport};

#[derive(Debug)]
pub struct PredictOutcome {
    /// Raw scores aligned with the requested instance ids.
    pub scores: Vec<f64>,
    pub ledger: CommLedger,
}

impl PredictOutcome {
    pub fn probabilities(&self, loss: LossKind) -> Vec<f64> {
        match loss {
            LossKind::Logistic => self.scores.iter().map(|s| sigmoid(*s)).collect(),
            LossKind::SquaredError => self.scores.clone(),
        }
    }
}

/// Guest side of inference: answer route batches with bottom-leaf
/// positions until shutdown.
pub fn run_guest_inference<T: Transport>(
    trees: &BTreeMap<(u64, u32), Tree>,
    view: &Dataset,
    transport: &mut T,
) -> Result<()> {
    transport.send(&PartyMessage::LinkAnnounce {
        instance_ids: view.instance_ids().to_vec(),
    })?;
    loop {
        let (msg, _) = transport.recv()?;
        match msg {
            PartyMessage::InferenceRoute { routes } => {
                let mut leaves = Vec::with_capacity(routes.len());
                for (round, items) in routes {
                    let mut out = Vec::with_capacity(items.len());
                    for (id, node) in items {
                        let pos = match trees.get(&(round, node)) {
                            None => NO_POSITION,
                            Some(tree) => match tree.route(view, id) {
                                Err(_) => NO_POSITION,
                                Ok(leaf_id) => tree
                                    .leaves()
                                    .iter()
                                    .position(|(l, _)| *l == leaf_id)
                                    .map(|p| p as u16)
                                    .unwrap_or(NO_POSITION),
                            },
                        };
                        out.push((id, pos));
                    }
                    leaves.push((round, out));
                }
                transport.send(&PartyMessage::InferenceLeaf { leaves })?;
            }
            PartyMessage::Shutdown => return Ok(()),
            other => {
                return Err(FedError::Protocol(format!(
                    "inference guest got unexpected {}",
                    other.kind_name()
                )))
            }
        }
    }
}

/// Host side plus orchestration over in-process transports.
pub fn hybridtree_predict(
    model: &DistributedModel,
    host_view: &Dataset,
    guest_views: &[(u32, Dataset)],
    ids: &[InstanceId],
) -> Result<PredictOutcome> {
    let mut host_ends: Vec<(u32, ChannelTransport)> = Vec::new();
    let mut guest_ends: Vec<(u32, ChannelTransport)> = Vec::new();
    for (index, _) in guest_views {
        let (h, g) = ChannelTransport::pair();
        host_ends.push((*index, h));
        guest_ends.push((*index, g));
    }

    thread::scope(|scope| {
        let mut handles = Vec::new();
        for ((index, mut transport), (_, view)) in guest_ends.into_iter().zip(guest_views.iter()) {
            let trees = model.guest_trees.get(&index).cloned().unwrap_or_default();
            handles.push(scope.spawn(move || {
                run_guest_inference(&trees, view, &mut transport)
            }));
        }

        let result = host_predict(model, host_view, ids, &mut host_ends);

        for handle in handles {
            handle
                .join()
                .map_err(|_| FedError::Protocol("guest thread panicked".into()))??;
        }
        result
    })
}

fn host_predict(
    model: &DistributedModel,
    host_view: &Dataset,
    ids: &[InstanceId],
    links: &mut [(u32, ChannelTransport)],
) -> Result<PredictOutcome> {
    let mut ledger = CommLedger::new();

    // Which test instances each guest holds.
    let mut guest_ids: Vec<Vec<InstanceId>> = Vec::with_capacity(links.len());
    for (_, transport) in links.iter_mut() {
        let (msg, bytes) = transport.recv()?;
        ledger.record(Stage::Setup, Direction::GuestToHost, msg.kind_name(), bytes);
        match msg {
            PartyMessage::LinkAnnounce { instance_ids } => guest_ids.push(instance_ids),
            other => {
                return Err(FedError::Protocol(format!(
                    "expected link announce, got {}",
                    other.kind_name()
                )))
            }
        }
    }

    // Route every instance through every host subtree once.
    let mut host_nodes: Vec<Vec<u32>> = Vec::with_capacity(model.host_trees.len());
    for tree in &model.host_trees {
        let mut nodes = Vec::with_capacity(ids.len());
        for id in ids {
            nodes.push(tree.route(host_view, *id)?);
        }
        host_nodes.push(nodes);
    }

    // Phase 1: one route message per guest covering all trees.
    for (gi, (_, transport)) in links.iter_mut().enumerate() {
        let held: std::collections::BTreeSet<InstanceId> =
            guest_ids[gi].iter().copied().collect();
        let routes: Vec<(u64, Vec<(InstanceId, u32)>)> = host_nodes
            .iter()
            .enumerate()
            .map(|(t, nodes)| {
                let items = ids
                    .iter()
                    .zip(nodes)
                    .filter(|(id, _)| held.contains(id))
                    .map(|(id, node)| (*id, *node))
                    .collect();
                (t as u64, items)
            })
            .collect();
        let msg = PartyMessage::InferenceRoute { routes };
        let bytes = transport.send(&msg)?;
        ledger.record(Stage::Inference(0), Direction::HostToGuest, msg.kind_name(), bytes);
    }

    // Phase 2: leaf positions back; average values across holding guests.
    let mut sums: Vec<f64> = vec![0.0; ids.len()];
    let mut counts: Vec<Vec<u32>> = vec![vec![0; ids.len()]; model.host_trees.len()];
    let mut values: Vec<Vec<f64>> = vec![vec![0.0; ids.len()]; model.host_trees.len()];
    let id_pos: BTreeMap<InstanceId, usize> =
        ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();

    for gi in 0..links.len() {
        let guest_index = links[gi].0;
        let (msg, bytes) = links[gi].1.recv()?;
        ledger.record(Stage::Inference(0), Direction::GuestToHost, msg.kind_name(), bytes);
        match msg {
            PartyMessage::InferenceLeaf { leaves } => {
                for (round, items) in leaves {
                    for (id, pos) in items {
                        if pos == NO_POSITION {
                            continue;
                        }
                        let i = *id_pos
                            .get(&id)
                            .ok_or_else(|| FedError::Protocol("unknown id in reply".into()))?;
                        let node = host_nodes[round as usize][i];
                        if let Some(v) =
                            model.guest_leaf_value(guest_index, round, node, pos)
                        {
                            values[round as usize][i] += v;
                            counts[round as usize][i] += 1;
                        }
                    }
                }
            }
            other => {
                return Err(FedError::Protocol(format!(
                    "expected inference leaves, got {}",
                    other.kind_name()
                )))
            }
        }
    }

    for t in 0..model.host_trees.len() {
        for i in 0..ids.len() {
            let v = if counts[t][i] > 0 {
                values[t][i] / counts[t][i] as f64
            } else {
                let node = host_nodes[t][i];
                *model
                    .fallbacks
                    .get(&(t as u64, node))
                    .ok_or_else(|| FedError::Protocol(format!("no fallback for {t}:{node}")))?
            };
            sums[i] += v;
        }
    }

    for (_, transport) in links.iter_mut() {
        let bytes = transport.send(&PartyMessage::Shutdown)?;
        ledger.record(Stage::Export, Direction::HostToGuest, "shutdown", bytes);
    }

    let lr = model.params.learning_rate;
    Ok(PredictOutcome {
        scores: sums.into_iter().map(|s| lr * s).collect(),
        ledger,
    })
}
