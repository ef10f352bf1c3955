//! Reference training modes: centralized upper bound, host-only lower
//! bound, round-robin tree-level federation (labels granted to every
//! party), and multi-host bagging.

use fedgbdt_core::binning::compute_split_candidates;
use fedgbdt_core::dataset::{Dataset, InstanceId};
use fedgbdt_core::train::{
    compute_gradients, sigmoid, train_ensemble, train_tree, Ensemble, GradientMap, LossKind,
    TrainParams,
};
use fedgbdt_core::tree::TreeNode;

use crate::error::{FedError, Result};
use crate::host::TrainOutcome;
use crate::model::{DistributedModel, FedParams};
use crate::predict::hybridtree_predict;
use crate::protocol::hybridtree_train;

/// The host alone on its local features and labels.
pub fn solo_train(host: &Dataset, params: &TrainParams, loss: LossKind) -> Result<Ensemble> {
    Ok(train_ensemble(host, params, loss)?)
}

/// Centralized training on merged global data, the privacy-free upper
/// bound.
pub fn allin_train(merged: &Dataset, params: &TrainParams, loss: LossKind) -> Result<Ensemble> {
    Ok(train_ensemble(merged, params, loss)?)
}

/// Tree-level federation: parties take turns training whole trees against
/// the shared residuals of their own instances. Every party is granted
/// label access, which breaks the privacy model; this is a baseline only.
pub fn tfl_train(
    host: &Dataset,
    guests: &[Dataset],
    params: &TrainParams,
    loss: LossKind,
) -> Result<Ensemble> {
    params.validate()?;
    let host_labels = host
        .labels()
        .ok_or_else(|| FedError::Protocol("tfl needs a labeled host".into()))?;

    // Party data: the host as-is, each guest with labels granted.
    let mut parties: Vec<Dataset> = vec![host.clone()];
    for guest in guests {
        let labels: Vec<f64> = guest
            .instance_ids()
            .iter()
            .map(|id| {
                host.row_of(*id)
                    .map(|row| host_labels[row])
                    .ok_or_else(|| FedError::Protocol(format!("guest instance {id} unknown to host")))
            })
            .collect::<Result<Vec<f64>>>()?;
        parties.push(guest.with_labels(labels)?);
    }

    let cuts: Vec<_> = parties
        .iter()
        .map(|p| compute_split_candidates(p, &p.feature_ids().to_vec(), params.max_bins))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    // Global prediction state by instance id.
    let mut y_p: std::collections::BTreeMap<InstanceId, f64> =
        host.instance_ids().iter().map(|id| (*id, 0.0)).collect();

    let mut ensemble = Ensemble::empty(loss, params.learning_rate);
    for t in 0..params.n_trees {
        let p = t % parties.len();
        let party = &parties[p];
        let ids: Vec<InstanceId> = party.instance_ids().to_vec();
        let labels = party.labels().unwrap();
        let preds: Vec<f64> = ids.iter().map(|id| y_p[id]).collect();
        let grads = compute_gradients(labels, &preds, loss)?;
        let gmap = GradientMap::new(ids.iter().copied().zip(grads).collect());
        let trained = train_tree(&ids, &gmap, params.max_depth, &cuts[p], party, params.lambda)?;
        for (node_id, members) in &trained.last_layer {
            let value = match trained.tree.node(*node_id) {
                TreeNode::Leaf { value } => *value,
                _ => unreachable!(),
            };
            for id in members {
                *y_p.get_mut(id).unwrap() += params.learning_rate * value;
            }
        }
        ensemble.trees.push(trained.tree);
    }
    Ok(ensemble)
}

/// One federated model per host over the guests it links with.
pub fn multi_host_train(
    hosts: &[Dataset],
    guests: &[Dataset],
    params: &FedParams,
) -> Result<Vec<TrainOutcome>> {
    if hosts.is_empty() {
        return Err(FedError::Protocol("need at least one host".into()));
    }
    hosts
        .iter()
        .map(|host| hybridtree_train(host, guests, params))
        .collect()
}

/// Bagging across per-host models: majority vote on thresholded labels for
/// classification (ties toward class 0), mean of raw scores for
/// regression.
pub fn bagging_predict(
    models: &[&DistributedModel],
    host_view: &Dataset,
    guest_views: &[(u32, Dataset)],
    ids: &[InstanceId],
    classification: bool,
) -> Result<Vec<f64>> {
    if models.is_empty() {
        return Err(FedError::Protocol("need at least one model".into()));
    }
    let mut all_scores: Vec<Vec<f64>> = Vec::with_capacity(models.len());
    for model in models {
        let out = hybridtree_predict(model, host_view, guest_views, ids)?;
        all_scores.push(out.scores);
    }
    let n = ids.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if classification {
            let votes = all_scores
                .iter()
                .filter(|s| sigmoid(s[i]) >= 0.5)
                .count();
            out.push(f64::from(votes * 2 > models.len()));
        } else {
            out.push(all_scores.iter().map(|s| s[i]).sum::<f64>() / models.len() as f64);
        }
    }
    Ok(out)
}
