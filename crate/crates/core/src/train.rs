//! Centralized GBDT training: first-order gradients, split gain, leaf
//! values, single-tree training and the boosting loop.
//!
//! Instance sets are always processed in ascending-id order so repeated runs
//! produce bit-identical models.

use serde::{Deserialize, Serialize};

use crate::binning::BinCuts;
use crate::dataset::{Dataset, FeatureId, FeatureView, InstanceId};
use crate::error::{CoreError, Result};
use crate::tree::{SplitCondition, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Logistic,
    SquaredError,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_bins: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            n_trees: 50,
            max_depth: 7,
            lambda: 1.0,
            learning_rate: 0.1,
            max_bins: 32,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        // n_trees == 0 is legal: the ensemble predicts the base score.
        if self.max_depth == 0 {
            return Err(CoreError::Validation("max_depth must be at least 1".into()));
        }
        if self.lambda < 0.0 {
            return Err(CoreError::Validation("lambda must be non-negative".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(CoreError::Validation("learning_rate must be in (0, 1]".into()));
        }
        if self.max_bins == 0 {
            return Err(CoreError::Validation("max_bins must be at least 1".into()));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// First-order gradients of the loss at the current prediction.
/// Squared error: g = y_p - y. Logistic: g = sigmoid(y_p) - y.
pub fn compute_gradients(labels: &[f64], predictions: &[f64], loss: LossKind) -> Result<Vec<f64>> {
    if labels.len() != predictions.len() {
        return Err(CoreError::Validation(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    match loss {
        LossKind::SquaredError => Ok(labels
            .iter()
            .zip(predictions)
            .map(|(y, yp)| yp - y)
            .collect()),
        LossKind::Logistic => {
            for y in labels {
                if *y != 0.0 && *y != 1.0 {
                    return Err(CoreError::Validation(format!(
                        "logistic loss requires labels in {{0,1}}, found {y}"
                    )));
                }
            }
            Ok(labels
                .iter()
                .zip(predictions)
                .map(|(y, yp)| sigmoid(*yp) - y)
                .collect())
        }
    }
}

pub fn training_loss(labels: &[f64], predictions: &[f64], loss: LossKind) -> f64 {
    match loss {
        LossKind::SquaredError => labels
            .iter()
            .zip(predictions)
            .map(|(y, yp)| 0.5 * (yp - y) * (yp - y))
            .sum(),
        LossKind::Logistic => labels
            .iter()
            .zip(predictions)
            .map(|(y, yp)| {
                let p = sigmoid(*yp);
                -(y * p.max(1e-15).ln() + (1.0 - y) * (1.0 - p).max(1e-15).ln())
            })
            .sum(),
    }
}

/// Gradients addressable by instance id, kept sorted for deterministic sums.
#[derive(Debug, Clone)]
pub struct GradientMap {
    ids: Vec<InstanceId>,
    values: Vec<f64>,
}

impl GradientMap {
    pub fn new(mut pairs: Vec<(InstanceId, f64)>) -> Self {
        pairs.sort_unstable_by_key(|(id, _)| *id);
        GradientMap {
            ids: pairs.iter().map(|(id, _)| *id).collect(),
            values: pairs.iter().map(|(_, g)| *g).collect(),
        }
    }

    pub fn from_dataset(dataset: &Dataset, by_row: &[f64]) -> Self {
        Self::new(
            dataset
                .instance_ids()
                .iter()
                .copied()
                .zip(by_row.iter().copied())
                .collect(),
        )
    }

    pub fn get(&self, id: InstanceId) -> Option<f64> {
        self.ids.binary_search(&id).ok().map(|i| self.values[i])
    }

    pub fn ids(&self) -> &[InstanceId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn sum_over(&self, ids: &[InstanceId]) -> f64 {
        ids.iter().map(|id| self.get(*id).unwrap_or(0.0)).sum()
    }
}

/// Gain of a split into disjoint left/right id sets:
/// `(sum_L)^2 / (|L| + lambda) + (sum_R)^2 / (|R| + lambda)`.
/// An empty side contributes zero.
pub fn split_gain(
    gradients: &GradientMap,
    left: &[InstanceId],
    right: &[InstanceId],
    lambda: f64,
) -> f64 {
    gain_from_sums(
        gradients.sum_over(left),
        left.len(),
        gradients.sum_over(right),
        right.len(),
        lambda,
    )
}

/// Gain from pre-aggregated per-side sums and counts.
#[inline]
pub fn gain_from_sums(sum_l: f64, n_l: usize, sum_r: f64, n_r: usize, lambda: f64) -> f64 {
    let l = sum_l * sum_l / (n_l as f64 + lambda);
    let r = sum_r * sum_r / (n_r as f64 + lambda);
    l + r
}

/// Optimal leaf value `-(sum g) / (|I| + lambda)`.
pub fn leaf_value(gradients: &GradientMap, ids: &[InstanceId], lambda: f64) -> Result<f64> {
    if ids.is_empty() {
        return Err(CoreError::Validation("leaf over empty instance set".into()));
    }
    Ok(leaf_from_sum(gradients.sum_over(ids), ids.len(), lambda))
}

#[inline]
pub fn leaf_from_sum(sum: f64, n: usize, lambda: f64) -> f64 {
    -sum / (n as f64 + lambda)
}

/// A trained tree plus the instance partition of its deepest layer, which
/// federation hands off to guests.
#[derive(Debug, Clone)]
pub struct TrainedTree {
    pub tree: Tree,
    /// `(leaf node id, instances reaching it)` in pre-order.
    pub last_layer: Vec<(u32, Vec<InstanceId>)>,
}

struct NodeData {
    /// Indices into the cached row arrays.
    rows: Vec<u32>,
}

struct TrainContext<'a> {
    /// Per candidate feature: (feature id, thresholds, values per row).
    features: Vec<(FeatureId, &'a [f64], Vec<f64>)>,
    ids: Vec<InstanceId>,
    grads: Vec<f64>,
    lambda: f64,
}

/// Recursive single-tree training. At depth 1 the node becomes a leaf with
/// the optimal value; otherwise the candidate (feature, threshold) with the
/// highest gain splits the node, ties resolved toward the lowest feature id
/// then the lowest threshold. A node with no strictly positive gain becomes
/// a leaf.
pub fn train_tree<V: FeatureView>(
    instance_ids: &[InstanceId],
    gradients: &GradientMap,
    depth: usize,
    candidates: &BinCuts,
    features: &V,
    lambda: f64,
) -> Result<TrainedTree> {
    if depth == 0 {
        return Err(CoreError::Validation("depth must be at least 1".into()));
    }
    let mut ids: Vec<InstanceId> = instance_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();

    let mut grads = Vec::with_capacity(ids.len());
    for id in &ids {
        let g = gradients.get(*id).ok_or_else(|| {
            CoreError::Validation(format!("no gradient for instance {id}"))
        })?;
        grads.push(g);
    }

    let mut cached = Vec::new();
    for fid in candidates.feature_ids() {
        let ts = candidates.thresholds(fid);
        if ts.is_empty() {
            continue;
        }
        if !features.feature_ids().contains(&fid) {
            return Err(CoreError::Validation(format!(
                "candidate feature {fid} not supplied by the feature view"
            )));
        }
        let col: Vec<f64> = ids.iter().map(|id| features.value(*id, fid)).collect();
        cached.push((fid, ts, col));
    }

    let ctx = TrainContext { features: cached, ids, grads, lambda };
    let root_rows: Vec<u32> = (0..ctx.ids.len() as u32).collect();
    let mut leaves: Vec<Vec<u32>> = Vec::new();
    let tree = grow(&ctx, NodeData { rows: root_rows }, depth, &mut leaves);

    let leaf_ids = tree.leaves();
    debug_assert_eq!(leaf_ids.len(), leaves.len());
    let last_layer = leaf_ids
        .iter()
        .zip(leaves)
        .map(|((node_id, _), rows)| {
            (*node_id, rows.iter().map(|r| ctx.ids[*r as usize]).collect())
        })
        .collect();
    Ok(TrainedTree { tree, last_layer })
}

fn grow(ctx: &TrainContext, node: NodeData, depth: usize, leaves: &mut Vec<Vec<u32>>) -> Tree {
    let make_leaf = |rows: Vec<u32>, leaves: &mut Vec<Vec<u32>>| -> Tree {
        let sum: f64 = rows.iter().map(|r| ctx.grads[*r as usize]).sum();
        let value = if rows.is_empty() {
            0.0
        } else {
            leaf_from_sum(sum, rows.len(), ctx.lambda)
        };
        leaves.push(rows);
        Tree::new_leaf(value)
    };

    if depth == 1 || node.rows.is_empty() {
        return make_leaf(node.rows, leaves);
    }

    let total_sum: f64 = node.rows.iter().map(|r| ctx.grads[*r as usize]).sum();
    let total_n = node.rows.len();

    let mut best: Option<(f64, FeatureId, f64)> = None;
    for (fid, thresholds, col) in &ctx.features {
        // One pass per feature: histogram of gradient sums per bucket, then
        // prefix scans give every candidate's left side.
        let n_buckets = thresholds.len() + 1;
        let mut bucket_sum = vec![0.0f64; n_buckets];
        let mut bucket_cnt = vec![0usize; n_buckets];
        for r in &node.rows {
            let v = col[*r as usize];
            let b = thresholds.partition_point(|t| *t <= v);
            bucket_sum[b] += ctx.grads[*r as usize];
            bucket_cnt[b] += 1;
        }
        let mut acc_sum = 0.0;
        let mut acc_cnt = 0usize;
        for (k, t) in thresholds.iter().enumerate() {
            acc_sum += bucket_sum[k];
            acc_cnt += bucket_cnt[k];
            let gain = gain_from_sums(
                acc_sum,
                acc_cnt,
                total_sum - acc_sum,
                total_n - acc_cnt,
                ctx.lambda,
            );
            let better = match &best {
                None => gain > 0.0,
                Some((g, _, _)) => gain > *g,
            };
            if better {
                best = Some((gain, *fid, *t));
            }
        }
    }

    let Some((gain, feature, threshold)) = best else {
        return make_leaf(node.rows, leaves);
    };
    if gain <= 0.0 {
        return make_leaf(node.rows, leaves);
    }

    let cond = SplitCondition::new(feature, threshold);
    let col = &ctx
        .features
        .iter()
        .find(|(f, _, _)| *f == feature)
        .unwrap()
        .2;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for r in node.rows {
        if cond.goes_left(col[r as usize]) {
            left.push(r);
        } else {
            right.push(r);
        }
    }
    let left_tree = grow(ctx, NodeData { rows: left }, depth - 1, leaves);
    let right_tree = grow(ctx, NodeData { rows: right }, depth - 1, leaves);
    Tree::new_split(cond, left_tree, right_tree)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ensemble {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl Ensemble {
    pub fn empty(loss: LossKind, learning_rate: f64) -> Self {
        Ensemble { loss, learning_rate, base_score: 0.0, trees: Vec::new() }
    }

    /// Raw score: `base_score + lr * sum_t tree_t(x)`.
    pub fn predict<V: FeatureView>(&self, view: &V, id: InstanceId) -> Result<f64> {
        let mut acc = 0.0;
        for t in &self.trees {
            acc += t.predict(view, id)?;
        }
        Ok(self.base_score + self.learning_rate * acc)
    }

    /// Probability for the logistic loss, raw score otherwise.
    pub fn predict_proba<V: FeatureView>(&self, view: &V, id: InstanceId) -> Result<f64> {
        let raw = self.predict(view, id)?;
        Ok(match self.loss {
            LossKind::Logistic => sigmoid(raw),
            LossKind::SquaredError => raw,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// The boosting loop: predictions start at zero and every round fits one
/// tree to the current gradients, then advances predictions by the
/// learning-rate-scaled leaf values.
pub fn train_ensemble(dataset: &Dataset, params: &TrainParams, loss: LossKind) -> Result<Ensemble> {
    params.validate()?;
    if !dataset.has_labels() {
        return Err(CoreError::Validation("training requires labels".into()));
    }
    let cuts = crate::binning::compute_split_candidates(
        dataset,
        &dataset.feature_ids().to_vec(),
        params.max_bins,
    )?;
    train_ensemble_with_cuts(dataset, params, loss, &cuts)
}

pub fn train_ensemble_with_cuts(
    dataset: &Dataset,
    params: &TrainParams,
    loss: LossKind,
    cuts: &BinCuts,
) -> Result<Ensemble> {
    params.validate()?;
    let labels = dataset
        .labels()
        .ok_or_else(|| CoreError::Validation("training requires labels".into()))?;
    let n = dataset.n_instances();
    let mut y_p = vec![0.0f64; n];
    let mut ensemble = Ensemble::empty(loss, params.learning_rate);

    let all_ids: Vec<InstanceId> = dataset.instance_ids().to_vec();
    for _round in 0..params.n_trees {
        let g_rows = compute_gradients(labels, &y_p, loss)?;
        let gm = GradientMap::from_dataset(dataset, &g_rows);
        let trained = train_tree(&all_ids, &gm, params.max_depth, cuts, dataset, params.lambda)?;
        for (node_id, ids) in &trained.last_layer {
            let value = match trained.tree.node(*node_id) {
                crate::tree::TreeNode::Leaf { value } => *value,
                _ => unreachable!(),
            };
            for id in ids {
                let row = dataset.row_of(*id).unwrap();
                y_p[row] += params.learning_rate * value;
            }
        }
        ensemble.trees.push(trained.tree);
    }
    Ok(ensemble)
}
