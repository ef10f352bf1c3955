//! Split-rule analysis and tree transformation.
//!
//! A split rule is the conjunction of directed conditions along a
//! root-to-leaf path. A rule is a meta-rule when conditioning on any further
//! candidate condition leaves the label distribution unchanged; we test the
//! conditional-mean surrogate with a tolerance and a support floor. When a
//! guest-feature condition is part of a meta-rule, the tree can be reordered
//! so that condition sits in the last split layer without changing expected
//! predictions, which is what licenses training bottom layers on guest
//! features alone.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureId, FeatureView, InstanceId};
use crate::error::{CoreError, Result};
use crate::train::{Ensemble, GradientMap};
use crate::tree::{SplitCondition, Tree, TreeNode};

/// Conjunction of directed split conditions; `true` means the condition
/// holds (the instance goes left). Carries the terminal leaf value when the
/// rule came from a tree path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub conditions: Vec<(SplitCondition, bool)>,
    pub leaf_value: Option<f64>,
}

impl SplitRule {
    pub fn new(conditions: Vec<(SplitCondition, bool)>) -> Self {
        SplitRule { conditions, leaf_value: None }
    }

    /// A rule with no conditions (from a single-leaf tree).
    pub fn is_degenerate(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn matches<V: FeatureView>(&self, view: &V, id: InstanceId) -> bool {
        self.conditions.iter().all(|(cond, dir)| {
            let v = view.value(id, cond.feature);
            cond.goes_left(v) == *dir
        })
    }

    fn mentions(&self, cond: &SplitCondition) -> bool {
        self.conditions
            .iter()
            .any(|(c, _)| c.feature == cond.feature && c.threshold == cond.threshold)
    }
}

/// One rule per leaf: the directed path from the root.
pub fn extract_rules(tree: &Tree) -> Vec<SplitRule> {
    tree.leaves()
        .into_iter()
        .map(|(leaf, value)| SplitRule {
            conditions: tree.path_to(leaf),
            leaf_value: Some(value),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaRuleOutcome {
    Holds,
    Violated,
    /// The rule's own support is below the floor; nothing can be concluded.
    Indeterminate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionDeviation {
    pub condition: SplitCondition,
    pub deviation: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaRuleTest {
    pub outcome: MetaRuleOutcome,
    pub rule_support: usize,
    pub deviations: Vec<ConditionDeviation>,
}

/// Empirical meta-rule check: for every candidate condition not already in
/// the rule and with enough support inside the rule's slice, the label mean
/// conditioned on (rule AND candidate) must stay within `epsilon` of the
/// mean conditioned on the rule alone.
pub fn test_meta_rule(
    dataset: &Dataset,
    rule: &SplitRule,
    candidate_conditions: &[SplitCondition],
    epsilon: f64,
    min_support: usize,
) -> Result<MetaRuleTest> {
    if epsilon < 0.0 {
        return Err(CoreError::Validation("epsilon must be non-negative".into()));
    }
    let labels = dataset
        .labels()
        .ok_or_else(|| CoreError::Validation("meta-rule testing requires labels".into()))?;

    let in_rule: Vec<usize> = dataset
        .instance_ids()
        .iter()
        .enumerate()
        .filter(|(_, id)| rule.matches(dataset, **id))
        .map(|(row, _)| row)
        .collect();
    if in_rule.len() < min_support {
        return Ok(MetaRuleTest {
            outcome: MetaRuleOutcome::Indeterminate,
            rule_support: in_rule.len(),
            deviations: Vec::new(),
        });
    }
    let rule_mean = in_rule.iter().map(|r| labels[*r]).sum::<f64>() / in_rule.len() as f64;

    let mut deviations = Vec::new();
    let mut holds = true;
    for cond in candidate_conditions {
        if rule.mentions(cond) {
            continue;
        }
        let narrowed: Vec<usize> = in_rule
            .iter()
            .copied()
            .filter(|r| {
                let id = dataset.instance_ids()[*r];
                cond.goes_left(dataset.value(id, cond.feature))
            })
            .collect();
        if narrowed.len() < min_support {
            continue;
        }
        let narrowed_mean =
            narrowed.iter().map(|r| labels[*r]).sum::<f64>() / narrowed.len() as f64;
        let deviation = (rule_mean - narrowed_mean).abs();
        if deviation > epsilon {
            holds = false;
        }
        deviations.push(ConditionDeviation {
            condition: *cond,
            deviation,
            support: narrowed.len(),
        });
    }
    Ok(MetaRuleTest {
        outcome: if holds { MetaRuleOutcome::Holds } else { MetaRuleOutcome::Violated },
        rule_support: in_rule.len(),
        deviations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaRuleReport {
    pub rule: SplitRule,
    pub prevalence: f64,
    pub per_tree: Vec<bool>,
}

fn conditions_match(a: &SplitCondition, b: &SplitCondition, tolerance: f64) -> bool {
    a.feature == b.feature && (a.threshold - b.threshold).abs() <= tolerance
}

/// Does some root-to-leaf path of the tree include all of the rule's
/// directed conditions, in any order, thresholds matched within `tolerance`?
pub fn tree_contains_rule(tree: &Tree, rule: &SplitRule, tolerance: f64) -> bool {
    tree.leaves().iter().any(|(leaf, _)| {
        let path = tree.path_to(*leaf);
        rule.conditions.iter().all(|(cond, dir)| {
            path.iter()
                .any(|(pc, pd)| pd == dir && conditions_match(pc, cond, tolerance))
        })
    })
}

/// Fraction of the ensemble's trees containing the rule.
pub fn meta_rule_prevalence(
    ensemble: &Ensemble,
    rule: &SplitRule,
    threshold_tolerance: f64,
) -> MetaRuleReport {
    let per_tree: Vec<bool> = ensemble
        .trees
        .iter()
        .map(|t| tree_contains_rule(t, rule, threshold_tolerance))
        .collect();
    let hits = per_tree.iter().filter(|b| **b).count();
    let prevalence = if per_tree.is_empty() {
        0.0
    } else {
        hits as f64 / per_tree.len() as f64
    };
    MetaRuleReport { rule: rule.clone(), prevalence, per_tree }
}

/// Reorder a tree so the meta-rule's guest-feature condition occupies the
/// last split layer on every path that tested it: each occurrence of the
/// guest split is replaced by its complement-side structure, and the guest
/// condition is re-tested below every leaf of that structure. All leaf
/// values are then recomputed from the training partition.
pub fn transform_tree<V: FeatureView>(
    tree: &Tree,
    meta_rule: &SplitRule,
    guest_features: &BTreeSet<FeatureId>,
    view: &V,
    instance_ids: &[InstanceId],
    gradients: &GradientMap,
    lambda: f64,
) -> Result<Tree> {
    let guest_cond = meta_rule
        .conditions
        .iter()
        .find(|(c, _)| guest_features.contains(&c.feature))
        .map(|(c, _)| *c)
        .ok_or_else(|| {
            CoreError::Validation("meta-rule has no condition on a guest feature".into())
        })?;

    if !tree_tests_condition(tree, 0, &guest_cond) {
        return Err(CoreError::Validation(format!(
            "guest condition on feature {} is not tested by the tree",
            guest_cond.feature
        )));
    }

    let reordered = push_down(tree, 0, &guest_cond);
    let mut out = reordered;
    recompute_leaves(&mut out, view, instance_ids, gradients, lambda)?;
    Ok(out)
}

fn tree_tests_condition(tree: &Tree, at: u32, cond: &SplitCondition) -> bool {
    match tree.node(at) {
        TreeNode::Leaf { .. } => false,
        TreeNode::Split { condition, left, right } => {
            (condition.feature == cond.feature && condition.threshold == cond.threshold)
                || tree_tests_condition(tree, *left, cond)
                || tree_tests_condition(tree, *right, cond)
        }
    }
}

fn push_down(tree: &Tree, at: u32, guest: &SplitCondition) -> Tree {
    match tree.node(at) {
        TreeNode::Leaf { value } => Tree::new_leaf(*value),
        TreeNode::Split { condition, left, right } => {
            if condition.feature == guest.feature && condition.threshold == guest.threshold {
                // The complement-side structure absorbs all instances; the
                // guest condition is re-tested beneath each of its leaves.
                // Values are placeholders until the recompute pass.
                let complement = push_down(tree, *right, guest);
                append_condition_below(&complement, *condition)
            } else {
                Tree::new_split(
                    *condition,
                    push_down(tree, *left, guest),
                    push_down(tree, *right, guest),
                )
            }
        }
    }
}

fn append_condition_below(tree: &Tree, condition: SplitCondition) -> Tree {
    match tree.node(0) {
        TreeNode::Leaf { value } => Tree::new_split(
            condition,
            Tree::new_leaf(*value),
            Tree::new_leaf(*value),
        ),
        TreeNode::Split { condition: c, left, right } => Tree::new_split(
            *c,
            append_condition_below(&subtree(tree, *left), condition),
            append_condition_below(&subtree(tree, *right), condition),
        ),
    }
}

fn subtree(tree: &Tree, at: u32) -> Tree {
    match tree.node(at) {
        TreeNode::Leaf { value } => Tree::new_leaf(*value),
        TreeNode::Split { condition, left, right } => Tree::new_split(
            *condition,
            subtree(tree, *left),
            subtree(tree, *right),
        ),
    }
}

/// Reset every leaf value to `-(sum g)/(|I| + lambda)` over the instances
/// that reach it; leaves no instance reaches become zero.
pub fn recompute_leaves<V: FeatureView>(
    tree: &mut Tree,
    view: &V,
    instance_ids: &[InstanceId],
    gradients: &GradientMap,
    lambda: f64,
) -> Result<()> {
    let n_nodes = tree.n_nodes();
    let mut sums = vec![0.0f64; n_nodes];
    let mut counts = vec![0usize; n_nodes];
    for id in instance_ids {
        let leaf = tree.route(view, *id)?;
        let g = gradients
            .get(*id)
            .ok_or_else(|| CoreError::Validation(format!("no gradient for instance {id}")))?;
        sums[leaf as usize] += g;
        counts[leaf as usize] += 1;
    }
    for (node_id, _) in tree.leaves() {
        let i = node_id as usize;
        let value = if counts[i] == 0 {
            0.0
        } else {
            crate::train::leaf_from_sum(sums[i], counts[i], lambda)
        };
        tree.set_leaf_value(node_id, value);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformationReport {
    pub mean_pred_a: f64,
    pub mean_pred_b: f64,
    pub mean_gap: f64,
    /// Largest gap between a transformed leaf's gradient mean and the
    /// gradient mean of the original leaf its instances came from.
    pub max_leaf_gap: f64,
}

/// Empirical check of the transformation theorems: expected predictions over
/// the dataset must agree, and per transformed leaf the gradient mean must
/// match the originating leaf's gradient mean.
pub fn verify_transformation<V: FeatureView>(
    tree_a: &Tree,
    tree_b: &Tree,
    view: &V,
    instance_ids: &[InstanceId],
    gradients: &GradientMap,
) -> Result<TransformationReport> {
    if instance_ids.is_empty() {
        return Err(CoreError::Validation("empty instance set".into()));
    }
    let n = instance_ids.len() as f64;

    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    let mut a_stats = vec![(0.0f64, 0usize); tree_a.n_nodes()];
    let mut b_stats = vec![(0.0f64, 0usize); tree_b.n_nodes()];
    let mut b_to_a: Vec<Option<u32>> = vec![None; tree_b.n_nodes()];

    for id in instance_ids {
        let leaf_a = tree_a.route(view, *id)?;
        let leaf_b = tree_b.route(view, *id)?;
        let g = gradients
            .get(*id)
            .ok_or_else(|| CoreError::Validation(format!("no gradient for instance {id}")))?;
        sum_a += leaf_val(tree_a, leaf_a);
        sum_b += leaf_val(tree_b, leaf_b);
        a_stats[leaf_a as usize].0 += g;
        a_stats[leaf_a as usize].1 += 1;
        b_stats[leaf_b as usize].0 += g;
        b_stats[leaf_b as usize].1 += 1;
        b_to_a[leaf_b as usize] = Some(leaf_a);
    }

    let mut max_leaf_gap = 0.0f64;
    for (leaf_b, _) in tree_b.leaves() {
        let (bsum, bcnt) = b_stats[leaf_b as usize];
        if bcnt == 0 {
            continue;
        }
        let Some(leaf_a) = b_to_a[leaf_b as usize] else { continue };
        let (asum, acnt) = a_stats[leaf_a as usize];
        if acnt == 0 {
            continue;
        }
        let gap = (bsum / bcnt as f64 - asum / acnt as f64).abs();
        max_leaf_gap = max_leaf_gap.max(gap);
    }

    let mean_pred_a = sum_a / n;
    let mean_pred_b = sum_b / n;
    Ok(TransformationReport {
        mean_pred_a,
        mean_pred_b,
        mean_gap: (mean_pred_a - mean_pred_b).abs(),
        max_leaf_gap,
    })
}

fn leaf_val(tree: &Tree, id: u32) -> f64 {
    match tree.node(id) {
        TreeNode::Leaf { value } => *value,
        _ => unreachable!("routing always ends on a leaf"),
    }
}
