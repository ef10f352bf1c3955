//! Binary decision trees with threshold splits. An instance goes left when
//! its value is strictly below the threshold; missing values go left.
//!
//! Nodes live in a flat arena in pre-order, so node ids are stable across
//! serialization round trips.

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureId, FeatureView, InstanceId};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCondition {
    pub feature: FeatureId,
    pub threshold: f64,
}

impl SplitCondition {
    pub fn new(feature: FeatureId, threshold: f64) -> Self {
        SplitCondition { feature, threshold }
    }

    /// Split semantics: left iff value < threshold; missing goes left.
    #[inline]
    pub fn goes_left(&self, value: f64) -> bool {
        value.is_nan() || value < self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        condition: SplitCondition,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn new_leaf(value: f64) -> Tree {
        Tree { nodes: vec![TreeNode::Leaf { value }] }
    }

    pub fn new_split(condition: SplitCondition, left: Tree, right: Tree) -> Tree {
        let mut nodes = Vec::with_capacity(1 + left.nodes.len() + right.nodes.len());
        let left_at = 1u32;
        let right_at = 1 + left.nodes.len() as u32;
        nodes.push(TreeNode::Split { condition, left: left_at, right: right_at });
        for n in left.nodes {
            nodes.push(shift(n, left_at));
        }
        for n in right.nodes {
            nodes.push(shift(n, right_at));
        }
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> &TreeNode {
        &self.nodes[id as usize]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// Layers counted inclusive of the leaf layer; a lone leaf has depth 1.
    pub fn depth(&self) -> usize {
        self.depth_from(0)
    }

    fn depth_from(&self, id: u32) -> usize {
        match &self.nodes[id as usize] {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => {
                1 + self.depth_from(*left).max(self.depth_from(*right))
            }
        }
    }

    /// All leaf node ids in pre-order with their values.
    pub fn leaves(&self) -> Vec<(u32, f64)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n {
                TreeNode::Leaf { value } => Some((i as u32, *value)),
                _ => None,
            })
            .collect()
    }

    pub fn set_leaf_value(&mut self, id: u32, value: f64) {
        match &mut self.nodes[id as usize] {
            TreeNode::Leaf { value: v } => *v = value,
            _ => panic!("node {id} is not a leaf"),
        }
    }

    /// Route an instance to a leaf, returning its node id. Errors when the
    /// view does not cover a feature tested on the path (a value that is
    /// merely missing routes left).
    pub fn route<V: FeatureView>(&self, view: &V, id: InstanceId) -> Result<u32> {
        let mut at = 0u32;
        loop {
            match &self.nodes[at as usize] {
                TreeNode::Leaf { .. } => return Ok(at),
                TreeNode::Split { condition, left, right } => {
                    if !view.feature_ids().contains(&condition.feature) {
                        return Err(CoreError::Validation(format!(
                            "feature {} required on path is not supplied",
                            condition.feature
                        )));
                    }
                    let v = view.value(id, condition.feature);
                    at = if condition.goes_left(v) { *left } else { *right };
                }
            }
        }
    }

    /// Leaf value for an instance.
    pub fn predict<V: FeatureView>(&self, view: &V, id: InstanceId) -> Result<f64> {
        let leaf = self.route(view, id)?;
        match &self.nodes[leaf as usize] {
            TreeNode::Leaf { value } => Ok(*value),
            _ => unreachable!(),
        }
    }

    /// Directed conditions from the root to the given node; `true` marks the
    /// left (condition satisfied) branch.
    pub fn path_to(&self, target: u32) -> Vec<(SplitCondition, bool)> {
        let mut path = Vec::new();
        self.find_path(0, target, &mut path);
        path
    }

    fn find_path(&self, at: u32, target: u32, path: &mut Vec<(SplitCondition, bool)>) -> bool {
        if at == target {
            return true;
        }
        match &self.nodes[at as usize] {
            TreeNode::Leaf { .. } => false,
            TreeNode::Split { condition, left, right } => {
                path.push((*condition, true));
                if self.find_path(*left, target, path) {
                    return true;
                }
                path.pop();
                path.push((*condition, false));
                if self.find_path(*right, target, path) {
                    return true;
                }
                path.pop();
                false
            }
        }
    }

    pub fn to_json_value(&self) -> NodeJson {
        self.node_json(0)
    }

    fn node_json(&self, id: u32) -> NodeJson {
        match &self.nodes[id as usize] {
            TreeNode::Leaf { value } => NodeJson::Leaf { leaf: *value },
            TreeNode::Split { condition, left, right } => NodeJson::Split {
                feature: condition.feature,
                threshold: condition.threshold,
                left: Box::new(self.node_json(*left)),
                right: Box::new(self.node_json(*right)),
            },
        }
    }

    pub fn from_json_value(json: &NodeJson) -> Tree {
        match json {
            NodeJson::Leaf { leaf } => Tree::new_leaf(*leaf),
            NodeJson::Split { feature, threshold, left, right } => Tree::new_split(
                SplitCondition::new(*feature, *threshold),
                Tree::from_json_value(left),
                Tree::from_json_value(right),
            ),
        }
    }
}

fn shift(node: TreeNode, offset: u32) -> TreeNode {
    match node {
        TreeNode::Split { condition, left, right } => TreeNode::Split {
            condition,
            left: left + offset,
            right: right + offset,
        },
        leaf => leaf,
    }
}

/// Nested wire form of a tree: split nodes carry `feature`, `threshold`,
/// `left`, `right`; leaves carry `leaf`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeJson {
    Split {
        feature: FeatureId,
        threshold: f64,
        left: Box<NodeJson>,
        right: Box<NodeJson>,
    },
    Leaf {
        leaf: f64,
    },
}

impl Serialize for Tree {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json_value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Tree {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let json = NodeJson::deserialize(deserializer)?;
        Ok(Tree::from_json_value(&json))
    }
}
