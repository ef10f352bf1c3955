//! The persisted artifact of a federated training run: host subtrees,
//! per-guest bottom trees keyed by (round, host last-layer node), fallback
//! leaves for uncovered instances, and the parameters needed to predict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use fedgbdt_core::train::LossKind;
use fedgbdt_core::tree::Tree;

use crate::error::{FedError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuestSplitMode {
    /// Guests query the host for gain argmax over encrypted aggregates.
    Assisted,
    /// Guests pick the most balanced local split; no extra messages.
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CipherChoice {
    Paillier { bits: usize },
    Passthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FedParams {
    pub n_trees: usize,
    pub e_host: usize,
    pub e_guest: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_bins: usize,
    pub loss: LossKind,
    pub mode: GuestSplitMode,
    pub cipher: CipherChoice,
    pub frac_bits: u32,
    pub seed: u64,
}

impl Default for FedParams {
    fn default() -> Self {
        FedParams {
            n_trees: 50,
            e_host: 5,
            e_guest: 2,
            lambda: 1.0,
            learning_rate: 0.1,
            max_bins: 32,
            loss: LossKind::Logistic,
            mode: GuestSplitMode::Assisted,
            cipher: CipherChoice::Passthrough,
            frac_bits: 24,
            seed: 0,
        }
    }
}

impl FedParams {
    pub fn validate(&self) -> Result<()> {
        if self.e_host == 0 || self.e_guest == 0 {
            return Err(FedError::Protocol("e_host and e_guest must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(FedError::Protocol("learning_rate must be in (0, 1]".into()));
        }
        if self.lambda < 0.0 {
            return Err(FedError::Protocol("lambda must be non-negative".into()));
        }
        if let CipherChoice::Paillier { bits } = self.cipher {
            if bits < 512 {
                return Err(FedError::Protocol(
                    "federated training needs >= 512-bit Paillier keys (64-bit keys are for crypto tests)"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedModel {
    pub params: FedParams,
    pub host_trees: Vec<Tree>,
    /// Host-computed leaf value per (round, host leaf node) for instances
    /// no guest covers.
    pub fallbacks: BTreeMap<(u64, u32), f64>,
    /// guest index -> (round, host leaf node) -> bottom tree with leaf
    /// values filled in from the host's decrypted table.
    pub guest_trees: BTreeMap<u32, BTreeMap<(u64, u32), Tree>>,
}

impl DistributedModel {
    pub fn empty(params: FedParams) -> Self {
        DistributedModel {
            params,
            host_trees: Vec::new(),
            fallbacks: BTreeMap::new(),
            guest_trees: BTreeMap::new(),
        }
    }

    /// Leaf value of a guest bottom tree by pre-order leaf position.
    pub fn guest_leaf_value(&self, guest: u32, round: u64, node: u32, position: u16) -> Option<f64> {
        let tree = self.guest_trees.get(&guest)?.get(&(round, node))?;
        tree.leaves().get(position as usize).map(|(_, v)| *v)
    }

    pub fn to_json(&self) -> Result<String> {
        let key = |round: u64, node: u32| format!("{round}:{node}");
        let fallbacks: BTreeMap<String, f64> = self
            .fallbacks
            .iter()
            .map(|((r, n), v)| (key(*r, *n), *v))
            .collect();
        let guest_trees: BTreeMap<String, BTreeMap<String, Value>> = self
            .guest_trees
            .iter()
            .map(|(g, trees)| {
                let inner = trees
                    .iter()
                    .map(|((r, n), t)| {
                        (key(*r, *n), serde_json::to_value(t).expect("tree serializes"))
                    })
                    .collect();
                (g.to_string(), inner)
            })
            .collect();
        let doc = json!({
            "params": self.params,
            "host_trees": self.host_trees,
            "guest_trees": guest_trees,
            "fallbacks": fallbacks,
        });
        serde_json::to_string(&doc).map_err(|e| FedError::Protocol(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(s).map_err(|e| FedError::Protocol(e.to_string()))?;
        let parse_key = |k: &str| -> Result<(u64, u32)> {
            let (r, n) = k
                .split_once(':')
                .ok_or_else(|| FedError::Protocol(format!("bad round:node key '{k}'")))?;
            Ok((
                r.parse().map_err(|_| FedError::Protocol(format!("bad round in '{k}'")))?,
                n.parse().map_err(|_| FedError::Protocol(format!("bad node in '{k}'")))?,
            ))
        };
        let params: FedParams = serde_json::from_value(doc["params"].clone())
            .map_err(|e| FedError::Protocol(e.to_string()))?;
        let host_trees: Vec<Tree> = serde_json::from_value(doc["host_trees"].clone())
            .map_err(|e| FedError::Protocol(e.to_string()))?;
        let mut fallbacks = BTreeMap::new();
        if let Value::Object(map) = &doc["fallbacks"] {
            for (k, v) in map {
                let value = v
                    .as_f64()
                    .ok_or_else(|| FedError::Protocol("fallback value not a number".into()))?;
                fallbacks.insert(parse_key(k)?, value);
            }
        }
        let mut guest_trees = BTreeMap::new();
        if let Value::Object(map) = &doc["guest_trees"] {
            for (g, inner) in map {
                let guest: u32 = g
                    .parse()
                    .map_err(|_| FedError::Protocol(format!("bad guest id '{g}'")))?;
                let mut trees = BTreeMap::new();
                if let Value::Object(inner) = inner {
                    for (k, t) in inner {
                        let tree: Tree = serde_json::from_value(t.clone())
                            .map_err(|e| FedError::Protocol(e.to_string()))?;
                        trees.insert(parse_key(k)?, tree);
                    }
                }
                guest_trees.insert(guest, trees);
            }
        }
        Ok(DistributedModel { params, host_trees, fallbacks, guest_trees })
    }
}
