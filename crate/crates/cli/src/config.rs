//! Experiment configuration: a TOML file with full command-line override;
//! flags win over the file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use fedgbdt_core::train::{LossKind, TrainParams};
use fedgbdt_fed::{CipherChoice, FedParams, GuestSplitMode};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Allin,
    Solo,
    Hybridtree,
    Tfl,
    Multihost,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Allin => "allin",
            Method::Solo => "solo",
            Method::Hybridtree => "hybridtree",
            Method::Tfl => "tfl",
            Method::Multihost => "multihost",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Auprc,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::Accuracy => write!(f, "accuracy"),
            Metric::Auprc => write!(f, "auprc"),
        }
    }
}

/// On-disk configuration; every field optional so a file can set just the
/// experiment-wide pieces.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub method: Option<Method>,
    pub metric: Option<Metric>,
    pub seed: Option<u64>,
    pub trees: Option<usize>,
    pub depth: Option<usize>,
    pub e_host: Option<usize>,
    pub e_guest: Option<usize>,
    pub lambda: Option<f64>,
    pub learning_rate: Option<f64>,
    pub max_bins: Option<usize>,
    pub mode: Option<GuestSplitMode>,
    pub cipher: Option<String>,
    pub loss: Option<LossKind>,
    pub hosts: Option<usize>,
    pub label_column: Option<String>,
    pub id_column: Option<String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }
}

/// Fully resolved experiment settings after merging defaults, the config
/// file and command-line flags.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub method: Method,
    pub metric: Metric,
    pub seed: u64,
    pub trees: usize,
    pub depth: usize,
    pub e_host: usize,
    pub e_guest: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_bins: usize,
    pub mode: GuestSplitMode,
    pub cipher: CipherChoice,
    pub loss: LossKind,
    pub hosts: usize,
    pub label_column: String,
    pub id_column: Option<String>,
}

impl Default for Resolved {
    fn default() -> Self {
        Resolved {
            method: Method::Hybridtree,
            metric: Metric::Accuracy,
            seed: 0,
            trees: 50,
            depth: 7,
            e_host: 5,
            e_guest: 2,
            lambda: 1.0,
            learning_rate: 0.1,
            max_bins: 32,
            mode: GuestSplitMode::Assisted,
            cipher: CipherChoice::Passthrough,
            loss: LossKind::Logistic,
            hosts: 5,
            label_column: "label".to_string(),
            id_column: Some("id".to_string()),
        }
    }
}

impl Resolved {
    pub fn apply_file(&mut self, file: &ConfigFile) -> Result<()> {
        if let Some(v) = file.method {
            self.method = v;
        }
        if let Some(v) = file.metric {
            self.metric = v;
        }
        if let Some(v) = file.seed {
            self.seed = v;
        }
        if let Some(v) = file.trees {
            self.trees = v;
        }
        if let Some(v) = file.depth {
            self.depth = v;
        }
        if let Some(v) = file.e_host {
            self.e_host = v;
        }
        if let Some(v) = file.e_guest {
            self.e_guest = v;
        }
        if let Some(v) = file.lambda {
            self.lambda = v;
        }
        if let Some(v) = file.learning_rate {
            self.learning_rate = v;
        }
        if let Some(v) = file.max_bins {
            self.max_bins = v;
        }
        if let Some(v) = file.mode {
            self.mode = v;
        }
        if let Some(v) = &file.cipher {
            self.cipher = parse_cipher(v)?;
        }
        if let Some(v) = file.loss {
            self.loss = v;
        }
        if let Some(v) = file.hosts {
            self.hosts = v;
        }
        if let Some(v) = &file.label_column {
            self.label_column = v.clone();
        }
        if let Some(v) = &file.id_column {
            self.id_column = Some(v.clone());
        }
        Ok(())
    }

    /// The depth constraint for layered training.
    pub fn validate_for(&self, method: Method) -> Result<()> {
        if method == Method::Hybridtree || method == Method::Multihost {
            if self.e_host + self.e_guest != self.depth {
                return Err(CliError::Config(format!(
                    "e_host ({}) + e_guest ({}) must equal depth ({})",
                    self.e_host, self.e_guest, self.depth
                )));
            }
        }
        Ok(())
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            n_trees: self.trees,
            max_depth: self.depth,
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            max_bins: self.max_bins,
        }
    }

    pub fn fed_params(&self) -> FedParams {
        FedParams {
            n_trees: self.trees,
            e_host: self.e_host,
            e_guest: self.e_guest,
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            max_bins: self.max_bins,
            loss: self.loss,
            mode: self.mode,
            cipher: self.cipher,
            frac_bits: 24,
            seed: self.seed,
        }
    }
}

pub fn parse_cipher(s: &str) -> Result<CipherChoice> {
    match s {
        "passthrough" => Ok(CipherChoice::Passthrough),
        "paillier" => Ok(CipherChoice::Paillier { bits: 1024 }),
        other => {
            if let Some(bits) = other.strip_prefix("paillier:") {
                let bits: usize = bits
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad cipher '{other}'")))?;
                Ok(CipherChoice::Paillier { bits })
            } else {
                Err(CliError::Config(format!(
                    "unknown cipher '{other}' (expected passthrough, paillier or paillier:BITS)"
                )))
            }
        }
    }
}
