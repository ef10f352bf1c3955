//! Split-candidate computation. Each feature gets a small set of cut points
//! taken at empirical quantiles of the locally observed values.

use std::collections::BTreeMap;

use crate::dataset::{Dataset, FeatureId};
use crate::error::{CoreError, Result};

/// Per-feature ordered cut points. Thresholds are strictly increasing and a
/// feature with no usable cut (e.g. constant) maps to an empty list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinCuts {
    cuts: BTreeMap<FeatureId, Vec<f64>>,
}

impl BinCuts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, fid: FeatureId, thresholds: Vec<f64>) {
        self.cuts.insert(fid, thresholds);
    }

    pub fn thresholds(&self, fid: FeatureId) -> &[f64] {
        self.cuts.get(&fid).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn feature_ids(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.cuts.keys().copied()
    }

    /// Candidate (feature, threshold) pairs in deterministic order:
    /// feature id ascending, then threshold ascending.
    pub fn candidates(&self) -> impl Iterator<Item = (FeatureId, f64)> + '_ {
        self.cuts
            .iter()
            .flat_map(|(fid, ts)| ts.iter().map(move |t| (*fid, *t)))
    }

    pub fn n_candidates(&self) -> usize {
        self.cuts.values().map(Vec::len).sum()
    }

    /// Index of the bin a threshold falls in for the given feature, used to
    /// match rule thresholds up to quantization jitter.
    pub fn bin_of(&self, fid: FeatureId, threshold: f64) -> Option<usize> {
        let ts = self.cuts.get(&fid)?;
        Some(ts.partition_point(|t| *t <= threshold))
    }
}

/// Empirical quantile with linear interpolation over the sorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let pos = q * (n as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Quantile cut points for the requested features, `k / max_bins` for
/// `k = 1..max_bins-1`, deduplicated. Cuts that cannot separate anything
/// (at or below the column minimum) are dropped, so a constant feature
/// yields an empty list. Missing values are ignored.
pub fn compute_split_candidates(
    dataset: &Dataset,
    feature_ids: &[FeatureId],
    max_bins: usize,
) -> Result<BinCuts> {
    if max_bins == 0 {
        return Err(CoreError::Validation("max_bins must be at least 1".into()));
    }
    if dataset.n_instances() == 0 {
        return Err(CoreError::Validation("empty dataset".into()));
    }
    let mut out = BinCuts::new();
    for fid in feature_ids {
        let col = dataset
            .column_of(*fid)
            .ok_or_else(|| CoreError::Validation(format!("unknown feature id {fid}")))?;
        let mut values: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut thresholds = Vec::new();
        if !values.is_empty() {
            let min = values[0];
            for k in 1..max_bins {
                let t = quantile(&values, k as f64 / max_bins as f64);
                if t <= min {
                    continue;
                }
                if thresholds.last().map_or(true, |last| *last < t) {
                    thresholds.push(t);
                }
            }
        }
        out.insert(*fid, thresholds);
    }
    Ok(out)
}
