//! Column-oriented tabular data with stable instance IDs.
//!
//! A [`Dataset`] stores one column per feature id. Labels are optional so the
//! same container serves labeled hosts and unlabeled guests. Missing values
//! are represented by NaN and always route left during splitting.

use std::collections::{BTreeSet, HashMap};

use crate::error::{CoreError, Result};

pub type InstanceId = u64;
pub type FeatureId = u32;

/// Sentinel for an absent feature value.
pub const MISSING: f64 = f64::NAN;

#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

#[derive(Debug, Clone)]
pub struct Dataset {
    instance_ids: Vec<InstanceId>,
    feature_ids: Vec<FeatureId>,
    /// One column per entry of `feature_ids`, each of length `instance_ids.len()`.
    columns: Vec<Vec<f64>>,
    labels: Option<Vec<f64>>,
    row_index: HashMap<InstanceId, usize>,
}

impl Dataset {
    pub fn new(
        instance_ids: Vec<InstanceId>,
        feature_ids: Vec<FeatureId>,
        columns: Vec<Vec<f64>>,
        labels: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = instance_ids.len();
        if feature_ids.len() != columns.len() {
            return Err(CoreError::Validation(format!(
                "{} feature ids but {} columns",
                feature_ids.len(),
                columns.len()
            )));
        }
        for (fid, col) in feature_ids.iter().zip(&columns) {
            if col.len() != n {
                return Err(CoreError::Validation(format!(
                    "feature {} has {} values for {} instances",
                    fid,
                    col.len(),
                    n
                )));
            }
        }
        if let Some(y) = &labels {
            if y.len() != n {
                return Err(CoreError::Validation(format!(
                    "{} labels for {} instances",
                    y.len(),
                    n
                )));
            }
        }
        let unique: BTreeSet<FeatureId> = feature_ids.iter().copied().collect();
        if unique.len() != feature_ids.len() {
            return Err(CoreError::Validation("duplicate feature id".into()));
        }
        let mut row_index = HashMap::with_capacity(n);
        for (row, id) in instance_ids.iter().enumerate() {
            if row_index.insert(*id, row).is_some() {
                return Err(CoreError::Validation(format!("duplicate instance id {id}")));
            }
        }
        Ok(Dataset {
            instance_ids,
            feature_ids,
            columns,
            labels,
            row_index,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn instance_ids(&self) -> &[InstanceId] {
        &self.instance_ids
    }

    pub fn feature_ids(&self) -> &[FeatureId] {
        &self.feature_ids
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn row_of(&self, id: InstanceId) -> Option<usize> {
        self.row_index.get(&id).copied()
    }

    pub fn contains_instance(&self, id: InstanceId) -> bool {
        self.row_index.contains_key(&id)
    }

    pub fn column_of(&self, fid: FeatureId) -> Option<&[f64]> {
        self.feature_ids
            .iter()
            .position(|f| *f == fid)
            .map(|i| self.columns[i].as_slice())
    }

    /// Value by row position and column position.
    pub fn value_at(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    /// Value by instance id and feature id; `MISSING` when either is unknown.
    pub fn value(&self, id: InstanceId, fid: FeatureId) -> f64 {
        match (self.row_of(id), self.feature_ids.iter().position(|f| *f == fid)) {
            (Some(row), Some(col)) => self.columns[col][row],
            _ => MISSING,
        }
    }

    pub fn label_of(&self, id: InstanceId) -> Option<f64> {
        let row = self.row_of(id)?;
        self.labels.as_ref().map(|y| y[row])
    }

    /// Restrict to the given instances (in the given order) and features.
    /// Unknown feature ids are rejected; unknown instance ids are rejected.
    pub fn subset(&self, instance_ids: &[InstanceId], feature_ids: &[FeatureId]) -> Result<Dataset> {
        let mut cols = Vec::with_capacity(feature_ids.len());
        for fid in feature_ids {
            let col = self
                .column_of(*fid)
                .ok_or_else(|| CoreError::Validation(format!("unknown feature id {fid}")))?;
            let mut out = Vec::with_capacity(instance_ids.len());
            for id in instance_ids {
                let row = self
                    .row_of(*id)
                    .ok_or_else(|| CoreError::Validation(format!("unknown instance id {id}")))?;
                out.push(col[row]);
            }
            cols.push(out);
        }
        let labels = match &self.labels {
            Some(y) => {
                let mut out = Vec::with_capacity(instance_ids.len());
                for id in instance_ids {
                    out.push(y[self.row_of(*id).unwrap()]);
                }
                Some(out)
            }
            None => None,
        };
        Dataset::new(instance_ids.to_vec(), feature_ids.to_vec(), cols, labels)
    }

    /// Same instances and features, labels dropped.
    pub fn without_labels(&self) -> Dataset {
        let mut d = self.clone();
        d.labels = None;
        d
    }

    /// Replace the label vector (must match the instance count).
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<Dataset> {
        Dataset::new(
            self.instance_ids.clone(),
            self.feature_ids.clone(),
            self.columns.clone(),
            Some(labels),
        )
    }
}

/// Read access to feature values by instance id, the view trainers work on.
///
/// `value` returns `MISSING` for cells the view does not cover.
pub trait FeatureView {
    fn feature_ids(&self) -> &[FeatureId];
    fn value(&self, id: InstanceId, fid: FeatureId) -> f64;
}

impl FeatureView for Dataset {
    fn feature_ids(&self) -> &[FeatureId] {
        &self.feature_ids
    }

    fn value(&self, id: InstanceId, fid: FeatureId) -> f64 {
        Dataset::value(self, id, fid)
    }
}

/// A dataset joined with extra feature columns from other datasets.
/// Lookup falls through the parts in order; first part holding the feature
/// and the instance wins.
pub struct JoinedView<'a> {
    parts: Vec<&'a Dataset>,
    feature_ids: Vec<FeatureId>,
}

impl<'a> JoinedView<'a> {
    pub fn new(parts: Vec<&'a Dataset>) -> Self {
        let mut feature_ids = Vec::new();
        for p in &parts {
            for fid in p.feature_ids() {
                if !feature_ids.contains(fid) {
                    feature_ids.push(*fid);
                }
            }
        }
        JoinedView { parts, feature_ids }
    }
}

impl FeatureView for JoinedView<'_> {
    fn feature_ids(&self) -> &[FeatureId] {
        &self.feature_ids
    }

    fn value(&self, id: InstanceId, fid: FeatureId) -> f64 {
        for p in &self.parts {
            if p.feature_ids().contains(&fid) && p.contains_instance(id) {
                return p.value(id, fid);
            }
        }
        MISSING
    }
}
