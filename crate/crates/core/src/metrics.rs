//! Classification metrics: thresholded accuracy and the area under the
//! step-interpolated precision-recall curve.

use crate::error::{CoreError, Result};

/// Fraction of instances whose probability, thresholded at 0.5, matches the
/// binary label.
pub fn accuracy(labels: &[f64], probabilities: &[f64]) -> Result<f64> {
    if labels.len() != probabilities.len() {
        return Err(CoreError::Metric("length mismatch".into()));
    }
    if labels.is_empty() {
        return Err(CoreError::Metric("no instances".into()));
    }
    let hits = labels
        .iter()
        .zip(probabilities)
        .filter(|(y, p)| (**p >= 0.5) == (**y >= 0.5))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Area under the precision-recall curve over all score thresholds, using
/// step interpolation: sum over distinct thresholds of
/// `(recall_k - recall_{k-1}) * precision_k` with scores descending.
pub fn auprc(labels: &[f64], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(CoreError::Metric("length mismatch".into()));
    }
    let positives = labels.iter().filter(|y| **y >= 0.5).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(CoreError::Metric("auprc requires both classes present".into()));
    }

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|a, b| scores[*b].partial_cmp(&scores[*a]).unwrap().then(a.cmp(b)));

    let mut area = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        // Consume every instance tied at this score before measuring.
        let score = scores[order[i]];
        while i < order.len() && scores[order[i]] == score {
            if labels[order[i]] >= 0.5 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / positives as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}
