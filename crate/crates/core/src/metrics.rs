//! Segmentation quality and modality-balance metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::IGNORE_LABEL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction has {pred} pixels but ground truth has {gt}")]
    ShapeMismatch { pred: usize, gt: usize },
    #[error("every pixel carries the ignore label")]
    AllIgnored,
    #[error("label {label} is outside 0..{classes}")]
    LabelRange { label: u8, classes: usize },
    #[error("no results to summarize")]
    Empty,
}

/// Scores of one modality combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComboResult {
    pub combo: Vec<String>,
    pub miou: f64,
    pub accuracy: f64,
    /// `None` for classes absent from both prediction and ground truth.
    pub per_class_iou: Vec<Option<f64>>,
}

/// Square `K × K` confusion matrix, rows indexed by ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Confusion {
    classes: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Adds every pixel whose ground truth is not the ignore label.
    pub fn accumulate(&mut self, pred: &[u8], gt: &[u8]) -> Result<(), MetricsError> {
        if pred.len() != gt.len() {
            return Err(MetricsError::ShapeMismatch {
                pred: pred.len(),
                gt: gt.len(),
            });
        }
        let k = self.classes;
        for (&p, &g) in pred.iter().zip(gt) {
            if g == IGNORE_LABEL {
                continue;
            }
            for label in [p, g] {
                if label as usize >= k {
                    return Err(MetricsError::LabelRange { label, classes: k });
                }
            }
            self.counts[g as usize * k + p as usize] += 1;
        }
        Ok(())
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    /// `(per_class_iou, miou, accuracy)`.
    pub fn scores(&self) -> Result<(Vec<Option<f64>>, f64, f64), MetricsError> {
        let k = self.classes;
        let total: u64 = self.counts.iter().sum();
        if total == 0 {
            return Err(MetricsError::AllIgnored);
        }
        let correct: u64 = (0..k).map(|c| self.count(c, c)).sum();
        let per_class: Vec<Option<f64>> = (0..k)
            .map(|c| {
                let tp = self.count(c, c);
                let gt: u64 = (0..k).map(|p| self.count(c, p)).sum();
                let pred: u64 = (0..k).map(|g| self.count(g, c)).sum();
                let union = gt + pred - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let miou = present.iter().sum::<f64>() / present.len() as f64;
        Ok((per_class, miou, correct as f64 / total as f64))
    }
}

/// Per-class IoU, mean IoU over classes present in prediction or ground
/// truth, and pixel accuracy. Pixels labelled 255 in `gt` are skipped.
pub fn confusion_and_miou(pred: &[u8], gt: &[u8], classes: usize) -> Result<(Vec<Option<f64>>, f64, f64), MetricsError> {
    let mut c = Confusion::new(classes);
    c.accumulate(pred, gt)?;
    c.scores()
}

/// Every non-empty subset, by size and then lexicographically by position in
/// `modalities`.
pub fn enumerate_combos(modalities: &[String]) -> Vec<Vec<String>> {
    let n = modalities.len();
    let mut out = Vec::with_capacity((1usize << n).saturating_sub(1));
    for size in 1..=n {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&i| modalities[i].clone()).collect());
            // Advance to the next index combination in lexicographic order.
            let Some(pos) = (0..size).rev().find(|&p| idx[p] < n - size + p) else {
                break;
            };
            idx[pos] += 1;
            for q in pos + 1..size {
                idx[q] = idx[q - 1] + 1;
            }
        }
    }
    out
}

/// Mean and population standard deviation of the combos' mIoU.
pub fn balance_stats(results: &[ComboResult]) -> Result<(f64, f64), MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = results.len() as f64;
    let mean = results.iter().map(|r| r.miou).sum::<f64>() / n;
    let var = results.iter().map(|r| (r.miou - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Short column label of a combo: the first letter of each member, uppercase.
pub fn combo_label(combo: &[String]) -> String {
    combo
        .iter()
        .filter_map(|m| m.chars().next())
        .flat_map(char::to_uppercase)
        .collect()
}
