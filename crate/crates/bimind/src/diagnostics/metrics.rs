//! Accuracy and macro-averaged precision/recall/F1 over the two classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::N_CLASSES;

/// Classification metrics as fractions in [0, 1]. Macro averages weight
/// every class equally; a class absent from both predictions and labels
/// contributes zero to each macro average and is listed in
/// `absent_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub absent_classes: Vec<usize>,
}

/// Score predictions against gold labels.
pub fn macro_metrics(predictions: &[usize], labels: &[usize]) -> Result<Metrics> {
    if predictions.is_empty() || labels.is_empty() {
        return Err(Error::EmptyMetrics);
    }
    if predictions.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut tp = [0usize; N_CLASSES];
    let mut fp = [0usize; N_CLASSES];
    let mut fn_ = [0usize; N_CLASSES];
    let mut correct = 0usize;
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= N_CLASSES {
            return Err(Error::BadLabel { got: p as i64 });
        }
        if y >= N_CLASSES {
            return Err(Error::BadLabel { got: y as i64 });
        }
        if p == y {
            correct += 1;
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut absent = Vec::new();
    for c in 0..N_CLASSES {
        let predicted = tp[c] + fp[c];
        let actual = tp[c] + fn_[c];
        if predicted == 0 && actual == 0 {
            absent.push(c);
            continue;
        }
        let p = if predicted == 0 {
            0.0
        } else {
            tp[c] as f64 / predicted as f64
        };
        let r = if actual == 0 {
            0.0
        } else {
            tp[c] as f64 / actual as f64
        };
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        precision_sum += p;
        recall_sum += r;
        f1_sum += f1;
    }

    let k = N_CLASSES as f64;
    Ok(Metrics {
        accuracy: correct as f64 / predictions.len() as f64,
        macro_precision: precision_sum / k,
        macro_recall: recall_sum / k,
        macro_f1: f1_sum / k,
        absent_classes: absent,
    })
}
