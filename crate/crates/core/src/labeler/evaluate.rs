//! Accuracy, per-label precision/recall and confusion counts.

use serde::{Deserialize, Serialize};

use super::model::{SequenceModel, WindowInstance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub label: String,
    pub support: usize,
    pub predicted: usize,
    pub correct: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub labels: Vec<String>,
    pub labeled: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_label: Vec<LabelScores>,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Score `(gold, predicted)` index pairs.
pub fn evaluate_pairs(labels: &[String], pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Evaluation> {
    let l = labels.len();
    let mut confusion = vec![vec![0usize; l]; l];
    for (g, p) in pairs {
        if g >= l || p >= l {
            return Err(Error::LabelOutsideModel(format!("label index {}", g.max(p))));
        }
        confusion[g][p] += 1;
    }
    let labeled: usize = confusion.iter().flatten().sum();
    if labeled == 0 {
        return Err(Error::NoLabeledSentences);
    }
    let correct: usize = (0..l).map(|y| confusion[y][y]).sum();
    let per_label = labels
        .iter()
        .enumerate()
        .map(|(y, label)| {
            let support: usize = confusion[y].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[y]).sum();
            let hit = confusion[y][y];
            LabelScores {
                label: label.clone(),
                support,
                predicted,
                correct: hit,
                precision: (predicted > 0).then(|| hit as f64 / predicted as f64),
                recall: (support > 0).then(|| hit as f64 / support as f64),
            }
        })
        .collect();
    Ok(Evaluation {
        labels: labels.to_vec(),
        labeled,
        correct,
        accuracy: correct as f64 / labeled as f64,
        per_label,
        confusion,
    })
}

/// Decode each window and score labeled sentences; unlabeled ones are skipped.
pub fn evaluate(model: &SequenceModel, instances: &[WindowInstance]) -> Result<Evaluation> {
    let mut pairs = Vec::new();
    for inst in instances {
        let path = model.decode(inst);
        pairs.extend(inst.gold.iter().zip(path).filter_map(|(g, p)| g.map(|g| (g, p))));
    }
    evaluate_pairs(&model.labels, pairs)
}
