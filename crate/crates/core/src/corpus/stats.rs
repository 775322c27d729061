//! Per-partition label proportions over reduced-set labels.

use serde::{Deserialize, Serialize};

use super::{CorpusSplit, Dialogue, Partition};
use crate::error::Result;
use crate::segmentation::Window;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelProportions {
    pub partition: String,
    pub labeled: usize,
    pub unlabeled: usize,
    /// `(label, count, proportion)` in reduced-set order.
    pub rows: Vec<(String, usize, f64)>,
}

impl LabelProportions {
    pub fn proportion(&self, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == label).map(|r| r.2)
    }
}

/// Proportions of collapsed gold labels. Always reports `all`; with a split
/// also `train`, `dev`, `test` and the combined `dev+test`. Unlabeled
/// sentences are counted but excluded from every denominator.
pub fn corpus_stats(
    dialogues: &[Dialogue],
    windows: &[Window],
    split: Option<&CorpusSplit>,
    taxonomy: &Taxonomy,
) -> Result<Vec<LabelProportions>> {
    let reduced = taxonomy.reduced_set();
    let index_of = |label: &str| -> Result<usize> {
        let collapsed = taxonomy.collapse(label)?;
        Ok(reduced.iter().position(|r| r == collapsed).expect("collapse lands in reduced set"))
    };

    // counts[partition][label]; partitions: all, train, dev, test.
    let mut counts = vec![vec![0usize; reduced.len()]; 4];
    let mut unlabeled = [0usize; 4];
    let mut tally = |part: usize, label: Option<usize>| match label {
        Some(l) => counts[part][l] += 1,
        None => unlabeled[part] += 1,
    };

    match split {
        None => {
            for d in dialogues {
                for s in d.sentences() {
                    let label = s.gold_label.as_deref().map(index_of).transpose()?;
                    tally(0, label);
                }
            }
        }
        Some(split) => {
            for (w, window) in windows.iter().enumerate() {
                let part = match split.partition_of(w) {
                    Partition::Train => 1,
                    Partition::Dev => 2,
                    Partition::Test => 3,
                };
                let dialogue = dialogues
                    .iter()
                    .find(|d| d.id() == window.dialogue_id)
                    .ok_or_else(|| crate::Error::UnknownSentence(window.id.clone()))?;
                for s in &dialogue.sentences()[window.sentences.clone()] {
                    let label = s.gold_label.as_deref().map(index_of).transpose()?;
                    tally(0, label);
                    tally(part, label);
                }
            }
        }
    }

    let table = |name: &str, c: &[usize], unlabeled: usize| {
        let labeled: usize = c.iter().sum();
        LabelProportions {
            partition: name.to_string(),
            labeled,
            unlabeled,
            rows: reduced
                .iter()
                .zip(c)
                .map(|(l, &n)| {
                    let p = if labeled == 0 { 0.0 } else { n as f64 / labeled as f64 };
                    (l.clone(), n, p)
                })
                .collect(),
        }
    };

    let mut out = vec![table("all", &counts[0], unlabeled[0])];
    if split.is_some() {
        out.push(table("train", &counts[1], unlabeled[1]));
        out.push(table("dev", &counts[2], unlabeled[2]));
        out.push(table("test", &counts[3], unlabeled[3]));
        let combined: Vec<usize> = counts[2].iter().zip(&counts[3]).map(|(a, b)| a + b).collect();
        out.push(table("dev+test", &combined, unlabeled[2] + unlabeled[3]));
    }
    Ok(out)
}
