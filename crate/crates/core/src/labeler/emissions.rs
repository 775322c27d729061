//! Externally computed emission scores.
//!
//! JSON lines: a header `{"taxonomy_hash": ..., "labels": [...]}` followed by
//! `{"sentence_id": ..., "scores": [...]}` rows in header label order.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmissionHeader {
    pub taxonomy_hash: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmissionRow {
    pub sentence_id: String,
    pub scores: Vec<f64>,
}

/// Scores keyed by sentence id, stored in model label order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmissionTable {
    pub labels: Vec<String>,
    pub scores: HashMap<String, Vec<f64>>,
}

impl EmissionTable {
    /// Offsets `n x L` for a window; sentences without a row get zeros.
    pub fn offsets(&self, sentence_ids: &[String]) -> Vec<f64> {
        let l = self.labels.len();
        let mut out = vec![0.0; sentence_ids.len() * l];
        for (i, id) in sentence_ids.iter().enumerate() {
            if let Some(s) = self.scores.get(id) {
                out[i * l..(i + 1) * l].copy_from_slice(s);
            }
        }
        out
    }

    /// Error on the first sentence id (in sorted order) that no dialogue has.
    pub fn check_sentences(&self, dialogues: &[Dialogue]) -> Result<()> {
        let mut ids: Vec<&String> = self.scores.keys().collect();
        ids.sort();
        for id in ids {
            if !dialogues.iter().any(|d| d.sentence_position(id).is_some()) {
                return Err(Error::UnknownSentence(id.clone()));
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W, taxonomy_hash: &str) -> Result<()> {
        let header = EmissionHeader {
            taxonomy_hash: taxonomy_hash.to_string(),
            labels: self.labels.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut ids: Vec<&String> = self.scores.keys().collect();
        ids.sort();
        for id in ids {
            let row = EmissionRow {
                sentence_id: id.clone(),
                scores: self.scores[id].clone(),
            };
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Read an emission file for a model with `labels` bound to `taxonomy_hash`.
/// The file may list the same labels in a different order.
pub fn import_emissions<R: BufRead>(reader: R, labels: &[String], taxonomy_hash: &str) -> Result<EmissionTable> {
    let mut lines = reader
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::MalformedRecord {
            line: 1,
            reason: "missing header".into(),
        })?;
    let header: EmissionHeader = serde_json::from_str(&first?).map_err(|e| Error::MalformedRecord {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.taxonomy_hash != taxonomy_hash {
        return Err(Error::TaxonomyMismatch {
            expected: taxonomy_hash.to_string(),
            found: header.taxonomy_hash,
        });
    }
    let mut sorted_file = header.labels.clone();
    let mut sorted_model = labels.to_vec();
    sorted_file.sort();
    sorted_model.sort();
    if sorted_file != sorted_model || header.labels.len() != labels.len() {
        return Err(Error::LabelOrder(format!(
            "file labels {:?} are not a permutation of the model's",
            header.labels
        )));
    }
    let order: Vec<usize> = labels
        .iter()
        .map(|l| header.labels.iter().position(|h| h == l).unwrap())
        .collect();

    let mut table = EmissionTable {
        labels: labels.to_vec(),
        scores: HashMap::new(),
    };
    for (i, line) in lines {
        let row: EmissionRow = serde_json::from_str(&line?).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if row.scores.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: labels.len(),
                got: row.scores.len(),
            });
        }
        if row.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::MalformedRecord {
                line: i + 1,
                reason: "non-finite score".into(),
            });
        }
        let reordered = order.iter().map(|&k| row.scores[k]).collect();
        table.scores.insert(row.sentence_id, reordered);
    }
    Ok(table)
}
