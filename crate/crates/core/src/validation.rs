//! Per-label centroid vectors and within-class vs. overall cosine distance.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::error::{Error, Result};
use crate::labeler::BaselineModel;
use crate::taxonomy::Taxonomy;

/// How sentences are turned into a label's vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentroidMode {
    /// Mean of per-sentence averaged embeddings.
    #[default]
    SentenceMean,
    /// Mean over every gram embedding of every sentence with the label.
    TokenMean,
    /// The label's row of the output layer.
    OutputRow,
}

impl fmt::Display for CentroidMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CentroidMode::SentenceMean => "sentence-mean",
            CentroidMode::TokenMean => "token-mean",
            CentroidMode::OutputRow => "output-row",
        })
    }
}

impl FromStr for CentroidMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence-mean" => Ok(CentroidMode::SentenceMean),
            "token-mean" => Ok(CentroidMode::TokenMean),
            "output-row" => Ok(CentroidMode::OutputRow),
            other => Err(Error::Config(format!("unknown centroid mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCentroid {
    pub label: String,
    pub vector: Vec<f64>,
    /// Sentences contributing to the vector.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    pub mode: CentroidMode,
    /// In label-set order.
    pub centroids: Vec<LabelCentroid>,
    /// Labels with no contributing sentence.
    pub missing: Vec<String>,
}

/// Centroids for every label in `labels` from gold-labeled sentences.
/// Sentences whose text yields no grams are skipped.
pub fn compute_centroids(
    model: &BaselineModel,
    dialogues: &[Dialogue],
    labels: &[String],
    mode: CentroidMode,
) -> Result<Centroids> {
    if !model.is_trained() {
        return Err(Error::UntrainedModel);
    }
    let dim = model.config.dim;
    let position: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut sums = vec![vec![0.0f64; dim]; labels.len()];
    let mut weights = vec![0usize; labels.len()];
    let mut support = vec![0usize; labels.len()];
    for s in dialogues.iter().flat_map(|d| d.sentences()) {
        let Some(gold) = &s.gold_label else { continue };
        let &y = position
            .get(gold.as_str())
            .ok_or_else(|| Error::LabelOutsideModel(gold.clone()))?;
        let tokens = model.token_vectors(&s.text);
        if tokens.is_empty() {
            continue;
        }
        support[y] += 1;
        match mode {
            CentroidMode::SentenceMean => {
                let v = model.sentence_vector(&s.text);
                for (a, b) in sums[y].iter_mut().zip(v) {
                    *a += f64::from(b);
                }
                weights[y] += 1;
            }
            CentroidMode::TokenMean => {
                for t in &tokens {
                    for (a, b) in sums[y].iter_mut().zip(t) {
                        *a += f64::from(*b);
                    }
                }
                weights[y] += tokens.len();
            }
            CentroidMode::OutputRow => {}
        }
    }

    let mut centroids = Vec::new();
    let mut missing = Vec::new();
    for (y, label) in labels.iter().enumerate() {
        if support[y] == 0 {
            missing.push(label.clone());
            continue;
        }
        let vector = match mode {
            CentroidMode::OutputRow => {
                let k = model
                    .labels
                    .iter()
                    .position(|l| l == label)
                    .ok_or_else(|| Error::LabelOutsideModel(label.clone()))?;
                model.label_row(k).iter().map(|&x| f64::from(x)).collect()
            }
            _ => sums[y].iter().map(|x| x / weights[y] as f64).collect(),
        };
        centroids.push(LabelCentroid {
            label: label.clone(),
            vector,
            support: support[y],
        });
    }
    Ok(Centroids {
        mode,
        centroids,
        missing,
    })
}

/// `1 - cos(u, v)`, clamped to `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum();
    let nv: f64 = v.iter().map(|a| a * a).sum();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((1.0 - dot / (nu * nv).sqrt()).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub a: String,
    pub b: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistance {
    /// Top-level act.
    pub class: String,
    pub members: Vec<String>,
    pub pairs: usize,
    pub mean_distance: f64,
    /// `mean_distance < overall`.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub classes: Vec<ClassDistance>,
    /// Mean over every centroid pair.
    pub overall: f64,
    /// Every pair `(i, j)`, `i < j` in centroid order.
    pub pairs: Vec<PairDistance>,
    /// Classes whose within-class mean is not below `overall`.
    pub violations: Vec<String>,
}

fn all_pairs(centroids: &[LabelCentroid]) -> Result<Vec<PairDistance>> {
    let mut out = Vec::with_capacity(centroids.len() * centroids.len().saturating_sub(1) / 2);
    for (i, a) in centroids.iter().enumerate() {
        for b in &centroids[i + 1..] {
            out.push(PairDistance {
                a: a.label.clone(),
                b: b.label.clone(),
                distance: cosine_distance(&a.vector, &b.vector)?,
            });
        }
    }
    Ok(out)
}

pub fn hierarchy_consistency_report(centroids: &[LabelCentroid], taxonomy: &Taxonomy) -> Result<ConsistencyReport> {
    let pairs = all_pairs(centroids)?;
    let mut root_of = HashMap::new();
    for c in centroids {
        root_of.insert(c.label.as_str(), taxonomy.root(&c.label)?);
    }
    let mut classes = Vec::new();
    for root in taxonomy.roots() {
        let members: Vec<String> = centroids
            .iter()
            .filter(|c| root_of[c.label.as_str()] == root.id)
            .map(|c| c.label.clone())
            .collect();
        if members.len() < 2 {
            continue;
        }
        let within: Vec<f64> = pairs
            .iter()
            .filter(|p| root_of[p.a.as_str()] == root.id && root_of[p.b.as_str()] == root.id)
            .map(|p| p.distance)
            .collect();
        classes.push(ClassDistance {
            class: root.id.clone(),
            members,
            pairs: within.len(),
            mean_distance: within.iter().sum::<f64>() / within.len() as f64,
            consistent: false,
        });
    }
    if classes.is_empty() {
        return Err(Error::TooFewCentroids(centroids.len().min(1)));
    }
    let overall = pairs.iter().map(|p| p.distance).sum::<f64>() / pairs.len() as f64;
    let mut violations = Vec::new();
    for c in &mut classes {
        c.consistent = c.mean_distance < overall;
        if !c.consistent {
            violations.push(c.class.clone());
        }
    }
    Ok(ConsistencyReport {
        classes,
        overall,
        pairs,
        violations,
    })
}

/// Closest pair, labels ordered lexicographically within the pair; ties go
/// to the lexicographically smallest pair.
pub fn most_similar_pair(centroids: &[LabelCentroid]) -> Result<PairDistance> {
    if centroids.len() < 2 {
        return Err(Error::TooFewCentroids(centroids.len()));
    }
    let mut best: Option<PairDistance> = None;
    for mut p in all_pairs(centroids)? {
        if p.b < p.a {
            std::mem::swap(&mut p.a, &mut p.b);
        }
        let better = match &best {
            None => true,
            Some(b) => p.distance < b.distance || (p.distance == b.distance && (&p.a, &p.b) < (&b.a, &b.b)),
        };
        if better {
            best = Some(p);
        }
    }
    Ok(best.expect("at least one pair"))
}
