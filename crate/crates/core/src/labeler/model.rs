//! CRF parameters, emission scoring and the binary model file.

use std::io::{Read, Write};

use super::crf::{self, Marginals, Potentials};
use super::emissions::EmissionTable;
use super::features::{featurize_window, FeatureConfig, FeatureVector};
use crate::corpus::Dialogue;
use crate::error::{Error, Result};
use crate::segmentation::Window;
use crate::taxonomy::Taxonomy;

const MAGIC: &[u8; 8] = b"CHATACTM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModel {
    pub labels: Vec<String>,
    pub taxonomy_hash: String,
    pub feature_config: FeatureConfig,
    pub l2: f64,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// `L x L`, row = previous label.
    pub transitions: Vec<f64>,
    /// `D x L`, feature-major.
    pub emissions: Vec<f64>,
}

/// One window ready for scoring: features per sentence, optional gold label
/// indices, and optional imported emission offsets (`n x L`).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowInstance {
    pub window_id: String,
    pub dialogue_id: String,
    pub sentence_ids: Vec<String>,
    pub features: Vec<FeatureVector>,
    pub gold: Vec<Option<usize>>,
    pub offsets: Option<Vec<f64>>,
}

impl WindowInstance {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn labeled(&self) -> usize {
        self.gold.iter().flatten().count()
    }
}

impl SequenceModel {
    pub fn zeros(labels: Vec<String>, taxonomy_hash: impl Into<String>, feature_config: FeatureConfig) -> Self {
        let l = labels.len();
        let d = feature_config.dim;
        Self {
            labels,
            taxonomy_hash: taxonomy_hash.into(),
            feature_config,
            l2: 0.0,
            start: vec![0.0; l],
            end: vec![0.0; l],
            transitions: vec![0.0; l * l],
            emissions: vec![0.0; d * l],
        }
    }

    /// A zero model over the taxonomy's reduced set.
    pub fn for_taxonomy(taxonomy: &Taxonomy, feature_config: FeatureConfig) -> Self {
        Self::zeros(taxonomy.reduced_set().to_vec(), taxonomy.hash(), feature_config)
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Emission scores `n x L` for a window.
    pub fn emission_scores(&self, features: &[FeatureVector], offsets: Option<&[f64]>) -> Vec<f64> {
        let l = self.num_labels();
        let mut out = match offsets {
            Some(o) => o.to_vec(),
            None => vec![0.0; features.len() * l],
        };
        for (i, f) in features.iter().enumerate() {
            let row = &mut out[i * l..(i + 1) * l];
            for (idx, v) in f.iter() {
                let w = &self.emissions[idx * l..(idx + 1) * l];
                for (r, wy) in row.iter_mut().zip(w) {
                    *r += v * wy;
                }
            }
        }
        out
    }

    pub fn potentials<'a>(&'a self, emissions: &'a [f64]) -> Potentials<'a> {
        Potentials {
            labels: self.num_labels(),
            emissions,
            transitions: &self.transitions,
            start: &self.start,
            end: &self.end,
        }
    }

    pub fn score(&self, features: &[FeatureVector], labels: &[usize]) -> Result<f64> {
        let e = self.emission_scores(features, None);
        crf::score(&self.potentials(&e), labels)
    }

    pub fn log_partition(&self, features: &[FeatureVector]) -> f64 {
        let e = self.emission_scores(features, None);
        crf::log_partition(&self.potentials(&e))
    }

    pub fn marginals(&self, features: &[FeatureVector]) -> Marginals {
        let e = self.emission_scores(features, None);
        crf::marginals(&self.potentials(&e), None)
    }

    pub fn viterbi(&self, features: &[FeatureVector]) -> (Vec<usize>, f64) {
        let e = self.emission_scores(features, None);
        crf::viterbi(&self.potentials(&e))
    }

    pub fn decode(&self, instance: &WindowInstance) -> Vec<usize> {
        let e = self.emission_scores(&instance.features, instance.offsets.as_deref());
        crf::viterbi(&self.potentials(&e)).0
    }

    /// Squared L2 norm of every parameter.
    pub fn weight_norm_sq(&self) -> f64 {
        [&self.start, &self.end, &self.transitions, &self.emissions]
            .iter()
            .flat_map(|v| v.iter())
            .map(|w| w * w)
            .sum()
    }

    pub fn check_taxonomy(&self, taxonomy: &Taxonomy) -> Result<()> {
        if self.taxonomy_hash != taxonomy.hash() {
            return Err(Error::TaxonomyMismatch {
                expected: self.taxonomy_hash.clone(),
                found: taxonomy.hash().to_string(),
            });
        }
        Ok(())
    }

    /// Build scoring instances for `windows`. Gold labels are collapsed to
    /// the reduced set before lookup.
    pub fn instances(
        &self,
        dialogues: &[Dialogue],
        windows: &[Window],
        taxonomy: &Taxonomy,
        emissions: Option<&EmissionTable>,
    ) -> Result<Vec<WindowInstance>> {
        build_instances(dialogues, windows, &self.labels, taxonomy, &self.feature_config, emissions)
    }

    /// Predicted labels for every sentence of `dialogue` covered by `windows`,
    /// keyed by sentence position.
    pub fn label_dialogue(
        &self,
        dialogue: &Dialogue,
        windows: &[Window],
        emissions: Option<&EmissionTable>,
    ) -> Vec<(usize, String)> {
        let mut out = Vec::new();
        for w in windows.iter().filter(|w| w.dialogue_id == dialogue.id()) {
            let features = featurize_window(dialogue, w, &self.feature_config);
            let offsets = emissions.map(|t| t.offsets(&w.sentence_ids));
            let e = self.emission_scores(&features, offsets.as_deref());
            let (path, _) = crf::viterbi(&self.potentials(&e));
            for (k, y) in path.into_iter().enumerate() {
                out.push((w.sentences.start + k, self.labels[y].clone()));
            }
        }
        out
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_str(&mut w, &self.taxonomy_hash)?;
        w.write_all(&(self.labels.len() as u32).to_le_bytes())?;
        for l in &self.labels {
            write_str(&mut w, l)?;
        }
        write_str(&mut w, &serde_json::to_string(&self.feature_config)?)?;
        w.write_all(&(self.feature_config.dim as u64).to_le_bytes())?;
        for block in [&self.start, &self.end, &self.transitions, &self.emissions] {
            let mut buf = Vec::with_capacity(block.len() * 8);
            for x in block.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.write_all(&self.l2.to_le_bytes())?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat("not a sequence model file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let taxonomy_hash = read_str(&mut r)?;
        let l = read_u32(&mut r)? as usize;
        let labels = (0..l).map(|_| read_str(&mut r)).collect::<Result<Vec<_>>>()?;
        let feature_config: FeatureConfig = serde_json::from_str(&read_str(&mut r)?)?;
        let mut d = [0u8; 8];
        r.read_exact(&mut d)?;
        let d = u64::from_le_bytes(d) as usize;
        if d != feature_config.dim {
            return Err(Error::ModelFormat("feature dimension disagrees with config".into()));
        }
        let start = read_f64s(&mut r, l)?;
        let end = read_f64s(&mut r, l)?;
        let transitions = read_f64s(&mut r, l * l)?;
        let emissions = read_f64s(&mut r, d * l)?;
        let l2 = read_f64s(&mut r, 1)?[0];
        let model = Self {
            labels,
            taxonomy_hash,
            feature_config,
            l2,
            start,
            end,
            transitions,
            emissions,
        };
        let finite = [&model.start, &model.end, &model.transitions, &model.emissions]
            .iter()
            .all(|b| b.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::ModelFormat("non-finite weights".into()));
        }
        Ok(model)
    }
}

pub fn build_instances(
    dialogues: &[Dialogue],
    windows: &[Window],
    labels: &[String],
    taxonomy: &Taxonomy,
    feature_config: &FeatureConfig,
    emissions: Option<&EmissionTable>,
) -> Result<Vec<WindowInstance>> {
    let mut out = Vec::with_capacity(windows.len());
    for w in windows {
        let dialogue = dialogues
            .iter()
            .find(|d| d.id() == w.dialogue_id)
            .ok_or_else(|| Error::UnknownSentence(w.id.clone()))?;
        let gold = dialogue.sentences()[w.sentences.clone()]
            .iter()
            .map(|s| match &s.gold_label {
                None => Ok(None),
                Some(g) => {
                    let collapsed = taxonomy
                        .collapse(g)
                        .map_err(|_| Error::LabelOutsideModel(g.clone()))?;
                    labels
                        .iter()
                        .position(|l| l == collapsed)
                        .map(Some)
                        .ok_or_else(|| Error::LabelOutsideModel(g.clone()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(WindowInstance {
            window_id: w.id.clone(),
            dialogue_id: w.dialogue_id.clone(),
            sentence_ids: w.sentence_ids.clone(),
            features: featurize_window(dialogue, w, feature_config),
            gold,
            offsets: emissions.map(|t| t.offsets(&w.sentence_ids)),
        });
    }
    Ok(out)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = read_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| Error::ModelFormat(e.to_string()))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
