//! Context-free baseline: averaged hashed n-gram embeddings and a softmax
//! layer, trained from random initialization.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{text_grams, FeatureConfig, FEATURE_SEED};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CHATACTB";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub seed: u64,
    pub dim: usize,
    pub buckets: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub char_ngram_min: usize,
    pub char_ngram_max: usize,
    pub word_bigrams: bool,
}

impl BaselineConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            dim: 64,
            buckets: 1 << 16,
            epochs: 20,
            learning_rate: 0.5,
            batch_size: 4,
            char_ngram_min: 3,
            char_ngram_max: 5,
            word_bigrams: true,
        }
    }

    fn features(&self) -> FeatureConfig {
        FeatureConfig {
            dim: self.buckets,
            seed: FEATURE_SEED,
            char_ngram_min: self.char_ngram_min,
            char_ngram_max: self.char_ngram_max,
            word_bigrams: self.word_bigrams,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub labels: Vec<String>,
    pub taxonomy_hash: String,
    pub config: BaselineConfig,
    pub epochs_trained: usize,
    /// `buckets x dim`.
    pub embeddings: Vec<f32>,
    /// `L x dim`.
    pub output: Vec<f32>,
    pub bias: Vec<f32>,
}

impl BaselineModel {
    /// Seeded uniform embeddings in `[-1/dim, 1/dim]`, zero output layer.
    pub fn init(labels: Vec<String>, taxonomy_hash: impl Into<String>, config: BaselineConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bound = 1.0 / config.dim as f32;
        let embeddings = (0..config.buckets * config.dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        let l = labels.len();
        Self {
            output: vec![0.0; l * config.dim],
            bias: vec![0.0; l],
            labels,
            taxonomy_hash: taxonomy_hash.into(),
            embeddings,
            epochs_trained: 0,
            config,
        }
    }

    pub fn is_trained(&self) -> bool {
        self.epochs_trained > 0
    }

    /// Hashed gram ids for `text`.
    pub fn grams(&self, text: &str) -> Vec<usize> {
        let fc = self.config.features();
        text_grams(text, &fc)
            .iter()
            .map(|g| fc.index_of(g) as usize)
            .collect()
    }

    fn row(&self, id: usize) -> &[f32] {
        let e = self.config.dim;
        &self.embeddings[id * e..(id + 1) * e]
    }

    /// Mean of the embedding rows of `text`'s grams; zero for empty text.
    pub fn sentence_vector(&self, text: &str) -> Vec<f32> {
        self.mean(&self.grams(text))
    }

    /// One embedding row per gram, in order.
    pub fn token_vectors(&self, text: &str) -> Vec<Vec<f32>> {
        self.grams(text).into_iter().map(|g| self.row(g).to_vec()).collect()
    }

    /// Output-layer row for a label.
    pub fn label_row(&self, label: usize) -> &[f32] {
        let e = self.config.dim;
        &self.output[label * e..(label + 1) * e]
    }

    fn mean(&self, ids: &[usize]) -> Vec<f32> {
        let mut h = vec![0.0f32; self.config.dim];
        if ids.is_empty() {
            return h;
        }
        for &id in ids {
            for (a, b) in h.iter_mut().zip(self.row(id)) {
                *a += b;
            }
        }
        let n = ids.len() as f32;
        h.iter_mut().for_each(|x| *x /= n);
        h
    }

    fn probabilities(&self, h: &[f32]) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.labels.len())
            .map(|y| {
                self.label_row(y)
                    .iter()
                    .zip(h)
                    .map(|(w, x)| f64::from(*w) * f64::from(*x))
                    .sum::<f64>()
                    + f64::from(self.bias[y])
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / total).collect()
    }

    pub fn predict_index(&self, text: &str) -> usize {
        let p = self.probabilities(&self.sentence_vector(text));
        let mut best = 0;
        for y in 1..p.len() {
            if p[y] > p[best] {
                best = y;
            }
        }
        best
    }

    pub fn predict(&self, text: &str) -> &str {
        &self.labels[self.predict_index(text)]
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let header = serde_json::json!({
            "taxonomy_hash": self.taxonomy_hash,
            "labels": self.labels,
            "config": self.config,
            "epochs_trained": self.epochs_trained,
        })
        .to_string();
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(header.as_bytes())?;
        for block in [&self.embeddings, &self.output, &self.bias] {
            let mut buf = Vec::with_capacity(block.len() * 4);
            for x in block.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat("not a baseline model file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != VERSION {
            return Err(Error::ModelFormat("unsupported baseline version".into()));
        }
        r.read_exact(&mut b4)?;
        let mut header = vec![0u8; u32::from_le_bytes(b4) as usize];
        r.read_exact(&mut header)?;
        #[derive(Deserialize)]
        struct Header {
            taxonomy_hash: String,
            labels: Vec<String>,
            config: BaselineConfig,
            epochs_trained: usize,
        }
        let h: Header = serde_json::from_slice(&header)?;
        let mut floats = |n: usize| -> Result<Vec<f32>> {
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let l = h.labels.len();
        let embeddings = floats(h.config.buckets * h.config.dim)?;
        let output = floats(l * h.config.dim)?;
        let bias = floats(l)?;
        Ok(Self {
            labels: h.labels,
            taxonomy_hash: h.taxonomy_hash,
            config: h.config,
            epochs_trained: h.epochs_trained,
            embeddings,
            output,
            bias,
        })
    }
}

/// Train on `(text, label)` examples. Every label must be in `labels`.
pub fn train_baseline(
    examples: &[(String, String)],
    labels: Vec<String>,
    taxonomy_hash: &str,
    config: &BaselineConfig,
) -> Result<BaselineModel> {
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if config.dim == 0 || config.buckets == 0 || config.batch_size == 0 {
        return Err(Error::Config("dim, buckets and batch_size must be positive".into()));
    }
    let mut model = BaselineModel::init(labels, taxonomy_hash, config.clone());
    let data = examples
        .iter()
        .map(|(text, label)| {
            let y = model
                .labels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::LabelOutsideModel(label.clone()))?;
            Ok((model.grams(text), y))
        })
        .collect::<Result<Vec<_>>>()?;

    let (l, e) = (model.labels.len(), config.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let total_steps = (config.epochs * data.len()) as f64;
    let mut seen = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let lr = (config.learning_rate * (1.0 - seen as f64 / total_steps)).max(0.0) as f32;
            seen += batch.len();
            let scale = lr / batch.len() as f32;
            let mut d_out = vec![0.0f32; l * e];
            let mut d_bias = vec![0.0f32; l];
            let mut d_rows: Vec<(usize, Vec<f32>)> = Vec::new();
            for &i in batch {
                let (ids, y) = &data[i];
                if ids.is_empty() {
                    continue;
                }
                let h = model.mean(ids);
                let p = model.probabilities(&h);
                let mut dh = vec![0.0f32; e];
                for k in 0..l {
                    let dz = (p[k] - f64::from(u8::from(k == *y))) as f32;
                    d_bias[k] += dz;
                    for j in 0..e {
                        d_out[k * e + j] += dz * h[j];
                        dh[j] += dz * model.output[k * e + j];
                    }
                }
                let n = ids.len() as f32;
                dh.iter_mut().for_each(|x| *x /= n);
                for &id in ids {
                    d_rows.push((id, dh.clone()));
                }
            }
            for (w, g) in model.output.iter_mut().zip(&d_out) {
                *w -= scale * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&d_bias) {
                *b -= scale * g;
            }
            for (id, g) in d_rows {
                let row = &mut model.embeddings[id * e..(id + 1) * e];
                for (w, gj) in row.iter_mut().zip(&g) {
                    *w -= scale * gj;
                }
            }
        }
        model.epochs_trained += 1;
    }
    Ok(model)
}
