//! Conditional log-likelihood training with lazy Adam updates.
//!
//! Unlabeled positions stay in the chain and are summed over, so the
//! per-window log-likelihood is `log Z(clamped) - log Z`. Only emission rows
//! touched by a mini-batch are updated, together with their L2 term.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::crf;
use super::features::FeatureConfig;
use super::model::{SequenceModel, WindowInstance};
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub step: f64,
    pub l2: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub features: FeatureConfig,
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            step: 0.1,
            l2: 1e-4,
            patience: 5,
            max_epochs: 100,
            batch_size: 8,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// `-sum log-likelihood + l2 * |theta|^2` on the training set.
    pub loss: f64,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_dev_accuracy: Option<f64>,
}

/// Gradient of the log-likelihood. Emission rows are stored sparsely.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradient {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub transitions: Vec<f64>,
    pub rows: HashMap<usize, Vec<f64>>,
}

impl Gradient {
    fn zeros(l: usize) -> Self {
        Self {
            start: vec![0.0; l],
            end: vec![0.0; l],
            transitions: vec![0.0; l * l],
            rows: HashMap::new(),
        }
    }

    /// Value for emission weight `(feature, label)`.
    pub fn emission(&self, feature: usize, label: usize) -> f64 {
        self.rows.get(&feature).map_or(0.0, |r| r[label])
    }
}

fn check_labels(model: &SequenceModel, instance: &WindowInstance) -> Result<()> {
    if instance.gold.len() != instance.features.len() {
        return Err(Error::LengthMismatch {
            expected: instance.features.len(),
            got: instance.gold.len(),
        });
    }
    for y in instance.gold.iter().flatten() {
        if *y >= model.num_labels() {
            return Err(Error::LabelOutsideModel(format!("label index {y}")));
        }
    }
    Ok(())
}

/// Log-likelihood of the window's gold labels, marginalizing unlabeled
/// positions. Zero for a window with no labels.
pub fn log_likelihood(model: &SequenceModel, instance: &WindowInstance) -> f64 {
    if instance.labeled() == 0 {
        return 0.0;
    }
    let e = model.emission_scores(&instance.features, instance.offsets.as_deref());
    let p = model.potentials(&e);
    crf::log_partition_clamped(&p, Some(&instance.gold)) - crf::log_partition(&p)
}

/// Add `scale * d log-likelihood / d theta` for one window into `grad`.
/// Returns the window's log-likelihood.
pub fn accumulate_gradient(model: &SequenceModel, instance: &WindowInstance, scale: f64, grad: &mut Gradient) -> f64 {
    let l = model.num_labels();
    if grad.start.len() != l {
        *grad = Gradient::zeros(l);
    }
    let n = instance.len();
    if instance.labeled() == 0 || n == 0 {
        return 0.0;
    }
    let e = model.emission_scores(&instance.features, instance.offsets.as_deref());
    let p = model.potentials(&e);
    let free = crf::marginals(&p, None);
    let clamped = crf::marginals(&p, Some(&instance.gold));

    let diff: Vec<f64> = clamped
        .node
        .iter()
        .zip(&free.node)
        .map(|(c, f)| scale * (c - f))
        .collect();
    for y in 0..l {
        grad.start[y] += diff[y];
        grad.end[y] += diff[(n - 1) * l + y];
    }
    for (g, (c, f)) in grad.transitions.iter_mut().zip(clamped.pair.iter().zip(&free.pair)) {
        *g += scale * (c - f);
    }
    for (i, f) in instance.features.iter().enumerate() {
        let d = &diff[i * l..(i + 1) * l];
        for (idx, v) in f.iter() {
            let row = grad.rows.entry(idx).or_insert_with(|| vec![0.0; l]);
            for (r, dy) in row.iter_mut().zip(d) {
                *r += v * dy;
            }
        }
    }
    clamped.log_z - free.log_z
}

/// `sum log-likelihood - l2 * |theta|^2` and its gradient with respect to
/// every parameter (emission rows only where non-zero or touched).
pub fn objective_and_gradient(model: &SequenceModel, instances: &[WindowInstance], l2: f64) -> (f64, Gradient) {
    let mut grad = Gradient::zeros(model.num_labels());
    let mut ll = 0.0;
    for inst in instances {
        ll += accumulate_gradient(model, inst, 1.0, &mut grad);
    }
    for (g, w) in grad.start.iter_mut().zip(&model.start) {
        *g -= 2.0 * l2 * w;
    }
    for (g, w) in grad.end.iter_mut().zip(&model.end) {
        *g -= 2.0 * l2 * w;
    }
    for (g, w) in grad.transitions.iter_mut().zip(&model.transitions) {
        *g -= 2.0 * l2 * w;
    }
    let l = model.num_labels();
    for (f, row) in model.emissions.chunks(l).enumerate() {
        if row.iter().any(|w| *w != 0.0) {
            let g = grad.rows.entry(f).or_insert_with(|| vec![0.0; l]);
            for (gy, wy) in g.iter_mut().zip(row) {
                *gy -= 2.0 * l2 * wy;
            }
        }
    }
    (ll - l2 * model.weight_norm_sq(), grad)
}

pub fn objective(model: &SequenceModel, instances: &[WindowInstance], l2: f64) -> f64 {
    let ll: f64 = instances.iter().map(|i| log_likelihood(model, i)).sum();
    ll - l2 * model.weight_norm_sq()
}

/// Fraction of labeled sentences decoded correctly; `None` without labels.
pub fn accuracy(model: &SequenceModel, instances: &[WindowInstance]) -> Option<f64> {
    let (mut correct, mut total) = (0usize, 0usize);
    for inst in instances {
        let path = model.decode(inst);
        for (g, p) in inst.gold.iter().zip(path) {
            if let Some(g) = g {
                total += 1;
                correct += usize::from(*g == p);
            }
        }
    }
    (total > 0).then(|| correct as f64 / total as f64)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Ascent step on `w` with gradient `g` (of the objective to maximize).
    fn step(&mut self, i: usize, w: &mut f64, g: f64, c: &TrainConfig, t: i32) {
        self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
        self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
        let m_hat = self.m[i] / (1.0 - c.beta1.powi(t));
        let v_hat = self.v[i] / (1.0 - c.beta2.powi(t));
        *w += c.step * m_hat / (v_hat.sqrt() + c.epsilon);
    }
}

/// Train on `train`, early-stopping on `dev` accuracy. With an empty dev set
/// every epoch runs and the final model is returned.
pub fn train_crf(
    train: &[WindowInstance],
    dev: &[WindowInstance],
    taxonomy: &Taxonomy,
    config: &TrainConfig,
) -> Result<(SequenceModel, TrainReport)> {
    let model = SequenceModel::for_taxonomy(taxonomy, config.features.clone());
    train_from(model, train, dev, config)
}

/// As [`train_crf`] but starting from an existing parameter set.
pub fn train_from(
    mut model: SequenceModel,
    train: &[WindowInstance],
    dev: &[WindowInstance],
    config: &TrainConfig,
) -> Result<(SequenceModel, TrainReport)> {
    if config.batch_size == 0 || !(config.step > 0.0) || !(config.l2 >= 0.0) {
        return Err(Error::Config("batch_size, step and l2 must be positive".into()));
    }
    for inst in train.iter().chain(dev) {
        check_labels(&model, inst)?;
    }
    let mut order: Vec<usize> = (0..train.len()).filter(|&i| train[i].labeled() > 0).collect();
    if order.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    model.l2 = config.l2;
    let l = model.num_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut a_start, mut a_end, mut a_trans) = (Adam::new(l), Adam::new(l), Adam::new(l * l));
    let mut a_emit = Adam::new(model.emissions.len());
    let total = order.len() as f64;
    let mut t = 0i32;

    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev_accuracy: None,
    };
    let mut best: Option<SequenceModel> = None;
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut grad = Gradient::zeros(l);
            // Unbiased estimate of the full-data gradient.
            let factor = total / batch.len() as f64;
            for &i in batch {
                accumulate_gradient(&model, &train[i], factor, &mut grad);
            }
            t += 1;
            for y in 0..l {
                let g = grad.start[y] - 2.0 * config.l2 * model.start[y];
                a_start.step(y, &mut model.start[y], g, config, t);
                let g = grad.end[y] - 2.0 * config.l2 * model.end[y];
                a_end.step(y, &mut model.end[y], g, config, t);
            }
            for k in 0..l * l {
                let g = grad.transitions[k] - 2.0 * config.l2 * model.transitions[k];
                a_trans.step(k, &mut model.transitions[k], g, config, t);
            }
            let mut rows: Vec<_> = grad.rows.into_iter().collect();
            rows.sort_by_key(|r| r.0);
            for (f, row) in rows {
                for (y, gy) in row.into_iter().enumerate() {
                    let k = f * l + y;
                    let g = gy - 2.0 * config.l2 * model.emissions[k];
                    a_emit.step(k, &mut model.emissions[k], g, config, t);
                }
            }
        }

        let loss = -objective(&model, train, config.l2);
        let dev_accuracy = accuracy(&model, dev);
        report.epochs.push(EpochStats {
            epoch,
            loss,
            dev_accuracy,
        });
        match dev_accuracy {
            None => {
                report.best_epoch = epoch;
            }
            Some(acc) => {
                if report.best_dev_accuracy.is_none_or(|b| acc > b) {
                    report.best_dev_accuracy = Some(acc);
                    report.best_epoch = epoch;
                    best = Some(model.clone());
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= config.patience {
                        break;
                    }
                }
            }
        }
    }
    Ok((best.unwrap_or(model), report))
}
