//! Linear-chain CRF inference over dense potentials.
//!
//! `emissions` is row-major `n x L`; `transitions[i * L + j]` scores label
//! `j` following label `i`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Potentials<'a> {
    pub labels: usize,
    pub emissions: &'a [f64],
    pub transitions: &'a [f64],
    pub start: &'a [f64],
    pub end: &'a [f64],
}

impl Potentials<'_> {
    pub fn len(&self) -> usize {
        self.emissions.len() / self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }

    fn emit(&self, i: usize, y: usize) -> f64 {
        self.emissions[i * self.labels + y]
    }

    fn trans(&self, a: usize, b: usize) -> f64 {
        self.transitions[a * self.labels + b]
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn score(p: &Potentials, labels: &[usize]) -> Result<f64> {
    let n = p.len();
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut s = p.start[labels[0]];
    for (i, &y) in labels.iter().enumerate() {
        s += p.emit(i, y);
        if i > 0 {
            s += p.trans(labels[i - 1], y);
        }
    }
    Ok(s + p.end[labels[n - 1]])
}

/// Allowed-label mask: `Some(y)` pins position `i` to `y`.
fn allowed(clamp: Option<&[Option<usize>]>, i: usize, y: usize) -> bool {
    match clamp.and_then(|c| c[i]) {
        Some(gold) => gold == y,
        None => true,
    }
}

/// Forward log-scores `alpha[i * L + y]`.
pub fn forward(p: &Potentials, clamp: Option<&[Option<usize>]>) -> Vec<f64> {
    let (n, l) = (p.len(), p.labels);
    let mut alpha = vec![f64::NEG_INFINITY; n * l];
    for y in 0..l {
        if allowed(clamp, 0, y) {
            alpha[y] = p.start[y] + p.emit(0, y);
        }
    }
    let mut buf = vec![0.0; l];
    for i in 1..n {
        for y in 0..l {
            if !allowed(clamp, i, y) {
                continue;
            }
            for (k, b) in buf.iter_mut().enumerate() {
                *b = alpha[(i - 1) * l + k] + p.trans(k, y);
            }
            alpha[i * l + y] = log_sum_exp(&buf) + p.emit(i, y);
        }
    }
    alpha
}

/// Backward log-scores `beta[i * L + y]`, excluding position `i`'s emission.
pub fn backward(p: &Potentials, clamp: Option<&[Option<usize>]>) -> Vec<f64> {
    let (n, l) = (p.len(), p.labels);
    let mut beta = vec![f64::NEG_INFINITY; n * l];
    for y in 0..l {
        if allowed(clamp, n - 1, y) {
            beta[(n - 1) * l + y] = p.end[y];
        }
    }
    let mut buf = vec![0.0; l];
    for i in (0..n - 1).rev() {
        for y in 0..l {
            if !allowed(clamp, i, y) {
                continue;
            }
            for (k, b) in buf.iter_mut().enumerate() {
                *b = p.trans(y, k) + p.emit(i + 1, k) + beta[(i + 1) * l + k];
            }
            beta[i * l + y] = log_sum_exp(&buf);
        }
    }
    beta
}

pub fn log_partition(p: &Potentials) -> f64 {
    log_partition_clamped(p, None)
}

/// Log-sum over sequences agreeing with `clamp` at its pinned positions.
pub fn log_partition_clamped(p: &Potentials, clamp: Option<&[Option<usize>]>) -> f64 {
    let n = p.len();
    if n == 0 {
        return 0.0;
    }
    let alpha = forward(p, clamp);
    let l = p.labels;
    log_sum_exp(&(0..l).map(|y| alpha[(n - 1) * l + y] + p.end[y]).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub log_z: f64,
    /// `node[i * L + y]` = P(y_i = y).
    pub node: Vec<f64>,
    /// Expected transition counts summed over positions, `L x L`.
    pub pair: Vec<f64>,
}

pub fn marginals(p: &Potentials, clamp: Option<&[Option<usize>]>) -> Marginals {
    let (n, l) = (p.len(), p.labels);
    let alpha = forward(p, clamp);
    let beta = backward(p, clamp);
    let log_z = log_sum_exp(&(0..l).map(|y| alpha[(n - 1) * l + y] + p.end[y]).collect::<Vec<_>>());
    let node = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a + b - log_z).exp())
        .collect();
    let mut pair = vec![0.0; l * l];
    for i in 1..n {
        for a in 0..l {
            let left = alpha[(i - 1) * l + a];
            if left == f64::NEG_INFINITY {
                continue;
            }
            for b in 0..l {
                let right = beta[i * l + b];
                if right == f64::NEG_INFINITY {
                    continue;
                }
                pair[a * l + b] += (left + p.trans(a, b) + p.emit(i, b) + right - log_z).exp();
            }
        }
    }
    Marginals { log_z, node, pair }
}

/// Highest-scoring sequence. Among equal scores the lexicographically
/// smallest sequence wins, choosing labels left to right.
pub fn viterbi(p: &Potentials) -> (Vec<usize>, f64) {
    let (n, l) = (p.len(), p.labels);
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // best[i * L + y]: best score of positions i.. given y_i = y.
    let mut best = vec![0.0; n * l];
    for y in 0..l {
        best[(n - 1) * l + y] = p.emit(n - 1, y) + p.end[y];
    }
    for i in (0..n - 1).rev() {
        for y in 0..l {
            let tail = (0..l)
                .map(|k| p.trans(y, k) + best[(i + 1) * l + k])
                .fold(f64::NEG_INFINITY, f64::max);
            best[i * l + y] = p.emit(i, y) + tail;
        }
    }
    let argmax = |f: &dyn Fn(usize) -> f64| {
        let mut pick = 0;
        let mut top = f(0);
        for y in 1..l {
            let v = f(y);
            if v > top {
                top = v;
                pick = y;
            }
        }
        pick
    };
    let mut path = Vec::with_capacity(n);
    path.push(argmax(&|y| p.start[y] + best[y]));
    for i in 1..n {
        let prev = path[i - 1];
        path.push(argmax(&|y| p.trans(prev, y) + best[i * l + y]));
    }
    let s = score(p, &path).expect("path length matches");
    (path, s)
}
