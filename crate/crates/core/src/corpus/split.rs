//! Train/dev/test partitioning over ordered windows.
//!
//! Windows are never split. Dev is one contiguous run and test is two
//! contiguous runs, placed at seeded random positions; everything else is
//! train. Sizes are the ratio targets rounded to the nearest window.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::Window;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.80,
            dev: 0.05,
            test: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub ratios: SplitRatios,
    pub seed: u64,
    /// Window-index runs making up dev and test, in window order.
    pub dev_runs: Vec<Range<usize>>,
    pub test_runs: Vec<Range<usize>>,
}

impl CorpusSplit {
    pub fn partition_of(&self, window_index: usize) -> Partition {
        if self.dev_runs.iter().any(|r| r.contains(&window_index)) {
            Partition::Dev
        } else if self.test_runs.iter().any(|r| r.contains(&window_index)) {
            Partition::Test
        } else {
            Partition::Train
        }
    }

    pub fn partition_of_id(&self, window_id: &str) -> Option<Partition> {
        let has = |v: &[String]| v.iter().any(|w| w == window_id);
        if has(&self.train) {
            Some(Partition::Train)
        } else if has(&self.dev) {
            Some(Partition::Dev)
        } else if has(&self.test) {
            Some(Partition::Test)
        } else {
            None
        }
    }
}

pub fn split_corpus(windows: &[Window], ratios: SplitRatios, seed: u64) -> Result<CorpusSplit> {
    let sum = ratios.train + ratios.dev + ratios.test;
    let ok = [ratios.train, ratios.dev, ratios.test]
        .iter()
        .all(|r| r.is_finite() && *r >= 0.0);
    if !ok || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "ratios must be non-negative and sum to 1, got {sum}"
        )));
    }
    let n = windows.len();
    if n < 4 {
        return Err(Error::Split(format!("need at least 4 windows, got {n}")));
    }

    let dev = (n as f64 * ratios.dev).round() as usize;
    let test = ((n as f64 * ratios.test).round() as usize).min(n - dev);
    let (dev_runs, test_runs) = place_runs(n, dev, test, seed);

    let mut split = CorpusSplit {
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
        ratios,
        seed,
        dev_runs,
        test_runs,
    };
    for (i, w) in windows.iter().enumerate() {
        let bucket = match split.partition_of(i) {
            Partition::Train => &mut split.train,
            Partition::Dev => &mut split.dev,
            Partition::Test => &mut split.test,
        };
        bucket.push(w.id.clone());
    }
    Ok(split)
}

/// Arrange one dev run and up to two test runs among `n` slots. The train
/// remainder is spread over the gaps between runs; two test runs are kept
/// apart by at least one train window whenever one is available.
fn place_runs(n: usize, dev: usize, test: usize, seed: u64) -> (Vec<Range<usize>>, Vec<Range<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = n - dev - test;

    #[derive(Clone, Copy, PartialEq)]
    enum Run {
        Dev(usize),
        Test(usize),
    }
    let mut runs = Vec::new();
    if dev > 0 {
        runs.push(Run::Dev(dev));
    }
    let separable = test >= 2 && train >= 1;
    if separable {
        runs.push(Run::Test(test.div_ceil(2)));
        runs.push(Run::Test(test / 2));
    } else if test > 0 {
        runs.push(Run::Test(test));
    }
    runs.shuffle(&mut rng);

    // Gaps before, between and after the runs.
    let mut gaps = vec![0usize; runs.len() + 1];
    let mut free = train;
    let test_positions: Vec<usize> = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| matches!(r, Run::Test(_)))
        .map(|(i, _)| i)
        .collect();
    if separable && test_positions[1] == test_positions[0] + 1 {
        gaps[test_positions[1]] = 1;
        free -= 1;
    }
    for _ in 0..free {
        let g = rng.gen_range(0..gaps.len());
        gaps[g] += 1;
    }

    let (mut dev_runs, mut test_runs) = (Vec::new(), Vec::new());
    let mut cursor = gaps[0];
    for (i, run) in runs.iter().enumerate() {
        match *run {
            Run::Dev(len) => dev_runs.push(cursor..cursor + len),
            Run::Test(len) => test_runs.push(cursor..cursor + len),
        }
        cursor += match *run {
            Run::Dev(len) | Run::Test(len) => len,
        } + gaps[i + 1];
    }
    debug_assert_eq!(cursor, n);
    (dev_runs, test_runs)
}
