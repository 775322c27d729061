//! Train/dev/test comparison of segmentation configurations.
//!
//! The split is drawn once over static 10-line windows. Each contiguous run
//! of same-partition windows covers a message range, and every arm
//! re-segments those ranges with its own strategy, so all arms see the same
//! sentences in each partition.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{split_corpus, Dialogue, Partition, SplitRatios};
use crate::error::{Error, Result};
use crate::labeler::{evaluate, train_baseline, train_crf, BaselineConfig, SequenceModel, TrainConfig};
use crate::segmentation::{segment, segment_range, SegmentParams, Strategy, Window};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Arm {
    Crf {
        name: String,
        strategy: Strategy,
        params: SegmentParams,
    },
    Baseline {
        name: String,
    },
}

impl Arm {
    pub fn name(&self) -> &str {
        match self {
            Arm::Crf { name, .. } | Arm::Baseline { name } => name,
        }
    }

    pub fn crf(name: &str, strategy: Strategy, params: SegmentParams) -> Self {
        Arm::Crf {
            name: name.into(),
            strategy,
            params,
        }
    }

    /// Baseline, 1-line, 5-line, 10-line, 10-line-speaker and 10-line-time.
    pub fn standard() -> Vec<Arm> {
        let lines = |n| SegmentParams {
            line_limit: Some(n),
            ..SegmentParams::default()
        };
        vec![
            Arm::Baseline {
                name: "baseline".into(),
            },
            Arm::crf("1-line", Strategy::Message, SegmentParams::default()),
            Arm::crf("5-line", Strategy::Static, lines(5)),
            Arm::crf("10-line", Strategy::Static, lines(10)),
            Arm::crf("10-line-speaker", Strategy::Speaker, SegmentParams::for_strategy(Strategy::Speaker)),
            Arm::crf("10-line-time", Strategy::Time, SegmentParams::for_strategy(Strategy::Time)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub crf: TrainConfig,
    pub baseline: BaselineConfig,
    pub arms: Vec<Arm>,
}

impl ExperimentConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ratios: SplitRatios::default(),
            crf: TrainConfig::with_seed(seed),
            baseline: BaselineConfig::with_seed(seed),
            arms: Arm::standard(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub name: String,
    pub dev_accuracy: f64,
    pub test_accuracy: f64,
    /// Epochs run; `None` for the baseline.
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub test_sentences: usize,
    /// Most frequent reduced label among training sentences.
    pub majority_label: String,
    pub majority_dev: f64,
    pub majority_test: f64,
    pub arms: Vec<ArmResult>,
}

impl ExperimentReport {
    pub fn arm(&self, name: &str) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.name == name)
    }
}

/// Message ranges per dialogue for each partition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartitionRanges {
    pub train: Vec<(usize, Range<usize>)>,
    pub dev: Vec<(usize, Range<usize>)>,
    pub test: Vec<(usize, Range<usize>)>,
}

impl PartitionRanges {
    fn get(&self, p: Partition) -> &[(usize, Range<usize>)] {
        match p {
            Partition::Train => &self.train,
            Partition::Dev => &self.dev,
            Partition::Test => &self.test,
        }
    }
}

/// Split static 10-line windows and return the message ranges of each run.
pub fn reference_ranges(dialogues: &[Dialogue], ratios: SplitRatios, seed: u64) -> Result<PartitionRanges> {
    let params = SegmentParams {
        line_limit: Some(10),
        ..SegmentParams::default()
    };
    let mut windows = Vec::new();
    let mut owner = Vec::new();
    for (d, dialogue) in dialogues.iter().enumerate() {
        let ws = segment(dialogue, Strategy::Static, &params);
        owner.extend(std::iter::repeat_n(d, ws.len()));
        windows.extend(ws);
    }
    let split = split_corpus(&windows, ratios, seed)?;
    let mut out = PartitionRanges::default();
    let mut i = 0;
    while i < windows.len() {
        let (d, p) = (owner[i], split.partition_of(i));
        let mut j = i + 1;
        while j < windows.len() && owner[j] == d && split.partition_of(j) == p {
            j += 1;
        }
        let dialogue = &dialogues[d];
        let first = dialogue.message_of(windows[i].sentences.start);
        let last = dialogue.message_of(windows[j - 1].sentences.end - 1);
        let run = (d, first..last + 1);
        match p {
            Partition::Train => out.train.push(run),
            Partition::Dev => out.dev.push(run),
            Partition::Test => out.test.push(run),
        }
        i = j;
    }
    Ok(out)
}

fn windows_for(
    dialogues: &[Dialogue],
    ranges: &[(usize, Range<usize>)],
    strategy: Strategy,
    params: &SegmentParams,
) -> Vec<Window> {
    ranges
        .iter()
        .flat_map(|(d, r)| segment_range(&dialogues[*d], r.clone(), strategy, params))
        .collect()
}

/// Collapsed gold labels of the sentences in `ranges`.
fn gold_labels<'a>(
    dialogues: &'a [Dialogue],
    ranges: &[(usize, Range<usize>)],
    taxonomy: &'a Taxonomy,
) -> Result<Vec<(&'a str, &'a str)>> {
    let mut out = Vec::new();
    for (d, r) in ranges {
        let dialogue = &dialogues[*d];
        let sentences = dialogue.message_sentences(r.start).start..dialogue.message_sentences(r.end - 1).end;
        for s in &dialogue.sentences()[sentences] {
            if let Some(g) = &s.gold_label {
                let c = taxonomy.collapse(g).map_err(|_| Error::LabelOutsideModel(g.clone()))?;
                out.push((s.text.as_str(), c));
            }
        }
    }
    Ok(out)
}

fn rate(gold: &[(&str, &str)], label: &str) -> f64 {
    gold.iter().filter(|(_, g)| *g == label).count() as f64 / gold.len().max(1) as f64
}

pub fn run_experiment(dialogues: &[Dialogue], taxonomy: &Taxonomy, config: &ExperimentConfig) -> Result<ExperimentReport> {
    let ranges = reference_ranges(dialogues, config.ratios, config.seed)?;
    let train_gold = gold_labels(dialogues, &ranges.train, taxonomy)?;
    let dev_gold = gold_labels(dialogues, &ranges.dev, taxonomy)?;
    let test_gold = gold_labels(dialogues, &ranges.test, taxonomy)?;

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for (_, g) in &train_gold {
        *counts.entry(g).or_default() += 1;
    }
    let majority = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(l, _)| l.to_string())
        .ok_or(Error::EmptyTrainingSet)?;

    let mut arms = Vec::with_capacity(config.arms.len());
    for arm in &config.arms {
        let result = match arm {
            Arm::Baseline { name } => {
                let examples: Vec<(String, String)> = train_gold
                    .iter()
                    .map(|(t, g)| (t.to_string(), g.to_string()))
                    .collect();
                let model = train_baseline(&examples, taxonomy.reduced_set().to_vec(), taxonomy.hash(), &config.baseline)?;
                let score = |gold: &[(&str, &str)]| {
                    gold.iter().filter(|(t, g)| model.predict(t) == *g).count() as f64 / gold.len().max(1) as f64
                };
                ArmResult {
                    name: name.clone(),
                    dev_accuracy: score(&dev_gold),
                    test_accuracy: score(&test_gold),
                    epochs: None,
                }
            }
            Arm::Crf { name, strategy, params } => {
                let template = SequenceModel::for_taxonomy(taxonomy, config.crf.features.clone());
                let build = |p: Partition| {
                    let ws = windows_for(dialogues, ranges.get(p), *strategy, params);
                    template.instances(dialogues, &ws, taxonomy, None)
                };
                let (train, dev, test) = (build(Partition::Train)?, build(Partition::Dev)?, build(Partition::Test)?);
                let (model, report) = train_crf(&train, &dev, taxonomy, &config.crf)?;
                ArmResult {
                    name: name.clone(),
                    dev_accuracy: evaluate(&model, &dev)?.accuracy,
                    test_accuracy: evaluate(&model, &test)?.accuracy,
                    epochs: Some(report.epochs.len()),
                }
            }
        };
        log::info!(
            "{}: dev {:.4} test {:.4}",
            result.name,
            result.dev_accuracy,
            result.test_accuracy
        );
        arms.push(result);
    }

    Ok(ExperimentReport {
        seed: config.seed,
        train_sentences: train_gold.len(),
        dev_sentences: dev_gold.len(),
        test_sentences: test_gold.len(),
        majority_dev: rate(&dev_gold, &majority),
        majority_test: rate(&test_gold, &majority),
        majority_label: majority,
        arms,
    })
}
