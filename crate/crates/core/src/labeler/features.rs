//! Hashed sparse features for one sentence in its window.

use std::hash::Hasher;

use fnv::FnvHasher;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::corpus::{is_emoticon, Dialogue};
use crate::segmentation::Window;

/// Published hashing seed; model files record it.
pub const FEATURE_SEED: u64 = 0x6368_6174_6163_7431;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub dim: usize,
    pub seed: u64,
    pub char_ngram_min: usize,
    pub char_ngram_max: usize,
    pub word_bigrams: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            dim: 1 << 18,
            seed: FEATURE_SEED,
            char_ngram_min: 3,
            char_ngram_max: 5,
            word_bigrams: true,
        }
    }
}

impl FeatureConfig {
    pub fn index_of(&self, name: &str) -> u32 {
        let mut h = FnvHasher::with_key(self.seed);
        h.write(name.as_bytes());
        (h.finish() % self.dim as u64) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    /// Sum duplicate indices, sort, and drop zeros.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut out = Self::default();
        for (i, v) in pairs {
            if out.indices.last() == Some(&i) {
                *out.values.last_mut().unwrap() += v;
            } else {
                out.indices.push(i);
                out.values.push(v);
            }
        }
        let (indices, values) = out
            .indices
            .into_iter()
            .zip(out.values)
            .filter(|(_, v)| *v != 0.0)
            .unzip();
        Self { indices, values }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }
}

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}_']+|[^\s\p{L}\p{N}_']").unwrap())
}

/// Lowercased word and punctuation tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    token_re().find_iter(&lower).map(|m| m.as_str().to_string()).collect()
}

/// Word, bigram and character n-gram strings for a piece of text.
pub(crate) fn text_grams(text: &str, config: &FeatureConfig) -> Vec<String> {
    let tokens = tokenize(text);
    let mut out = Vec::with_capacity(tokens.len() * 8);
    for t in &tokens {
        out.push(format!("w:{t}"));
    }
    if config.word_bigrams {
        for pair in tokens.windows(2) {
            out.push(format!("b:{} {}", pair[0], pair[1]));
        }
    }
    for t in &tokens {
        if !t.chars().next().is_some_and(|c| c.is_alphanumeric()) {
            continue;
        }
        let chars: Vec<char> = std::iter::once('<')
            .chain(t.chars())
            .chain(std::iter::once('>'))
            .collect();
        for n in config.char_ngram_min..=config.char_ngram_max {
            for gram in chars.windows(n) {
                out.push(format!("c:{}", gram.iter().collect::<String>()));
            }
        }
    }
    out
}

fn gap_bucket(secs: i64) -> &'static str {
    match secs {
        s if s < 60 => "gap:<1m",
        s if s < 600 => "gap:<10m",
        s if s < 3600 => "gap:<1h",
        _ => "gap:>=1h",
    }
}

/// Features for the sentence at `position` within `window`.
pub fn featurize(dialogue: &Dialogue, window: &Window, position: usize, config: &FeatureConfig) -> FeatureVector {
    let i = window.sentences.start + position;
    let sentence = &dialogue.sentences()[i];
    let grams = text_grams(&sentence.text, config);

    let text_block = FeatureVector::from_pairs(grams.iter().map(|g| (config.index_of(g), 1.0)).collect());
    let mut pairs = Vec::with_capacity(text_block.len() + 8);
    let norm = text_block.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        pairs.extend(text_block.iter().map(|(i, v)| (i as u32, v / norm)));
    }

    let mut flags = vec!["i:bias"];
    if sentence.is_code_block {
        flags.push("i:code");
    }
    if is_emoticon(&sentence.text) {
        flags.push("i:emoticon");
    }
    if sentence.text.contains('?') {
        flags.push("i:question");
    }
    if sentence.text.split_whitespace().any(|w| w.starts_with('@') && w.len() > 1) {
        flags.push("i:mention");
    }
    if sentence.index_in_message == 0 {
        flags.push("i:message-initial");
    }
    if position == 0 {
        flags.push("i:window-initial");
    } else {
        let m = dialogue.message_of(i);
        let prev = dialogue.message_of(i - 1);
        let (cur, before) = (&dialogue.messages()[m], &dialogue.messages()[prev]);
        if cur.speaker != before.speaker {
            flags.push("i:speaker-change");
        }
        flags.push(gap_bucket((cur.timestamp - before.timestamp).num_seconds()));
    }
    pairs.extend(flags.iter().map(|f| (config.index_of(f), 1.0)));
    FeatureVector::from_pairs(pairs)
}

pub fn featurize_window(dialogue: &Dialogue, window: &Window, config: &FeatureConfig) -> Vec<FeatureVector> {
    (0..window.len())
        .map(|p| featurize(dialogue, window, p, config))
        .collect()
}
