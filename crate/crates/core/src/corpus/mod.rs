//! Chat transcripts as ordered, speaker-attributed sentence streams.
//!
//! A [`Dialogue`] is one channel batch: messages sorted by `(timestamp, id)`
//! and the sentence units the splitter produced for each of them. Dialogues
//! are immutable once built; attaching annotations returns a new view.

mod annotation;
mod slack;
mod split;
mod splitter;
mod stats;
mod transcript;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::ops::Range;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use annotation::{
    attach_annotations, read_annotations, write_annotations, AnnotationRecord, AnnotationSource,
};
pub use slack::{parse_slack_export, parse_slack_exports, SlackImport, UserMap};
pub use split::{split_corpus, CorpusSplit, Partition, SplitRatios};
pub use splitter::{is_emoticon, split_sentences, split_text, TextPiece};
pub use stats::{corpus_stats, LabelProportions};
pub use transcript::{parse_transcript, parse_transcripts, write_transcript, TranscriptRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub speaker: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    pub dialogue_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub message_id: String,
    pub index_in_message: usize,
    pub index_in_dialogue: usize,
    pub text: String,
    pub is_code_block: bool,
    /// Character offset of this sentence within its message text.
    pub char_start: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_source: Option<AnnotationSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_label: Option<String>,
}

impl Sentence {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn is_emoticon(&self) -> bool {
        is_emoticon(&self.text)
    }

    /// Gold label when present, otherwise the prediction.
    pub fn effective_label(&self) -> Option<(&str, AnnotationSource)> {
        match (&self.gold_label, &self.predicted_label) {
            (Some(gold), _) => Some((gold, self.gold_source.unwrap_or(AnnotationSource::Human))),
            (None, Some(pred)) => Some((pred, AnnotationSource::Model)),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dialogue {
    id: String,
    messages: Vec<Message>,
    sentences: Vec<Sentence>,
    message_sentences: Vec<Range<usize>>,
    sentence_message: Vec<usize>,
    sentence_index: HashMap<String, usize>,
    message_index: HashMap<String, usize>,
    reordered: bool,
}

impl PartialEq for Dialogue {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.messages == other.messages && self.sentences == other.sentences
    }
}

impl Dialogue {
    /// Sort messages by `(timestamp, id)` and split them into sentences.
    pub fn new(id: impl Into<String>, mut messages: Vec<Message>) -> Self {
        let id = id.into();
        let reordered = messages
            .windows(2)
            .any(|w| message_order(&w[0], &w[1]) == Ordering::Greater);
        messages.sort_by(message_order);

        let mut sentences = Vec::new();
        let mut message_sentences = Vec::with_capacity(messages.len());
        let mut sentence_message = Vec::new();
        for (m, message) in messages.iter().enumerate() {
            let start = sentences.len();
            for (k, piece) in split_text(&message.text).into_iter().enumerate() {
                sentences.push(Sentence {
                    id: format!("{}/{}", message.id, k),
                    message_id: message.id.clone(),
                    index_in_message: k,
                    index_in_dialogue: sentences.len(),
                    text: piece.text,
                    is_code_block: piece.is_code,
                    char_start: piece.char_start,
                    gold_label: None,
                    gold_source: None,
                    predicted_label: None,
                });
                sentence_message.push(m);
            }
            message_sentences.push(start..sentences.len());
        }
        let sentence_index = sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        let message_index = messages
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.clone(), i))
            .collect();
        Self {
            id,
            messages,
            sentences,
            message_sentences,
            sentence_message,
            sentence_index,
            message_index,
            reordered,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// True when the input was not already in `(timestamp, id)` order.
    pub fn was_reordered(&self) -> bool {
        self.reordered
    }

    /// Range of sentence indices belonging to message `m`.
    pub fn message_sentences(&self, m: usize) -> Range<usize> {
        self.message_sentences[m].clone()
    }

    /// Index of the message owning sentence `s`.
    pub fn message_of(&self, s: usize) -> usize {
        self.sentence_message[s]
    }

    pub fn sentence_position(&self, id: &str) -> Option<usize> {
        self.sentence_index.get(id).copied()
    }

    pub fn message_position(&self, id: &str) -> Option<usize> {
        self.message_index.get(id).copied()
    }

    pub fn sentence(&self, id: &str) -> Option<&Sentence> {
        self.sentence_position(id).map(|i| &self.sentences[i])
    }

    pub(crate) fn sentences_mut(&mut self) -> &mut [Sentence] {
        &mut self.sentences
    }

    /// Replace model predictions, keyed by sentence position.
    pub fn with_predictions(&self, predictions: &[(usize, String)]) -> Self {
        let mut out = self.clone();
        for (i, label) in predictions {
            out.sentences[*i].predicted_label = Some(label.clone());
        }
        out
    }
}

/// Ordering used for messages within a dialogue: timestamp, then id with
/// digit runs compared numerically so `d:9` sorts before `d:10`.
pub fn message_order(a: &Message, b: &Message) -> Ordering {
    a.timestamp
        .cmp(&b.timestamp)
        .then_with(|| natural_cmp(&a.id, &b.id))
}

fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut x, mut y) = (a.as_bytes(), b.as_bytes());
    loop {
        match (x.first(), y.first()) {
            (None, None) => return a.cmp(b),
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(c), Some(d)) if c.is_ascii_digit() && d.is_ascii_digit() => {
                let xn = x.iter().take_while(|c| c.is_ascii_digit()).count();
                let yn = y.iter().take_while(|c| c.is_ascii_digit()).count();
                let (xd, yd) = (trim_zeros(&x[..xn]), trim_zeros(&y[..yn]));
                let ord = xd.len().cmp(&yd.len()).then_with(|| xd.cmp(yd));
                if ord != Ordering::Equal {
                    return ord;
                }
                x = &x[xn..];
                y = &y[yn..];
            }
            (Some(c), Some(d)) => {
                if c != d {
                    return c.cmp(d);
                }
                x = &x[1..];
                y = &y[1..];
            }
        }
    }
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let start = digits.iter().take_while(|&&d| d == b'0').count();
    &digits[start.min(digits.len().saturating_sub(1))..]
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn msg(id: &str, secs: i64, text: &str) -> Message {
        Message {
            id: id.into(),
            speaker: "A".into(),
            timestamp: Utc.timestamp_opt(secs, 0).unwrap(),
            text: text.into(),
            dialogue_id: "d".into(),
        }
    }

    #[test]
    fn natural_id_order() {
        assert_eq!(natural_cmp("d:9", "d:10"), Ordering::Less);
        assert_eq!(natural_cmp("d:10", "d:10"), Ordering::Equal);
        assert_eq!(natural_cmp("a", "b"), Ordering::Less);
        assert_eq!(natural_cmp("x1y", "x01y"), Ordering::Greater);
    }

    #[test]
    fn sorts_and_indexes() {
        let d = Dialogue::new(
            "d",
            vec![msg("d:2", 5, "b. c"), msg("d:1", 1, "a"), msg("d:3", 5, "e")],
        );
        assert!(d.was_reordered());
        let ids: Vec<_> = d.messages().iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, ["d:1", "d:2", "d:3"]);
        let texts: Vec<_> = d.sentences().iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["a", "b.", "c", "e"]);
        for (i, s) in d.sentences().iter().enumerate() {
            assert_eq!(s.index_in_dialogue, i);
        }
        assert_eq!(d.message_sentences(1), 1..3);
        assert_eq!(d.message_of(2), 1);
        assert_eq!(d.sentence("d:2/1").unwrap().text, "c");
        assert_eq!(d.sentence("d:2/1").unwrap().char_start, 3);
    }
}
