//! Annotation records and how they fold into sentence labels.
//!
//! Records form an append-only log. A record targets either a sentence id or,
//! as a block annotation, a message id; block records apply to every
//! sentence their span overlaps. Span offsets are in characters.
//!
//! Folding rules:
//! - Records with the same target sentence and span supersede each other:
//!   `corrected` beats `human`, then the later `created_at`, then log order.
//! - A sentence's gold label comes from the surviving span record with the
//!   highest source rank, then the longest span, then the earliest start.
//! - The predicted label is the latest `model` record.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::Dialogue;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationSource {
    Model,
    Human,
    Corrected,
}

impl AnnotationSource {
    fn rank(self) -> u8 {
        match self {
            Self::Model => 0,
            Self::Human => 1,
            Self::Corrected => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sentence_id: String,
    pub label: String,
    pub annotator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_end: Option<usize>,
    pub created_at: DateTime<Utc>,
    pub source: AnnotationSource,
}

impl AnnotationRecord {
    fn span(&self) -> Option<(usize, usize)> {
        match (self.char_start, self.char_end) {
            (Some(s), Some(e)) => Some((s, e)),
            (Some(s), None) => Some((s, usize::MAX)),
            (None, Some(e)) => Some((0, e)),
            (None, None) => None,
        }
    }
}

pub fn read_annotations<R: BufRead>(reader: R) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

pub fn write_annotations<W: Write>(mut writer: W, records: &[AnnotationRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// One record's claim on one sentence, after resolving block targets.
struct Claim<'a> {
    sentence: usize,
    /// Sentence-relative span; `None` covers the whole sentence.
    span: Option<(usize, usize)>,
    record: &'a AnnotationRecord,
    order: usize,
}

impl Claim<'_> {
    fn len(&self, sentence_len: usize) -> usize {
        self.span.map_or(sentence_len, |(s, e)| e - s)
    }
}

/// Return a copy of `dialogue` with gold and predicted labels folded from
/// `records`. Records for other dialogues must be filtered out beforehand.
pub fn attach_annotations(dialogue: &Dialogue, records: &[AnnotationRecord]) -> Result<Dialogue> {
    let mut dangling = Vec::new();
    let mut claims = Vec::new();
    for (order, record) in records.iter().enumerate() {
        if let Some(i) = dialogue.sentence_position(&record.sentence_id) {
            let len = dialogue.sentences()[i].char_len();
            let span = match record.span() {
                None => None,
                Some((s, e)) if s < e && e <= len => (!(s == 0 && e == len)).then_some((s, e)),
                Some((s, e)) => {
                    return Err(Error::InvalidSpan {
                        sentence_id: record.sentence_id.clone(),
                        start: s,
                        end: e,
                        len,
                    })
                }
            };
            claims.push(Claim {
                sentence: i,
                span,
                record,
                order,
            });
        } else if let Some(m) = dialogue.message_position(&record.sentence_id) {
            let message_len = dialogue.messages()[m].text.chars().count();
            let (s, e) = record.span().unwrap_or((0, message_len));
            if s >= e || e > message_len {
                return Err(Error::InvalidSpan {
                    sentence_id: record.sentence_id.clone(),
                    start: s,
                    end: e,
                    len: message_len,
                });
            }
            for i in dialogue.message_sentences(m) {
                let sentence = &dialogue.sentences()[i];
                let (a, b) = (sentence.char_start, sentence.char_start + sentence.char_len());
                let (lo, hi) = (s.max(a), e.min(b));
                if lo < hi {
                    let span = (!(lo == a && hi == b)).then_some((lo - a, hi - a));
                    claims.push(Claim {
                        sentence: i,
                        span,
                        record,
                        order,
                    });
                }
            }
        } else {
            dangling.push(record.sentence_id.clone());
        }
    }
    if !dangling.is_empty() {
        dangling.sort();
        dangling.dedup();
        return Err(Error::DanglingAnnotations(dangling));
    }

    let mut gold: HashMap<(usize, Option<(usize, usize)>), &Claim> = HashMap::new();
    let mut predicted: HashMap<usize, &Claim> = HashMap::new();
    for claim in &claims {
        let rec = claim.record;
        if rec.source == AnnotationSource::Model {
            let slot = predicted.entry(claim.sentence).or_insert(claim);
            if (rec.created_at, claim.order) >= (slot.record.created_at, slot.order) {
                *slot = claim;
            }
            continue;
        }
        let slot = gold.entry((claim.sentence, claim.span)).or_insert(claim);
        let key = |c: &Claim| (c.record.source.rank(), c.record.created_at, c.order);
        if key(claim) >= key(slot) {
            *slot = claim;
        }
    }

    let mut best: HashMap<usize, &Claim> = HashMap::new();
    for claim in gold.values() {
        let len = dialogue.sentences()[claim.sentence].char_len();
        let key = |c: &Claim| {
            (
                c.record.source.rank(),
                c.len(len),
                std::cmp::Reverse(c.span.map_or(0, |s| s.0)),
                c.order,
            )
        };
        let slot = best.entry(claim.sentence).or_insert(claim);
        if key(claim) > key(slot) {
            *slot = claim;
        }
    }

    let mut out = dialogue.clone();
    for s in out.sentences_mut() {
        s.gold_label = None;
        s.gold_source = None;
        s.predicted_label = None;
    }
    let sentences = out.sentences_mut();
    for (i, claim) in best {
        sentences[i].gold_label = Some(claim.record.label.clone());
        sentences[i].gold_source = Some(claim.record.source);
    }
    for (i, claim) in predicted {
        sentences[i].predicted_label = Some(claim.record.label.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Message, AnnotationSource::*};
    use chrono::TimeZone;

    fn dialogue() -> Dialogue {
        let t = |s| Utc.timestamp_opt(s, 0).unwrap();
        Dialogue::new(
            "d",
            vec![
                Message {
                    id: "m1".into(),
                    speaker: "A".into(),
                    timestamp: t(0),
                    text: "First point. Second point. Third point.".into(),
                    dialogue_id: "d".into(),
                },
                Message {
                    id: "m2".into(),
                    speaker: "B".into(),
                    timestamp: t(10),
                    text: "Thanks for the update, and I'll get on that".into(),
                    dialogue_id: "d".into(),
                },
            ],
        )
    }

    fn rec(target: &str, label: &str, at: i64, source: AnnotationSource) -> AnnotationRecord {
        AnnotationRecord {
            sentence_id: target.into(),
            label: label.into(),
            annotator: "ann".into(),
            char_start: None,
            char_end: None,
            created_at: Utc.timestamp_opt(at, 0).unwrap(),
            source,
        }
    }

    fn golds(d: &Dialogue) -> Vec<Option<&str>> {
        d.sentences().iter().map(|s| s.gold_label.as_deref()).collect()
    }

    #[test]
    fn block_record_covers_message() {
        let d = dialogue();
        let out = attach_annotations(&d, &[rec("m1", "Inform", 1, Human)]).unwrap();
        assert_eq!(golds(&out), [Some("Inform"), Some("Inform"), Some("Inform"), None]);
    }

    #[test]
    fn no_records_no_labels() {
        let out = attach_annotations(&dialogue(), &[]).unwrap();
        assert!(golds(&out).iter().all(Option::is_none));
    }

    #[test]
    fn corrected_supersedes_human() {
        let d = dialogue();
        let out = attach_annotations(
            &d,
            &[
                rec("m2/0", "Social-Appreciation", 1, Human),
                rec("m2/0", "Acknowledge-Accept", 2, Corrected),
            ],
        )
        .unwrap();
        assert_eq!(out.sentences()[3].gold_label.as_deref(), Some("Acknowledge-Accept"));
        assert_eq!(out.sentences()[3].gold_source, Some(Corrected));
    }

    #[test]
    fn later_human_supersedes_earlier() {
        let d = dialogue();
        let out = attach_annotations(
            &d,
            &[rec("m2/0", "Social", 5, Human), rec("m2/0", "Inform", 3, Human)],
        )
        .unwrap();
        assert_eq!(out.sentences()[3].gold_label.as_deref(), Some("Social"));
    }

    #[test]
    fn longest_clause_span_wins() {
        let d = dialogue();
        // "Thanks for the update," is 22 chars; " and I'll get on that" is 21.
        let mut first = rec("m2/0", "Social-Appreciation", 1, Human);
        first.char_start = Some(0);
        first.char_end = Some(22);
        let mut second = rec("m2/0", "Acknowledge-Accept", 2, Human);
        second.char_start = Some(23);
        second.char_end = Some(43);
        let out = attach_annotations(&d, &[second, first]).unwrap();
        assert_eq!(out.sentences()[3].gold_label.as_deref(), Some("Social-Appreciation"));
    }

    #[test]
    fn model_records_fill_predictions() {
        let d = dialogue();
        let out = attach_annotations(
            &d,
            &[rec("m1/0", "Query", 1, Model), rec("m1/0", "Inform", 2, Model)],
        )
        .unwrap();
        assert_eq!(out.sentences()[0].predicted_label.as_deref(), Some("Inform"));
        assert_eq!(out.sentences()[0].gold_label, None);
        assert_eq!(out.sentences()[0].effective_label(), Some(("Inform", Model)));
    }

    #[test]
    fn dangling_ids_are_all_listed() {
        let err = attach_annotations(
            &dialogue(),
            &[rec("zz", "Inform", 1, Human), rec("m1/0", "Inform", 1, Human), rec("aa", "Inform", 1, Human)],
        )
        .unwrap_err();
        match err {
            Error::DanglingAnnotations(ids) => assert_eq!(ids, ["aa", "zz"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_span_rejected() {
        let mut r = rec("m1/0", "Inform", 1, Human);
        r.char_start = Some(5);
        r.char_end = Some(5);
        assert!(matches!(
            attach_annotations(&dialogue(), &[r.clone()]),
            Err(Error::InvalidSpan { .. })
        ));
        r.char_end = Some(500);
        assert!(attach_annotations(&dialogue(), &[r]).is_err());
    }

    #[test]
    fn idempotent() {
        let d = dialogue();
        let records = [rec("m1", "Inform", 1, Human), rec("m2/0", "Social", 2, Human)];
        let once = attach_annotations(&d, &records).unwrap();
        let twice = attach_annotations(&once, &records).unwrap();
        assert_eq!(once, twice);
    }
}
