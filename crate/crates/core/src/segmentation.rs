//! Windows: contiguous runs of whole messages decoded jointly.
//!
//! Limits are counted in sentences. A window closes after the message that
//! brings it to the line limit, so it can overflow by part of one message.
//! Time and speaker strategies also close a window *before* a message that
//! arrives after a long gap or brings in a speaker beyond the limit.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Message,
    Static,
    Time,
    Speaker,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Message => "message",
            Self::Static => "static",
            Self::Time => "time",
            Self::Speaker => "speaker",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "message" => Ok(Self::Message),
            "static" => Ok(Self::Static),
            "time" => Ok(Self::Time),
            "speaker" => Ok(Self::Speaker),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

pub const DEFAULT_GAP_LIMIT: Duration = Duration::from_secs(3600);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SegmentParams {
    /// `None` means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_secs")]
    pub gap_limit: Option<Duration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_limit: Option<usize>,
}

impl SegmentParams {
    /// Defaults for a strategy: 10 lines, 1 hour, 2 speakers where relevant.
    pub fn for_strategy(strategy: Strategy) -> Self {
        match strategy {
            Strategy::Message => Self::default(),
            Strategy::Static => Self {
                line_limit: Some(10),
                ..Self::default()
            },
            Strategy::Time => Self {
                line_limit: Some(10),
                gap_limit: Some(DEFAULT_GAP_LIMIT),
                ..Self::default()
            },
            Strategy::Speaker => Self {
                line_limit: Some(10),
                speaker_limit: Some(2),
                ..Self::default()
            },
        }
    }
}

mod opt_secs {
    use super::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_f64(d.as_secs_f64()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        let secs = Option::<f64>::deserialize(d)?;
        secs.map(|s| Duration::try_from_secs_f64(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub id: String,
    pub dialogue_id: String,
    pub sentence_ids: Vec<String>,
    /// Sentence index range within the dialogue.
    pub sentences: Range<usize>,
    pub strategy: Strategy,
    pub params: SegmentParams,
}

impl Window {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

pub fn segment_message(dialogue: &Dialogue) -> Vec<Window> {
    segment(dialogue, Strategy::Message, &SegmentParams::default())
}

pub fn segment_static(dialogue: &Dialogue, line_limit: usize) -> Vec<Window> {
    let params = SegmentParams {
        line_limit: Some(line_limit),
        ..SegmentParams::default()
    };
    segment(dialogue, Strategy::Static, &params)
}

pub fn segment_time(dialogue: &Dialogue, line_limit: usize, gap_limit: Duration) -> Vec<Window> {
    let params = SegmentParams {
        line_limit: Some(line_limit),
        gap_limit: Some(gap_limit),
        ..SegmentParams::default()
    };
    segment(dialogue, Strategy::Time, &params)
}

pub fn segment_speaker(dialogue: &Dialogue, line_limit: usize, speaker_limit: usize) -> Vec<Window> {
    let params = SegmentParams {
        line_limit: Some(line_limit),
        speaker_limit: Some(speaker_limit),
        ..SegmentParams::default()
    };
    segment(dialogue, Strategy::Speaker, &params)
}

pub fn segment(dialogue: &Dialogue, strategy: Strategy, params: &SegmentParams) -> Vec<Window> {
    segment_range(dialogue, 0..dialogue.messages().len(), strategy, params)
}

/// Segment only the messages in `messages`. Used to re-segment a slice of a
/// dialogue without letting windows cross its edges.
pub fn segment_range(
    dialogue: &Dialogue,
    messages: Range<usize>,
    strategy: Strategy,
    params: &SegmentParams,
) -> Vec<Window> {
    let line_limit = match strategy {
        Strategy::Message => 1,
        _ => params.line_limit.unwrap_or(usize::MAX).max(1),
    };
    let gap_limit = match strategy {
        Strategy::Time => params
            .gap_limit
            .and_then(|g| chrono::TimeDelta::from_std(g).ok()),
        _ => None,
    };
    let speaker_limit = match strategy {
        Strategy::Speaker => params.speaker_limit.map(|k| k.max(1)),
        _ => None,
    };

    let msgs = dialogue.messages();
    let mut out = Vec::new();
    let mut start = messages.start;
    let mut count = 0usize;
    let mut speakers: Vec<&str> = Vec::new();
    let close = |from: usize, to: usize, out: &mut Vec<Window>| {
        let sentences = dialogue.message_sentences(from).start..dialogue.message_sentences(to - 1).end;
        out.push(Window {
            id: format!("{}@{}", dialogue.id(), sentences.start),
            dialogue_id: dialogue.id().to_string(),
            sentence_ids: dialogue.sentences()[sentences.clone()]
                .iter()
                .map(|s| s.id.clone())
                .collect(),
            sentences,
            strategy,
            params: *params,
        });
    };

    for m in messages.clone() {
        let speaker = msgs[m].speaker.as_str();
        if m > start {
            let gap_break = gap_limit.is_some_and(|g| msgs[m].timestamp - msgs[m - 1].timestamp > g);
            let speaker_break =
                speaker_limit.is_some_and(|k| !speakers.contains(&speaker) && speakers.len() >= k);
            if gap_break || speaker_break {
                close(start, m, &mut out);
                start = m;
                count = 0;
                speakers.clear();
            }
        }
        count += dialogue.message_sentences(m).len();
        if !speakers.contains(&speaker) {
            speakers.push(speaker);
        }
        if count >= line_limit {
            close(start, m + 1, &mut out);
            start = m + 1;
            count = 0;
            speakers.clear();
        }
    }
    if start < messages.end {
        close(start, messages.end, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Message;
    use chrono::{TimeZone, Utc};

    fn dialogue(spec: &[(&str, i64, usize)]) -> Dialogue {
        let messages = spec
            .iter()
            .enumerate()
            .map(|(i, &(speaker, secs, n))| Message {
                id: format!("m{i:03}"),
                speaker: speaker.into(),
                timestamp: Utc.timestamp_opt(secs, 0).unwrap(),
                text: (0..n).map(|k| format!("Line {k}.")).collect::<Vec<_>>().join(" "),
                dialogue_id: "d".into(),
            })
            .collect();
        Dialogue::new("d", messages)
    }

    fn sizes(ws: &[Window]) -> Vec<usize> {
        ws.iter().map(Window::len).collect()
    }

    #[test]
    fn message_windows() {
        let d = dialogue(&[("PG", 0, 1), ("BR", 1, 1), ("ER", 2, 1)]);
        assert_eq!(sizes(&segment_message(&d)), [1, 1, 1]);
        let d = dialogue(&[("A", 0, 4)]);
        assert_eq!(sizes(&segment_message(&d)), [4]);
        assert!(segment_message(&dialogue(&[])).is_empty());
    }

    #[test]
    fn static_overflow() {
        let d = dialogue(&[("A", 0, 3), ("A", 1, 3), ("A", 2, 3), ("A", 3, 3)]);
        assert_eq!(sizes(&segment_static(&d, 5)), [6, 6]);
        let d = dialogue(&[("A", 0, 1); 12]);
        assert_eq!(sizes(&segment_static(&d, 10)), [10, 2]);
        assert_eq!(sizes(&segment_static(&d, usize::MAX)), [12]);
    }

    #[test]
    fn time_gap() {
        let d = dialogue(&[("A", 0, 1), ("A", 1800, 1), ("A", 5700, 1)]);
        assert_eq!(sizes(&segment_time(&d, 10, DEFAULT_GAP_LIMIT)), [2, 1]);
        let d = dialogue(&[("A", 0, 1); 12]);
        let close = dialogue(&(0..12).map(|i| ("A", i, 1)).collect::<Vec<_>>());
        assert_eq!(sizes(&segment_time(&close, 10, DEFAULT_GAP_LIMIT)), sizes(&segment_static(&d, 10)));
    }

    #[test]
    fn speaker_limit() {
        let d = dialogue(&[("PG", 0, 1), ("BR", 120, 1), ("ER", 300, 1)]);
        let ws = segment_speaker(&d, 10, 2);
        assert_eq!(sizes(&ws), [2, 1]);
        let d = dialogue(&[("A", 0, 1); 4]);
        assert_eq!(sizes(&segment_speaker(&d, 10, 2)), [4]);
        let alternating: Vec<_> = (0..30).map(|i| (if i % 2 == 0 { "A" } else { "B" }, i, 1)).collect();
        assert_eq!(sizes(&segment_speaker(&dialogue(&alternating), 10, 2)), [10, 10, 10]);
    }

    #[test]
    fn params_round_trip() {
        let p = SegmentParams::for_strategy(Strategy::Time);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"line_limit":10,"gap_limit":3600.0}"#);
        assert_eq!(serde_json::from_str::<SegmentParams>(&json).unwrap(), p);
    }
}
