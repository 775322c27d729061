//! Native JSON-lines transcript format.
//!
//! One message per line: `ts` (RFC 3339 string or epoch seconds), `speaker`,
//! `text`, optional `id`, optional `dialogue_id`. Blank lines are ignored.

use std::io::{BufRead, Write};

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Dialogue, Message};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub ts: Value,
    pub speaker: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_id: Option<String>,
}

/// Parse a transcript holding a single dialogue. Records that name a
/// different `dialogue_id` are rejected.
pub fn parse_transcript<R: BufRead>(reader: R, dialogue_id: &str) -> Result<Dialogue> {
    let mut messages = Vec::new();
    for item in records(reader) {
        let (line, record) = item?;
        if let Some(other) = record.dialogue_id.as_deref() {
            if other != dialogue_id {
                return Err(Error::MalformedRecord {
                    line,
                    reason: format!("dialogue_id `{other}` differs from `{dialogue_id}`"),
                });
            }
        }
        messages.push(to_message(line, record, dialogue_id)?);
    }
    Ok(Dialogue::new(dialogue_id, messages))
}

/// Parse a transcript that may interleave several dialogues. Records without
/// a `dialogue_id` belong to `default_dialogue_id`. Dialogues are returned in
/// order of first appearance.
pub fn parse_transcripts<R: BufRead>(reader: R, default_dialogue_id: &str) -> Result<Vec<Dialogue>> {
    let mut groups: Vec<(String, Vec<Message>)> = Vec::new();
    for item in records(reader) {
        let (line, record) = item?;
        let did = record
            .dialogue_id
            .clone()
            .unwrap_or_else(|| default_dialogue_id.to_string());
        let message = to_message(line, record, &did)?;
        match groups.iter_mut().find(|(id, _)| *id == did) {
            Some((_, msgs)) => msgs.push(message),
            None => groups.push((did, vec![message])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(id, msgs)| Dialogue::new(id, msgs))
        .collect())
}

pub fn write_transcript<W: Write>(mut writer: W, dialogues: &[Dialogue]) -> Result<()> {
    for dialogue in dialogues {
        for m in dialogue.messages() {
            let record = TranscriptRecord {
                ts: Value::String(m.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true)),
                speaker: m.speaker.clone(),
                text: m.text.clone(),
                id: Some(m.id.clone()),
                dialogue_id: Some(m.dialogue_id.clone()),
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn records<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, TranscriptRecord)>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let number = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(e.into())),
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(
            serde_json::from_str::<TranscriptRecord>(&line)
                .map(|r| (number, r))
                .map_err(|e| Error::MalformedRecord {
                    line: number,
                    reason: e.to_string(),
                }),
        )
    })
}

fn to_message(line: usize, record: TranscriptRecord, dialogue_id: &str) -> Result<Message> {
    let timestamp = parse_timestamp(&record.ts).ok_or_else(|| Error::MalformedRecord {
        line,
        reason: format!("unreadable timestamp {}", record.ts),
    })?;
    if record.text.trim().is_empty() {
        return Err(Error::MalformedRecord {
            line,
            reason: "empty text".into(),
        });
    }
    Ok(Message {
        id: record
            .id
            .unwrap_or_else(|| format!("{dialogue_id}:{line}")),
        speaker: record.speaker,
        timestamp,
        text: record.text,
        dialogue_id: dialogue_id.to_string(),
    })
}

/// RFC 3339 strings, or epoch seconds given as a number or decimal string.
pub(crate) fn parse_timestamp(value: &Value) -> Option<DateTime<Utc>> {
    match value {
        Value::String(s) => DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .ok()
            .or_else(|| parse_epoch_str(s)),
        Value::Number(n) => match n.as_i64() {
            Some(secs) => Utc.timestamp_opt(secs, 0).single(),
            None => n.as_f64().and_then(epoch_from_f64),
        },
        _ => None,
    }
}

/// Exact decimal parse so Slack's microsecond `ts` values survive intact.
pub(crate) fn parse_epoch_str(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: i64 = whole.parse().ok()?;
    let mut nanos = 0u32;
    for (i, d) in frac.bytes().take(9).enumerate() {
        nanos += u32::from(d - b'0') * 10u32.pow(8 - i as u32);
    }
    Utc.timestamp_opt(secs, nanos).single()
}

fn epoch_from_f64(x: f64) -> Option<DateTime<Utc>> {
    if !x.is_finite() || x < 0.0 {
        return None;
    }
    let secs = x.floor();
    let nanos = ((x - secs) * 1e9).round().min(999_999_999.0) as u32;
    Utc.timestamp_opt(secs as i64, nanos).single()
}
