//! Slack channel-export ingestion.
//!
//! An export holds one JSON array per channel-day. Records carry `ts` (epoch
//! seconds as a decimal string), `user`, `text` and an optional `subtype`.
//! System subtypes and thread replies are dropped; records missing `ts` or
//! `user` are rejected. Both are tallied.

use std::collections::HashMap;
use std::io::Read;

use serde::Deserialize;
use serde_json::Value;

use super::transcript::parse_epoch_str;
use super::{Dialogue, Message};
use crate::error::{Error, Result};

/// Subtypes that carry no user-authored text.
const SYSTEM_SUBTYPES: &[&str] = &[
    "channel_join",
    "channel_leave",
    "channel_topic",
    "channel_purpose",
    "channel_name",
    "channel_archive",
    "channel_unarchive",
    "group_join",
    "group_leave",
    "group_topic",
    "group_purpose",
    "group_name",
    "group_archive",
    "group_unarchive",
    "pinned_item",
    "unpinned_item",
    "bot_add",
    "bot_remove",
    "reminder_add",
    "tombstone",
];

#[derive(Debug, Clone)]
pub struct SlackImport {
    pub dialogue: Dialogue,
    pub dropped: usize,
    pub rejected: usize,
}

/// Slack user id to display name.
#[derive(Debug, Clone, Default)]
pub struct UserMap(HashMap<String, String>);

#[derive(Deserialize)]
#[serde(untagged)]
enum UserFile {
    Map(HashMap<String, String>),
    Users(Vec<SlackUser>),
}

#[derive(Deserialize)]
struct SlackUser {
    id: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    real_name: Option<String>,
    #[serde(default)]
    profile: Option<SlackProfile>,
}

#[derive(Deserialize)]
struct SlackProfile {
    #[serde(default)]
    display_name: Option<String>,
}

impl UserMap {
    /// Accepts either a plain `{id: name}` object or Slack's `users.json` array.
    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let file: UserFile = serde_json::from_reader(reader)?;
        Ok(match file {
            UserFile::Map(map) => Self(map),
            UserFile::Users(users) => Self(
                users
                    .into_iter()
                    .filter_map(|u| {
                        let display = u
                            .profile
                            .and_then(|p| p.display_name)
                            .filter(|n| !n.is_empty())
                            .or(u.real_name.filter(|n| !n.is_empty()))
                            .or(u.name)?;
                        Some((u.id, display))
                    })
                    .collect(),
            ),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, name: impl Into<String>) {
        self.0.insert(id.into(), name.into());
    }

    pub fn resolve<'a>(&'a self, id: &'a str) -> &'a str {
        self.0.get(id).map(String::as_str).unwrap_or(id)
    }
}

pub fn parse_slack_export<R: Read>(
    reader: R,
    dialogue_id: &str,
    users: Option<&UserMap>,
) -> Result<SlackImport> {
    parse_slack_exports(std::iter::once(reader), dialogue_id, users)
}

/// Merge several channel-day files into one dialogue.
pub fn parse_slack_exports<R: Read>(
    readers: impl IntoIterator<Item = R>,
    dialogue_id: &str,
    users: Option<&UserMap>,
) -> Result<SlackImport> {
    let mut kept: Vec<(String, String, String, String)> = Vec::new();
    let (mut dropped, mut rejected) = (0, 0);
    for reader in readers {
        let records: Vec<Value> = serde_json::from_reader(reader)?;
        for record in records {
            match classify(&record) {
                Verdict::Keep { ts, user, text } => {
                    let name = users.map_or(user.as_str(), |u| u.resolve(&user)).to_string();
                    kept.push((ts, user, name, text));
                }
                Verdict::Drop => dropped += 1,
                Verdict::Reject => rejected += 1,
            }
        }
    }
    if kept.is_empty() && rejected > 0 {
        return Err(Error::NothingImported { rejected, dropped });
    }

    let messages = assign_ids(kept, dialogue_id);
    Ok(SlackImport {
        dialogue: Dialogue::new(dialogue_id, messages),
        dropped,
        rejected,
    })
}

enum Verdict {
    Keep { ts: String, user: String, text: String },
    Drop,
    Reject,
}

fn classify(record: &Value) -> Verdict {
    let field = |name: &str| record.get(name).and_then(Value::as_str);
    if let Some(subtype) = field("subtype") {
        if SYSTEM_SUBTYPES.contains(&subtype) {
            return Verdict::Drop;
        }
    }
    let (Some(ts), Some(user)) = (field("ts"), field("user")) else {
        return Verdict::Reject;
    };
    if parse_epoch_str(ts).is_none() {
        return Verdict::Reject;
    }
    if let Some(thread_ts) = field("thread_ts") {
        if thread_ts != ts {
            return Verdict::Drop;
        }
    }
    match field("text").map(str::trim) {
        Some(text) if !text.is_empty() => Verdict::Keep {
            ts: ts.to_string(),
            user: user.to_string(),
            text: field("text").unwrap().to_string(),
        },
        _ => Verdict::Drop,
    }
}

/// Message ids derive from content only, so the resulting order is the same
/// for any permutation of the input. Records sharing a `ts` get a suffix
/// from a hash of user and text.
fn assign_ids(mut kept: Vec<(String, String, String, String)>, dialogue_id: &str) -> Vec<Message> {
    use std::hash::Hasher;

    let content_key = |user: &str, text: &str| {
        let mut h = fnv::FnvHasher::default();
        h.write(user.as_bytes());
        h.write(&[0]);
        h.write(text.as_bytes());
        h.finish()
    };
    kept.sort_by(|a, b| {
        parse_epoch_str(&a.0)
            .cmp(&parse_epoch_str(&b.0))
            .then_with(|| a.0.cmp(&b.0))
            .then_with(|| content_key(&a.1, &a.3).cmp(&content_key(&b.1, &b.3)))
    });

    let mut messages = Vec::with_capacity(kept.len());
    let mut i = 0;
    while i < kept.len() {
        let j = (i..kept.len())
            .find(|&j| kept[j].0 != kept[i].0)
            .unwrap_or(kept.len());
        for (k, (ts, user, name, text)) in kept[i..j].iter().enumerate() {
            let id = if j - i == 1 {
                ts.clone()
            } else {
                format!("{ts}#{:016x}{}", content_key(user, text), suffix(k, &kept[i..j]))
            };
            messages.push(Message {
                id,
                speaker: name.clone(),
                timestamp: parse_epoch_str(ts).expect("validated above"),
                text: text.clone(),
                dialogue_id: dialogue_id.to_string(),
            });
        }
        i = j;
    }
    messages
}

/// Exact duplicates (same ts, user and text) are numbered in order.
fn suffix(k: usize, group: &[(String, String, String, String)]) -> String {
    let same = |a: &(String, String, String, String)| a.1 == group[k].1 && a.3 == group[k].3;
    let before = group[..k].iter().filter(|a| same(a)).count();
    if before == 0 && group[k + 1..].iter().all(|a| !same(a)) {
        String::new()
    } else {
        format!("-{before}")
    }
}
