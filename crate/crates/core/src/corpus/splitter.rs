//! Rule-based sentence splitting for chat messages.
//!
//! Rules, applied in order:
//! 1. Fenced code blocks (```` ``` ````) are one unit each, fences included.
//!    An unterminated fence runs to the end of the message.
//! 2. Remaining text is split on hard newlines. Consecutive lines that look
//!    like stack traces, console commands or log output merge into one code unit.
//! 3. Standalone emoticon tokens such as `:laughing:` are their own unit.
//! 4. Prose splits after a token ending in `.`, `!` or `?` (optionally
//!    followed by closing quotes or brackets), unless the token is a known
//!    abbreviation.
//!
//! Units are slices of the original text, trimmed; no non-whitespace
//! character is ever dropped or duplicated.

use std::sync::OnceLock;

use regex::Regex;

use super::{Message, Sentence};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextPiece {
    pub text: String,
    pub is_code: bool,
    /// Character offset of the piece within the source text.
    pub char_start: usize,
}

const FENCE: &str = "```";

const ABBREVIATIONS: [&str; 12] = [
    "e.g.", "i.e.", "etc.", "vs.", "mr.", "mrs.", "ms.", "dr.", "approx.", "cf.", "no.", "st.",
];

/// Split a message into sentences. Sentence ids and dialogue ordinals are
/// relative to this message alone; [`super::Dialogue::new`] assigns global ones.
pub fn split_sentences(message: &Message) -> Vec<Sentence> {
    split_text(&message.text)
        .into_iter()
        .enumerate()
        .map(|(k, piece)| Sentence {
            id: format!("{}/{}", message.id, k),
            message_id: message.id.clone(),
            index_in_message: k,
            index_in_dialogue: k,
            text: piece.text,
            is_code_block: piece.is_code,
            char_start: piece.char_start,
            gold_label: None,
            gold_source: None,
            predicted_label: None,
        })
        .collect()
}

pub fn split_text(text: &str) -> Vec<TextPiece> {
    let mut out = Vec::new();
    let mut cursor = 0;
    while cursor < text.len() {
        match text[cursor..].find(FENCE) {
            Some(rel) => {
                let open = cursor + rel;
                split_prose(text, cursor, open, &mut out);
                let body = open + FENCE.len();
                let close = text[body..]
                    .find(FENCE)
                    .map(|r| body + r + FENCE.len())
                    .unwrap_or(text.len());
                push_piece(text, open, close, true, &mut out);
                cursor = close;
            }
            None => {
                split_prose(text, cursor, text.len(), &mut out);
                cursor = text.len();
            }
        }
    }
    out
}

pub fn is_emoticon(token: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^:[a-z0-9_+\-']+:$").unwrap())
        .is_match(token)
}

fn code_line_patterns() -> &'static [Regex] {
    static RES: OnceLock<Vec<Regex>> = OnceLock::new();
    RES.get_or_init(|| {
        [
            r"^\s*\$ \S",
            r"^\s*>>> ",
            r"^\s*Traceback \(most recent call last\)",
            r#"^\s+File ".*", line \d+"#,
            r"^\s+at [\w$.<>/]+\(.*\)\s*$",
            r"^\s*(\w+\.)*\w+(Exception|Error)(:.*)?$",
            r"^\s*(Caused by:|\.\.\. \d+ more)",
            r"^\s*\[?(ERROR|WARN|WARNING|INFO|DEBUG|TRACE|FATAL)\]?[: ]",
            r"^\s*([\w.\-]+/)+[\w.\-]+\.\w+:\d+",
            r"^\s*git (clone|pull|push|checkout|commit|status|log|diff|merge|rebase|fetch|reset|stash|branch|add|remote)\b",
            r"^\s*(sudo|npm|pip3?|cargo|docker|kubectl|make|python3?|cd|ls|export|mkdir|rm|cp|mv|curl|ssh)\s+(\S+\s+)*(-{1,2}[\w\-]+|\S*[/=]\S*)(\s+\S+)*\s*$",
        ]
        .iter()
        .map(|p| Regex::new(p).unwrap())
        .collect()
    })
}

fn is_code_line(line: &str) -> bool {
    code_line_patterns().iter().any(|re| re.is_match(line))
}

/// Split `text[start..end]`, which contains no fences, into pieces.
fn split_prose(text: &str, start: usize, end: usize, out: &mut Vec<TextPiece>) {
    let mut code_run: Option<(usize, usize)> = None;
    let mut line_start = start;
    while line_start <= end {
        let line_end = text[line_start..end]
            .find('\n')
            .map(|r| line_start + r)
            .unwrap_or(end);
        let line = &text[line_start..line_end];
        if !line.trim().is_empty() && is_code_line(line) {
            code_run = Some(match code_run {
                Some((s, _)) => (s, line_end),
                None => (line_start, line_end),
            });
        } else {
            if let Some((s, e)) = code_run.take() {
                push_piece(text, s, e, true, out);
            }
            split_line(text, line_start, line_end, out);
        }
        if line_end == end {
            break;
        }
        line_start = line_end + 1;
    }
    if let Some((s, e)) = code_run {
        push_piece(text, s, e, true, out);
    }
}

fn split_line(text: &str, start: usize, end: usize, out: &mut Vec<TextPiece>) {
    let line = &text[start..end];
    let mut sentence: Option<(usize, usize)> = None;
    for (offset, token) in tokens(line) {
        let (ts, te) = (start + offset, start + offset + token.len());
        if is_emoticon(token) {
            if let Some((s, e)) = sentence.take() {
                push_piece(text, s, e, false, out);
            }
            push_piece(text, ts, te, false, out);
            continue;
        }
        sentence = Some(match sentence {
            Some((s, _)) => (s, te),
            None => (ts, te),
        });
        if ends_sentence(token) {
            let (s, e) = sentence.take().unwrap();
            push_piece(text, s, e, false, out);
        }
    }
    if let Some((s, e)) = sentence {
        push_piece(text, s, e, false, out);
    }
}

fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_whitespace()
        .map(move |tok| (tok.as_ptr() as usize - line.as_ptr() as usize, tok))
}

fn ends_sentence(token: &str) -> bool {
    let core = token.trim_end_matches(['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}']);
    if !core.ends_with(['.', '!', '?']) {
        return false;
    }
    let lower = core.to_lowercase();
    !ABBREVIATIONS.contains(&lower.as_str())
}

fn push_piece(text: &str, start: usize, end: usize, is_code: bool, out: &mut Vec<TextPiece>) {
    let slice = &text[start..end];
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        return;
    }
    let lead = slice.len() - slice.trim_start().len();
    let char_start = text[..start + lead].chars().count();
    out.push(TextPiece {
        text: trimmed.to_string(),
        is_code,
        char_start,
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &str) -> Vec<String> {
        split_text(s).into_iter().map(|p| p.text).collect()
    }

    #[test]
    fn clause_level_sentence_stays_whole() {
        assert_eq!(
            texts("Thanks for the update, and I'll get on that"),
            ["Thanks for the update, and I'll get on that"]
        );
        assert_eq!(texts("ill check"), ["ill check"]);
    }

    #[test]
    fn trailing_emoticon_is_separate() {
        let pieces = split_text("UI issues should be fixed now. :confused:");
        assert_eq!(pieces.len(), 2);
        assert_eq!(pieces[1].text, ":confused:");
        assert_eq!(pieces[1].char_start, 31);
        assert!(!pieces[1].is_code);
    }

    #[test]
    fn char_offsets_index_the_source() {
        let text = "héllo wörld. ünïcode ok";
        for piece in split_text(text) {
            let from: String = text
                .chars()
                .skip(piece.char_start)
                .take(piece.text.chars().count())
                .collect();
            assert_eq!(from, piece.text);
        }
    }

    #[test]
    fn whitespace_only_is_empty() {
        assert!(split_text("  \n\t ").is_empty());
    }
}
