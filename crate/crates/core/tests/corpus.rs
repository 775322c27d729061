use chatact::corpus::{
    parse_transcript, split_corpus, split_text, write_transcript, Dialogue, Message, SplitRatios,
};
use chatact::segmentation::{segment_message, Window};
use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    text: String,
    sentences: Vec<String>,
    code: Vec<usize>,
}

#[test]
fn splitter_fixture() {
    let cases: Vec<Case> =
        serde_json::from_str(include_str!("fixtures/splitter_cases.json")).unwrap();
    assert_eq!(cases.len(), 50);
    let mut failures = Vec::new();
    for case in &cases {
        let pieces = split_text(&case.text);
        let texts: Vec<_> = pieces.iter().map(|p| p.text.clone()).collect();
        let code: Vec<_> = pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_code)
            .map(|(i, _)| i)
            .collect();
        if texts != case.sentences || code != case.code {
            failures.push(format!("{:?}\n  got {:?} code {:?}", case.text, texts, code));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

fn non_ws(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

fn text_strategy() -> impl Strategy<Value = String> {
    let token = prop_oneof![
        "[a-zA-Z']{1,8}",
        "[a-z]{1,6}[.!?]{1,2}",
        Just(":laughing:".to_string()),
        Just("```".to_string()),
        Just("e.g.".to_string()),
        Just("\n".to_string()),
        Just("  at foo.Bar(Baz.java:12)".to_string()),
        Just("$ cargo build".to_string()),
        "[0-9]{1,3}\\.[0-9]",
        "[ \t]{1,2}",
        "\\PC{1,3}",
    ];
    prop::collection::vec(token, 1..20)
        .prop_map(|t| t.join(" "))
        .prop_filter("non-empty", |s| !s.trim().is_empty())
}

proptest! {
    #[test]
    fn splitter_keeps_every_character(text in text_strategy()) {
        let pieces = split_text(&text);
        prop_assert!(!pieces.is_empty());
        let joined: String = pieces.iter().map(|p| p.text.as_str()).collect();
        prop_assert_eq!(non_ws(&joined), non_ws(&text));
        for p in &pieces {
            prop_assert!(!p.text.trim().is_empty());
            let slice: String = text.chars().skip(p.char_start).take(p.text.chars().count()).collect();
            prop_assert_eq!(&slice, &p.text);
        }
    }

    #[test]
    fn transcript_round_trip(
        rows in prop::collection::vec(
            (0i64..2_000_000_000, 0u32..1_000_000_000, "[A-Z]{2}", text_strategy()),
            0..12,
        )
    ) {
        let messages: Vec<Message> = rows
            .iter()
            .enumerate()
            .map(|(i, (secs, nanos, speaker, text))| Message {
                id: format!("d:{}", i + 1),
                speaker: speaker.clone(),
                timestamp: Utc.timestamp_opt(*secs, *nanos).unwrap(),
                text: text.clone(),
                dialogue_id: "d".into(),
            })
            .collect();
        let original = Dialogue::new("d", messages);
        let mut buf = Vec::new();
        write_transcript(&mut buf, std::slice::from_ref(&original)).unwrap();
        let reparsed = parse_transcript(buf.as_slice(), "d").unwrap();
        prop_assert_eq!(&reparsed, &original);
        prop_assert!(!reparsed.was_reordered());
    }
}

fn unit_windows(n: usize) -> Vec<Window> {
    let messages = (0..n)
        .map(|i| Message {
            id: format!("m{i:04}"),
            speaker: "A".into(),
            timestamp: Utc.timestamp_opt(i as i64, 0).unwrap(),
            text: "x".into(),
            dialogue_id: "d".into(),
        })
        .collect();
    segment_message(&Dialogue::new("d", messages))
}

/// Maximal runs of consecutive indices.
fn runs(mut idx: Vec<usize>) -> Vec<(usize, usize)> {
    idx.sort();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for i in idx {
        match out.last_mut() {
            Some(r) if r.1 == i => r.1 = i + 1,
            _ => out.push((i, i + 1)),
        }
    }
    out
}

#[test]
fn split_seed_sweep() {
    for n in [4usize, 7, 20, 37, 100, 263] {
        let windows = unit_windows(n);
        for seed in 0..100u64 {
            let split = split_corpus(&windows, SplitRatios::default(), seed).unwrap();
            let index = |id: &String| windows.iter().position(|w| &w.id == id).unwrap();
            let (train, dev, test): (Vec<_>, Vec<_>, Vec<_>) = (
                split.train.iter().map(index).collect(),
                split.dev.iter().map(index).collect(),
                split.test.iter().map(index).collect(),
            );
            let mut all: Vec<_> = train.iter().chain(&dev).chain(&test).copied().collect();
            all.sort();
            assert_eq!(all, (0..n).collect::<Vec<_>>(), "n={n} seed={seed}");

            let targets = [0.80, 0.05, 0.15].map(|r| r * n as f64);
            for (got, want) in [train.len(), dev.len(), test.len()].iter().zip(targets) {
                assert!((*got as f64 - want).abs() <= 1.0, "n={n} seed={seed}");
            }
            if !dev.is_empty() {
                assert_eq!(runs(dev.clone()).len(), 1, "n={n} seed={seed}");
            }
            if test.len() >= 2 {
                assert_eq!(runs(test.clone()).len(), 2, "n={n} seed={seed}");
            }
        }
    }
}
