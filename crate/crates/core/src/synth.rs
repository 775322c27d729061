//! Synthetic labeled team-chat corpus.
//!
//! Reduced-set labels follow a first-order Markov chain. Each transition
//! also fixes how the next sentence is attached: inside the same message, as
//! a new message by the same speaker, or as a new message by someone else.
//! Fine labels are drawn per reduced label and rendered from slot-filled
//! templates. Several label pairs share text, so only context separates
//! them: `Inform` and `Inform-InResponse` are textually identical, and
//! `Acknowledge`/`Acknowledge-Accept`, `Query`/`Query-For-Clarification`,
//! `Social`/`Social-Appreciation` and `Propose`/`Propose-OfferAssistance`
//! overlap in part.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{attach_annotations, AnnotationRecord, AnnotationSource, Dialogue, Message};
use crate::error::Result;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Next sentence continues the current message.
    Same,
    /// New message from the same speaker.
    NewSelf,
    /// New message from a different speaker.
    NewOther,
}

use Boundary::{NewOther as O, NewSelf as N, Same as S};

/// Outgoing transitions `(to, weight, boundary)` per reduced label.
/// Weights in a row need not sum to one.
pub const TRANSITIONS: &[(&str, &[(&str, f64, Boundary)])] = &[
    (
        "Inform",
        &[
            ("Inform", 0.40, S),
            ("Inform", 0.08, N),
            ("Inform", 0.10, O),
            ("Query", 0.10, O),
            ("Acknowledge", 0.07, O),
            ("Propose", 0.03, O),
            ("Query-For-Clarification", 0.03, O),
            ("Social", 0.02, O),
            ("Social-Appreciation", 0.02, O),
            ("Request", 0.02, O),
            ("Assign", 0.03, O),
            ("Inform-NewIssue", 0.02, O),
            ("Reject", 0.01, O),
            ("Social-Frustration", 0.01, S),
            ("Social-Blame-Person", 0.01, O),
            ("Code", 0.02, S),
            ("Propose-OfferAssistance", 0.01, O),
            ("Social-Comradery", 0.01, O),
        ],
    ),
    (
        "Query",
        &[
            ("Inform-InResponse", 0.70, O),
            ("Acknowledge", 0.05, O),
            ("Query", 0.10, S),
            ("Reject", 0.05, O),
            ("Inform", 0.05, S),
            ("Query-For-Clarification", 0.05, O),
        ],
    ),
    (
        "Query-For-Clarification",
        &[
            ("Inform-InResponse", 0.75, O),
            ("Query", 0.05, S),
            ("Acknowledge", 0.10, O),
            ("Inform", 0.10, O),
        ],
    ),
    (
        "Inform-InResponse",
        &[
            ("Inform", 0.15, S),
            ("Inform-InResponse", 0.25, S),
            ("Acknowledge", 0.20, O),
            ("Social-Appreciation", 0.10, O),
            ("Query", 0.10, O),
            ("Query-For-Clarification", 0.05, O),
            ("Inform", 0.10, O),
            ("Propose", 0.05, O),
        ],
    ),
    (
        "Acknowledge",
        &[
            ("Inform-InResponse", 0.40, S),
            ("Inform", 0.15, O),
            ("Inform", 0.05, N),
            ("Query", 0.10, O),
            ("Propose", 0.05, O),
            ("Social-Appreciation", 0.10, S),
            ("Acknowledge", 0.05, O),
            ("Inform", 0.10, S),
        ],
    ),
    (
        "Acknowledge-Accept",
        &[
            ("Inform", 0.30, S),
            ("Inform", 0.30, O),
            ("Query", 0.10, O),
            ("Social-Appreciation", 0.10, O),
            ("Social-Comradery", 0.05, O),
            ("Acknowledge", 0.05, O),
            ("Propose", 0.10, O),
        ],
    ),
    (
        "Social-Appreciation",
        &[
            ("Acknowledge-Accept", 0.45, S),
            ("Inform", 0.05, S),
            ("Inform", 0.20, O),
            ("Social-Comradery", 0.10, O),
            ("Query", 0.10, O),
            ("Social", 0.10, O),
        ],
    ),
    (
        "Request",
        &[
            ("Acknowledge-Accept", 0.45, O),
            ("Reject", 0.10, O),
            ("Inform-InResponse", 0.15, O),
            ("Request", 0.10, S),
            ("Inform", 0.10, S),
            ("Query", 0.10, O),
        ],
    ),
    (
        "Assign",
        &[
            ("Acknowledge-Accept", 0.55, O),
            ("Reject", 0.12, O),
            ("Query-For-Clarification", 0.12, O),
            ("Inform", 0.10, S),
            ("Assign", 0.06, S),
            ("Social-Appreciation", 0.05, O),
        ],
    ),
    (
        "Propose",
        &[
            ("Acknowledge", 0.35, O),
            ("Reject", 0.15, O),
            ("Query", 0.15, O),
            ("Inform", 0.15, S),
            ("Propose", 0.05, S),
            ("Acknowledge-Accept", 0.15, O),
        ],
    ),
    (
        "Propose-OfferAssistance",
        &[
            ("Social-Appreciation", 0.45, O),
            ("Acknowledge-Accept", 0.20, O),
            ("Reject", 0.15, O),
            ("Inform", 0.20, O),
        ],
    ),
    (
        "Reject",
        &[
            ("Inform", 0.35, S),
            ("Propose", 0.15, S),
            ("Inform", 0.20, O),
            ("Acknowledge", 0.15, O),
            ("Query", 0.15, O),
        ],
    ),
    (
        "Code",
        &[
            ("Code", 0.10, S),
            ("Inform", 0.25, S),
            ("Query", 0.20, O),
            ("Inform-InResponse", 0.10, O),
            ("Propose", 0.25, O),
            ("Propose-OfferAssistance", 0.10, O),
        ],
    ),
    (
        "Inform-NewIssue",
        &[
            ("Code", 0.40, S),
            ("Inform", 0.20, S),
            ("Query", 0.15, O),
            ("Propose-OfferAssistance", 0.15, O),
            ("Social-Frustration", 0.10, S),
        ],
    ),
    (
        "Social",
        &[
            ("Social", 0.20, O),
            ("Social-Comradery", 0.20, O),
            ("Inform", 0.30, O),
            ("Social", 0.10, S),
            ("Query", 0.20, O),
        ],
    ),
    (
        "Social-Comradery",
        &[
            ("Social", 0.30, O),
            ("Social-Appreciation", 0.20, O),
            ("Inform", 0.30, O),
            ("Social-Comradery", 0.20, O),
        ],
    ),
    (
        "Social-Frustration",
        &[
            ("Inform", 0.30, S),
            ("Social-Comradery", 0.20, O),
            ("Propose-OfferAssistance", 0.30, O),
            ("Query", 0.20, O),
        ],
    ),
    (
        "Social-Blame-Person",
        &[("Reject", 0.30, O), ("Inform", 0.40, O), ("Social", 0.30, O)],
    ),
];

/// Fine labels drawn for each reduced label, with weights.
const FINE: &[(&str, &[(&str, f64)])] = &[
    (
        "Inform",
        &[
            ("Inform-Status-Personal", 0.10),
            ("Inform-Status-Environment", 0.10),
            ("Inform-Status-TaskOrIssue", 0.10),
            ("Inform-Status-TaskOrIssue-Progress", 0.15),
            ("Inform-Status-TaskOrIssue-Impediment", 0.08),
            ("Inform-Technical", 0.20),
            ("Inform-Admin", 0.07),
            ("Inform-ExplainRationale", 0.08),
            ("Inform-ClaimTask", 0.07),
            ("Inform-ClaimProblemResponsibility", 0.03),
            ("Inform", 0.02),
        ],
    ),
    (
        "Query",
        &[
            ("Query-Status", 0.05),
            ("Query-Status-Personal", 0.15),
            ("Query-Status-Environment", 0.10),
            ("Query-Status-TaskOrIssue", 0.15),
            ("Query-Technical", 0.30),
            ("Query-Admin", 0.10),
            ("Query-Through-Uncertainty", 0.10),
            ("Query", 0.05),
        ],
    ),
    (
        "Request",
        &[("Request", 0.40), ("Request-Help", 0.35), ("Request-Attention", 0.25)],
    ),
    ("Assign", &[("Assign-Task", 0.70), ("Assign-Admin", 0.30)]),
    (
        "Propose",
        &[("Propose-Task", 0.35), ("Propose-PossibleSolution", 0.45), ("Propose-Admin", 0.20)],
    ),
    (
        "Acknowledge",
        &[
            ("Acknowledge-Receipt", 0.35),
            ("Acknowledge-Affirm", 0.25),
            ("Acknowledge-Validated", 0.15),
            ("Acknowledge", 0.25),
        ],
    ),
    (
        "Reject",
        &[
            ("Reject", 0.20),
            ("Reject-Counter-Assign", 0.20),
            ("Reject-Counter-Inform", 0.25),
            ("Reject-Counter-Claim", 0.15),
            ("Reject-Counter-Propose", 0.20),
        ],
    ),
    (
        "Code",
        &[("Code-Message-Table-Issue", 0.5), ("Code-Message-Table-Solution", 0.5)],
    ),
    ("Social", &[("Social-Backchannel", 0.6), ("Social", 0.4)]),
    (
        "Inform-NewIssue",
        &[("Inform-NewIssue", 0.7), ("Inform-NewIssue-Anticipated", 0.3)],
    ),
];

/// Text pools shared between two reduced labels, with the probability that
/// each label draws from the shared pool instead of its own templates.
const SHARED: &[(&str, &str, f64, &[&str])] = &[
    (
        "Acknowledge",
        "Acknowledge-Accept",
        0.5,
        &["ok", "sounds good", "got it", "ok sounds good", "alright", "sure thing", "yep", "ok cool"],
    ),
    (
        "Query",
        "Query-For-Clarification",
        0.35,
        &["Which branch?", "Which one is that?", "Is that the {comp}?", "Where is that?", "Sorry, what?"],
    ),
    (
        "Social",
        "Social-Appreciation",
        0.4,
        &["nice", "awesome", "great", "oh nice", ":tada:"],
    ),
    (
        "Propose",
        "Propose-OfferAssistance",
        0.3,
        &["I can look into the {comp} later.", "I could dig into that after {time}.", "Maybe I can check the {comp} tonight."],
    ),
];

fn templates(fine: &str) -> &'static [&'static str] {
    match fine {
        "Inform-Status-Personal" => &["Checking", "I'm out {time}", "Back now", "Heading to lunch, back in an hour", "I'm on the {comp} today"],
        "Inform-Status-Environment" => &["ok I've pushed", "{env} is back up", "The {comp} on {env} was redeployed", "I merged the branch into {env}", "Pushed the fix to {env}"],
        "Inform-Status-TaskOrIssue" => &["I'm currently working on that", "Still working on the {comp}", "The {comp} ticket is in review", "I'm halfway through the {comp} refactor"],
        "Inform-Status-TaskOrIssue-Progress" => &["UI issues should be fixed now", "The {comp} is working again", "Finished the {comp} changes", "The {comp} tests pass now", "Got the {comp} running on {env}"],
        "Inform-Status-TaskOrIssue-Impediment" => &["The port conflict is preventing us from changing it", "I'm blocked on access to {env}", "The {comp} keeps timing out so I can't test", "Waiting on {name} before I can finish the {comp}"],
        "Inform-Technical" => &["That library requires a CUDA GPU", "The {comp} reads its settings from {file}", "{lib} needs version 2 or later", "The {comp} calls the API twice per frame", "{file} sets the default port", "The {comp} caches results for ten minutes"],
        "Inform-Admin" => &["Tomorrow's meeting is in room 1212", "Standup moves to {time}", "The demo is {time}", "I added everyone to the shared drive"],
        "Inform-ExplainRationale" => &["That's to ensure the agents are synchronized", "We did that so the {comp} stays fast", "It's there because {lib} needs it", "That keeps {env} separate from testing"],
        "Inform-ClaimTask" => &["I'll start working on that", "I'll take the {comp}", "I'll handle {file}", "I can own the {comp} migration"],
        "Inform-ClaimProblemResponsibility" => &["My bad", "That was my mistake in {file}", "Sorry, I broke the {comp}"],
        "Inform" => &["FYI the {comp} changed", "Just so everyone knows, {env} is slow", "Note that {file} moved"],
        "Inform-NewIssue" => &["The latest update in {lib} broke the {comp}", "The {comp} is crashing on {env}", "Builds on {env} started failing", "The {comp} throws an error on startup"],
        "Inform-NewIssue-Anticipated" => &["Changing that will likely break the Makefile", "Upgrading {lib} might break the {comp}", "That change could cause problems on {env}"],
        "Query-Status" => &["How are we doing?", "Where are we at?", "What's the status overall?"],
        "Query-Status-Personal" => &["{name}, any status updates?", "How's it going, {name}?", "{name}, are you around?"],
        "Query-Status-Environment" => &["Is this on dev or production?", "Is {env} up right now?", "Did anyone deploy to {env}?", "Which version is on {env}?"],
        "Query-Status-TaskOrIssue" => &["How's the work on the {comp} bug going?", "Is the {comp} fix done yet?", "Any progress on the {comp}?"],
        "Query-Technical" => &["What are the callbacks for the graphics calls?", "Does the {comp} support {lib}?", "How does the {comp} load {file}?", "Why does {lib} need a GPU?", "What port does the {comp} use?"],
        "Query-Admin" => &["Who should I speak to for access to the repository?", "When is the next demo?", "Where do we file expense reports?"],
        "Query-Through-Uncertainty" => &[":confused:", ":thinking_face:", "hmm"],
        "Query" => &["Question about the {comp}?", "Anyone know about {lib}?"],
        "Query-For-Clarification" => &["Which one?", "Do you mean the {comp}?", "What do you mean by that?", "Sorry, which {file}?", "Did you mean on {env}?"],
        "Request" => &["Can you send me documentation for that API?", "Could you share {file}?", "Can you send me the {comp} logs?"],
        "Request-Help" => &["Can you help me figure out this issue?", "Could someone help me with the {comp}?", "I need a hand with {lib}, anyone free?"],
        "Request-Attention" => &["@{name}", "@{name} ping"],
        "Assign-Task" => &["{name}, can you take a look at that error?", "{name}, please update {file}", "{name}, please fix the {comp} by {time}", "{name}, take the {comp} ticket"],
        "Assign-Admin" => &["Let's have a meeting to regroup", "Everyone please fill out the survey by {time}", "Let's do a review {time}"],
        "Propose-Task" => &["We should try to improve the NLP part of the pipeline", "We should rewrite the {comp}", "We should add tests for the {comp}"],
        "Propose-PossibleSolution" => &["Try running it as admin", "Try clearing the cache in {file}", "Maybe pin {lib} to the old version", "Try restarting the {comp}"],
        "Propose-Admin" => &["We should talk with {name} about this", "We should move standup to {time}"],
        "Propose-OfferAssistance" => &["Want me to take a look at that?", "I can help with the {comp} if you want", "Need a hand with that?", "Happy to pair on the {comp}"],
        "Acknowledge-Receipt" => &["I see it now", "Saw that", "Received, thanks for the heads up"],
        "Acknowledge-Affirm" => &["That's correct", "Yes exactly", "Right, that's how it works"],
        "Acknowledge-Validated" => &["I pulled the commit and tested it on my machine", "Confirmed it works on {env}", "Verified the {comp} fix locally"],
        "Acknowledge" => &["Understood", "Makes sense", "Noted"],
        "Acknowledge-Accept" => &["Will do", "On it", "Sure, I'll handle it", "Yes, I can do that", "I'll get on that"],
        "Reject" => &["That's outside the scope of this project unfortunately", "No, let's not do that", "We can't support that right now"],
        "Reject-Counter-Assign" => &["I can't, {name}, can you handle that?", "I'm swamped, maybe {name} can take it"],
        "Reject-Counter-Inform" => &["I don't see that, it works for me.", "That's not what I get on {env}", "No, the {comp} is fine on my machine"],
        "Reject-Counter-Claim" => &["I don't want to give up the computing time for that yet", "I'd rather keep the {comp} as it is"],
        "Reject-Counter-Propose" => &["What if we use {lib} instead?", "How about we skip the {comp} for now?"],
        "Social-Blame-Person" => &["I think that was {name}'s commit", "{name} changed {file} last", "Pretty sure {name} broke it"],
        "Social-Backchannel" => &["Check out this video I found", "lol", "haha yeah", ":laughing:"],
        "Social" => &["Happy Friday everyone", "Anyone watching the game tonight?", "Coffee run, anyone?"],
        "Social-Comradery" => &["{name} saves the day again!", "Great teamwork everyone", "Nice work team!", ":raised_hands:"],
        "Social-Appreciation" => &["Thanks, that's great", "Thanks for the update", "Thank you {name}!", "Much appreciated"],
        "Social-Frustration" => &["Ugh, I've been working on this for hours", "This {comp} is driving me crazy", "So frustrating"],
        _ => &[],
    }
}

const CODE_ISSUE: &[&str] = &[
    "Traceback (most recent call last):\n  File \"{file}\", line 42, in <module>\n    main()\nRuntimeError: CUDA out of memory",
    "Exception in thread \"main\" java.lang.NullPointerException\n    at com.team.{Comp}.run({Comp}.java:88)",
    "error[E0382]: borrow of moved value: `config`\n  --> src/main.rs:17:5",
    "ModuleNotFoundError: No module named '{lib}'",
];

const CODE_SOLUTION: &[&str] = &[
    "$ pip install -r requirements.txt\n$ make test",
    "$ git pull origin main\n$ docker compose up --build",
    "$ export CUDA_VISIBLE_DEVICES=0\n$ python {file}",
    "$ rm -rf build/\n$ cmake .. && make -j8",
];

const COMPONENTS: &[&str] = &[
    "parser", "drone sim", "UI", "login page", "scheduler", "renderer", "database", "docker image",
    "API", "NLP pipeline", "build", "dashboard", "rigid body solver", "exporter",
];
const FILES: &[&str] = &["config.yaml", "main.py", "setup.cfg", "train.py", "Makefile", "index.ts"];
const ENVS: &[&str] = &["dev", "staging", "production", "the cluster", "my laptop"];
const TIMES: &[&str] = &["tomorrow", "this afternoon", "Friday", "next week", "after lunch", "Monday"];
const LIBS: &[&str] = &["numpy", "Spacy", "PyTorch", "React", "Flask", "CUDA", "NeuralCoref"];

pub const SPEAKERS: [&str; 8] = ["PG", "BR", "ER", "JM", "TK", "RS", "AL", "MD"];
pub const LEAD: &str = "PG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub dialogues: usize,
    pub sentences_per_dialogue: usize,
    pub mean_gap_secs: f64,
    pub long_gap_probability: f64,
}

impl SynthConfig {
    /// 16 dialogues of 250 sentences.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            dialogues: 16,
            sentences_per_dialogue: 250,
            mean_gap_secs: 240.0,
            long_gap_probability: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Dialogues with gold labels attached.
    pub dialogues: Vec<Dialogue>,
    /// One whole-sentence human record per sentence, per dialogue.
    pub annotations: Vec<Vec<AnnotationRecord>>,
}

/// Labels of the chain, in table order.
pub fn chain_labels() -> Vec<&'static str> {
    TRANSITIONS.iter().map(|(l, _)| *l).collect()
}

/// Row-normalized label-to-label matrix, boundaries summed out.
pub fn transition_matrix() -> Vec<Vec<f64>> {
    let labels = chain_labels();
    TRANSITIONS
        .iter()
        .map(|(_, row)| {
            let total: f64 = row.iter().map(|r| r.1).sum();
            let mut out = vec![0.0; labels.len()];
            for (to, w, _) in row.iter() {
                let j = labels.iter().position(|l| l == to).expect("known label");
                out[j] += w / total;
            }
            out
        })
        .collect()
}

fn stationary(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut p = vec![1.0 / n as f64; n];
    for _ in 0..10_000 {
        let mut next = vec![0.0; n];
        for (i, row) in matrix.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                next[j] += p[i] * w;
            }
        }
        let delta: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        p = next;
        if delta < 1e-15 {
            break;
        }
    }
    p
}

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        items.choose(&mut self.rng).expect("non-empty")
    }

    fn weighted<'a, T>(&mut self, items: &'a [T], weight: impl Fn(&T) -> f64) -> &'a T {
        let dist = WeightedIndex::new(items.iter().map(weight)).expect("positive weights");
        &items[dist.sample(&mut self.rng)]
    }

    fn fill(&mut self, template: &str, speaker: &str) -> String {
        let mut out = template.to_string();
        while let Some(start) = out.find('{') {
            let end = start + out[start..].find('}').expect("closed slot");
            let value = match &out[start + 1..end] {
                "comp" => self.pick(COMPONENTS).to_string(),
                "Comp" => {
                    let c = self.pick(COMPONENTS).replace(' ', "");
                    let mut chars = c.chars();
                    chars.next().map_or(String::new(), |f| f.to_uppercase().chain(chars).collect())
                }
                "file" => self.pick(FILES).to_string(),
                "env" => self.pick(ENVS).to_string(),
                "time" => self.pick(TIMES).to_string(),
                "lib" => self.pick(LIBS).to_string(),
                "name" => loop {
                    let n = *self.pick(&SPEAKERS);
                    if n != speaker {
                        break n.to_string();
                    }
                },
                other => panic!("unknown slot {other}"),
            };
            out.replace_range(start..=end, &value);
        }
        out
    }

    /// Fine label and text for a reduced label.
    fn render(&mut self, reduced: &str, speaker: &str) -> (String, String) {
        let fine = match FINE.iter().find(|(l, _)| *l == reduced) {
            Some((_, options)) => self.weighted(options, |o| o.1).0.to_string(),
            None => reduced.to_string(),
        };
        if reduced == "Code" {
            let pool = if fine.ends_with("Issue") { CODE_ISSUE } else { CODE_SOLUTION };
            let template = self.pick_static(pool);
            let body = self.fill(template, speaker);
            return (fine, format!("```\n{body}\n```"));
        }
        if reduced == "Inform-InResponse" {
            // Same wording as a plain inform.
            let (_, options) = FINE.iter().find(|(l, _)| *l == "Inform").unwrap();
            let source = self.weighted(options, |o| o.1).0;
            let template = self.pick_static(templates(source));
            return (fine, self.fill(template, speaker));
        }
        for (a, b, p, pool) in SHARED {
            if (reduced == *a || reduced == *b) && self.rng.gen_bool(*p) {
                let template = self.pick_static(pool);
                return (fine, self.fill(template, speaker));
            }
        }
        let template = self.pick_static(templates(&fine));
        (fine, self.fill(template, speaker))
    }

    fn pick_static(&mut self, items: &'static [&'static str]) -> &'static str {
        items.choose(&mut self.rng).expect("non-empty")
    }

    fn gap(&mut self, config: &SynthConfig) -> Duration {
        let secs = if self.rng.gen_bool(config.long_gap_probability) {
            self.rng.gen_range(3600.0..43200.0)
        } else {
            let u: f64 = self.rng.gen_range(f64::EPSILON..1.0);
            (-config.mean_gap_secs * u.ln()).max(5.0)
        };
        Duration::milliseconds((secs * 1000.0) as i64)
    }

    fn other_speaker(&mut self, current: &str) -> &'static str {
        let others: Vec<&'static str> = SPEAKERS.iter().copied().filter(|s| *s != current).collect();
        self.weighted(&others, |s| if *s == LEAD { 2.0 } else { 1.0 })
    }
}

fn join(message: &mut String, sentence: &str) {
    if message.is_empty() {
        message.push_str(sentence);
        return;
    }
    let ends_clean = message.ends_with(['.', '!', '?']) && !sentence.starts_with("```");
    message.push(if ends_clean { ' ' } else { '\n' });
    message.push_str(sentence);
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
    };
    let labels = chain_labels();
    let matrix = transition_matrix();
    let pi = stationary(&matrix);
    let origin: DateTime<Utc> = Utc.with_ymd_and_hms(2021, 3, 1, 9, 0, 0).unwrap();

    let mut dialogues = Vec::with_capacity(config.dialogues);
    let mut all_records = Vec::with_capacity(config.dialogues);
    for d in 0..config.dialogues {
        let dialogue_id = format!("synth-{d:02}");
        let mut clock = origin + Duration::weeks(2 * d as i64);
        let mut speaker = *s.pick(&SPEAKERS);
        let mut state = labels[WeightedIndex::new(&pi).unwrap().sample(&mut s.rng)];
        // (speaker, time, [(fine label, text)])
        let mut messages: Vec<(&str, DateTime<Utc>, Vec<(String, String)>)> = Vec::new();
        messages.push((speaker, clock, vec![s.render(state, speaker)]));
        for _ in 1..config.sentences_per_dialogue {
            let (_, row) = TRANSITIONS.iter().find(|(l, _)| *l == state).unwrap();
            let &(next, _, boundary) = s.weighted(row, |r| r.1);
            match boundary {
                Boundary::Same => {}
                Boundary::NewSelf | Boundary::NewOther => {
                    if boundary == Boundary::NewOther {
                        speaker = s.other_speaker(speaker);
                    }
                    clock += s.gap(config);
                    messages.push((speaker, clock, Vec::new()));
                }
            }
            let rendered = s.render(next, speaker);
            messages.last_mut().unwrap().2.push(rendered);
            state = next;
        }

        let mut built = Vec::with_capacity(messages.len());
        let mut records = Vec::new();
        for (m, (speaker, ts, sentences)) in messages.iter().enumerate() {
            let id = format!("{dialogue_id}:{}", m + 1);
            let mut text = String::new();
            for (k, (fine, sentence)) in sentences.iter().enumerate() {
                join(&mut text, sentence);
                records.push(AnnotationRecord {
                    sentence_id: format!("{id}/{k}"),
                    label: fine.clone(),
                    annotator: "synth".into(),
                    char_start: None,
                    char_end: None,
                    created_at: origin,
                    source: AnnotationSource::Human,
                });
            }
            built.push(Message {
                id,
                speaker: speaker.to_string(),
                timestamp: *ts,
                text,
                dialogue_id: dialogue_id.clone(),
            });
        }
        let dialogue = Dialogue::new(dialogue_id, built);
        debug_assert_eq!(dialogue.sentences().len(), records.len());
        dialogues.push(attach_annotations(&dialogue, &records)?);
        all_records.push(records);
    }
    Ok(SynthCorpus {
        dialogues,
        annotations: all_records,
    })
}

/// One dialogue in which every taxonomy label gets `per_label` sentences.
/// Each sentence mixes words shared by its top-level class with words
/// specific to its label, so label vectors cluster by class.
pub fn clustered_corpus(taxonomy: &Taxonomy, per_label: usize, seed: u64) -> Result<Dialogue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    for (k, label) in taxonomy.labels().iter().enumerate() {
        let root = taxonomy.root(&label.id)?.to_lowercase();
        for _ in 0..per_label {
            let mut words = Vec::with_capacity(5);
            for _ in 0..3 {
                words.push(format!("{root}{}", rng.gen_range(0..6)));
            }
            for _ in 0..2 {
                words.push(format!("zq{k}v{}", rng.gen_range(0..3)));
            }
            words.shuffle(&mut rng);
            items.push((label.id.clone(), format!("{}.", words.join(" "))));
        }
    }
    items.shuffle(&mut rng);
    let origin: DateTime<Utc> = Utc.with_ymd_and_hms(2021, 3, 1, 9, 0, 0).unwrap();
    let messages = items
        .iter()
        .enumerate()
        .map(|(i, (_, text))| Message {
            id: format!("c:{}", i + 1),
            speaker: SPEAKERS[i % SPEAKERS.len()].to_string(),
            timestamp: origin + Duration::seconds(30 * i as i64),
            text: text.clone(),
            dialogue_id: "clustered".into(),
        })
        .collect();
    let dialogue = Dialogue::new("clustered", messages);
    let records: Vec<AnnotationRecord> = items
        .iter()
        .enumerate()
        .map(|(i, (label, _))| AnnotationRecord {
            sentence_id: format!("c:{}/0", i + 1),
            label: label.clone(),
            annotator: "synth".into(),
            char_start: None,
            char_end: None,
            created_at: origin,
            source: AnnotationSource::Human,
        })
        .collect();
    attach_annotations(&dialogue, &records)
}
