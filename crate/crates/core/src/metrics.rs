//! Team measures from labeled sentence streams.
//!
//! All measures use labels collapsed to the reduced set. Every reported
//! number carries the sentence ids it was computed from, so a reader can
//! recount it by hand.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write as _};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationSource, Dialogue};
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitiatorKind {
    Query,
    Request,
    Assign,
    Propose,
}

impl InitiatorKind {
    pub const ALL: [InitiatorKind; 4] = [Self::Query, Self::Request, Self::Assign, Self::Propose];

    /// Top-level act this kind is drawn from.
    pub fn root(self) -> &'static str {
        match self {
            Self::Query => "Query",
            Self::Request => "Request",
            Self::Assign => "Assign",
            Self::Propose => "Propose",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Clue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub horizon_sentences: usize,
    pub horizon_secs: i64,
    /// Acts that count as a response to each initiator kind. A response
    /// matches when its collapsed label is one of these or a descendant.
    pub response_sets: BTreeMap<InitiatorKind, Vec<String>>,
    /// Principle name to metric names. A constructed grouping.
    pub principles: Vec<(String, Vec<String>)>,
    pub polarity: BTreeMap<String, Polarity>,
    /// Fractions and medians with a smaller denominator are low-signal.
    pub min_support: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let response_sets = BTreeMap::from([
            (InitiatorKind::Query, set(&["Inform-InResponse", "Inform", "Acknowledge", "Reject"])),
            (InitiatorKind::Request, set(&["Acknowledge", "Reject"])),
            (InitiatorKind::Assign, set(&["Acknowledge", "Reject"])),
            (InitiatorKind::Propose, set(&["Acknowledge", "Reject", "Query"])),
        ]);
        let principles = [
            ("communication", &["loop_closure_rate", "clarification_rate", "median_response_latency"][..]),
            ("coordination", &["assignment_uptake_rate", "assignment_decline_rate"]),
            ("focus_on_goals", &["proposal_rate", "new_issue_rate"]),
            ("positive_collaborative_attitude", &["comradery_rate", "frustration_rate", "blame_rate"]),
            ("supportiveness", &["appreciation_rate", "offer_assistance_rate"]),
            ("adaptability", &["reject_rate"]),
        ]
        .iter()
        .map(|(p, ms)| (p.to_string(), set(ms)))
        .collect();
        let polarity = [
            ("loop_closure_rate", Polarity::Positive),
            ("clarification_rate", Polarity::Clue),
            ("median_response_latency", Polarity::Negative),
            ("assignment_uptake_rate", Polarity::Positive),
            ("assignment_decline_rate", Polarity::Clue),
            ("proposal_rate", Polarity::Clue),
            ("new_issue_rate", Polarity::Clue),
            ("comradery_rate", Polarity::Positive),
            ("frustration_rate", Polarity::Negative),
            ("blame_rate", Polarity::Negative),
            ("appreciation_rate", Polarity::Positive),
            ("offer_assistance_rate", Polarity::Positive),
            ("reject_rate", Polarity::Clue),
        ]
        .iter()
        .map(|(m, p)| (m.to_string(), *p))
        .collect();
        Self {
            horizon_sentences: 10,
            horizon_secs: 24 * 3600,
            response_sets,
            principles,
            polarity,
            min_support: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePair {
    pub dialogue_id: String,
    pub initiator_sentence_id: String,
    pub initiator_speaker: String,
    pub initiator_kind: InitiatorKind,
    pub initiator_label: String,
    pub responder_sentence_id: Option<String>,
    pub responder_speaker: Option<String>,
    /// Collapsed label of the responder.
    pub response_kind: Option<String>,
    /// Seconds between the two messages.
    pub latency_secs: Option<f64>,
    pub closed: bool,
    /// Sentences the outcome also hangs on: every sentence scanned, the
    /// earlier initiators holding skipped responses, and transitively
    /// whatever their own outcome hung on.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub depends_on: Vec<String>,
}

/// Collapsed label and its source for each sentence; `None` when unlabeled
/// or the label is not in the taxonomy.
fn collapsed_labels<'a>(dialogue: &'a Dialogue, taxonomy: &'a Taxonomy) -> Vec<Option<(&'a str, AnnotationSource)>> {
    dialogue
        .sentences()
        .iter()
        .map(|s| {
            s.effective_label()
                .and_then(|(label, source)| taxonomy.collapse(label).ok().map(|c| (c, source)))
        })
        .collect()
}

fn initiator_kind(label: &str, taxonomy: &Taxonomy) -> Option<InitiatorKind> {
    let root = taxonomy.root(label).ok()?;
    InitiatorKind::ALL.into_iter().find(|k| k.root() == root)
}

/// Statement-response pairs, matched greedily: initiators in order each take
/// the first unclaimed in-horizon response by another speaker.
pub fn detect_pairs(dialogue: &Dialogue, taxonomy: &Taxonomy, config: &MetricsConfig) -> Vec<ResponsePair> {
    let labels = collapsed_labels(dialogue, taxonomy);
    let sentences = dialogue.sentences();
    let messages = dialogue.messages();
    let mut claimed: Vec<Option<usize>> = vec![None; sentences.len()];
    let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); sentences.len()];
    let mut out = Vec::new();
    for i in 0..sentences.len() {
        let Some((label, _)) = labels[i] else { continue };
        let Some(kind) = initiator_kind(label, taxonomy) else { continue };
        let initiator = &messages[dialogue.message_of(i)];
        let responses = config.response_sets.get(&kind).map(Vec::as_slice).unwrap_or(&[]);
        let end = sentences.len().min(i.saturating_add(config.horizon_sentences).saturating_add(1));
        let mut found = None;
        let mut held = BTreeSet::new();
        for j in i + 1..end {
            let message = &messages[dialogue.message_of(j)];
            let latency = (message.timestamp - initiator.timestamp).num_milliseconds();
            if latency > config.horizon_secs.saturating_mul(1000) {
                break;
            }
            held.insert(j);
            if message.speaker == initiator.speaker {
                continue;
            }
            let Some((candidate, _)) = labels[j] else { continue };
            if !responses.iter().any(|r| taxonomy.is_descendant_or_self(candidate, r)) {
                continue;
            }
            if let Some(owner) = claimed[j] {
                held.insert(j);
                held.insert(owner);
                held.extend(deps[owner].iter().copied());
                continue;
            }
            found = Some((j, candidate, latency as f64 / 1000.0));
            break;
        }
        if let Some((j, _, _)) = found {
            claimed[j] = Some(i);
            held.insert(j);
        }
        let depends_on = held.iter().filter(|&&k| k != i).map(|&k| sentences[k].id.clone()).collect();
        deps[i] = held;
        out.push(ResponsePair {
            dialogue_id: dialogue.id().to_string(),
            initiator_sentence_id: sentences[i].id.clone(),
            initiator_speaker: initiator.speaker.clone(),
            initiator_kind: kind,
            initiator_label: label.to_string(),
            responder_sentence_id: found.map(|(j, _, _)| sentences[j].id.clone()),
            responder_speaker: found.map(|(j, _, _)| messages[dialogue.message_of(j)].speaker.clone()),
            response_kind: found.map(|(_, c, _)| c.to_string()),
            latency_secs: found.map(|(_, _, l)| l),
            closed: found.is_some(),
            depends_on,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: String,
    pub count: usize,
    /// Per 100 labeled sentences; `None` with no labeled sentences.
    pub per_100: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frequencies {
    pub sentences: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    /// Labeled sentences whose label came from a model.
    pub predicted: usize,
    /// One row per reduced-set label, in taxonomy order.
    pub counts: Vec<LabelCount>,
}

impl Frequencies {
    pub fn count(&self, label: &str) -> usize {
        self.counts.iter().find(|c| c.label == label).map_or(0, |c| c.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerFrequencies {
    pub speaker: String,
    #[serde(flatten)]
    pub frequencies: Frequencies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMeasures {
    pub team: Frequencies,
    pub speakers: Vec<SpeakerFrequencies>,
}

fn tally(labels: &[(&str, AnnotationSource)], sentences: usize, taxonomy: &Taxonomy) -> Frequencies {
    let labeled = labels.len();
    let counts = taxonomy
        .reduced_set()
        .iter()
        .map(|r| {
            let count = labels.iter().filter(|(l, _)| l == r).count();
            LabelCount {
                label: r.clone(),
                count,
                per_100: (labeled > 0).then(|| 100.0 * count as f64 / labeled as f64),
            }
        })
        .collect();
    Frequencies {
        sentences,
        labeled,
        unlabeled: sentences - labeled,
        predicted: labels.iter().filter(|(_, s)| *s == AnnotationSource::Model).count(),
        counts,
    }
}

/// Collapsed label counts for the team and for each speaker.
pub fn frequency_measures(dialogues: &[Dialogue], taxonomy: &Taxonomy) -> FrequencyMeasures {
    let mut team = Vec::new();
    let mut team_sentences = 0;
    let mut by_speaker: BTreeMap<String, (usize, Vec<(&str, AnnotationSource)>)> = BTreeMap::new();
    for d in dialogues {
        let labels = collapsed_labels(d, taxonomy);
        for (i, label) in labels.into_iter().enumerate() {
            let speaker = &d.messages()[d.message_of(i)].speaker;
            let entry = by_speaker.entry(speaker.clone()).or_default();
            entry.0 += 1;
            team_sentences += 1;
            if let Some(l) = label {
                entry.1.push(l);
                team.push(l);
            }
        }
    }
    FrequencyMeasures {
        team: tally(&team, team_sentences, taxonomy),
        speakers: by_speaker
            .into_iter()
            .map(|(speaker, (n, labels))| SpeakerFrequencies {
                speaker,
                frequencies: tally(&labels, n, taxonomy),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    /// `numerator / denominator`.
    Fraction,
    /// `100 * numerator / denominator`.
    Per100,
    /// Median of the evidence latencies.
    Seconds,
}

/// Ids backing a metric. For fractions and rates the numerator ids are a
/// subset of the denominator ids. For latency every pair listed contributes
/// one value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evidence {
    pub numerator: Vec<String>,
    pub denominator: Vec<String>,
    /// Pairs involved, by initiator sentence id.
    pub pairs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub unit: Unit,
    pub polarity: Polarity,
    /// `None` when undefined (zero denominator, no closed pairs).
    pub value: Option<f64>,
    pub numerator: usize,
    pub denominator: usize,
    pub low_signal: bool,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "speaker", rename_all = "lowercase")]
pub enum Scope {
    Team,
    Speaker(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleGroup {
    pub principle: String,
    pub metrics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scope: Scope,
    pub window_of_analysis: Option<TimeRange>,
    pub taxonomy_hash: String,
    pub frequencies: FrequencyMeasures,
    pub pairs: Vec<ResponsePair>,
    pub metrics: Vec<Metric>,
    /// Constructed grouping of metrics under team-dynamics principles.
    pub principles: Vec<PrincipleGroup>,
}

impl MetricsReport {
    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// Every id a metric depends on.
    pub fn evidence_ids(&self, name: &str) -> HashSet<String> {
        let mut out = HashSet::new();
        if let Some(m) = self.metric(name) {
            out.extend(m.evidence.numerator.iter().cloned());
            out.extend(m.evidence.denominator.iter().cloned());
            for p in self.pairs.iter().filter(|p| m.evidence.pairs.contains(&p.initiator_sentence_id)) {
                out.insert(p.initiator_sentence_id.clone());
                out.extend(p.responder_sentence_id.iter().cloned());
                out.extend(p.depends_on.iter().cloned());
            }
        }
        out
    }

    /// Recount `name` from its evidence alone.
    pub fn recompute(&self, name: &str) -> Option<f64> {
        let m = self.metric(name)?;
        match m.unit {
            Unit::Fraction | Unit::Per100 => {
                let scale = if m.unit == Unit::Per100 { 100.0 } else { 1.0 };
                let den = m.evidence.denominator.len();
                (den > 0).then(|| scale * m.evidence.numerator.len() as f64 / den as f64)
            }
            Unit::Seconds => {
                let latencies: Vec<f64> = m
                    .evidence
                    .pairs
                    .iter()
                    .filter_map(|id| self.pairs.iter().find(|p| &p.initiator_sentence_id == id))
                    .filter_map(|p| p.latency_secs)
                    .collect();
                median(latencies)
            }
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let scope = match &self.scope {
            Scope::Team => "team".to_string(),
            Scope::Speaker(s) => format!("speaker {s}"),
        };
        let _ = writeln!(out, "scope: {scope}");
        if let Some(w) = &self.window_of_analysis {
            let _ = writeln!(out, "window: {} .. {}", w.start.to_rfc3339(), w.end.to_rfc3339());
        }
        let f = &self.frequencies.team;
        let _ = writeln!(
            out,
            "sentences: {} (labeled {}, unlabeled {}, predicted {})\n",
            f.sentences, f.labeled, f.unlabeled, f.predicted
        );
        let _ = writeln!(out, "{:<26} {:>6} {:>8}", "label", "count", "per 100");
        for c in f.counts.iter().filter(|c| c.count > 0) {
            let _ = writeln!(out, "{:<26} {:>6} {:>8}", c.label, c.count, fmt_opt(c.per_100));
        }
        for group in &self.principles {
            let _ = writeln!(out, "\n[{}]", group.principle);
            for name in &group.metrics {
                if let Some(m) = self.metric(name) {
                    let flag = if m.low_signal { " (low signal)" } else { "" };
                    let _ = writeln!(
                        out,
                        "  {:<26} {:>9} {:<9} {:>4}/{:<4} {:?}{}",
                        m.name,
                        fmt_opt(m.value),
                        m.unit.to_string(),
                        m.numerator,
                        m.denominator,
                        m.polarity,
                        flag
                    );
                }
            }
        }
        out
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Fraction => "fraction",
            Unit::Per100 => "per-100",
            Unit::Seconds => "seconds",
        })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.3}"))
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 })
}

struct Builder<'a> {
    config: &'a MetricsConfig,
    metrics: Vec<Metric>,
}

impl Builder<'_> {
    fn polarity(&self, name: &str) -> Polarity {
        self.config.polarity.get(name).copied().unwrap_or(Polarity::Clue)
    }

    fn fraction(&mut self, name: &str, unit: Unit, numerator: Vec<String>, denominator: Vec<String>, pairs: Vec<String>) {
        let scale = if unit == Unit::Per100 { 100.0 } else { 1.0 };
        let (num, den) = (numerator.len(), denominator.len());
        let low_signal = match unit {
            Unit::Per100 => num == 0,
            _ => den < self.config.min_support,
        };
        self.metrics.push(Metric {
            name: name.into(),
            unit,
            polarity: self.polarity(name),
            value: (den > 0).then(|| scale * num as f64 / den as f64),
            numerator: num,
            denominator: den,
            low_signal,
            evidence: Evidence {
                numerator,
                denominator,
                pairs,
            },
        });
    }
}

/// Sentence ids in scope with their collapsed labels.
struct Scoped<'a> {
    ids: Vec<(&'a str, &'a str)>,
    times: Vec<DateTime<Utc>>,
}

fn scoped<'a>(dialogues: &'a [Dialogue], taxonomy: &'a Taxonomy, speaker: Option<&str>) -> Scoped<'a> {
    let mut ids = Vec::new();
    let mut times = Vec::new();
    for d in dialogues {
        let labels = collapsed_labels(d, taxonomy);
        for (i, s) in d.sentences().iter().enumerate() {
            let message = &d.messages()[d.message_of(i)];
            if speaker.is_some_and(|sp| sp != message.speaker) {
                continue;
            }
            times.push(message.timestamp);
            if let Some((l, _)) = labels[i] {
                ids.push((s.id.as_str(), l));
            }
        }
    }
    Scoped { ids, times }
}

/// Team report over `dialogues`.
pub fn build_report(dialogues: &[Dialogue], taxonomy: &Taxonomy, config: &MetricsConfig) -> MetricsReport {
    build(dialogues, taxonomy, config, None)
}

/// Report restricted to one speaker: their sentences, the pairs they
/// initiated, and the latency of the responses they gave.
pub fn build_speaker_report(
    dialogues: &[Dialogue],
    taxonomy: &Taxonomy,
    config: &MetricsConfig,
    speaker: &str,
) -> Result<MetricsReport> {
    let known = dialogues
        .iter()
        .any(|d| d.messages().iter().any(|m| m.speaker == speaker));
    if !known {
        return Err(Error::Config(format!("no messages from speaker `{speaker}`")));
    }
    Ok(build(dialogues, taxonomy, config, Some(speaker)))
}

fn build(dialogues: &[Dialogue], taxonomy: &Taxonomy, config: &MetricsConfig, speaker: Option<&str>) -> MetricsReport {
    let all_pairs: Vec<ResponsePair> = dialogues
        .iter()
        .flat_map(|d| detect_pairs(d, taxonomy, config))
        .collect();
    let scope = scoped(dialogues, taxonomy, speaker);
    let mine = |p: &&ResponsePair| speaker.is_none_or(|s| p.initiator_speaker == s);
    let answered_by_me = |p: &&ResponsePair| speaker.is_none_or(|s| p.responder_speaker.as_deref() == Some(s));
    let ids = |ps: &[&ResponsePair]| ps.iter().map(|p| p.initiator_sentence_id.clone()).collect::<Vec<_>>();

    let mut b = Builder {
        config,
        metrics: Vec::new(),
    };

    let loops: Vec<&ResponsePair> = all_pairs
        .iter()
        .filter(mine)
        .filter(|p| matches!(p.initiator_kind, InitiatorKind::Query | InitiatorKind::Request))
        .collect();
    let closed: Vec<&ResponsePair> = loops.iter().copied().filter(|p| p.closed).collect();
    b.fraction("loop_closure_rate", Unit::Fraction, ids(&closed), ids(&loops), ids(&loops));

    let labeled_with = |pred: &dyn Fn(&str) -> bool| -> Vec<String> {
        scope
            .ids
            .iter()
            .filter(|(_, l)| pred(l))
            .map(|(id, _)| id.to_string())
            .collect()
    };
    let queries = labeled_with(&|l| taxonomy.root(l).is_ok_and(|r| r == "Query"));
    let clarifications = labeled_with(&|l| taxonomy.is_descendant_or_self(l, "Query-For-Clarification"));
    b.fraction("clarification_rate", Unit::Fraction, clarifications, queries, Vec::new());

    let latency_pairs: Vec<&ResponsePair> = all_pairs.iter().filter(|p| p.closed).filter(answered_by_me).collect();
    let latencies: Vec<f64> = latency_pairs.iter().filter_map(|p| p.latency_secs).collect();
    let name = "median_response_latency";
    b.metrics.push(Metric {
        name: name.into(),
        unit: Unit::Seconds,
        polarity: b.polarity(name),
        value: median(latencies.clone()),
        numerator: latencies.len(),
        denominator: latencies.len(),
        low_signal: latencies.len() < config.min_support,
        evidence: Evidence {
            numerator: Vec::new(),
            denominator: Vec::new(),
            pairs: ids(&latency_pairs),
        },
    });

    let assigns: Vec<&ResponsePair> = all_pairs
        .iter()
        .filter(mine)
        .filter(|p| p.initiator_kind == InitiatorKind::Assign)
        .collect();
    let answered_with = |root: &str| -> Vec<&ResponsePair> {
        assigns
            .iter()
            .copied()
            .filter(|p| p.response_kind.as_deref().is_some_and(|k| taxonomy.is_descendant_or_self(k, root)))
            .collect()
    };
    let (accepted, declined) = (answered_with("Acknowledge"), answered_with("Reject"));
    b.fraction("assignment_uptake_rate", Unit::Fraction, ids(&accepted), ids(&assigns), ids(&assigns));
    b.fraction("assignment_decline_rate", Unit::Fraction, ids(&declined), ids(&assigns), ids(&assigns));

    let labeled: Vec<String> = scope.ids.iter().map(|(id, _)| id.to_string()).collect();
    let rates = [
        ("proposal_rate", "Propose", false),
        ("new_issue_rate", "Inform-NewIssue", true),
        ("comradery_rate", "Social-Comradery", true),
        ("frustration_rate", "Social-Frustration", true),
        ("blame_rate", "Social-Blame-Person", true),
        ("appreciation_rate", "Social-Appreciation", true),
        ("offer_assistance_rate", "Propose-OfferAssistance", true),
        ("reject_rate", "Reject", false),
    ];
    for (name, act, exact) in rates {
        // `exact` counts only the act itself; otherwise the whole subtree.
        let hits = labeled_with(&|l| {
            if exact {
                taxonomy.is_descendant_or_self(l, act)
            } else {
                taxonomy.root(l).is_ok_and(|r| r == act)
            }
        });
        b.fraction(name, Unit::Per100, hits, labeled.clone(), Vec::new());
    }

    let window_of_analysis = match (scope.times.iter().min(), scope.times.iter().max()) {
        (Some(&start), Some(&end)) => Some(TimeRange { start, end }),
        _ => None,
    };
    let frequencies = match speaker {
        None => frequency_measures(dialogues, taxonomy),
        Some(s) => {
            let f = frequency_measures(dialogues, taxonomy);
            let team = f
                .speakers
                .iter()
                .find(|x| x.speaker == s)
                .map(|x| x.frequencies.clone())
                .unwrap_or_else(|| tally(&[], 0, taxonomy));
            FrequencyMeasures {
                team,
                speakers: f.speakers.into_iter().filter(|x| x.speaker == s).collect(),
            }
        }
    };
    let pairs = all_pairs
        .into_iter()
        .filter(|p| {
            speaker.is_none_or(|s| p.initiator_speaker == s || p.responder_speaker.as_deref() == Some(s))
        })
        .collect();
    let principles = config
        .principles
        .iter()
        .map(|(p, ms)| PrincipleGroup {
            principle: p.clone(),
            metrics: ms.clone(),
        })
        .collect();
    MetricsReport {
        scope: speaker.map_or(Scope::Team, |s| Scope::Speaker(s.to_string())),
        window_of_analysis,
        taxonomy_hash: taxonomy.hash().to_string(),
        frequencies,
        pairs,
        metrics: b.metrics,
        principles,
    }
}
