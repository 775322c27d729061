//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chatact::corpus::{
    attach_annotations, parse_transcript, read_annotations, split_corpus, Dialogue, Message, SplitRatios,
};
use chatact::experiment::{run_experiment, ExperimentConfig};
use chatact::labeler::{
    crf, objective, objective_and_gradient, train_baseline, BaselineConfig, FeatureConfig, FeatureVector,
    SequenceModel, WindowInstance,
};
use chatact::metrics::{build_report, MetricsConfig, MetricsReport, Unit};
use chatact::segmentation::{segment, SegmentParams, Strategy, Window};
use chatact::synth::{clustered_corpus, generate, SynthConfig};
use chatact::taxonomy::Taxonomy;
use chatact::validation::{compute_centroids, hierarchy_consistency_report, CentroidMode};
use chatact_cli::store::{ModelKind, ProjectStore, StoredModel};
use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Accessor = Box<dyn Fn(&mut SequenceModel) -> &mut f64>;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($fmt)+)),
        }
    };
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("crf-brute-force", Some(Duration::from_secs(10)), crf_brute_force),
        ("gradient-check", Some(Duration::from_secs(30)), gradient_check),
        ("marginal-normalization", None, marginal_normalization),
        ("segmentation-suite", Some(Duration::from_secs(20)), segmentation_suite),
        ("synthetic-learning", Some(Duration::from_secs(300)), synthetic_learning),
        ("taxonomy-validation", None, taxonomy_validation),
        ("metrics-fixture", None, metrics_fixture),
        ("split-protocol", None, split_protocol),
        ("pipeline-smoke", Some(Duration::from_secs(300)), pipeline_smoke),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match (result, budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {:.1}s, limit {}s", elapsed.as_secs_f64(), b.as_secs())),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS {name} ({:.2}s) {detail}", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({:.2}s) {detail}", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---- sequence model -------------------------------------------------------

const DIM: usize = 32;

fn random_model(rng: &mut ChaCha8Rng, l: usize, scale: f64) -> SequenceModel {
    let labels = (0..l).map(|i| format!("y{i}")).collect();
    let mut m = SequenceModel::zeros(labels, "acceptance", FeatureConfig { dim: DIM, ..FeatureConfig::default() });
    for w in m
        .start
        .iter_mut()
        .chain(m.end.iter_mut())
        .chain(m.transitions.iter_mut())
        .chain(m.emissions.iter_mut())
    {
        *w = scale * rng.gen_range(-1.0..1.0);
    }
    m
}

fn random_features(rng: &mut ChaCha8Rng, n: usize) -> Vec<FeatureVector> {
    (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=4);
            FeatureVector::from_pairs((0..k).map(|_| (rng.gen_range(0..DIM as u32), rng.gen_range(0.1..1.5))).collect())
        })
        .collect()
}

/// Sequence score read straight off the parameter tables.
fn path_score(m: &SequenceModel, xs: &[FeatureVector], ys: &[usize]) -> f64 {
    let l = m.labels.len();
    let mut total = m.start[ys[0]] + m.end[*ys.last().unwrap()];
    for (i, &y) in ys.iter().enumerate() {
        for (&f, v) in xs[i].indices.iter().zip(&xs[i].values) {
            total += v * m.emissions[f as usize * l + y];
        }
        if i > 0 {
            total += m.transitions[ys[i - 1] * l + y];
        }
    }
    total
}

/// Every label sequence of length `n`, lexicographic.
fn all_paths(n: usize, l: usize) -> Vec<Vec<usize>> {
    let count = l.pow(n as u32);
    (0..count)
        .map(|mut k| {
            let mut ys = vec![0; n];
            for i in (0..n).rev() {
                ys[i] = k % l;
                k /= l;
            }
            ys
        })
        .collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn crf_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let l = rng.gen_range(1..=6);
        let n = rng.gen_range(1..=5);
        let m = random_model(&mut rng, l, 2.0);
        let xs = random_features(&mut rng, n);
        let paths = all_paths(n, l);
        let scores: Vec<f64> = paths.iter().map(|p| path_score(&m, &xs, p)).collect();
        let mut best = 0;
        for k in 1..scores.len() {
            if scores[k] > scores[best] {
                best = k;
            }
        }
        let (decoded, score) = m.viterbi(&xs);
        ensure!(decoded == paths[best], "case {case}: viterbi {decoded:?}, enumeration {:?}", paths[best]);
        ensure!((score - scores[best]).abs() <= 1e-9, "case {case}: best score {score} vs {}", scores[best]);
        let err = (m.log_partition(&xs) - log_sum_exp(&scores)).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-9, "case {case}: log partition off by {err:e}");
    }
    Ok(format!("200 models, worst |log Z error| {worst:.1e}"))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let eps = 1e-5;
    let l2 = 1e-4;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for case in 0..20 {
        let l = rng.gen_range(2..=4);
        let m = random_model(&mut rng, l, 1.0);
        let n = rng.gen_range(1..=5);
        let mut gold: Vec<Option<usize>> = (0..n).map(|_| Some(rng.gen_range(0..l))).collect();
        if n > 2 {
            gold[rng.gen_range(0..n)] = None;
        }
        let instance = WindowInstance {
            window_id: format!("w{case}"),
            dialogue_id: "d".into(),
            sentence_ids: (0..n).map(|i| format!("s{i}")).collect(),
            features: random_features(&mut rng, n),
            gold,
            offsets: None,
        };
        let instances = [instance];
        let (_, grad) = objective_and_gradient(&m, &instances, l2);

        let mut params: Vec<(String, f64, Accessor)> = Vec::new();
        for y in 0..l {
            params.push((format!("start[{y}]"), grad.start[y], Box::new(move |m| &mut m.start[y])));
            params.push((format!("end[{y}]"), grad.end[y], Box::new(move |m| &mut m.end[y])));
        }
        for k in 0..l * l {
            params.push((format!("trans[{k}]"), grad.transitions[k], Box::new(move |m| &mut m.transitions[k])));
        }
        for f in 0..DIM {
            for y in 0..l {
                params.push((format!("emit[{f},{y}]"), grad.emission(f, y), Box::new(move |m| &mut m.emissions[f * l + y])));
            }
        }
        for (name, analytic, get) in params {
            let mut probe = m.clone();
            let orig = *get(&mut probe);
            *get(&mut probe) = orig + eps;
            let up = objective(&probe, &instances, l2);
            *get(&mut probe) = orig - eps;
            let down = objective(&probe, &instances, l2);
            let numeric = (up - down) / (2.0 * eps);
            // Relative to the larger magnitude; gradients below 1e-6 are compared absolutely.
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            ensure!(rel <= 1e-4, "case {case} {name}: analytic {analytic:e}, numeric {numeric:e}");
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok(format!("20 instances, {checked} parameters, worst relative error {worst:.1e}"))
}

fn marginal_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for case in 0..2000 {
        let l = rng.gen_range(1..=18);
        let n = rng.gen_range(1..=40);
        let scale = [0.1, 1.0, 5.0, 30.0][case % 4];
        let m = random_model(&mut rng, l, scale);
        let xs = random_features(&mut rng, n);
        let e = m.emission_scores(&xs, None);
        let p = m.potentials(&e);
        let clamp: Vec<Option<usize>> = (0..n).map(|_| rng.gen_bool(0.3).then(|| rng.gen_range(0..l))).collect();
        for mask in [None, Some(clamp.as_slice())] {
            let marg = crf::marginals(&p, mask);
            for i in 0..n {
                let row = &marg.node[i * l..(i + 1) * l];
                ensure!(row.iter().all(|x| x.is_finite() && *x >= -1e-12), "case {case}: bad marginal {row:?}");
                let err = (row.iter().sum::<f64>() - 1.0).abs();
                worst = worst.max(err);
                ensure!(err <= 1e-9, "case {case} position {i}: sums to 1 {err:+e}");
            }
        }
        // Small windows: compare against enumeration too.
        if n <= 4 && l <= 5 {
            let paths = all_paths(n, l);
            let scores: Vec<f64> = paths.iter().map(|y| path_score(&m, &xs, y)).collect();
            let z = log_sum_exp(&scores);
            let marg = crf::marginals(&p, None);
            for i in 0..n {
                for y in 0..l {
                    let want: f64 = paths.iter().zip(&scores).filter(|(p, _)| p[i] == y).map(|(_, s)| (s - z).exp()).sum();
                    ensure!((marg.node[i * l + y] - want).abs() <= 1e-9, "case {case}: marginal ({i},{y})");
                }
            }
        }
    }
    Ok(format!("2000 windows up to 40 x 18, worst |sum - 1| {worst:.1e}"))
}

// ---- segmentation ---------------------------------------------------------

fn fuzz_dialogue(rng: &mut ChaCha8Rng, k: usize) -> Dialogue {
    let speakers = rng.gen_range(1..=6);
    let count = rng.gen_range(0..60);
    let mut t = 1_600_000_000i64;
    let messages = (0..count)
        .map(|i| {
            t += match rng.gen_range(0..10) {
                0..=5 => rng.gen_range(0..120),
                6..=8 => rng.gen_range(0..3600),
                _ => rng.gen_range(1800..100_000),
            };
            let parts = rng.gen_range(1..=4);
            let text = (0..parts).map(|p| format!("Part {p} here.")).collect::<Vec<_>>().join(" ");
            Message {
                id: format!("d{k}:{i}"),
                speaker: format!("S{}", rng.gen_range(0..speakers)),
                timestamp: Utc.timestamp_opt(t, 0).unwrap(),
                text,
                dialogue_id: format!("d{k}"),
            }
        })
        .collect();
    Dialogue::new(format!("d{k}"), messages)
}

/// Message indices spanned by each window, checking the windows tile the
/// sentence sequence and never cut a message.
fn message_spans(d: &Dialogue, windows: &[Window]) -> Result<Vec<(usize, usize)>, String> {
    // Sentence position -> owning message, rebuilt from sentence message ids.
    let owner: Vec<usize> = d
        .sentences()
        .iter()
        .map(|s| d.messages().iter().position(|m| m.id == s.message_id).unwrap())
        .collect();
    let mut next = 0;
    let mut spans = Vec::new();
    for w in windows {
        ensure!(w.sentences.start == next && w.sentences.end > w.sentences.start, "windows do not tile at {next}");
        ensure!(
            w.sentence_ids == d.sentences()[w.sentences.clone()].iter().map(|s| s.id.clone()).collect::<Vec<_>>(),
            "window {} ids disagree with its range",
            w.id
        );
        let (first, last) = (owner[w.sentences.start], owner[w.sentences.end - 1]);
        ensure!(w.sentences.start == 0 || owner[w.sentences.start - 1] != first, "window {} starts mid-message", w.id);
        ensure!(w.sentences.end == owner.len() || owner[w.sentences.end] != last, "window {} ends mid-message", w.id);
        spans.push((first, last));
        next = w.sentences.end;
    }
    ensure!(next == owner.len(), "windows cover {next} of {} sentences", owner.len());
    Ok(spans)
}

fn segmentation_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let mut windows = 0usize;
    for k in 0..10_000 {
        let d = fuzz_dialogue(&mut rng, k);
        let lines = rng.gen_range(1..=12);
        let gap = Duration::from_secs(rng.gen_range(1..=180) * 60);
        let speakers = rng.gen_range(1..=3);
        let cases = [
            (Strategy::Message, SegmentParams::for_strategy(Strategy::Message)),
            (Strategy::Static, SegmentParams { line_limit: Some(lines), ..SegmentParams::default() }),
            (Strategy::Time, SegmentParams { line_limit: Some(lines), gap_limit: Some(gap), ..SegmentParams::default() }),
            (Strategy::Speaker, SegmentParams { line_limit: Some(lines), speaker_limit: Some(speakers), ..SegmentParams::default() }),
            (Strategy::Speaker, SegmentParams::for_strategy(Strategy::Speaker)),
        ];
        for (strategy, params) in cases {
            let ws = segment(&d, strategy, &params);
            let spans = message_spans(&d, &ws).map_err(|e| format!("dialogue {k} {strategy}: {e}"))?;
            windows += ws.len();
            for (first, last) in spans {
                let msgs = &d.messages()[first..=last];
                match strategy {
                    Strategy::Message => ensure!(first == last, "dialogue {k}: message window spans {first}..={last}"),
                    Strategy::Time => {
                        let limit = params.gap_limit.unwrap();
                        for pair in msgs.windows(2) {
                            let delta = (pair[1].timestamp - pair[0].timestamp).to_std().unwrap();
                            ensure!(delta <= limit, "dialogue {k}: gap {delta:?} inside a time window (limit {limit:?})");
                        }
                    }
                    Strategy::Speaker => {
                        let mut seen: Vec<&str> = msgs.iter().map(|m| m.speaker.as_str()).collect();
                        seen.sort_unstable();
                        seen.dedup();
                        let bound = params.speaker_limit.unwrap();
                        ensure!(seen.len() <= bound, "dialogue {k}: {} speakers in one window (limit {bound})", seen.len());
                    }
                    Strategy::Static => {}
                }
            }
        }
    }

    let figure = r#"{"ts":"2021-03-01T10:00:00Z","speaker":"PG","text":"BR, don't change rigid body boundaries or origin without letting me know."}
{"ts":"2021-03-01T10:02:00Z","speaker":"BR","text":"ill check"}
{"ts":"2021-03-01T10:05:00Z","speaker":"ER","text":"Since we are doing distance calculations, please put a table listing the following: location of origin, distance to top of object, distance to bottom of object"}
"#;
    let d = parse_transcript(figure.as_bytes(), "figure").map_err(|e| e.to_string())?;
    let ws = segment(&d, Strategy::Speaker, &SegmentParams::for_strategy(Strategy::Speaker));
    let groups: Vec<Vec<String>> = message_spans(&d, &ws)?
        .into_iter()
        .map(|(a, b)| d.messages()[a..=b].iter().map(|m| m.speaker.clone()).collect())
        .collect();
    ensure!(groups == [vec!["PG", "BR"], vec!["ER"]], "figure fixture split as {groups:?}");
    Ok(format!("10000 dialogues, {windows} windows checked; figure fixture [[PG, BR], [ER]]"))
}

// ---- learning -------------------------------------------------------------

fn synthetic_learning() -> Outcome {
    let taxonomy = Taxonomy::shipped();
    let mut lines = Vec::new();
    for seed in [1u64, 2, 3] {
        let corpus = generate(&SynthConfig::with_seed(seed)).map_err(|e| e.to_string())?;
        let sentences: usize = corpus.dialogues.iter().map(|d| d.sentences().len()).sum();
        let mut labels: Vec<String> = corpus
            .dialogues
            .iter()
            .flat_map(|d| d.sentences())
            .filter_map(|s| s.gold_label.as_deref().map(|g| taxonomy.collapse(g).unwrap().to_string()))
            .collect();
        labels.sort();
        labels.dedup();
        ensure!(labels.len() == 18, "seed {seed}: corpus uses {} reduced labels", labels.len());

        let mut config = ExperimentConfig::with_seed(seed);
        config.arms.retain(|a| matches!(a.name(), "baseline" | "1-line" | "10-line"));
        let report = run_experiment(&corpus.dialogues, &taxonomy, &config).map_err(|e| e.to_string())?;
        let acc = |name: &str| report.arm(name).map(|a| a.dev_accuracy).ok_or(format!("no {name} arm"));
        let (base, one, ten) = (acc("baseline")?, acc("1-line")?, acc("10-line")?);
        let majority = report.majority_dev;
        lines.push(format!(
            "seed {seed} ({sentences} sentences): majority {majority:.3} baseline {base:.3} 1-line {one:.3} 10-line {ten:.3}"
        ));
        ensure!(ten >= majority + 0.15, "{}; 10-line is not 15 points above majority", lines.join("; "));
        ensure!(base < one && one < ten, "{}; ordering baseline < 1-line < 10-line broken", lines.join("; "));
    }
    Ok(lines.join("; "))
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    1.0 - dot / (nu * nv)
}

fn taxonomy_validation() -> Outcome {
    let taxonomy = Taxonomy::shipped();
    let labels: Vec<String> = taxonomy.labels().iter().map(|l| l.id.clone()).collect();
    let corpus = clustered_corpus(&taxonomy, 12, 21).map_err(|e| e.to_string())?;
    let examples: Vec<(String, String)> = corpus
        .sentences()
        .iter()
        .filter_map(|s| s.gold_label.clone().map(|g| (s.text.clone(), g)))
        .collect();
    let model = train_baseline(&examples, labels.clone(), taxonomy.hash(), &BaselineConfig::with_seed(21))
        .map_err(|e| e.to_string())?;
    let c = compute_centroids(&model, std::slice::from_ref(&corpus), &labels, CentroidMode::SentenceMean)
        .map_err(|e| e.to_string())?;
    ensure!(c.missing.is_empty(), "labels without sentences: {:?}", c.missing);

    // Distances recomputed here from the centroid vectors.
    let cs = &c.centroids;
    let mut all = Vec::new();
    let mut by_class: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for i in 0..cs.len() {
        for j in i + 1..cs.len() {
            let d = cosine(&cs[i].vector, &cs[j].vector);
            all.push(d);
            let (ri, rj) = (taxonomy.root(&cs[i].label).unwrap(), taxonomy.root(&cs[j].label).unwrap());
            if ri == rj {
                by_class.entry(ri.to_string()).or_default().push(d);
            }
        }
    }
    let overall = all.iter().sum::<f64>() / all.len() as f64;
    let report = hierarchy_consistency_report(cs, &taxonomy).map_err(|e| e.to_string())?;
    ensure!((report.overall - overall).abs() < 1e-9, "library overall {} vs {overall}", report.overall);
    let mut parts = Vec::new();
    for (class, ds) in &by_class {
        let mean = ds.iter().sum::<f64>() / ds.len() as f64;
        parts.push(format!("{class} {mean:.3}"));
        ensure!(mean < overall, "{class} within-class mean {mean:.4} not below overall {overall:.4}");
    }
    ensure!(by_class.len() == 9, "only {} classes with two or more labels", by_class.len());
    Ok(format!("overall {overall:.3}; {}", parts.join(", ")))
}

// ---- metrics --------------------------------------------------------------

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 })
}

/// Recount a metric from its evidence lists and the pair table.
fn from_evidence(report: &MetricsReport, name: &str) -> Option<f64> {
    let m = report.metric(name)?;
    match m.unit {
        Unit::Seconds => median(
            m.evidence
                .pairs
                .iter()
                .filter_map(|id| report.pairs.iter().find(|p| &p.initiator_sentence_id == id)?.latency_secs)
                .collect(),
        ),
        unit => {
            let scale = if unit == Unit::Per100 { 100.0 } else { 1.0 };
            let den = m.evidence.denominator.len();
            (den > 0).then(|| scale * m.evidence.numerator.len() as f64 / den as f64)
        }
    }
}

fn metrics_fixture() -> Outcome {
    let open = |name: &str| BufReader::new(File::open(core_fixture(name)).unwrap());
    let raw = parse_transcript(open("metrics_fixture.jsonl"), "fixture").map_err(|e| e.to_string())?;
    let records = read_annotations(open("metrics_fixture_labels.jsonl")).map_err(|e| e.to_string())?;
    let d = attach_annotations(&raw, &records).map_err(|e| e.to_string())?;
    ensure!(d.sentences().len() == 20, "fixture has {} sentences", d.sentences().len());
    let report = build_report(std::slice::from_ref(&d), &Taxonomy::shipped(), &MetricsConfig::default());

    let hand: [(&str, f64); 11] = [
        ("loop_closure_rate", 0.8),
        ("clarification_rate", 0.25),
        ("median_response_latency", 240.0),
        ("assignment_uptake_rate", 0.5),
        ("assignment_decline_rate", 0.5),
        ("comradery_rate", 10.0),
        ("appreciation_rate", 5.0),
        ("frustration_rate", 5.0),
        ("blame_rate", 5.0),
        ("proposal_rate", 5.0),
        ("reject_rate", 5.0),
    ];
    for (name, want) in hand {
        let got = report.metric(name).and_then(|m| m.value);
        ensure!(got == Some(want), "{name}: {got:?}, hand value {want}");
    }

    let golden: serde_json::Value = serde_json::from_reader(open("metrics_golden.json")).map_err(|e| e.to_string())?;
    let actual = serde_json::to_value(&report).map_err(|e| e.to_string())?;
    ensure!(actual == golden, "report differs from the golden file");

    for m in &report.metrics {
        let again = from_evidence(&report, &m.name);
        ensure!(again == m.value, "{}: reported {:?}, evidence gives {again:?}", m.name, m.value);
    }
    Ok(format!("{} metrics match hand values and golden report; all recomputed from evidence", report.metrics.len()))
}

// ---- split ----------------------------------------------------------------

fn runs(mut xs: Vec<usize>) -> usize {
    xs.sort_unstable();
    xs.windows(2).filter(|w| w[1] != w[0] + 1).count() + usize::from(!xs.is_empty())
}

fn split_protocol() -> Outcome {
    let corpus = generate(&SynthConfig::with_seed(9)).map_err(|e| e.to_string())?;
    let mut sets: Vec<(String, Vec<Window>)> = Vec::new();
    for (name, strategy, lines) in [("10-line", Strategy::Static, 10), ("1-line", Strategy::Message, 1), ("5-line", Strategy::Static, 5)] {
        let params = SegmentParams { line_limit: Some(lines), ..SegmentParams::for_strategy(strategy) };
        let ws: Vec<Window> = corpus.dialogues.iter().flat_map(|d| segment(d, strategy, &params)).collect();
        sets.push((name.into(), ws));
    }
    let ratios = SplitRatios { train: 0.80, dev: 0.05, test: 0.15 };
    for (name, windows) in &sets {
        let n = windows.len();
        for seed in 0..100u64 {
            let split = split_corpus(windows, ratios, seed).map_err(|e| e.to_string())?;
            let index = |ids: &[String]| -> Vec<usize> {
                ids.iter().map(|id| windows.iter().position(|w| &w.id == id).unwrap()).collect()
            };
            let (train, dev, test) = (index(&split.train), index(&split.dev), index(&split.test));
            let mut all: Vec<usize> = train.iter().chain(&dev).chain(&test).copied().collect();
            all.sort_unstable();
            ensure!(all == (0..n).collect::<Vec<_>>(), "{name} seed {seed}: partitions overlap or miss windows");
            ensure!(runs(dev.clone()) == 1, "{name} seed {seed}: dev in {} runs", runs(dev.clone()));
            ensure!(runs(test.clone()) == 2, "{name} seed {seed}: test in {} runs", runs(test.clone()));
            for (part, got, want) in [("train", train.len(), 0.80), ("dev", dev.len(), 0.05), ("test", test.len(), 0.15)] {
                let target = want * n as f64;
                ensure!((got as f64 - target).abs() <= 1.0, "{name} seed {seed}: {part} has {got} windows, target {target:.1}");
            }
        }
    }
    let sizes: Vec<String> = sets.iter().map(|(n, w)| format!("{n} {}", w.len())).collect();
    Ok(format!("100 seeds over window sets ({})", sizes.join(", ")))
}

// ---- end to end -----------------------------------------------------------

fn pipeline_smoke() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let store = dir.path().join("store");
    let gen = dir.path().join("gen");
    let run = |args: &[&str]| -> Result<String, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_chatact"))
            .arg("--store")
            .arg(&store)
            .args(args)
            .env_remove("CHATACT_STORE")
            .output()
            .map_err(|e| e.to_string())?;
        let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
        ensure!(
            out.status.code() == Some(0),
            "`{}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
        Ok(stdout)
    };
    let path = |p: &Path| p.to_str().unwrap().to_string();
    run(&["generate", "--out", &path(&gen), "--seed", "5"])?;
    run(&[
        "ingest",
        &path(&gen.join("transcript.jsonl")),
        "--annotations",
        &path(&gen.join("annotations.jsonl")),
    ])?;
    let out = run(&["segment", "--strategy", "static", "--lines", "10"])?;
    let windows_hash = out.split_whitespace().nth(1).unwrap_or_default().trim_end_matches(':').to_string();
    let out = run(&["train", "--windows", &windows_hash, "--seed", "5"])?;
    let model = out.lines().next().and_then(|l| l.strip_prefix("model ")).ok_or("no model hash")?.to_string();
    let dev = out.lines().find_map(|l| l.strip_prefix("dev accuracy ")).unwrap_or("?").to_string();
    let report_hash = out.lines().find_map(|l| l.strip_prefix("report ")).ok_or("no report hash")?.to_string();
    run(&["label", "--model", &model])?;
    let report_path = dir.path().join("metrics.json");
    run(&["metrics", "--out", &path(&report_path)])?;

    // Every artifact reloads.
    let s = ProjectStore::open(&store).map_err(|e| e.to_string())?;
    let (entry, loaded) = s.load_model(&model).map_err(|e| e.to_string())?;
    ensure!(entry.kind == ModelKind::Crf && matches!(loaded, StoredModel::Crf(_)), "model reloads as {:?}", entry.kind);
    let windows = s.load_windows(&windows_hash).map_err(|e| e.to_string())?;
    s.load_report(&report_hash).map_err(|e| e.to_string())?;
    s.taxonomy().map_err(|e| e.to_string())?;
    let dialogues = s.annotated_dialogues().map_err(|e| e.to_string())?;
    let sentences: usize = dialogues.iter().map(|d| d.sentences().len()).sum();
    let predicted = dialogues.iter().flat_map(|d| d.sentences()).filter(|s| s.predicted_label.is_some()).count();
    ensure!(predicted == sentences, "{predicted} of {sentences} sentences carry predictions");
    let report: MetricsReport =
        serde_json::from_reader(File::open(&report_path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure!(report.metrics.len() == 13, "metrics report has {} metrics", report.metrics.len());
    Ok(format!(
        "{} dialogues, {sentences} sentences, {} windows, dev accuracy {dev}",
        dialogues.len(),
        windows.len()
    ))
}
