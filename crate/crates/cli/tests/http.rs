use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chatact::corpus::{attach_annotations, parse_transcripts, AnnotationRecord, AnnotationSource, Dialogue};
use chatact::labeler::{train_baseline, BaselineConfig};
use chatact::metrics::MetricsConfig;
use chatact::taxonomy::Taxonomy;
use chatact_cli::server::{router, AppState};
use chatact_cli::store::{ModelEntry, ModelKind, ProjectStore, StoredModel};
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

const TRANSCRIPT: &str = r#"{"ts": "2021-03-01T09:00:00Z", "speaker": "PG", "text": "Can you send me the deploy logs?", "id": "m1", "dialogue_id": "team"}
{"ts": "2021-03-01T09:03:00Z", "speaker": "BR", "text": "Thanks, will do.", "id": "m2", "dialogue_id": "team"}
{"ts": "2021-03-01T09:05:00Z", "speaker": "ER", "text": "Is the build green?", "id": "m3", "dialogue_id": "team"}
{"ts": "2021-03-01T09:07:00Z", "speaker": "PG", "text": "Yes, it passed.", "id": "m4", "dialogue_id": "team"}
{"ts": "2021-03-01T09:09:00Z", "speaker": "BR", "text": "Nice work everyone.", "id": "m5", "dialogue_id": "team"}
{"ts": "2021-03-01T09:10:00Z", "speaker": "ER", "text": "Who owns the release notes?", "id": "m6", "dialogue_id": "team"}
"#;

fn record(id: &str, label: &str) -> AnnotationRecord {
    AnnotationRecord {
        sentence_id: id.into(),
        label: label.into(),
        annotator: "hand".into(),
        char_start: None,
        char_end: None,
        created_at: Utc.with_ymd_and_hms(2021, 3, 2, 0, 0, 0).unwrap(),
        source: AnnotationSource::Human,
    }
}

fn seeded_store(dir: &TempDir) -> (ProjectStore, Dialogue) {
    let store = ProjectStore::init(dir.path().join("store")).unwrap();
    store.set_taxonomy(&Taxonomy::shipped()).unwrap();
    let dialogues = parse_transcripts(TRANSCRIPT.as_bytes(), "team").unwrap();
    store.add_corpus(&dialogues).unwrap();
    let d = dialogues.into_iter().next().unwrap();
    let gold = [
        record("m1/0", "Request-Help"),
        record("m2/0", "Social-Appreciation"),
        record("m3/0", "Query-Status-TaskOrIssue"),
        record("m4/0", "Inform-InResponse"),
        record("m5/0", "Social-Comradery"),
    ];
    store.append(&d, &Taxonomy::shipped(), &gold).unwrap();
    (store, d)
}

fn app(store: ProjectStore) -> Router {
    router(Arc::new(AppState::load(store, MetricsConfig::default()).unwrap()), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

async fn raw_post(app: &Router, uri: &str, body: &str) -> StatusCode {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    app.clone().oneshot(req).await.unwrap().status()
}

fn log_bytes(dir: &TempDir) -> Vec<Vec<u8>> {
    let mut out: Vec<_> = std::fs::read_dir(dir.path().join("store/annotations"))
        .unwrap()
        .map(|e| std::fs::read(e.unwrap().path()).unwrap())
        .collect();
    out.sort();
    out
}

#[tokio::test]
async fn health_and_taxonomy() {
    let dir = TempDir::new().unwrap();
    let (store, _) = seeded_store(&dir);
    let app = app(store);
    let (s, v) = call(&app, "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");

    let (s, v) = call(&app, "GET", "/taxonomy", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["hash"], Taxonomy::shipped().hash());
    assert_eq!(v["top_level"].as_array().unwrap().len(), 9);
    let labels = v["labels"].as_array().unwrap();
    let appreciation = labels.iter().find(|l| l["id"] == "Social-Appreciation").unwrap();
    assert_eq!(appreciation["root"], "Social");
    let hints = appreciation["hints"].as_array().unwrap();
    assert!(hints.iter().any(|h| h["prefer"] == "Acknowledge-Accept"), "{hints:?}");
    let accept = labels.iter().find(|l| l["id"] == "Acknowledge-Accept").unwrap();
    assert_eq!(accept["in_reduced_set"], true);
    let progress = labels.iter().find(|l| l["id"] == "Inform-Status-TaskOrIssue-Progress").unwrap();
    assert_eq!(progress["collapses_to"], "Inform");
}

#[tokio::test]
async fn dialogue_views() {
    let dir = TempDir::new().unwrap();
    let (store, _) = seeded_store(&dir);
    let app = app(store);
    let (s, v) = call(&app, "GET", "/dialogues", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v[0]["id"], "team");
    assert_eq!(v[0]["gold"], 5);
    assert_eq!(v[0]["sentences"], 6);

    let (s, v) = call(&app, "GET", "/dialogues/team", None).await;
    assert_eq!(s, StatusCode::OK);
    let sentences = v["sentences"].as_array().unwrap();
    assert_eq!(sentences.len(), 6);
    assert_eq!(sentences[0]["speaker"], "PG");
    assert_eq!(sentences[0]["effective_label"], "Request-Help");
    assert_eq!(sentences[0]["root"], "Request");
    assert!(sentences[5]["effective_label"].is_null());
    assert!(v.get("windows").is_none());

    let (s, v) = call(&app, "GET", "/dialogues/team?view=windows&strategy=static&lines=4", None).await;
    assert_eq!(s, StatusCode::OK);
    let windows = v["windows"].as_array().unwrap();
    assert_eq!(windows.len(), 2);
    assert_eq!(windows[0]["sentence_ids"].as_array().unwrap().len(), 4);

    let (s, _) = call(&app, "GET", "/dialogues/team?view=windows&strategy=bogus", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = call(&app, "GET", "/dialogues/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["error"].as_str().unwrap().contains("nope"));
}

#[tokio::test]
async fn rejects_bad_annotations_without_writing() {
    let dir = TempDir::new().unwrap();
    let (store, _) = seeded_store(&dir);
    let app = app(store);
    let before = log_bytes(&dir);

    let post = |body: Value| call(&app, "POST", "/dialogues/team/annotations", Some(body));
    let (s, v) = post(json!({"sentence_id": "m6/0", "label": "NotALabel", "annotator": "ann"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    let (s, _) = post(json!({"sentence_id": "m6/0", "label": "Query", "annotator": "ann", "char_start": 5, "char_end": 500})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(json!({"sentence_id": "m99/0", "label": "Query", "annotator": "ann"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    // One bad record in a batch rejects the batch.
    let (s, _) = post(json!([
        {"sentence_id": "m6/0", "label": "Query", "annotator": "ann"},
        {"sentence_id": "m5/0", "label": "Nope", "annotator": "ann"}
    ]))
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(json!([])).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(raw_post(&app, "/dialogues/team/annotations", "{not json").await, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/dialogues/ghost/annotations", Some(json!({"sentence_id": "m1/0", "label": "Query", "annotator": "a"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    assert_eq!(log_bytes(&dir), before);
}

#[tokio::test]
async fn correction_closes_the_loop() {
    let dir = TempDir::new().unwrap();
    let (store, _) = seeded_store(&dir);
    let app = app(store);

    let (s, v) = call(&app, "GET", "/dialogues/team/metrics", None).await;
    assert_eq!(s, StatusCode::OK);
    let closure = metric(&v, "loop_closure_rate");
    assert_eq!(closure["denominator"], 2);
    assert_eq!(closure["numerator"], 1);
    assert!(!ids(&closure["evidence"]["numerator"]).contains(&"m1/0".to_string()));

    let (s, v) = call(
        &app,
        "POST",
        "/dialogues/team/annotations",
        Some(json!({"sentence_id": "m2/0", "label": "Acknowledge-Accept", "annotator": "reviewer", "source": "corrected"})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["appended"], 1);
    assert_eq!(v["log_length"], 6);

    let (_, v) = call(&app, "GET", "/dialogues/team/metrics", None).await;
    let closure = metric(&v, "loop_closure_rate");
    assert_eq!(closure["numerator"], 2);
    assert_eq!(closure["value"], 1.0);
    assert!(ids(&closure["evidence"]["numerator"]).contains(&"m1/0".to_string()));
    let pair = v["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["initiator_sentence_id"] == "m1/0")
        .unwrap();
    assert_eq!(pair["responder_sentence_id"], "m2/0");
    assert_eq!(pair["response_kind"], "Acknowledge-Accept");
    assert_eq!(pair["latency_secs"], 180.0);

    let (_, v) = call(&app, "GET", "/dialogues/team", None).await;
    assert_eq!(v["sentences"][1]["effective_label"], "Acknowledge-Accept");
    assert_eq!(v["sentences"][1]["gold_source"], "corrected");

    let (s, v) = call(&app, "GET", "/dialogues/team/metrics?speaker=PG", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(metric(&v, "loop_closure_rate")["denominator"], 1);
    let (s, _) = call(&app, "GET", "/dialogues/team/metrics?speaker=ZZ", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = call(&app, "GET", "/dialogues/team/metrics?format=text", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v.as_str().unwrap().contains("loop_closure_rate"));
    let (s, _) = call(&app, "GET", "/dialogues/team/metrics?format=xml", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

fn metric<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["metrics"].as_array().unwrap().iter().find(|m| m["name"] == name).unwrap()
}

fn ids(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect()
}

#[tokio::test]
async fn reads_do_not_touch_the_log() {
    let dir = TempDir::new().unwrap();
    let (store, _) = seeded_store(&dir);
    let app = app(store);
    let before = log_bytes(&dir);
    for uri in [
        "/health",
        "/taxonomy",
        "/models",
        "/dialogues",
        "/dialogues/team",
        "/dialogues/team?view=windows&strategy=speaker&speakers=2",
        "/dialogues/team/annotations",
        "/dialogues/team/metrics",
        "/dialogues/team/metrics?speaker=BR&format=text",
    ] {
        let (s, _) = call(&app, "GET", uri, None).await;
        assert_eq!(s, StatusCode::OK, "{uri}");
    }
    assert_eq!(log_bytes(&dir), before);
    assert!(std::fs::read_dir(dir.path().join("store/reports")).unwrap().next().is_none());
}

#[tokio::test]
async fn replaying_the_log_gives_the_same_labels() {
    let dir = TempDir::new().unwrap();
    let (store, d) = seeded_store(&dir);
    let app = app(store);
    for (id, label) in [("m6/0", "Query"), ("m2/0", "Acknowledge-Accept"), ("m6/0", "Query-Admin"), ("m5/0", "Social")] {
        let (s, _) = call(
            &app,
            "POST",
            "/dialogues/team/annotations",
            Some(json!({"sentence_id": id, "label": label, "annotator": "r", "source": "corrected"})),
        )
        .await;
        assert_eq!(s, StatusCode::CREATED);
    }
    let (_, view) = call(&app, "GET", "/dialogues/team", None).await;
    let (_, log) = call(&app, "GET", "/dialogues/team/annotations", None).await;
    let records: Vec<AnnotationRecord> = serde_json::from_value(log).unwrap();
    assert_eq!(records.len(), 9);

    let replayed = attach_annotations(&d, &records).unwrap();
    let reopened = ProjectStore::open(dir.path().join("store")).unwrap();
    let from_disk = attach_annotations(&d, &reopened.log("team").unwrap()).unwrap();
    for (i, s) in replayed.sentences().iter().enumerate() {
        let label = s.effective_label().map(|e| e.0);
        assert_eq!(view["sentences"][i]["effective_label"].as_str(), label, "{}", s.id);
        assert_eq!(from_disk.sentences()[i].effective_label(), s.effective_label());
    }
    assert_eq!(replayed.sentences()[5].effective_label().unwrap().0, "Query-Admin");
}

#[tokio::test]
async fn label_with_models() {
    let dir = TempDir::new().unwrap();
    let (store, d) = seeded_store(&dir);
    let taxonomy = Taxonomy::shipped();
    let examples: Vec<(String, String)> = d.sentences().iter().map(|s| (s.text.clone(), "Inform".to_string())).collect();
    let mut config = BaselineConfig::with_seed(1);
    config.dim = 8;
    config.buckets = 1 << 10;
    config.epochs = 2;
    let model = train_baseline(&examples, taxonomy.reduced_set().to_vec(), taxonomy.hash(), &config).unwrap();
    let entry = ModelEntry {
        hash: String::new(),
        kind: ModelKind::Baseline,
        taxonomy_hash: String::new(),
        created_at: Utc::now(),
        strategy: None,
        params: chatact::segmentation::SegmentParams::for_strategy(chatact::segmentation::Strategy::Static),
        seed: 1,
        ratios: chatact::corpus::SplitRatios { train: 0.8, dev: 0.05, test: 0.15 },
    };
    let hash = store.put_model(&StoredModel::Baseline(model), entry).unwrap();
    let app = app(store);

    let (s, _) = call(&app, "POST", "/dialogues/team/label", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/dialogues/team/label?model=ffffffff", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, v) = call(&app, "POST", &format!("/dialogues/team/label?model={}", &hash[..10]), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["predicted"], 6);
    assert_eq!(v["log_length"], 11);
    let (_, view) = call(&app, "GET", "/dialogues/team", None).await;
    let last = &view["sentences"][5];
    assert!(last["gold_label"].is_null());
    assert_eq!(last["effective_source"], "model");
    assert_eq!(last["predicted_label"], "Inform");
    // Gold wins over a prediction.
    assert_eq!(view["sentences"][0]["effective_label"], "Request-Help");

    let (s, v) = call(&app, "GET", "/models", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v[0]["hash"], hash.as_str());
}

#[tokio::test]
async fn model_from_another_taxonomy_conflicts() {
    let dir = TempDir::new().unwrap();
    let (store, d) = seeded_store(&dir);
    let shipped = Taxonomy::shipped();
    let text = shipped
        .to_toml_string()
        .replacen("Thanks that functions", "A thanks that functions", 1);
    let other = Taxonomy::from_toml_str(&text).unwrap();
    assert_ne!(other.hash(), shipped.hash());
    // Register the other taxonomy, then switch back before any model exists.
    store.set_taxonomy(&other).unwrap();
    store.set_taxonomy(&shipped).unwrap();

    let examples: Vec<(String, String)> = d.sentences().iter().map(|s| (s.text.clone(), "Inform".to_string())).collect();
    let mut config = BaselineConfig::with_seed(1);
    config.dim = 8;
    config.buckets = 1 << 10;
    config.epochs = 1;
    let model = train_baseline(&examples, other.reduced_set().to_vec(), other.hash(), &config).unwrap();
    let entry = ModelEntry {
        hash: String::new(),
        kind: ModelKind::Baseline,
        taxonomy_hash: String::new(),
        created_at: Utc::now(),
        strategy: None,
        params: chatact::segmentation::SegmentParams::for_strategy(chatact::segmentation::Strategy::Static),
        seed: 1,
        ratios: chatact::corpus::SplitRatios { train: 0.8, dev: 0.05, test: 0.15 },
    };
    let hash = store.put_model(&StoredModel::Baseline(model), entry).unwrap();
    assert!(store.set_taxonomy(&other).is_err());
    let app = app(store);
    let before = log_bytes(&dir);
    let (s, v) = call(&app, "POST", &format!("/dialogues/team/label?model={hash}"), None).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    assert_eq!(log_bytes(&dir), before);
}

#[test]
fn concurrent_writers_lose_nothing() {
    let dir = TempDir::new().unwrap();
    let (store, _) = seeded_store(&dir);
    let app = app(store);
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(8).build().unwrap();
    runtime.block_on(async {
        let mut tasks = Vec::new();
        for w in 0..100 {
            let app = app.clone();
            tasks.push(tokio::spawn(async move {
                let body = json!([
                    {"sentence_id": "m6/0", "label": "Query", "annotator": format!("w{w}")},
                    {"sentence_id": "m5/0", "label": "Social-Comradery", "annotator": format!("w{w}")}
                ]);
                call(&app, "POST", "/dialogues/team/annotations", Some(body)).await.0
            }));
        }
        for t in tasks {
            assert_eq!(t.await.unwrap(), StatusCode::CREATED);
        }
        let (_, log) = call(&app, "GET", "/dialogues/team/annotations", None).await;
        let records: Vec<AnnotationRecord> = serde_json::from_value(log).unwrap();
        assert_eq!(records.len(), 5 + 200);
        for w in 0..100 {
            let mine: Vec<_> = records.iter().filter(|r| r.annotator == format!("w{w}")).collect();
            assert_eq!(mine.len(), 2, "writer {w}");
        }
    });
    let reopened = ProjectStore::open(dir.path().join("store")).unwrap();
    assert_eq!(reopened.log("team").unwrap().len(), 205);
}
