//! HTTP JSON service behind the review UI.
//!
//! Dialogues and the taxonomy are loaded once at startup. Labels are folded
//! from the annotation log on every request, so reads see every completed
//! append and never write.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chatact::corpus::{attach_annotations, AnnotationRecord, AnnotationSource, Dialogue};
use chatact::metrics::{build_report, build_speaker_report, MetricsConfig};
use chatact::segmentation::{segment, SegmentParams, Strategy};
use chatact::taxonomy::{PriorityRule, Taxonomy};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::pipeline::{check_binding, prediction_records, predict};
use crate::store::{ProjectStore, StoreError};

pub struct AppState {
    pub store: ProjectStore,
    pub taxonomy: Taxonomy,
    pub dialogues: BTreeMap<String, Dialogue>,
    pub metrics: MetricsConfig,
}

impl AppState {
    pub fn load(store: ProjectStore, metrics: MetricsConfig) -> Result<Self, StoreError> {
        let taxonomy = store.taxonomy()?;
        let dialogues = store
            .dialogues()?
            .into_iter()
            .map(|d| (d.id().to_string(), d))
            .collect();
        Ok(Self {
            store,
            taxonomy,
            dialogues,
            metrics,
        })
    }

    fn dialogue(&self, id: &str) -> Result<&Dialogue, ApiError> {
        self.dialogues
            .get(id)
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("dialogue `{id}` not found")))
    }

    fn annotated(&self, id: &str) -> Result<Dialogue, ApiError> {
        let d = self.dialogue(id)?;
        Ok(attach_annotations(d, &self.store.log(id)?).map_err(StoreError::from)?)
    }
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use chatact::Error as E;
        let status = match &e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Conflict(_) => StatusCode::CONFLICT,
            StoreError::Invalid(_) => StatusCode::BAD_REQUEST,
            StoreError::Core(E::TaxonomyMismatch { .. }) => StatusCode::CONFLICT,
            StoreError::Core(
                E::InvalidSpan { .. } | E::DanglingAnnotations(_) | E::Taxonomy(_) | E::UnknownSentence(_),
            ) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Router {
    let origin = match cors_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/health", get(health))
        .route("/taxonomy", get(taxonomy))
        .route("/models", get(models))
        .route("/dialogues", get(list_dialogues))
        .route("/dialogues/{id}", get(dialogue_view))
        .route("/dialogues/{id}/annotations", get(annotation_log).post(append_annotations))
        .route("/dialogues/{id}/label", post(label_dialogue))
        .route("/dialogues/{id}/metrics", get(metrics))
        .layer(cors)
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

#[derive(Serialize)]
struct LabelView<'a> {
    id: &'a str,
    parent: Option<&'a str>,
    root: &'a str,
    description: &'a str,
    example: Option<&'a str>,
    in_reduced_set: bool,
    /// Label this one collapses to for the model.
    collapses_to: &'a str,
    /// Rules where this label is the deprioritized side.
    hints: Vec<&'a PriorityRule>,
}

async fn taxonomy(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let t = &state.taxonomy;
    let mut labels = Vec::with_capacity(t.len());
    for l in t.labels() {
        labels.push(LabelView {
            id: &l.id,
            parent: l.parent.as_deref(),
            root: t.root(&l.id).map_err(|e| StoreError::Core(e.into()))?,
            description: &l.description,
            example: l.example.as_deref(),
            in_reduced_set: t.in_reduced_set(&l.id),
            collapses_to: t.collapse(&l.id).map_err(|e| StoreError::Core(e.into()))?,
            hints: t.priority_hints(&l.id),
        });
    }
    Ok(Json(json!({
        "hash": t.hash(),
        "top_level": t.roots().map(|l| l.id.as_str()).collect::<Vec<_>>(),
        "reduced_set": t.reduced_set(),
        "labels": labels,
        "priority_rules": t.priority_rules(),
    })))
}

async fn models(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(state.store.index()?.models)))
}

async fn list_dialogues(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let mut out = Vec::new();
    for id in state.dialogues.keys() {
        let d = state.annotated(id)?;
        let mut speakers: Vec<&str> = d.messages().iter().map(|m| m.speaker.as_str()).collect();
        speakers.sort_unstable();
        speakers.dedup();
        out.push(json!({
            "id": id,
            "messages": d.messages().len(),
            "sentences": d.sentences().len(),
            "gold": d.sentences().iter().filter(|s| s.gold_label.is_some()).count(),
            "predicted": d.sentences().iter().filter(|s| s.predicted_label.is_some()).count(),
            "speakers": speakers,
            "start": d.messages().first().map(|m| m.timestamp),
            "end": d.messages().last().map(|m| m.timestamp),
        }));
    }
    Ok(Json(Value::Array(out)))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ViewKind {
    #[default]
    Sentences,
    Windows,
}

/// Query parameters for views and labeling. `strategy` and its limits
/// override the default segmentation.
#[derive(Debug, Deserialize)]
struct SegmentQuery {
    #[serde(default)]
    view: ViewKind,
    model: Option<String>,
    strategy: Option<Strategy>,
    lines: Option<usize>,
    gap_secs: Option<u64>,
    speakers: Option<usize>,
}

impl SegmentQuery {
    fn resolve(&self) -> Option<(Strategy, SegmentParams)> {
        let strategy = self.strategy?;
        let mut params = SegmentParams::for_strategy(strategy);
        if let Some(n) = self.lines {
            params.line_limit = Some(n);
        }
        if let Some(g) = self.gap_secs {
            params.gap_limit = Some(std::time::Duration::from_secs(g));
        }
        if let Some(k) = self.speakers {
            params.speaker_limit = Some(k);
        }
        Some((strategy, params))
    }
}

#[derive(Serialize)]
struct SentenceView<'a> {
    id: &'a str,
    message_id: &'a str,
    speaker: &'a str,
    timestamp: DateTime<Utc>,
    text: &'a str,
    is_code_block: bool,
    is_emoticon: bool,
    gold_label: Option<&'a str>,
    gold_source: Option<AnnotationSource>,
    predicted_label: Option<&'a str>,
    effective_label: Option<&'a str>,
    effective_source: Option<AnnotationSource>,
    root: Option<&'a str>,
}

async fn dialogue_view(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<SegmentQuery>,
) -> ApiResult<Json<Value>> {
    let d = state.annotated(&id)?;
    let t = &state.taxonomy;
    let sentences: Vec<SentenceView> = d
        .sentences()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let m = &d.messages()[d.message_of(i)];
            let effective = s.effective_label();
            SentenceView {
                id: &s.id,
                message_id: &s.message_id,
                speaker: &m.speaker,
                timestamp: m.timestamp,
                text: &s.text,
                is_code_block: s.is_code_block,
                is_emoticon: s.is_emoticon(),
                gold_label: s.gold_label.as_deref(),
                gold_source: s.gold_source,
                predicted_label: s.predicted_label.as_deref(),
                effective_label: effective.map(|e| e.0),
                effective_source: effective.map(|e| e.1),
                root: effective.and_then(|e| t.root(e.0).ok()),
            }
        })
        .collect();
    let mut body = json!({
        "id": d.id(),
        "messages": d.messages(),
        "sentences": sentences,
    });
    if matches!(q.view, ViewKind::Windows) {
        let (strategy, params) = q
            .resolve()
            .unwrap_or((Strategy::Static, SegmentParams::for_strategy(Strategy::Static)));
        body["windows"] = json!(segment(&d, strategy, &params));
    }
    Ok(Json(body))
}

async fn annotation_log(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    state.dialogue(&id)?;
    Ok(Json(json!(state.store.log(&id)?)))
}

/// A record as posted by a client; `created_at` defaults to receipt time
/// and `source` to `human`.
#[derive(Debug, Deserialize)]
pub struct AnnotationInput {
    pub sentence_id: String,
    pub label: String,
    pub annotator: String,
    #[serde(default)]
    pub char_start: Option<usize>,
    #[serde(default)]
    pub char_end: Option<usize>,
    #[serde(default)]
    pub created_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub source: Option<AnnotationSource>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AnnotationBody {
    One(AnnotationInput),
    Many(Vec<AnnotationInput>),
}

async fn append_annotations(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<AnnotationBody>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(body) = body.map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.body_text()))?;
    let d = state.dialogue(&id)?.clone();
    let inputs = match body {
        AnnotationBody::One(r) => vec![r],
        AnnotationBody::Many(rs) => rs,
    };
    if inputs.is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "no annotation records".into()));
    }
    let now = Utc::now();
    let records: Vec<AnnotationRecord> = inputs
        .into_iter()
        .map(|r| AnnotationRecord {
            sentence_id: r.sentence_id,
            label: r.label,
            annotator: r.annotator,
            char_start: r.char_start,
            char_end: r.char_end,
            created_at: r.created_at.unwrap_or(now),
            source: r.source.unwrap_or(AnnotationSource::Human),
        })
        .collect();
    let n = records.len();
    let state2 = state.clone();
    let total = tokio::task::spawn_blocking(move || state2.store.append(&d, &state2.taxonomy, &records))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(json!({ "appended": n, "log_length": total }))))
}

async fn label_dialogue(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<SegmentQuery>,
) -> ApiResult<Json<Value>> {
    let d = state.dialogue(&id)?.clone();
    let hash = q
        .model
        .clone()
        .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, "missing `model` parameter".into()))?;
    let state2 = state.clone();
    let out = tokio::task::spawn_blocking(move || -> Result<Value, StoreError> {
        let (entry, model) = state2.store.load_model(&hash)?;
        check_binding(&model, &state2.taxonomy)?;
        let predictions = predict(&model, &entry, &d, q.resolve());
        let records = prediction_records(&d, &predictions, &entry.hash, Utc::now());
        let total = state2.store.append(&d, &state2.taxonomy, &records)?;
        Ok(json!({ "model": entry.hash, "predicted": records.len(), "log_length": total }))
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct MetricsQuery {
    speaker: Option<String>,
    format: Option<String>,
}

async fn metrics(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<MetricsQuery>,
) -> ApiResult<Response> {
    let d = state.annotated(&id)?;
    let dialogues = [d];
    let report = match &q.speaker {
        None => build_report(&dialogues, &state.taxonomy, &state.metrics),
        Some(s) => build_speaker_report(&dialogues, &state.taxonomy, &state.metrics, s)
            .map_err(|e| ApiError(StatusCode::NOT_FOUND, e.to_string()))?,
    };
    Ok(match q.format.as_deref() {
        Some("text") => report.render_text().into_response(),
        None | Some("json") => Json(report).into_response(),
        Some(other) => return Err(ApiError(StatusCode::BAD_REQUEST, format!("unknown format `{other}`"))),
    })
}
