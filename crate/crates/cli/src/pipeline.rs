//! Steps shared by the command line and the service.

use chatact::corpus::{AnnotationRecord, AnnotationSource, Dialogue};
use chatact::segmentation::{segment, SegmentParams, Strategy, Window};
use chatact::taxonomy::Taxonomy;
use chrono::{DateTime, Utc};

use crate::store::{ModelEntry, StoreError, StoredModel};

pub fn windows_for(dialogues: &[Dialogue], strategy: Strategy, params: &SegmentParams) -> Vec<Window> {
    dialogues.iter().flat_map(|d| segment(d, strategy, params)).collect()
}

/// Fail with a conflict when `model` was trained against another taxonomy.
pub fn check_binding(model: &StoredModel, taxonomy: &Taxonomy) -> Result<(), StoreError> {
    if model.taxonomy_hash() != taxonomy.hash() {
        return Err(StoreError::Conflict(format!(
            "model is bound to taxonomy {}, store uses {}",
            model.taxonomy_hash(),
            taxonomy.hash()
        )));
    }
    Ok(())
}

/// Predicted label per sentence position. CRF models decode the windows
/// they were trained with unless `strategy` overrides it.
pub fn predict(
    model: &StoredModel,
    entry: &ModelEntry,
    dialogue: &Dialogue,
    strategy: Option<(Strategy, SegmentParams)>,
) -> Vec<(usize, String)> {
    match model {
        StoredModel::Crf(m) => {
            let (strategy, params) = strategy
                .or(entry.strategy.map(|s| (s, entry.params)))
                .unwrap_or((Strategy::Static, SegmentParams::for_strategy(Strategy::Static)));
            m.label_dialogue(dialogue, &segment(dialogue, strategy, &params), None)
        }
        StoredModel::Baseline(m) => dialogue
            .sentences()
            .iter()
            .enumerate()
            .map(|(i, s)| (i, m.predict(&s.text).to_string()))
            .collect(),
    }
}

/// Predictions as `model` records for the annotation log.
pub fn prediction_records(
    dialogue: &Dialogue,
    predictions: &[(usize, String)],
    model_hash: &str,
    at: DateTime<Utc>,
) -> Vec<AnnotationRecord> {
    let annotator = format!("model:{}", &model_hash[..model_hash.len().min(12)]);
    predictions
        .iter()
        .map(|(i, label)| AnnotationRecord {
            sentence_id: dialogue.sentences()[*i].id.clone(),
            label: label.clone(),
            annotator: annotator.clone(),
            char_start: None,
            char_end: None,
            created_at: at,
            source: AnnotationSource::Model,
        })
        .collect()
}
