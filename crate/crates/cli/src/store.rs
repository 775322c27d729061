//! Project directory: content-addressed blobs plus one append-only
//! annotation log per dialogue.
//!
//! ```text
//! index.json                 taxonomy, corpora, dialogue -> corpus, models
//! taxonomies/<hash>.toml
//! corpora/<hash>.jsonl       transcript lines
//! windows/<hash>.jsonl
//! models/<hash>.bin
//! reports/<hash>.json
//! annotations/<hex id>.jsonl
//! ```
//!
//! Blob ids are hex SHA-256 of the stored bytes; taxonomies use their own
//! canonical hash. Any unique prefix of at least six characters resolves.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chatact::corpus::{
    attach_annotations, parse_transcripts, read_annotations, write_annotations, write_transcript,
    AnnotationRecord, Dialogue, SplitRatios,
};
use chatact::labeler::{BaselineModel, SequenceModel};
use chatact::segmentation::{SegmentParams, Strategy, Window};
use chatact::taxonomy::Taxonomy;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] chatact::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Crf,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub hash: String,
    pub kind: ModelKind,
    pub taxonomy_hash: String,
    pub created_at: DateTime<Utc>,
    /// Segmentation the model was trained with; decoding reuses it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default)]
    pub params: SegmentParams,
    pub seed: u64,
    pub ratios: SplitRatios,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Index {
    pub taxonomy: Option<String>,
    pub corpora: Vec<String>,
    pub dialogues: BTreeMap<String, String>,
    pub models: Vec<ModelEntry>,
}

pub enum StoredModel {
    Crf(SequenceModel),
    Baseline(BaselineModel),
}

impl StoredModel {
    pub fn taxonomy_hash(&self) -> &str {
        match self {
            StoredModel::Crf(m) => &m.taxonomy_hash,
            StoredModel::Baseline(m) => &m.taxonomy_hash,
        }
    }
}

pub struct ProjectStore {
    root: PathBuf,
    index: Mutex<()>,
    logs: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

const DIRS: [&str; 6] = ["taxonomies", "corpora", "windows", "models", "reports", "annotations"];

impl ProjectStore {
    /// Open `root`, creating an empty store when it does not exist.
    pub fn init(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for d in DIRS {
            fs::create_dir_all(root.join(d))?;
        }
        let store = Self::at(root);
        if !store.root.join("index.json").exists() {
            store.write_index(&Index::default())?;
        }
        Ok(store)
    }

    /// Open an existing store.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.join("index.json").is_file() {
            return Err(StoreError::NotFound(format!("project store at {}", root.display())));
        }
        Ok(Self::at(root))
    }

    fn at(root: PathBuf) -> Self {
        Self {
            root,
            index: Mutex::new(()),
            logs: Mutex::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index(&self) -> Result<Index> {
        let text = fs::read_to_string(self.root.join("index.json"))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write_index(&self, index: &Index) -> Result<()> {
        write_atomic(&self.root.join("index.json"), &serde_json::to_vec_pretty(index)?)
    }

    fn update_index<T>(&self, f: impl FnOnce(&mut Index) -> Result<T>) -> Result<T> {
        let _guard = self.index.lock().expect("index lock");
        let mut index = self.index()?;
        let out = f(&mut index)?;
        self.write_index(&index)?;
        Ok(out)
    }

    fn put_blob(&self, dir: &str, ext: &str, bytes: &[u8]) -> Result<String> {
        let hash = hex::encode(Sha256::digest(bytes));
        let path = self.root.join(dir).join(format!("{hash}.{ext}"));
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        Ok(hash)
    }

    /// Full hash for a unique prefix among blobs in `dir`.
    pub fn resolve(&self, dir: &str, prefix: &str) -> Result<String> {
        let what = || format!("{} `{prefix}`", dir.trim_end_matches('s'));
        if prefix.len() < 6 || !prefix.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(StoreError::NotFound(what()));
        }
        let mut hits = Vec::new();
        for entry in fs::read_dir(self.root.join(dir))? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some((stem, _)) = name.split_once('.') {
                if stem.starts_with(prefix) && !hits.iter().any(|h| h == stem) {
                    hits.push(stem.to_string());
                }
            }
        }
        match hits.len() {
            0 => Err(StoreError::NotFound(what())),
            1 => Ok(hits.pop().unwrap()),
            _ => Err(StoreError::Invalid(format!("{} is ambiguous", what()))),
        }
    }

    pub fn set_taxonomy(&self, taxonomy: &Taxonomy) -> Result<String> {
        let hash = taxonomy.hash().to_string();
        let path = self.root.join("taxonomies").join(format!("{hash}.toml"));
        if !path.exists() {
            write_atomic(&path, taxonomy.to_toml_string().as_bytes())?;
        }
        self.update_index(|index| {
            match &index.taxonomy {
                Some(old) if *old != hash && !index.models.is_empty() => {
                    return Err(StoreError::Conflict(format!(
                        "store already has models bound to taxonomy {old}"
                    )))
                }
                _ => index.taxonomy = Some(hash.clone()),
            }
            Ok(())
        })?;
        Ok(hash)
    }

    /// The store's taxonomy, falling back to the shipped one.
    pub fn taxonomy(&self) -> Result<Taxonomy> {
        match self.index()?.taxonomy {
            None => Ok(Taxonomy::shipped()),
            Some(hash) => self.load_taxonomy(&hash),
        }
    }

    pub fn load_taxonomy(&self, hash: &str) -> Result<Taxonomy> {
        let path = self.root.join("taxonomies").join(format!("{hash}.toml"));
        if !path.is_file() {
            return Err(StoreError::NotFound(format!("taxonomy `{hash}`")));
        }
        Taxonomy::load_path(&path).map_err(|e| StoreError::Core(e.into()))
    }

    /// Store dialogues as one corpus blob. A dialogue id already held by a
    /// different corpus is a conflict.
    pub fn add_corpus(&self, dialogues: &[Dialogue]) -> Result<String> {
        let mut bytes = Vec::new();
        write_transcript(&mut bytes, dialogues)?;
        let hash = self.put_blob("corpora", "jsonl", &bytes)?;
        self.update_index(|index| {
            for d in dialogues {
                if let Some(other) = index.dialogues.get(d.id()) {
                    if *other != hash {
                        return Err(StoreError::Conflict(format!(
                            "dialogue `{}` already ingested from corpus {other}",
                            d.id()
                        )));
                    }
                }
            }
            for d in dialogues {
                index.dialogues.insert(d.id().to_string(), hash.clone());
            }
            if !index.corpora.contains(&hash) {
                index.corpora.push(hash.clone());
            }
            Ok(())
        })?;
        Ok(hash)
    }

    fn load_corpus(&self, hash: &str) -> Result<Vec<Dialogue>> {
        let file = File::open(self.root.join("corpora").join(format!("{hash}.jsonl")))?;
        Ok(parse_transcripts(BufReader::new(file), "default")?)
    }

    /// Every dialogue in index order, without annotations.
    pub fn dialogues(&self) -> Result<Vec<Dialogue>> {
        let index = self.index()?;
        let mut out = Vec::new();
        for hash in &index.corpora {
            for d in self.load_corpus(hash)? {
                if index.dialogues.get(d.id()) == Some(hash) {
                    out.push(d);
                }
            }
        }
        Ok(out)
    }

    /// Every dialogue with its annotation log folded in.
    pub fn annotated_dialogues(&self) -> Result<Vec<Dialogue>> {
        self.dialogues()?
            .iter()
            .map(|d| Ok(attach_annotations(d, &self.log(d.id())?)?))
            .collect()
    }

    fn log_path(&self, dialogue_id: &str) -> PathBuf {
        self.root
            .join("annotations")
            .join(format!("{}.jsonl", hex::encode(dialogue_id.as_bytes())))
    }

    fn log_lock(&self, dialogue_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.logs.lock().expect("lock table");
        locks.entry(dialogue_id.to_string()).or_default().clone()
    }

    /// The annotation log in append order. A trailing partial line from an
    /// in-flight append is ignored.
    pub fn log(&self, dialogue_id: &str) -> Result<Vec<AnnotationRecord>> {
        let mut bytes = Vec::new();
        match File::open(self.log_path(dialogue_id)) {
            Ok(mut f) => {
                f.read_to_end(&mut bytes)?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        }
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        Ok(read_annotations(&bytes[..complete])?)
    }

    /// Validate `records` against `dialogue` and its current log, then
    /// append them. Appends to one dialogue are serialized.
    pub fn append(&self, dialogue: &Dialogue, taxonomy: &Taxonomy, records: &[AnnotationRecord]) -> Result<usize> {
        for r in records {
            if !taxonomy.contains(&r.label) {
                return Err(StoreError::Invalid(format!("unknown label `{}`", r.label)));
            }
        }
        let lock = self.log_lock(dialogue.id());
        let _guard = lock.lock().expect("log lock");
        let mut log = self.log(dialogue.id())?;
        log.extend_from_slice(records);
        attach_annotations(dialogue, &log)?;
        let mut bytes = Vec::new();
        write_annotations(&mut bytes, records)?;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.log_path(dialogue.id()))?;
        f.write_all(&bytes)?;
        f.sync_data()?;
        Ok(log.len())
    }

    pub fn put_windows(&self, windows: &[Window]) -> Result<String> {
        let mut bytes = Vec::new();
        for w in windows {
            serde_json::to_writer(&mut bytes, w)?;
            bytes.push(b'\n');
        }
        self.put_blob("windows", "jsonl", &bytes)
    }

    pub fn load_windows(&self, prefix: &str) -> Result<Vec<Window>> {
        let hash = self.resolve("windows", prefix)?;
        let text = fs::read_to_string(self.root.join("windows").join(format!("{hash}.jsonl")))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect()
    }

    pub fn put_report<T: Serialize>(&self, report: &T) -> Result<String> {
        self.put_blob("reports", "json", &serde_json::to_vec_pretty(report)?)
    }

    pub fn load_report(&self, prefix: &str) -> Result<serde_json::Value> {
        let hash = self.resolve("reports", prefix)?;
        let text = fs::read_to_string(self.root.join("reports").join(format!("{hash}.json")))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Store a model. Its taxonomy must already be in the store.
    pub fn put_model(&self, model: &StoredModel, mut entry: ModelEntry) -> Result<String> {
        let taxonomy_hash = model.taxonomy_hash().to_string();
        if !self.root.join("taxonomies").join(format!("{taxonomy_hash}.toml")).is_file() {
            return Err(StoreError::Conflict(format!(
                "model references taxonomy {taxonomy_hash}, which is not in the store"
            )));
        }
        let mut bytes = Vec::new();
        match model {
            StoredModel::Crf(m) => m.write(&mut bytes)?,
            StoredModel::Baseline(m) => m.write(&mut bytes)?,
        }
        let hash = self.put_blob("models", "bin", &bytes)?;
        entry.hash = hash.clone();
        entry.taxonomy_hash = taxonomy_hash;
        self.update_index(|index| {
            if !index.models.iter().any(|m| m.hash == hash) {
                index.models.push(entry);
            }
            Ok(())
        })?;
        Ok(hash)
    }

    pub fn model_entry(&self, prefix: &str) -> Result<ModelEntry> {
        let hash = self.resolve("models", prefix)?;
        self.index()?
            .models
            .into_iter()
            .find(|m| m.hash == hash)
            .ok_or_else(|| StoreError::NotFound(format!("model `{prefix}`")))
    }

    pub fn load_model(&self, prefix: &str) -> Result<(ModelEntry, StoredModel)> {
        let entry = self.model_entry(prefix)?;
        let file = BufReader::new(File::open(self.root.join("models").join(format!("{}.bin", entry.hash)))?);
        let model = match entry.kind {
            ModelKind::Crf => StoredModel::Crf(SequenceModel::read(file)?),
            ModelKind::Baseline => StoredModel::Baseline(BaselineModel::read(file)?),
        };
        Ok((entry, model))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = path.with_extension(format!("tmp{}-{n}", std::process::id()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
