//! Human annotation protocol: staged per-token reveal in expansion order,
//! frozen label preselection, entity-type reveal and rejection, backed by an
//! append-only record log.
//!
//! Records are appended and fsynced before `submit` returns. Session state
//! lives in a sidecar directory next to the log (`<store>.sessions/`) and is
//! reconciled against the log on open.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::classifier::{top_k_labels, Classifier, ClassifierError};
use crate::corpus::RelationSample;
use crate::extents::{ExtentMode, SemanticExtent};
use crate::io::{self, IoError};
use crate::syntax::{expansion_order, stage_assignment, PriorityAssignment, Stage};

pub const REJECT: &str = "REJECT";
pub const PLACEHOLDER: &str = "___";

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("unknown sample id {0:?}")]
    UnknownSample(String),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("invalid session request: {0}")]
    InvalidRequest(String),
    #[error("session {0:?} is exhausted")]
    Exhausted(String),
    #[error("label {label:?} is not among the preselected labels {preselected:?} or REJECT")]
    Validation { label: String, preselected: Vec<String> },
    #[error("sample {sample_id:?} already annotated by {annotator_id:?}")]
    Conflict { sample_id: String, annotator_id: String },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl AnnotationError {
    /// Stable machine-readable code for the wire protocol.
    pub fn code(&self) -> &'static str {
        match self {
            AnnotationError::UnknownSample(_) => "unknown_sample",
            AnnotationError::UnknownSession(_) => "unknown_session",
            AnnotationError::InvalidRequest(_) => "invalid_request",
            AnnotationError::Exhausted(_) => "session_exhausted",
            AnnotationError::Validation { .. } => "validation",
            AnnotationError::Conflict { .. } => "conflict",
            AnnotationError::Classifier(_) => "classifier",
            AnnotationError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample_id: String,
    pub annotator_id: String,
    pub label: String,
    pub revealed_tokens: Vec<usize>,
    pub semantic_class: Stage,
    pub preselected: Vec<String>,
    pub entity_types_revealed: bool,
    pub started_at: String,
    pub decided_at: String,
}

impl AnnotationRecord {
    pub fn is_reject(&self) -> bool {
        self.label == REJECT
    }

    /// The record as a human extent; confidence is 1.
    pub fn to_extent(&self) -> SemanticExtent {
        SemanticExtent {
            sample_id: self.sample_id.clone(),
            decider_id: self.annotator_id.clone(),
            mode: ExtentMode::Human,
            tokens: self.revealed_tokens.clone(),
            semantic_class: self.semantic_class,
            predicted: self.label.clone(),
            confidence: 1.0,
            threshold_met: true,
            saliency: None,
        }
    }
}

/// Whether a record's revealed set is the arguments plus a prefix of the
/// sample's expansion order and its class is the stage of the last revealed
/// token (OA for an empty prefix).
pub fn record_is_consistent(record: &AnnotationRecord, sample: &RelationSample) -> bool {
    let pa = stage_assignment(sample);
    let order = expansion_order(&pa);
    let revealed: BTreeSet<usize> = record.revealed_tokens.iter().copied().collect();
    let args = sample.argument_tokens();
    if !args.is_subset(&revealed) || revealed.len() != record.revealed_tokens.len() {
        return false;
    }
    let n = revealed.len() - args.len();
    let prefix: BTreeSet<usize> = order[..n.min(order.len())].iter().copied().collect();
    let expected_class = if n == 0 { Stage::OA } else { pa.stage(order[n - 1]) };
    n <= order.len() && revealed == &args | &prefix && record.semantic_class == expected_class
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionItem {
    pub sample_id: String,
    /// Number of expansion-order tokens revealed.
    pub pointer: usize,
    pub entity_types_revealed: bool,
    pub preselected: Vec<String>,
    pub started_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSession {
    pub session_id: String,
    pub annotator_id: String,
    pub items: Vec<SessionItem>,
    pub cursor: usize,
}

impl AnnotationSession {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_finished(&self) -> bool {
        self.cursor >= self.items.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgRole {
    Arg1,
    Arg2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewToken {
    pub index: usize,
    /// The token text when revealed, otherwise [`PLACEHOLDER`].
    pub text: String,
    pub revealed: bool,
    pub argument: Option<ArgRole>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityTypes {
    pub entity_type: String,
    pub entity_subtype: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanView {
    pub start: usize,
    pub end: usize,
    pub types: Option<EntityTypes>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleView {
    pub session_id: String,
    pub position: usize,
    pub total: usize,
    pub sample_id: String,
    pub tokens: Vec<ViewToken>,
    pub arg1: SpanView,
    pub arg2: SpanView,
    pub preselected: Vec<String>,
    pub entity_types_revealed: bool,
    pub revealed_count: usize,
    pub hidden_count: usize,
    pub all_revealed: bool,
    /// Stage of the most recently revealed token.
    pub current_stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SessionView {
    Active(Box<SampleView>),
    Finished { session_id: String, total: usize },
}

impl SessionView {
    pub fn active(&self) -> Option<&SampleView> {
        match self {
            SessionView::Active(v) => Some(v),
            SessionView::Finished { .. } => None,
        }
    }
}

struct SampleEntry {
    sample: RelationSample,
    pa: PriorityAssignment,
    order: Vec<usize>,
}

impl SampleEntry {
    fn revealed(&self, pointer: usize) -> BTreeSet<usize> {
        let mut r = self.sample.argument_tokens();
        r.extend(self.order[..pointer].iter().copied());
        r
    }

    fn class_at(&self, pointer: usize) -> Stage {
        if pointer == 0 {
            Stage::OA
        } else {
            self.pa.stage(self.order[pointer - 1])
        }
    }
}

struct LogState {
    file: File,
    records: Vec<AnnotationRecord>,
    keys: HashSet<(String, String)>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Reads the record log, dropping an unterminated trailing line left by an
/// interrupted append.
fn read_log(path: &Path) -> Result<(File, Vec<AnnotationRecord>), IoError> {
    let mut file = OpenOptions::new()
        .create(true)
        .read(true)
        .append(true)
        .open(path)
        .map_err(|e| IoError::io(path, e))?;
    let mut text = String::new();
    file.read_to_string(&mut text).map_err(|e| IoError::io(path, e))?;
    let complete = match text.rfind('\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < text.len() {
        log::warn!("{}: dropping unterminated trailing record", path.display());
        file.set_len(complete as u64).map_err(|e| IoError::io(path, e))?;
        file.sync_all().map_err(|e| IoError::io(path, e))?;
    }
    let mut records = Vec::new();
    for (i, line) in text[..complete].lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line).map_err(|e| IoError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok((file, records))
}

pub struct AnnotationService {
    samples: HashMap<String, SampleEntry>,
    decider: Arc<dyn Classifier>,
    store_path: PathBuf,
    sessions_dir: PathBuf,
    log: Mutex<LogState>,
    sessions: RwLock<HashMap<String, Arc<Mutex<AnnotationSession>>>>,
}

impl AnnotationService {
    /// Opens (or creates) the record log at `store` and restores sessions
    /// from its sidecar directory. Session cursors are advanced past samples
    /// whose record already reached the log.
    pub fn open(
        samples: Vec<RelationSample>,
        decider: Arc<dyn Classifier>,
        store: &Path,
    ) -> Result<Self, AnnotationError> {
        if let Some(dir) = store.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
        }
        let (file, records) = read_log(store)?;
        let keys = records
            .iter()
            .map(|r| (r.sample_id.clone(), r.annotator_id.clone()))
            .collect();
        let mut sessions_dir = store.as_os_str().to_owned();
        sessions_dir.push(".sessions");
        let sessions_dir = PathBuf::from(sessions_dir);
        let entries = samples
            .into_iter()
            .map(|s| {
                let pa = stage_assignment(&s);
                let order = expansion_order(&pa);
                (s.sample_id.clone(), SampleEntry { sample: s, pa, order })
            })
            .collect();
        let svc = AnnotationService {
            samples: entries,
            decider,
            store_path: store.to_path_buf(),
            sessions_dir,
            log: Mutex::new(LogState { file, records, keys }),
            sessions: RwLock::new(HashMap::new()),
        };
        svc.restore_sessions()?;
        Ok(svc)
    }

    fn restore_sessions(&self) -> Result<(), AnnotationError> {
        let dir = &self.sessions_dir;
        if !dir.exists() {
            return Ok(());
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| IoError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let log = self.log.lock().unwrap();
        let mut map = self.sessions.write().unwrap();
        for p in paths {
            let bytes = std::fs::read(&p).map_err(|e| IoError::io(&p, e))?;
            let mut s: AnnotationSession = serde_json::from_slice(&bytes).map_err(|e| IoError::Parse {
                path: p.display().to_string(),
                line: 1,
                message: e.to_string(),
            })?;
            let before = s.cursor;
            while s
                .items
                .get(s.cursor)
                .is_some_and(|it| log.keys.contains(&(it.sample_id.clone(), s.annotator_id.clone())))
            {
                s.cursor += 1;
            }
            if s.cursor != before {
                if let Some(it) = s.items.get_mut(s.cursor) {
                    it.started_at.get_or_insert_with(now);
                }
                self.persist_session(&s)?;
            }
            map.insert(s.session_id.clone(), Arc::new(Mutex::new(s)));
        }
        Ok(())
    }

    pub fn store_path(&self) -> &Path {
        &self.store_path
    }

    pub fn sample(&self, id: &str) -> Option<&RelationSample> {
        self.samples.get(id).map(|e| &e.sample)
    }

    pub fn sample_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.samples.keys().cloned().collect();
        ids.sort();
        ids
    }

    fn persist_session(&self, s: &AnnotationSession) -> Result<(), AnnotationError> {
        let bytes = serde_json::to_vec(s).map_err(IoError::from)?;
        io::write_atomic(&self.sessions_dir.join(format!("{}.json", s.session_id)), &bytes)?;
        Ok(())
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<AnnotationSession>>, AnnotationError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| AnnotationError::UnknownSession(id.to_string()))
    }

    /// Starts a session over `sample_ids`. Each sample's preselection is the
    /// decider's top `k` labels, computed here once and never recomputed.
    pub fn start_session(
        &self,
        annotator_id: &str,
        sample_ids: &[String],
        k: usize,
    ) -> Result<AnnotationSession, AnnotationError> {
        if sample_ids.is_empty() {
            return Err(AnnotationError::InvalidRequest("no sample ids".into()));
        }
        if k == 0 {
            return Err(AnnotationError::InvalidRequest("k must be at least 1".into()));
        }
        if annotator_id.is_empty() {
            return Err(AnnotationError::InvalidRequest("empty annotator id".into()));
        }
        let mut seen = HashSet::new();
        let mut items = Vec::with_capacity(sample_ids.len());
        for id in sample_ids {
            let entry = self
                .samples
                .get(id)
                .ok_or_else(|| AnnotationError::UnknownSample(id.clone()))?;
            if !seen.insert(id) {
                return Err(AnnotationError::InvalidRequest(format!("sample {id:?} listed twice")));
            }
            items.push(SessionItem {
                sample_id: id.clone(),
                pointer: 0,
                entity_types_revealed: false,
                preselected: top_k_labels(self.decider.as_ref(), &entry.sample, k)?,
                started_at: None,
            });
        }
        items[0].started_at = Some(now());
        let session = AnnotationSession {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            annotator_id: annotator_id.to_string(),
            items,
            cursor: 0,
        };
        self.persist_session(&session)?;
        self.sessions
            .write()
            .unwrap()
            .insert(session.session_id.clone(), Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    pub fn session_state(&self, id: &str) -> Result<AnnotationSession, AnnotationError> {
        Ok(self.session(id)?.lock().unwrap().clone())
    }

    fn view_of(&self, s: &AnnotationSession) -> SessionView {
        let Some(item) = s.items.get(s.cursor) else {
            return SessionView::Finished {
                session_id: s.session_id.clone(),
                total: s.items.len(),
            };
        };
        let entry = &self.samples[&item.sample_id];
        let sample = &entry.sample;
        let revealed = entry.revealed(item.pointer);
        let tokens = sample
            .sentence
            .tokens
            .iter()
            .map(|t| {
                let shown = revealed.contains(&t.index);
                ViewToken {
                    index: t.index,
                    text: if shown { t.text.clone() } else { PLACEHOLDER.to_string() },
                    revealed: shown,
                    argument: if sample.arg1.contains(t.index) {
                        Some(ArgRole::Arg1)
                    } else if sample.arg2.contains(t.index) {
                        Some(ArgRole::Arg2)
                    } else {
                        None
                    },
                }
            })
            .collect();
        let span = |a: &crate::corpus::ArgumentSpan| SpanView {
            start: a.start,
            end: a.end,
            types: item.entity_types_revealed.then(|| EntityTypes {
                entity_type: a.entity_type.clone(),
                entity_subtype: a.entity_subtype.clone(),
            }),
        };
        SessionView::Active(Box::new(SampleView {
            session_id: s.session_id.clone(),
            position: s.cursor,
            total: s.items.len(),
            sample_id: item.sample_id.clone(),
            tokens,
            arg1: span(&sample.arg1),
            arg2: span(&sample.arg2),
            preselected: item.preselected.clone(),
            entity_types_revealed: item.entity_types_revealed,
            revealed_count: revealed.len(),
            hidden_count: sample.len() - revealed.len(),
            all_revealed: item.pointer >= entry.order.len(),
            current_stage: entry.class_at(item.pointer),
        }))
    }

    pub fn get_view(&self, session_id: &str) -> Result<SessionView, AnnotationError> {
        let s = self.session(session_id)?;
        let s = s.lock().unwrap();
        Ok(self.view_of(&s))
    }

    fn mutate(
        &self,
        session_id: &str,
        f: impl FnOnce(&mut SessionItem, &SampleEntry) -> bool,
    ) -> Result<SessionView, AnnotationError> {
        let s = self.session(session_id)?;
        let mut s = s.lock().unwrap();
        let cursor = s.cursor;
        let Some(item) = s.items.get_mut(cursor) else {
            return Err(AnnotationError::Exhausted(session_id.to_string()));
        };
        let entry = &self.samples[&item.sample_id];
        if f(item, entry) {
            self.persist_session(&s)?;
        }
        Ok(self.view_of(&s))
    }

    /// Reveals the next token in expansion order; a no-op once every token
    /// is visible.
    pub fn expand(&self, session_id: &str) -> Result<SessionView, AnnotationError> {
        self.mutate(session_id, |item, entry| {
            if item.pointer < entry.order.len() {
                item.pointer += 1;
                true
            } else {
                false
            }
        })
    }

    pub fn reveal_entity_types(&self, session_id: &str) -> Result<SessionView, AnnotationError> {
        self.mutate(session_id, |item, _| {
            !std::mem::replace(&mut item.entity_types_revealed, true)
        })
    }

    /// Records the decision for the current sample and advances the cursor.
    /// The record is durable in the log when this returns.
    pub fn submit(&self, session_id: &str, label: &str) -> Result<AnnotationRecord, AnnotationError> {
        let s = self.session(session_id)?;
        let mut s = s.lock().unwrap();
        let cursor = s.cursor;
        let annotator_id = s.annotator_id.clone();
        let Some(item) = s.items.get(cursor) else {
            return Err(AnnotationError::Exhausted(session_id.to_string()));
        };
        if label != REJECT && !item.preselected.iter().any(|l| l == label) {
            return Err(AnnotationError::Validation {
                label: label.to_string(),
                preselected: item.preselected.clone(),
            });
        }
        let entry = &self.samples[&item.sample_id];
        let decided_at = now();
        let record = AnnotationRecord {
            sample_id: item.sample_id.clone(),
            annotator_id: annotator_id.clone(),
            label: label.to_string(),
            revealed_tokens: entry.revealed(item.pointer).into_iter().collect(),
            semantic_class: entry.class_at(item.pointer),
            preselected: item.preselected.clone(),
            entity_types_revealed: item.entity_types_revealed,
            started_at: item.started_at.clone().unwrap_or_else(|| decided_at.clone()),
            decided_at,
        };
        {
            let mut log = self.log.lock().unwrap();
            let key = (record.sample_id.clone(), annotator_id);
            if log.keys.contains(&key) {
                return Err(AnnotationError::Conflict {
                    sample_id: key.0,
                    annotator_id: key.1,
                });
            }
            let mut line = serde_json::to_vec(&record).map_err(IoError::from)?;
            line.push(b'\n');
            let path = &self.store_path;
            log.file.write_all(&line).map_err(|e| IoError::io(path, e))?;
            log.file.sync_data().map_err(|e| IoError::io(path, e))?;
            log.keys.insert(key);
            log.records.push(record.clone());
        }
        s.cursor += 1;
        let next = s.cursor;
        if let Some(it) = s.items.get_mut(next) {
            it.started_at = Some(now());
        }
        self.persist_session(&s)?;
        Ok(record)
    }

    /// Records in log order, optionally restricted to one annotator.
    pub fn export(&self, annotator: Option<&str>) -> Vec<AnnotationRecord> {
        let log = self.log.lock().unwrap();
        log.records
            .iter()
            .filter(|r| annotator.is_none_or(|a| r.annotator_id == a))
            .cloned()
            .collect()
    }
}

pub fn export_records(path: &Path, records: &[AnnotationRecord]) -> Result<(), AnnotationError> {
    Ok(io::write_jsonl(path, records)?)
}

pub fn import_records(path: &Path) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    Ok(io::read_jsonl(path)?)
}
