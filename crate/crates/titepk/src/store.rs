//! Trial-conduct sessions with optimistic concurrency.
//!
//! Every mutation is appended as one JSON line to a single log file before
//! it becomes visible; opening the store replays the log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use titepk_core::{Combination, PatientRecord};
use uuid::Uuid;

use crate::settings::{FieldError, Model, ModelSettings};
use crate::wire::{decide, DecisionDto, RecordDto};

pub const LOG_FILE: &str = "sessions.jsonl";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("unknown session")]
    NotFound,
    #[error("stale revision {supplied}; current revision is {current}")]
    Conflict { supplied: u64, current: u64 },
    #[error("invalid input")]
    Invalid(Vec<FieldError>),
    #[error("storage failure: {0}")]
    Io(String),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

fn invalid(e: FieldError) -> StoreError {
    StoreError::Invalid(vec![e])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
enum LogEntry {
    Create { session: Uuid, settings: ModelSettings },
    AddRecord { session: Uuid, record: RecordDto },
    DeleteRecord { session: Uuid, index: usize },
}

/// What clients see of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: Uuid,
    pub revision: u64,
    pub settings: ModelSettings,
    pub records: Vec<RecordDto>,
    pub decision: DecisionDto,
}

#[derive(Debug)]
pub struct Session {
    id: Uuid,
    settings: ModelSettings,
    model: Model,
    records: Vec<RecordDto>,
    resolved: Vec<(Combination, PatientRecord)>,
    revision: u64,
    decision: DecisionDto,
}

fn resolve(model: &Model, records: &[RecordDto], offset: usize, prefix: &str) -> Result<Vec<(Combination, PatientRecord)>, StoreError> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| r.resolve(model, &format!("{prefix}[{}]", i + offset)).map_err(invalid))
        .collect()
}

fn fit(model: &Model, records: &[(Combination, PatientRecord)]) -> Result<DecisionDto, StoreError> {
    decide(model, records).map_err(|e| invalid(FieldError::new("records", e.to_string())))
}

impl Session {
    fn new(id: Uuid, settings: ModelSettings) -> Result<Self, StoreError> {
        let model = settings.build().map_err(StoreError::Invalid)?;
        let decision = fit(&model, &[])?;
        Ok(Session {
            id,
            settings,
            model,
            records: Vec::new(),
            resolved: Vec::new(),
            revision: 0,
            decision,
        })
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id,
            revision: self.revision,
            settings: self.settings.clone(),
            records: self.records.clone(),
            decision: self.decision.clone(),
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    fn check_revision(&self, supplied: Option<u64>) -> Result<(), StoreError> {
        match supplied {
            Some(s) if s != self.revision => Err(StoreError::Conflict {
                supplied: s,
                current: self.revision,
            }),
            _ => Ok(()),
        }
    }

    /// Validate and fit without mutating; returns the state to commit.
    fn with_record(&self, record: &RecordDto) -> Result<(Combination, PatientRecord, DecisionDto), StoreError> {
        let (c, r) = record
            .resolve(&self.model, &format!("records[{}]", self.records.len()))
            .map_err(invalid)?;
        let mut all = self.resolved.clone();
        all.push((c, r.clone()));
        let decision = fit(&self.model, &all)?;
        Ok((c, r, decision))
    }

    fn without_record(&self, index: usize) -> Result<DecisionDto, StoreError> {
        if index >= self.records.len() {
            return Err(invalid(FieldError::new(
                "index",
                format!("no record {index}; the session has {}", self.records.len()),
            )));
        }
        let mut all = self.resolved.clone();
        all.remove(index);
        fit(&self.model, &all)
    }

    fn apply_add(&mut self, record: RecordDto, c: Combination, r: PatientRecord, decision: DecisionDto) {
        self.records.push(record);
        self.resolved.push((c, r));
        self.decision = decision;
        self.revision += 1;
    }

    fn apply_delete(&mut self, index: usize, decision: DecisionDto) {
        self.records.remove(index);
        self.resolved.remove(index);
        self.decision = decision;
        self.revision += 1;
    }

    pub fn what_if(&self, hypothetical: &[RecordDto]) -> Result<DecisionDto, StoreError> {
        let extra = resolve(&self.model, hypothetical, 0, "records")?;
        let mut all = self.resolved.clone();
        all.extend(extra);
        fit(&self.model, &all)
    }
}

pub struct Store {
    log: Option<Mutex<File>>,
    path: Option<PathBuf>,
    sessions: RwLock<HashMap<Uuid, Arc<Mutex<Session>>>>,
}

impl Store {
    /// A store that forgets everything on drop.
    pub fn in_memory() -> Self {
        Store {
            log: None,
            path: None,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Open (or create) the log under `dir` and replay it.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        let mut sessions = HashMap::new();
        if path.exists() {
            for (n, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: LogEntry = serde_json::from_str(&line)
                    .map_err(|e| StoreError::Io(format!("{}:{}: {e}", path.display(), n + 1)))?;
                replay(&mut sessions, entry).map_err(|e| StoreError::Io(format!("{}:{}: {e:?}", path.display(), n + 1)))?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Store {
            log: Some(Mutex::new(file)),
            path: Some(path),
            sessions: RwLock::new(sessions.into_iter().map(|(k, v)| (k, Arc::new(Mutex::new(v)))).collect()),
        })
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn append(&self, entry: &LogEntry) -> Result<(), StoreError> {
        if let Some(log) = &self.log {
            let mut line = serde_json::to_string(entry).map_err(|e| StoreError::Io(e.to_string()))?;
            line.push('\n');
            let mut f = log.lock().expect("log lock poisoned");
            f.write_all(line.as_bytes())?;
            f.sync_data()?;
        }
        Ok(())
    }

    fn session(&self, id: Uuid) -> Result<Arc<Mutex<Session>>, StoreError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(&id)
            .cloned()
            .ok_or(StoreError::NotFound)
    }

    pub fn create(&self, settings: ModelSettings) -> Result<SessionView, StoreError> {
        let id = Uuid::new_v4();
        let session = Session::new(id, settings.clone())?;
        self.append(&LogEntry::Create { session: id, settings })?;
        let view = session.view();
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn view(&self, id: Uuid) -> Result<SessionView, StoreError> {
        Ok(self.session(id)?.lock().expect("session poisoned").view())
    }

    pub fn add_record(&self, id: Uuid, revision: Option<u64>, record: RecordDto) -> Result<SessionView, StoreError> {
        let session = self.session(id)?;
        let mut s = session.lock().expect("session poisoned");
        s.check_revision(revision)?;
        let (c, r, decision) = s.with_record(&record)?;
        self.append(&LogEntry::AddRecord {
            session: id,
            record: record.clone(),
        })?;
        s.apply_add(record, c, r, decision);
        Ok(s.view())
    }

    pub fn delete_record(&self, id: Uuid, revision: Option<u64>, index: usize) -> Result<SessionView, StoreError> {
        let session = self.session(id)?;
        let mut s = session.lock().expect("session poisoned");
        s.check_revision(revision)?;
        let decision = s.without_record(index)?;
        self.append(&LogEntry::DeleteRecord { session: id, index })?;
        s.apply_delete(index, decision);
        Ok(s.view())
    }

    pub fn what_if(&self, id: Uuid, hypothetical: &[RecordDto]) -> Result<(u64, DecisionDto), StoreError> {
        let session = self.session(id)?;
        let s = session.lock().expect("session poisoned");
        Ok((s.revision, s.what_if(hypothetical)?))
    }

    /// Run `f` against a session's validated model.
    pub fn with_model<T>(&self, id: Uuid, f: impl FnOnce(&Model) -> T) -> Result<T, StoreError> {
        let session = self.session(id)?;
        let s = session.lock().expect("session poisoned");
        Ok(f(s.model()))
    }
}

fn replay(sessions: &mut HashMap<Uuid, Session>, entry: LogEntry) -> Result<(), StoreError> {
    match entry {
        LogEntry::Create { session, settings } => {
            sessions.insert(session, Session::new(session, settings)?);
        }
        LogEntry::AddRecord { session, record } => {
            let s = sessions.get_mut(&session).ok_or(StoreError::NotFound)?;
            let (c, r, d) = s.with_record(&record)?;
            s.apply_add(record, c, r, d);
        }
        LogEntry::DeleteRecord { session, index } => {
            let s = sessions.get_mut(&session).ok_or(StoreError::NotFound)?;
            let d = s.without_record(index)?;
            s.apply_delete(index, d);
        }
    }
    Ok(())
}
