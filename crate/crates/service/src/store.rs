//! Sessions as folds over append-only JSON-lines logs.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use satc_core::calibration::{misclassification_probability, CalibrationGrid, CalibrationModel};
use satc_core::dataset::DatasetBundle;
use satc_core::ranking::{RankingConfig, ValidationSession};
use satc_core::{Averaging, ClassId, DocId, EffectivenessSpec};

use crate::api::{
    CreateSession, Created, DocumentView, Estimate, LabelView, Metrics, Next, SessionConfig, Status, TrajectoryPoint,
    Validated,
};
use crate::error::ServiceError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Created {
        session_id: String,
        token: String,
        config: SessionConfig,
        at_ms: u64,
    },
    Validated {
        doc: DocId,
        flipped: Vec<ClassId>,
        at_ms: u64,
    },
    Closed {
        at_ms: u64,
    },
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn internal(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Internal(e.to_string())
}

/// One live session. Writers hold `state`; metrics readers only clone the
/// latest published snapshot.
pub struct SessionSlot {
    state: Mutex<LiveSession>,
    snapshot: RwLock<Arc<Metrics>>,
    last_access: Mutex<Instant>,
}

struct LiveSession {
    id: String,
    token: String,
    config: SessionConfig,
    bundle: Arc<DatasetBundle>,
    model: CalibrationModel,
    session: ValidationSession,
    closed: bool,
    initial: Estimate,
    trajectory: Vec<TrajectoryPoint>,
    log: File,
}

impl LiveSession {
    fn status(&self) -> Status {
        if self.closed {
            Status::Closed
        } else if self.session.is_exhausted() {
            Status::Exhausted
        } else {
            Status::Active
        }
    }

    fn estimate(&self) -> Estimate {
        Estimate {
            macro_: self.session.estimated_effectiveness(Averaging::Macro),
            micro: self.session.estimated_effectiveness(Averaging::Micro),
        }
    }

    fn metrics(&self) -> Metrics {
        Metrics {
            session_id: self.id.clone(),
            status: self.status(),
            validated: self.trajectory.len(),
            remaining: self.session.remaining(),
            initial_estimate: self.initial,
            trajectory: self.trajectory.clone(),
            config: self.config.clone(),
        }
    }

    fn append(&mut self, entry: &LogEntry) -> Result<(), ServiceError> {
        let mut line = serde_json::to_string(entry).map_err(internal)?;
        line.push('\n');
        self.log.write_all(line.as_bytes()).map_err(internal)?;
        self.log.sync_data().map_err(internal)
    }

    /// Checks a submission without changing anything.
    fn check(&mut self, doc: &DocId, flipped: &[ClassId]) -> Result<(), ServiceError> {
        let served = self
            .session
            .next()
            .ok_or_else(|| ServiceError::Conflict("session is exhausted".into()))?;
        if &self.session.docs()[served] != doc {
            return Err(ServiceError::Conflict(format!(
                "document {doc} is not the served document {}",
                self.session.docs()[served]
            )));
        }
        for class in flipped {
            if !self.session.classes().contains(class) {
                return Err(ServiceError::Unprocessable(format!("unknown class {class}")));
            }
        }
        Ok(())
    }

    /// Applies a checked submission to the in-memory state.
    fn apply(&mut self, doc: &DocId, flipped: &[ClassId]) -> Result<(), ServiceError> {
        self.session.apply_correction_ids(doc, flipped)?;
        let mut flipped = flipped.to_vec();
        flipped.sort();
        flipped.dedup();
        self.trajectory.push(TrajectoryPoint {
            validated: self.trajectory.len() + 1,
            doc: doc.clone(),
            flipped,
            estimated_f: self.estimate(),
        });
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    /// Directory holding bundle directories addressable by name.
    pub bundle_root: PathBuf,
    /// Directory for session logs.
    pub data_dir: PathBuf,
    /// Idle time after which a session is dropped from memory.
    pub ttl: Duration,
}

pub struct SessionStore {
    config: StoreConfig,
    sessions: Mutex<HashMap<String, Arc<SessionSlot>>>,
    bundles: Mutex<HashMap<String, Arc<DatasetBundle>>>,
    /// Serializes log replays so one log never feeds two live sessions.
    replaying: Mutex<()>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl SessionStore {
    pub fn new(config: StoreConfig) -> Result<Self, ServiceError> {
        fs::create_dir_all(config.data_dir.join("sessions")).map_err(internal)?;
        Ok(Self {
            config,
            sessions: Mutex::new(HashMap::new()),
            bundles: Mutex::new(HashMap::new()),
            replaying: Mutex::new(()),
        })
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.config.data_dir.join("sessions").join(format!("{id}.jsonl"))
    }

    fn bundle(&self, name: &str) -> Result<Arc<DatasetBundle>, ServiceError> {
        if !valid_name(name) {
            return Err(ServiceError::BadRequest(format!("invalid bundle name {name:?}")));
        }
        if let Some(b) = self.bundles.lock().get(name) {
            return Ok(b.clone());
        }
        let path = self.config.bundle_root.join(name);
        if !path.is_dir() {
            return Err(ServiceError::BadRequest(format!("no bundle named {name}")));
        }
        let bundle = Arc::new(DatasetBundle::load(&path)?);
        self.bundles.lock().insert(name.to_string(), bundle.clone());
        Ok(bundle)
    }

    fn build(
        id: String,
        token: String,
        config: SessionConfig,
        bundle: Arc<DatasetBundle>,
        log: File,
    ) -> Result<LiveSession, ServiceError> {
        let model = CalibrationModel::new(config.sigma)?;
        let spec = EffectivenessSpec::new(config.beta)?;
        let gold = if config.method.needs_gold() {
            Some(bundle.require_gold()?)
        } else {
            None
        };
        let ranking = RankingConfig::for_method(
            config.method,
            config.strategy,
            config.averaging,
            spec,
            model,
            bundle.estimates.clone(),
            gold,
        )?;
        let session = ValidationSession::new(&bundle.test, &ranking)?;
        let mut live = LiveSession {
            id,
            token,
            config,
            bundle,
            model,
            session,
            closed: false,
            initial: Estimate {
                macro_: 0.0,
                micro: 0.0,
            },
            trajectory: Vec::new(),
            log,
        };
        live.initial = live.estimate();
        Ok(live)
    }

    fn insert(&self, live: LiveSession) -> Arc<SessionSlot> {
        let id = live.id.clone();
        let slot = Arc::new(SessionSlot {
            snapshot: RwLock::new(Arc::new(live.metrics())),
            state: Mutex::new(live),
            last_access: Mutex::new(Instant::now()),
        });
        self.sessions.lock().insert(id, slot.clone());
        slot
    }

    pub fn create(&self, req: CreateSession) -> Result<Created, ServiceError> {
        let bundle = self.bundle(&req.bundle)?;
        let sigma = bundle
            .calibration(req.averaging, &CalibrationGrid::default(), req.sigma)?
            .sigma;
        let config = SessionConfig {
            bundle: req.bundle,
            method: req.method,
            strategy: req.strategy,
            averaging: req.averaging,
            beta: req.beta,
            sigma,
        };
        let id = Uuid::new_v4().simple().to_string();
        let token = Uuid::new_v4().simple().to_string();
        let path = self.log_path(&id);
        let log = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(internal)?;
        let mut live = match Self::build(id.clone(), token.clone(), config.clone(), bundle, log) {
            Ok(live) => live,
            Err(e) => {
                let _ = fs::remove_file(&path);
                return Err(e);
            }
        };
        live.append(&LogEntry::Created {
            session_id: id.clone(),
            token: token.clone(),
            config: config.clone(),
            at_ms: now_ms(),
        })?;
        let created = Created {
            session_id: id,
            token,
            status: live.status(),
            n_docs: live.bundle.test.n_docs(),
            classes: live.bundle.test.classes().to_vec(),
            gain_rule: live.session.gain_rule(),
            config,
        };
        self.insert(live);
        Ok(created)
    }

    /// Rebuilds a session by folding over its log.
    fn replay(&self, id: &str) -> Result<Arc<SessionSlot>, ServiceError> {
        let path = self.log_path(id);
        let file = File::open(&path).map_err(|_| ServiceError::NotFound(id.to_string()))?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| internal(format!("empty session log {}", path.display())))?
            .map_err(internal)?;
        let (token, config) = match serde_json::from_str(&first).map_err(internal)? {
            LogEntry::Created { token, config, .. } => (token, config),
            _ => {
                return Err(internal(format!(
                    "session log {} does not start with creation",
                    path.display()
                )))
            }
        };
        let bundle = self.bundle(&config.bundle)?;
        let log = OpenOptions::new().append(true).open(&path).map_err(internal)?;
        let mut live = Self::build(id.to_string(), token, config, bundle, log)?;
        for line in lines {
            let line = line.map_err(internal)?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line).map_err(internal)? {
                LogEntry::Validated { doc, flipped, .. } => {
                    live.check(&doc, &flipped)?;
                    live.apply(&doc, &flipped)?;
                }
                LogEntry::Closed { .. } => live.closed = true,
                LogEntry::Created { .. } => return Err(internal("repeated creation entry in session log")),
            }
        }
        Ok(self.insert(live))
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ServiceError> {
        if !valid_name(id) {
            return Err(ServiceError::NotFound(id.to_string()));
        }
        let cached = self.sessions.lock().get(id).cloned();
        let slot = match cached {
            Some(slot) => slot,
            None => {
                let _guard = self.replaying.lock();
                let raced = self.sessions.lock().get(id).cloned();
                match raced {
                    Some(slot) => slot,
                    None => self.replay(id)?,
                }
            }
        };
        *slot.last_access.lock() = Instant::now();
        Ok(slot)
    }

    fn writer<'a>(
        slot: &'a SessionSlot,
        token: Option<&str>,
    ) -> Result<parking_lot::MutexGuard<'a, LiveSession>, ServiceError> {
        let guard = slot.state.lock();
        if token != Some(guard.token.as_str()) {
            return Err(ServiceError::Forbidden);
        }
        Ok(guard)
    }

    pub fn next(&self, id: &str, token: Option<&str>) -> Result<Next, ServiceError> {
        let slot = self.slot(id)?;
        let mut live = Self::writer(&slot, token)?;
        if live.closed {
            return Err(ServiceError::Conflict(format!("session {id} is closed")));
        }
        let document = live.session.next().map(|d| {
            let matrix = &live.bundle.test;
            DocumentView {
                doc: matrix.docs()[d].clone(),
                utility: live.session.utility(d),
                labels: matrix
                    .classes()
                    .iter()
                    .enumerate()
                    .map(|(c, class)| LabelView {
                        class: class.clone(),
                        predicted: matrix.decision(d, c).is_positive(),
                        misclassification_probability: misclassification_probability(matrix.score(d, c), live.model),
                    })
                    .collect(),
            }
        });
        Ok(Next {
            status: live.status(),
            document,
            remaining: live.session.remaining(),
        })
    }

    pub fn validate(
        &self,
        id: &str,
        token: Option<&str>,
        doc: DocId,
        flipped: Vec<ClassId>,
    ) -> Result<Validated, ServiceError> {
        let slot = self.slot(id)?;
        let mut live = Self::writer(&slot, token)?;
        if live.closed {
            return Err(ServiceError::Conflict(format!("session {id} is closed")));
        }
        live.check(&doc, &flipped)?;
        live.append(&LogEntry::Validated {
            doc: doc.clone(),
            flipped: flipped.clone(),
            at_ms: now_ms(),
        })?;
        live.apply(&doc, &flipped)?;
        *slot.snapshot.write() = Arc::new(live.metrics());
        Ok(Validated {
            status: live.status(),
            estimated_f: live.estimate(),
            remaining: live.session.remaining(),
        })
    }

    pub fn metrics(&self, id: &str) -> Result<Arc<Metrics>, ServiceError> {
        let slot = self.slot(id)?;
        let snapshot = slot.snapshot.read().clone();
        Ok(snapshot)
    }

    pub fn close(&self, id: &str, token: Option<&str>) -> Result<Arc<Metrics>, ServiceError> {
        let slot = self.slot(id)?;
        let mut live = Self::writer(&slot, token)?;
        if !live.closed {
            live.append(&LogEntry::Closed { at_ms: now_ms() })?;
            live.closed = true;
        }
        let metrics = Arc::new(live.metrics());
        *slot.snapshot.write() = metrics.clone();
        Ok(metrics)
    }

    /// Drops sessions idle for longer than the TTL; they are replayed from
    /// their logs on next access. Slots still held by a request stay.
    pub fn evict_idle(&self) -> usize {
        let ttl = self.config.ttl;
        let mut sessions = self.sessions.lock();
        let before = sessions.len();
        sessions.retain(|_, slot| Arc::strong_count(slot) > 1 || slot.last_access.lock().elapsed() < ttl);
        before - sessions.len()
    }

    /// Drops every cached session and bundle, as after a restart.
    pub fn clear_cache(&self) {
        self.sessions.lock().clear();
        self.bundles.lock().clear();
    }

    pub fn cached_sessions(&self) -> usize {
        self.sessions.lock().len()
    }

    pub fn data_dir(&self) -> &Path {
        &self.config.data_dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_restricted() {
        assert!(valid_name("reuters-small_1.v2"));
        for bad in ["", ".", "..", "a/b", "../x", "a b"] {
            assert!(!valid_name(bad), "{bad}");
        }
    }
}
