//! Assessment sessions: a user's track record of repeated experiments.
//!
//! Layout of a store directory:
//!
//! ```text
//! <dir>/index.json          session_id -> user, catalog, counts, timestamps
//! <dir>/<session_id>.jsonl  header line, then draft / experiment records
//! ```
//!
//! Session files are append-only. The working draft is the last `draft`
//! record not followed by `draft_cleared`; finishing a draft appends the
//! experiment and the clear marker in a single write.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogRef};
use crate::scoring::{
    int, rollup, Assessment, LeafScore, Mode, Rational, ScoreReport, ScoringError,
};

pub type Timestamp = DateTime<Utc>;

/// Drops sub-second precision; every stored timestamp has whole seconds.
pub fn whole_seconds(t: Timestamp) -> Timestamp {
    Utc.timestamp_opt(t.timestamp(), 0)
        .single()
        .expect("valid timestamp")
}

/// RFC-3339 UTC form with whole seconds, e.g. `2026-10-17T09:30:00Z`.
pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

mod rfc3339 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_timestamp(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        let text = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&text)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt store file {path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("user name must not be empty")]
    EmptyUser,
    #[error("session uses catalog {session}, got {given}")]
    CatalogMismatch {
        session: CatalogRef,
        given: CatalogRef,
    },
    #[error("experiment finishes ({finished}) before it starts ({started})")]
    ClockInversion { started: String, finished: String },
    #[error("no scores have been entered in the working draft")]
    EmptyDraft,
    #[error("{0}")]
    Scoring(#[from] ScoringError),
    #[error("experiment {index} no longer matches a fresh rollup of its assessment")]
    Rederivation { index: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draft {
    #[serde(with = "rfc3339")]
    pub started_at: Timestamp,
    #[serde(with = "rfc3339")]
    pub updated_at: Timestamp,
    pub scores: BTreeMap<String, LeafScore>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Experiment {
    pub index: u32,
    #[serde(with = "rfc3339")]
    pub started_at: Timestamp,
    #[serde(with = "rfc3339")]
    pub finished_at: Timestamp,
    pub mode: Mode,
    pub assessment: Assessment,
    pub result: ScoreReport,
}

impl Experiment {
    pub fn duration_minutes(&self) -> Rational {
        int((self.finished_at - self.started_at).num_seconds()) / int(60)
    }

    pub fn root_achievement(&self) -> &Rational {
        self.result
            .grade()
            .expect("recorded experiments always have at least one scored leaf")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub user: String,
    pub catalog: CatalogRef,
    #[serde(with = "rfc3339")]
    pub created_at: Timestamp,
    #[serde(with = "rfc3339")]
    pub updated_at: Timestamp,
    pub experiments: Vec<Experiment>,
    pub draft: Option<Draft>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub user: String,
    pub catalog: CatalogRef,
    #[serde(with = "rfc3339")]
    pub created_at: Timestamp,
    #[serde(with = "rfc3339")]
    pub updated_at: Timestamp,
    pub experiment_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    #[serde(flatten)]
    pub entry: IndexEntry,
}

/// One row of grade progression across experiments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgressionRow {
    pub index: u32,
    pub finished_at: Timestamp,
    pub achievement: Rational,
    /// Change from the previous experiment; absent for the first.
    pub delta: Option<Rational>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    session_id: String,
    user: String,
    catalog: CatalogRef,
    #[serde(with = "rfc3339")]
    created_at: Timestamp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Header(Header),
    Draft(Draft),
    DraftCleared {
        #[serde(with = "rfc3339")]
        at: Timestamp,
    },
    Experiment(Box<Experiment>),
}

impl Record {
    fn line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("record serializes");
        line.push('\n');
        line
    }
}

/// File-backed session store. Writes to one session are serialized; different
/// sessions may be written concurrently.
pub struct SessionStore {
    dir: PathBuf,
    index_lock: Mutex<()>,
    session_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let store = SessionStore {
            dir,
            index_lock: Mutex::new(()),
            session_locks: Mutex::new(HashMap::new()),
        };
        if !store.index_path().exists() {
            store.write_index(&BTreeMap::new())?;
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn index_path(&self) -> PathBuf {
        self.dir.join("index.json")
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.session_locks.lock().expect("lock table poisoned");
        locks.entry(id.to_string()).or_default().clone()
    }

    fn read_index(&self) -> Result<BTreeMap<String, IndexEntry>, StoreError> {
        let path = self.index_path();
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path,
            line: e.line(),
            message: e.to_string(),
        })
    }

    fn write_index(&self, index: &BTreeMap<String, IndexEntry>) -> Result<(), StoreError> {
        let tmp = self.dir.join("index.json.tmp");
        let mut file = File::create(&tmp)?;
        let mut text = serde_json::to_string_pretty(index).expect("index serializes");
        text.push('\n');
        file.write_all(text.as_bytes())?;
        file.sync_all()?;
        fs::rename(&tmp, self.index_path())?;
        Ok(())
    }

    fn update_index(&self, session: &Session) -> Result<(), StoreError> {
        let _guard = self.index_lock.lock().expect("index lock poisoned");
        let mut index = self.read_index()?;
        index.insert(
            session.session_id.clone(),
            IndexEntry {
                user: session.user.clone(),
                catalog: session.catalog.clone(),
                created_at: session.created_at,
                updated_at: session.updated_at,
                experiment_count: session.experiments.len() as u32,
            },
        );
        self.write_index(&index)
    }

    fn append(&self, id: &str, records: &[Record]) -> Result<(), StoreError> {
        let text: String = records.iter().map(Record::line).collect();
        let mut file = OpenOptions::new()
            .append(true)
            .open(self.session_path(id))?;
        file.write_all(text.as_bytes())?;
        file.sync_all()?;
        Ok(())
    }

    pub fn create_session(
        &self,
        user: &str,
        catalog: CatalogRef,
        now: Timestamp,
    ) -> Result<Session, StoreError> {
        let user = user.trim();
        if user.is_empty() {
            return Err(StoreError::EmptyUser);
        }
        let now = whole_seconds(now);
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let header = Record::Header(Header {
            session_id: session_id.clone(),
            user: user.to_string(),
            catalog: catalog.clone(),
            created_at: now,
        });
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(self.session_path(&session_id))?;
        file.write_all(header.line().as_bytes())?;
        file.sync_all()?;

        let session = Session {
            session_id,
            user: user.to_string(),
            catalog,
            created_at: now,
            updated_at: now,
            experiments: Vec::new(),
            draft: None,
        };
        self.update_index(&session)?;
        Ok(session)
    }

    pub fn list(&self) -> Result<Vec<SessionSummary>, StoreError> {
        Ok(self
            .read_index()?
            .into_iter()
            .map(|(session_id, entry)| SessionSummary { session_id, entry })
            .collect())
    }

    pub fn load(&self, id: &str) -> Result<Session, StoreError> {
        let path = self.session_path(id);
        if !is_path_safe(id) || !path.exists() {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        let text = fs::read_to_string(&path)?;
        // A trailing fragment without a newline is a write still in flight.
        let complete = match text.rfind('\n') {
            Some(end) => &text[..=end],
            None => "",
        };
        let corrupt = |line: usize, message: String| StoreError::Corrupt {
            path: path.clone(),
            line,
            message,
        };

        let mut session: Option<Session> = None;
        for (n, line) in complete
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let record: Record =
                serde_json::from_str(line).map_err(|e| corrupt(n + 1, e.to_string()))?;
            match (record, session.as_mut()) {
                (Record::Header(h), None) => {
                    session = Some(Session {
                        session_id: h.session_id,
                        user: h.user,
                        catalog: h.catalog,
                        created_at: h.created_at,
                        updated_at: h.created_at,
                        experiments: Vec::new(),
                        draft: None,
                    })
                }
                (Record::Header(_), Some(_)) => {
                    return Err(corrupt(n + 1, "repeated header".into()))
                }
                (_, None) => return Err(corrupt(n + 1, "missing header".into())),
                (Record::Draft(d), Some(s)) => {
                    s.updated_at = s.updated_at.max(d.updated_at);
                    s.draft = Some(d);
                }
                (Record::DraftCleared { at }, Some(s)) => {
                    s.updated_at = s.updated_at.max(at);
                    s.draft = None;
                }
                (Record::Experiment(e), Some(s)) => {
                    if e.index as usize != s.experiments.len() + 1 {
                        return Err(corrupt(
                            n + 1,
                            format!("experiment index {} out of sequence", e.index),
                        ));
                    }
                    s.updated_at = s.updated_at.max(e.finished_at);
                    s.experiments.push(*e);
                }
            }
        }
        session.ok_or_else(|| corrupt(1, "empty session file".into()))
    }

    fn check_catalog(session: &Session, catalog: &Catalog) -> Result<(), StoreError> {
        let given = catalog.catalog_ref();
        if session.catalog != given {
            return Err(StoreError::CatalogMismatch {
                session: session.catalog.clone(),
                given,
            });
        }
        Ok(())
    }

    fn build_experiment(
        session: &Session,
        catalog: &Catalog,
        assessment: Assessment,
        started_at: Timestamp,
        finished_at: Timestamp,
        mode: Mode,
    ) -> Result<Experiment, StoreError> {
        Self::check_catalog(session, catalog)?;
        let (started_at, finished_at) = (whole_seconds(started_at), whole_seconds(finished_at));
        if finished_at < started_at {
            return Err(StoreError::ClockInversion {
                started: format_timestamp(&started_at),
                finished: format_timestamp(&finished_at),
            });
        }
        let result = rollup(catalog, &assessment, mode)?;
        if result.grade().is_none() {
            return Err(StoreError::EmptyDraft);
        }
        Ok(Experiment {
            index: session.experiments.len() as u32 + 1,
            started_at,
            finished_at,
            mode,
            assessment,
            result,
        })
    }

    /// Scores a complete assessment and appends it as the session's next experiment.
    pub fn record_experiment(
        &self,
        id: &str,
        catalog: &Catalog,
        assessment: Assessment,
        started_at: Timestamp,
        finished_at: Timestamp,
    ) -> Result<Experiment, StoreError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("session lock poisoned");
        let mut session = self.load(id)?;
        let experiment = Self::build_experiment(
            &session,
            catalog,
            assessment,
            started_at,
            finished_at,
            Mode::Strict,
        )?;
        self.append(id, &[Record::Experiment(Box::new(experiment.clone()))])?;
        session.updated_at = session.updated_at.max(experiment.finished_at);
        session.experiments.push(experiment.clone());
        self.update_index(&session)?;
        Ok(experiment)
    }

    /// Merges `scores` into the working draft. Unchanged drafts are not rewritten.
    pub fn put_draft_scores(
        &self,
        id: &str,
        catalog: &Catalog,
        scores: &BTreeMap<String, LeafScore>,
        now: Timestamp,
    ) -> Result<Draft, StoreError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("session lock poisoned");
        let mut session = self.load(id)?;
        Self::check_catalog(&session, catalog)?;
        let probe = Assessment {
            catalog: session.catalog.clone(),
            scores: scores.clone(),
        };
        let unknown = probe.unknown_leaves(catalog);
        if !unknown.is_empty() {
            return Err(ScoringError::UnknownLeaves(unknown).into());
        }

        let now = whole_seconds(now);
        let current = session.draft.clone();
        let mut merged = current
            .as_ref()
            .map(|d| d.scores.clone())
            .unwrap_or_default();
        merged.extend(scores.iter().map(|(k, v)| (k.clone(), *v)));
        if let Some(d) = &current {
            if d.scores == merged {
                return Ok(d.clone());
            }
        }
        let draft = Draft {
            started_at: current.map(|d| d.started_at).unwrap_or(now),
            updated_at: now,
            scores: merged,
        };
        self.append(id, &[Record::Draft(draft.clone())])?;
        session.updated_at = session.updated_at.max(now);
        session.draft = Some(draft.clone());
        self.update_index(&session)?;
        Ok(draft)
    }

    /// Removes one score from the working draft, if present.
    pub fn delete_draft_score(
        &self,
        id: &str,
        catalog: &Catalog,
        leaf_id: &str,
        now: Timestamp,
    ) -> Result<Option<Draft>, StoreError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("session lock poisoned");
        let mut session = self.load(id)?;
        Self::check_catalog(&session, catalog)?;
        if !catalog.leaves().iter().any(|l| l.id == leaf_id) {
            return Err(ScoringError::UnknownLeaves(vec![leaf_id.to_string()]).into());
        }
        let Some(mut draft) = session.draft.clone() else {
            return Ok(None);
        };
        if draft.scores.remove(leaf_id).is_none() {
            return Ok(Some(draft));
        }
        draft.updated_at = whole_seconds(now);
        self.append(id, &[Record::Draft(draft.clone())])?;
        session.updated_at = session.updated_at.max(draft.updated_at);
        self.update_index(&session)?;
        Ok(Some(draft))
    }

    /// Freezes the working draft into the next experiment.
    pub fn finish_draft(
        &self,
        id: &str,
        catalog: &Catalog,
        now: Timestamp,
        mode: Mode,
    ) -> Result<Experiment, StoreError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("session lock poisoned");
        let mut session = self.load(id)?;
        let draft = match &session.draft {
            Some(d) if !d.scores.is_empty() => d.clone(),
            _ => return Err(StoreError::EmptyDraft),
        };
        let assessment = Assessment {
            catalog: session.catalog.clone(),
            scores: draft.scores,
        };
        let now = whole_seconds(now);
        let experiment =
            Self::build_experiment(&session, catalog, assessment, draft.started_at, now, mode)?;
        self.append(
            id,
            &[
                Record::Experiment(Box::new(experiment.clone())),
                Record::DraftCleared { at: now },
            ],
        )?;
        session.updated_at = session.updated_at.max(now);
        session.experiments.push(experiment.clone());
        session.draft = None;
        self.update_index(&session)?;
        Ok(experiment)
    }

    pub fn progression(&self, id: &str) -> Result<Vec<ProgressionRow>, StoreError> {
        Ok(progression_of(&self.load(id)?))
    }

    /// Re-scores every stored experiment and checks it matches the stored result.
    pub fn verify(&self, id: &str, catalog: &Catalog) -> Result<(), StoreError> {
        let session = self.load(id)?;
        Self::check_catalog(&session, catalog)?;
        for e in &session.experiments {
            let fresh = rollup(catalog, &e.assessment, e.mode)?;
            if fresh != e.result {
                return Err(StoreError::Rederivation { index: e.index });
            }
        }
        Ok(())
    }
}

pub fn progression_of(session: &Session) -> Vec<ProgressionRow> {
    let mut previous: Option<&Rational> = None;
    session
        .experiments
        .iter()
        .map(|e| {
            let achievement = e.root_achievement();
            let row = ProgressionRow {
                index: e.index,
                finished_at: e.finished_at,
                achievement: achievement.clone(),
                delta: previous.map(|p| achievement - p),
            };
            previous = Some(achievement);
            row
        })
        .collect()
}

fn is_path_safe(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::worked_example_assessment;
    use crate::scoring::ratio;

    fn t(secs: i64) -> Timestamp {
        Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap()
    }

    fn store() -> (tempfile::TempDir, SessionStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path().join("store")).unwrap();
        (dir, store)
    }

    fn uniform(cat: &Catalog, value: i64) -> Assessment {
        Assessment {
            catalog: cat.catalog_ref(),
            scores: cat
                .leaves()
                .iter()
                .map(|l| (l.id.clone(), LeafScore::new(value).unwrap()))
                .collect(),
        }
    }

    #[test]
    fn create_sessions() {
        let (_d, store) = store();
        let cat = Catalog::bundled();
        let a = store
            .create_session("alice", cat.catalog_ref(), t(0))
            .unwrap();
        let b = store
            .create_session("alice", cat.catalog_ref(), t(1))
            .unwrap();
        assert_ne!(a.session_id, b.session_id);
        assert!(a.experiments.is_empty());
        assert!(matches!(
            store.create_session("  ", cat.catalog_ref(), t(0)),
            Err(StoreError::EmptyUser)
        ));
        assert_eq!(store.list().unwrap().len(), 2);
        assert_eq!(store.load(&a.session_id).unwrap(), a);
    }

    #[test]
    fn record_and_progress() {
        let (_d, store) = store();
        let cat = Catalog::bundled();
        let s = store
            .create_session("alice", cat.catalog_ref(), t(0))
            .unwrap();
        let first = worked_example_assessment();
        let e1 = store
            .record_experiment(&s.session_id, &cat, first.clone(), t(10), t(10 + 45 * 60))
            .unwrap();
        assert_eq!(e1.index, 1);
        assert_eq!(e1.root_achievement(), &ratio(257, 90));
        assert_eq!(e1.duration_minutes(), int(45));

        let mut second = first;
        for s in second.scores.values_mut() {
            *s = LeafScore::new(i64::from(s.value() + 1).min(4)).unwrap();
        }
        let e2 = store
            .record_experiment(&s.session_id, &cat, second, t(4000), t(6000))
            .unwrap();
        assert_eq!(e2.index, 2);
        assert!(e2.root_achievement() > e1.root_achievement());

        let rows = store.progression(&s.session_id).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].delta, None);
        assert_eq!(
            rows[1].delta.as_ref().unwrap(),
            &(e2.root_achievement() - e1.root_achievement())
        );
        store.verify(&s.session_id, &cat).unwrap();
        let entry = &store.list().unwrap()[0];
        assert_eq!(entry.entry.experiment_count, 2);
        assert_eq!(entry.entry.updated_at, t(6000));
    }

    #[test]
    fn progression_arithmetic() {
        let (_d, store) = store();
        let cat = Catalog::bundled();
        let s = store
            .create_session("bob", cat.catalog_ref(), t(0))
            .unwrap();
        assert!(store.progression(&s.session_id).unwrap().is_empty());
        store
            .record_experiment(&s.session_id, &cat, uniform(&cat, 2), t(1), t(2))
            .unwrap();
        let rows = store.progression(&s.session_id).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].delta, None);
        store
            .record_experiment(&s.session_id, &cat, uniform(&cat, 3), t(3), t(4))
            .unwrap();
        let rows = store.progression(&s.session_id).unwrap();
        assert_eq!(rows[1].achievement, int(3));
        assert_eq!(rows[1].delta, Some(int(1)));
    }

    #[test]
    fn record_errors() {
        let (_d, store) = store();
        let cat = Catalog::bundled();
        assert!(matches!(
            store.record_experiment("nope", &cat, uniform(&cat, 2), t(0), t(1)),
            Err(StoreError::UnknownSession(_))
        ));
        assert!(matches!(
            store.load("../etc"),
            Err(StoreError::UnknownSession(_))
        ));
        let s = store
            .create_session("carol", cat.catalog_ref(), t(0))
            .unwrap();
        assert!(matches!(
            store.record_experiment(&s.session_id, &cat, uniform(&cat, 2), t(5), t(4)),
            Err(StoreError::ClockInversion { .. })
        ));
        let mut partial = uniform(&cat, 2);
        partial.scores.remove("bcm.testing.q1");
        assert!(matches!(
            store.record_experiment(&s.session_id, &cat, partial, t(0), t(1)),
            Err(StoreError::Scoring(ScoringError::Incomplete(ids))) if ids == ["bcm.testing.q1"]
        ));
        assert!(store.load(&s.session_id).unwrap().experiments.is_empty());
    }

    #[test]
    fn draft_lifecycle() {
        let (_d, store) = store();
        let cat = Catalog::bundled();
        let s = store
            .create_session("dana", cat.catalog_ref(), t(0))
            .unwrap();
        let id = &s.session_id;
        assert!(matches!(
            store.finish_draft(id, &cat, t(1), Mode::Partial),
            Err(StoreError::EmptyDraft)
        ));

        let one = BTreeMap::from([("org.allocation.q1".to_string(), LeafScore::new(4).unwrap())]);
        let d1 = store.put_draft_scores(id, &cat, &one, t(10)).unwrap();
        let lines_before = fs::read_to_string(store.session_path(id))
            .unwrap()
            .lines()
            .count();
        let d2 = store.put_draft_scores(id, &cat, &one, t(20)).unwrap();
        assert_eq!(d1, d2);
        let lines_after = fs::read_to_string(store.session_path(id))
            .unwrap()
            .lines()
            .count();
        assert_eq!(lines_before, lines_after);

        let bad = BTreeMap::from([("org".to_string(), LeafScore::new(1).unwrap())]);
        assert!(matches!(
            store.put_draft_scores(id, &cat, &bad, t(21)),
            Err(StoreError::Scoring(ScoringError::UnknownLeaves(_)))
        ));

        assert!(matches!(
            store.finish_draft(id, &cat, t(30), Mode::Strict),
            Err(StoreError::Scoring(ScoringError::Incomplete(_)))
        ));
        let e = store.finish_draft(id, &cat, t(40), Mode::Partial).unwrap();
        assert_eq!(e.started_at, t(10));
        assert_eq!(e.finished_at, t(40));
        assert!(!e.result.complete);
        let reloaded = store.load(id).unwrap();
        assert!(reloaded.draft.is_none());
        assert_eq!(reloaded.experiments, vec![e]);

        store.put_draft_scores(id, &cat, &one, t(50)).unwrap();
        let d = store
            .delete_draft_score(id, &cat, "org.allocation.q1", t(60))
            .unwrap()
            .unwrap();
        assert!(d.scores.is_empty());
        assert!(matches!(
            store.finish_draft(id, &cat, t(70), Mode::Partial),
            Err(StoreError::EmptyDraft)
        ));
        store.verify(id, &cat).unwrap();
    }

    #[test]
    fn partial_trailing_line_is_ignored() {
        let (_d, store) = store();
        let cat = Catalog::bundled();
        let s = store
            .create_session("erin", cat.catalog_ref(), t(0))
            .unwrap();
        let mut f = OpenOptions::new()
            .append(true)
            .open(store.session_path(&s.session_id))
            .unwrap();
        f.write_all(b"{\"type\":\"draft\",\"start").unwrap();
        assert_eq!(store.load(&s.session_id).unwrap(), s);
    }

    #[test]
    fn corrupted_result_fails_verification() {
        let (_d, store) = store();
        let cat = Catalog::bundled();
        let s = store
            .create_session("fay", cat.catalog_ref(), t(0))
            .unwrap();
        store
            .record_experiment(&s.session_id, &cat, uniform(&cat, 3), t(0), t(1))
            .unwrap();
        let path = store.session_path(&s.session_id);
        let text = fs::read_to_string(&path).unwrap();
        // Rewrite the stored policy score from 3 to 2 without touching the assessment.
        let tampered = text.replacen(
            r#""policy":{"node_id":"policy","achievement":"3.00","priority":"1.00","achievement_exact":{"num":"3","den":"1"},"priority_exact":{"num":"1","den":"1"}"#,
            r#""policy":{"node_id":"policy","achievement":"2.00","priority":"2.00","achievement_exact":{"num":"2","den":"1"},"priority_exact":{"num":"2","den":"1"}"#,
            1,
        );
        assert_ne!(text, tampered);
        fs::write(&path, tampered).unwrap();
        assert!(matches!(
            store.verify(&s.session_id, &cat),
            Err(StoreError::Rederivation { index: 1 })
        ));
    }
}
