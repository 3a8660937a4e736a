//! Append-only record log with immutable snapshots.
//!
//! Layout of a store directory:
//!
//! - `log.jsonl`: one committed record per line, each with a sequence number
//! - `snapshots/<version>.json`: full state as of `version`, never rewritten
//!
//! Opening a store loads the newest readable snapshot and replays the log
//! lines after it. A torn final line, left by a crash during an append, is
//! dropped and truncated away.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use regrel_core::corpus::{Paragraph, RegulatoryDocument, StudySet};
use regrel_core::eval::GoldRecord;
use regrel_core::process::ProcessModel;
use regrel_core::review::{
    Decision, DecisionResult, EnqueuePolicy, Planned, ReviewEvent, ReviewItem, ReviewSnapshot, ReviewState, RunOutput,
};
use regrel_core::DocId;

const LOG_FILE: &str = "log.jsonl";
const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Rank,
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    pub kind: RunKind,
    pub model_id: String,
    pub set_id: String,
    pub params: serde_json::Value,
    pub status: RunStatus,
    #[serde(default)]
    pub error: Option<String>,
    pub started_at: DateTime<Utc>,
    #[serde(default)]
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum StoreRecord {
    SetPut {
        set_id: String,
        paragraphs: Vec<Paragraph>,
    },
    DocumentsPut {
        documents: Vec<RegulatoryDocument>,
    },
    ModelPut {
        model: ProcessModel,
        use_case_id: String,
    },
    RunStarted {
        run: RunInfo,
    },
    RunFinished {
        run_id: String,
        output: RunOutput,
        at: DateTime<Utc>,
    },
    RunFailed {
        run_id: String,
        error: String,
        at: DateTime<Utc>,
    },
    Review {
        model_id: String,
        event: ReviewEvent,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct LogLine {
    seq: u64,
    #[serde(flatten)]
    record: StoreRecord,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StoreState {
    pub version: u64,
    pub sets: BTreeMap<String, StudySet>,
    pub documents: BTreeMap<DocId, RegulatoryDocument>,
    pub models: BTreeMap<String, ProcessModel>,
    pub runs: BTreeMap<String, RunInfo>,
    pub outputs: BTreeMap<String, RunOutput>,
    pub reviews: BTreeMap<String, ReviewState>,
    item_models: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    version: u64,
    sets: Vec<(String, Vec<Paragraph>)>,
    documents: Vec<RegulatoryDocument>,
    models: Vec<ProcessModel>,
    runs: Vec<RunInfo>,
    outputs: Vec<(String, RunOutput)>,
    reviews: Vec<ReviewSnapshot>,
}

impl StoreState {
    fn apply(&mut self, record: &StoreRecord) -> Result<Option<DecisionResult>> {
        match record {
            StoreRecord::SetPut { set_id, paragraphs } => {
                self.sets
                    .insert(set_id.clone(), StudySet::new(set_id.clone(), paragraphs.clone())?);
            }
            StoreRecord::DocumentsPut { documents } => {
                for d in documents {
                    self.documents.insert(d.doc_id.clone(), d.clone());
                }
            }
            StoreRecord::ModelPut { model, use_case_id } => {
                model.validate()?;
                if self.models.contains_key(&model.model_id) {
                    bail!("model {} already stored", model.model_id);
                }
                self.models.insert(model.model_id.clone(), model.clone());
                self.reviews.insert(
                    model.model_id.clone(),
                    ReviewState::new(model.clone(), use_case_id.clone()),
                );
            }
            StoreRecord::RunStarted { run } => {
                if self.runs.contains_key(&run.run_id) {
                    bail!("run {} already exists", run.run_id);
                }
                self.runs.insert(run.run_id.clone(), run.clone());
            }
            StoreRecord::RunFinished { run_id, output, at } => {
                let run = self
                    .runs
                    .get_mut(run_id)
                    .with_context(|| format!("unknown run {run_id}"))?;
                run.status = RunStatus::Finished;
                run.finished_at = Some(*at);
                self.outputs.insert(run_id.clone(), output.clone());
            }
            StoreRecord::RunFailed { run_id, error, at } => {
                let run = self
                    .runs
                    .get_mut(run_id)
                    .with_context(|| format!("unknown run {run_id}"))?;
                run.status = RunStatus::Failed;
                run.error = Some(error.clone());
                run.finished_at = Some(*at);
            }
            StoreRecord::Review { model_id, event } => {
                let review = self
                    .reviews
                    .get_mut(model_id)
                    .with_context(|| format!("unknown model {model_id}"))?;
                let result = review.apply(event)?;
                if let ReviewEvent::Enqueued { items } = event {
                    for i in items {
                        self.item_models.insert(i.item_id.clone(), model_id.clone());
                    }
                }
                return Ok(result);
            }
        }
        Ok(None)
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            version: self.version,
            sets: self
                .sets
                .iter()
                .map(|(id, s)| (id.clone(), s.paragraphs().to_vec()))
                .collect(),
            documents: self.documents.values().cloned().collect(),
            models: self.models.values().cloned().collect(),
            runs: self.runs.values().cloned().collect(),
            outputs: self.outputs.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            reviews: self.reviews.values().map(ReviewState::snapshot).collect(),
        }
    }

    fn from_snapshot(snap: Snapshot) -> Result<Self> {
        let mut state = StoreState {
            version: snap.version,
            ..StoreState::default()
        };
        for (id, paragraphs) in snap.sets {
            state.sets.insert(id.clone(), StudySet::new(id, paragraphs)?);
        }
        state.documents = snap.documents.into_iter().map(|d| (d.doc_id.clone(), d)).collect();
        state.models = snap.models.into_iter().map(|m| (m.model_id.clone(), m)).collect();
        state.runs = snap.runs.into_iter().map(|r| (r.run_id.clone(), r)).collect();
        state.outputs = snap.outputs.into_iter().collect();
        for r in snap.reviews {
            let review = ReviewState::from_snapshot(r)?;
            let model_id = review.model().model_id.clone();
            for id in review.items().keys() {
                state.item_models.insert(id.clone(), model_id.clone());
            }
            state.reviews.insert(model_id, review);
        }
        Ok(state)
    }

    /// Model whose review queue holds `item_id`.
    pub fn model_of_item(&self, item_id: &str) -> Option<&str> {
        self.item_models.get(item_id).map(String::as_str)
    }

    pub fn item(&self, item_id: &str) -> Option<&ReviewItem> {
        self.reviews.get(self.model_of_item(item_id)?)?.item(item_id)
    }
}

pub struct Store {
    dir: PathBuf,
    log: File,
    state: StoreState,
    snapshot_every: u64,
}

impl Store {
    /// Opens or creates a store in `dir`.
    pub fn open(dir: &Path) -> Result<Store> {
        fs::create_dir_all(dir.join(SNAPSHOT_DIR)).with_context(|| format!("creating {}", dir.display()))?;
        let mut state = load_latest_snapshot(&dir.join(SNAPSHOT_DIR))?;
        let log_path = dir.join(LOG_FILE);
        let mut log = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&log_path)
            .with_context(|| format!("opening {}", log_path.display()))?;
        let valid_len = replay(&mut log, &mut state)?;
        let len = log.metadata()?.len();
        if valid_len < len {
            log::warn!("dropping {} bytes of a torn final log line", len - valid_len);
            log.set_len(valid_len)?;
            log.seek(SeekFrom::End(0))?;
        }
        Ok(Store {
            dir: dir.to_path_buf(),
            log,
            state,
            snapshot_every: 200,
        })
    }

    pub fn with_snapshot_every(mut self, n: u64) -> Self {
        self.snapshot_every = n.max(1);
        self
    }

    pub fn state(&self) -> &StoreState {
        &self.state
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Validates `record` against the current state, appends it durably and
    /// then makes it visible.
    pub fn commit(&mut self, record: StoreRecord) -> Result<Option<DecisionResult>> {
        let mut next = self.state.clone();
        let result = next.apply(&record)?;
        next.version += 1;
        let line = LogLine {
            seq: next.version,
            record,
        };
        let mut bytes = serde_json::to_vec(&line)?;
        bytes.push(b'\n');
        self.log.write_all(&bytes)?;
        self.log.sync_data()?;
        self.state = next;
        if self.state.version.is_multiple_of(self.snapshot_every) {
            self.snapshot()?;
        }
        Ok(result)
    }

    /// Writes the current state as a new immutable snapshot file.
    pub fn snapshot(&self) -> Result<PathBuf> {
        let path = self
            .dir
            .join(SNAPSHOT_DIR)
            .join(format!("{:010}.json", self.state.version));
        if !path.exists() {
            crate::io::write_atomic(&path, &serde_json::to_vec(&self.state.snapshot())?)?;
        }
        Ok(path)
    }

    pub fn next_run_id(&self) -> String {
        format!("run-{:06}", self.state.runs.len() + 1)
    }

    pub fn enqueue(&mut self, run_id: &str, policy: EnqueuePolicy) -> Result<Vec<ReviewItem>> {
        let run = self
            .state
            .runs
            .get(run_id)
            .with_context(|| format!("unknown run {run_id}"))?;
        let output = self
            .state
            .outputs
            .get(run_id)
            .with_context(|| format!("run {run_id} has no output yet"))?;
        let model_id = run.model_id.clone();
        let review = &self.state.reviews[&model_id];
        let items = review.plan_enqueue(output, policy)?;
        if !items.is_empty() {
            self.commit(StoreRecord::Review {
                model_id,
                event: ReviewEvent::Enqueued { items: items.clone() },
            })?;
        }
        Ok(items)
    }

    pub fn decide(
        &mut self,
        item_id: &str,
        decision: &Decision,
        now: DateTime<Utc>,
    ) -> Result<DecisionResult, DecideError> {
        let model_id = self
            .state
            .model_of_item(item_id)
            .ok_or_else(|| DecideError::Review(regrel_core::review::ReviewError::UnknownItem(item_id.into())))?
            .to_string();
        let planned = self.state.reviews[&model_id]
            .plan_decision(item_id, decision, now)
            .map_err(DecideError::Review)?;
        match planned {
            Planned::Replay(r) => Ok(*r),
            Planned::Apply(event) => {
                let r = self
                    .commit(StoreRecord::Review { model_id, event })
                    .map_err(DecideError::Store)?;
                Ok(r.expect("decisions yield results"))
            }
        }
    }

    pub fn import_gold(&mut self, model_id: &str, records: Vec<GoldRecord>) -> Result<()> {
        self.commit(StoreRecord::Review {
            model_id: model_id.into(),
            event: ReviewEvent::GoldImported { records },
        })?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DecideError {
    #[error(transparent)]
    Review(regrel_core::review::ReviewError),
    #[error(transparent)]
    Store(anyhow::Error),
}

fn load_latest_snapshot(dir: &Path) -> Result<StoreState> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    for path in files.iter().rev() {
        let parsed = fs::read(path)
            .map_err(anyhow::Error::from)
            .and_then(|b| Ok(serde_json::from_slice::<Snapshot>(&b)?))
            .and_then(StoreState::from_snapshot);
        match parsed {
            Ok(state) => return Ok(state),
            Err(e) => log::warn!("skipping unreadable snapshot {}: {e:#}", path.display()),
        }
    }
    Ok(StoreState::default())
}

/// Applies log lines newer than the state. Returns the byte length of the
/// valid prefix of the log.
fn replay(log: &mut File, state: &mut StoreState) -> Result<u64> {
    log.seek(SeekFrom::Start(0))?;
    let mut reader = BufReader::new(&*log);
    let mut offset = 0u64;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        let complete = buf.last() == Some(&b'\n');
        let parsed: Option<LogLine> = serde_json::from_slice(&buf).ok();
        match (parsed, complete) {
            (Some(line), true) => {
                if line.seq > state.version {
                    if line.seq != state.version + 1 {
                        bail!("log gap: expected seq {}, found {}", state.version + 1, line.seq);
                    }
                    state.apply(&line.record)?;
                    state.version = line.seq;
                }
                offset += n as u64;
            }
            (_, false) => break,
            (None, true) => bail!("corrupt log line at byte {offset}"),
        }
    }
    Ok(offset)
}
