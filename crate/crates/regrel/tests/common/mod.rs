#![allow(dead_code)]

use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use regrel::runs::{execute_rank, RankRequest};
use regrel::store::{RunInfo, RunKind, RunStatus, Store, StoreRecord};
use regrel::synth::{generate, SynthCase, UseCase};
use regrel_core::retrieval::Method;
use regrel_core::review::{Action, Decision, EnqueuePolicy};
use regrel_core::Level;

pub fn at(secs: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(1_760_000_000 + secs, 0).unwrap()
}

/// Use case 2 crowd subset: small enough for fast store round trips.
pub fn small_case() -> SynthCase {
    generate(UseCase::Two)
}

pub fn rank_request(case: &SynthCase, level: Level) -> RankRequest {
    RankRequest {
        model_id: case.model.model_id.clone(),
        set_id: case.crowd_set.use_case_id.clone(),
        level,
        method: Method::Bm25CrossEncoder,
        initial_k: 20,
        provider: Default::default(),
    }
}

/// Stores the set, documents, model and gold, then runs and enqueues one
/// level-2 ranking. Returns the run id.
pub fn populate(store: &mut Store, case: &SynthCase) -> String {
    let set = &case.crowd_set;
    store
        .commit(StoreRecord::SetPut {
            set_id: set.use_case_id.clone(),
            paragraphs: set.paragraphs().to_vec(),
        })
        .unwrap();
    store
        .commit(StoreRecord::DocumentsPut {
            documents: case.documents.clone(),
        })
        .unwrap();
    store
        .commit(StoreRecord::ModelPut {
            model: case.model.clone(),
            use_case_id: case.use_case.id().into(),
        })
        .unwrap();
    let keep = |id: &regrel_core::ParaId| set.paragraph(id.as_str()).is_some();
    store
        .import_gold(
            &case.model.model_id,
            case.gold.iter().filter(|r| keep(&r.para_id)).cloned().collect(),
        )
        .unwrap();
    let run_id = store.next_run_id();
    let req = rank_request(case, Level::L2);
    store
        .commit(StoreRecord::RunStarted {
            run: RunInfo {
                run_id: run_id.clone(),
                kind: RunKind::Rank,
                model_id: req.model_id.clone(),
                set_id: req.set_id.clone(),
                params: serde_json::to_value(&req).unwrap(),
                status: RunStatus::Running,
                error: None,
                started_at: at(0),
                finished_at: None,
            },
        })
        .unwrap();
    let output = execute_rank(&run_id, &req, set, &case.model, None).unwrap();
    store
        .commit(StoreRecord::RunFinished {
            run_id: run_id.clone(),
            output,
            at: at(1),
        })
        .unwrap();
    store.enqueue(&run_id, EnqueuePolicy::TopK { k: 3 }).unwrap();
    run_id
}

pub fn decision(action: Action, key: &str) -> Decision {
    Decision {
        action,
        relevance_type: match action {
            Action::Retype => Some(regrel_core::RelevanceType::Informative),
            Action::Confirm => Some(regrel_core::RelevanceType::Compliance),
            Action::Reject => None,
        },
        reviewer: "expert".into(),
        idempotency_key: key.into(),
    }
}

/// Pending item ids of the store, sorted.
pub fn pending(store: &Store) -> Vec<String> {
    let mut ids: Vec<String> = store
        .state()
        .reviews
        .values()
        .flat_map(|r| r.items().values())
        .filter(|i| i.status == regrel_core::review::ReviewStatus::Pending)
        .map(|i| i.item_id.clone())
        .collect();
    ids.sort();
    ids
}

pub fn open(dir: &Path) -> Store {
    Store::open(dir).unwrap()
}

/// Chat stub: counts requests and answers every one with the same reply.
pub struct StubChat {
    pub calls: std::sync::atomic::AtomicUsize,
    pub reply: String,
}

impl StubChat {
    /// Replies that the first task of the model is compliance-relevant.
    pub fn first_task(model: &regrel_core::process::ProcessModel) -> Self {
        let task = model.nodes_at(Level::L3).next().unwrap();
        let parent = model.parent(task.node_id.as_str()).unwrap();
        let reply = serde_json::json!({
            "level1": "compliance",
            "level2": { parent.node_id.as_str(): "compliance" },
            "level3": { task.node_id.as_str(): "compliance" },
            "justification": "The paragraph imposes a duty on this task."
        });
        StubChat {
            calls: Default::default(),
            reply: reply.to_string(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl regrel_core::judge::ChatProvider for StubChat {
    fn complete(
        &self,
        _request: &regrel_core::judge::ChatRequest,
    ) -> Result<String, regrel_core::retrieval::ProviderError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Ok(self.reply.clone())
    }
}
