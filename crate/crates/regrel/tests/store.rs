mod common;

use std::fs::{self, OpenOptions};
use std::io::Write;

use regrel::store::{DecideError, Store, StoreRecord};
use regrel_core::review::{Action, ReviewError, ReviewStatus};

use common::{at, decision, open, pending, populate, small_case};

#[test]
fn reopening_replays_to_the_same_state() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case();
    let mut store = open(dir.path()).with_snapshot_every(4);
    populate(&mut store, &case);
    let items = pending(&store);
    assert!(items.len() >= 3);
    store
        .decide(&items[0], &decision(Action::Confirm, "k0"), at(10))
        .unwrap();
    store
        .decide(&items[1], &decision(Action::Reject, "k1"), at(11))
        .unwrap();
    store
        .decide(&items[2], &decision(Action::Retype, "k2"), at(12))
        .unwrap();
    let live = store.state().clone();
    drop(store);

    let reopened = open(dir.path());
    assert_eq!(reopened.state(), &live);

    // log only, no snapshots
    fs::remove_dir_all(dir.path().join("snapshots")).unwrap();
    assert_eq!(open(dir.path()).state(), &live);
}

#[test]
fn a_torn_final_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case();
    let mut store = open(dir.path());
    populate(&mut store, &case);
    let live = store.state().clone();
    drop(store);

    let log = dir.path().join("log.jsonl");
    let len = fs::metadata(&log).unwrap().len();
    let mut f = OpenOptions::new().append(true).open(&log).unwrap();
    f.write_all(br#"{"seq":99,"record":"documents_put","docu"#).unwrap();
    drop(f);

    let mut store = open(dir.path());
    assert_eq!(store.state(), &live);
    assert_eq!(fs::metadata(&log).unwrap().len(), len);

    let item = pending(&store)[0].clone();
    store
        .decide(&item, &decision(Action::Confirm, "after-crash"), at(20))
        .unwrap();
    let live = store.state().clone();
    drop(store);
    assert_eq!(open(dir.path()).state(), &live);
}

#[test]
fn corrupt_or_gapped_logs_refuse_to_open() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = open(dir.path());
    store
        .commit(StoreRecord::DocumentsPut { documents: Vec::new() })
        .unwrap();
    drop(store);
    let log = dir.path().join("log.jsonl");
    let good = fs::read_to_string(&log).unwrap();

    fs::write(&log, format!("{good}not json\n")).unwrap();
    assert!(Store::open(dir.path()).is_err());

    fs::write(
        &log,
        format!("{good}{}\n", good.trim().replace("\"seq\":1", "\"seq\":3")),
    )
    .unwrap();
    let err = Store::open(dir.path()).err().unwrap();
    assert!(format!("{err:#}").contains("gap"), "{err:#}");
}

#[test]
fn an_unreadable_snapshot_falls_back_to_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case();
    let mut store = open(dir.path());
    populate(&mut store, &case);
    let path = store.snapshot().unwrap();
    let live = store.state().clone();
    drop(store);
    fs::write(&path, b"{").unwrap();
    assert_eq!(open(dir.path()).state(), &live);
}

#[test]
fn decisions_are_idempotent_across_restarts() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case();
    let mut store = open(dir.path());
    populate(&mut store, &case);
    let items = pending(&store);
    let d = decision(Action::Confirm, "once");
    let first = store.decide(&items[0], &d, at(10)).unwrap();
    let version = store.state().version;
    drop(store);

    let mut store = open(dir.path());
    let again = store.decide(&items[0], &d, at(99)).unwrap();
    assert_eq!(again, first);
    assert_eq!(store.state().version, version);
    assert_eq!(first.item.status, ReviewStatus::Confirmed);

    // same key, different request
    match store.decide(&items[1], &d, at(100)) {
        Err(DecideError::Review(ReviewError::KeyReuse(k))) => assert_eq!(k, "once"),
        other => panic!("expected key reuse, got {other:?}"),
    }
    // decided item, fresh key
    match store.decide(&items[0], &decision(Action::Reject, "twice"), at(101)) {
        Err(DecideError::Review(ReviewError::Conflict(item))) => assert_eq!(item.status, ReviewStatus::Confirmed),
        other => panic!("expected conflict, got {other:?}"),
    }
    assert_eq!(store.state().version, version);
}

#[test]
fn gold_follows_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case();
    let mut store = open(dir.path());
    populate(&mut store, &case);
    let id = pending(&store)[0].clone();
    let item = store.state().item(&id).unwrap().clone();
    let r = store.decide(&id, &decision(Action::Confirm, "g"), at(5)).unwrap();
    let gold = store.state().reviews[&case.model.model_id].gold();
    let labels = gold.get(item.para_id.as_str()).unwrap();
    assert_eq!(labels, &r.gold_delta.after);
    assert!(labels.get(item.level, item.query_node_id.as_str()).is_relevant());
    assert!(labels.level1.is_relevant());
}
