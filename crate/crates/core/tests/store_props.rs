mod common;

use std::fs;

use proptest::prelude::*;

use tracelift_core::artifact::{Origin, Selector};
use tracelift_core::query_export::{bundle_bytes, build_view_bundle, export_view_bundle};
use tracelift_core::store::{replay, CaptureFile, CaptureFormat, Demarcation, Event, Repository, BLOBS_DIR, EVENTS_FILE};

use common::{build, ops};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn replay_reproduces_live_state(script in ops(40)) {
        let tmp = tempfile::tempdir().unwrap();
        let repo = build(tmp.path(), &script);
        let replayed = replay(tmp.path()).unwrap();
        prop_assert_eq!(&replayed, repo.state());

        let events = repo.events().unwrap();
        prop_assert_eq!(events.len() as u64, repo.event_count());
        for (i, e) in events.iter().enumerate() {
            prop_assert_eq!(e.seq, i as u64 + 1);
            prop_assert_eq!(&Event::from_line(&e.to_line()).unwrap(), e);
        }
    }

    #[test]
    fn export_is_byte_stable_across_reopen(script in ops(30)) {
        let tmp = tempfile::tempdir().unwrap();
        let repo = build(tmp.path(), &script);
        let (path, bundle) = export_view_bundle(tmp.path(), repo.state()).unwrap();
        let first = fs::read(&path).unwrap();
        prop_assert_eq!(&first, &bundle_bytes(&bundle));
        drop(repo);

        let reopened = Repository::open_read_only(tmp.path()).unwrap();
        prop_assert_eq!(bundle_bytes(&build_view_bundle(reopened.state()).unwrap()), first);
    }

    #[test]
    fn blobs_are_content_addressed(payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..64), 1..6)) {
        let tmp = tempfile::tempdir().unwrap();
        let mut repo = common::open(tmp.path());
        for p in &payloads {
            let a = repo.attach_blob(p).unwrap();
            let events = repo.event_count();
            let b = repo.attach_blob(p).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(repo.event_count(), events);
            prop_assert_eq!(repo.read_blob(&a).unwrap(), p.clone());
        }
        let distinct: std::collections::BTreeSet<_> = payloads.iter().collect();
        let stored = fs::read_dir(tmp.path().join(BLOBS_DIR)).unwrap().count();
        prop_assert_eq!(stored, distinct.len());
    }
}

fn demarcation(path: &str, type_id: &str) -> Demarcation {
    Demarcation {
        selector: Selector::JsonPath { path: path.into() },
        type_id: type_id.into(),
        title: path.into(),
        generator: Origin::Machine,
        classification: None,
        actor_label: String::new(),
        notes: String::new(),
        capture_method: None,
    }
}

#[test]
fn ingestion_keeps_demarcation_order() {
    let tmp = tempfile::tempdir().unwrap();
    let dump = tmp.path().join("dump.json");
    fs::write(&dump, r#"{"a":1,"b":[2],"c":{"d":3}}"#).unwrap();
    let mut repo = common::open(&tmp.path().join("repo"));
    let paths = ["c/d", "a", "b/0"];
    let capture = CaptureFile {
        path: dump,
        format: CaptureFormat::Json,
        demarcations: paths.iter().map(|p| demarcation(p, "initial-dataset")).collect(),
    };
    let records = repo.ingest_capture(&capture).unwrap();
    let titles: Vec<&str> = records.iter().map(|r| r.title.as_str()).collect();
    assert_eq!(titles, paths);
    let ids: Vec<String> = records.iter().map(|r| r.artifact_id.clone()).collect();
    assert_eq!(repo.state().ids_by_seq(), ids);
    let blob = &records[0].payload_ref.as_ref().unwrap().blob;
    assert!(records.iter().all(|r| &r.payload_ref.as_ref().unwrap().blob == blob));
}

#[test]
fn bad_demarcation_rejects_the_whole_capture() {
    let tmp = tempfile::tempdir().unwrap();
    let dump = tmp.path().join("dump.json");
    fs::write(&dump, r#"{"a":1}"#).unwrap();
    let root = tmp.path().join("repo");
    let mut repo = common::open(&root);
    let capture = CaptureFile {
        path: dump,
        format: CaptureFormat::Json,
        demarcations: vec![demarcation("a", "initial-dataset"), demarcation("missing", "initial-dataset")],
    };
    assert!(repo.ingest_capture(&capture).is_err());
    assert_eq!(repo.event_count(), 0);
    assert!(repo.state().artifacts.is_empty());
    assert_eq!(fs::read_to_string(root.join(EVENTS_FILE)).unwrap(), "");
}
