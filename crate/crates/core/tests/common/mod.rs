//! Random repositories shared by the store and query suites.

use std::path::Path;

use proptest::prelude::*;

use tracelift_core::artifact::{bundled_catalog, CaptureMethod, Classification, NewArtifact, Provenance};
use tracelift_core::store::{init_repo, Config, IdSource, Repository, StepClock};
use tracelift_core::tracegraph::DeclaredBy;
use tracelift_core::{Origin, Timestamp};

#[derive(Debug, Clone)]
pub enum Op {
    Create { ty: usize, generator: Option<bool> },
    Classify { target: usize, ty: usize, generator: Option<bool> },
    Link { from: usize, to: usize },
    Snapshot,
    Blob(Vec<u8>),
}

pub fn ops(max: usize) -> impl Strategy<Value = Vec<Op>> {
    let op = prop_oneof![
        3 => (any::<usize>(), any::<Option<bool>>()).prop_map(|(ty, generator)| Op::Create { ty, generator }),
        2 => (any::<usize>(), any::<usize>(), any::<Option<bool>>())
            .prop_map(|(target, ty, generator)| Op::Classify { target, ty, generator }),
        3 => (any::<usize>(), any::<usize>()).prop_map(|(from, to)| Op::Link { from, to }),
        1 => Just(Op::Snapshot),
        1 => prop::collection::vec(any::<u8>(), 0..4).prop_map(Op::Blob),
    ];
    prop::collection::vec(op, 1..max)
}

/// Catalog types that come with a default classification.
pub fn typed_defaults() -> Vec<(String, Classification)> {
    bundled_catalog()
        .types
        .into_iter()
        .filter_map(|t| t.default_classification.map(|c| (t.id, c)))
        .collect()
}

fn origin(g: Option<bool>) -> Option<Origin> {
    g.map(|h| if h { Origin::Human } else { Origin::Machine })
}

pub fn open(dir: &Path) -> Repository {
    init_repo(dir, &Config::default())
        .unwrap()
        .with_clock(StepClock::new(Timestamp::from_millis(1_700_000_000_000), 1000))
        .with_ids(IdSource::seeded(11))
}

/// Run `ops`, checking that every rejected op leaves the state untouched.
/// Ends with a snapshot so exports have at least one revision.
pub fn build(dir: &Path, ops: &[Op]) -> Repository {
    let defaults = typed_defaults();
    let mut repo = open(dir);
    for op in ops {
        let before = repo.state().clone();
        let ids = repo.state().ids_by_seq();
        let pick = |i: usize| ids[i % ids.len()].clone();
        let result = match op {
            Op::Create { ty, generator } => {
                let (type_id, c) = &defaults[ty % defaults.len()];
                let at = repo.now();
                repo.create(NewArtifact {
                    type_id: type_id.clone(),
                    title: format!("{type_id} {}", ids.len()),
                    classification: c.clone(),
                    provenance: Provenance {
                        created_at: at,
                        generator: origin(*generator),
                        actor_label: String::new(),
                        capture_method: Some(CaptureMethod::ManualAnnotation),
                    },
                    payload_ref: None,
                    notes: String::new(),
                })
                .map(drop)
            }
            Op::Classify { .. } | Op::Link { .. } if ids.is_empty() => continue,
            Op::Classify { target, ty, generator } => {
                let c = defaults[ty % defaults.len()].1.clone();
                repo.classify(&pick(*target), c, origin(*generator))
            }
            Op::Link { from, to } => repo.link(&pick(*from), &pick(*to), DeclaredBy::Human, ""),
            Op::Snapshot => repo.snapshot_auto("auto").map(drop),
            Op::Blob(bytes) => repo.attach_blob(bytes).map(drop),
        };
        if result.is_err() {
            assert_eq!(repo.state(), &before, "{op:?} failed but changed state");
        }
    }
    repo.snapshot_auto("final").unwrap();
    repo
}
