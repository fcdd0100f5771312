//! Read-side queries over a replayed repository and the view bundle
//! exported for the explorer UI.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::{derive_origin, Assignment, ArtifactRecord, Classification, Origin, OriginRule, Phase};
use crate::canonical;
use crate::store::{RepoState, EXPORTS_DIR};
use crate::time::Timestamp;
use crate::tracegraph::{DeclaredBy, Direction, VersionStatus};

pub const SCHEMA_VERSION: &str = "tracelift-view/1";
pub const BUNDLE_FILE: &str = "view-bundle.json";

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("unknown {kind} {id:?} in filter")]
    UnknownId { kind: &'static str, id: String },
    #[error("unknown artifact {0}")]
    UnknownArtifact(String),
    #[error("no version of {id} at revision {revision}")]
    MissingVersion { id: String, revision: u32 },
    #[error("revision range {0}..={1} is empty or outside the recorded revisions")]
    BadRange(u32, u32),
    #[error("repository has no revisions to export")]
    EmptyRepository,
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl QueryError {
    pub fn code(&self) -> &'static str {
        match self {
            QueryError::UnknownId { .. } => "unknown-id",
            QueryError::UnknownArtifact(_) => "unknown-artifact",
            QueryError::MissingVersion { .. } => "missing-version",
            QueryError::BadRange(..) => "bad-range",
            QueryError::EmptyRepository => "empty-repository",
            QueryError::Io { .. } => "io",
        }
    }
}

/// Stated generator first; the Source-dimension rule fills in when the
/// annotator left it blank.
pub fn origin_of(classification: &Classification, generator: Option<Origin>, rule: &OriginRule) -> Option<Origin> {
    generator.or_else(|| derive_origin(classification, rule).ok())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactSummary {
    pub artifact_id: String,
    pub title: String,
    #[serde(rename = "type")]
    pub type_id: String,
    pub group: String,
    pub phase: Phase,
    pub origin: Option<Origin>,
    pub seq: u64,
    pub created_at: Timestamp,
}

pub fn summary_of(state: &RepoState, rec: &ArtifactRecord) -> ArtifactSummary {
    let catalog = state.catalog();
    let ty = catalog.artifact_type(&rec.type_id).expect("records reference catalog types");
    let group = catalog.group(&ty.group).expect("types reference catalog groups");
    ArtifactSummary {
        artifact_id: rec.artifact_id.clone(),
        title: rec.title.clone(),
        type_id: rec.type_id.clone(),
        group: group.id.clone(),
        phase: group.phase,
        origin: origin_of(&rec.classification, rec.provenance.generator, &state.config().origin_rule),
        seq: state.created_seq[&rec.artifact_id],
        created_at: rec.provenance.created_at,
    }
}

// ---------------------------------------------------------------------------
// locate
// ---------------------------------------------------------------------------

/// Conjunctive constraints; `None` matches anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filter {
    pub phase: Option<Phase>,
    pub group: Option<String>,
    #[serde(rename = "type")]
    pub type_id: Option<String>,
    pub origin: Option<Origin>,
    pub dimension: Option<String>,
    pub category: Option<String>,
    pub characteristic: Option<String>,
    /// Inclusive; matches artifacts with a version in any revision of the range.
    pub revisions: Option<(u32, u32)>,
}

impl Filter {
    fn check_ids(&self, state: &RepoState) -> Result<(), QueryError> {
        let unknown = |kind, id: &String| QueryError::UnknownId { kind, id: id.clone() };
        if let Some(g) = &self.group {
            state.catalog().group(g).ok_or_else(|| unknown("group", g))?;
        }
        if let Some(t) = &self.type_id {
            state.catalog().artifact_type(t).ok_or_else(|| unknown("type", t))?;
        }
        let tax = state.active_taxonomy();
        if let Some(d) = &self.dimension {
            tax.dimension(d).ok_or_else(|| unknown("dimension", d))?;
        }
        if let Some(c) = &self.category {
            if !tax.categories().any(|(_, cat)| cat.id == *c) {
                return Err(unknown("category", c));
            }
        }
        if let Some(c) = &self.characteristic {
            if !tax.characteristics().any(|(_, _, ch)| ch.id == *c) {
                return Err(unknown("characteristic", c));
            }
        }
        if let Some((a, b)) = self.revisions {
            let last = state.history.revisions().len() as u32;
            if a == 0 || a > b || b > last {
                return Err(QueryError::BadRange(a, b));
            }
        }
        Ok(())
    }

    fn matches(&self, state: &RepoState, rec: &ArtifactRecord, s: &ArtifactSummary) -> bool {
        let c = &rec.classification;
        self.phase.is_none_or(|p| s.phase == p)
            && self.group.as_ref().is_none_or(|g| s.group == *g)
            && self.type_id.as_ref().is_none_or(|t| s.type_id == *t)
            && self.origin.is_none_or(|o| s.origin == Some(o))
            && self.dimension.as_ref().is_none_or(|d| c.is_assigned(d))
            && self.category.as_ref().is_none_or(|x| c.has_category(x))
            && self.characteristic.as_ref().is_none_or(|x| c.has_characteristic(x))
            && self
                .revisions
                .is_none_or(|(a, b)| (a..=b).any(|r| state.history.version_at(&rec.artifact_id, r).is_some()))
    }
}

/// Artifacts matching every constraint, in creation order.
pub fn locate(state: &RepoState, filter: &Filter) -> Result<Vec<ArtifactSummary>, QueryError> {
    filter.check_ids(state)?;
    Ok(state
        .ids_by_seq()
        .iter()
        .map(|id| &state.artifacts[id])
        .map(|rec| (rec, summary_of(state, rec)))
        .filter(|(rec, s)| filter.matches(state, rec, s))
        .map(|(_, s)| s)
        .collect())
}

// ---------------------------------------------------------------------------
// summarize
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoCard {
    pub summary: ArtifactSummary,
    pub classification: Classification,
    pub notes: String,
    pub upstream: Vec<String>,
    pub downstream: Vec<String>,
    /// Characteristic id -> other artifacts carrying it, in creation order.
    pub peers: BTreeMap<String, Vec<String>>,
}

pub fn summarize(state: &RepoState, artifact_id: &str) -> Result<InfoCard, QueryError> {
    let rec = state.artifacts.get(artifact_id).ok_or_else(|| QueryError::UnknownArtifact(artifact_id.to_owned()))?;
    let order = state.ids_by_seq();
    let mut peers = BTreeMap::new();
    for ch in rec.classification.characteristics() {
        let others = order
            .iter()
            .filter(|id| id.as_str() != artifact_id && state.artifacts[*id].classification.has_characteristic(ch))
            .cloned()
            .collect();
        peers.insert(ch.to_owned(), others);
    }
    let live = |ids: Vec<String>| ids.into_iter().filter(|id| state.artifacts.contains_key(id)).collect();
    Ok(InfoCard {
        summary: summary_of(state, rec),
        classification: rec.classification.clone(),
        notes: rec.notes.clone(),
        upstream: live(state.graph.direct(artifact_id, Direction::Upstream)),
        downstream: live(state.graph.direct(artifact_id, Direction::Downstream)),
        peers,
    })
}

// ---------------------------------------------------------------------------
// compare_history
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change<T> {
    pub from: T,
    pub to: T,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DimensionAssignment {
    pub dimension: String,
    pub category: String,
    pub characteristic: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryDelta {
    pub artifact_id: String,
    pub rev_a: u32,
    pub rev_b: u32,
    pub status: Change<VersionStatus>,
    pub content_hash: Option<Change<String>>,
    pub generator: Option<Change<Option<Origin>>>,
    pub classification_added: Vec<DimensionAssignment>,
    pub classification_removed: Vec<DimensionAssignment>,
}

impl HistoryDelta {
    /// No content difference. Status pair and generator are reported but
    /// do not count.
    pub fn is_empty(&self) -> bool {
        self.content_hash.is_none() && self.classification_added.is_empty() && self.classification_removed.is_empty()
    }
}

fn flat_pairs(c: &Classification) -> BTreeSet<DimensionAssignment> {
    c.assignments
        .iter()
        .flat_map(|(d, set)| {
            set.iter().map(move |Assignment { category, characteristic }| DimensionAssignment {
                dimension: d.clone(),
                category: category.clone(),
                characteristic: characteristic.clone(),
            })
        })
        .collect()
}

pub fn compare_history(state: &RepoState, artifact_id: &str, rev_a: u32, rev_b: u32) -> Result<HistoryDelta, QueryError> {
    if !state.artifacts.contains_key(artifact_id) {
        return Err(QueryError::UnknownArtifact(artifact_id.to_owned()));
    }
    let at = |r| {
        state
            .history
            .version_at(artifact_id, r)
            .ok_or_else(|| QueryError::MissingVersion { id: artifact_id.to_owned(), revision: r })
    };
    let (a, b) = (at(rev_a)?, at(rev_b)?);
    let (pa, pb) = (flat_pairs(&a.classification), flat_pairs(&b.classification));
    Ok(HistoryDelta {
        artifact_id: artifact_id.to_owned(),
        rev_a,
        rev_b,
        status: Change { from: a.status, to: b.status },
        content_hash: (a.content_hash != b.content_hash)
            .then(|| Change { from: a.content_hash.clone(), to: b.content_hash.clone() }),
        generator: (a.generator != b.generator).then_some(Change { from: a.generator, to: b.generator }),
        classification_added: pb.difference(&pa).cloned().collect(),
        classification_removed: pa.difference(&pb).cloned().collect(),
    })
}

// ---------------------------------------------------------------------------
// View bundle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginNode {
    pub artifact_id: String,
    pub phase: Phase,
    pub origin: Option<Origin>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ribbon {
    pub phase: Phase,
    pub origin: Origin,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginView {
    pub nodes: Vec<OriginNode>,
    pub ribbons: Vec<Ribbon>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub from: String,
    pub to: String,
    pub declared_by: DeclaredBy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Closure {
    pub upstream: Vec<String>,
    pub downstream: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyView {
    /// Left-to-right order.
    pub order: Vec<String>,
    pub arcs: Vec<Arc>,
    pub closures: BTreeMap<String, Closure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Glyph {
    Circle,
    Triangle,
}

impl From<VersionStatus> for Glyph {
    fn from(s: VersionStatus) -> Self {
        match s {
            VersionStatus::New | VersionStatus::Modified => Glyph::Circle,
            VersionStatus::Unchanged => Glyph::Triangle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryCell {
    pub artifact_id: String,
    pub status: VersionStatus,
    pub glyph: Glyph,
    pub origin: Option<Origin>,
    pub content_hash: String,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub index: u32,
    pub label: String,
    pub created_at: Timestamp,
    pub cells: Vec<HistoryCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryView {
    pub rows: Vec<HistoryRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewBundle {
    pub schema_version: String,
    pub nodes: Vec<ArtifactSummary>,
    pub origin_view: OriginView,
    pub dependency_view: DependencyView,
    pub history_view: HistoryView,
}

/// Phase-ordered sequence for the dependency view. Interactive artifacts
/// have no phase slot and sit right after the latest-created artifact
/// that precedes them.
pub fn dependency_order(summaries: &[ArtifactSummary]) -> Vec<String> {
    let rank = |p: Phase| Phase::ALL.iter().position(|q| *q == p).unwrap_or(usize::MAX);
    let mut staged: Vec<&ArtifactSummary> = summaries.iter().filter(|s| s.phase != Phase::Interactive).collect();
    staged.sort_by_key(|s| (rank(s.phase), s.seq));
    let mut interactive: Vec<&ArtifactSummary> = summaries.iter().filter(|s| s.phase == Phase::Interactive).collect();
    interactive.sort_by_key(|s| s.seq);
    for s in interactive {
        let anchor = staged
            .iter()
            .enumerate()
            .filter(|(_, x)| x.seq < s.seq)
            .max_by_key(|(_, x)| x.seq)
            .map(|(i, _)| i + 1)
            .unwrap_or(0);
        staged.insert(anchor, s);
    }
    staged.into_iter().map(|s| s.artifact_id.clone()).collect()
}

pub fn build_view_bundle(state: &RepoState) -> Result<ViewBundle, QueryError> {
    if state.history.revisions().is_empty() {
        return Err(QueryError::EmptyRepository);
    }
    let rule = &state.config().origin_rule;
    let nodes: Vec<ArtifactSummary> =
        state.ids_by_seq().iter().map(|id| summary_of(state, &state.artifacts[id])).collect();

    let mut counts: BTreeMap<(usize, Origin), usize> = BTreeMap::new();
    let rank = |p: Phase| Phase::ALL.iter().position(|q| *q == p).expect("known phase");
    for n in &nodes {
        if let Some(o) = n.origin {
            *counts.entry((rank(n.phase), o)).or_default() += 1;
        }
    }
    let origin_view = OriginView {
        nodes: nodes
            .iter()
            .map(|n| OriginNode { artifact_id: n.artifact_id.clone(), phase: n.phase, origin: n.origin })
            .collect(),
        ribbons: counts
            .into_iter()
            .map(|((p, origin), count)| Ribbon { phase: Phase::ALL[p], origin, count })
            .collect(),
    };

    let live = |id: &str| state.artifacts.contains_key(id);
    let arcs = state
        .graph
        .edges()
        .iter()
        .filter(|e| live(&e.from) && live(&e.to))
        .map(|e| Arc { from: e.from.clone(), to: e.to.clone(), declared_by: e.declared_by })
        .collect();
    let mut closures = BTreeMap::new();
    for n in &nodes {
        let id = n.artifact_id.as_str();
        let keep = |v: Vec<String>| v.into_iter().filter(|x| live(x)).collect::<Vec<_>>();
        closures.insert(
            n.artifact_id.clone(),
            Closure {
                upstream: keep(state.graph.closure(id, Direction::Upstream).unwrap_or_default()),
                downstream: keep(state.graph.closure(id, Direction::Downstream).unwrap_or_default()),
            },
        );
    }
    let dependency_view = DependencyView { order: dependency_order(&nodes), arcs, closures };

    let rows = state
        .history
        .revisions()
        .iter()
        .map(|rev| HistoryRow {
            index: rev.index,
            label: rev.label.clone(),
            created_at: rev.created_at,
            cells: nodes
                .iter()
                .filter_map(|n| state.history.version_at(&n.artifact_id, rev.index))
                .map(|v| HistoryCell {
                    artifact_id: v.artifact_id.clone(),
                    status: v.status,
                    glyph: v.status.into(),
                    origin: origin_of(&v.classification, v.generator, rule),
                    content_hash: v.content_hash.clone(),
                    classification: v.classification.clone(),
                })
                .collect(),
        })
        .collect();

    Ok(ViewBundle {
        schema_version: SCHEMA_VERSION.to_owned(),
        nodes,
        origin_view,
        dependency_view,
        history_view: HistoryView { rows },
    })
}

/// Ids used anywhere in the views that are missing from the node table.
pub fn dangling_ids(bundle: &ViewBundle) -> Vec<String> {
    let known: BTreeSet<&str> = bundle.nodes.iter().map(|n| n.artifact_id.as_str()).collect();
    let mut used: Vec<&str> = Vec::new();
    used.extend(bundle.origin_view.nodes.iter().map(|n| n.artifact_id.as_str()));
    used.extend(bundle.dependency_view.order.iter().map(String::as_str));
    for a in &bundle.dependency_view.arcs {
        used.push(&a.from);
        used.push(&a.to);
    }
    for (id, c) in &bundle.dependency_view.closures {
        used.push(id);
        used.extend(c.upstream.iter().map(String::as_str));
        used.extend(c.downstream.iter().map(String::as_str));
    }
    for row in &bundle.history_view.rows {
        used.extend(row.cells.iter().map(|c| c.artifact_id.as_str()));
    }
    let missing: BTreeSet<&str> = used.into_iter().filter(|id| !known.contains(id)).collect();
    missing.into_iter().map(str::to_owned).collect()
}

pub fn bundle_bytes(bundle: &ViewBundle) -> Vec<u8> {
    canonical::to_file_bytes(bundle).expect("bundles serialize")
}

/// Write `exports/view-bundle.json` under `root`.
pub fn export_view_bundle(root: &Path, state: &RepoState) -> Result<(PathBuf, ViewBundle), QueryError> {
    let bundle = build_view_bundle(state)?;
    let path = root.join(EXPORTS_DIR).join(BUNDLE_FILE);
    fs::write(&path, bundle_bytes(&bundle)).map_err(|source| QueryError::Io { path: path.clone(), source })?;
    Ok((path, bundle))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(id: &str, phase: Phase, seq: u64) -> ArtifactSummary {
        ArtifactSummary {
            artifact_id: id.into(),
            title: id.into(),
            type_id: String::new(),
            group: String::new(),
            phase,
            origin: None,
            seq,
            created_at: Timestamp::from_millis(0),
        }
    }

    #[test]
    fn phases_first_then_seq() {
        let s = [
            summary("report", Phase::Communication, 1),
            summary("model", Phase::Analysis, 2),
            summary("data", Phase::Preparation, 3),
        ];
        assert_eq!(dependency_order(&s), ["data", "model", "report"]);
    }

    #[test]
    fn interactive_follows_its_predecessor_in_creation_order() {
        let s = [
            summary("data", Phase::Preparation, 1),
            summary("gui", Phase::Interactive, 2),
            summary("model", Phase::Analysis, 3),
            summary("user", Phase::Interactive, 4),
            summary("alert", Phase::Deployment, 5),
            summary("first", Phase::Interactive, 0),
        ];
        assert_eq!(dependency_order(&s), ["first", "data", "gui", "model", "user", "alert"]);
    }

    #[test]
    fn glyphs() {
        assert_eq!(Glyph::from(VersionStatus::New), Glyph::Circle);
        assert_eq!(Glyph::from(VersionStatus::Modified), Glyph::Circle);
        assert_eq!(Glyph::from(VersionStatus::Unchanged), Glyph::Triangle);
    }

    #[test]
    fn stated_generator_wins_over_rule() {
        let c = Classification::new().with("d1", "cat1.3", "c1.3.3");
        let rule = OriginRule::default();
        assert_eq!(origin_of(&c, Some(Origin::Human), &rule), Some(Origin::Human));
        assert_eq!(origin_of(&c, None, &rule), Some(Origin::Machine));
        assert_eq!(origin_of(&Classification::new(), None, &rule), None);
    }
}
