//! Dependency DAG between artifacts, revision-indexed version history and
//! the traceability check that ties them to artifact records.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::artifact::{ArtifactRecord, Classification, Origin, PayloadRef};
use crate::canonical;
use crate::taxonomy::Taxonomy;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeclaredBy {
    Human,
    Machine,
    Inferred,
}

impl std::str::FromStr for DeclaredBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(DeclaredBy::Human),
            "machine" => Ok(DeclaredBy::Machine),
            "inferred" => Ok(DeclaredBy::Inferred),
            _ => Err(format!("unknown declarer {s:?} (expected human, machine or inferred)")),
        }
    }
}

/// `from` is upstream of `to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub from: String,
    pub to: String,
    pub declared_by: DeclaredBy,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Upstream,
    Downstream,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("unknown artifact {0}")]
    UnknownArtifact(String),
    #[error("self-loop on {0}")]
    SelfLoop(String),
    #[error("edge would close a cycle along {}", path.join(" -> "))]
    Cycle { path: Vec<String> },
    #[error("edge {from} -> {to} already exists")]
    DuplicateEdge { from: String, to: String },
    #[error("artifact {0} already has versions; it cannot be New")]
    AlreadyVersioned(String),
    #[error("artifact {0} has no previous version; it must be New")]
    NotVersioned(String),
    #[error("artifact {id} marked Unchanged but its content hash differs from revision {previous}")]
    UnchangedHashMismatch { id: String, previous: u32 },
    #[error("artifact {id} marked Modified but its content hash equals revision {previous}")]
    ModifiedWithoutChange { id: String, previous: u32 },
    #[error("no version of {id} at revision {revision}")]
    MissingVersion { id: String, revision: u32 },
}

impl TraceError {
    pub fn code(&self) -> &'static str {
        match self {
            TraceError::UnknownArtifact(_) => "unknown-artifact",
            TraceError::SelfLoop(_) => "self-loop",
            TraceError::Cycle { .. } => "cycle",
            TraceError::DuplicateEdge { .. } => "duplicate-edge",
            TraceError::AlreadyVersioned(_) | TraceError::NotVersioned(_) => "status-conflict",
            TraceError::UnchangedHashMismatch { .. } => "unchanged-hash-mismatch",
            TraceError::ModifiedWithoutChange { .. } => "modified-without-change",
            TraceError::MissingVersion { .. } => "missing-version",
        }
    }
}

// ---------------------------------------------------------------------------
// Dependency graph
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceGraph {
    /// Every id ever registered, mapped to its slot. Slot order is
    /// registration order.
    index: BTreeMap<String, usize>,
    names: Vec<String>,
    /// False once purged; the slot and its edges stay behind.
    live: Vec<bool>,
    edges: Vec<DependencyEdge>,
    down: Vec<Vec<usize>>,
    up: Vec<Vec<usize>>,
}

impl TraceGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: &str) {
        match self.index.get(id) {
            Some(&i) => self.live[i] = true,
            None => {
                self.index.insert(id.to_owned(), self.names.len());
                self.names.push(id.to_owned());
                self.live.push(true);
                self.down.push(Vec::new());
                self.up.push(Vec::new());
            }
        }
    }

    /// Forget a node while keeping its edges; they become dangling.
    pub fn purge_node(&mut self, id: &str) -> bool {
        match self.index.get(id) {
            Some(&i) if self.live[i] => {
                self.live[i] = false;
                true
            }
            _ => false,
        }
    }

    fn slot(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied().filter(|&i| self.live[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.slot(id).is_some()
    }

    pub fn node_count(&self) -> usize {
        self.live.iter().filter(|l| **l).count()
    }

    pub fn edges(&self) -> &[DependencyEdge] {
        &self.edges
    }

    /// Check that `from -> to` could be inserted, without inserting it.
    pub fn check_edge(&self, from: &str, to: &str) -> Result<(), TraceError> {
        self.check(from, to).map(|_| ())
    }

    fn check(&self, from: &str, to: &str) -> Result<(usize, usize), TraceError> {
        let f = self.slot(from).ok_or_else(|| TraceError::UnknownArtifact(from.to_owned()))?;
        let t = self.slot(to).ok_or_else(|| TraceError::UnknownArtifact(to.to_owned()))?;
        if f == t {
            return Err(TraceError::SelfLoop(from.to_owned()));
        }
        if self.down[f].contains(&t) {
            return Err(TraceError::DuplicateEdge { from: from.to_owned(), to: to.to_owned() });
        }
        if let Some(path) = self.path(t, f) {
            return Err(TraceError::Cycle { path: path.into_iter().map(|i| self.names[i].clone()).collect() });
        }
        Ok((f, t))
    }

    pub fn add_dependency(
        &mut self,
        from: &str,
        to: &str,
        declared_by: DeclaredBy,
        note: &str,
    ) -> Result<DependencyEdge, TraceError> {
        let (f, t) = self.check(from, to)?;
        let edge = DependencyEdge {
            from: from.to_owned(),
            to: to.to_owned(),
            declared_by,
            note: note.to_owned(),
        };
        self.down[f].push(t);
        self.up[t].push(f);
        self.edges.push(edge.clone());
        Ok(edge)
    }

    /// Downstream path `start -> ... -> goal`, shortest first.
    fn path(&self, start: usize, goal: usize) -> Option<Vec<usize>> {
        let mut parent = vec![usize::MAX; self.names.len()];
        let mut seen = vec![false; self.names.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(n) = queue.pop_front() {
            if n == goal {
                let mut path = vec![goal];
                let mut cur = goal;
                while parent[cur] != usize::MAX {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for &next in &self.down[n] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = n;
                    queue.push_back(next);
                }
            }
        }
        None
    }

    fn adjacency(&self, direction: Direction) -> &[Vec<usize>] {
        match direction {
            Direction::Upstream => &self.up,
            Direction::Downstream => &self.down,
        }
    }

    pub fn direct(&self, id: &str, direction: Direction) -> Vec<String> {
        let Some(i) = self.slot(id) else { return Vec::new() };
        let mut set = vec![false; self.names.len()];
        for &n in &self.adjacency(direction)[i] {
            set[n] = self.live[n];
        }
        self.topo_sort(&set)
    }

    /// Transitive closure excluding `id`, in topological order (upstream
    /// nodes first). Ties break by registration order.
    pub fn closure(&self, id: &str, direction: Direction) -> Result<Vec<String>, TraceError> {
        let start = self.slot(id).ok_or_else(|| TraceError::UnknownArtifact(id.to_owned()))?;
        let adj = self.adjacency(direction);
        let mut seen = vec![false; self.names.len()];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            for &next in &adj[n] {
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        seen[start] = false;
        for (s, live) in seen.iter_mut().zip(&self.live) {
            *s &= *live;
        }
        Ok(self.topo_sort(&seen))
    }

    /// Kahn's algorithm on the subgraph induced by the slots marked in `set`.
    fn topo_sort(&self, set: &[bool]) -> Vec<String> {
        let mut indegree = vec![0usize; set.len()];
        for n in (0..set.len()).filter(|&n| set[n]) {
            for &m in &self.down[n] {
                if set[m] {
                    indegree[m] += 1;
                }
            }
        }
        let mut ready: BinaryHeap<Reverse<usize>> =
            (0..set.len()).filter(|&n| set[n] && indegree[n] == 0).map(Reverse).collect();
        let mut out = Vec::new();
        while let Some(Reverse(n)) = ready.pop() {
            out.push(self.names[n].clone());
            for &m in &self.down[n] {
                if set[m] {
                    indegree[m] -= 1;
                    if indegree[m] == 0 {
                        ready.push(Reverse(m));
                    }
                }
            }
        }
        out
    }

    /// Upstream endpoints reachable from `id` that are no longer registered.
    pub fn dangling_upstream(&self, id: &str) -> Vec<String> {
        let Some(start) = self.index.get(id).copied() else { return Vec::new() };
        let mut dangling = BTreeSet::new();
        let mut seen = vec![false; self.names.len()];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            for &p in &self.up[n] {
                if !self.live[p] {
                    dangling.insert(self.names[p].clone());
                } else if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        dangling.into_iter().collect()
    }
}

// ---------------------------------------------------------------------------
// Versions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub index: u32,
    pub label: String,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VersionStatus {
    New,
    Modified,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactVersion {
    pub artifact_id: String,
    pub revision: u32,
    pub status: VersionStatus,
    pub content_hash: String,
    pub classification: Classification,
    /// Who produced this version.
    pub generator: Option<Origin>,
}

/// Requested state of one artifact in a snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionChange {
    pub status: VersionStatus,
    pub content_hash: String,
    pub classification: Classification,
    #[serde(default)]
    pub generator: Option<Origin>,
}

/// SHA-256 over the canonical form of (classification, payload blob hash, title).
pub fn content_hash(classification: &Classification, payload: Option<&PayloadRef>, title: &str) -> String {
    #[derive(Serialize)]
    struct Content<'a> {
        classification: &'a Classification,
        payload: Option<&'a str>,
        title: &'a str,
    }
    canonical::digest(&Content { classification, payload: payload.map(|p| p.blob.as_str()), title })
        .expect("content serializes")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VersionHistory {
    revisions: Vec<Revision>,
    versions: BTreeMap<String, Vec<ArtifactVersion>>,
}

impl VersionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn revisions(&self) -> &[Revision] {
        &self.revisions
    }

    pub fn latest(&self) -> Option<&Revision> {
        self.revisions.last()
    }

    pub fn versioned_ids(&self) -> impl Iterator<Item = &str> {
        self.versions.keys().map(String::as_str)
    }

    pub fn is_versioned(&self, id: &str) -> bool {
        self.versions.contains_key(id)
    }

    /// Record a revision. Versioned artifacts missing from `changes` are
    /// carried forward as Unchanged. `is_known` decides which ids may appear
    /// as New.
    pub fn snapshot(
        &mut self,
        label: &str,
        created_at: Timestamp,
        changes: &BTreeMap<String, VersionChange>,
        is_known: impl Fn(&str) -> bool,
    ) -> Result<Revision, TraceError> {
        let index = self.revisions.len() as u32 + 1;
        let mut staged: Vec<ArtifactVersion> = Vec::new();

        for (id, change) in changes {
            let prev = self.versions.get(id).and_then(|v| v.last());
            let version = match (change.status, prev) {
                (VersionStatus::New, Some(_)) => return Err(TraceError::AlreadyVersioned(id.clone())),
                (VersionStatus::New, None) => {
                    if !is_known(id) {
                        return Err(TraceError::UnknownArtifact(id.clone()));
                    }
                    ArtifactVersion {
                        artifact_id: id.clone(),
                        revision: index,
                        status: VersionStatus::New,
                        content_hash: change.content_hash.clone(),
                        classification: change.classification.clone(),
                        generator: change.generator,
                    }
                }
                (_, None) => return Err(TraceError::NotVersioned(id.clone())),
                (VersionStatus::Unchanged, Some(p)) => {
                    if p.content_hash != change.content_hash {
                        return Err(TraceError::UnchangedHashMismatch { id: id.clone(), previous: p.revision });
                    }
                    carry_forward(p, index)
                }
                (VersionStatus::Modified, Some(p)) => {
                    if p.content_hash == change.content_hash {
                        return Err(TraceError::ModifiedWithoutChange { id: id.clone(), previous: p.revision });
                    }
                    ArtifactVersion {
                        artifact_id: id.clone(),
                        revision: index,
                        status: VersionStatus::Modified,
                        content_hash: change.content_hash.clone(),
                        classification: change.classification.clone(),
                        generator: change.generator.or(p.generator),
                    }
                }
            };
            staged.push(version);
        }

        for (id, chain) in &self.versions {
            if !changes.contains_key(id) {
                let prev = chain.last().expect("chains are non-empty");
                staged.push(carry_forward(prev, index));
            }
        }

        for v in staged {
            self.versions.entry(v.artifact_id.clone()).or_default().push(v);
        }
        let revision = Revision { index, label: label.to_owned(), created_at };
        self.revisions.push(revision.clone());
        Ok(revision)
    }

    pub fn history(&self, id: &str) -> Option<&[ArtifactVersion]> {
        self.versions.get(id).map(Vec::as_slice)
    }

    pub fn version_at(&self, id: &str, revision: u32) -> Option<&ArtifactVersion> {
        self.versions.get(id)?.iter().find(|v| v.revision == revision)
    }

    pub fn latest_version(&self, id: &str) -> Option<&ArtifactVersion> {
        self.versions.get(id)?.last()
    }

    /// True when the chain runs without holes from its first revision to the latest one.
    pub fn chain_is_contiguous(&self, id: &str) -> bool {
        let Some(chain) = self.versions.get(id) else { return false };
        let Some(first) = chain.first() else { return false };
        let last = self.revisions.len() as u32;
        chain.len() as u32 == last + 1 - first.revision
            && chain.iter().zip(first.revision..).all(|(v, r)| v.revision == r)
    }
}

fn carry_forward(prev: &ArtifactVersion, revision: u32) -> ArtifactVersion {
    ArtifactVersion { revision, status: VersionStatus::Unchanged, ..prev.clone() }
}

// ---------------------------------------------------------------------------
// Traceability
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageReport {
    pub artifact_id: String,
    pub definition_ok: bool,
    pub provenance_ok: bool,
    pub lineage_ok: bool,
    pub missing: Vec<String>,
}

impl LineageReport {
    pub fn traceable(&self) -> bool {
        self.definition_ok && self.provenance_ok && self.lineage_ok
    }
}

fn slug(name: &str) -> String {
    name.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join("-")
}

/// Definition (every dimension assigned), provenance (timestamp, generator
/// and capture method) and lineage (upstream edges resolve, version chain
/// has no gaps).
pub fn is_traceable(
    id: &str,
    record: Option<&ArtifactRecord>,
    taxonomy: &Taxonomy,
    graph: &TraceGraph,
    history: &VersionHistory,
) -> Result<LineageReport, TraceError> {
    let record = record.ok_or_else(|| TraceError::UnknownArtifact(id.to_owned()))?;
    let mut missing = Vec::new();

    for d in &taxonomy.dimensions {
        if !record.classification.is_assigned(&d.id) {
            missing.push(format!("dimension:{}", slug(&d.name)));
        }
    }
    let definition_ok = missing.is_empty();

    let before = missing.len();
    if record.provenance.generator.is_none() {
        missing.push("provenance:generator".into());
    }
    if record.provenance.capture_method.is_none() {
        missing.push("provenance:capture-method".into());
    }
    let provenance_ok = missing.len() == before;

    let before = missing.len();
    for d in graph.dangling_upstream(id) {
        missing.push(format!("lineage:dangling-upstream:{d}"));
    }
    if !history.is_versioned(id) {
        missing.push("lineage:unversioned".into());
    } else if !history.chain_is_contiguous(id) {
        missing.push("lineage:version-gap".into());
    }
    let lineage_ok = missing.len() == before;

    Ok(LineageReport { artifact_id: id.to_owned(), definition_ok, provenance_ok, lineage_ok, missing })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(nodes: &[&str]) -> TraceGraph {
        let mut g = TraceGraph::new();
        for n in nodes {
            g.add_node(n);
        }
        g
    }

    #[test]
    fn stores_edge() {
        let mut g = graph(&["dataset", "feature-set"]);
        let e = g.add_dependency("dataset", "feature-set", DeclaredBy::Human, "").unwrap();
        assert_eq!(e.from, "dataset");
        assert_eq!(g.closure("feature-set", Direction::Upstream).unwrap(), ["dataset"]);
    }

    #[test]
    fn rejects_self_loop_and_unknown() {
        let mut g = graph(&["a"]);
        assert_eq!(g.add_dependency("a", "a", DeclaredBy::Human, "").unwrap_err().code(), "self-loop");
        assert_eq!(g.add_dependency("a", "z", DeclaredBy::Human, "").unwrap_err().code(), "unknown-artifact");
    }

    #[test]
    fn cycle_reports_path() {
        let mut g = graph(&["a", "b", "c"]);
        g.add_dependency("a", "b", DeclaredBy::Human, "").unwrap();
        g.add_dependency("b", "c", DeclaredBy::Human, "").unwrap();
        let err = g.add_dependency("c", "a", DeclaredBy::Human, "").unwrap_err();
        assert_eq!(err, TraceError::Cycle { path: vec!["a".into(), "b".into(), "c".into()] });
        assert_eq!(g.edges().len(), 2);
    }

    #[test]
    fn chain_closure_is_ancestors_first() {
        let mut g = graph(&["c", "b", "a"]);
        g.add_dependency("a", "b", DeclaredBy::Machine, "").unwrap();
        g.add_dependency("b", "c", DeclaredBy::Machine, "").unwrap();
        assert_eq!(g.closure("c", Direction::Upstream).unwrap(), ["a", "b"]);
        assert_eq!(g.closure("a", Direction::Downstream).unwrap(), ["b", "c"]);
    }

    #[test]
    fn diamond_closure() {
        let mut g = graph(&["d", "c", "b", "a"]);
        for (f, t) in [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")] {
            g.add_dependency(f, t, DeclaredBy::Human, "").unwrap();
        }
        let up = g.closure("d", Direction::Upstream).unwrap();
        assert_eq!(up[0], "a");
        assert_eq!(up.iter().cloned().collect::<BTreeSet<_>>(), ["a", "b", "c"].map(String::from).into());
    }

    #[test]
    fn isolated_node_has_empty_closure() {
        let g = graph(&["x"]);
        assert!(g.closure("x", Direction::Upstream).unwrap().is_empty());
        assert!(g.closure("x", Direction::Downstream).unwrap().is_empty());
    }

    fn change(status: VersionStatus, hash: &str) -> VersionChange {
        VersionChange { status, content_hash: hash.into(), classification: Classification::new(), generator: None }
    }

    #[test]
    fn first_snapshot_all_new_then_autofill() {
        let mut h = VersionHistory::new();
        let changes: BTreeMap<_, _> = ["a", "b", "c"].iter().map(|id| (id.to_string(), change(VersionStatus::New, id))).collect();
        let r1 = h.snapshot("r1", Timestamp::from_millis(0), &changes, |_| true).unwrap();
        assert_eq!(r1.index, 1);
        assert!(["a", "b", "c"].iter().all(|id| h.version_at(id, 1).unwrap().status == VersionStatus::New));

        let changes = BTreeMap::from([("b".to_string(), change(VersionStatus::Modified, "b2"))]);
        let r2 = h.snapshot("r2", Timestamp::from_millis(1), &changes, |_| true).unwrap();
        assert_eq!(r2.index, 2);
        let statuses: Vec<_> = ["a", "b", "c"].iter().map(|id| h.version_at(id, 2).unwrap().status).collect();
        assert_eq!(statuses, [VersionStatus::Unchanged, VersionStatus::Modified, VersionStatus::Unchanged]);
        assert_eq!(h.version_at("a", 2).unwrap().content_hash, "a");
    }

    #[test]
    fn status_must_agree_with_history() {
        let mut h = VersionHistory::new();
        let first = BTreeMap::from([("a".to_string(), change(VersionStatus::New, "h"))]);
        h.snapshot("r1", Timestamp::from_millis(0), &first, |_| true).unwrap();
        let again = h.snapshot("r2", Timestamp::from_millis(0), &first, |_| true).unwrap_err();
        assert_eq!(again.code(), "status-conflict");
        let ghost = BTreeMap::from([("z".to_string(), change(VersionStatus::Modified, "h"))]);
        assert_eq!(h.snapshot("r2", Timestamp::from_millis(0), &ghost, |_| true).unwrap_err().code(), "status-conflict");
        let same = BTreeMap::from([("a".to_string(), change(VersionStatus::Modified, "h"))]);
        assert_eq!(
            h.snapshot("r2", Timestamp::from_millis(0), &same, |_| true).unwrap_err().code(),
            "modified-without-change"
        );
        let lie = BTreeMap::from([("a".to_string(), change(VersionStatus::Unchanged, "other"))]);
        assert_eq!(
            h.snapshot("r2", Timestamp::from_millis(0), &lie, |_| true).unwrap_err().code(),
            "unchanged-hash-mismatch"
        );
        // failed snapshots leave no trace
        assert_eq!(h.revisions().len(), 1);
    }

    #[test]
    fn late_artifact_history_length() {
        let mut h = VersionHistory::new();
        let a = BTreeMap::from([("a".to_string(), change(VersionStatus::New, "a"))]);
        h.snapshot("1", Timestamp::from_millis(0), &a, |_| true).unwrap();
        let b = BTreeMap::from([("b".to_string(), change(VersionStatus::New, "b"))]);
        h.snapshot("2", Timestamp::from_millis(0), &b, |_| true).unwrap();
        h.snapshot("3", Timestamp::from_millis(0), &BTreeMap::new(), |_| true).unwrap();
        h.snapshot("4", Timestamp::from_millis(0), &BTreeMap::new(), |_| true).unwrap();
        let hist = h.history("b").unwrap();
        assert_eq!(hist.iter().map(|v| v.revision).collect::<Vec<_>>(), [2, 3, 4]);
        assert_eq!(hist.iter().map(|v| v.status).collect::<Vec<_>>(), [VersionStatus::New, VersionStatus::Unchanged, VersionStatus::Unchanged]);
        assert!(h.chain_is_contiguous("b"));
    }

    #[test]
    fn content_hash_depends_on_each_part() {
        let c = Classification::new().with("d1", "cat1.1", "c1.1.1");
        let base = content_hash(&c, None, "t");
        assert_ne!(base, content_hash(&Classification::new(), None, "t"));
        assert_ne!(base, content_hash(&c, None, "u"));
        let p = PayloadRef { blob: "ab".into(), selector: None };
        assert_ne!(base, content_hash(&c, Some(&p), "t"));
        assert_eq!(base, content_hash(&c, None, "t"));
    }
}
