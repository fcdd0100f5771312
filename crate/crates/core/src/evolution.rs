//! Taxonomy revisions with explicit changelogs, and the objective end
//! conditions that decide when iterative taxonomy development has converged.
//!
//! A changelog must account for the structural diff against the previous
//! revision: every delta is explained by exactly one op, and every op
//! explains at least one delta. Merges and splits must be declared; in
//! lenient mode they may be spelled as removes and adds instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::artifact::{validate_classification, Classification, ClassificationError};
use crate::taxonomy::{
    diff_taxonomies, validate_taxonomy, Category, Characteristic, Dimension, Level, Taxonomy,
    ValidationMode, ValidationReport,
};

/// Prefix for subjects that name a classified object rather than a taxonomy element.
pub const OBJECT_PREFIX: &str = "object/";

/// Judgement-based end conditions, listed for human sign-off only.
pub const SUBJECTIVE_CONDITIONS: [&str; 5] = ["concise", "robust", "comprehensive", "extensible", "explanatory"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeKind {
    Add,
    Remove,
    Rename,
    Merge,
    Split,
    Reclassify,
}

impl fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChangeKind::Add => "add",
            ChangeKind::Remove => "remove",
            ChangeKind::Rename => "rename",
            ChangeKind::Merge => "merge",
            ChangeKind::Split => "split",
            ChangeKind::Reclassify => "reclassify",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitTarget {
    /// Id path of the new element in the current revision.
    pub path: String,
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeDetail {
    /// New or resulting name (add, rename, merge).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// New parent id (reclassify).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    /// Merged ids from the previous revision.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
    /// Split products in the current revision.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<SplitTarget>,
}

/// One declared change.
///
/// `subject` is a slash-delimited id path (`d1/cat1.2/c1.2.3`); its depth
/// gives the level. Add and merge subjects resolve in the current revision,
/// the rest in the previous one. `object/<id>` subjects on reclassify ops
/// refer to classified objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeOp {
    pub kind: ChangeKind,
    pub subject: String,
    #[serde(default)]
    pub detail: ChangeDetail,
}

impl ChangeOp {
    pub fn add(path: &str, name: &str) -> Self {
        Self { kind: ChangeKind::Add, subject: path.into(), detail: ChangeDetail { name: Some(name.into()), ..Default::default() } }
    }

    pub fn remove(path: &str) -> Self {
        Self { kind: ChangeKind::Remove, subject: path.into(), detail: ChangeDetail::default() }
    }

    pub fn rename(path: &str, name: &str) -> Self {
        Self { kind: ChangeKind::Rename, subject: path.into(), detail: ChangeDetail { name: Some(name.into()), ..Default::default() } }
    }

    pub fn merge(target_path: &str, name: &str, sources: &[&str]) -> Self {
        Self {
            kind: ChangeKind::Merge,
            subject: target_path.into(),
            detail: ChangeDetail {
                name: Some(name.into()),
                sources: sources.iter().map(|s| s.to_string()).collect(),
                ..Default::default()
            },
        }
    }

    pub fn split(source_path: &str, targets: &[(&str, &str)]) -> Self {
        Self {
            kind: ChangeKind::Split,
            subject: source_path.into(),
            detail: ChangeDetail {
                targets: targets.iter().map(|(p, n)| SplitTarget { path: p.to_string(), name: n.to_string() }).collect(),
                ..Default::default()
            },
        }
    }

    pub fn reclassify(path: &str, new_parent: &str) -> Self {
        Self {
            kind: ChangeKind::Reclassify,
            subject: path.into(),
            detail: ChangeDetail { parent: Some(new_parent.into()), ..Default::default() },
        }
    }

    pub fn reclassify_object(object_id: &str) -> Self {
        Self { kind: ChangeKind::Reclassify, subject: format!("{OBJECT_PREFIX}{object_id}"), detail: ChangeDetail::default() }
    }

    fn describe(&self, i: usize) -> String {
        format!("op #{} ({} {})", i + 1, self.kind, self.subject)
    }
}

/// Parsed id path.
#[derive(Debug, Clone, PartialEq, Eq)]
struct IdPath {
    level: Level,
    id: String,
    parent: Option<String>,
}

fn parse_path(path: &str) -> Option<IdPath> {
    let segs: Vec<&str> = path.split('/').collect();
    if segs.iter().any(|s| s.is_empty()) {
        return None;
    }
    let level = match segs.len() {
        1 => Level::Dimension,
        2 => Level::Category,
        3 => Level::Characteristic,
        _ => return None,
    };
    Some(IdPath {
        level,
        id: segs[segs.len() - 1].to_owned(),
        parent: (segs.len() > 1).then(|| segs[segs.len() - 2].to_owned()),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyRevision {
    pub index: u32,
    pub taxonomy: Taxonomy,
    pub changelog: Vec<ChangeOp>,
    /// Object id -> classification of that object under this revision.
    pub object_classifications: BTreeMap<String, Classification>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvolutionError {
    #[error("changelog-incomplete: unexplained deltas: {}", .0.join("; "))]
    ChangelogIncomplete(Vec<String>),
    #[error("changelog-spurious: {}", .0.join("; "))]
    ChangelogSpurious(Vec<String>),
    #[error("changelog-undeclared-merge-split: {}", .0.join("; "))]
    UndeclaredMergeSplit(Vec<String>),
    #[error("revisions {prev} and {curr} are not adjacent")]
    NonAdjacent { prev: u32, curr: u32 },
    #[error("taxonomy is invalid: {} violation(s)", .0.violations.len())]
    InvalidTaxonomy(ValidationReport),
    #[error("object {object}: {source}")]
    InvalidObject { object: String, source: ClassificationError },
    #[error("no taxonomy revision {0}")]
    UnknownRevision(u32),
}

impl EvolutionError {
    pub fn code(&self) -> &'static str {
        match self {
            EvolutionError::ChangelogIncomplete(_) => "changelog-incomplete",
            EvolutionError::ChangelogSpurious(_) => "changelog-spurious",
            EvolutionError::UndeclaredMergeSplit(_) => "changelog-undeclared-merge-split",
            EvolutionError::NonAdjacent { .. } => "non-adjacent",
            EvolutionError::InvalidTaxonomy(_) => "invalid-taxonomy",
            EvolutionError::InvalidObject { .. } => "invalid-object",
            EvolutionError::UnknownRevision(_) => "unknown-revision",
        }
    }
}

// ---------------------------------------------------------------------------
// Changelog consistency
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum DeltaKind {
    Added,
    Removed,
    Renamed,
    Moved,
}

type DeltaKey = (DeltaKind, Level, String);

fn delta_label(k: &DeltaKey) -> String {
    let kind = match k.0 {
        DeltaKind::Added => "added",
        DeltaKind::Removed => "removed",
        DeltaKind::Renamed => "renamed",
        DeltaKind::Moved => "moved",
    };
    let level = match k.1 {
        Level::Dimension => "dimension",
        Level::Category => "category",
        Level::Characteristic => "characteristic",
    };
    format!("{kind} {level} {}", k.2)
}

fn structural_deltas(prev: &Taxonomy, curr: &Taxonomy) -> BTreeSet<DeltaKey> {
    let diff = diff_taxonomies(prev, curr);
    let mut out = BTreeSet::new();
    for level in [Level::Dimension, Level::Category, Level::Characteristic] {
        let l = diff.level(level);
        out.extend(l.added.iter().map(|e| (DeltaKind::Added, level, e.id.clone())));
        out.extend(l.removed.iter().map(|e| (DeltaKind::Removed, level, e.id.clone())));
        out.extend(l.renamed.iter().map(|e| (DeltaKind::Renamed, level, e.id.clone())));
        out.extend(l.moved.iter().map(|e| (DeltaKind::Moved, level, e.id.clone())));
    }
    out
}

struct Side {
    /// id -> (level, parent)
    entries: BTreeMap<String, (Level, Option<String>)>,
}

impl Side {
    fn new(t: &Taxonomy) -> Self {
        Self { entries: t.flatten().into_iter().map(|e| (e.id, (e.level, e.parent))).collect() }
    }

    fn level(&self, id: &str) -> Option<Level> {
        self.entries.get(id).map(|(l, _)| *l)
    }

    fn descendants(&self, id: &str) -> Vec<(Level, String)> {
        let mut out = Vec::new();
        let mut frontier = vec![id.to_owned()];
        while let Some(p) = frontier.pop() {
            for (child, (level, parent)) in &self.entries {
                if parent.as_deref() == Some(p.as_str()) {
                    out.push((*level, child.clone()));
                    frontier.push(child.clone());
                }
            }
        }
        out
    }
}

/// Delta keys an op claims to explain, or a reason it cannot resolve.
fn claims(
    op: &ChangeOp,
    prev: &Side,
    curr: &Side,
    deltas: &BTreeSet<DeltaKey>,
    objects_changed: &BTreeSet<String>,
) -> Result<Vec<DeltaKey>, String> {
    if let Some(obj) = op.subject.strip_prefix(OBJECT_PREFIX) {
        return if op.kind == ChangeKind::Reclassify && objects_changed.contains(obj) {
            Ok(Vec::new())
        } else {
            Err(format!("object {obj} was not reclassified"))
        };
    }
    let path = parse_path(&op.subject).ok_or_else(|| format!("malformed subject path {:?}", op.subject))?;
    let in_prev = prev.level(&path.id) == Some(path.level);
    let in_curr = curr.level(&path.id) == Some(path.level);
    let key = |k: DeltaKind, level: Level, id: &str| (k, level, id.to_owned());
    let mut out = Vec::new();
    match op.kind {
        ChangeKind::Add => {
            if !in_curr {
                return Err(format!("{} does not exist in the current revision", path.id));
            }
            out.push(key(DeltaKind::Added, path.level, &path.id));
        }
        ChangeKind::Remove => {
            if !in_prev {
                return Err(format!("{} does not exist in the previous revision", path.id));
            }
            out.push(key(DeltaKind::Removed, path.level, &path.id));
            for (level, id) in prev.descendants(&path.id) {
                let k = key(DeltaKind::Removed, level, &id);
                if deltas.contains(&k) {
                    out.push(k);
                }
            }
        }
        ChangeKind::Rename => {
            if !in_prev {
                return Err(format!("{} does not exist in the previous revision", path.id));
            }
            out.push(key(DeltaKind::Renamed, path.level, &path.id));
        }
        ChangeKind::Reclassify => {
            if !in_prev || !in_curr {
                return Err(format!("{} must exist in both revisions", path.id));
            }
            out.push(key(DeltaKind::Moved, path.level, &path.id));
        }
        ChangeKind::Merge => {
            if !in_curr {
                return Err(format!("merge target {} does not exist in the current revision", path.id));
            }
            if op.detail.sources.len() < 2 {
                return Err("merge needs at least two sources".into());
            }
            for s in &op.detail.sources {
                if prev.level(s) != Some(path.level) {
                    return Err(format!("merge source {s} does not exist in the previous revision"));
                }
                if *s != path.id {
                    out.push(key(DeltaKind::Removed, path.level, s));
                }
            }
            if in_prev {
                let k = key(DeltaKind::Renamed, path.level, &path.id);
                if deltas.contains(&k) {
                    out.push(k);
                }
            } else {
                out.push(key(DeltaKind::Added, path.level, &path.id));
            }
        }
        ChangeKind::Split => {
            if !in_prev {
                return Err(format!("split source {} does not exist in the previous revision", path.id));
            }
            if op.detail.targets.len() < 2 {
                return Err("split needs at least two targets".into());
            }
            let mut keeps_source = false;
            for t in &op.detail.targets {
                let tp = parse_path(&t.path).ok_or_else(|| format!("malformed split target {:?}", t.path))?;
                if tp.level != path.level || curr.level(&tp.id) != Some(tp.level) {
                    return Err(format!("split target {} does not exist in the current revision", tp.id));
                }
                if tp.id == path.id {
                    keeps_source = true;
                    let k = key(DeltaKind::Renamed, path.level, &path.id);
                    if deltas.contains(&k) {
                        out.push(k);
                    }
                } else {
                    out.push(key(DeltaKind::Added, tp.level, &tp.id));
                }
            }
            if !keeps_source {
                out.push(key(DeltaKind::Removed, path.level, &path.id));
            }
        }
    }
    Ok(out)
}

/// Merge/split-shaped add+remove groups: two or more removes with an add, or
/// a remove with two or more adds, at the same level under the same parent.
fn undeclared_merge_split(ops: &[ChangeOp], prev: &Side) -> Vec<String> {
    let mut groups: BTreeMap<(Level, Option<String>), (usize, usize)> = BTreeMap::new();
    for op in ops {
        let Some(path) = parse_path(&op.subject) else { continue };
        match op.kind {
            ChangeKind::Add => groups.entry((path.level, path.parent)).or_default().1 += 1,
            ChangeKind::Remove => {
                let parent = prev.entries.get(&path.id).and_then(|(_, p)| p.clone());
                groups.entry((path.level, parent)).or_default().0 += 1
            }
            _ => {}
        }
    }
    groups
        .into_iter()
        .filter(|(_, (r, a))| (*r >= 2 && *a >= 1) || (*r >= 1 && *a >= 2))
        .map(|((level, parent), (r, a))| {
            format!(
                "{r} remove(s) and {a} add(s) of {:?} under {}; declare a merge or split",
                level,
                parent.as_deref().unwrap_or("<root>")
            )
        })
        .collect()
}

/// Check that `changelog` explains exactly the structural difference
/// between `prev` and `curr`.
pub fn check_changelog(
    prev: &Taxonomy,
    curr: &Taxonomy,
    changelog: &[ChangeOp],
    objects_changed: &BTreeSet<String>,
    lenient: bool,
) -> Result<(), EvolutionError> {
    let deltas = structural_deltas(prev, curr);
    let (ps, cs) = (Side::new(prev), Side::new(curr));
    let mut consumed: BTreeSet<DeltaKey> = BTreeSet::new();
    let mut spurious = Vec::new();

    for (i, op) in changelog.iter().enumerate() {
        match claims(op, &ps, &cs, &deltas, objects_changed) {
            Err(reason) => spurious.push(format!("{}: {reason}", op.describe(i))),
            Ok(keys) if op.subject.starts_with(OBJECT_PREFIX) => debug_assert!(keys.is_empty()),
            Ok(keys) => {
                if keys.is_empty() {
                    spurious.push(format!("{}: no matching delta", op.describe(i)));
                } else if let Some(k) = keys.iter().find(|k| !deltas.contains(*k)) {
                    spurious.push(format!("{}: no matching delta ({})", op.describe(i), delta_label(k)));
                } else if let Some(k) = keys.iter().find(|k| consumed.contains(*k)) {
                    spurious.push(format!("{}: {} already explained", op.describe(i), delta_label(k)));
                } else {
                    consumed.extend(keys);
                }
            }
        }
    }
    if !spurious.is_empty() {
        return Err(EvolutionError::ChangelogSpurious(spurious));
    }

    let unexplained: Vec<String> = deltas.difference(&consumed).map(delta_label).collect();
    if !unexplained.is_empty() {
        return Err(EvolutionError::ChangelogIncomplete(unexplained));
    }

    if !lenient {
        let shaped = undeclared_merge_split(changelog, &ps);
        if !shaped.is_empty() {
            return Err(EvolutionError::UndeclaredMergeSplit(shaped));
        }
    }

    let applied = apply_changelog(prev, changelog);
    if !applied.structurally_eq(curr) {
        let residue = structural_deltas(&applied, curr);
        return Err(EvolutionError::ChangelogIncomplete(
            residue.iter().map(|k| format!("after applying changelog: {}", delta_label(k))).collect(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Applying a changelog
// ---------------------------------------------------------------------------

fn remove_element(t: &mut Taxonomy, id: &str) -> Option<Node> {
    if let Some(i) = t.dimensions.iter().position(|d| d.id == id) {
        return Some(Node::Dimension(t.dimensions.remove(i)));
    }
    for d in &mut t.dimensions {
        if let Some(i) = d.categories.iter().position(|c| c.id == id) {
            return Some(Node::Category(d.categories.remove(i)));
        }
        for c in &mut d.categories {
            if let Some(i) = c.characteristics.iter().position(|ch| ch.id == id) {
                return Some(Node::Characteristic(c.characteristics.remove(i)));
            }
        }
    }
    None
}

enum Node {
    Dimension(Dimension),
    Category(Category),
    Characteristic(Characteristic),
}

fn insert_element(t: &mut Taxonomy, parent: Option<&str>, node: Node) {
    match node {
        Node::Dimension(d) => t.dimensions.push(d),
        Node::Category(c) => {
            if let Some(d) = t.dimensions.iter_mut().find(|d| Some(d.id.as_str()) == parent) {
                d.categories.push(c);
            }
        }
        Node::Characteristic(ch) => {
            if let Some(c) = t
                .dimensions
                .iter_mut()
                .flat_map(|d| d.categories.iter_mut())
                .find(|c| Some(c.id.as_str()) == parent)
            {
                c.characteristics.push(ch);
            }
        }
    }
}

fn blank(level: Level, id: &str, name: &str) -> Node {
    match level {
        Level::Dimension => Node::Dimension(Dimension { id: id.into(), name: name.into(), question: String::new(), categories: vec![] }),
        Level::Category => Node::Category(Category { id: id.into(), name: name.into(), characteristics: vec![] }),
        Level::Characteristic => {
            Node::Characteristic(Characteristic { id: id.into(), name: name.into(), description: String::new() })
        }
    }
}

fn set_name(t: &mut Taxonomy, id: &str, name: &str) {
    for d in &mut t.dimensions {
        if d.id == id {
            d.name = name.into();
        }
        for c in &mut d.categories {
            if c.id == id {
                c.name = name.into();
            }
            for ch in &mut c.characteristics {
                if ch.id == id {
                    ch.name = name.into();
                }
            }
        }
    }
}

fn exists(t: &Taxonomy, id: &str) -> bool {
    t.flatten().iter().any(|e| e.id == id)
}

/// Replay `ops` on a copy of `prev`. Ops that cannot apply are skipped;
/// [`check_changelog`] reports them separately.
pub fn apply_changelog(prev: &Taxonomy, ops: &[ChangeOp]) -> Taxonomy {
    let mut t = prev.clone();
    for op in ops {
        if op.subject.starts_with(OBJECT_PREFIX) {
            continue;
        }
        let Some(path) = parse_path(&op.subject) else { continue };
        let name = op.detail.name.as_deref().unwrap_or(&path.id);
        match op.kind {
            ChangeKind::Add => insert_element(&mut t, path.parent.as_deref(), blank(path.level, &path.id, name)),
            ChangeKind::Remove => {
                remove_element(&mut t, &path.id);
            }
            ChangeKind::Rename => set_name(&mut t, &path.id, name),
            ChangeKind::Reclassify => {
                if let (Some(parent), Some(node)) = (op.detail.parent.as_deref(), remove_element(&mut t, &path.id)) {
                    insert_element(&mut t, Some(parent), node);
                }
            }
            ChangeKind::Merge => {
                for s in op.detail.sources.iter().filter(|s| **s != path.id) {
                    remove_element(&mut t, s);
                }
                if exists(&t, &path.id) {
                    if let Some(n) = &op.detail.name {
                        set_name(&mut t, &path.id, n);
                    }
                } else {
                    insert_element(&mut t, path.parent.as_deref(), blank(path.level, &path.id, name));
                }
            }
            ChangeKind::Split => {
                let mut keeps = false;
                for target in &op.detail.targets {
                    let Some(tp) = parse_path(&target.path) else { continue };
                    if tp.id == path.id {
                        keeps = true;
                        set_name(&mut t, &tp.id, &target.name);
                    } else {
                        insert_element(&mut t, tp.parent.as_deref(), blank(tp.level, &tp.id, &target.name));
                    }
                }
                if !keeps {
                    remove_element(&mut t, &path.id);
                }
            }
        }
    }
    t
}

// ---------------------------------------------------------------------------
// Revisions and end conditions
// ---------------------------------------------------------------------------

fn changed_objects(prev: &BTreeMap<String, Classification>, curr: &BTreeMap<String, Classification>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (id, c) in curr {
        if prev.get(id).is_some_and(|p| p != c) {
            out.insert(id.clone());
        }
    }
    out
}

/// Build the revision that follows `prev` (or the first revision), checking
/// the taxonomy, object classifications and changelog.
pub fn record_revision(
    prev: Option<&TaxonomyRevision>,
    taxonomy: Taxonomy,
    changelog: Vec<ChangeOp>,
    object_classifications: BTreeMap<String, Classification>,
    lenient: bool,
) -> Result<TaxonomyRevision, EvolutionError> {
    let report = validate_taxonomy(&taxonomy, ValidationMode::Descriptive);
    if !report.ok {
        return Err(EvolutionError::InvalidTaxonomy(report));
    }
    for (object, c) in &object_classifications {
        validate_classification(c, &taxonomy, ValidationMode::Descriptive)
            .map_err(|source| EvolutionError::InvalidObject { object: object.clone(), source })?;
    }
    let index = match prev {
        None => {
            if !changelog.is_empty() {
                let reasons = changelog
                    .iter()
                    .enumerate()
                    .map(|(i, op)| format!("{}: first revision has no predecessor", op.describe(i)))
                    .collect();
                return Err(EvolutionError::ChangelogSpurious(reasons));
            }
            1
        }
        Some(p) => {
            let changed = changed_objects(&p.object_classifications, &object_classifications);
            check_changelog(&p.taxonomy, &taxonomy, &changelog, &changed, lenient)?;
            p.index + 1
        }
    };
    Ok(TaxonomyRevision { index, taxonomy, changelog, object_classifications })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndConditionReport {
    pub prev: u32,
    pub curr: u32,
    pub cond1_no_changes: bool,
    pub cond2_no_merge_split: bool,
    pub cond3_full_coverage: bool,
    pub uncovered_characteristics: Vec<String>,
    pub met: bool,
    /// Left for human sign-off; never evaluated.
    pub subjective_checklist: Vec<String>,
}

/// Object count per characteristic of `rev.taxonomy`, zeros included.
pub fn coverage_report(rev: &TaxonomyRevision) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = rev.taxonomy.characteristic_ids().into_iter().map(|id| (id, 0)).collect();
    for c in rev.object_classifications.values() {
        let distinct: BTreeSet<&str> = c.characteristics().collect();
        for ch in distinct {
            if let Some(n) = counts.get_mut(ch) {
                *n += 1;
            }
        }
    }
    counts
}

pub fn evaluate_end_conditions(prev: &TaxonomyRevision, curr: &TaxonomyRevision) -> Result<EndConditionReport, EvolutionError> {
    if curr.index != prev.index + 1 {
        return Err(EvolutionError::NonAdjacent { prev: prev.index, curr: curr.index });
    }
    let cond1 = diff_taxonomies(&prev.taxonomy, &curr.taxonomy).is_empty()
        && prev.object_classifications == curr.object_classifications;
    let cond2 = !curr.changelog.iter().any(|op| matches!(op.kind, ChangeKind::Merge | ChangeKind::Split));
    let coverage = coverage_report(curr);
    let uncovered: Vec<String> = curr
        .taxonomy
        .characteristic_ids()
        .into_iter()
        .filter(|id| coverage.get(id).copied().unwrap_or(0) == 0)
        .collect();
    let cond3 = uncovered.is_empty();
    Ok(EndConditionReport {
        prev: prev.index,
        curr: curr.index,
        cond1_no_changes: cond1,
        cond2_no_merge_split: cond2,
        cond3_full_coverage: cond3,
        uncovered_characteristics: uncovered,
        met: cond1 && cond2 && cond3,
        subjective_checklist: SUBJECTIVE_CONDITIONS.iter().map(|s| s.to_string()).collect(),
    })
}

/// In-memory sequence of taxonomy revisions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaxonomyHistory {
    revisions: Vec<TaxonomyRevision>,
}

impl TaxonomyHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn revisions(&self) -> &[TaxonomyRevision] {
        &self.revisions
    }

    pub fn latest(&self) -> Option<&TaxonomyRevision> {
        self.revisions.last()
    }

    pub fn get(&self, index: u32) -> Option<&TaxonomyRevision> {
        index.checked_sub(1).and_then(|i| self.revisions.get(i as usize))
    }

    pub fn prepare(
        &self,
        taxonomy: Taxonomy,
        changelog: Vec<ChangeOp>,
        object_classifications: BTreeMap<String, Classification>,
        lenient: bool,
    ) -> Result<TaxonomyRevision, EvolutionError> {
        record_revision(self.latest(), taxonomy, changelog, object_classifications, lenient)
    }

    /// Append a revision produced by [`TaxonomyHistory::prepare`].
    pub fn push(&mut self, rev: TaxonomyRevision) {
        debug_assert_eq!(rev.index as usize, self.revisions.len() + 1);
        self.revisions.push(rev);
    }

    pub fn record(
        &mut self,
        taxonomy: Taxonomy,
        changelog: Vec<ChangeOp>,
        object_classifications: BTreeMap<String, Classification>,
        lenient: bool,
    ) -> Result<&TaxonomyRevision, EvolutionError> {
        let rev = self.prepare(taxonomy, changelog, object_classifications, lenient)?;
        self.push(rev);
        Ok(self.revisions.last().expect("just pushed"))
    }

    pub fn evaluate(&self, prev: u32, curr: u32) -> Result<EndConditionReport, EvolutionError> {
        let p = self.get(prev).ok_or(EvolutionError::UnknownRevision(prev))?;
        let c = self.get(curr).ok_or(EvolutionError::UnknownRevision(curr))?;
        evaluate_end_conditions(p, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::bundled;

    fn add_char(t: &mut Taxonomy, cat: &str, id: &str, name: &str) {
        for d in &mut t.dimensions {
            for c in &mut d.categories {
                if c.id == cat {
                    c.characteristics.push(Characteristic { id: id.into(), name: name.into(), description: String::new() });
                }
            }
        }
    }

    fn hist_with(t: Taxonomy) -> TaxonomyHistory {
        let mut h = TaxonomyHistory::new();
        h.record(t, vec![], BTreeMap::new(), false).unwrap();
        h
    }

    #[test]
    fn identical_revision_with_empty_changelog() {
        let mut h = hist_with(bundled());
        let rev = h.record(bundled(), vec![], BTreeMap::new(), false).unwrap();
        assert_eq!(rev.index, 2);
    }

    #[test]
    fn unexplained_addition_is_incomplete() {
        let h = hist_with(bundled());
        let mut t = bundled();
        add_char(&mut t, "cat3.1", "c3.1.3", "boolean");
        let err = h.prepare(t.clone(), vec![], BTreeMap::new(), false).unwrap_err();
        assert_eq!(err.code(), "changelog-incomplete");
        assert!(h.prepare(t, vec![ChangeOp::add("d3/cat3.1/c3.1.3", "boolean")], BTreeMap::new(), false).is_ok());
    }

    #[test]
    fn op_without_delta_is_spurious() {
        let h = hist_with(bundled());
        let err = h.prepare(bundled(), vec![ChangeOp::rename("d1/cat1.1/c1.1.1", "role")], BTreeMap::new(), false).unwrap_err();
        assert_eq!(err.code(), "changelog-spurious");
    }

    fn merged() -> Taxonomy {
        // metrics + results -> performance
        let mut t = bundled();
        let cat = &mut t.dimensions[0].categories[2];
        cat.characteristics.retain(|c| c.id == "c1.3.1");
        cat.characteristics.push(Characteristic { id: "c1.3.4".into(), name: "performance".into(), description: String::new() });
        t
    }

    #[test]
    fn declared_merge_is_accepted() {
        let h = hist_with(bundled());
        let op = ChangeOp::merge("d1/cat1.3/c1.3.4", "performance", &["c1.3.2", "c1.3.3"]);
        h.prepare(merged(), vec![op], BTreeMap::new(), false).unwrap();
    }

    #[test]
    fn merge_spelled_as_remove_add_needs_lenient() {
        let h = hist_with(bundled());
        let ops = vec![
            ChangeOp::remove("d1/cat1.3/c1.3.2"),
            ChangeOp::remove("d1/cat1.3/c1.3.3"),
            ChangeOp::add("d1/cat1.3/c1.3.4", "performance"),
        ];
        let err = h.prepare(merged(), ops.clone(), BTreeMap::new(), false).unwrap_err();
        assert_eq!(err.code(), "changelog-undeclared-merge-split");
        h.prepare(merged(), ops, BTreeMap::new(), true).unwrap();
    }

    #[test]
    fn split_and_reclassify() {
        let h = hist_with(bundled());
        let mut t = bundled();
        // split "results" into "predictions" and "clusters"; move "prompt" under Human
        let cat = &mut t.dimensions[0].categories[2];
        cat.characteristics.retain(|c| c.id != "c1.3.3");
        add_char(&mut t, "cat1.3", "c1.3.4", "predictions");
        add_char(&mut t, "cat1.3", "c1.3.5", "clusters");
        let prompt = t.dimensions[0].categories[3].characteristics.remove(1);
        t.dimensions[0].categories[0].characteristics.push(prompt);
        let ops = vec![
            ChangeOp::split("d1/cat1.3/c1.3.3", &[("d1/cat1.3/c1.3.4", "predictions"), ("d1/cat1.3/c1.3.5", "clusters")]),
            ChangeOp::reclassify("d1/cat1.4/c1.4.2", "cat1.1"),
        ];
        let rev = h.prepare(t.clone(), ops.clone(), BTreeMap::new(), false).unwrap();
        assert!(apply_changelog(&bundled(), &ops).structurally_eq(&rev.taxonomy));
    }

    #[test]
    fn double_explanation_is_spurious() {
        let h = hist_with(bundled());
        let mut t = bundled();
        add_char(&mut t, "cat3.1", "c3.1.3", "boolean");
        let ops = vec![ChangeOp::add("d3/cat3.1/c3.1.3", "boolean"), ChangeOp::add("d3/cat3.1/c3.1.3", "boolean")];
        assert_eq!(h.prepare(t, ops, BTreeMap::new(), false).unwrap_err().code(), "changelog-spurious");
    }

    #[test]
    fn removing_category_covers_children() {
        let h = hist_with(bundled());
        let mut t = bundled();
        t.dimensions[3].categories.retain(|c| c.id != "cat4.2");
        h.prepare(t, vec![ChangeOp::remove("d4/cat4.2")], BTreeMap::new(), false).unwrap();
    }

    #[test]
    fn object_reclassify_must_match_change() {
        let t = bundled();
        let c1 = Classification::from_characteristics(&t, ["c1.1.1"]);
        let c2 = Classification::from_characteristics(&t, ["c1.1.2"]);
        let mut h = TaxonomyHistory::new();
        h.record(t.clone(), vec![], BTreeMap::from([("o1".into(), c1.clone())]), false).unwrap();
        let ok = h.prepare(t.clone(), vec![ChangeOp::reclassify_object("o1")], BTreeMap::from([("o1".into(), c2)]), false);
        assert!(ok.is_ok());
        let bad = h.prepare(t, vec![ChangeOp::reclassify_object("o1")], BTreeMap::from([("o1".into(), c1)]), false);
        assert_eq!(bad.unwrap_err().code(), "changelog-spurious");
    }

    #[test]
    fn coverage_counts() {
        let t = bundled();
        let empty = TaxonomyRevision { index: 1, taxonomy: t.clone(), changelog: vec![], object_classifications: BTreeMap::new() };
        let cov = coverage_report(&empty);
        assert_eq!(cov.len(), 39);
        assert!(cov.values().all(|n| *n == 0));

        let one = TaxonomyRevision {
            object_classifications: BTreeMap::from([("o".into(), Classification::from_characteristics(&t, ["c1.2.1"]))]),
            ..empty
        };
        let cov = coverage_report(&one);
        assert_eq!(cov["c1.2.1"], 1);
        assert!(cov.iter().filter(|(k, _)| k.starts_with("c1.") && *k != "c1.2.1").all(|(_, n)| *n == 0));
    }

    #[test]
    fn unused_new_characteristic_breaks_cond1_and_cond3() {
        let t = bundled();
        let everything = Classification::from_characteristics(&t, t.characteristic_ids().iter().map(String::as_str));
        let objects = BTreeMap::from([("all".to_string(), everything)]);
        let mut h = TaxonomyHistory::new();
        h.record(t.clone(), vec![], objects.clone(), false).unwrap();
        h.record(t.clone(), vec![], objects.clone(), false).unwrap();
        assert!(h.evaluate(1, 2).unwrap().met);

        let mut t3 = t.clone();
        add_char(&mut t3, "cat3.1", "c3.1.3", "boolean");
        h.record(t3, vec![ChangeOp::add("d3/cat3.1/c3.1.3", "boolean")], objects, false).unwrap();
        let r = h.evaluate(2, 3).unwrap();
        assert!(!r.cond1_no_changes && !r.cond3_full_coverage && !r.met);
        assert_eq!(r.uncovered_characteristics, ["c3.1.3"]);
        assert_eq!(h.evaluate(1, 3).unwrap_err().code(), "non-adjacent");
    }
}
