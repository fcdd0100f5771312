//! Taxonomy schema: dimensions contain categories, categories contain
//! characteristics. Includes structural validation, structural diffing and
//! the bundled AutoML artifact taxonomy.
//!
//! Ids (`d1`, `cat1.2`, `c1.2.1`) are opaque stable keys. A rename changes a
//! name and never an id.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::canonical;

const BUNDLED_TAXONOMY: &str = include_str!("../data/automl_taxonomy.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Characteristic {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub name: String,
    pub characteristics: Vec<Characteristic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub question: String,
    pub categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub version_label: String,
    #[serde(default)]
    pub meta_characteristic: String,
    pub dimensions: Vec<Dimension>,
}

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("taxonomy document is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("bundled taxonomy is corrupt: {0}")]
    CorruptBundle(String),
}

/// Level of an element in the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Dimension,
    Category,
    Characteristic,
}

/// One element of a taxonomy with its parent id, as produced by [`Taxonomy::flatten`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FlatEntry {
    pub level: Level,
    pub id: String,
    pub name: String,
    pub parent: Option<String>,
}

impl Taxonomy {
    /// Parse any JSON rendering of a taxonomy.
    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Canonical JSON bytes with trailing LF.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        canonical::to_file_bytes(self).expect("taxonomy serializes")
    }

    pub fn dimension(&self, id: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.id == id)
    }

    pub fn categories(&self) -> impl Iterator<Item = (&Dimension, &Category)> {
        self.dimensions
            .iter()
            .flat_map(|d| d.categories.iter().map(move |c| (d, c)))
    }

    pub fn characteristics(&self) -> impl Iterator<Item = (&Dimension, &Category, &Characteristic)> {
        self.categories()
            .flat_map(|(d, c)| c.characteristics.iter().map(move |ch| (d, c, ch)))
    }

    pub fn characteristic_ids(&self) -> Vec<String> {
        self.characteristics().map(|(_, _, ch)| ch.id.clone()).collect()
    }

    /// Every element in document order.
    pub fn flatten(&self) -> Vec<FlatEntry> {
        let mut out = Vec::new();
        for d in &self.dimensions {
            out.push(FlatEntry {
                level: Level::Dimension,
                id: d.id.clone(),
                name: d.name.clone(),
                parent: None,
            });
            for c in &d.categories {
                out.push(FlatEntry {
                    level: Level::Category,
                    id: c.id.clone(),
                    name: c.name.clone(),
                    parent: Some(d.id.clone()),
                });
                for ch in &c.characteristics {
                    out.push(FlatEntry {
                        level: Level::Characteristic,
                        id: ch.id.clone(),
                        name: ch.name.clone(),
                        parent: Some(c.id.clone()),
                    });
                }
            }
        }
        out
    }

    /// Equality on ids, names and parentage, ignoring order and descriptive text.
    pub fn structurally_eq(&self, other: &Taxonomy) -> bool {
        let a: BTreeSet<FlatEntry> = self.flatten().into_iter().collect();
        let b: BTreeSet<FlatEntry> = other.flatten().into_iter().collect();
        a == b
    }

    pub fn index(&self) -> TaxonomyIndex {
        TaxonomyIndex::new(self)
    }
}

/// Lookup tables from ids to their parents.
#[derive(Debug, Clone, Default)]
pub struct TaxonomyIndex {
    pub dimensions: BTreeMap<String, String>,
    /// category id -> dimension id
    pub category_parent: BTreeMap<String, String>,
    /// characteristic id -> category id
    pub characteristic_parent: BTreeMap<String, String>,
}

impl TaxonomyIndex {
    pub fn new(t: &Taxonomy) -> Self {
        let mut idx = TaxonomyIndex::default();
        for d in &t.dimensions {
            idx.dimensions.insert(d.id.clone(), d.name.clone());
            for c in &d.categories {
                idx.category_parent.insert(c.id.clone(), d.id.clone());
                for ch in &c.characteristics {
                    idx.characteristic_parent.insert(ch.id.clone(), c.id.clone());
                }
            }
        }
        idx
    }

    pub fn dimension_of_characteristic(&self, characteristic: &str) -> Option<&str> {
        let cat = self.characteristic_parent.get(characteristic)?;
        self.category_parent.get(cat).map(String::as_str)
    }
}

/// Returns the AutoML artifact taxonomy shipped with the crate.
///
/// The data file holds 4 dimensions, 16 categories and 39 characteristics.
pub fn load_bundled_taxonomy() -> Result<Taxonomy, TaxonomyError> {
    let t = Taxonomy::from_json(BUNDLED_TAXONOMY)
        .map_err(|e| TaxonomyError::CorruptBundle(e.to_string()))?;
    let report = validate_taxonomy(&t, ValidationMode::Strict);
    if !report.ok {
        let first = &report.violations[0];
        return Err(TaxonomyError::CorruptBundle(format!(
            "{} at {}: {}",
            first.rule, first.path, first.message
        )));
    }
    Ok(t)
}

/// Convenience for callers that treat a broken bundle as unrecoverable.
pub fn bundled() -> Taxonomy {
    static CACHE: OnceLock<Taxonomy> = OnceLock::new();
    CACHE.get_or_init(|| load_bundled_taxonomy().expect("bundled taxonomy is valid")).clone()
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationMode {
    /// Every dimension has at least two categories and every category at
    /// least two characteristics.
    #[default]
    Strict,
    /// Only empty containers and uniqueness problems are reported.
    Descriptive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self { ok: violations.is_empty(), violations }
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

pub fn validate_taxonomy(t: &Taxonomy, mode: ValidationMode) -> ValidationReport {
    let mut out = Vec::new();
    let push = |out: &mut Vec<Violation>, rule: &str, path: String, message: String| {
        out.push(Violation { rule: rule.to_owned(), path, message });
    };

    if t.dimensions.is_empty() {
        push(&mut out, "taxonomy-empty", String::new(), "taxonomy has no dimensions".into());
    }

    let mut seen_ids: BTreeMap<String, String> = BTreeMap::new();
    let check_id = |out: &mut Vec<Violation>, seen: &mut BTreeMap<String, String>, id: &str, path: &str| {
        if id.is_empty() {
            push(out, "id-empty", path.to_owned(), "element has an empty id".into());
        } else if let Some(first) = seen.get(id) {
            push(out, "duplicate-id", path.to_owned(), format!("id {id:?} already used at {first}"));
        } else {
            seen.insert(id.to_owned(), path.to_owned());
        }
    };

    let mut dim_names = BTreeSet::new();
    for d in &t.dimensions {
        let dpath = d.id.clone();
        check_id(&mut out, &mut seen_ids, &d.id, &dpath);
        if !dim_names.insert(d.name.as_str()) {
            push(&mut out, "duplicate-dimension-name", dpath.clone(), format!("dimension name {:?} repeated", d.name));
        }
        match (mode, d.categories.len()) {
            (ValidationMode::Strict, n) if n < 2 => push(
                &mut out,
                "dim-min-categories",
                dpath.clone(),
                format!("dimension {:?} has {n} categories, needs at least 2", d.name),
            ),
            (ValidationMode::Descriptive, 0) => push(
                &mut out,
                "dim-empty",
                dpath.clone(),
                format!("dimension {:?} has no categories", d.name),
            ),
            _ => {}
        }

        let mut cat_names = BTreeSet::new();
        for c in &d.categories {
            let cpath = format!("{dpath}/{}", c.id);
            check_id(&mut out, &mut seen_ids, &c.id, &cpath);
            if !cat_names.insert(c.name.as_str()) {
                push(&mut out, "duplicate-category-name", cpath.clone(), format!("category name {:?} repeated in {:?}", c.name, d.name));
            }
            match (mode, c.characteristics.len()) {
                (ValidationMode::Strict, n) if n < 2 => push(
                    &mut out,
                    "cat-min-characteristics",
                    cpath.clone(),
                    format!("category {:?} has {n} characteristics, needs at least 2", c.name),
                ),
                (ValidationMode::Descriptive, 0) => push(
                    &mut out,
                    "cat-empty",
                    cpath.clone(),
                    format!("category {:?} has no characteristics", c.name),
                ),
                _ => {}
            }

            let mut ch_names = BTreeSet::new();
            for ch in &c.characteristics {
                let chpath = format!("{cpath}/{}", ch.id);
                check_id(&mut out, &mut seen_ids, &ch.id, &chpath);
                if !ch_names.insert(ch.name.as_str()) {
                    push(
                        &mut out,
                        "duplicate-characteristic-name",
                        chpath,
                        format!("characteristic name {:?} repeated in {:?}", ch.name, c.name),
                    );
                }
            }
        }
    }

    ValidationReport::from_violations(out)
}

// ---------------------------------------------------------------------------
// Diff
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiffEntry {
    pub id: String,
    pub name: String,
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rename {
    pub id: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Move {
    pub id: String,
    pub from_parent: String,
    pub to_parent: String,
}

/// Changes at one level of the hierarchy, sorted by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelDiff {
    pub added: Vec<DiffEntry>,
    pub removed: Vec<DiffEntry>,
    pub renamed: Vec<Rename>,
    /// Same id under a different parent.
    pub moved: Vec<Move>,
}

impl LevelDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.renamed.is_empty() && self.moved.is_empty()
    }

    pub fn len(&self) -> usize {
        self.added.len() + self.removed.len() + self.renamed.len() + self.moved.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyDiff {
    pub dimensions: LevelDiff,
    pub categories: LevelDiff,
    pub characteristics: LevelDiff,
}

impl TaxonomyDiff {
    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty() && self.categories.is_empty() && self.characteristics.is_empty()
    }

    pub fn len(&self) -> usize {
        self.dimensions.len() + self.categories.len() + self.characteristics.len()
    }

    pub fn level(&self, level: Level) -> &LevelDiff {
        match level {
            Level::Dimension => &self.dimensions,
            Level::Category => &self.categories,
            Level::Characteristic => &self.characteristics,
        }
    }

    /// The same diff seen from the other side.
    pub fn inverted(&self) -> TaxonomyDiff {
        let inv = |l: &LevelDiff| LevelDiff {
            added: l.removed.clone(),
            removed: l.added.clone(),
            renamed: l
                .renamed
                .iter()
                .map(|r| Rename { id: r.id.clone(), from: r.to.clone(), to: r.from.clone() })
                .collect(),
            moved: l
                .moved
                .iter()
                .map(|m| Move { id: m.id.clone(), from_parent: m.to_parent.clone(), to_parent: m.from_parent.clone() })
                .collect(),
        };
        TaxonomyDiff {
            dimensions: inv(&self.dimensions),
            categories: inv(&self.categories),
            characteristics: inv(&self.characteristics),
        }
    }
}

pub fn diff_taxonomies(a: &Taxonomy, b: &Taxonomy) -> TaxonomyDiff {
    let mut out = TaxonomyDiff::default();
    for level in [Level::Dimension, Level::Category, Level::Characteristic] {
        let side = |t: &Taxonomy| -> BTreeMap<String, FlatEntry> {
            t.flatten()
                .into_iter()
                .filter(|e| e.level == level)
                .map(|e| (e.id.clone(), e))
                .collect()
        };
        let (old, new) = (side(a), side(b));
        let slot = match level {
            Level::Dimension => &mut out.dimensions,
            Level::Category => &mut out.categories,
            Level::Characteristic => &mut out.characteristics,
        };
        for (id, e) in &old {
            match new.get(id) {
                None => slot.removed.push(DiffEntry { id: id.clone(), name: e.name.clone(), parent: e.parent.clone() }),
                Some(n) => {
                    if n.name != e.name {
                        slot.renamed.push(Rename { id: id.clone(), from: e.name.clone(), to: n.name.clone() });
                    }
                    if n.parent != e.parent {
                        slot.moved.push(Move {
                            id: id.clone(),
                            from_parent: e.parent.clone().unwrap_or_default(),
                            to_parent: n.parent.clone().unwrap_or_default(),
                        });
                    }
                }
            }
        }
        for (id, n) in &new {
            if !old.contains_key(id) {
                slot.added.push(DiffEntry { id: id.clone(), name: n.name.clone(), parent: n.parent.clone() });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(cats_in_first: usize) -> Taxonomy {
        let mk_cat = |i: usize| Category {
            id: format!("cat1.{i}"),
            name: format!("Cat {i}"),
            characteristics: (1..=2)
                .map(|k| Characteristic {
                    id: format!("c1.{i}.{k}"),
                    name: format!("ch{k}"),
                    description: String::new(),
                })
                .collect(),
        };
        Taxonomy {
            version_label: "t".into(),
            meta_characteristic: String::new(),
            dimensions: vec![Dimension {
                id: "d1".into(),
                name: "Only".into(),
                question: String::new(),
                categories: (1..=cats_in_first).map(mk_cat).collect(),
            }],
        }
    }

    #[test]
    fn bundled_counts() {
        let t = bundled();
        assert_eq!(t.dimensions.len(), 4);
        let per_dim: Vec<usize> = t.dimensions.iter().map(|d| d.categories.len()).collect();
        assert_eq!(per_dim, vec![5, 2, 4, 5]);
        let chars: Vec<usize> = t
            .dimensions
            .iter()
            .map(|d| d.categories.iter().map(|c| c.characteristics.len()).sum())
            .collect();
        assert_eq!(chars, vec![12, 4, 9, 14]);
    }

    #[test]
    fn bundled_source_categories() {
        let t = bundled();
        let source = t.dimension("d1").unwrap();
        assert_eq!(source.name, "Source");
        let names: Vec<&str> = source.categories.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["Human", "Data", "AutoML Process", "System", "Organizational Process"]);
    }

    #[test]
    fn bundled_is_strictly_valid() {
        let report = validate_taxonomy(&bundled(), ValidationMode::Strict);
        assert!(report.ok, "{:?}", report.violations);
    }

    #[test]
    fn single_category_dimension_fails_strict_only() {
        let t = tiny(1);
        let strict = validate_taxonomy(&t, ValidationMode::Strict);
        assert!(!strict.ok);
        assert!(strict.has_rule("dim-min-categories"));
        assert!(validate_taxonomy(&t, ValidationMode::Descriptive).ok);
    }

    #[test]
    fn empty_taxonomy_is_reported() {
        let mut t = tiny(2);
        t.dimensions.clear();
        let report = validate_taxonomy(&t, ValidationMode::Descriptive);
        assert!(!report.ok);
        assert!(report.has_rule("taxonomy-empty"));
    }

    #[test]
    fn empty_containers_in_descriptive_mode() {
        let mut t = tiny(2);
        t.dimensions[0].categories[1].characteristics.clear();
        let report = validate_taxonomy(&t, ValidationMode::Descriptive);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, "cat-empty");
        assert_eq!(report.violations[0].path, "d1/cat1.2");
    }

    #[test]
    fn duplicates_are_reported_in_both_modes() {
        let mut t = tiny(2);
        t.dimensions[0].categories[1].characteristics[0].id = "c1.1.1".into();
        t.dimensions[0].categories[1].name = "Cat 1".into();
        for mode in [ValidationMode::Strict, ValidationMode::Descriptive] {
            let r = validate_taxonomy(&t, mode);
            assert!(r.has_rule("duplicate-id"));
            assert!(r.has_rule("duplicate-category-name"));
        }
    }

    #[test]
    fn diff_identity_is_empty() {
        let t = bundled();
        assert!(diff_taxonomies(&t, &t).is_empty());
    }

    #[test]
    fn diff_single_addition() {
        let a = bundled();
        let mut b = a.clone();
        b.dimensions[2].categories[0].characteristics.push(Characteristic {
            id: "c3.1.3".into(),
            name: "boolean".into(),
            description: String::new(),
        });
        let d = diff_taxonomies(&a, &b);
        assert_eq!(d.len(), 1);
        assert_eq!(d.characteristics.added[0].id, "c3.1.3");
        assert_eq!(d.characteristics.added[0].parent.as_deref(), Some("cat3.1"));
    }

    #[test]
    fn diff_detects_rename_and_move() {
        let a = bundled();
        let mut b = a.clone();
        b.dimensions[0].categories[0].characteristics[0].name = "role".into();
        let moved = b.dimensions[0].categories[1].characteristics.remove(0);
        b.dimensions[0].categories[2].characteristics.push(moved);
        let d = diff_taxonomies(&a, &b);
        assert_eq!(d.characteristics.renamed, vec![Rename { id: "c1.1.1".into(), from: "persona".into(), to: "role".into() }]);
        assert_eq!(d.characteristics.moved.len(), 1);
        assert_eq!(d.characteristics.moved[0].to_parent, "cat1.3");
    }

    #[test]
    fn canonical_round_trip() {
        let t = bundled();
        let bytes = t.to_canonical_bytes();
        let back = Taxonomy::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_canonical_bytes(), bytes);
    }
}
