//! Artifact model: workflow phases, the bundled group/type catalog,
//! per-artifact classification under a taxonomy, and provenance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{Taxonomy, TaxonomyIndex, ValidationMode};
use crate::time::Timestamp;

const BUNDLED_CATALOG: &str = include_str!("../data/artifact_catalog.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Preparation,
    Analysis,
    Deployment,
    Communication,
    Interactive,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Preparation,
        Phase::Analysis,
        Phase::Deployment,
        Phase::Communication,
        Phase::Interactive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Preparation => "preparation",
            Phase::Analysis => "analysis",
            Phase::Deployment => "deployment",
            Phase::Communication => "communication",
            Phase::Interactive => "interactive",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Phase::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown phase {s:?}"))
    }
}

/// Who produced something: a person or an automated process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Human,
    Machine,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Human => "human",
            Origin::Machine => "machine",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "human" => Ok(Origin::Human),
            "machine" => Ok(Origin::Machine),
            _ => Err(format!("unknown origin {s:?} (expected human or machine)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactGroup {
    pub id: String,
    pub name: String,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactType {
    pub id: String,
    pub name: String,
    pub group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_classification: Option<Classification>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub groups: Vec<ArtifactGroup>,
    pub types: Vec<ArtifactType>,
}

impl Catalog {
    pub fn group(&self, id: &str) -> Option<&ArtifactGroup> {
        self.groups.iter().find(|g| g.id == id)
    }

    pub fn artifact_type(&self, id: &str) -> Option<&ArtifactType> {
        self.types.iter().find(|t| t.id == id)
    }

    /// Phase of a type via its group.
    pub fn phase_of(&self, type_id: &str) -> Option<Phase> {
        let t = self.artifact_type(type_id)?;
        self.group(&t.group).map(|g| g.phase)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("artifact catalog is corrupt: {0}")]
    Corrupt(String),
}

/// The 11 artifact groups and 52 artifact types shipped with the crate.
pub fn load_artifact_catalog() -> Result<Catalog, CatalogError> {
    let catalog: Catalog =
        serde_json::from_str(BUNDLED_CATALOG).map_err(|e| CatalogError::Corrupt(e.to_string()))?;
    let mut group_ids = BTreeSet::new();
    for g in &catalog.groups {
        if !group_ids.insert(g.id.as_str()) {
            return Err(CatalogError::Corrupt(format!("duplicate group {}", g.id)));
        }
    }
    let mut type_ids = BTreeSet::new();
    for t in &catalog.types {
        if !type_ids.insert(t.id.as_str()) {
            return Err(CatalogError::Corrupt(format!("duplicate type {}", t.id)));
        }
        if !group_ids.contains(t.group.as_str()) {
            return Err(CatalogError::Corrupt(format!("type {} names unknown group {}", t.id, t.group)));
        }
    }
    Ok(catalog)
}

pub fn bundled_catalog() -> Catalog {
    static CACHE: OnceLock<Catalog> = OnceLock::new();
    CACHE.get_or_init(|| load_artifact_catalog().expect("bundled catalog is valid")).clone()
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// One (category, characteristic) pair under a dimension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub category: String,
    pub characteristic: String,
}

impl Assignment {
    pub fn new(category: impl Into<String>, characteristic: impl Into<String>) -> Self {
        Self { category: category.into(), characteristic: characteristic.into() }
    }
}

/// Per-dimension assignments, keyed by dimension id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Classification {
    pub assignments: BTreeMap<String, BTreeSet<Assignment>>,
}

impl Classification {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builder: add a pair under `dimension`.
    pub fn with(mut self, dimension: &str, category: &str, characteristic: &str) -> Self {
        self.assign(dimension, category, characteristic);
        self
    }

    pub fn assign(&mut self, dimension: &str, category: &str, characteristic: &str) {
        self.assignments
            .entry(dimension.to_owned())
            .or_default()
            .insert(Assignment::new(category, characteristic));
    }

    /// Build from characteristic ids alone, resolving parents in `taxonomy`.
    /// Unknown ids are skipped.
    pub fn from_characteristics<'a>(
        taxonomy: &Taxonomy,
        ids: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let idx = taxonomy.index();
        let mut c = Classification::new();
        for id in ids {
            if let (Some(cat), Some(dim)) = (idx.characteristic_parent.get(id), idx.dimension_of_characteristic(id)) {
                c.assign(dim, cat, id);
            }
        }
        c
    }

    pub fn dimension(&self, id: &str) -> Option<&BTreeSet<Assignment>> {
        self.assignments.get(id)
    }

    pub fn is_assigned(&self, dimension: &str) -> bool {
        self.assignments.get(dimension).is_some_and(|s| !s.is_empty())
    }

    pub fn has_characteristic(&self, characteristic: &str) -> bool {
        self.characteristics().any(|c| c == characteristic)
    }

    pub fn characteristics(&self) -> impl Iterator<Item = &str> {
        self.assignments.values().flatten().map(|a| a.characteristic.as_str())
    }

    pub fn has_category(&self, category: &str) -> bool {
        self.assignments.values().flatten().any(|a| a.category == category)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassificationError {
    #[error("unknown dimension {0}")]
    UnknownDimension(String),
    #[error("unknown category {category} under dimension {dimension}")]
    UnknownCategory { dimension: String, category: String },
    #[error("unknown characteristic {0}")]
    UnknownCharacteristic(String),
    #[error("characteristic {characteristic} does not belong to category {category} of dimension {dimension}")]
    HierarchyMismatch { dimension: String, category: String, characteristic: String },
    #[error("dimension {0} has no assignment")]
    DimensionUnassigned(String),
    #[error("dimension {0} has an empty assignment set")]
    EmptyAssignment(String),
    #[error("dimension {dimension} has {count} assignments, strict mode allows exactly one")]
    MultipleAssignments { dimension: String, count: usize },
}

impl ClassificationError {
    pub fn code(&self) -> &'static str {
        match self {
            ClassificationError::UnknownDimension(_) => "unknown-dimension",
            ClassificationError::UnknownCategory { .. } => "unknown-category",
            ClassificationError::UnknownCharacteristic(_) => "unknown-characteristic",
            ClassificationError::HierarchyMismatch { .. } => "hierarchy-mismatch",
            ClassificationError::DimensionUnassigned(_) => "dimension-unassigned",
            ClassificationError::EmptyAssignment(_) => "empty-assignment",
            ClassificationError::MultipleAssignments { .. } => "multiple-assignments",
        }
    }
}

/// Check `c` against `taxonomy`.
///
/// Both modes require every id to exist and every pair to sit on one branch
/// of the hierarchy. Strict mode additionally requires exactly one pair for
/// every dimension; descriptive mode accepts partial classifications but no
/// empty sets.
pub fn validate_classification(
    c: &Classification,
    taxonomy: &Taxonomy,
    mode: ValidationMode,
) -> Result<(), ClassificationError> {
    let idx: TaxonomyIndex = taxonomy.index();
    for (dim, pairs) in &c.assignments {
        if !idx.dimensions.contains_key(dim) {
            return Err(ClassificationError::UnknownDimension(dim.clone()));
        }
        if pairs.is_empty() {
            return Err(ClassificationError::EmptyAssignment(dim.clone()));
        }
        for pair in pairs {
            let cat_dim = idx.category_parent.get(&pair.category).ok_or_else(|| {
                ClassificationError::UnknownCategory { dimension: dim.clone(), category: pair.category.clone() }
            })?;
            let ch_cat = idx
                .characteristic_parent
                .get(&pair.characteristic)
                .ok_or_else(|| ClassificationError::UnknownCharacteristic(pair.characteristic.clone()))?;
            if cat_dim != dim || ch_cat != &pair.category {
                return Err(ClassificationError::HierarchyMismatch {
                    dimension: dim.clone(),
                    category: pair.category.clone(),
                    characteristic: pair.characteristic.clone(),
                });
            }
        }
        if mode == ValidationMode::Strict && pairs.len() != 1 {
            return Err(ClassificationError::MultipleAssignments { dimension: dim.clone(), count: pairs.len() });
        }
    }
    if mode == ValidationMode::Strict {
        if let Some(d) = taxonomy.dimensions.iter().find(|d| !c.is_assigned(&d.id)) {
            return Err(ClassificationError::DimensionUnassigned(d.id.clone()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Origin
// ---------------------------------------------------------------------------

/// Maps Source-dimension assignments to a human or machine origin.
///
/// Characteristic entries take precedence over category entries, which lets
/// the Data category split by initial/derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginRule {
    pub source_dimension: String,
    pub categories: BTreeMap<String, Origin>,
    pub characteristics: BTreeMap<String, Origin>,
}

impl Default for OriginRule {
    fn default() -> Self {
        let categories = [
            ("cat1.1", Origin::Human),
            ("cat1.3", Origin::Machine),
            ("cat1.4", Origin::Machine),
            ("cat1.5", Origin::Human),
        ];
        let characteristics = [("c1.2.1", Origin::Human), ("c1.2.2", Origin::Machine)];
        Self {
            source_dimension: "d1".into(),
            categories: categories.into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
            characteristics: characteristics.into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OriginError {
    #[error("source dimension {0} is not assigned")]
    SourceUnassigned(String),
    #[error("no origin mapping for {category}/{characteristic}")]
    Unmapped { category: String, characteristic: String },
}

impl OriginError {
    pub fn code(&self) -> &'static str {
        match self {
            OriginError::SourceUnassigned(_) => "source-unassigned",
            OriginError::Unmapped { .. } => "origin-unmapped",
        }
    }
}

impl OriginRule {
    fn map_pair(&self, a: &Assignment) -> Option<Origin> {
        self.characteristics
            .get(&a.characteristic)
            .or_else(|| self.categories.get(&a.category))
            .copied()
    }
}

/// Human or machine, from the Source assignments. Any machine pair wins.
pub fn derive_origin(c: &Classification, rule: &OriginRule) -> Result<Origin, OriginError> {
    let pairs = c
        .dimension(&rule.source_dimension)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| OriginError::SourceUnassigned(rule.source_dimension.clone()))?;
    let mut origin = Origin::Human;
    for pair in pairs {
        match rule.map_pair(pair) {
            Some(Origin::Machine) => origin = Origin::Machine,
            Some(Origin::Human) => {}
            None => {
                return Err(OriginError::Unmapped {
                    category: pair.category.clone(),
                    characteristic: pair.characteristic.clone(),
                })
            }
        }
    }
    Ok(origin)
}

// ---------------------------------------------------------------------------
// Provenance and records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptureMethod {
    ApiDump,
    ManualAnnotation,
    Screenshot,
}

impl FromStr for CaptureMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "api-dump" => Ok(CaptureMethod::ApiDump),
            "manual-annotation" => Ok(CaptureMethod::ManualAnnotation),
            "screenshot" => Ok(CaptureMethod::Screenshot),
            _ => Err(format!("unknown capture method {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub created_at: Timestamp,
    #[serde(default)]
    pub generator: Option<Origin>,
    #[serde(default)]
    pub actor_label: String,
    #[serde(default)]
    pub capture_method: Option<CaptureMethod>,
}

impl Provenance {
    pub fn new(created_at: Timestamp, generator: Origin, actor: &str, method: CaptureMethod) -> Self {
        Self {
            created_at,
            generator: Some(generator),
            actor_label: actor.to_owned(),
            capture_method: Some(method),
        }
    }
}

/// Where inside a stored capture an artifact lives.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Selector {
    /// Slash-delimited key path into a JSON document; numeric segments index arrays.
    JsonPath { path: String },
    /// Pixel rectangle in an image.
    Region { x: u32, y: u32, w: u32, h: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadRef {
    pub blob: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<Selector>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub artifact_id: String,
    #[serde(rename = "type")]
    pub type_id: String,
    pub title: String,
    pub classification: Classification,
    pub provenance: Provenance,
    #[serde(default)]
    pub payload_ref: Option<PayloadRef>,
    #[serde(default)]
    pub notes: String,
}

/// Inputs for a new artifact; the id is assigned by the caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewArtifact {
    #[serde(rename = "type")]
    pub type_id: String,
    pub title: String,
    pub classification: Classification,
    pub provenance: Provenance,
    #[serde(default)]
    pub payload_ref: Option<PayloadRef>,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArtifactError {
    #[error("unknown artifact type {0}")]
    UnknownType(String),
    #[error(transparent)]
    Classification(#[from] ClassificationError),
}

impl ArtifactError {
    pub fn code(&self) -> &'static str {
        match self {
            ArtifactError::UnknownType(_) => "unknown-type",
            ArtifactError::Classification(e) => e.code(),
        }
    }
}

/// Validate `new` against the catalog and taxonomy and stamp it with `artifact_id`.
pub fn create_artifact(
    catalog: &Catalog,
    taxonomy: &Taxonomy,
    mode: ValidationMode,
    artifact_id: String,
    new: NewArtifact,
) -> Result<ArtifactRecord, ArtifactError> {
    if catalog.artifact_type(&new.type_id).is_none() {
        return Err(ArtifactError::UnknownType(new.type_id));
    }
    validate_classification(&new.classification, taxonomy, mode)?;
    Ok(ArtifactRecord {
        artifact_id,
        type_id: new.type_id,
        title: new.title,
        classification: new.classification,
        provenance: new.provenance,
        payload_ref: new.payload_ref,
        notes: new.notes,
    })
}
