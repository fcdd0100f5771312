//! On-disk repository: an append-only JSON-lines event log, content-addressed
//! blobs, and numbered taxonomy revisions.
//!
//! Layout under the repository root:
//!
//! ```text
//! tracelift.json        config
//! events.log            one canonical JSON event per line
//! taxonomy/rev-0001.json
//! artifacts/<id>.json   latest record, rewritten on every change
//! blobs/<sha256-hex>
//! exports/
//! ```
//!
//! Every mutation goes through [`RepoState::apply`], both live and on
//! replay, so the log alone determines state.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::artifact::{
    bundled_catalog, create_artifact, validate_classification, ArtifactError, ArtifactRecord, CaptureMethod, Catalog,
    Classification, NewArtifact, Origin, OriginRule, PayloadRef, Provenance, Selector,
};
use crate::canonical;
use crate::evolution::{ChangeOp, EvolutionError, TaxonomyHistory};
use crate::taxonomy::{bundled, Taxonomy, ValidationMode};
use crate::time::Timestamp;
use crate::tracegraph::{
    content_hash, DeclaredBy, DependencyEdge, Revision, TraceError, TraceGraph, VersionChange, VersionHistory,
    VersionStatus,
};

pub const CONFIG_FILE: &str = "tracelift.json";
pub const EVENTS_FILE: &str = "events.log";
pub const LOCK_FILE: &str = ".lock";
pub const TAXONOMY_DIR: &str = "taxonomy";
pub const ARTIFACTS_DIR: &str = "artifacts";
pub const BLOBS_DIR: &str = "blobs";
pub const EXPORTS_DIR: &str = "exports";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Config {
    /// Mode used when validating artifact classifications.
    pub validation_mode: ValidationMode,
    pub origin_rule: OriginRule,
}

impl Default for Config {
    fn default() -> Self {
        Self { validation_mode: ValidationMode::Descriptive, origin_rule: OriginRule::default() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{0} is already a tracelift repository")]
    AlreadyInitialized(PathBuf),
    #[error("{0} is not empty")]
    NotEmpty(PathBuf),
    #[error("{0} is not a tracelift repository")]
    NotARepository(PathBuf),
    #[error("repository is locked by another writer ({0})")]
    Locked(PathBuf),
    #[error("repository was opened read-only")]
    ReadOnly,
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("event log corrupt at seq {seq}: {reason}")]
    Corrupt { seq: u64, reason: String },
    #[error("malformed config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error("unknown artifact {0}")]
    UnknownArtifact(String),
    #[error("selector does not resolve: {0}")]
    UnresolvableSelector(String),
    #[error("bad capture: {0}")]
    BadCapture(String),
    #[error("created_at {got} precedes {floor} recorded earlier in this revision")]
    NonMonotoneCreatedAt { got: Timestamp, floor: Timestamp },
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::AlreadyInitialized(_) => "already-initialized",
            StoreError::NotEmpty(_) => "not-empty",
            StoreError::NotARepository(_) => "not-a-repository",
            StoreError::Locked(_) => "locked",
            StoreError::ReadOnly => "read-only",
            StoreError::Io { .. } => "io",
            StoreError::Corrupt { .. } => "corrupt-log",
            StoreError::BadConfig(_) => "bad-config",
            StoreError::Artifact(e) => e.code(),
            StoreError::Trace(e) => e.code(),
            StoreError::Evolution(e) => e.code(),
            StoreError::UnknownArtifact(_) => "unknown-artifact",
            StoreError::UnresolvableSelector(_) => "unresolvable-selector",
            StoreError::BadCapture(_) => "bad-capture",
            StoreError::NonMonotoneCreatedAt { .. } => "non-monotone-created-at",
        }
    }

    /// True for failures of the file system rather than of the request.
    pub fn is_io(&self) -> bool {
        matches!(self, StoreError::Io { .. } | StoreError::Locked(_) | StoreError::Corrupt { .. })
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_owned(), source }
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body")]
pub enum EventBody {
    ArtifactCreated {
        record: ArtifactRecord,
    },
    ArtifactClassified {
        artifact_id: String,
        classification: Classification,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        generator: Option<Origin>,
    },
    EdgeAdded {
        edge: DependencyEdge,
    },
    RevisionSnapshotted {
        label: String,
        created_at: Timestamp,
        changes: BTreeMap<String, VersionChange>,
    },
    TaxonomyRevised {
        index: u32,
        file: String,
        sha256: String,
        lenient: bool,
    },
    BlobAttached {
        hash: String,
        size: u64,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::ArtifactCreated { .. } => "ArtifactCreated",
            EventBody::ArtifactClassified { .. } => "ArtifactClassified",
            EventBody::EdgeAdded { .. } => "EdgeAdded",
            EventBody::RevisionSnapshotted { .. } => "RevisionSnapshotted",
            EventBody::TaxonomyRevised { .. } => "TaxonomyRevised",
            EventBody::BlobAttached { .. } => "BlobAttached",
        }
    }
}

/// One line of the event log: `{"at":..,"body":..,"kind":..,"seq":..}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub seq: u64,
    pub at: Timestamp,
    pub body: EventBody,
}

#[derive(Serialize, Deserialize)]
struct RawEvent {
    seq: u64,
    at: Timestamp,
    kind: String,
    body: Value,
}

impl Event {
    pub fn to_line(&self) -> String {
        let tagged = serde_json::to_value(&self.body).expect("event bodies serialize");
        let raw = RawEvent {
            seq: self.seq,
            at: self.at,
            kind: self.body.kind().to_owned(),
            body: tagged.get("body").cloned().unwrap_or(Value::Null),
        };
        canonical::to_string(&raw).expect("events serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, String> {
        let raw: RawEvent = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let body: EventBody = serde_json::from_value(serde_json::json!({ "kind": raw.kind, "body": raw.body }))
            .map_err(|e| e.to_string())?;
        Ok(Event { seq: raw.seq, at: raw.at, body })
    }
}

// ---------------------------------------------------------------------------
// Replayed state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepoState {
    pub artifacts: BTreeMap<String, ArtifactRecord>,
    /// Seq of each artifact's creation event.
    pub created_seq: BTreeMap<String, u64>,
    pub graph: TraceGraph,
    pub history: VersionHistory,
    pub taxonomies: TaxonomyHistory,
    pub blobs: BTreeSet<String>,
    pub last_seq: u64,
    /// Latest provenance timestamp since the last snapshot.
    created_floor: Option<Timestamp>,
    catalog: Catalog,
    config: Config,
}

impl RepoState {
    pub fn new(config: Config) -> Self {
        Self {
            artifacts: BTreeMap::new(),
            created_seq: BTreeMap::new(),
            graph: TraceGraph::new(),
            history: VersionHistory::new(),
            taxonomies: TaxonomyHistory::new(),
            blobs: BTreeSet::new(),
            last_seq: 0,
            created_floor: None,
            catalog: bundled_catalog(),
            config,
        }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// Latest taxonomy revision, or the bundled taxonomy before the first one.
    pub fn active_taxonomy(&self) -> Taxonomy {
        self.taxonomies.latest().map(|r| r.taxonomy.clone()).unwrap_or_else(bundled)
    }

    pub fn record(&self, id: &str) -> Result<&ArtifactRecord, StoreError> {
        self.artifacts.get(id).ok_or_else(|| StoreError::UnknownArtifact(id.to_owned()))
    }

    /// Artifact ids in creation order.
    pub fn ids_by_seq(&self) -> Vec<String> {
        let mut ids: Vec<(&u64, &String)> = self.created_seq.iter().map(|(id, s)| (s, id)).collect();
        ids.sort();
        ids.into_iter().map(|(_, id)| id.clone()).collect()
    }

    pub fn current_hash(&self, id: &str) -> Result<String, StoreError> {
        let r = self.record(id)?;
        Ok(content_hash(&r.classification, r.payload_ref.as_ref(), &r.title))
    }

    /// Statuses for every artifact, derived by comparing current content
    /// hashes with the latest versions. Unchanged artifacts are omitted.
    pub fn pending_changes(&self) -> BTreeMap<String, VersionChange> {
        let mut out = BTreeMap::new();
        for (id, r) in &self.artifacts {
            let hash = content_hash(&r.classification, r.payload_ref.as_ref(), &r.title);
            let status = match self.history.latest_version(id) {
                None => VersionStatus::New,
                Some(v) if v.content_hash != hash => VersionStatus::Modified,
                Some(_) => continue,
            };
            out.insert(
                id.clone(),
                VersionChange {
                    status,
                    content_hash: hash,
                    classification: r.classification.clone(),
                    generator: r.provenance.generator,
                },
            );
        }
        out
    }

    /// Validate and apply one event. `root` is used to load taxonomy files.
    pub fn apply(&mut self, event: &Event, root: &Path) -> Result<(), StoreError> {
        if event.seq != self.last_seq + 1 {
            return Err(StoreError::Corrupt { seq: self.last_seq + 1, reason: format!("found seq {}", event.seq) });
        }
        match &event.body {
            EventBody::ArtifactCreated { record } => {
                if self.artifacts.contains_key(&record.artifact_id) {
                    return Err(StoreError::Corrupt {
                        seq: event.seq,
                        reason: format!("artifact {} created twice", record.artifact_id),
                    });
                }
                if let Some(floor) = self.created_floor {
                    if record.provenance.created_at < floor {
                        return Err(StoreError::NonMonotoneCreatedAt { got: record.provenance.created_at, floor });
                    }
                }
                let new = NewArtifact {
                    type_id: record.type_id.clone(),
                    title: record.title.clone(),
                    classification: record.classification.clone(),
                    provenance: record.provenance.clone(),
                    payload_ref: record.payload_ref.clone(),
                    notes: record.notes.clone(),
                };
                let taxonomy = self.active_taxonomy();
                let rec = create_artifact(&self.catalog, &taxonomy, self.config.validation_mode, record.artifact_id.clone(), new)?;
                if let Some(p) = &rec.payload_ref {
                    if !self.blobs.contains(&p.blob) {
                        return Err(StoreError::BadCapture(format!("payload blob {} was never attached", p.blob)));
                    }
                }
                self.created_floor = Some(rec.provenance.created_at);
                self.graph.add_node(&rec.artifact_id);
                self.created_seq.insert(rec.artifact_id.clone(), event.seq);
                self.artifacts.insert(rec.artifact_id.clone(), rec);
            }
            EventBody::ArtifactClassified { artifact_id, classification, generator } => {
                let taxonomy = self.active_taxonomy();
                validate_classification(classification, &taxonomy, self.config.validation_mode)
                    .map_err(ArtifactError::from)?;
                let rec = self
                    .artifacts
                    .get_mut(artifact_id)
                    .ok_or_else(|| StoreError::UnknownArtifact(artifact_id.clone()))?;
                rec.classification = classification.clone();
                if generator.is_some() {
                    rec.provenance.generator = *generator;
                }
            }
            EventBody::EdgeAdded { edge } => {
                self.graph.add_dependency(&edge.from, &edge.to, edge.declared_by, &edge.note)?;
            }
            EventBody::RevisionSnapshotted { label, created_at, changes } => {
                let artifacts = &self.artifacts;
                self.history.snapshot(label, *created_at, changes, |id| artifacts.contains_key(id))?;
                self.created_floor = None;
            }
            EventBody::TaxonomyRevised { index, file, sha256, lenient } => {
                let path = root.join(file);
                let bytes = fs::read(&path).map_err(io_err(&path))?;
                if canonical::sha256_hex(&bytes) != *sha256 {
                    return Err(StoreError::Corrupt { seq: event.seq, reason: format!("{file} does not match its hash") });
                }
                let doc: RevisionFile = serde_json::from_slice(&bytes)
                    .map_err(|e| StoreError::Corrupt { seq: event.seq, reason: format!("{file}: {e}") })?;
                let rev = self.taxonomies.prepare(doc.taxonomy, doc.changelog, doc.object_classifications, *lenient)?;
                if rev.index != *index || doc.index != *index {
                    return Err(StoreError::Corrupt { seq: event.seq, reason: format!("{file} is not revision {index}") });
                }
                self.taxonomies.push(rev);
            }
            EventBody::BlobAttached { hash, .. } => {
                let path = root.join(BLOBS_DIR).join(hash);
                if !path.is_file() {
                    return Err(StoreError::Corrupt { seq: event.seq, reason: format!("blob {hash} missing") });
                }
                self.blobs.insert(hash.clone());
            }
        }
        self.last_seq = event.seq;
        Ok(())
    }
}

/// Contents of `taxonomy/rev-NNNN.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionFile {
    pub index: u32,
    pub taxonomy: Taxonomy,
    pub changelog: Vec<ChangeOp>,
    pub object_classifications: BTreeMap<String, Classification>,
}

pub fn revision_file_name(index: u32) -> String {
    format!("{TAXONOMY_DIR}/rev-{index:04}.json")
}

// ---------------------------------------------------------------------------
// Clock and ids
// ---------------------------------------------------------------------------

pub trait Clock: Send {
    fn now(&mut self) -> Timestamp;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&mut self) -> Timestamp {
        Timestamp::now()
    }
}

/// Deterministic clock advancing by `step_ms` on every reading.
pub struct StepClock {
    next: i64,
    step_ms: i64,
}

impl StepClock {
    pub fn new(start: Timestamp, step_ms: i64) -> Self {
        Self { next: start.as_millis(), step_ms }
    }
}

impl Clock for StepClock {
    fn now(&mut self) -> Timestamp {
        let t = Timestamp::from_millis(self.next);
        self.next += self.step_ms;
        t
    }
}

/// Source of artifact ids (UUID v4 text form).
pub enum IdSource {
    Random,
    Seeded(Box<ChaCha8Rng>),
}

impl IdSource {
    pub fn seeded(seed: u64) -> Self {
        IdSource::Seeded(Box::new(ChaCha8Rng::seed_from_u64(seed)))
    }

    pub fn next_id(&mut self) -> String {
        match self {
            IdSource::Random => uuid::Uuid::new_v4().to_string(),
            IdSource::Seeded(rng) => {
                let mut bytes = [0u8; 16];
                rng.fill_bytes(&mut bytes);
                uuid::Builder::from_random_bytes(bytes).into_uuid().to_string()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Captures
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptureFormat {
    Json,
    Image,
}

impl CaptureFormat {
    pub fn detect(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "json" => Some(CaptureFormat::Json),
            "png" | "jpg" | "jpeg" => Some(CaptureFormat::Image),
            _ => None,
        }
    }
}

/// One artifact marked up inside a capture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demarcation {
    pub selector: Selector,
    #[serde(rename = "type")]
    pub type_id: String,
    pub title: String,
    /// Stated by the annotator; the capture itself rarely says.
    pub generator: Origin,
    /// Defaults to the type's catalog classification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    #[serde(default)]
    pub actor_label: String,
    #[serde(default)]
    pub notes: String,
    /// Overrides the method implied by the file format.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_method: Option<CaptureMethod>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureFile {
    pub path: PathBuf,
    pub format: CaptureFormat,
    pub demarcations: Vec<Demarcation>,
}

#[derive(Deserialize)]
struct Manifest {
    source: PathBuf,
    #[serde(default)]
    format: Option<CaptureFormat>,
    demarcations: Vec<Demarcation>,
}

impl CaptureFile {
    /// Read a manifest `{source, format?, demarcations}`; `source` is
    /// relative to the manifest's directory.
    pub fn from_manifest(path: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| StoreError::BadCapture(e.to_string()))?;
        let source = path.parent().unwrap_or(Path::new(".")).join(&m.source);
        let format = m
            .format
            .or_else(|| CaptureFormat::detect(&source))
            .ok_or_else(|| StoreError::BadCapture(format!("cannot tell the format of {}", source.display())))?;
        Ok(CaptureFile { path: source, format, demarcations: m.demarcations })
    }
}

/// Walk a slash-delimited key path; numeric segments index arrays. The
/// empty path selects the whole document.
pub fn resolve_json_path<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    let mut cur = doc;
    for seg in path.split('/').filter(|s| !s.is_empty()) {
        cur = match cur {
            Value::Object(m) => m.get(seg)?,
            Value::Array(a) => a.get(seg.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

fn check_selector(format: CaptureFormat, bytes: &[u8], doc: Option<&Value>, sel: &Selector) -> Result<(), StoreError> {
    match (format, sel) {
        (CaptureFormat::Json, Selector::JsonPath { path }) => {
            let doc = doc.expect("json captures are parsed");
            resolve_json_path(doc, path).map(|_| ()).ok_or_else(|| StoreError::UnresolvableSelector(path.clone()))
        }
        (CaptureFormat::Image, Selector::Region { x, y, w, h }) => {
            let (width, height) = image::ImageReader::new(io::Cursor::new(bytes))
                .with_guessed_format()
                .ok()
                .and_then(|r| r.into_dimensions().ok())
                .ok_or_else(|| StoreError::BadCapture("unreadable image".into()))?;
            let fits = *w > 0
                && *h > 0
                && u64::from(*x) + u64::from(*w) <= u64::from(width)
                && u64::from(*y) + u64::from(*h) <= u64::from(height);
            if fits {
                Ok(())
            } else {
                Err(StoreError::UnresolvableSelector(format!("region {x},{y} {w}x{h} outside {width}x{height} image")))
            }
        }
        (CaptureFormat::Json, Selector::Region { .. }) => {
            Err(StoreError::UnresolvableSelector("pixel region on a JSON capture".into()))
        }
        (CaptureFormat::Image, Selector::JsonPath { path }) => {
            Err(StoreError::UnresolvableSelector(format!("key path {path:?} on an image capture")))
        }
    }
}

// ---------------------------------------------------------------------------
// Repository
// ---------------------------------------------------------------------------

struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub struct Repository {
    root: PathBuf,
    state: RepoState,
    clock: Box<dyn Clock>,
    ids: IdSource,
    lock: Option<LockGuard>,
}

impl std::fmt::Debug for Repository {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Repository").field("root", &self.root).field("last_seq", &self.state.last_seq).finish()
    }
}

pub fn init_repo(path: &Path, config: &Config) -> Result<Repository, StoreError> {
    if path.join(CONFIG_FILE).exists() {
        return Err(StoreError::AlreadyInitialized(path.to_owned()));
    }
    if path.exists() {
        let mut entries = fs::read_dir(path).map_err(io_err(path))?;
        if entries.next().is_some() {
            return Err(StoreError::NotEmpty(path.to_owned()));
        }
    }
    for dir in [TAXONOMY_DIR, ARTIFACTS_DIR, BLOBS_DIR, EXPORTS_DIR] {
        let d = path.join(dir);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let cfg = path.join(CONFIG_FILE);
    fs::write(&cfg, canonical::to_file_bytes(config).expect("config serializes")).map_err(io_err(&cfg))?;
    let log = path.join(EVENTS_FILE);
    File::create(&log).map_err(io_err(&log))?;
    Repository::open(path)
}

pub fn read_config(root: &Path) -> Result<Config, StoreError> {
    let path = root.join(CONFIG_FILE);
    if !path.is_file() {
        return Err(StoreError::NotARepository(root.to_owned()));
    }
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::BadConfig(e.to_string()))
}

/// Rebuild state from the event log.
pub fn replay(root: &Path) -> Result<RepoState, StoreError> {
    let config = read_config(root)?;
    let mut state = RepoState::new(config);
    let path = root.join(EVENTS_FILE);
    let file = File::open(&path).map_err(io_err(&path))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(&path))?;
        let expected = state.last_seq + 1;
        let event = Event::from_line(&line).map_err(|reason| StoreError::Corrupt { seq: expected, reason })?;
        state.apply(&event, root).map_err(|e| match e {
            StoreError::Corrupt { .. } => e,
            other => StoreError::Corrupt { seq: expected, reason: other.to_string() },
        })?;
    }
    Ok(state)
}

impl Repository {
    /// Open for writing; takes the repository lock.
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        read_config(root)?;
        let lock_path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => return Err(StoreError::Locked(lock_path)),
            Err(e) => return Err(StoreError::Io { path: lock_path, source: e }),
        }
        let guard = LockGuard(lock_path);
        let state = replay(root)?;
        Ok(Self { root: root.to_owned(), state, clock: Box::new(SystemClock), ids: IdSource::Random, lock: Some(guard) })
    }

    /// Open without the lock; mutations fail with `read-only`.
    pub fn open_read_only(root: &Path) -> Result<Self, StoreError> {
        let state = replay(root)?;
        Ok(Self { root: root.to_owned(), state, clock: Box::new(SystemClock), ids: IdSource::Random, lock: None })
    }

    pub fn with_clock(mut self, clock: impl Clock + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn with_ids(mut self, ids: IdSource) -> Self {
        self.ids = ids;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn state(&self) -> &RepoState {
        &self.state
    }

    pub fn config(&self) -> &Config {
        self.state.config()
    }

    pub fn event_count(&self) -> u64 {
        self.state.last_seq
    }

    pub fn exports_dir(&self) -> PathBuf {
        self.root.join(EXPORTS_DIR)
    }

    pub fn now(&mut self) -> Timestamp {
        self.clock.now()
    }

    fn writable(&self) -> Result<(), StoreError> {
        if self.lock.is_some() {
            Ok(())
        } else {
            Err(StoreError::ReadOnly)
        }
    }

    /// Apply then append. `apply` checks everything before it mutates, so
    /// a rejected event leaves both state and log untouched.
    fn commit(&mut self, body: EventBody) -> Result<u64, StoreError> {
        self.writable()?;
        let event = Event { seq: self.state.last_seq + 1, at: self.clock.now(), body };
        self.state.apply(&event, &self.root)?;
        let path = self.root.join(EVENTS_FILE);
        let written = OpenOptions::new()
            .append(true)
            .open(&path)
            .and_then(|mut f| f.write_all(format!("{}\n", event.to_line()).as_bytes()).and_then(|()| f.flush()));
        if let Err(source) = written {
            // fall back to whatever the log actually holds
            if let Ok(state) = replay(&self.root) {
                self.state = state;
            }
            return Err(StoreError::Io { path, source });
        }
        Ok(event.seq)
    }

    fn write_record(&self, id: &str) -> Result<(), StoreError> {
        let rec = self.state.record(id)?;
        let path = self.root.join(ARTIFACTS_DIR).join(format!("{id}.json"));
        fs::write(&path, canonical::to_file_bytes(rec).expect("records serialize")).map_err(io_err(&path))
    }

    /// Store `bytes` under their SHA-256. Idempotent; logs only new blobs.
    pub fn attach_blob(&mut self, bytes: &[u8]) -> Result<String, StoreError> {
        self.writable()?;
        let hash = canonical::sha256_hex(bytes);
        let path = self.root.join(BLOBS_DIR).join(&hash);
        if !path.exists() {
            let tmp = self.root.join(BLOBS_DIR).join(format!(".{hash}.tmp"));
            fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
            fs::rename(&tmp, &path).map_err(io_err(&path))?;
        }
        if !self.state.blobs.contains(&hash) {
            self.commit(EventBody::BlobAttached { hash: hash.clone(), size: bytes.len() as u64 })?;
        }
        Ok(hash)
    }

    pub fn read_blob(&self, hash: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.root.join(BLOBS_DIR).join(hash);
        fs::read(&path).map_err(io_err(&path))
    }

    /// Create one artifact with a fresh id.
    pub fn create(&mut self, new: NewArtifact) -> Result<ArtifactRecord, StoreError> {
        self.writable()?;
        let id = self.ids.next_id();
        let taxonomy = self.state.active_taxonomy();
        let record = create_artifact(self.state.catalog(), &taxonomy, self.config().validation_mode, id.clone(), new)?;
        self.commit(EventBody::ArtifactCreated { record: record.clone() })?;
        self.write_record(&id)?;
        Ok(record)
    }

    /// Store the capture as one blob and create one record per demarcation,
    /// in demarcation order. Every demarcation is checked before anything
    /// is written.
    pub fn ingest_capture(&mut self, capture: &CaptureFile) -> Result<Vec<ArtifactRecord>, StoreError> {
        self.writable()?;
        let bytes = fs::read(&capture.path).map_err(io_err(&capture.path))?;
        let doc = match capture.format {
            CaptureFormat::Json => Some(
                serde_json::from_slice::<Value>(&bytes)
                    .map_err(|e| StoreError::BadCapture(format!("{}: {e}", capture.path.display())))?,
            ),
            CaptureFormat::Image => None,
        };
        let default_method = match capture.format {
            CaptureFormat::Json => CaptureMethod::ApiDump,
            CaptureFormat::Image => CaptureMethod::Screenshot,
        };
        let taxonomy = self.state.active_taxonomy();
        let blob = canonical::sha256_hex(&bytes);

        let mut pending = Vec::with_capacity(capture.demarcations.len());
        for d in &capture.demarcations {
            check_selector(capture.format, &bytes, doc.as_ref(), &d.selector)?;
            let ty = self
                .state
                .catalog()
                .artifact_type(&d.type_id)
                .ok_or_else(|| ArtifactError::UnknownType(d.type_id.clone()))?;
            let classification =
                d.classification.clone().or_else(|| ty.default_classification.clone()).unwrap_or_default();
            validate_classification(&classification, &taxonomy, self.config().validation_mode)
                .map_err(ArtifactError::from)?;
            pending.push((d, classification));
        }

        self.attach_blob(&bytes)?;
        let mut out = Vec::with_capacity(pending.len());
        for (d, classification) in pending {
            let created_at = self.clock.now();
            let new = NewArtifact {
                type_id: d.type_id.clone(),
                title: d.title.clone(),
                classification,
                provenance: Provenance {
                    created_at,
                    generator: Some(d.generator),
                    actor_label: d.actor_label.clone(),
                    capture_method: Some(d.capture_method.unwrap_or(default_method)),
                },
                payload_ref: Some(PayloadRef { blob: blob.clone(), selector: Some(d.selector.clone()) }),
                notes: d.notes.clone(),
            };
            out.push(self.create(new)?);
        }
        Ok(out)
    }

    /// Replace an artifact's classification. `generator` records who made
    /// the change when it differs from the original generator.
    pub fn classify(
        &mut self,
        artifact_id: &str,
        classification: Classification,
        generator: Option<Origin>,
    ) -> Result<(), StoreError> {
        self.state.record(artifact_id)?;
        self.commit(EventBody::ArtifactClassified { artifact_id: artifact_id.to_owned(), classification, generator })?;
        self.write_record(artifact_id)
    }

    pub fn link(&mut self, from: &str, to: &str, declared_by: DeclaredBy, note: &str) -> Result<(), StoreError> {
        self.state.graph.check_edge(from, to)?;
        let edge = DependencyEdge { from: from.to_owned(), to: to.to_owned(), declared_by, note: note.to_owned() };
        self.commit(EventBody::EdgeAdded { edge })?;
        Ok(())
    }

    /// Snapshot with explicit statuses.
    pub fn snapshot(&mut self, label: &str, changes: BTreeMap<String, VersionChange>) -> Result<Revision, StoreError> {
        let created_at = self.clock.now();
        self.commit(EventBody::RevisionSnapshotted { label: label.to_owned(), created_at, changes })?;
        Ok(self.state.history.latest().expect("snapshot recorded").clone())
    }

    /// Snapshot with statuses derived from content hashes.
    pub fn snapshot_auto(&mut self, label: &str) -> Result<Revision, StoreError> {
        let changes = self.state.pending_changes();
        self.snapshot(label, changes)
    }

    /// Record a taxonomy revision and its changelog.
    pub fn revise_taxonomy(
        &mut self,
        taxonomy: Taxonomy,
        changelog: Vec<ChangeOp>,
        object_classifications: BTreeMap<String, Classification>,
        lenient: bool,
    ) -> Result<u32, StoreError> {
        self.writable()?;
        let rev = self.state.taxonomies.prepare(taxonomy, changelog, object_classifications, lenient)?;
        let doc = RevisionFile {
            index: rev.index,
            taxonomy: rev.taxonomy,
            changelog: rev.changelog,
            object_classifications: rev.object_classifications,
        };
        let file = revision_file_name(doc.index);
        let bytes = canonical::to_file_bytes(&doc).expect("revisions serialize");
        let path = self.root.join(&file);
        fs::write(&path, &bytes).map_err(io_err(&path))?;
        let sha256 = canonical::sha256_hex(&bytes);
        self.commit(EventBody::TaxonomyRevised { index: doc.index, file, sha256, lenient })?;
        Ok(doc.index)
    }

    /// Events currently in the log, parsed.
    pub fn events(&self) -> Result<Vec<Event>, StoreError> {
        let path = self.root.join(EVENTS_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        text.lines()
            .enumerate()
            .map(|(i, l)| Event::from_line(l).map_err(|reason| StoreError::Corrupt { seq: i as u64 + 1, reason }))
            .collect()
    }
}
