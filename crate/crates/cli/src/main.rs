//! `tracelift` command-line tool.
//!
//! Exit codes: 0 success, 1 validation or domain failure, 2 usage error,
//! 3 I/O error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use tracelift_core::artifact::Classification;
use tracelift_core::canonical;
use tracelift_core::evolution::{coverage_report, ChangeOp};
use tracelift_core::query_export::{compare_history, export_view_bundle, locate, summarize, Filter, QueryError};
use tracelift_core::store::{init_repo, CaptureFile, Config, Repository, StoreError};
use tracelift_core::taxonomy::{bundled, diff_taxonomies, validate_taxonomy, Taxonomy, ValidationMode};
use tracelift_core::tracegraph::DeclaredBy;
use tracelift_core::{Origin, Phase};

const REPO_ENV: &str = "TRACELIFT_REPO";

#[derive(Parser, Debug)]
#[command(name = "tracelift", version, about = "Trace artifacts of human and AutoML work")]
struct Cli {
    /// Repository directory. TRACELIFT_REPO takes precedence when set.
    #[arg(long, global = true, value_name = "PATH")]
    repo: Option<PathBuf>,

    /// Print canonical JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create an empty repository.
    Init {
        /// Validate classifications descriptively instead of strictly.
        #[arg(long)]
        descriptive: bool,
    },
    /// Inspect taxonomies.
    #[command(subcommand)]
    Taxonomy(TaxonomyCmd),
    /// Create artifacts from a capture manifest.
    Ingest {
        manifest: PathBuf,
    },
    /// Replace an artifact's classification.
    Classify {
        artifact: String,
        /// dimension/category/characteristic; repeat for several.
        #[arg(long = "assign", value_name = "PATH", required = true)]
        assignments: Vec<String>,
        #[arg(long)]
        generator: Option<Origin>,
    },
    /// Declare that FROM is upstream of TO.
    Link {
        from: String,
        to: String,
        #[arg(long, default_value = "human")]
        declared_by: DeclaredBy,
        #[arg(long, default_value = "")]
        note: String,
    },
    /// Record a revision of every artifact.
    Snapshot {
        #[arg(long)]
        label: Option<String>,
    },
    /// Record a new taxonomy revision from a proposal file.
    ReviseTaxonomy {
        /// JSON with `taxonomy`, `changelog` and `object_classifications`.
        proposal: PathBuf,
        /// Accept undeclared merge- or split-shaped groups of adds and removes.
        #[arg(long)]
        lenient: bool,
    },
    /// Evaluate the stopping conditions between two taxonomy revisions.
    CheckEndConditions {
        #[arg(long)]
        prev: u32,
        #[arg(long)]
        curr: u32,
    },
    /// Objects per characteristic in a taxonomy revision.
    Coverage {
        /// Defaults to the latest revision.
        #[arg(long)]
        revision: Option<u32>,
    },
    /// Find artifacts.
    Locate(LocateArgs),
    /// Show one artifact with its neighbours and peers.
    Summarize {
        artifact: String,
    },
    /// Version chain of one artifact.
    History {
        artifact: String,
        /// Compare two revisions instead of listing the chain.
        #[arg(long, num_args = 2, value_names = ["REV_A", "REV_B"])]
        compare: Option<Vec<u32>>,
    },
    /// Write exports/view-bundle.json.
    Export,
}

#[derive(Subcommand, Debug)]
enum TaxonomyCmd {
    /// Check a taxonomy against the structural rules.
    Validate {
        #[command(flatten)]
        source: SourceArgs,
        /// Require two categories per dimension and two characteristics per category (default).
        #[arg(long, conflicts_with = "descriptive")]
        strict: bool,
        #[arg(long)]
        descriptive: bool,
    },
    /// Compare two taxonomies.
    Diff {
        /// `bundled`, `rev:N` or a file path.
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
    /// Print a taxonomy.
    Show {
        #[command(flatten)]
        source: SourceArgs,
    },
}

#[derive(Args, Debug)]
#[group(multiple = false)]
struct SourceArgs {
    /// The taxonomy shipped with tracelift (default).
    #[arg(long)]
    bundled: bool,
    #[arg(long, value_name = "PATH")]
    file: Option<PathBuf>,
    /// A taxonomy revision recorded in the repository.
    #[arg(long, value_name = "N")]
    revision: Option<u32>,
}

#[derive(Args, Debug)]
struct LocateArgs {
    #[arg(long)]
    phase: Option<Phase>,
    #[arg(long)]
    group: Option<String>,
    #[arg(long = "type")]
    type_id: Option<String>,
    #[arg(long)]
    origin: Option<Origin>,
    #[arg(long)]
    dimension: Option<String>,
    #[arg(long)]
    category: Option<String>,
    #[arg(long)]
    characteristic: Option<String>,
    /// `N` or `A..B`, inclusive.
    #[arg(long, value_parser = parse_range)]
    revisions: Option<(u32, u32)>,
}

#[derive(Deserialize)]
struct Proposal {
    taxonomy: Taxonomy,
    #[serde(default)]
    changelog: Vec<ChangeOp>,
    #[serde(default)]
    object_classifications: BTreeMap<String, Classification>,
}

enum Failure {
    Domain { code: String, message: String },
    Usage(String),
    Io(String),
}

impl Failure {
    fn domain(code: &str, message: impl ToString) -> Self {
        Failure::Domain { code: code.to_owned(), message: message.to_string() }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Domain { .. } => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::domain(e.code(), e)
        }
    }
}

impl From<QueryError> for Failure {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Io { .. } => Failure::Io(e.to_string()),
            _ => Failure::domain(e.code(), e),
        }
    }
}

/// What a command produced: a value for --json, text otherwise, and whether
/// it counts as a failed check.
struct Output {
    json: String,
    text: String,
    ok: bool,
}

impl Output {
    fn new<T: Serialize>(value: &T, text: String) -> Self {
        Output { json: canonical::to_string(value).expect("outputs serialize"), text, ok: true }
    }

    fn failed_check(mut self) -> Self {
        self.ok = false;
        self
    }
}

fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let num = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("{x:?}: {e}"));
    match s.split_once("..") {
        Some((a, b)) => Ok((num(a)?, num(b)?)),
        None => num(s).map(|n| (n, n)),
    }
}

fn repo_root(flag: Option<PathBuf>) -> PathBuf {
    std::env::var_os(REPO_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or(flag)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load_taxonomy(root: &Path, source: &str) -> Result<Taxonomy, Failure> {
    if source == "bundled" {
        return Ok(bundled());
    }
    if let Some(n) = source.strip_prefix("rev:") {
        let n: u32 = n.parse().map_err(|_| Failure::Usage(format!("bad revision in {source:?}")))?;
        return revision_taxonomy(root, n);
    }
    let text = read_file(Path::new(source))?;
    Taxonomy::from_json(&text).map_err(|e| Failure::domain("bad-taxonomy", format!("{source}: {e}")))
}

fn revision_taxonomy(root: &Path, n: u32) -> Result<Taxonomy, Failure> {
    let repo = Repository::open_read_only(root)?;
    let rev = repo
        .state()
        .taxonomies
        .get(n)
        .ok_or_else(|| Failure::domain("unknown-revision", format!("no taxonomy revision {n}")))?;
    Ok(rev.taxonomy.clone())
}

fn select_taxonomy(root: &Path, s: &SourceArgs) -> Result<(String, Taxonomy), Failure> {
    if let Some(path) = &s.file {
        let text = read_file(path)?;
        let t = Taxonomy::from_json(&text)
            .map_err(|e| Failure::domain("bad-taxonomy", format!("{}: {e}", path.display())))?;
        return Ok((path.display().to_string(), t));
    }
    if let Some(n) = s.revision {
        return Ok((format!("rev:{n}"), revision_taxonomy(root, n)?));
    }
    Ok(("bundled".into(), bundled()))
}

fn parse_assignment(s: &str) -> Result<(String, String, String), Failure> {
    match s.split('/').collect::<Vec<_>>()[..] {
        [d, c, ch] if !d.is_empty() && !c.is_empty() && !ch.is_empty() => Ok((d.into(), c.into(), ch.into())),
        _ => Err(Failure::Usage(format!("--assign expects dimension/category/characteristic, got {s:?}"))),
    }
}

fn run(cli: Cli) -> Result<Output, Failure> {
    let root = repo_root(cli.repo);
    match cli.command {
        Command::Init { descriptive } => {
            let mode = if descriptive { ValidationMode::Descriptive } else { ValidationMode::Strict };
            let config = Config { validation_mode: mode, ..Config::default() };
            init_repo(&root, &config)?;
            #[derive(Serialize)]
            struct Init<'a> {
                root: String,
                config: &'a Config,
            }
            let text = format!("initialized {}", root.display());
            Ok(Output::new(&Init { root: root.display().to_string(), config: &config }, text))
        }

        Command::Taxonomy(TaxonomyCmd::Validate { source, strict: _, descriptive }) => {
            let mode = if descriptive { ValidationMode::Descriptive } else { ValidationMode::Strict };
            let (name, t) = select_taxonomy(&root, &source)?;
            let report = validate_taxonomy(&t, mode);
            let mut text = if report.ok { format!("{name}: ok") } else { format!("{name}: {} violation(s)", report.violations.len()) };
            for v in &report.violations {
                let _ = write!(text, "\n  {} at {}: {}", v.rule, v.path, v.message);
            }
            let out = Output::new(&report, text);
            Ok(if report.ok { out } else { out.failed_check() })
        }

        Command::Taxonomy(TaxonomyCmd::Diff { from, to }) => {
            let (a, b) = (load_taxonomy(&root, &from)?, load_taxonomy(&root, &to)?);
            let diff = diff_taxonomies(&a, &b);
            let mut text = String::new();
            for (label, level) in [("dimension", &diff.dimensions), ("category", &diff.categories), ("characteristic", &diff.characteristics)] {
                for e in &level.added {
                    let _ = writeln!(text, "+ {label} {} {:?}", e.id, e.name);
                }
                for e in &level.removed {
                    let _ = writeln!(text, "- {label} {} {:?}", e.id, e.name);
                }
                for r in &level.renamed {
                    let _ = writeln!(text, "~ {label} {} {:?} -> {:?}", r.id, r.from, r.to);
                }
                for m in &level.moved {
                    let _ = writeln!(text, "> {label} {} {} -> {}", m.id, m.from_parent, m.to_parent);
                }
            }
            if text.is_empty() {
                text.push_str("no differences");
            }
            Ok(Output::new(&diff, text.trim_end().to_owned()))
        }

        Command::Taxonomy(TaxonomyCmd::Show { source }) => {
            let (_, t) = select_taxonomy(&root, &source)?;
            let mut text = t.version_label.clone();
            for d in &t.dimensions {
                let _ = write!(text, "\n{} {}", d.id, d.name);
                for c in &d.categories {
                    let _ = write!(text, "\n  {} {}", c.id, c.name);
                    for ch in &c.characteristics {
                        let _ = write!(text, "\n    {} {}", ch.id, ch.name);
                    }
                }
            }
            Ok(Output::new(&t, text))
        }

        Command::Ingest { manifest } => {
            let capture = CaptureFile::from_manifest(&manifest)?;
            let mut repo = Repository::open(&root)?;
            let records = repo.ingest_capture(&capture)?;
            let text = records
                .iter()
                .map(|r| format!("{} {} {:?}", r.artifact_id, r.type_id, r.title))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Output::new(&records, text))
        }

        Command::Classify { artifact, assignments, generator } => {
            let mut c = Classification::new();
            for a in &assignments {
                let (d, cat, ch) = parse_assignment(a)?;
                c.assign(&d, &cat, &ch);
            }
            let mut repo = Repository::open(&root)?;
            repo.classify(&artifact, c, generator)?;
            let record = repo.state().record(&artifact)?.clone();
            Ok(Output::new(&record, format!("classified {artifact}")))
        }

        Command::Link { from, to, declared_by, note } => {
            let mut repo = Repository::open(&root)?;
            repo.link(&from, &to, declared_by, &note)?;
            let edge = repo.state().graph.edges().last().cloned();
            Ok(Output::new(&edge, format!("{from} -> {to}")))
        }

        Command::Snapshot { label } => {
            let mut repo = Repository::open(&root)?;
            let label = label.unwrap_or_else(|| format!("revision {}", repo.state().history.revisions().len() + 1));
            let rev = repo.snapshot_auto(&label)?;
            Ok(Output::new(&rev, format!("revision {} {:?} at {}", rev.index, rev.label, rev.created_at)))
        }

        Command::ReviseTaxonomy { proposal, lenient } => {
            let text = read_file(&proposal)?;
            let p: Proposal = serde_json::from_str(&text)
                .map_err(|e| Failure::domain("bad-proposal", format!("{}: {e}", proposal.display())))?;
            let mut repo = Repository::open(&root)?;
            let index = repo.revise_taxonomy(p.taxonomy, p.changelog, p.object_classifications, lenient)?;
            #[derive(Serialize)]
            struct Revised {
                index: u32,
            }
            Ok(Output::new(&Revised { index }, format!("taxonomy revision {index}")))
        }

        Command::CheckEndConditions { prev, curr } => {
            let repo = Repository::open_read_only(&root)?;
            let report = repo.state().taxonomies.evaluate(prev, curr).map_err(|e| Failure::domain(e.code(), e))?;
            let mut text = format!(
                "{prev} -> {curr}: met={}\n  no changes: {}\n  no merge or split: {}\n  full coverage: {}",
                report.met, report.cond1_no_changes, report.cond2_no_merge_split, report.cond3_full_coverage
            );
            if !report.uncovered_characteristics.is_empty() {
                let _ = write!(text, "\n  uncovered: {}", report.uncovered_characteristics.join(", "));
            }
            let _ = write!(text, "\n  for sign-off: {}", report.subjective_checklist.join(", "));
            Ok(Output::new(&report, text))
        }

        Command::Coverage { revision } => {
            let repo = Repository::open_read_only(&root)?;
            let taxonomies = &repo.state().taxonomies;
            let rev = match revision {
                Some(n) => taxonomies.get(n),
                None => taxonomies.latest(),
            }
            .ok_or_else(|| Failure::domain("unknown-revision", "no such taxonomy revision"))?;
            let counts = coverage_report(rev);
            let text = counts.iter().map(|(id, n)| format!("{id} {n}")).collect::<Vec<_>>().join("\n");
            Ok(Output::new(&counts, text))
        }

        Command::Locate(a) => {
            let repo = Repository::open_read_only(&root)?;
            let filter = Filter {
                phase: a.phase,
                group: a.group,
                type_id: a.type_id,
                origin: a.origin,
                dimension: a.dimension,
                category: a.category,
                characteristic: a.characteristic,
                revisions: a.revisions,
            };
            let found = locate(repo.state(), &filter)?;
            let text = found
                .iter()
                .map(|s| {
                    let origin = s.origin.map_or("-", Origin::as_str);
                    format!("{} {} {} {} {:?}", s.artifact_id, s.phase, s.type_id, origin, s.title)
                })
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Output::new(&found, text))
        }

        Command::Summarize { artifact } => {
            let repo = Repository::open_read_only(&root)?;
            let card = summarize(repo.state(), &artifact)?;
            let s = &card.summary;
            let mut text = format!(
                "{} {:?}\n  type: {} ({}, {})\n  origin: {}\n  created: {}",
                s.artifact_id,
                s.title,
                s.type_id,
                s.group,
                s.phase,
                s.origin.map_or("-", Origin::as_str),
                s.created_at
            );
            let _ = write!(text, "\n  upstream: {}", card.upstream.join(", "));
            let _ = write!(text, "\n  downstream: {}", card.downstream.join(", "));
            for (ch, peers) in &card.peers {
                let _ = write!(text, "\n  {ch}: {}", peers.join(", "));
            }
            Ok(Output::new(&card, text))
        }

        Command::History { artifact, compare } => {
            let repo = Repository::open_read_only(&root)?;
            let state = repo.state();
            if let Some(revs) = compare {
                let delta = compare_history(state, &artifact, revs[0], revs[1])?;
                let mut text = format!("{artifact} {} -> {}", revs[0], revs[1]);
                if delta.is_empty() {
                    text.push_str(": no changes");
                }
                for a in &delta.classification_added {
                    let _ = write!(text, "\n  + {}/{}/{}", a.dimension, a.category, a.characteristic);
                }
                for a in &delta.classification_removed {
                    let _ = write!(text, "\n  - {}/{}/{}", a.dimension, a.category, a.characteristic);
                }
                return Ok(Output::new(&delta, text));
            }
            state.record(&artifact)?;
            let chain = state.history.history(&artifact).unwrap_or_default();
            let text = chain
                .iter()
                .map(|v| format!("{} {:?} {}", v.revision, v.status, &v.content_hash[..12.min(v.content_hash.len())]))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Output::new(&chain, text))
        }

        Command::Export => {
            let repo = Repository::open_read_only(&root)?;
            let (path, bundle) = export_view_bundle(&root, repo.state())?;
            #[derive(Serialize)]
            struct Exported {
                path: String,
                nodes: usize,
                revisions: usize,
            }
            let out = Exported {
                path: path.display().to_string(),
                nodes: bundle.nodes.len(),
                revisions: bundle.history_view.rows.len(),
            };
            let text = format!("wrote {}", out.path);
            Ok(Output::new(&out, text))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(out) => {
            println!("{}", if json { &out.json } else { &out.text });
            ExitCode::from(if out.ok { 0 } else { 1 })
        }
        Err(f) => {
            let code = f.exit_code();
            let (kind, message) = match f {
                Failure::Domain { code, message } => (code, message),
                Failure::Usage(m) => ("usage".to_owned(), m),
                Failure::Io(m) => ("io".to_owned(), m),
            };
            if json {
                #[derive(Serialize)]
                struct ErrorOut {
                    error: String,
                    message: String,
                }
                let body = ErrorOut { error: kind, message };
                eprintln!("{}", canonical::to_string(&body).expect("errors serialize"));
            } else {
                eprintln!("error[{kind}]: {message}");
            }
            ExitCode::from(code)
        }
    }
}
