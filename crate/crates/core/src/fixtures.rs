//! Ready-made repositories used by tests, the acceptance suite and demos.
//!
//! [`churn_scenario`] walks a small AutoML session from raw data to a
//! deployment alert over four revisions. [`evolution_steps`] is a scripted
//! eight-revision taxonomy development run that converges between the
//! last two revisions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::artifact::{bundled_catalog, Classification, Origin, Selector};
use crate::evolution::{ChangeOp, EvolutionError, TaxonomyHistory};
use crate::store::{init_repo, CaptureFile, CaptureFormat, Config, Demarcation, IdSource, Repository, StepClock, StoreError};
use crate::taxonomy::{bundled, Category, Characteristic, Taxonomy, ValidationMode};
use crate::time::Timestamp;
use crate::tracegraph::DeclaredBy;

pub const SCENARIO_START: i64 = 1_700_000_000_000;

/// Artifact ids of the scenario, by role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioIds {
    pub dataset: String,
    pub wrangling: String,
    pub feature_set: String,
    pub model_spec: String,
    pub drift_alert: String,
}

impl ScenarioIds {
    pub fn all(&self) -> [&str; 5] {
        [&self.dataset, &self.wrangling, &self.feature_set, &self.model_spec, &self.drift_alert]
    }
}

fn class(pairs: [(&str, &str, &str); 4]) -> Classification {
    pairs.iter().fold(Classification::new(), |c, (d, cat, ch)| c.with(d, cat, ch))
}

fn demarcation(selector: Selector, type_id: &str, title: &str, generator: Origin, c: Classification, actor: &str) -> Demarcation {
    Demarcation {
        selector,
        type_id: type_id.into(),
        title: title.into(),
        generator,
        classification: Some(c),
        actor_label: actor.into(),
        notes: String::new(),
        capture_method: None,
    }
}

fn json_path(p: &str) -> Selector {
    Selector::JsonPath { path: p.into() }
}

/// Feature set as the AutoML system first produced it.
pub fn feature_set_generated() -> Classification {
    class([("d1", "cat1.2", "c1.2.2"), ("d2", "cat2.2", "c2.2.2"), ("d3", "cat3.2", "c3.2.1"), ("d4", "cat4.5", "c4.5.1")])
}

/// Feature set after the data scientist reworked it.
pub fn feature_set_curated() -> Classification {
    class([("d1", "cat1.1", "c1.1.2"), ("d2", "cat2.1", "c2.1.1"), ("d3", "cat3.2", "c3.2.1"), ("d4", "cat4.5", "c4.5.2")])
}

/// Build the four-revision scenario in `repo_dir`, writing its capture
/// files into `capture_dir`.
///
/// rev 1: dataset, wrangling recommendations, generated feature set.
/// rev 2: feature set reworked by hand; model specification added.
/// rev 3: drift alert from the deployed model.
/// rev 4: model specification refined.
pub fn churn_scenario(repo_dir: &Path, capture_dir: &Path) -> Result<(Repository, ScenarioIds), StoreError> {
    let io = |p: &Path| {
        let p = p.to_owned();
        move |source| StoreError::Io { path: p, source }
    };
    fs::create_dir_all(capture_dir).map_err(io(capture_dir))?;
    let config = Config { validation_mode: ValidationMode::Strict, ..Config::default() };
    let mut repo = init_repo(repo_dir, &config)?
        .with_clock(StepClock::new(Timestamp::from_millis(SCENARIO_START), 60_000))
        .with_ids(IdSource::seeded(2023));

    let dump = capture_dir.join("profile-dump.json");
    fs::write(
        &dump,
        r#"{"dataset":{"name":"churn.csv","rows":7043,"columns":21},"recommendations":[{"column":"TotalCharges","action":"impute-median"},{"column":"customerID","action":"drop"}]}"#,
    )
    .map_err(io(&dump))?;
    let first = repo.ingest_capture(&CaptureFile {
        path: dump,
        format: CaptureFormat::Json,
        demarcations: vec![
            demarcation(
                json_path("dataset"),
                "initial-dataset",
                "Initial dataset",
                Origin::Human,
                class([("d1", "cat1.2", "c1.2.1"), ("d2", "cat2.1", "c2.1.1"), ("d3", "cat3.2", "c3.2.1"), ("d4", "cat4.1", "c4.1.6")]),
                "data scientist",
            ),
            demarcation(
                json_path("recommendations"),
                "wrangling-recommendations",
                "Wrangling recommendations",
                Origin::Machine,
                class([("d1", "cat1.3", "c1.3.3"), ("d2", "cat2.1", "c2.1.2"), ("d3", "cat3.3", "c3.3.2"), ("d4", "cat4.5", "c4.5.2")]),
                "automl",
            ),
        ],
    })?;
    let (dataset, wrangling) = (first[0].artifact_id.clone(), first[1].artifact_id.clone());

    let features = capture_dir.join("features.json");
    fs::write(&features, r#"{"features":["tenure","MonthlyCharges","Contract_onehot","tenure_x_charges"]}"#)
        .map_err(io(&features))?;
    let fs_rec = repo.ingest_capture(&CaptureFile {
        path: features,
        format: CaptureFormat::Json,
        demarcations: vec![demarcation(
            json_path("features"),
            "feature-set",
            "Feature set",
            Origin::Machine,
            feature_set_generated(),
            "automl",
        )],
    })?;
    let feature_set = fs_rec[0].artifact_id.clone();
    repo.link(&dataset, &wrangling, DeclaredBy::Machine, "recommendations computed from the profile")?;
    repo.link(&wrangling, &feature_set, DeclaredBy::Machine, "")?;
    repo.link(&dataset, &feature_set, DeclaredBy::Inferred, "")?;
    repo.snapshot_auto("rev 1: data preparation")?;

    repo.classify(&feature_set, feature_set_curated(), Some(Origin::Human))?;
    let spec = capture_dir.join("model-spec.json");
    fs::write(&spec, r#"{"model":{"family":"gradient-boosting","max_depth":6,"metric":"roc_auc"}}"#).map_err(io(&spec))?;
    let spec_rec = repo.ingest_capture(&CaptureFile {
        path: spec,
        format: CaptureFormat::Json,
        demarcations: vec![demarcation(
            json_path("model"),
            "model-specification",
            "Initial model specification",
            Origin::Human,
            class([("d1", "cat1.1", "c1.1.2"), ("d2", "cat2.1", "c2.1.1"), ("d3", "cat3.3", "c3.3.1"), ("d4", "cat4.5", "c4.5.1")]),
            "data scientist",
        )],
    })?;
    let model_spec = spec_rec[0].artifact_id.clone();
    repo.link(&feature_set, &model_spec, DeclaredBy::Human, "")?;
    repo.snapshot_auto("rev 2: modelling")?;

    let shot = capture_dir.join("drift-dashboard.png");
    image::RgbImage::from_pixel(160, 90, image::Rgb([240, 240, 240]))
        .save(&shot)
        .map_err(|e| StoreError::BadCapture(e.to_string()))?;
    let alert_rec = repo.ingest_capture(&CaptureFile {
        path: shot,
        format: CaptureFormat::Image,
        demarcations: vec![demarcation(
            Selector::Region { x: 8, y: 8, w: 120, h: 40 },
            "drift-alert",
            "Deployment drift alert",
            Origin::Machine,
            class([("d1", "cat1.4", "c1.4.3"), ("d2", "cat2.1", "c2.1.2"), ("d3", "cat3.4", "c3.4.2"), ("d4", "cat4.1", "c4.1.1")]),
            "monitoring",
        )],
    })?;
    let drift_alert = alert_rec[0].artifact_id.clone();
    repo.link(&model_spec, &drift_alert, DeclaredBy::Machine, "")?;
    repo.snapshot_auto("rev 3: deployment")?;

    let refined =
        class([("d1", "cat1.1", "c1.1.2"), ("d2", "cat2.1", "c2.1.1"), ("d3", "cat3.3", "c3.3.1"), ("d4", "cat4.5", "c4.5.2")]);
    repo.classify(&model_spec, refined, Some(Origin::Human))?;
    repo.snapshot_auto("rev 4: retraining")?;

    Ok((repo, ScenarioIds { dataset, wrangling, feature_set, model_spec, drift_alert }))
}

// ---------------------------------------------------------------------------
// Eight-revision taxonomy development
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvolutionStep {
    pub taxonomy: Taxonomy,
    pub changelog: Vec<ChangeOp>,
    pub objects: BTreeMap<String, Classification>,
}

fn ch(id: &str, name: &str) -> Characteristic {
    Characteristic { id: id.into(), name: name.into(), description: String::new() }
}

fn category_mut<'a>(t: &'a mut Taxonomy, id: &str) -> &'a mut Category {
    t.dimensions.iter_mut().flat_map(|d| d.categories.iter_mut()).find(|c| c.id == id).expect("fixture category")
}

fn take_char(t: &mut Taxonomy, cat: &str, id: &str) -> Characteristic {
    let c = category_mut(t, cat);
    let i = c.characteristics.iter().position(|x| x.id == id).expect("fixture characteristic");
    c.characteristics.remove(i)
}

/// Final object set: catalog types with a default classification, plus
/// one probe object for every characteristic those leave uncovered.
pub fn evolution_objects() -> BTreeMap<String, Classification> {
    let taxonomy = bundled();
    let mut objects: BTreeMap<String, Classification> = bundled_catalog()
        .types
        .into_iter()
        .filter_map(|t| t.default_classification.map(|c| (t.id, c)))
        .collect();
    for id in taxonomy.characteristic_ids() {
        if !objects.values().any(|c| c.has_characteristic(&id)) {
            objects.insert(format!("probe-{id}"), Classification::from_characteristics(&taxonomy, [id.as_str()]));
        }
    }
    objects
}

/// Keep each object's characteristics that exist in `t`, re-parented to
/// wherever `t` puts them.
pub fn project_objects(objects: &BTreeMap<String, Classification>, t: &Taxonomy) -> BTreeMap<String, Classification> {
    objects
        .iter()
        .map(|(id, c)| (id.clone(), Classification::from_characteristics(t, c.characteristics())))
        .collect()
}

/// Taxonomies and changelogs for revisions 1 to 8. The taxonomy reaches
/// the bundled one at revision 7 and stays there.
pub fn evolution_steps() -> Vec<EvolutionStep> {
    let t8 = bundled();
    let t7 = t8.clone();

    let mut t6 = t7.clone();
    let governing = t6.dimensions[3].categories.iter().position(|c| c.id == "cat4.3").expect("cat4.3");
    t6.dimensions[3].categories.remove(governing);

    let mut t5 = t6.clone();
    let prompt = take_char(&mut t5, "cat1.4", "c1.4.2");
    category_mut(&mut t5, "cat1.1").characteristics.push(prompt);

    let mut t4 = t5.clone();
    category_mut(&mut t4, "cat4.1").characteristics.push(ch("c4.1.7", "warning"));

    let mut t3 = t4.clone();
    category_mut(&mut t3, "cat3.4").characteristics[0].name = "printed".into();

    let mut t2 = t3.clone();
    take_char(&mut t2, "cat1.3", "c1.3.2");
    take_char(&mut t2, "cat1.3", "c1.3.3");
    category_mut(&mut t2, "cat1.3").characteristics.push(ch("c1.3.9", "outputs"));

    let mut t1 = t2.clone();
    let exploring = t1.dimensions[3].categories.iter().position(|c| c.id == "cat4.2").expect("cat4.2");
    t1.dimensions[3].categories.remove(exploring);

    let logs: [Vec<ChangeOp>; 8] = [
        vec![],
        vec![
            ChangeOp::add("d4/cat4.2", "Exploring"),
            ChangeOp::add("d4/cat4.2/c4.2.1", "targeted"),
            ChangeOp::add("d4/cat4.2/c4.2.2", "serendipitous"),
        ],
        vec![ChangeOp::split("d1/cat1.3/c1.3.9", &[("d1/cat1.3/c1.3.2", "metrics"), ("d1/cat1.3/c1.3.3", "results")])],
        vec![ChangeOp::rename("d3/cat3.4/c3.4.1", "static")],
        vec![ChangeOp::merge("d4/cat4.1/c4.1.1", "alerting", &["c4.1.1", "c4.1.7"])],
        vec![ChangeOp::reclassify("d1/cat1.1/c1.4.2", "cat1.4")],
        vec![
            ChangeOp::add("d4/cat4.3", "Governing"),
            ChangeOp::add("d4/cat4.3/c4.3.1", "authorizing"),
            ChangeOp::add("d4/cat4.3/c4.3.2", "auditing"),
        ],
        vec![],
    ];

    let final_objects = evolution_objects();
    [t1, t2, t3, t4, t5, t6, t7, t8]
        .into_iter()
        .zip(logs)
        .map(|(taxonomy, changelog)| {
            let objects = project_objects(&final_objects, &taxonomy);
            EvolutionStep { taxonomy, changelog, objects }
        })
        .collect()
}

pub fn evolution_history() -> Result<TaxonomyHistory, EvolutionError> {
    let mut h = TaxonomyHistory::new();
    for step in evolution_steps() {
        h.record(step.taxonomy, step.changelog, step.objects, false)?;
    }
    Ok(h)
}

/// Record the eight revisions in a fresh repository at `repo_dir`.
pub fn evolution_repo(repo_dir: &Path) -> Result<Repository, StoreError> {
    let mut repo = init_repo(repo_dir, &Config::default())?
        .with_clock(StepClock::new(Timestamp::from_millis(SCENARIO_START), 1000))
        .with_ids(IdSource::seeded(8));
    for step in evolution_steps() {
        repo.revise_taxonomy(step.taxonomy, step.changelog, step.objects, false)?;
    }
    Ok(repo)
}
