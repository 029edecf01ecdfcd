//! The end-to-end protocol: split, impute, normalize, select lambda by
//! cross-validation, fit, then evaluate the fitted model next to the baseline
//! scores on every split and write the artifacts plus a manifest.
//!
//! All randomness comes from `seed` through named substreams, so a rerun with
//! the same cohort and configuration reproduces every artifact byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use peer_core::calibration::{calibration, CalibrationConfig, CalibrationMethod, CalibrationReport};
use peer_core::concordance::{concordance_ci, ConcordanceResult};
use peer_core::cox::{self, bootstrap_hr_ci, CoxFitConfig, CoxModel, HazardRatioTable};
use peer_core::dataset::SurvivalDataset;
use peer_core::evaluation::{
    cv_grid_search, descending_grid, secondary_outcomes, survival_readout, CvRow, Readout, SecondaryRow,
    KNEE_EPSILON, PUBLISHED_LAMBDA_GRID,
};
use peer_core::impute::{impute_with_model, stability_study, ImputeConfig, StabilityReport, SweepDelta};
use peer_core::km::{kaplan_meier, KmCurve};
use peer_core::nomogram::{build_nomogram, default_ranges, Term};
use peer_core::rng;
use peer_core::rules::TabularScore;
use peer_core::schema::FeatureSchema;
use peer_core::schoenfeld::{schoenfeld_ph_check, PhTest};
use peer_core::scores::{
    curb65, psi_port, smart_cop, stratify, ClinicalInputs, ConfusionSource, PublishedPeerModel, Stratum, StratumRule,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, StageExt};
use crate::io;
use crate::plot;

/// Whether test and external cohorts are imputed with forests frozen on the
/// training split, or the whole cohort is imputed before splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeScope {
    #[default]
    Split,
    Whole,
}

/// JSON run configuration. Relative paths are resolved against the
/// directory of the configuration file by [`ExperimentConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Development cohort CSV.
    pub cohort: PathBuf,
    /// Schema JSON; the built-in 52-feature pneumonia layout when absent.
    pub schema: Option<PathBuf>,
    /// Optional external validation cohort in the same layout.
    pub external_cohort: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub split_fraction: f64,
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
    pub knee_epsilon: f64,
    /// Skips cross-validation and fits at this penalty.
    pub lambda: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
    /// Replicates for hazard-ratio and concordance intervals.
    pub bootstrap_replicates: usize,
    pub calibration_groups: usize,
    /// Days.
    pub calibration_horizon: f64,
    pub calibration_replicates: usize,
    pub calibration_method: CalibrationMethod,
    /// Training-score quantile for percentile-stratified scores.
    pub percentile: f64,
    pub readout_day: f64,
    pub impute: ImputeConfig,
    pub impute_scope: ImputeScope,
    pub confusion: ConfusionSource,
    /// Extra rule files evaluated as additional scores.
    pub tabular_scores: Vec<PathBuf>,
    /// Imputation seeds for the stability study; empty skips it.
    pub stability_seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            cohort: PathBuf::new(),
            schema: None,
            external_cohort: None,
            output_dir: PathBuf::from("peer-output"),
            seed: 0,
            split_fraction: 0.7,
            lambda_grid: PUBLISHED_LAMBDA_GRID.to_vec(),
            cv_folds: 10,
            knee_epsilon: KNEE_EPSILON,
            lambda: None,
            max_iter: 10_000,
            tol: 1e-7,
            bootstrap_replicates: 1000,
            calibration_groups: 5,
            calibration_horizon: 3.0,
            calibration_replicates: 1000,
            calibration_method: CalibrationMethod::NoRefit,
            percentile: 0.9,
            readout_day: 7.0,
            impute: ImputeConfig::default(),
            impute_scope: ImputeScope::Split,
            confusion: ConfusionSource::Orientation,
            tabular_scores: Vec::new(),
            stability_seeds: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.cohort);
        resolve(&mut cfg.output_dir);
        cfg.schema.iter_mut().for_each(resolve);
        cfg.external_cohort.iter_mut().for_each(resolve);
        cfg.tabular_scores.iter_mut().for_each(resolve);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Core(peer_core::Error::Config(m)));
        if self.cohort.as_os_str().is_empty() {
            return bad("`cohort` is required".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction must lie in (0, 1), got {}", self.split_fraction));
        }
        if self.lambda.is_none() {
            descending_grid(&self.lambda_grid)?;
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lambda must be >= 0, got {l}"));
            }
        }
        if self.bootstrap_replicates < 2 || self.calibration_replicates < 2 {
            return bad("bootstrap replicate counts must be at least 2".into());
        }
        if self.calibration_groups < 2 {
            return bad("calibration_groups must be at least 2".into());
        }
        if !(self.calibration_horizon > 0.0) || !(self.readout_day > 0.0) {
            return bad("calibration_horizon and readout_day must be positive".into());
        }
        if !(self.percentile > 0.0 && self.percentile <= 1.0) {
            return bad(format!("percentile must lie in (0, 1], got {}", self.percentile));
        }
        if !self.stability_seeds.is_empty() {
            let mut s = self.stability_seeds.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != self.stability_seeds.len() {
                return bad("stability_seeds must be distinct".into());
            }
        }
        self.fit_config(0.0).validate()?;
        self.impute.validate()?;
        Ok(())
    }

    fn fit_config(&self, lambda: f64) -> CoxFitConfig {
        CoxFitConfig {
            lambda,
            max_iter: self.max_iter,
            tol: self.tol,
            ..CoxFitConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_external: Option<usize>,
    pub events_train: usize,
    pub events_test: usize,
    pub events_external: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationSummary {
    pub scope: ImputeScope,
    pub iterations_run: usize,
    pub selected_iteration: usize,
    pub convergence_trace: Vec<SweepDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelection {
    pub lambda: f64,
    /// `cross_validation` or `config`.
    pub chosen_by: String,
    pub folds: usize,
    pub epsilon: f64,
    pub fold_redraws: usize,
    pub best_mean_cindex: Option<f64>,
    /// How the CV concordance is aggregated.
    pub cv_concordance: String,
    pub rows: Vec<CvRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCurve {
    pub stratum: Stratum,
    pub n: usize,
    pub readout: Option<Readout>,
    pub curve: Option<KmCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Available {
        concordance: ConcordanceResult,
        rule: String,
        cutoff: f64,
        strata: Vec<StratumCurve>,
        secondary: Vec<SecondaryRow>,
        #[serde(skip_serializing_if = "Vec::is_empty", default)]
        warnings: Vec<String>,
    },
    Unavailable {
        reason: String,
    },
}

/// One (score, split) cell of the evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub score: String,
    pub split: String,
    #[serde(flatten)]
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCalibration {
    pub split: String,
    pub report: Option<CalibrationReport>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhCheck {
    pub tests: Vec<PhTest>,
    pub note: Option<String>,
}

/// Test-set values reported for the original eICU cohort, carried along for
/// side-by-side display; they are not recomputed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub peer_test_cindex: f64,
    pub smart_cop_test_cindex: f64,
    pub high_risk_day7_survival: f64,
    pub low_risk_day7_survival: f64,
}

pub const REFERENCE: ReferenceValues = ReferenceValues {
    peer_test_cindex: 0.77,
    smart_cop_test_cindex: 0.73,
    high_risk_day7_survival: 0.68,
    low_risk_day7_survival: 0.95,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub cohort: CohortSummary,
    pub imputation: ImputationSummary,
    pub model_selection: ModelSelection,
    pub support_size: usize,
    pub hazard_ratios: HazardRatioTable,
    pub scores: Vec<String>,
    pub splits: Vec<String>,
    pub cells: Vec<ScoreCell>,
    pub calibration: Vec<SplitCalibration>,
    pub ph_check: PhCheck,
    pub nomogram: Option<String>,
    pub stability: Option<StabilityReport>,
    pub reference: ReferenceValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything needed to reproduce a run. Contains no timestamps or output
/// locations, so identical inputs give an identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
}

pub struct RunOutcome {
    pub report: EvaluationReport,
    pub manifest: Manifest,
    pub model: CoxModel,
    pub written: Vec<PathBuf>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest(file: &str, bytes: &[u8]) -> FileDigest {
    FileDigest {
        file: file.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len(),
    }
}

fn seeds(root: u64) -> BTreeMap<String, u64> {
    ["split", "impute", "folds", "bootstrap", "concordance", "calibration"]
        .into_iter()
        .map(|n| (n.to_string(), rng::named(root, n)))
        .collect()
}

struct Split {
    name: &'static str,
    raw: SurvivalDataset,
    norm: SurvivalDataset,
}

#[derive(Clone)]
enum Scorer {
    Peer,
    PublishedPeer,
    Curb65,
    PsiPort,
    SmartCop,
    Tabular(TabularScore),
}

impl Scorer {
    fn name(&self) -> String {
        match self {
            Scorer::Peer => "peer".into(),
            Scorer::PublishedPeer => "peer_published".into(),
            Scorer::Curb65 => "curb65".into(),
            Scorer::PsiPort => "psi_port".into(),
            Scorer::SmartCop => "smart_cop".into(),
            Scorer::Tabular(t) => t.name.clone(),
        }
    }

    fn rule(&self, percentile: f64) -> StratumRule {
        match self {
            Scorer::Curb65 => StratumRule::CURB65,
            Scorer::PsiPort => StratumRule::PSI,
            _ => StratumRule::Percentile { quantile: percentile },
        }
    }

    /// Scores of every patient plus de-duplicated warnings, or why the score
    /// cannot be computed on this split.
    fn scores(&self, split: &Split, model: &CoxModel, confusion: ConfusionSource) -> Result<(Vec<f64>, Vec<String>), String> {
        if let Scorer::Peer = self {
            return model.dataset_linear_predictors(&split.norm).map(|v| (v, Vec::new())).map_err(|e| e.to_string());
        }
        let published = PublishedPeerModel::published();
        let mut warnings: BTreeMap<String, usize> = BTreeMap::new();
        let mut failures = 0usize;
        let mut first_error = None;
        let mut out = Vec::with_capacity(split.raw.len());
        for r in &split.raw.records {
            let inputs = ClinicalInputs::from_record(&split.raw.schema, &r.values, confusion);
            let scored = match self {
                Scorer::Peer => unreachable!(),
                Scorer::PublishedPeer => published.score(&inputs).map(|s| (s.log_hazard, s.warnings)),
                Scorer::Curb65 => curb65(&inputs).map(|p| (p as f64, Vec::new())),
                Scorer::PsiPort => psi_port(&inputs).map(|p| (p.points as f64, p.warnings)),
                Scorer::SmartCop => smart_cop(&inputs).map(|p| (p.points as f64, p.warnings)),
                Scorer::Tabular(t) => t.evaluate(&inputs).map(|v| (v, Vec::new())),
            };
            match scored {
                Ok((v, w)) => {
                    out.push(v);
                    for w in w {
                        *warnings.entry(w).or_default() += 1;
                    }
                }
                Err(e) => {
                    failures += 1;
                    first_error.get_or_insert_with(|| e.to_string());
                }
            }
        }
        if failures > 0 {
            return Err(format!(
                "{failures} of {} patients could not be scored; first error: {}",
                split.raw.len(),
                first_error.unwrap_or_default()
            ));
        }
        let warnings = warnings.into_iter().map(|(w, n)| format!("{w} ({n} patients)")).collect();
        Ok((out, warnings))
    }
}

/// Loads the inputs named by `cfg`, runs the protocol and writes the
/// artifacts into `cfg.output_dir`. Nothing is written unless every stage
/// succeeds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let schema = match &cfg.schema {
        Some(p) => io::load_schema(p).stage("load")?,
        None => FeatureSchema::pneumonia(),
    };
    let cohort_bytes = fs::read(&cfg.cohort).map_err(|e| Error::io(&cfg.cohort, e)).stage("load")?;
    let cohort = io::read_cohort(&cohort_bytes[..], &schema, &cfg.cohort).stage("load")?;
    let mut inputs = vec![digest(&file_name(&cfg.cohort), &cohort_bytes)];
    let external = match &cfg.external_cohort {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e)).stage("load")?;
            inputs.push(digest(&file_name(p), &bytes));
            Some(io::read_cohort(&bytes[..], &schema, p).stage("load")?)
        }
        None => None,
    };
    let mut tabular = Vec::new();
    for p in &cfg.tabular_scores {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e)).stage("load")?;
        inputs.push(digest(&file_name(p), &bytes));
        tabular.push(io::load_tabular_score(p).stage("load")?);
    }
    if let Some(p) = &cfg.schema {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e)).stage("load")?;
        inputs.push(digest(&file_name(p), &bytes));
    }
    let (report, model, artifacts) = evaluate_cohort(cfg, &cohort, external.as_ref(), &tabular)?;
    let manifest = build_manifest(cfg, inputs, &artifacts);
    let mut all = artifacts;
    all.push((MANIFEST_FILE.to_string(), io::to_json(&manifest).into_bytes()));
    let written = write_all(&cfg.output_dir, &all).stage("write")?;
    Ok(RunOutcome {
        report,
        manifest,
        model,
        written,
    })
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn build_manifest(cfg: &ExperimentConfig, inputs: Vec<FileDigest>, artifacts: &[(String, Vec<u8>)]) -> Manifest {
    // paths and the output location are recorded by content hash only
    let mut value = serde_json::to_value(cfg).expect("config serializes");
    if let Some(obj) = value.as_object_mut() {
        obj.remove("output_dir");
        for key in ["cohort", "schema", "external_cohort"] {
            if let Some(serde_json::Value::String(s)) = obj.get(key).cloned() {
                obj.insert(key.into(), serde_json::Value::String(file_name(Path::new(&s))));
            }
        }
        if let Some(serde_json::Value::Array(list)) = obj.get("tabular_scores").cloned() {
            let names = list
                .iter()
                .filter_map(|v| v.as_str())
                .map(|s| serde_json::Value::String(file_name(Path::new(s))))
                .collect();
            obj.insert("tabular_scores".into(), serde_json::Value::Array(names));
        }
    }
    let config_sha256 = sha256_hex(value.to_string().as_bytes());
    Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256,
        config: value,
        seeds: seeds(cfg.seed),
        inputs,
        artifacts: artifacts.iter().map(|(f, b)| digest(f, b)).collect(),
    }
}

fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(Error::io(&path, e));
        }
        written.push(path);
    }
    Ok(written)
}

/// The protocol on already loaded cohorts. Returns the report, the fitted
/// model and the artifacts as `(file name, bytes)`, manifest excluded.
pub fn evaluate_cohort(
    cfg: &ExperimentConfig,
    cohort: &SurvivalDataset,
    external: Option<&SurvivalDataset>,
    tabular: &[TabularScore],
) -> Result<(EvaluationReport, CoxModel, Vec<(String, Vec<u8>)>)> {
    let seeds = seeds(cfg.seed);
    let split = cohort.split(cfg.split_fraction, seeds["split"]).stage("split")?;

    // imputation
    let icfg = ImputeConfig {
        seed: seeds["impute"],
        ..cfg.impute
    };
    let (train_raw, test_raw, external_raw, imputation) = match cfg.impute_scope {
        ImputeScope::Split => {
            let train = cohort.subset(&split.train_index);
            let (imp, model) = impute_with_model(&train, &icfg).stage("impute")?;
            let test = model.apply(&cohort.subset(&split.test_index)).stage("impute")?;
            let ext = external.map(|e| model.apply(e)).transpose().stage("impute")?;
            (imp.data.clone(), test, ext, imp)
        }
        ImputeScope::Whole => {
            let (imp, model) = impute_with_model(cohort, &icfg).stage("impute")?;
            let ext = external.map(|e| model.apply(e)).transpose().stage("impute")?;
            (imp.data.subset(&split.train_index), imp.data.subset(&split.test_index), ext, imp)
        }
    };
    let imputation = ImputationSummary {
        scope: cfg.impute_scope,
        iterations_run: imputation.iterations_run,
        selected_iteration: imputation.selected_iteration,
        convergence_trace: imputation.convergence_trace,
    };

    // normalization with training statistics only
    let train_norm = train_raw.normalize().stage("normalize")?;
    let stats = train_norm.norm_stats.clone().expect("normalized");
    let test_norm = test_raw.apply_normalization(&stats).stage("normalize")?;
    let external_norm = external_raw
        .as_ref()
        .map(|e| e.apply_normalization(&stats))
        .transpose()
        .stage("normalize")?;

    // model selection
    let train_data = train_norm.survival_data(0).stage("select")?;
    let model_selection = match cfg.lambda {
        Some(lambda) => ModelSelection {
            lambda,
            chosen_by: "config".into(),
            folds: 0,
            epsilon: cfg.knee_epsilon,
            fold_redraws: 0,
            best_mean_cindex: None,
            cv_concordance: String::new(),
            rows: Vec::new(),
        },
        None => {
            let cv = cv_grid_search(
                &train_data,
                &cfg.lambda_grid,
                cfg.cv_folds,
                seeds["folds"],
                cfg.knee_epsilon,
                &cfg.fit_config(0.0),
            )
            .stage("select")?;
            ModelSelection {
                lambda: cv.chosen_lambda,
                chosen_by: "cross_validation".into(),
                folds: cv.folds,
                epsilon: cv.epsilon,
                fold_redraws: cv.fold_redraws,
                best_mean_cindex: Some(cv.best_mean_cindex),
                cv_concordance: "mean of per-fold held-out c-indices".into(),
                rows: cv.rows,
            }
        }
    };
    let fit_cfg = cfg.fit_config(model_selection.lambda);
    let model = cox::fit(&train_norm, &fit_cfg).stage("fit")?;
    let hazard_ratios = bootstrap_hr_ci(&train_norm, &fit_cfg, cfg.bootstrap_replicates, seeds["bootstrap"]).stage("fit")?;

    let mut splits = vec![
        Split {
            name: "train",
            raw: train_raw,
            norm: train_norm,
        },
        Split {
            name: "test",
            raw: test_raw,
            norm: test_norm,
        },
    ];
    if let (Some(raw), Some(norm)) = (external_raw, external_norm) {
        splits.push(Split {
            name: "external",
            raw,
            norm,
        });
    }

    let cohort_summary = CohortSummary {
        n: cohort.len(),
        n_train: splits[0].raw.len(),
        n_test: splits[1].raw.len(),
        n_external: splits.get(2).map(|s| s.raw.len()),
        events_train: events(&splits[0].raw),
        events_test: events(&splits[1].raw),
        events_external: splits.get(2).map(|s| events(&s.raw)),
    };

    // score grid
    let mut scorers = vec![Scorer::Peer, Scorer::PublishedPeer, Scorer::Curb65, Scorer::PsiPort, Scorer::SmartCop];
    scorers.extend(tabular.iter().cloned().map(Scorer::Tabular));
    let mut names: Vec<String> = scorers.iter().map(Scorer::name).collect();
    {
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(peer_core::Error::Config("score names must be distinct".into())).stage("evaluate");
        }
    }
    let mut cells = Vec::new();
    let mut artifacts: Vec<(String, Vec<u8>)> = Vec::new();
    for scorer in &scorers {
        let name = scorer.name();
        let per_split: Vec<Result<(Vec<f64>, Vec<String>), String>> =
            splits.iter().map(|s| scorer.scores(s, &model, cfg.confusion)).collect();
        let training = per_split[0].as_ref().ok().map(|(v, _)| v.clone());
        let rule = scorer.rule(cfg.percentile);
        for (s, scored) in splits.iter().zip(per_split) {
            let status = match scored {
                Err(reason) => CellStatus::Unavailable { reason },
                Ok((values, warnings)) => {
                    let stream = rng::named(seeds["concordance"], &format!("{name}/{}", s.name));
                    evaluate_cell(&s.raw, &values, warnings, &rule, training.as_deref(), cfg, stream)
                }
            };
            if let (Scorer::Peer, CellStatus::Available { strata, secondary, .. }) = (scorer, &status) {
                let curves: Vec<(String, &KmCurve)> = strata
                    .iter()
                    .filter_map(|c| c.curve.as_ref().map(|k| (format!("{:?} risk (n={})", c.stratum, c.n), k)))
                    .collect();
                let labelled: Vec<(&str, &KmCurve)> = curves.iter().map(|(l, k)| (l.as_str(), *k)).collect();
                artifacts.push((
                    format!("km_{}.svg", s.name),
                    plot::km_svg(&format!("PEER risk strata, {} split", s.name), &labelled).into_bytes(),
                ));
                artifacts.push((format!("km_{}.csv", s.name), km_csv(strata).into_bytes()));
                artifacts.push((
                    format!("secondary_{}.svg", s.name),
                    plot::secondary_svg(&format!("Secondary outcomes by PEER stratum, {} split", s.name), secondary)
                        .into_bytes(),
                ));
            }
            cells.push(ScoreCell {
                score: name.clone(),
                split: s.name.to_string(),
                status,
            });
        }
    }

    // calibration of the fitted model
    let mut calibration_sections = Vec::new();
    for s in &splits {
        let ccfg = CalibrationConfig {
            groups: cfg.calibration_groups,
            horizon: cfg.calibration_horizon,
            replicates: cfg.calibration_replicates,
            seed: rng::named(seeds["calibration"], s.name),
            method: cfg.calibration_method,
        };
        let section = match calibration(&model, &s.norm, &ccfg) {
            Ok(rep) => {
                artifacts.push((
                    format!("calibration_{}.svg", s.name),
                    plot::calibration_svg(&format!("Calibration, {} split", s.name), &rep).into_bytes(),
                ));
                artifacts.push((format!("calibration_{}.csv", s.name), calibration_csv(&rep).into_bytes()));
                SplitCalibration {
                    split: s.name.into(),
                    report: Some(rep),
                    note: None,
                }
            }
            Err(e @ peer_core::Error::Convergence { .. }) => return Err(e).stage("calibrate"),
            Err(e) => SplitCalibration {
                split: s.name.into(),
                report: None,
                note: Some(e.to_string()),
            },
        };
        calibration_sections.push(section);
    }

    let ph_check = match schoenfeld_ph_check(&model, &splits[0].norm) {
        Ok(tests) => PhCheck { tests, note: None },
        Err(e) => PhCheck {
            tests: Vec::new(),
            note: Some(e.to_string()),
        },
    };

    let nomogram_note = match nomogram(&model, &splits[0].raw, cfg.readout_day) {
        Ok((svg, text)) => {
            artifacts.push(("nomogram.svg".into(), svg.into_bytes()));
            artifacts.push(("nomogram.txt".into(), text.into_bytes()));
            None
        }
        Err(e) => Some(e.to_string()),
    };

    let stability = if cfg.stability_seeds.is_empty() {
        None
    } else {
        let train_missing = match cfg.impute_scope {
            ImputeScope::Split | ImputeScope::Whole => cohort.subset(&split.train_index),
        };
        Some(stability_with_lambda(&train_missing, &cfg.impute, &cfg.stability_seeds, &fit_cfg).stage("stability")?)
    };

    names.dedup();
    let report = EvaluationReport {
        cohort: cohort_summary,
        imputation,
        support_size: model.support().len(),
        model_selection,
        hazard_ratios,
        scores: names,
        splits: splits.iter().map(|s| s.name.to_string()).collect(),
        cells,
        calibration: calibration_sections,
        ph_check,
        nomogram: nomogram_note,
        stability,
        reference: REFERENCE,
    };

    let mut head = vec![
        (REPORT_FILE.to_string(), io::to_json(&report).into_bytes()),
        ("report.csv".to_string(), report_csv(&report).into_bytes()),
        ("model.json".to_string(), model_json(&model).into_bytes()),
        ("hazard_ratios.csv".to_string(), hazard_csv(&report.hazard_ratios).into_bytes()),
    ];
    if !report.model_selection.rows.is_empty() {
        head.push(("cv.csv".to_string(), cv_csv(&report.model_selection.rows).into_bytes()));
    }
    if let Some(st) = &report.stability {
        head.push(("stability.json".to_string(), io::to_json(st).into_bytes()));
    }
    head.extend(artifacts);
    Ok((report, model, head))
}

/// Stability study whose downstream fit is the Lasso-Cox model at `cfg`'s
/// penalty on the normalized imputed cohort.
pub fn stability_with_lambda(
    ds: &SurvivalDataset,
    impute: &ImputeConfig,
    seeds: &[u64],
    cfg: &CoxFitConfig,
) -> Result<StabilityReport> {
    Ok(stability_study(ds, impute, seeds, |imp| {
        let z = imp.normalize()?;
        let data = z.survival_data(0)?;
        Ok(cox::fit_data(&data, cfg, None)?.beta)
    })?)
}

fn events(ds: &SurvivalDataset) -> usize {
    ds.records.iter().filter(|r| r.outcomes[0].event).count()
}

fn evaluate_cell(
    ds: &SurvivalDataset,
    values: &[f64],
    warnings: Vec<String>,
    rule: &StratumRule,
    training: Option<&[f64]>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> CellStatus {
    let time: Vec<f64> = ds.records.iter().map(|r| r.outcomes[0].time).collect();
    let event: Vec<bool> = ds.records.iter().map(|r| r.outcomes[0].event).collect();
    let concordance = match concordance_ci(values, &time, &event, cfg.bootstrap_replicates, seed) {
        Ok(c) => c,
        Err(e) => return CellStatus::Unavailable { reason: e.to_string() },
    };
    let cutoff = match rule.cutoff(training) {
        Ok(c) => c,
        Err(e) => return CellStatus::Unavailable { reason: e.to_string() },
    };
    let labels = stratify(values, &StratumRule::AtLeast { cutoff }, None).expect("fixed cutoff");
    let strata = [Stratum::High, Stratum::Low]
        .into_iter()
        .map(|st| {
            let members: Vec<usize> = (0..ds.len()).filter(|&i| labels[i] == st).collect();
            let curve = (!members.is_empty()).then(|| {
                let t: Vec<f64> = members.iter().map(|&i| time[i]).collect();
                let e: Vec<bool> = members.iter().map(|&i| event[i]).collect();
                kaplan_meier(&t, &e).expect("nonempty stratum")
            });
            StratumCurve {
                stratum: st,
                n: members.len(),
                readout: curve.as_ref().map(|c| survival_readout(c, cfg.readout_day)),
                curve,
            }
        })
        .collect();
    let secondary = match secondary_outcomes(ds, &labels) {
        Ok(rows) => rows,
        Err(e) => return CellStatus::Unavailable { reason: e.to_string() },
    };
    CellStatus::Available {
        concordance,
        rule: rule.describe(),
        cutoff,
        strata,
        secondary,
        warnings,
    }
}

fn nomogram(model: &CoxModel, train_raw: &SurvivalDataset, day: f64) -> peer_core::Result<(String, String)> {
    let terms = Term::from_model(model);
    let mut ranges = default_ranges(train_raw, &terms)?;
    for (t, r) in terms.iter().zip(ranges.iter_mut()) {
        if r.0 >= r.1 {
            // binary or near-constant column: fall back to the observed extremes
            let j = train_raw.schema.feature_index(&t.feature).expect("model feature");
            let obs = train_raw.records.iter().filter_map(|x| x.values[j]);
            let (lo, hi) = obs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            *r = (lo, hi);
        }
    }
    let spec = build_nomogram(&terms, &ranges)?.with_survival(day, model.baseline_cumhaz.at(day));
    Ok((spec.render("svg")?, spec.render("text")?))
}

fn model_json(model: &CoxModel) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        format: &'static str,
        #[serde(flatten)]
        model: &'a CoxModel,
    }
    io::to_json(&Doc {
        format: io::MODEL_FORMAT,
        model,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

fn report_csv(r: &EvaluationReport) -> String {
    let mut out = String::from(
        "score,split,status,cindex,ci_low,ci_high,n_comparable,cutoff,n_high,n_low,high_survival,low_survival,high_vasopressor,low_vasopressor,high_ventilator,low_ventilator,reason\n",
    );
    for c in &r.cells {
        let row = match &c.status {
            CellStatus::Available {
                concordance,
                cutoff,
                strata,
                secondary,
                ..
            } => {
                let st = |s: Stratum| strata.iter().find(|x| x.stratum == s).expect("both strata");
                let sec = |s: Stratum| secondary.iter().find(|x| x.stratum == s).expect("both strata");
                let (h, l) = (st(Stratum::High), st(Stratum::Low));
                format!(
                    "available,{},{},{},{},{},{},{},{},{},{},{},{},{},",
                    concordance.cindex,
                    concordance.ci_low,
                    concordance.ci_high,
                    concordance.n_comparable,
                    cutoff,
                    h.n,
                    l.n,
                    opt(h.readout.map(|x| x.survival)),
                    opt(l.readout.map(|x| x.survival)),
                    opt(sec(Stratum::High).vasopressor),
                    opt(sec(Stratum::Low).vasopressor),
                    opt(sec(Stratum::High).ventilator),
                    opt(sec(Stratum::Low).ventilator),
                )
            }
            CellStatus::Unavailable { reason } => format!("unavailable,,,,,,,,,,,,,,\"{}\"", reason.replace('"', "'")),
        };
        out.push_str(&format!("{},{},{row}\n", c.score, c.split));
    }
    out
}

fn km_csv(strata: &[StratumCurve]) -> String {
    let mut out = String::from("stratum,time,surv,ci_low,ci_high,n_risk,n_event\n");
    for s in strata {
        if let Some(c) = &s.curve {
            for k in 0..c.times.len() {
                out.push_str(&format!(
                    "{:?},{},{},{},{},{},{}\n",
                    s.stratum, c.times[k], c.surv[k], c.ci_low[k], c.ci_high[k], c.n_risk[k], c.n_event[k]
                ));
            }
        }
    }
    out
}

fn calibration_csv(rep: &CalibrationReport) -> String {
    let mut out = String::from("group,n,lp_min,lp_max,predicted,observed,ci_low,ci_high,n_events,n_at_risk,flag\n");
    for g in &rep.groups {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            g.group,
            g.n,
            g.lp_min,
            g.lp_max,
            g.predicted,
            g.observed,
            g.ci_low,
            g.ci_high,
            g.n_events,
            g.n_at_risk,
            g.flag.as_deref().unwrap_or("")
        ));
    }
    out
}

fn hazard_csv(t: &HazardRatioTable) -> String {
    let mut out = String::from("feature,beta,hr,ci_low,ci_high\n");
    for r in &t.rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.feature, r.beta, r.hr, r.ci_low, r.ci_high));
    }
    out
}

fn cv_csv(rows: &[CvRow]) -> String {
    let mut out = String::from("lambda,mean_cindex,mean_support\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.lambda, r.mean_cindex, r.mean_support));
    }
    out
}
