//! MissForest imputation and the multi-seed stability study.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::forest::{Forest, ForestParams, Task};
use crate::math;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Mtry {
    Fixed(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Mtry {
    pub const AUTO: Mtry = Mtry::Auto(AutoTag::Auto);

    /// `floor(sqrt(p))` for classification, `floor(p / 3)` for regression.
    pub fn resolve(self, p: usize, task: Task) -> usize {
        match self {
            Mtry::Fixed(m) => m.min(p),
            Mtry::Auto(_) => match task {
                Task::Classification => math::floor(math::sqrt(p as f64)) as usize,
                Task::Regression => p / 3,
            },
        }
        .max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeConfig {
    pub n_trees: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub min_leaf: usize,
    pub mtry: Mtry,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        ImputeConfig {
            n_trees: 100,
            max_iterations: 10,
            seed: 0,
            min_leaf: 5,
            mtry: Mtry::AUTO,
        }
    }
}

impl ImputeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be at least 1".into()));
        }
        if self.mtry == Mtry::Fixed(0) {
            return Err(Error::Config("mtry must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepDelta {
    pub iteration: usize,
    /// `sum (new - old)^2 / sum new^2` over imputed continuous entries.
    pub continuous: Option<f64>,
    /// Fraction of imputed categorical entries that changed.
    pub categorical: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputedDataset {
    pub data: SurvivalDataset,
    pub iterations_run: usize,
    /// The sweep whose values were returned (the one before the first
    /// increase, or the last).
    pub selected_iteration: usize,
    pub convergence_trace: Vec<SweepDelta>,
}

/// The forests of the selected sweep, frozen so that another cohort (a test
/// split) can be imputed without refitting.
#[derive(Debug, Clone)]
pub struct ImputationModel {
    initial_fill: Vec<f64>,
    order: Vec<usize>,
    forests: Vec<Forest>,
    passes: usize,
}

struct Matrix {
    n: usize,
    p: usize,
    /// Row-major values with missing entries filled.
    x: Vec<f64>,
    /// Row indices missing in each column.
    missing: Vec<Vec<usize>>,
}

impl Matrix {
    fn without_column(&self, j: usize, rows: impl Iterator<Item = usize>) -> Vec<f64> {
        let mut out = Vec::new();
        for i in rows {
            let row = &self.x[i * self.p..(i + 1) * self.p];
            out.extend_from_slice(&row[..j]);
            out.extend_from_slice(&row[j + 1..]);
        }
        out
    }
}

fn categorical_columns(ds: &SurvivalDataset) -> Vec<bool> {
    (0..ds.n_features())
        .map(|j| {
            ds.schema.features[j].is_binary()
                || ds
                    .records
                    .iter()
                    .all(|r| r.values[j].is_none_or(|v| v == 0.0 || v == 1.0))
        })
        .collect()
}

fn initial_fill(ds: &SurvivalDataset, categorical: &[bool]) -> Result<Vec<f64>> {
    (0..ds.n_features())
        .map(|j| {
            let obs: Vec<f64> = ds.records.iter().filter_map(|r| r.values[j]).collect();
            if obs.is_empty() {
                return Err(Error::Imputation(format!(
                    "column `{}` has no observed values",
                    ds.schema.features[j].name
                )));
            }
            Ok(if categorical[j] {
                let ones = obs.iter().filter(|&&v| v == 1.0).count();
                (2 * ones > obs.len()) as u8 as f64
            } else {
                math::mean(&obs)
            })
        })
        .collect()
}

fn fill_matrix(ds: &SurvivalDataset, fill: &[f64]) -> Matrix {
    let (n, p) = (ds.len(), ds.n_features());
    let mut x = Vec::with_capacity(n * p);
    let mut missing = vec![Vec::new(); p];
    for (i, r) in ds.records.iter().enumerate() {
        for (j, v) in r.values.iter().enumerate() {
            match v {
                Some(v) => x.push(*v),
                None => {
                    x.push(fill[j]);
                    missing[j].push(i);
                }
            }
        }
    }
    Matrix { n, p, x, missing }
}

fn write_back(ds: &SurvivalDataset, m: &Matrix) -> SurvivalDataset {
    let mut out = ds.clone();
    for (j, rows) in m.missing.iter().enumerate() {
        for &i in rows {
            out.records[i].values[j] = Some(m.x[i * m.p + j]);
        }
    }
    out
}

fn task_of(categorical: bool) -> Task {
    if categorical {
        Task::Classification
    } else {
        Task::Regression
    }
}

/// One sweep over `order`, updating `m` in place. Returns the fitted forests.
fn sweep(m: &mut Matrix, order: &[usize], categorical: &[bool], cfg: &ImputeConfig, seed: u64) -> Vec<Forest> {
    let mut forests = Vec::with_capacity(order.len());
    for &j in order {
        let miss = &m.missing[j];
        let mut is_missing = vec![false; m.n];
        for &i in miss {
            is_missing[i] = true;
        }
        let observed: Vec<usize> = (0..m.n).filter(|&i| !is_missing[i]).collect();
        let task = task_of(categorical[j]);
        let params = ForestParams {
            n_trees: cfg.n_trees,
            mtry: cfg.mtry.resolve(m.p - 1, task),
            min_leaf: cfg.min_leaf,
        };
        let xtrain = m.without_column(j, observed.iter().copied());
        let y: Vec<f64> = observed.iter().map(|&i| m.x[i * m.p + j]).collect();
        let forest = Forest::fit(&xtrain, observed.len(), m.p - 1, &y, task, params, rng::substream(seed, j as u64));
        let xmiss = m.without_column(j, miss.iter().copied());
        let preds: Vec<f64> = (0..miss.len())
            .map(|k| forest.predict(&xmiss[k * (m.p - 1)..(k + 1) * (m.p - 1)]))
            .collect();
        for (&i, v) in miss.iter().zip(preds) {
            m.x[i * m.p + j] = v;
        }
        forests.push(forest);
    }
    forests
}

fn delta(old: &Matrix, new: &Matrix, categorical: &[bool]) -> (Option<f64>, Option<f64>) {
    let (mut num, mut den, mut changed, mut n_cat, mut n_cont) = (0.0, 0.0, 0usize, 0usize, 0usize);
    for (j, rows) in new.missing.iter().enumerate() {
        for &i in rows {
            let (a, b) = (old.x[i * new.p + j], new.x[i * new.p + j]);
            if categorical[j] {
                n_cat += 1;
                changed += (a != b) as usize;
            } else {
                n_cont += 1;
                num += (b - a) * (b - a);
                den += b * b;
            }
        }
    }
    let cont = (n_cont > 0).then(|| if num == 0.0 { 0.0 } else { num / den });
    let cat = (n_cat > 0).then(|| changed as f64 / n_cat as f64);
    (cont, cat)
}

fn increased(new: Option<f64>, old: Option<f64>) -> bool {
    match (new, old) {
        (Some(a), Some(b)) => a > b,
        _ => true,
    }
}

/// Iteratively imputes every missing covariate. Outcome columns are never
/// used as predictors.
pub fn impute(ds: &SurvivalDataset, cfg: &ImputeConfig) -> Result<ImputedDataset> {
    impute_with_model(ds, cfg).map(|(d, _)| d)
}

pub fn impute_with_model(ds: &SurvivalDataset, cfg: &ImputeConfig) -> Result<(ImputedDataset, ImputationModel)> {
    cfg.validate()?;
    let categorical = categorical_columns(ds);
    let p = ds.n_features();
    if ds.is_complete() {
        let fill = if ds.is_empty() { vec![0.0; p] } else { initial_fill(ds, &categorical)? };
        let model = ImputationModel {
            initial_fill: fill,
            order: Vec::new(),
            forests: Vec::new(),
            passes: 0,
        };
        let out = ImputedDataset {
            data: ds.clone(),
            iterations_run: 0,
            selected_iteration: 0,
            convergence_trace: Vec::new(),
        };
        return Ok((out, model));
    }
    if ds.len() < 2 {
        return Err(Error::Imputation("need at least two records".into()));
    }
    if p < 2 {
        return Err(Error::Imputation("need at least two features".into()));
    }
    let fill = initial_fill(ds, &categorical)?;
    let mut current = fill_matrix(ds, &fill);
    // ascending missingness, ties by schema order (stable sort)
    let mut order: Vec<usize> = (0..p).filter(|&j| !current.missing[j].is_empty()).collect();
    order.sort_by_key(|&j| current.missing[j].len());

    let mut trace: Vec<SweepDelta> = Vec::new();
    let mut forests: Vec<Forest> = Vec::new();
    let mut selected = 0;
    for k in 1..=cfg.max_iterations {
        let mut next = Matrix {
            n: current.n,
            p: current.p,
            x: current.x.clone(),
            missing: current.missing.clone(),
        };
        let fitted = sweep(&mut next, &order, &categorical, cfg, rng::substream(cfg.seed, k as u64));
        let (c, g) = delta(&current, &next, &categorical);
        trace.push(SweepDelta {
            iteration: k,
            continuous: c,
            categorical: g,
        });
        if k >= 2 {
            let last = trace[trace.len() - 2];
            if increased(c, last.continuous) && increased(g, last.categorical) {
                // keep the sweep before the increase, whose matrix is `current`
                selected = k - 1;
                break;
            }
        }
        current = next;
        forests = fitted;
        selected = k;
        if c.unwrap_or(0.0) == 0.0 && g.unwrap_or(0.0) == 0.0 {
            break;
        }
    }
    let model = ImputationModel {
        initial_fill: fill,
        order,
        forests,
        passes: selected,
    };
    let out = ImputedDataset {
        data: write_back(ds, &current),
        iterations_run: trace.len(),
        selected_iteration: selected,
        convergence_trace: trace,
    };
    Ok((out, model))
}

impl ImputationModel {
    /// Imputes `ds` with the frozen forests: training-set mean/mode fill,
    /// then as many prediction passes as the training run kept.
    pub fn apply(&self, ds: &SurvivalDataset) -> Result<SurvivalDataset> {
        if ds.n_features() != self.initial_fill.len() {
            return Err(Error::Imputation(format!(
                "cohort has {} features, imputation model expects {}",
                ds.n_features(),
                self.initial_fill.len()
            )));
        }
        let mut m = fill_matrix(ds, &self.initial_fill);
        if m.missing.iter().any(|r| !r.is_empty()) && self.passes == 0 {
            // nothing was learned: mean/mode fill only
            return Ok(write_back(ds, &m));
        }
        for _ in 0..self.passes {
            for (&j, forest) in self.order.iter().zip(&self.forests) {
                let rows = m.missing[j].clone();
                let xs = m.without_column(j, rows.iter().copied());
                for (k, &i) in rows.iter().enumerate() {
                    m.x[i * m.p + j] = forest.predict(&xs[k * (m.p - 1)..(k + 1) * (m.p - 1)]);
                }
            }
        }
        Ok(write_back(ds, &m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFit {
    pub seed: u64,
    pub selected: Vec<String>,
    /// Full coefficient vector in schema order.
    pub coefficients: Vec<f64>,
    pub iterations_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub feature_names: Vec<String>,
    pub per_seed: Vec<SeedFit>,
    /// Seeds selecting each feature, schema order, features never selected
    /// omitted.
    pub selection_counts: Vec<(String, usize)>,
    pub modal_support_size: usize,
    /// One line per seed whose support size differs from the mode.
    pub deviations: Vec<String>,
}

fn count_words(k: usize) -> String {
    match k {
        1 => "one".into(),
        2 => "two".into(),
        3 => "three".into(),
        _ => k.to_string(),
    }
}

/// Re-runs the imputation under each seed and records the downstream fit's
/// support. `fit` receives the imputed dataset and returns coefficients in
/// schema order.
pub fn stability_study<F>(ds: &SurvivalDataset, cfg: &ImputeConfig, seeds: &[u64], fit: F) -> Result<StabilityReport>
where
    F: Fn(&SurvivalDataset) -> Result<Vec<f64>>,
{
    if seeds.is_empty() {
        return Err(Error::Argument("no seeds given".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Argument("stability seeds must be distinct".into()));
    }
    let names = ds.schema.feature_names();
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let annotate = |e: Error| Error::Seeded {
            seed,
            source: alloc::boxed::Box::new(e),
        };
        let imputed = impute(ds, &ImputeConfig { seed, ..*cfg }).map_err(annotate)?;
        let beta = fit(&imputed.data).map_err(annotate)?;
        if beta.len() != names.len() {
            return Err(annotate(Error::Validation(format!(
                "fit returned {} coefficients for {} features",
                beta.len(),
                names.len()
            ))));
        }
        per_seed.push(SeedFit {
            seed,
            selected: names
                .iter()
                .zip(&beta)
                .filter(|(_, b)| **b != 0.0)
                .map(|(n, _)| n.clone())
                .collect(),
            coefficients: beta,
            iterations_run: imputed.iterations_run,
        });
    }
    let selection_counts: Vec<(String, usize)> = names
        .iter()
        .map(|n| (n.clone(), per_seed.iter().filter(|s| s.selected.contains(n)).count()))
        .filter(|(_, c)| *c > 0)
        .collect();
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &per_seed {
        *sizes.entry(s.selected.len()).or_default() += 1;
    }
    // most frequent size, ties toward the larger support
    let modal = sizes
        .iter()
        .max_by_key(|(size, count)| (**count, **size))
        .map(|(s, _)| *s)
        .unwrap_or(0);
    let deviations = per_seed
        .iter()
        .filter(|s| s.selected.len() != modal)
        .map(|s| {
            let k = s.selected.len();
            let (diff, word) = if k < modal { (modal - k, "less") } else { (k - modal, "more") };
            let plural = if diff == 1 { "feature" } else { "features" };
            format!("seed {}: selected {} {word} {plural} ({k} vs {modal})", s.seed, count_words(diff))
        })
        .collect();
    Ok(StabilityReport {
        feature_names: names,
        per_seed,
        selection_counts,
        modal_support_size: modal,
        deviations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{OutcomeValue, PatientRecord};
    use crate::schema::{FeatureDef, FeatureKind, FeatureSchema};

    fn toy(values: Vec<Vec<Option<f64>>>, kinds: &[FeatureKind]) -> SurvivalDataset {
        let features = kinds
            .iter()
            .enumerate()
            .map(|(j, k)| FeatureDef {
                name: format!("x{j}"),
                kind: *k,
                unit: String::new(),
            })
            .collect();
        let schema = FeatureSchema::new(features, FeatureSchema::standard_outcomes()).unwrap();
        let records = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| PatientRecord {
                id: format!("p{i}"),
                values: v,
                outcomes: vec![OutcomeValue { time: 1.0, event: false }; 3],
            })
            .collect();
        SurvivalDataset::new(schema, records).unwrap()
    }

    #[test]
    fn complete_data_is_unchanged() {
        let ds = toy(vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(4.0)]], &[FeatureKind::Continuous; 2]);
        let out = impute(&ds, &ImputeConfig::default()).unwrap();
        assert_eq!(out.iterations_run, 0);
        assert!(out.convergence_trace.is_empty());
        assert_eq!(out.data, ds);
    }

    #[test]
    fn fully_missing_column_is_named() {
        let ds = toy(vec![vec![Some(1.0), None], vec![Some(3.0), None]], &[FeatureKind::Continuous; 2]);
        match impute(&ds, &ImputeConfig::default()) {
            Err(Error::Imputation(m)) => assert!(m.contains("x1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_trees_is_config_error() {
        let ds = toy(vec![vec![Some(1.0), None], vec![Some(3.0), Some(1.0)]], &[FeatureKind::Continuous; 2]);
        let cfg = ImputeConfig {
            n_trees: 0,
            ..Default::default()
        };
        assert!(matches!(impute(&ds, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn mtry_defaults() {
        assert_eq!(Mtry::AUTO.resolve(51, Task::Classification), 7);
        assert_eq!(Mtry::AUTO.resolve(51, Task::Regression), 17);
        assert_eq!(Mtry::AUTO.resolve(2, Task::Regression), 1);
        assert_eq!(Mtry::Fixed(99).resolve(5, Task::Regression), 5);
    }

    #[test]
    fn binary_column_gets_binary_values() {
        let rows: Vec<Vec<Option<f64>>> = (0..40)
            .map(|i| {
                let b = (i % 2) as f64;
                let miss = i % 7 == 3;
                vec![Some(b * 10.0 + (i % 3) as f64), if miss { None } else { Some(b) }]
            })
            .collect();
        let ds = toy(rows, &[FeatureKind::Continuous, FeatureKind::Binary]);
        let out = impute(&ds, &ImputeConfig { n_trees: 10, ..Default::default() }).unwrap();
        for (a, b) in ds.records.iter().zip(&out.data.records) {
            let v = b.values[1].unwrap();
            assert!(v == 0.0 || v == 1.0);
            if let Some(orig) = a.values[1] {
                assert_eq!(orig.to_bits(), v.to_bits());
            } else {
                assert_eq!(v, a.values[0].map(|x| (x >= 10.0) as u8 as f64).unwrap());
            }
        }
        assert_eq!(out.convergence_trace.len(), out.iterations_run);
    }

    #[test]
    fn stability_bookkeeping() {
        let ds = toy(vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(4.0)]], &[FeatureKind::Continuous; 2]);
        let seeds: Vec<u64> = (0..10).collect();
        let rep = stability_study(&ds, &ImputeConfig::default(), &seeds, |_| Ok(vec![0.5, 0.0])).unwrap();
        assert_eq!(rep.per_seed.len(), 10);
        assert!(rep.per_seed.iter().all(|s| s.coefficients == vec![0.5, 0.0]));
        assert_eq!(rep.selection_counts, vec![("x0".to_string(), 10)]);
        assert!(rep.deviations.is_empty());
        assert!(stability_study(&ds, &ImputeConfig::default(), &[1, 1], |_| Ok(vec![0.0; 2])).is_err());
    }
}
