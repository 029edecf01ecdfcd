//! Patient records, cohort datasets, normalization and train/test splits.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::schema::FeatureSchema;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeValue {
    /// Days to event or censoring.
    pub time: f64,
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    /// One entry per schema feature; `None` marks a missing value.
    pub values: Vec<Option<f64>>,
    /// One entry per schema outcome.
    pub outcomes: Vec<OutcomeValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Standardization {
    pub const IDENTITY: Standardization = Standardization { mean: 0.0, std: 1.0 };

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    #[inline]
    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-feature standardization; `None` for binary features, which are left
/// on their 0/1 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub features: Vec<Option<Standardization>>,
}

impl NormStats {
    pub fn get(&self, j: usize) -> Standardization {
        self.features[j].unwrap_or(Standardization::IDENTITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    pub schema: FeatureSchema,
    pub records: Vec<PatientRecord>,
    pub norm_stats: Option<NormStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
    pub fraction: f64,
    /// Record positions of each side, in cohort order.
    pub train_index: Vec<usize>,
    pub test_index: Vec<usize>,
}

impl SurvivalDataset {
    pub fn new(schema: FeatureSchema, records: Vec<PatientRecord>) -> Result<Self> {
        schema.validate()?;
        let mut ids = BTreeSet::new();
        for (row, r) in records.iter().enumerate() {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate patient id `{}`", r.id)));
            }
            validate_record(&schema, r).map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("row {}: {m}", row + 1)),
                other => other,
            })?;
        }
        Ok(SurvivalDataset {
            schema,
            records,
            norm_stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.values[j]).collect()
    }

    pub fn missing_count(&self, j: usize) -> usize {
        self.records.iter().filter(|r| r.values[j].is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.records
            .iter()
            .all(|r| r.values.iter().all(Option::is_some))
    }

    /// Standardizes continuous features with statistics estimated on the
    /// observed entries of this dataset.
    pub fn normalize(&self) -> Result<SurvivalDataset> {
        if self.norm_stats.is_some() {
            return Err(Error::AlreadyNormalized);
        }
        let mut stats = Vec::with_capacity(self.n_features());
        for (j, def) in self.schema.features.iter().enumerate() {
            if def.is_binary() {
                stats.push(None);
                continue;
            }
            let observed: Vec<f64> = self.records.iter().filter_map(|r| r.values[j]).collect();
            if observed.len() < 2 {
                return Err(Error::DegenerateFeature(def.name.clone()));
            }
            let mean = math::mean(&observed);
            let std = math::sample_std(&observed);
            if !(std > 0.0) {
                return Err(Error::DegenerateFeature(def.name.clone()));
            }
            stats.push(Some(Standardization { mean, std }));
        }
        self.apply_normalization(&NormStats { features: stats })
    }

    /// Applies previously estimated statistics, e.g. training-split statistics
    /// to a held-out split or an external cohort.
    pub fn apply_normalization(&self, stats: &NormStats) -> Result<SurvivalDataset> {
        if self.norm_stats.is_some() {
            return Err(Error::AlreadyNormalized);
        }
        if stats.features.len() != self.n_features() {
            return Err(Error::Argument(format!(
                "normalization has {} features, dataset has {}",
                stats.features.len(),
                self.n_features()
            )));
        }
        let records = self
            .records
            .iter()
            .map(|r| PatientRecord {
                id: r.id.clone(),
                values: r
                    .values
                    .iter()
                    .zip(&stats.features)
                    .map(|(v, s)| match (v, s) {
                        (Some(x), Some(s)) => Some(s.apply(*x)),
                        (v, _) => *v,
                    })
                    .collect(),
                outcomes: r.outcomes.clone(),
            })
            .collect();
        Ok(SurvivalDataset {
            schema: self.schema.clone(),
            records,
            norm_stats: Some(stats.clone()),
        })
    }

    /// Unstratified random split; `round(fraction * n)` records go to training.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<SplitAssignment> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Argument(format!(
                "split fraction must lie in (0, 1), got {fraction}"
            )));
        }
        let n = self.len();
        if n < 2 {
            return Err(Error::Argument("need at least two records to split".into()));
        }
        let n_train = (math::round(fraction * n as f64) as usize).clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::rng(seed));
        let mut train_index = order[..n_train].to_vec();
        let mut test_index = order[n_train..].to_vec();
        train_index.sort_unstable();
        test_index.sort_unstable();
        Ok(SplitAssignment {
            train_ids: train_index.iter().map(|&i| self.records[i].id.clone()).collect(),
            test_ids: test_index.iter().map(|&i| self.records[i].id.clone()).collect(),
            seed,
            fraction,
            train_index,
            test_index,
        })
    }

    /// Records at `index`, in the given order; normalization is carried over.
    pub fn subset(&self, index: &[usize]) -> SurvivalDataset {
        SurvivalDataset {
            schema: self.schema.clone(),
            records: index.iter().map(|&i| self.records[i].clone()).collect(),
            norm_stats: self.norm_stats.clone(),
        }
    }

    /// Dense design matrix and the chosen outcome. Every value must be present.
    pub fn survival_data(&self, outcome: usize) -> Result<SurvivalData> {
        let d = self.n_features();
        let mut x = Vec::with_capacity(self.len() * d);
        for r in &self.records {
            for (j, v) in r.values.iter().enumerate() {
                match v {
                    Some(v) => x.push(*v),
                    None => {
                        return Err(Error::MissingValues(self.schema.features[j].name.clone()))
                    }
                }
            }
        }
        SurvivalData::new(
            x,
            d,
            self.records.iter().map(|r| r.outcomes[outcome].time).collect(),
            self.records.iter().map(|r| r.outcomes[outcome].event).collect(),
        )
    }
}

fn validate_record(schema: &FeatureSchema, r: &PatientRecord) -> Result<()> {
    if r.values.len() != schema.n_features() {
        return Err(Error::Validation(format!(
            "record `{}` has {} values, schema has {} features",
            r.id,
            r.values.len(),
            schema.n_features()
        )));
    }
    if r.outcomes.len() != schema.outcomes.len() {
        return Err(Error::Validation(format!(
            "record `{}` has {} outcomes, schema has {}",
            r.id,
            r.outcomes.len(),
            schema.outcomes.len()
        )));
    }
    for (v, def) in r.values.iter().zip(&schema.features) {
        if let Some(v) = v {
            if !v.is_finite() {
                return Err(Error::Validation(format!("`{}` is not finite", def.name)));
            }
            if def.is_binary() && *v != 0.0 && *v != 1.0 {
                return Err(Error::Validation(format!(
                    "binary feature `{}` has value {v}",
                    def.name
                )));
            }
        }
    }
    for (o, def) in r.outcomes.iter().zip(&schema.outcomes) {
        if !(o.time > 0.0) || !o.time.is_finite() {
            return Err(Error::Validation(format!(
                "`{}` must be positive, got {}",
                def.time_column, o.time
            )));
        }
    }
    Ok(())
}

/// Complete numeric view of a cohort for model fitting: a row-major `n x d`
/// matrix plus one outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalData {
    pub x: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub time: Vec<f64>,
    pub event: Vec<bool>,
}

impl SurvivalData {
    pub fn new(x: Vec<f64>, d: usize, time: Vec<f64>, event: Vec<bool>) -> Result<Self> {
        let n = time.len();
        if event.len() != n || x.len() != n * d {
            return Err(Error::Argument(format!(
                "inconsistent shapes: {} values for {n} x {d}, {} events",
                x.len(),
                event.len()
            )));
        }
        Ok(SurvivalData { x, n, d, time, event })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn subset(&self, index: &[usize]) -> SurvivalData {
        let mut x = Vec::with_capacity(index.len() * self.d);
        for &i in index {
            x.extend_from_slice(self.row(i));
        }
        SurvivalData {
            x,
            n: index.len(),
            d: self.d,
            time: index.iter().map(|&i| self.time[i]).collect(),
            event: index.iter().map(|&i| self.event[i]).collect(),
        }
    }

    /// `X beta` for every row.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    }
}
