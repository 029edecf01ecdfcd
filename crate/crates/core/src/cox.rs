//! L1-penalized Cox proportional hazards model.
//!
//! The fitted objective is the per-observation negative log partial
//! likelihood plus the lasso penalty,
//!
//! ```text
//! F(beta) = nll(beta) / n + lambda * sum_j |beta_j|
//! ```
//!
//! so `lambda` is comparable across cohort sizes. Tied event times use the
//! Breslow approximation. Minimisation is cyclic coordinate descent: each
//! coordinate takes a proximal Newton step on the exact coordinate-wise
//! curvature, followed by a backtracking line search on `F`, which keeps the
//! objective nonincreasing. Sweeps alternate between all coordinates and the
//! current active set.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{Standardization, SurvivalData, SurvivalDataset};
use crate::error::{Error, Result};
use crate::math::{self, abs, exp, ln};
use crate::{par, rng};

/// Tie handling for the partial likelihood. Only Breslow is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ties {
    #[default]
    Breslow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxFitConfig {
    pub lambda: f64,
    /// Maximum number of coordinate-descent sweeps.
    pub max_iter: usize,
    /// Convergence threshold on the largest coordinate change in a sweep.
    pub tol: f64,
    #[serde(default)]
    pub ties: Ties,
}

impl Default for CoxFitConfig {
    fn default() -> Self {
        CoxFitConfig {
            lambda: 0.01,
            max_iter: 10_000,
            tol: 1e-7,
            ties: Ties::Breslow,
        }
    }
}

impl CoxFitConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        CoxFitConfig {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Default tolerance of the KKT certificate.
pub const KKT_TOL: f64 = 1e-4;

/// Observations grouped by distinct time, ascending.
#[derive(Debug, Clone)]
struct RiskSets {
    order: Vec<usize>,
    /// `(start, end)` ranges into `order`, one per distinct time.
    groups: Vec<(usize, usize)>,
    /// Events in each group.
    deaths: Vec<usize>,
}

impl RiskSets {
    fn new(data: &SurvivalData) -> Self {
        let mut order: Vec<usize> = (0..data.n).collect();
        order.sort_by(|&a, &b| data.time[a].total_cmp(&data.time[b]).then(a.cmp(&b)));
        let mut groups = Vec::new();
        let mut deaths = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let t = data.time[order[start]];
            let mut end = start;
            let mut d = 0;
            while end < order.len() && data.time[order[end]] == t {
                d += data.event[order[end]] as usize;
                end += 1;
            }
            groups.push((start, end));
            deaths.push(d);
            start = end;
        }
        RiskSets { order, groups, deaths }
    }

    /// `sum_events eta_i` and `sum_k d_k log S0_k` for the given predictor.
    fn nll(&self, data: &SurvivalData, eta: &[f64]) -> f64 {
        let m = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut value = 0.0;
        for (g, &(start, end)) in self.groups.iter().enumerate().rev() {
            for &i in &self.order[start..end] {
                s0 += exp(eta[i] - m);
                if data.event[i] {
                    value -= eta[i];
                }
            }
            if self.deaths[g] > 0 {
                value += self.deaths[g] as f64 * (m + ln(s0));
            }
        }
        value
    }

    /// First and second derivative of the nll along coordinate `j`.
    fn coordinate_derivatives(&self, data: &SurvivalData, eta: &[f64], j: usize) -> (f64, f64) {
        let m = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let d = data.d;
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let (mut grad, mut hess) = (0.0, 0.0);
        for (g, &(start, end)) in self.groups.iter().enumerate().rev() {
            for &i in &self.order[start..end] {
                let w = exp(eta[i] - m);
                let x = data.x[i * d + j];
                s0 += w;
                s1 += w * x;
                s2 += w * x * x;
                if data.event[i] {
                    grad -= x;
                }
            }
            let dk = self.deaths[g];
            if dk > 0 {
                let mean = s1 / s0;
                grad += dk as f64 * mean;
                hess += dk as f64 * (s2 / s0 - mean * mean);
            }
        }
        (grad, hess)
    }

    fn gradient(&self, data: &SurvivalData, eta: &[f64]) -> Vec<f64> {
        let m = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let d = data.d;
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; d];
        let mut grad = vec![0.0; d];
        for (g, &(start, end)) in self.groups.iter().enumerate().rev() {
            for &i in &self.order[start..end] {
                let w = exp(eta[i] - m);
                s0 += w;
                let row = data.row(i);
                for j in 0..d {
                    s1[j] += w * row[j];
                }
                if data.event[i] {
                    for j in 0..d {
                        grad[j] -= row[j];
                    }
                }
            }
            let dk = self.deaths[g] as f64;
            if dk > 0.0 {
                for j in 0..d {
                    grad[j] += dk * s1[j] / s0;
                }
            }
        }
        grad
    }
}

fn check_events(data: &SurvivalData) -> Result<()> {
    if data.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    Ok(())
}

/// Negative log partial likelihood with Breslow ties (not divided by n).
pub fn neg_log_partial_likelihood(beta: &[f64], data: &SurvivalData) -> Result<f64> {
    check_events(data)?;
    check_dim(beta, data)?;
    Ok(RiskSets::new(data).nll(data, &data.linear_predictor(beta)))
}

/// Gradient of [`neg_log_partial_likelihood`] with respect to `beta`.
pub fn gradient(beta: &[f64], data: &SurvivalData) -> Result<Vec<f64>> {
    check_events(data)?;
    check_dim(beta, data)?;
    Ok(RiskSets::new(data).gradient(data, &data.linear_predictor(beta)))
}

/// First and second derivative of the nll along coordinate `j`.
pub fn coordinate_curvature(data: &SurvivalData, beta: &[f64], j: usize) -> Result<(f64, f64)> {
    check_events(data)?;
    check_dim(beta, data)?;
    if j >= data.d {
        return Err(Error::Argument(format!("coordinate {j} out of range")));
    }
    Ok(RiskSets::new(data).coordinate_derivatives(data, &data.linear_predictor(beta), j))
}

fn check_dim(beta: &[f64], data: &SurvivalData) -> Result<()> {
    if beta.len() != data.d {
        return Err(Error::Argument(format!(
            "beta has length {}, data has {} features",
            beta.len(),
            data.d
        )));
    }
    Ok(())
}

/// Smallest lambda at which the all-zero model satisfies the KKT conditions.
pub fn lambda_max(data: &SurvivalData) -> Result<f64> {
    let g = gradient(&vec![0.0; data.d], data)?;
    Ok(g.iter().map(|v| abs(*v)).fold(0.0, f64::max) / data.n as f64)
}

/// Largest violation of the lasso optimality conditions, on the per-observation
/// scale: `max(|g_j| - lambda, 0)` at zero coordinates and
/// `|g_j + lambda sign(beta_j)|` elsewhere, with `g = grad nll / n`.
pub fn kkt_residual(data: &SurvivalData, beta: &[f64], lambda: f64) -> Result<f64> {
    let n = data.n as f64;
    let g = gradient(beta, data)?;
    Ok(g.iter()
        .zip(beta)
        .map(|(g, b)| {
            let g = g / n;
            if *b == 0.0 {
                (abs(g) - lambda).max(0.0)
            } else {
                abs(g + lambda * b.signum())
            }
        })
        .fold(0.0, f64::max))
}

/// Result of one penalized fit on a [`SurvivalData`] matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub sweeps: usize,
    pub kkt_residual: f64,
    /// Penalized objective after each sweep; nonincreasing.
    pub objective_trace: Vec<f64>,
}

impl CoxFit {
    pub fn support_size(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }
}

struct Solver<'a> {
    data: &'a SurvivalData,
    risk: RiskSets,
    lambda: f64,
    beta: Vec<f64>,
    eta: Vec<f64>,
    nll: f64,
    trial: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn objective(&self) -> f64 {
        self.nll / self.data.n as f64 + self.lambda * self.beta.iter().map(|b| abs(*b)).sum::<f64>()
    }

    /// One proximal Newton step with line search on coordinate `j`.
    /// Returns the absolute change of `beta_j`.
    fn update(&mut self, j: usize) -> f64 {
        let n = self.data.n as f64;
        let d = self.data.d;
        let (g, h) = self.risk.coordinate_derivatives(self.data, &self.eta, j);
        let (g, h) = (g / n, h / n);
        let old = self.beta[j];
        // a zero coordinate whose gradient sits on the penalty up to rounding stays zero
        if old == 0.0 && abs(g) <= self.lambda * (1.0 + 1e-10) {
            return 0.0;
        }
        let target = if h > 1e-12 {
            soft_threshold(old * h - g, self.lambda) / h
        } else if abs(g) <= self.lambda {
            0.0
        } else {
            // flat direction: take a unit step against the subgradient
            old - (g - self.lambda * g.signum()).signum()
        };
        let delta = target - old;
        if delta == 0.0 {
            return 0.0;
        }
        let penalty = |b: f64| self.lambda * abs(b);
        let decrease = g * delta + penalty(target) - penalty(old);
        let base = self.nll / n + penalty(old);
        let mut step = 1.0;
        for _ in 0..60 {
            let cand = old + step * delta;
            for i in 0..self.data.n {
                self.trial[i] = self.eta[i] + (cand - old) * self.data.x[i * d + j];
            }
            let nll = self.risk.nll(self.data, &self.trial);
            if nll.is_finite() && nll / n + penalty(cand) <= base + 1e-4 * step * decrease + 1e-15 * abs(base) {
                core::mem::swap(&mut self.eta, &mut self.trial);
                self.nll = nll;
                self.beta[j] = cand;
                return abs(cand - old);
            }
            step *= 0.5;
        }
        0.0
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Fits the penalized model on a complete matrix, optionally warm-started.
pub fn fit_data(data: &SurvivalData, cfg: &CoxFitConfig, warm: Option<&[f64]>) -> Result<CoxFit> {
    cfg.validate()?;
    check_events(data)?;
    let beta = match warm {
        Some(b) => {
            check_dim(b, data)?;
            b.to_vec()
        }
        None => vec![0.0; data.d],
    };
    let risk = RiskSets::new(data);
    let eta = data.linear_predictor(&beta);
    let nll = risk.nll(data, &eta);
    let mut s = Solver {
        data,
        risk,
        lambda: cfg.lambda,
        beta,
        eta,
        nll,
        trial: vec![0.0; data.n],
    };
    let mut trace = Vec::new();
    let mut sweeps = 0;
    loop {
        // full sweep
        let mut max_change: f64 = 0.0;
        for j in 0..data.d {
            max_change = max_change.max(s.update(j));
        }
        sweeps += 1;
        trace.push(s.objective());
        if max_change < cfg.tol {
            break;
        }
        // active-set sweeps
        loop {
            if sweeps >= cfg.max_iter {
                break;
            }
            let active: Vec<usize> = (0..data.d).filter(|&j| s.beta[j] != 0.0).collect();
            let mut change: f64 = 0.0;
            for &j in &active {
                change = change.max(s.update(j));
            }
            sweeps += 1;
            trace.push(s.objective());
            if change < cfg.tol {
                break;
            }
        }
        if sweeps >= cfg.max_iter {
            let kkt = kkt_residual(data, &s.beta, cfg.lambda)?;
            return Err(Error::Convergence {
                iterations: sweeps,
                kkt_residual: kkt,
                last_beta: s.beta,
            });
        }
    }
    let kkt = kkt_residual(data, &s.beta, cfg.lambda)?;
    Ok(CoxFit {
        beta: s.beta,
        lambda: cfg.lambda,
        sweeps,
        kkt_residual: kkt,
        objective_trace: trace,
    })
}

/// Fits a descending lambda path with warm starts.
pub fn fit_path(data: &SurvivalData, lambdas: &[f64], cfg: &CoxFitConfig) -> Result<Vec<CoxFit>> {
    if lambdas.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Argument("lambda path must be sorted in descending order".into()));
    }
    let mut fits: Vec<CoxFit> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let warm = fits.last().map(|f| f.beta.clone());
        let c = CoxFitConfig { lambda, ..*cfg };
        fits.push(fit_data(data, &c, warm.as_deref())?);
    }
    Ok(fits)
}

/// Right-continuous Breslow cumulative baseline hazard `H0(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    /// `(time, H0(time))`, starting with `(0, 0)` and then one step per
    /// distinct event time.
    pub steps: Vec<(f64, f64)>,
}

impl BaselineHazard {
    pub fn at(&self, t: f64) -> f64 {
        // last step with time <= t
        let k = self.steps.partition_point(|s| s.0 <= t);
        if k == 0 {
            0.0
        } else {
            self.steps[k - 1].1
        }
    }
}

/// Breslow estimator of the cumulative baseline hazard at the given
/// coefficients (baseline = covariate vector of zeros).
pub fn breslow_baseline(data: &SurvivalData, beta: &[f64]) -> Result<BaselineHazard> {
    check_dim(beta, data)?;
    let risk = RiskSets::new(data);
    let eta = data.linear_predictor(beta);
    let m = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s0 = vec![0.0; risk.groups.len()];
    let mut acc = 0.0;
    for (g, &(start, end)) in risk.groups.iter().enumerate().rev() {
        for &i in &risk.order[start..end] {
            acc += exp(eta[i] - m);
        }
        s0[g] = acc;
    }
    let mut steps = vec![(0.0, 0.0)];
    let mut h = 0.0;
    for (g, &(start, _)) in risk.groups.iter().enumerate() {
        if risk.deaths[g] > 0 {
            h += risk.deaths[g] as f64 / (s0[g] * exp(m));
            steps.push((data.time[risk.order[start]], h));
        }
    }
    Ok(BaselineHazard { steps })
}

/// A fitted model: coefficients on the normalized scale plus everything
/// needed to score raw-unit patients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub feature_names: Vec<String>,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub norm_stats: Vec<Standardization>,
    pub baseline_cumhaz: BaselineHazard,
}

impl CoxModel {
    pub fn support(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect()
    }

    /// `beta^T z` for an already normalized covariate vector.
    pub fn linear_predictor(&self, z: &[f64]) -> f64 {
        self.beta.iter().zip(z).map(|(b, z)| b * z).sum()
    }

    /// Log hazard relative to the mean patient for raw-unit values in model
    /// feature order. Only features with a nonzero coefficient are needed.
    pub fn predict_log_hazard(&self, raw: &[Option<f64>]) -> Result<f64> {
        let mut missing = Vec::new();
        let mut lp = 0.0;
        for j in self.support() {
            match raw.get(j).copied().flatten() {
                Some(x) => lp += self.beta[j] * self.norm_stats[j].apply(x),
                None => missing.push(self.feature_names[j].clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingInputs(missing));
        }
        Ok(lp)
    }

    /// Linear predictors of every record. Normalized cohorts must carry the
    /// model's own statistics; raw cohorts are standardized on the fly.
    pub fn dataset_linear_predictors(&self, ds: &SurvivalDataset) -> Result<Vec<f64>> {
        if ds.n_features() != self.beta.len() {
            return Err(Error::Validation(format!(
                "cohort has {} features, model has {}",
                ds.n_features(),
                self.beta.len()
            )));
        }
        let support = self.support();
        match &ds.norm_stats {
            None => ds.records.iter().map(|r| self.predict_log_hazard(&r.values)).collect(),
            Some(stats) => {
                if let Some(&j) = support.iter().find(|&&j| stats.get(j) != self.norm_stats[j]) {
                    return Err(Error::Validation(format!(
                        "cohort normalization of `{}` differs from the model's",
                        self.feature_names[j]
                    )));
                }
                ds.records
                    .iter()
                    .map(|r| {
                        let mut lp = 0.0;
                        for &j in &support {
                            let z = r.values[j].ok_or_else(|| Error::MissingInputs(vec![self.feature_names[j].clone()]))?;
                            lp += self.beta[j] * z;
                        }
                        Ok(lp)
                    })
                    .collect()
            }
        }
    }

    /// Design matrix of `ds` on the model's normalized scale (primary outcome).
    pub fn design(&self, ds: &SurvivalDataset) -> Result<SurvivalData> {
        match &ds.norm_stats {
            Some(_) => {
                self.dataset_linear_predictors(ds)?;
                ds.survival_data(0)
            }
            None => {
                let mut z = ds.clone();
                for r in &mut z.records {
                    for (j, v) in r.values.iter_mut().enumerate() {
                        *v = v.map(|x| self.norm_stats[j].apply(x));
                    }
                }
                z.survival_data(0)
            }
        }
    }

    /// `S(t | x) = exp(-H0(t) exp(lp))`.
    pub fn survival(&self, lp: f64, t: f64) -> f64 {
        exp(-self.baseline_cumhaz.at(t) * exp(lp))
    }

    pub fn hazard_ratios(&self) -> Vec<(String, f64)> {
        self.support()
            .into_iter()
            .map(|j| (self.feature_names[j].clone(), exp(self.beta[j])))
            .collect()
    }
}

fn model_stats(ds: &SurvivalDataset) -> Vec<Standardization> {
    (0..ds.n_features())
        .map(|j| ds.norm_stats.as_ref().map_or(Standardization::IDENTITY, |s| s.get(j)))
        .collect()
}

/// Fits the model on the primary outcome of a complete (normalized) dataset
/// and attaches its Breslow baseline.
pub fn fit(ds: &SurvivalDataset, cfg: &CoxFitConfig) -> Result<CoxModel> {
    let data = ds.survival_data(0)?;
    let f = fit_data(&data, cfg, None)?;
    model_from_fit(ds, &data, f)
}

pub fn model_from_fit(ds: &SurvivalDataset, data: &SurvivalData, f: CoxFit) -> Result<CoxModel> {
    let baseline_cumhaz = breslow_baseline(data, &f.beta)?;
    Ok(CoxModel {
        feature_names: ds.schema.feature_names(),
        beta: f.beta,
        lambda: f.lambda,
        norm_stats: model_stats(ds),
        baseline_cumhaz,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardRatio {
    pub feature: String,
    pub beta: f64,
    pub hr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardRatioTable {
    pub rows: Vec<HazardRatio>,
    pub replicates: usize,
    /// Resamples discarded for having no events.
    pub redraws: usize,
}

/// Draws bootstrap index sets of size `n`, redrawing sets rejected by
/// `accept`. Replicate `b` uses its own seed stream.
pub(crate) fn bootstrap_indices<F>(n: usize, replicates: usize, seed: u64, accept: F) -> Result<(Vec<Vec<usize>>, usize)>
where
    F: Fn(&[usize]) -> bool + Sync + Send,
{
    let cap = 10 * replicates;
    let draws = par::map_indexed(replicates, |b| {
        let stream = rng::substream(seed, b as u64);
        for attempt in 0..=cap {
            let mut r = rng::rng(rng::substream(stream, attempt as u64));
            let idx: Vec<usize> = (0..n).map(|_| r.gen_range(0..n)).collect();
            if accept(&idx) {
                return Some((idx, attempt));
            }
        }
        None
    });
    let mut out = Vec::with_capacity(replicates);
    let mut redraws = 0;
    for d in draws {
        match d {
            Some((idx, a)) => {
                redraws += a;
                out.push(idx);
            }
            None => return Err(Error::Resampling(cap)),
        }
    }
    if redraws > cap {
        return Err(Error::Resampling(redraws));
    }
    Ok((out, redraws))
}

/// Percentile bootstrap intervals for the hazard ratios of the features
/// selected by the full-data fit.
pub fn bootstrap_hr_ci(ds: &SurvivalDataset, cfg: &CoxFitConfig, replicates: usize, seed: u64) -> Result<HazardRatioTable> {
    if replicates == 0 {
        return Err(Error::Argument("need at least one bootstrap replicate".into()));
    }
    let data = ds.survival_data(0)?;
    let full = fit_data(&data, cfg, None)?;
    let (draws, redraws) = bootstrap_indices(data.n, replicates, seed, |idx| idx.iter().any(|&i| data.event[i]))?;
    let fits = par::map_indexed(replicates, |b| {
        let sample = data.subset(&draws[b]);
        fit_data(&sample, cfg, Some(&full.beta)).map(|f| f.beta)
    });
    let betas = fits.into_iter().collect::<Result<Vec<_>>>()?;
    let names = ds.schema.feature_names();
    let rows = (0..data.d)
        .filter(|&j| full.beta[j] != 0.0)
        .map(|j| {
            let hrs: Vec<f64> = betas.iter().map(|b| exp(b[j])).collect();
            HazardRatio {
                feature: names[j].clone(),
                beta: full.beta[j],
                hr: exp(full.beta[j]),
                ci_low: math::quantile(&hrs, 0.025),
                ci_high: math::quantile(&hrs, 0.975),
            }
        })
        .collect();
    Ok(HazardRatioTable {
        rows,
        replicates,
        redraws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(x: &[f64], time: &[f64], event: &[bool]) -> SurvivalData {
        SurvivalData::new(x.to_vec(), 1, time.to_vec(), event.to_vec()).unwrap()
    }

    #[test]
    fn null_beta_gives_sum_of_log_risk_set_sizes() {
        // events at t=1 (risk set 4) and t=3 (risk set 2)
        let d = tiny(&[0.3, -1.0, 2.0, 0.5], &[1.0, 2.0, 3.0, 4.0], &[true, false, true, false]);
        let v = neg_log_partial_likelihood(&[0.0], &d).unwrap();
        assert!((v - (ln(4.0) + ln(2.0))).abs() < 1e-12);
    }

    #[test]
    fn two_patient_closed_form() {
        let d = tiny(&[1.0, 0.0], &[1.0, 2.0], &[true, false]);
        for b in [-1.3, 0.0, 0.4, 2.0] {
            let v = neg_log_partial_likelihood(&[b], &d).unwrap();
            let expect = -(b - ln(exp(b) + 1.0));
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn tied_events_share_denominator() {
        // two events at t=1 among 3 at risk: each contributes log(3) at beta=0
        let d = tiny(&[0.0, 1.0, 2.0], &[1.0, 1.0, 2.0], &[true, true, false]);
        let v = neg_log_partial_likelihood(&[0.0], &d).unwrap();
        assert!((v - 2.0 * ln(3.0)).abs() < 1e-12);
    }

    #[test]
    fn no_events_is_degenerate() {
        let d = tiny(&[0.0, 1.0], &[1.0, 2.0], &[false, false]);
        assert_eq!(neg_log_partial_likelihood(&[0.0], &d), Err(Error::NoEvents));
    }

    #[test]
    fn breslow_hand_computation() {
        let d = tiny(&[0.2, -0.4, 1.0], &[1.0, 2.0, 3.0], &[true, true, false]);
        let h = breslow_baseline(&d, &[0.0]).unwrap();
        assert_eq!(h.steps.len(), 3);
        assert!((h.at(1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((h.at(2.5) - (1.0 / 3.0 + 0.5)).abs() < 1e-15);
        assert_eq!(h.at(0.5), 0.0);
    }

    #[test]
    fn breslow_single_event_uniform_risk() {
        let d = tiny(&[0.0; 5], &[5.0, 6.0, 7.0, 8.0, 9.0], &[true, false, false, false, false]);
        let h = breslow_baseline(&d, &[0.7]).unwrap();
        assert!((h.at(5.0) - 1.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(CoxFitConfig::with_lambda(-1.0).validate().is_err());
        let c = CoxFitConfig { tol: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn predict_reports_every_missing_feature() {
        let m = CoxModel {
            feature_names: alloc::vec!["a".into(), "b".into(), "c".into()],
            beta: alloc::vec![0.5, 0.0, -0.2],
            lambda: 0.01,
            norm_stats: alloc::vec![Standardization::IDENTITY; 3],
            baseline_cumhaz: BaselineHazard { steps: alloc::vec![(0.0, 0.0)] },
        };
        let err = m.predict_log_hazard(&[None, None, None]).unwrap_err();
        assert_eq!(err, Error::MissingInputs(alloc::vec!["a".into(), "c".into()]));
        // zero-coefficient features are not required
        assert!(m.predict_log_hazard(&[Some(1.0), None, Some(0.0)]).is_ok());
    }
}
