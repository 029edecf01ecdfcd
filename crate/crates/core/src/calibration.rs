//! Grouped calibration at a fixed horizon: predicted `S(t*)` from the Breslow
//! baseline against the Kaplan-Meier estimate within predicted-risk quantile
//! groups, with bootstrap intervals.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cox::{breslow_baseline, fit_data, BaselineHazard, CoxFitConfig, CoxModel};
use crate::dataset::{SurvivalData, SurvivalDataset};
use crate::error::{Error, Result};
use crate::km::kaplan_meier;
use crate::math::{self, exp};
use crate::{cox, par};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    /// Resample each group's members and recompute its observed curve; the
    /// model is not refitted.
    #[default]
    NoRefit,
    /// Refit the model on each cohort resample, regroup the resample by the
    /// refitted predictions and recompute both sides.
    Refit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub groups: usize,
    /// Days.
    pub horizon: f64,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub method: CalibrationMethod,
}

impl CalibrationConfig {
    pub fn new(horizon: f64, seed: u64) -> Self {
        CalibrationConfig {
            groups: 5,
            horizon,
            replicates: 1000,
            seed,
            method: CalibrationMethod::NoRefit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGroup {
    /// 1 = lowest predicted risk.
    pub group: usize,
    pub n: usize,
    pub lp_min: f64,
    pub lp_max: f64,
    pub predicted: f64,
    pub observed: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_events: usize,
    pub n_at_risk: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub horizon: f64,
    pub replicates: usize,
    pub method: CalibrationMethod,
    pub groups: Vec<CalibrationGroup>,
}

/// Positions sorted by ascending linear predictor (stable), cut into `g`
/// consecutive groups whose sizes differ by at most one.
pub fn quantile_groups(lp: &[f64], g: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lp.len()).collect();
    order.sort_by(|&a, &b| lp[a].total_cmp(&lp[b]));
    let (base, extra) = (lp.len() / g, lp.len() % g);
    let mut out = Vec::with_capacity(g);
    let mut at = 0;
    for k in 0..g {
        let size = base + (k < extra) as usize;
        out.push(order[at..at + size].to_vec());
        at += size;
    }
    out
}

fn observed_at(time: &[f64], event: &[bool], members: &[usize], horizon: f64) -> f64 {
    let t: Vec<f64> = members.iter().map(|&i| time[i]).collect();
    let e: Vec<bool> = members.iter().map(|&i| event[i]).collect();
    kaplan_meier(&t, &e).map(|c| c.survival_at(horizon)).unwrap_or(f64::NAN)
}

fn predicted_at(baseline: &BaselineHazard, lp: &[f64], members: &[usize], horizon: f64) -> f64 {
    let h = baseline.at(horizon);
    members.iter().map(|&i| exp(-h * exp(lp[i]))).sum::<f64>() / members.len() as f64
}

fn validate(cfg: &CalibrationConfig, time: &[f64]) -> Result<()> {
    if cfg.groups < 2 {
        return Err(Error::Argument("calibration needs at least two groups".into()));
    }
    if time.len() < cfg.groups {
        return Err(Error::Argument(format!("{} patients cannot fill {} groups", time.len(), cfg.groups)));
    }
    if cfg.replicates == 0 {
        return Err(Error::Argument("calibration needs at least one resample".into()));
    }
    let (lo, hi) = time.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    if !(cfg.horizon > 0.0 && cfg.horizon <= hi) {
        return Err(Error::Argument(format!(
            "horizon {} outside the observed time range [{lo}, {hi}]",
            cfg.horizon
        )));
    }
    Ok(())
}

/// Calibration of `model` on `ds` (its primary outcome). For external cohorts
/// the model's own baseline is used, never a refitted one.
pub fn calibration(model: &CoxModel, ds: &SurvivalDataset, cfg: &CalibrationConfig) -> Result<CalibrationReport> {
    let lp = model.dataset_linear_predictors(ds)?;
    let time: Vec<f64> = ds.records.iter().map(|r| r.outcomes[0].time).collect();
    let event: Vec<bool> = ds.records.iter().map(|r| r.outcomes[0].event).collect();
    match cfg.method {
        CalibrationMethod::NoRefit => calibrate(&lp, &time, &event, &model.baseline_cumhaz, cfg),
        CalibrationMethod::Refit => {
            let data = ds.survival_data(0)?;
            calibrate_refit(&data, model, cfg)
        }
    }
}

/// No-refit calibration from precomputed linear predictors.
pub fn calibrate(
    lp: &[f64],
    time: &[f64],
    event: &[bool],
    baseline: &BaselineHazard,
    cfg: &CalibrationConfig,
) -> Result<CalibrationReport> {
    validate(cfg, time)?;
    let bins = quantile_groups(lp, cfg.groups);
    let groups = bins
        .iter()
        .enumerate()
        .map(|(k, members)| {
            let seed = crate::rng::substream(cfg.seed, k as u64);
            let (draws, _) = cox::bootstrap_indices(members.len(), cfg.replicates, seed, |_| true)?;
            let obs: Vec<f64> = par::map_indexed(cfg.replicates, |b| {
                let idx: Vec<usize> = draws[b].iter().map(|&i| members[i]).collect();
                observed_at(time, event, &idx, cfg.horizon)
            });
            Ok(summarize(k, members, lp, time, event, baseline, cfg.horizon, &obs))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibrationReport {
        horizon: cfg.horizon,
        replicates: cfg.replicates,
        method: CalibrationMethod::NoRefit,
        groups,
    })
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    k: usize,
    members: &[usize],
    lp: &[f64],
    time: &[f64],
    event: &[bool],
    baseline: &BaselineHazard,
    horizon: f64,
    resampled_observed: &[f64],
) -> CalibrationGroup {
    let n_events = members.iter().filter(|&&i| event[i] && time[i] <= horizon).count();
    let n_at_risk = members.iter().filter(|&&i| time[i] >= horizon).count();
    let flag = match (n_events, n_at_risk) {
        (0, 0) => Some("no events and nobody at risk at the horizon".into()),
        (_, 0) => Some("nobody at risk at the horizon".into()),
        (0, _) => Some("no events before the horizon".into()),
        _ => None,
    };
    let finite: Vec<f64> = resampled_observed.iter().copied().filter(|v| v.is_finite()).collect();
    let (ci_low, ci_high) = if finite.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (math::quantile(&finite, 0.025), math::quantile(&finite, 0.975))
    };
    CalibrationGroup {
        group: k + 1,
        n: members.len(),
        lp_min: members.iter().map(|&i| lp[i]).fold(f64::INFINITY, f64::min),
        lp_max: members.iter().map(|&i| lp[i]).fold(f64::NEG_INFINITY, f64::max),
        predicted: predicted_at(baseline, lp, members, horizon),
        observed: observed_at(time, event, members, horizon),
        ci_low,
        ci_high,
        n_events,
        n_at_risk,
        flag,
    }
}

fn calibrate_refit(data: &SurvivalData, model: &CoxModel, cfg: &CalibrationConfig) -> Result<CalibrationReport> {
    validate(cfg, &data.time)?;
    let lp = data.linear_predictor(&model.beta);
    let bins = quantile_groups(&lp, cfg.groups);
    let fit_cfg = CoxFitConfig::with_lambda(model.lambda);
    let (draws, _) = cox::bootstrap_indices(data.n, cfg.replicates, cfg.seed, |idx| idx.iter().any(|&i| data.event[i]))?;
    let per_replicate = par::map_indexed(cfg.replicates, |b| -> Result<Vec<f64>> {
        let sample = data.subset(&draws[b]);
        let f = fit_data(&sample, &fit_cfg, Some(&model.beta))?;
        let lp_b = sample.linear_predictor(&f.beta);
        Ok(quantile_groups(&lp_b, cfg.groups)
            .iter()
            .map(|m| observed_at(&sample.time, &sample.event, m, cfg.horizon))
            .collect())
    });
    let per_replicate = per_replicate.into_iter().collect::<Result<Vec<_>>>()?;
    let baseline = breslow_baseline(data, &model.beta)?;
    let groups = bins
        .iter()
        .enumerate()
        .map(|(k, members)| {
            let obs: Vec<f64> = per_replicate.iter().map(|r| r[k]).collect();
            summarize(k, members, &lp, &data.time, &data.event, &baseline, cfg.horizon, &obs)
        })
        .collect();
    Ok(CalibrationReport {
        horizon: cfg.horizon,
        replicates: cfg.replicates,
        method: CalibrationMethod::Refit,
        groups,
    })
}
