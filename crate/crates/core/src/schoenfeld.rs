//! Proportional-hazards check from scaled Schoenfeld residuals.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cox::CoxModel;
use crate::dataset::{SurvivalData, SurvivalDataset};
use crate::error::{Error, Result};
use crate::km::kaplan_meier;
use crate::math::{self, exp};

pub const MIN_EVENTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhTest {
    pub feature: String,
    /// Pearson correlation of the scaled residuals with `1 - KM(t-)`.
    pub correlation: f64,
    pub p_value: f64,
    pub violates: bool,
}

/// Scaled Schoenfeld residuals, one row per event (time order) and one
/// column per entry of `support`, plus each event's time.
pub fn scaled_residuals(data: &SurvivalData, beta: &[f64], support: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = support.len();
    let d = data.d;
    let mut order: Vec<usize> = (0..data.n).collect();
    order.sort_by(|&a, &b| data.time[a].total_cmp(&data.time[b]).then(a.cmp(&b)));
    let eta = data.linear_predictor(beta);
    let m = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; k];
    let mut s2 = vec![0.0; k * k];
    let mut info = vec![0.0; k * k];
    // (time, raw residual) per event, filled from the latest time backwards
    let mut events: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut end = order.len();
    while end > 0 {
        let t = data.time[order[end - 1]];
        let mut start = end;
        while start > 0 && data.time[order[start - 1]] == t {
            start -= 1;
        }
        for &i in &order[start..end] {
            let w = exp(eta[i] - m);
            s0 += w;
            for a in 0..k {
                let xa = data.x[i * d + support[a]];
                s1[a] += w * xa;
                for b in 0..k {
                    s2[a * k + b] += w * xa * data.x[i * d + support[b]];
                }
            }
        }
        let mean: Vec<f64> = s1.iter().map(|v| v / s0).collect();
        let mut group_events = Vec::new();
        for &i in &order[start..end] {
            if data.event[i] {
                let r: Vec<f64> = (0..k).map(|a| data.x[i * d + support[a]] - mean[a]).collect();
                group_events.push((t, r));
            }
        }
        let dk = group_events.len() as f64;
        for a in 0..k {
            for b in 0..k {
                info[a * k + b] += dk * (s2[a * k + b] / s0 - mean[a] * mean[b]);
            }
        }
        for e in group_events.into_iter().rev() {
            events.push(e);
        }
        end = start;
    }
    events.reverse();
    let var = math::spd_inverse(&info, k)
        .ok_or_else(|| Error::Validation("information matrix of the support is singular".into()))?;
    let n_events = events.len() as f64;
    let times = events.iter().map(|e| e.0).collect();
    let scaled = events
        .iter()
        .map(|(_, r)| {
            (0..k)
                .map(|a| beta[support[a]] + n_events * (0..k).map(|b| var[a * k + b] * r[b]).sum::<f64>())
                .collect()
        })
        .collect();
    Ok((times, scaled))
}

/// Correlation test of each support coefficient against Kaplan-Meier
/// transformed time; violation at `p < alpha`.
pub fn ph_test(data: &SurvivalData, beta: &[f64], names: &[String], alpha: f64) -> Result<Vec<PhTest>> {
    let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if support.is_empty() {
        return Err(Error::Argument("the proportional-hazards check needs a nonzero coefficient".into()));
    }
    let found = data.n_events();
    if found < MIN_EVENTS {
        return Err(Error::InsufficientEvents { found, needed: MIN_EVENTS });
    }
    let (times, scaled) = scaled_residuals(data, beta, &support)?;
    let km = kaplan_meier(&data.time, &data.event)?;
    // left limit of the survival curve at each event time
    let g: Vec<f64> = times
        .iter()
        .map(|&t| {
            let k = km.times.partition_point(|&s| s < t);
            1.0 - if k == 0 { 1.0 } else { km.surv[k - 1] }
        })
        .collect();
    Ok(support
        .iter()
        .enumerate()
        .map(|(a, &j)| {
            let col: Vec<f64> = scaled.iter().map(|s| s[a]).collect();
            let r = math::pearson(&col, &g);
            let p = if r.is_finite() { math::correlation_p_value(r, col.len()) } else { 1.0 };
            PhTest {
                feature: names[j].clone(),
                correlation: r,
                p_value: p,
                violates: p < alpha,
            }
        })
        .collect())
}

/// Schoenfeld check of a fitted model on `ds` at the 5% level.
pub fn schoenfeld_ph_check(model: &CoxModel, ds: &SurvivalDataset) -> Result<Vec<PhTest>> {
    let data = model.design(ds)?;
    ph_test(&data, &model.beta, &model.feature_names, 0.05)
}
