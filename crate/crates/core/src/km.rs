//! Kaplan-Meier estimator with Greenwood log(-log) confidence bands.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, ln, sqrt};

/// 97.5% standard normal quantile.
pub const Z_975: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    pub surv: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub n_risk: Vec<usize>,
    pub n_event: Vec<usize>,
    /// Greenwood variance of `surv`.
    pub variance: Vec<f64>,
    /// Largest observed time (event or censored).
    pub max_time: f64,
}

impl KmCurve {
    /// Right-continuous lookup; 1 before the first event.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.surv[k - 1]
        }
    }

    pub fn band_at(&self, t: f64) -> (f64, f64) {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            (1.0, 1.0)
        } else {
            (self.ci_low[k - 1], self.ci_high[k - 1])
        }
    }

    /// Number of subjects still at risk just after `t`.
    pub fn at_risk_after(&self, t: f64, times: &[f64]) -> usize {
        times.iter().filter(|&&s| s > t).count()
    }
}

pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<KmCurve> {
    if times.is_empty() {
        return Err(Error::Argument("Kaplan-Meier needs at least one subject".into()));
    }
    if times.len() != events.len() {
        return Err(Error::Argument("times and events must have equal length".into()));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut curve = KmCurve {
        times: Vec::new(),
        surv: Vec::new(),
        ci_low: Vec::new(),
        ci_high: Vec::new(),
        n_risk: Vec::new(),
        n_event: Vec::new(),
        variance: Vec::new(),
        max_time: times[order[order.len() - 1]],
    };
    let mut at_risk = times.len();
    let mut s = 1.0;
    let mut greenwood = 0.0;
    let mut start = 0;
    while start < order.len() {
        let t = times[order[start]];
        let mut end = start;
        let mut d = 0;
        while end < order.len() && times[order[end]] == t {
            d += events[order[end]] as usize;
            end += 1;
        }
        if d > 0 {
            let (n, df) = (at_risk as f64, d as f64);
            s *= (n - df) / n;
            let (lo, hi) = if d < at_risk {
                greenwood += df / (n * (n - df));
                loglog_band(s, greenwood)
            } else {
                greenwood = f64::INFINITY;
                (0.0, 0.0)
            };
            curve.times.push(t);
            curve.surv.push(s);
            curve.ci_low.push(lo);
            curve.ci_high.push(hi);
            curve.n_risk.push(at_risk);
            curve.n_event.push(d);
            curve.variance.push(if greenwood.is_finite() { s * s * greenwood } else { 0.0 });
        }
        at_risk -= end - start;
        start = end;
    }
    Ok(curve)
}

fn loglog_band(s: f64, greenwood: f64) -> (f64, f64) {
    let log_s = ln(s);
    if log_s == 0.0 {
        return (1.0, 1.0);
    }
    let se = sqrt(greenwood) / -log_s;
    let lo = libm::pow(s, exp(Z_975 * se));
    let hi = libm::pow(s, exp(-Z_975 * se));
    (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_censored_is_flat() {
        let c = kaplan_meier(&[1.0, 2.0, 3.0], &[false; 3]).unwrap();
        assert!(c.times.is_empty());
        assert_eq!(c.survival_at(10.0), 1.0);
    }

    #[test]
    fn three_patient_fixture() {
        let c = kaplan_meier(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        assert_eq!(c.times, alloc::vec![1.0, 3.0]);
        assert_eq!(c.surv, alloc::vec![2.0 / 3.0, 0.0]);
        assert_eq!(c.survival_at(2.9), 2.0 / 3.0);
        assert_eq!(c.survival_at(0.9), 1.0);
        assert_eq!(c.n_risk, alloc::vec![3, 1]);
        // Greenwood: S^2 * 1 / (3 * 2)
        assert!((c.variance[0] - (2.0 / 3.0) * (2.0 / 3.0) / 6.0).abs() < 1e-15);
    }

    #[test]
    fn bands_contain_estimate() {
        let t = [1.0, 2.0, 2.0, 3.0, 5.0, 8.0, 9.0];
        let e = [true, true, false, true, false, true, false];
        let c = kaplan_meier(&t, &e).unwrap();
        for k in 0..c.times.len() {
            assert!(c.ci_low[k] <= c.surv[k] && c.surv[k] <= c.ci_high[k]);
            assert!(c.ci_low[k] >= 0.0 && c.ci_high[k] <= 1.0);
        }
        assert!(c.surv.windows(2).all(|w| w[1] <= w[0]));
    }
}
