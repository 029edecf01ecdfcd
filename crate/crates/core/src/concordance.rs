//! Harrell's concordance index.
//!
//! A pair `(i, j)` is comparable when `t_i < t_j` and `i` had the event; it is
//! concordant when `risk_i > risk_j`, and tied risks count one half. Pairs with
//! equal times are never comparable.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cox::bootstrap_indices;
use crate::error::{Error, Result};
use crate::{math, par};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairCounts {
    pub concordant: u64,
    pub tied_risk: u64,
    pub comparable: u64,
}

impl PairCounts {
    pub fn cindex(&self) -> Option<f64> {
        if self.comparable == 0 {
            None
        } else {
            Some((2 * self.concordant + self.tied_risk) as f64 / (2 * self.comparable) as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceResult {
    pub cindex: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_comparable: u64,
}

fn check_lengths(risks: &[f64], times: &[f64], events: &[bool]) -> Result<()> {
    if risks.len() != times.len() || times.len() != events.len() {
        return Err(Error::Argument("risks, times and events must have equal length".into()));
    }
    Ok(())
}

/// Pair counts in `O(n log n)`: sweep times from latest to earliest while a
/// Fenwick tree over risk ranks holds every subject with a strictly later time.
pub fn pair_counts(risks: &[f64], times: &[f64], events: &[bool]) -> PairCounts {
    let n = risks.len();
    let mut ranked: Vec<f64> = risks.to_vec();
    ranked.sort_by(f64::total_cmp);
    ranked.dedup();
    let rank = |r: f64| ranked.partition_point(|v| *v < r) + 1;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    let mut tree = Fenwick::new(ranked.len());
    let mut inserted = 0u64;
    let mut counts = PairCounts::default();
    let mut start = 0;
    while start < n {
        let t = times[order[start]];
        let mut end = start;
        while end < n && times[order[end]] == t {
            end += 1;
        }
        for &i in &order[start..end] {
            if events[i] {
                let r = rank(risks[i]);
                let below = tree.prefix(r - 1);
                let equal = tree.prefix(r) - below;
                counts.concordant += below;
                counts.tied_risk += equal;
                counts.comparable += inserted;
            }
        }
        for &i in &order[start..end] {
            tree.add(rank(risks[i]));
            inserted += 1;
        }
        start = end;
    }
    counts
}

/// Point estimate of the c-index (the interval collapses to the estimate).
pub fn concordance(risks: &[f64], times: &[f64], events: &[bool]) -> Result<ConcordanceResult> {
    check_lengths(risks, times, events)?;
    let counts = pair_counts(risks, times, events);
    let c = counts.cindex().ok_or(Error::NoComparablePairs)?;
    Ok(ConcordanceResult {
        cindex: c,
        ci_low: c,
        ci_high: c,
        n_comparable: counts.comparable,
    })
}

/// Point estimate plus a percentile bootstrap 95% interval over `replicates`
/// resamples of the subjects. Resamples without comparable pairs are redrawn.
pub fn concordance_ci(risks: &[f64], times: &[f64], events: &[bool], replicates: usize, seed: u64) -> Result<ConcordanceResult> {
    if replicates < 2 {
        return Err(Error::Argument("concordance bootstrap needs at least 2 replicates".into()));
    }
    let point = concordance(risks, times, events)?;
    let n = risks.len();
    let sample = |idx: &[usize]| {
        let r: Vec<f64> = idx.iter().map(|&i| risks[i]).collect();
        let t: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
        let e: Vec<bool> = idx.iter().map(|&i| events[i]).collect();
        pair_counts(&r, &t, &e).cindex()
    };
    let (draws, _) = bootstrap_indices(n, replicates, seed, |idx| sample(idx).is_some())?;
    let stats: Vec<f64> = par::map_indexed(replicates, |b| sample(&draws[b]).unwrap_or(0.5));
    Ok(ConcordanceResult {
        ci_low: math::quantile(&stats, 0.025),
        ci_high: math::quantile(&stats, 0.975),
        ..point
    })
}

struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: alloc::vec![0; n + 1] }
    }

    fn add(&mut self, mut i: usize) {
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    fn prefix(&self, mut i: usize) -> u64 {
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}
