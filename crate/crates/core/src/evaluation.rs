//! Model selection by cross-validated concordance, secondary-outcome tables
//! and fixed-day survival readouts.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::concordance::pair_counts;
use crate::cox::{fit_path, CoxFitConfig};
use crate::dataset::{SurvivalData, SurvivalDataset};
use crate::error::{Error, Result};
use crate::km::KmCurve;
use crate::scores::Stratum;
use crate::schema::{VASOPRESSOR, VENTILATOR};
use crate::{math, par, rng};

/// The published lambda grid, in the order it was listed.
pub const PUBLISHED_LAMBDA_GRID: [f64; 17] = [
    0.5, 0.375, 0.25, 0.125, 0.10, 0.075, 0.05, 0.0225, 0.025, 0.0275, 0.02, 0.0175, 0.015, 0.0125, 0.01, 0.005, 0.0005,
];

/// Default concordance tolerance of the sparsity rule.
pub const KNEE_EPSILON: f64 = 0.01;

const MAX_FOLD_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda: f64,
    /// Mean of the per-fold held-out c-indices.
    pub mean_cindex: f64,
    pub fold_cindex: Vec<f64>,
    pub mean_support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// One row per grid value, descending lambda.
    pub rows: Vec<CvRow>,
    pub chosen_lambda: f64,
    pub best_mean_cindex: f64,
    pub epsilon: f64,
    pub folds: usize,
    /// Fold assignments discarded because a fold lacked events.
    pub fold_redraws: usize,
    pub fold_of: Vec<usize>,
}

/// Sorted descending, duplicates removed.
pub fn descending_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Argument("lambda grid is empty".into()));
    }
    if let Some(l) = grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::Argument(format!("lambda grid values must be positive, got {l}")));
    }
    let mut g = grid.to_vec();
    g.sort_by(|a, b| b.total_cmp(a));
    g.dedup();
    Ok(g)
}

/// Fold labels of a shuffled round-robin assignment: sizes differ by at most
/// one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(seed));
    let mut fold_of = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        fold_of[i] = k % folds;
    }
    fold_of
}

fn usable(data: &SurvivalData, fold_of: &[usize], folds: usize) -> bool {
    (0..folds).all(|f| {
        let train_events = (0..data.n).any(|i| fold_of[i] != f && data.event[i]);
        let held: Vec<usize> = (0..data.n).filter(|&i| fold_of[i] == f).collect();
        let comparable = held
            .iter()
            .any(|&i| data.event[i] && held.iter().any(|&j| data.time[j] > data.time[i]));
        train_events && comparable
    })
}

/// Chosen lambda: the largest grid value whose mean c-index is within
/// `epsilon` of the best.
pub fn knee_choice(rows: &[CvRow], epsilon: f64) -> (f64, f64) {
    let best = rows.iter().map(|r| r.mean_cindex).fold(f64::NEG_INFINITY, f64::max);
    let chosen = rows
        .iter()
        .filter(|r| r.mean_cindex >= best - epsilon)
        .map(|r| r.lambda)
        .fold(f64::NEG_INFINITY, f64::max);
    (chosen, best)
}

/// K-fold cross-validated concordance along a warm-started lambda path.
pub fn cv_grid_search(
    data: &SurvivalData,
    grid: &[f64],
    folds: usize,
    seed: u64,
    epsilon: f64,
    cfg: &CoxFitConfig,
) -> Result<CvResult> {
    if folds < 2 {
        return Err(Error::Argument("cross-validation needs at least two folds".into()));
    }
    if data.n < folds {
        return Err(Error::Argument(format!("{} patients cannot fill {folds} folds", data.n)));
    }
    let grid = descending_grid(grid)?;
    let mut redraws = 0;
    let fold_of = loop {
        let f = fold_assignment(data.n, folds, rng::substream(seed, redraws as u64));
        if usable(data, &f, folds) {
            break f;
        }
        redraws += 1;
        log::warn!("fold assignment {redraws} left a fold without events; redrawing");
        if redraws > MAX_FOLD_REDRAWS {
            return Err(Error::Resampling(redraws));
        }
    };
    let per_fold = par::map_indexed(folds, |f| -> Result<Vec<(f64, usize)>> {
        let train: Vec<usize> = (0..data.n).filter(|&i| fold_of[i] != f).collect();
        let held: Vec<usize> = (0..data.n).filter(|&i| fold_of[i] == f).collect();
        let tr = data.subset(&train);
        let te = data.subset(&held);
        let path = fit_path(&tr, &grid, cfg)?;
        Ok(path
            .iter()
            .map(|fit| {
                let risks = te.linear_predictor(&fit.beta);
                let c = pair_counts(&risks, &te.time, &te.event).cindex().unwrap_or(f64::NAN);
                (c, fit.support_size())
            })
            .collect())
    });
    let per_fold = per_fold.into_iter().collect::<Result<Vec<_>>>()?;
    let rows: Vec<CvRow> = grid
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let fold_cindex: Vec<f64> = per_fold.iter().map(|p| p[k].0).collect();
            let support: Vec<f64> = per_fold.iter().map(|p| p[k].1 as f64).collect();
            CvRow {
                lambda,
                mean_cindex: math::mean(&fold_cindex),
                fold_cindex,
                mean_support: math::mean(&support),
            }
        })
        .collect();
    let (chosen_lambda, best_mean_cindex) = knee_choice(&rows, epsilon);
    Ok(CvResult {
        rows,
        chosen_lambda,
        best_mean_cindex,
        epsilon,
        folds,
        fold_redraws: redraws,
        fold_of,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryRow {
    pub stratum: Stratum,
    pub n: usize,
    /// `None` when the stratum is empty.
    pub vasopressor: Option<f64>,
    pub ventilator: Option<f64>,
}

/// Fraction of each stratum that received vasopressors or a ventilator.
pub fn secondary_outcomes(ds: &SurvivalDataset, strata: &[Stratum]) -> Result<Vec<SecondaryRow>> {
    if strata.len() != ds.len() {
        return Err(Error::Argument(format!("{} labels for {} patients", strata.len(), ds.len())));
    }
    let idx = |name: &str| {
        ds.schema
            .outcome_index(name)
            .ok_or_else(|| Error::Schema(format!("cohort has no `{name}` outcome")))
    };
    let (vaso, vent) = (idx(VASOPRESSOR)?, idx(VENTILATOR)?);
    Ok([Stratum::High, Stratum::Low]
        .into_iter()
        .map(|s| {
            let members: Vec<usize> = (0..ds.len()).filter(|&i| strata[i] == s).collect();
            let frac = |o: usize| {
                (!members.is_empty()).then(|| {
                    members.iter().filter(|&&i| ds.records[i].outcomes[o].event).count() as f64 / members.len() as f64
                })
            };
            SecondaryRow {
                stratum: s,
                n: members.len(),
                vasopressor: frac(vaso),
                ventilator: frac(vent),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub day: f64,
    pub survival: f64,
    /// Set when `day` lies past the last observed time; `survival` is then
    /// the curve's final value.
    pub beyond_follow_up: bool,
}

pub fn survival_readout(curve: &KmCurve, day: f64) -> Readout {
    Readout {
        day,
        survival: curve.survival_at(day),
        beyond_follow_up: day > curve.max_time,
    }
}

pub fn seven_day_readout(curve: &KmCurve) -> Readout {
    survival_readout(curve, 7.0)
}
