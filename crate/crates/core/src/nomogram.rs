//! Point-scale nomograms for linear Cox scores, with SVG and text rendering.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cox::CoxModel;
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::math::{self, abs, ceil, exp, floor, ln, powf};
use crate::scores::PublishedPeerModel;

/// Largest span any single feature may occupy.
pub const MAX_POINTS: f64 = 100.0;
/// Tick quantization used when rendering.
pub const QUANTUM: f64 = 0.5;

/// One linear term `beta * (x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub feature: String,
    pub beta: f64,
    pub mean: f64,
    pub std: f64,
}

impl Term {
    pub fn from_model(model: &CoxModel) -> Vec<Term> {
        model
            .support()
            .into_iter()
            .map(|j| Term {
                feature: model.feature_names[j].clone(),
                beta: model.beta[j],
                mean: model.norm_stats[j].mean,
                std: model.norm_stats[j].std,
            })
            .collect()
    }

    pub fn from_published(model: &PublishedPeerModel) -> Vec<Term> {
        model
            .entries
            .iter()
            .map(|e| Term {
                feature: e.feature.to_string(),
                beta: ln(e.hr),
                mean: e.mean,
                std: e.std,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAxis {
    pub term: Term,
    pub lo: f64,
    pub hi: f64,
    /// Raw value that scores 0 points.
    pub reference: f64,
    /// Signed; positive when the hazard rises with the feature.
    pub points_per_unit: f64,
    pub max_points: f64,
}

impl FeatureAxis {
    pub fn points(&self, x: f64) -> f64 {
        self.points_per_unit * (x - self.reference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub slope: f64,
    pub intercept: f64,
}

impl Affine {
    pub fn apply(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalMap {
    pub horizon: f64,
    /// Baseline cumulative hazard at the horizon.
    pub cumhaz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomogramSpec {
    pub axes: Vec<FeatureAxis>,
    /// Points per unit of linear predictor.
    pub scale: f64,
    pub total_points_to_log_hazard: Affine,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub survival: Option<SurvivalMap>,
}

/// Builds the point scales. `ranges[k]` is the raw-unit axis of `terms[k]`.
pub fn build_nomogram(terms: &[Term], ranges: &[(f64, f64)]) -> Result<NomogramSpec> {
    if terms.len() != ranges.len() {
        return Err(Error::Argument(format!("{} terms but {} ranges", terms.len(), ranges.len())));
    }
    let mut kept = Vec::new();
    for (t, &(lo, hi)) in terms.iter().zip(ranges) {
        if t.beta == 0.0 {
            continue;
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Argument(format!("degenerate axis range [{lo}, {hi}] for `{}`", t.feature)));
        }
        if !(t.std > 0.0) {
            return Err(Error::Argument(format!("nonpositive std for `{}`", t.feature)));
        }
        kept.push((t, lo, hi));
    }
    if kept.is_empty() {
        return Err(Error::NothingToPlot);
    }
    let widest = kept
        .iter()
        .map(|(t, lo, hi)| abs(t.beta) * (hi - lo) / t.std)
        .fold(0.0, f64::max);
    let scale = MAX_POINTS / widest;
    let mut intercept = 0.0;
    let axes = kept
        .into_iter()
        .map(|(t, lo, hi)| {
            let reference = if t.beta > 0.0 { lo } else { hi };
            intercept += t.beta * (reference - t.mean) / t.std;
            FeatureAxis {
                term: t.clone(),
                lo,
                hi,
                reference,
                points_per_unit: t.beta / t.std * scale,
                max_points: abs(t.beta) * (hi - lo) / t.std * scale,
            }
        })
        .collect();
    Ok(NomogramSpec {
        axes,
        scale,
        total_points_to_log_hazard: Affine {
            slope: 1.0 / scale,
            intercept,
        },
        survival: None,
    })
}

/// 1st to 99th percentile (type 7) of the observed raw values of each term.
pub fn default_ranges(ds: &SurvivalDataset, terms: &[Term]) -> Result<Vec<(f64, f64)>> {
    terms
        .iter()
        .map(|t| {
            let j = ds
                .schema
                .feature_index(&t.feature)
                .ok_or_else(|| Error::Schema(format!("feature `{}` not in cohort", t.feature)))?;
            let stats = ds.norm_stats.as_ref().map(|s| s.get(j));
            let obs: Vec<f64> = ds
                .records
                .iter()
                .filter_map(|r| r.values[j])
                .map(|v| stats.map_or(v, |s| s.invert(v)))
                .collect();
            if obs.is_empty() {
                return Err(Error::Argument(format!("no observed values for `{}`", t.feature)));
            }
            Ok((math::quantile(&obs, 0.01), math::quantile(&obs, 0.99)))
        })
        .collect()
}

impl NomogramSpec {
    pub fn with_survival(mut self, horizon: f64, cumhaz: f64) -> Self {
        self.survival = Some(SurvivalMap { horizon, cumhaz });
        self
    }

    pub fn total_max(&self) -> f64 {
        self.axes.iter().map(|a| a.max_points).sum()
    }

    /// Points of one raw value; values outside the axis are rejected.
    pub fn lookup(&self, feature: &str, x: f64) -> Result<f64> {
        let a = self
            .axes
            .iter()
            .find(|a| a.term.feature == feature)
            .ok_or_else(|| Error::Argument(format!("`{feature}` is not on the nomogram")))?;
        if !(x >= a.lo && x <= a.hi) {
            return Err(Error::OutOfRange {
                feature: feature.to_string(),
                value: x,
                lo: a.lo,
                hi: a.hi,
            });
        }
        Ok(a.points(x))
    }

    /// Total points for raw values given in axis order.
    pub fn total_points(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.axes.len() {
            return Err(Error::Argument(format!("{} values for {} axes", values.len(), self.axes.len())));
        }
        self.axes
            .iter()
            .zip(values)
            .map(|(a, &x)| self.lookup(&a.term.feature, x))
            .sum()
    }

    pub fn log_hazard(&self, total_points: f64) -> f64 {
        self.total_points_to_log_hazard.apply(total_points)
    }

    pub fn survival_at(&self, total_points: f64) -> Option<f64> {
        self.survival.map(|s| exp(-s.cumhaz * exp(self.log_hazard(total_points))))
    }

    pub fn render(&self, format: &str) -> Result<String> {
        match format {
            "svg" => Ok(self.render_svg()),
            "text" | "txt" => Ok(self.render_text()),
            other => Err(Error::Argument(format!("unsupported nomogram format `{other}`"))),
        }
    }

    fn render_text(&self) -> String {
        let mut out = String::new();
        let slope = self.total_points_to_log_hazard.slope;
        let _ = writeln!(out, "NOMOGRAM");
        let _ = writeln!(out, "log hazard = {} * total points + {}", num(slope), num(self.total_points_to_log_hazard.intercept));
        for a in &self.axes {
            let _ = writeln!(out);
            let _ = writeln!(out, "{} [{} .. {}]", a.term.feature, num(a.lo), num(a.hi));
            let _ = writeln!(out, "{:>14}  {:>7}", "value", "points");
            for x in nice_ticks(a.lo, a.hi, 6) {
                let _ = writeln!(out, "{:>14}  {:>7}", num(x), num(quantize(a.points(x))));
            }
        }
        let _ = writeln!(out);
        match self.survival {
            Some(s) => {
                let _ = writeln!(out, "{:>12}  {:>10}  {:>10}", "total", "log hazard", format!("S({})", num(s.horizon)));
            }
            None => {
                let _ = writeln!(out, "{:>12}  {:>10}", "total", "log hazard");
            }
        }
        for t in nice_ticks(0.0, self.total_max(), 10) {
            let lh = self.log_hazard(t);
            match self.survival_at(t) {
                Some(sv) => {
                    let _ = writeln!(out, "{:>12}  {:>10.4}  {:>10.4}", num(t), lh, sv);
                }
                None => {
                    let _ = writeln!(out, "{:>12}  {:>10.4}", num(t), lh);
                }
            }
        }
        out
    }

    fn render_svg(&self) -> String {
        const LEFT: f64 = 180.0;
        const WIDTH: f64 = 600.0;
        const ROW: f64 = 50.0;
        let total_max = self.total_max();
        let rows = self.axes.len() + 2 + self.survival.is_some() as usize;
        let height = ROW * (rows as f64 + 1.0);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
            LEFT + WIDTH + 40.0,
            height
        );
        let mut y = ROW;
        let px = |p: f64| LEFT + WIDTH * p / MAX_POINTS;
        let ticks: Vec<(f64, String)> = nice_ticks(0.0, MAX_POINTS, 10).into_iter().map(|p| (px(p), num(p))).collect();
        axis(&mut s, "Points", y, &ticks);
        for a in &self.axes {
            y += ROW;
            let ticks: Vec<(f64, String)> = nice_ticks(a.lo, a.hi, 6)
                .into_iter()
                .map(|x| (px(quantize(a.points(x))), num(x)))
                .collect();
            axis(&mut s, &a.term.feature, y, &ticks);
        }
        y += ROW;
        let tpx = |t: f64| LEFT + WIDTH * t / total_max;
        let totals = nice_ticks(0.0, total_max, 10);
        let ticks: Vec<(f64, String)> = totals.iter().map(|&t| (tpx(t), num(t))).collect();
        axis(&mut s, "Total points", y, &ticks);
        if let Some(sm) = self.survival {
            y += ROW;
            let ticks: Vec<(f64, String)> = totals
                .iter()
                .map(|&t| (tpx(t), format!("{:.2}", exp(-sm.cumhaz * exp(self.log_hazard(t))))))
                .collect();
            axis(&mut s, &format!("S({} d)", num(sm.horizon)), y, &ticks);
        }
        s.push_str("</svg>\n");
        s
    }
}

fn axis(s: &mut String, name: &str, y: f64, ticks: &[(f64, String)]) {
    let (x0, x1) = ticks
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| (a.min(*x), b.max(*x)));
    let _ = writeln!(s, r#"<g class="axis" data-name="{}">"#, escape(name));
    let _ = writeln!(s, r#"<text x="10" y="{:.1}">{}</text>"#, y + 4.0, escape(name));
    let _ = writeln!(s, r#"<line x1="{x0:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="black"/>"#);
    for (x, label) in ticks {
        let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{y:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, y - 5.0);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y - 8.0, escape(label));
    }
    s.push_str("</g>\n");
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn quantize(points: f64) -> f64 {
    math::round(points / QUANTUM) * QUANTUM
}

/// Short decimal rendering with trailing zeros removed.
fn num(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Round-number ticks covering `[lo, hi]`, endpoints included.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target.max(1) as f64;
    if !(raw > 0.0) {
        return alloc::vec![lo];
    }
    let mag = powf(10.0, floor(math::ln(raw) / core::f64::consts::LN_10));
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut out = alloc::vec![lo];
    let mut k = ceil(lo / step);
    loop {
        let v = k * step;
        if v >= hi - 1e-9 * step {
            break;
        }
        if v > lo + 1e-9 * step {
            out.push(v);
        }
        k += 1.0;
    }
    out.push(hi);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(name: &str, beta: f64, std: f64) -> Term {
        Term {
            feature: name.into(),
            beta,
            mean: 0.0,
            std,
        }
    }

    #[test]
    fn single_axis_scaling() {
        let spec = build_nomogram(&[term("x", 1.0, 1.0)], &[(0.0, 10.0)]).unwrap();
        assert_eq!(spec.lookup("x", 3.0).unwrap(), 30.0);
        assert_eq!(spec.lookup("x", 10.0).unwrap(), 100.0);
        assert!(matches!(spec.lookup("x", 10.5), Err(Error::OutOfRange { .. })));
        let svg = spec.render("svg").unwrap();
        assert_eq!(svg.matches(r#"class="axis""#).count(), 3);
        assert_eq!(svg, spec.render("svg").unwrap());
        assert!(spec.render("pdf").is_err());
    }

    #[test]
    fn symmetric_features_both_span_100() {
        let spec = build_nomogram(&[term("a", 0.5, 2.0), term("b", -1.0, 4.0)], &[(0.0, 4.0), (10.0, 14.0)]).unwrap();
        assert!((spec.axes[0].max_points - 100.0).abs() < 1e-12);
        assert!((spec.axes[1].max_points - 100.0).abs() < 1e-12);
        // negative coefficient: points fall as x rises
        assert!(spec.lookup("b", 10.0).unwrap() > spec.lookup("b", 14.0).unwrap());
    }

    #[test]
    fn total_points_invert_to_log_hazard() {
        let terms = [term("a", 0.7, 2.0), term("b", -0.3, 0.5)];
        let spec = build_nomogram(&terms, &[(-3.0, 5.0), (1.0, 2.0)]).unwrap();
        let (xa, xb) = (1.3, 1.8);
        let lp = 0.7 * xa / 2.0 - 0.3 * xb / 0.5;
        let t = spec.total_points(&[xa, xb]).unwrap();
        assert!((spec.log_hazard(t) - lp).abs() < 1e-12);
    }

    #[test]
    fn zero_model_has_nothing_to_plot() {
        assert!(matches!(build_nomogram(&[term("a", 0.0, 1.0)], &[(0.0, 1.0)]), Err(Error::NothingToPlot)));
        assert!(matches!(build_nomogram(&[term("a", 1.0, 1.0)], &[(1.0, 1.0)]), Err(Error::Argument(_))));
    }

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(0.0, 100.0, 10);
        assert_eq!(t.first(), Some(&0.0));
        assert_eq!(t.last(), Some(&100.0));
        assert_eq!(t.len(), 11);
        let t = nice_ticks(7.2, 7.6, 6);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }
}
