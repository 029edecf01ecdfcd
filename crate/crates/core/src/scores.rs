//! Clinical risk scores: the published PEER model and the CURB-65, PSI/PORT
//! and SMART-COP baselines, plus high/low risk stratification.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ceil, exp, ln};
use crate::schema::FeatureSchema;

/// BUN (mg/dL) to urea (mmol/L).
pub const BUN_TO_UREA: f64 = 0.357;

/// Raw-unit inputs for every scorer. Numeric fields use the cohort units
/// (BUN mg/dL, albumin g/dL, temperature degC, pressures mmHg, SaO2 %).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClinicalInputs {
    pub age: Option<f64>,
    pub male: Option<bool>,
    pub heart_rate: Option<f64>,
    pub respiratory_rate: Option<f64>,
    pub bp_systolic: Option<f64>,
    pub bp_diastolic: Option<f64>,
    pub bp_mean_arterial: Option<f64>,
    pub temperature: Option<f64>,
    pub gcs: Option<f64>,
    pub confusion: Option<bool>,
    pub wbc: Option<f64>,
    pub platelets: Option<f64>,
    pub rdw: Option<f64>,
    pub neutrophils: Option<f64>,
    pub hct: Option<f64>,
    pub bun: Option<f64>,
    /// Urea in mmol/L; derived from BUN when absent.
    pub urea: Option<f64>,
    pub sodium: Option<f64>,
    pub glucose: Option<f64>,
    pub ph: Option<f64>,
    pub pao2: Option<f64>,
    pub sao2: Option<f64>,
    pub albumin: Option<f64>,
    pub ast: Option<f64>,
    pub direct_bilirubin: Option<f64>,
    pub troponin: Option<f64>,
    pub pt: Option<f64>,
    pub pleural_effusion: Option<bool>,
    pub nursing_home: Option<bool>,
    pub neoplastic_disease: Option<bool>,
    pub liver_disease: Option<bool>,
    pub congestive_heart_failure: Option<bool>,
    pub cerebrovascular_disease: Option<bool>,
    pub renal_disease: Option<bool>,
    pub multilobar_infiltrates: Option<bool>,
}

/// Field names accepted by [`ClinicalInputs::get`] and by rule files.
pub const FIELDS: &[&str] = &[
    "age",
    "male",
    "heart_rate",
    "respiratory_rate",
    "bp_systolic",
    "bp_diastolic",
    "bp_mean_arterial",
    "temperature",
    "gcs",
    "confusion",
    "wbc",
    "platelets",
    "rdw",
    "neutrophils",
    "hct",
    "bun",
    "urea",
    "sodium",
    "glucose",
    "ph",
    "pao2",
    "sao2",
    "albumin",
    "ast",
    "direct_bilirubin",
    "troponin",
    "pt",
    "pleural_effusion",
    "nursing_home",
    "neoplastic_disease",
    "liver_disease",
    "congestive_heart_failure",
    "cerebrovascular_disease",
    "renal_disease",
    "multilobar_infiltrates",
];

/// Which recorded variable defines "confusion" for the baseline scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfusionSource {
    /// `orientation == 1` (confused).
    #[default]
    Orientation,
    /// Glasgow Coma Scale below 15.
    GcsBelow15,
}

fn flag(b: Option<bool>) -> Option<f64> {
    b.map(|b| b as u8 as f64)
}

impl ClinicalInputs {
    /// Looks a field up by name; booleans read as 0/1.
    pub fn get(&self, field: &str) -> Result<Option<f64>> {
        Ok(match field {
            "age" => self.age,
            "male" => flag(self.male),
            "heart_rate" => self.heart_rate,
            "respiratory_rate" => self.respiratory_rate,
            "bp_systolic" => self.bp_systolic,
            "bp_diastolic" => self.bp_diastolic,
            "bp_mean_arterial" => self.bp_mean_arterial,
            "temperature" => self.temperature,
            "gcs" => self.gcs,
            "confusion" => flag(self.confusion),
            "wbc" => self.wbc,
            "platelets" => self.platelets,
            "rdw" => self.rdw,
            "neutrophils" => self.neutrophils,
            "hct" => self.hct,
            "bun" => self.bun,
            "urea" => self.urea_mmol(),
            "sodium" => self.sodium,
            "glucose" => self.glucose,
            "ph" => self.ph,
            "pao2" => self.pao2,
            "sao2" => self.sao2,
            "albumin" => self.albumin,
            "ast" => self.ast,
            "direct_bilirubin" => self.direct_bilirubin,
            "troponin" => self.troponin,
            "pt" => self.pt,
            "pleural_effusion" => flag(self.pleural_effusion),
            "nursing_home" => flag(self.nursing_home),
            "neoplastic_disease" => flag(self.neoplastic_disease),
            "liver_disease" => flag(self.liver_disease),
            "congestive_heart_failure" => flag(self.congestive_heart_failure),
            "cerebrovascular_disease" => flag(self.cerebrovascular_disease),
            "renal_disease" => flag(self.renal_disease),
            "multilobar_infiltrates" => flag(self.multilobar_infiltrates),
            other => return Err(Error::Validation(format!("unknown clinical field `{other}`"))),
        })
    }

    pub fn urea_mmol(&self) -> Option<f64> {
        self.urea.or(self.bun.map(|b| b * BUN_TO_UREA))
    }

    /// Builds inputs from one raw-unit cohort row.
    pub fn from_record(schema: &FeatureSchema, values: &[Option<f64>], confusion: ConfusionSource) -> Self {
        let v = |name: &str| schema.feature_index(name).and_then(|j| values[j]);
        let b = |name: &str| v(name).map(|x| x >= 0.5);
        ClinicalInputs {
            age: v("age"),
            male: b("Male"),
            heart_rate: v("heart_rate"),
            respiratory_rate: v("respiratory_rate"),
            bp_systolic: v("bp_systolic"),
            bp_diastolic: v("bp_diastolic"),
            bp_mean_arterial: v("bp_mean_arterial"),
            temperature: v("temperature"),
            gcs: v("gcs"),
            confusion: match confusion {
                ConfusionSource::Orientation => b("orientation"),
                ConfusionSource::GcsBelow15 => v("gcs").map(|g| g < 15.0),
            },
            wbc: v("wbc"),
            platelets: v("platelets"),
            rdw: v("rdw"),
            neutrophils: v("neutrophils"),
            hct: v("hct"),
            bun: v("bun"),
            urea: None,
            sodium: v("sodium"),
            glucose: v("glucose"),
            ph: v("ph"),
            pao2: v("pao2"),
            sao2: v("sao2"),
            albumin: v("albumin"),
            ast: v("ast"),
            direct_bilirubin: v("direct_bilirubin"),
            troponin: v("troponin"),
            pt: v("pt"),
            pleural_effusion: b("pleural_effusion"),
            ..Default::default()
        }
    }
}

/// One coefficient of the published model: hazard ratio per standard
/// deviation plus the normalization constants of the fitting cohort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeerEntry {
    pub feature: &'static str,
    pub hr: f64,
    pub mean: f64,
    pub std: f64,
}

const fn entry(feature: &'static str, hr: f64, mean: f64, std: f64) -> PeerEntry {
    PeerEntry { feature, hr, mean, std }
}

/// The 18 nonzero coefficients of the published PEER score.
pub const PUBLISHED_PEER: [PeerEntry; 18] = [
    entry("age", 1.22, 54.4, 12.5),
    entry("heart_rate", 1.13, 89.4, 17.8),
    entry("bp_systolic", 0.928, 122.0, 22.0),
    entry("bp_diastolic", 0.996, 67.7, 15.1),
    entry("bp_mean_arterial", 0.926, 83.7, 17.9),
    entry("gcs", 0.93, 11.3, 3.26),
    entry("wbc", 0.984, 12.9, 8.91),
    entry("platelets", 0.924, 208.0, 108.0),
    entry("rdw", 1.24, 15.8, 2.47),
    entry("neutrophils", 0.972, 79.1, 13.0),
    entry("bun", 1.07, 25.1, 19.5),
    entry("ast", 1.12, 143.0, 774.0),
    entry("direct_bilirubin", 1.03, 0.385, 0.816),
    entry("albumin", 0.954, 2.65, 0.636),
    entry("troponin", 1.06, 1.07, 3.85),
    entry("pt", 1.05, 16.6, 6.75),
    entry("ph", 0.856, 7.38, 0.0713),
    entry("sao2", 0.787, 95.8, 4.12),
];

/// Plausible ranges outside which a warning is attached, and hard limits
/// outside which a value is rejected.
fn physiologic_bounds(feature: &str) -> ((f64, f64), (f64, f64)) {
    const ANY: (f64, f64) = (0.0, f64::INFINITY);
    match feature {
        "age" => ((18.0, 70.0), (0.0, 130.0)),
        "heart_rate" => ((30.0, 200.0), ANY),
        "bp_systolic" => ((50.0, 250.0), ANY),
        "bp_diastolic" => ((20.0, 150.0), ANY),
        "bp_mean_arterial" => ((30.0, 180.0), ANY),
        "gcs" => ((3.0, 15.0), (3.0, 15.0)),
        "wbc" => ((0.5, 60.0), ANY),
        "platelets" => ((10.0, 1000.0), ANY),
        "rdw" => ((10.0, 35.0), (0.0, 100.0)),
        "neutrophils" => ((20.0, 100.0), (0.0, 100.0)),
        "bun" => ((2.0, 150.0), ANY),
        "ast" => ((5.0, 5000.0), ANY),
        "direct_bilirubin" => ((0.0, 20.0), ANY),
        "albumin" => ((1.0, 5.5), ANY),
        "troponin" => ((0.0, 50.0), ANY),
        "pt" => ((9.0, 60.0), ANY),
        "ph" => ((6.8, 7.8), (0.0, 14.0)),
        "sao2" => ((50.0, 100.0), (0.0, 100.0)),
        _ => (ANY, ANY),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerScore {
    pub log_hazard: f64,
    /// Hazard relative to a patient at the cohort means.
    pub hr_vs_mean: f64,
    pub warnings: Vec<String>,
}

/// A published (or user-supplied) linear Cox score with its normalization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublishedPeerModel {
    pub entries: Vec<PeerEntry>,
}

impl PublishedPeerModel {
    pub fn published() -> Self {
        PublishedPeerModel {
            entries: PUBLISHED_PEER.to_vec(),
        }
    }

    pub fn check_integrity(&self) -> Result<()> {
        for e in &self.entries {
            if !(e.std > 0.0 && e.std.is_finite()) {
                return Err(Error::Integrity(format!("`{}` has std {}", e.feature, e.std)));
            }
            if !(e.hr > 0.0 && e.hr.is_finite()) || !e.mean.is_finite() {
                return Err(Error::Integrity(format!("`{}` has hr {} mean {}", e.feature, e.hr, e.mean)));
            }
        }
        Ok(())
    }

    /// Canonical `feature,hr,mean,std` text of the constant table.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature,hr,mean,std\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{},{}\n", e.feature, e.hr, e.mean, e.std));
        }
        s
    }

    pub fn score(&self, inputs: &ClinicalInputs) -> Result<PeerScore> {
        self.check_integrity()?;
        let mut missing = Vec::new();
        let mut warnings = Vec::new();
        let mut log_hazard = 0.0;
        for e in &self.entries {
            let Some(x) = inputs.get(e.feature)? else {
                missing.push(e.feature.to_string());
                continue;
            };
            let ((soft_lo, soft_hi), (hard_lo, hard_hi)) = physiologic_bounds(e.feature);
            if !x.is_finite() || x < hard_lo || x > hard_hi {
                return Err(Error::ImpossibleValue {
                    field: e.feature.to_string(),
                    value: x,
                });
            }
            if x < soft_lo || x > soft_hi {
                warnings.push(format!("{} = {x} is outside [{soft_lo}, {soft_hi}]", e.feature));
            }
            log_hazard += ln(e.hr) * (x - e.mean) / e.std;
        }
        if !missing.is_empty() {
            return Err(Error::MissingInputs(missing));
        }
        Ok(PeerScore {
            log_hazard,
            hr_vs_mean: exp(log_hazard),
            warnings,
        })
    }
}

/// Scores the published PEER model.
pub fn peer_score(inputs: &ClinicalInputs) -> Result<PeerScore> {
    PublishedPeerModel::published().score(inputs)
}

fn require(inputs: &ClinicalInputs, fields: &[&str]) -> Result<()> {
    let missing: Vec<String> = fields
        .iter()
        .filter(|f| inputs.get(f).map(|v| v.is_none()).unwrap_or(true))
        .map(|f| f.to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingInputs(missing))
    }
}

fn val(inputs: &ClinicalInputs, f: &str) -> f64 {
    inputs.get(f).ok().flatten().unwrap_or(f64::NAN)
}

/// CURB-65, 0 to 5.
pub fn curb65(inputs: &ClinicalInputs) -> Result<u32> {
    require(inputs, &["confusion", "urea", "respiratory_rate", "age"])?;
    let low_bp = match (inputs.bp_systolic, inputs.bp_diastolic) {
        (Some(s), _) if s < 90.0 => true,
        (_, Some(d)) if d <= 60.0 => true,
        (Some(_), Some(_)) => false,
        (None, _) => return Err(Error::MissingInputs(alloc::vec!["bp_systolic".to_string()])),
        (_, None) => return Err(Error::MissingInputs(alloc::vec!["bp_diastolic".to_string()])),
    };
    let v = |f| val(inputs, f);
    let points = (v("confusion") == 1.0) as u32
        + (v("urea") > 7.0) as u32
        + (v("respiratory_rate") >= 30.0) as u32
        + low_bp as u32
        + (v("age") >= 65.0) as u32;
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PsiClass {
    II,
    III,
    IV,
    V,
}

impl PsiClass {
    /// Class I needs the bedside history rule and is never assigned.
    pub fn from_points(points: i32) -> Self {
        match points {
            i32::MIN..=70 => PsiClass::II,
            71..=90 => PsiClass::III,
            91..=130 => PsiClass::IV,
            _ => PsiClass::V,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiResult {
    pub points: i32,
    pub class: PsiClass,
    pub warnings: Vec<String>,
}

const PSI_COMORBIDITIES: [(&str, i32); 6] = [
    ("nursing_home", 10),
    ("neoplastic_disease", 30),
    ("liver_disease", 20),
    ("congestive_heart_failure", 10),
    ("cerebrovascular_disease", 10),
    ("renal_disease", 10),
];

/// Pneumonia Severity Index (PORT) points and risk class.
pub fn psi_port(inputs: &ClinicalInputs) -> Result<PsiResult> {
    require(
        inputs,
        &[
            "age",
            "male",
            "confusion",
            "respiratory_rate",
            "bp_systolic",
            "temperature",
            "heart_rate",
            "ph",
            "bun",
            "sodium",
            "glucose",
            "hct",
            "pao2",
            "pleural_effusion",
        ],
    )?;
    let v = |f| val(inputs, f);
    let mut warnings = Vec::new();
    let age = v("age");
    let mut points = if v("male") == 1.0 { age } else { age - 10.0 } as i32;
    for (field, pts) in PSI_COMORBIDITIES {
        match inputs.get(field)? {
            Some(x) => points += pts * (x == 1.0) as i32,
            None => warnings.push(format!("{field} not recorded; assumed absent")),
        }
    }
    let temp = v("temperature");
    let table = [
        (v("confusion") == 1.0, 20),
        (v("respiratory_rate") >= 30.0, 20),
        (v("bp_systolic") < 90.0, 20),
        (temp < 35.0 || temp >= 40.0, 15),
        (v("heart_rate") >= 125.0, 10),
        (v("ph") < 7.35, 30),
        (v("bun") >= 30.0, 20),
        (v("sodium") < 130.0, 20),
        (v("glucose") >= 250.0, 10),
        (v("hct") < 30.0, 10),
        (v("pao2") < 60.0, 10),
        (v("pleural_effusion") == 1.0, 10),
    ];
    points += table.iter().filter(|(hit, _)| *hit).map(|(_, p)| p).sum::<i32>();
    Ok(PsiResult {
        points,
        class: PsiClass::from_points(points),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmartCop {
    pub points: u32,
    pub warnings: Vec<String>,
}

/// SMART-COP, 0 to 11, with the age-adjusted respiratory rate and
/// oxygenation thresholds.
pub fn smart_cop(inputs: &ClinicalInputs) -> Result<SmartCop> {
    require(inputs, &["age", "bp_systolic", "albumin", "respiratory_rate", "heart_rate", "confusion", "ph"])?;
    if inputs.pao2.is_none() && inputs.sao2.is_none() {
        return Err(Error::MissingInputs(alloc::vec!["pao2 or sao2".to_string()]));
    }
    let v = |f| val(inputs, f);
    let mut warnings = Vec::new();
    let young = v("age") <= 50.0;
    let multilobar = match inputs.multilobar_infiltrates {
        Some(m) => m,
        None => {
            warnings.push("multilobar_infiltrates not recorded; assumed absent".to_string());
            false
        }
    };
    let rr_limit = if young { 25.0 } else { 30.0 };
    let low_oxygen = inputs.pao2.is_some_and(|p| p < if young { 70.0 } else { 60.0 })
        || inputs.sao2.is_some_and(|s| s <= if young { 93.0 } else { 90.0 });
    let points = 2 * (v("bp_systolic") < 90.0) as u32
        + multilobar as u32
        + (v("albumin") < 3.5) as u32
        + (v("respiratory_rate") >= rr_limit) as u32
        + (v("heart_rate") >= 125.0) as u32
        + (v("confusion") == 1.0) as u32
        + 2 * low_oxygen as u32
        + 2 * (v("ph") < 7.35) as u32;
    Ok(SmartCop { points, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Low,
    High,
}

/// High/low split rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StratumRule {
    /// High when the score reaches the nearest-rank quantile of the training
    /// scores.
    Percentile { quantile: f64 },
    /// High when the score is at least the cutoff.
    AtLeast { cutoff: f64 },
}

impl StratumRule {
    pub const P90: StratumRule = StratumRule::Percentile { quantile: 0.9 };
    pub const CURB65: StratumRule = StratumRule::AtLeast { cutoff: 3.0 };
    pub const PSI: StratumRule = StratumRule::AtLeast { cutoff: 130.0 };

    pub fn describe(&self) -> String {
        match self {
            StratumRule::Percentile { quantile } => format!("high if score >= training {}th percentile", quantile * 100.0),
            StratumRule::AtLeast { cutoff } => format!("high if score >= {cutoff}"),
        }
    }

    /// The numeric cutoff, resolving percentiles against `training`.
    pub fn cutoff(&self, training: Option<&[f64]>) -> Result<f64> {
        match *self {
            StratumRule::AtLeast { cutoff } => Ok(cutoff),
            StratumRule::Percentile { quantile } => {
                let t = training.filter(|t| !t.is_empty()).ok_or_else(|| {
                    Error::Argument("percentile stratification needs training scores".into())
                })?;
                nearest_rank(t, quantile)
            }
        }
    }
}

/// The `ceil(q n)`-th smallest value (1-based).
pub fn nearest_rank(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("empty score vector".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Argument(format!("quantile {q} outside (0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // guard against q * n landing a hair above an integer
    let rank = (ceil(q * n as f64 - 1e-9) as usize).clamp(1, n);
    Ok(sorted[rank - 1])
}

pub fn stratify(scores: &[f64], rule: &StratumRule, training: Option<&[f64]>) -> Result<Vec<Stratum>> {
    let cutoff = rule.cutoff(training)?;
    Ok(scores
        .iter()
        .map(|&s| if s >= cutoff { Stratum::High } else { Stratum::Low })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_examples() {
        let t: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(nearest_rank(&t, 0.9).unwrap(), 9.0);
        let s = stratify(&[9.0, 8.5], &StratumRule::P90, Some(&t)).unwrap();
        assert_eq!(s, alloc::vec![Stratum::High, Stratum::Low]);
        let t30: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        assert_eq!(nearest_rank(&t30, 0.9).unwrap(), 27.0);
    }

    #[test]
    fn equal_scores_are_all_high() {
        let t = [2.0; 7];
        let s = stratify(&t, &StratumRule::P90, Some(&t)).unwrap();
        assert!(s.iter().all(|s| *s == Stratum::High));
    }

    #[test]
    fn percentile_needs_training() {
        assert!(stratify(&[1.0], &StratumRule::P90, Some(&[])).is_err());
        assert!(stratify(&[1.0], &StratumRule::P90, None).is_err());
    }

    #[test]
    fn fixed_cutoffs() {
        assert_eq!(stratify(&[3.0, 2.0], &StratumRule::CURB65, None).unwrap(), alloc::vec![Stratum::High, Stratum::Low]);
        assert_eq!(
            stratify(&[129.0, 130.0, 131.0], &StratumRule::PSI, None).unwrap(),
            alloc::vec![Stratum::Low, Stratum::High, Stratum::High]
        );
    }

    #[test]
    fn psi_class_boundaries() {
        assert_eq!(PsiClass::from_points(70), PsiClass::II);
        assert_eq!(PsiClass::from_points(71), PsiClass::III);
        assert_eq!(PsiClass::from_points(130), PsiClass::IV);
        assert_eq!(PsiClass::from_points(131), PsiClass::V);
    }

    #[test]
    fn integrity_check_catches_bad_std() {
        let mut m = PublishedPeerModel::published();
        m.entries[3].std = 0.0;
        assert!(matches!(m.score(&ClinicalInputs::default()), Err(Error::Integrity(_))));
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(ClinicalInputs::default().get("lactate").is_err());
        for f in FIELDS {
            assert!(ClinicalInputs::default().get(f).is_ok());
        }
    }
}
