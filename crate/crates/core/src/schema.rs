//! Cohort schema: ordered feature definitions and outcome columns.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    pub unit: String,
}

impl FeatureDef {
    pub fn continuous(name: &str, unit: &str) -> Self {
        FeatureDef {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
            unit: unit.to_string(),
        }
    }

    pub fn binary(name: &str) -> Self {
        FeatureDef {
            name: name.to_string(),
            kind: FeatureKind::Binary,
            unit: "0/1".to_string(),
        }
    }

    pub fn is_binary(&self) -> bool {
        self.kind == FeatureKind::Binary
    }
}

/// Column names of one time-to-event outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDef {
    pub name: String,
    pub time_column: String,
    pub event_column: String,
}

impl OutcomeDef {
    pub fn new(name: &str) -> Self {
        OutcomeDef {
            name: name.to_string(),
            time_column: format!("{name}_time_days"),
            event_column: format!("{name}_event"),
        }
    }
}

pub const DEATH: &str = "death";
pub const VASOPRESSOR: &str = "vasopressor";
pub const VENTILATOR: &str = "ventilator";

/// Ordered feature list plus outcome columns. The first outcome is the
/// primary one used for model fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDef>,
    pub outcomes: Vec<OutcomeDef>,
}

/// The 52 candidate covariates of the pneumonia cohort, in cohort order.
const PNEUMONIA_FEATURES: [(&str, &str); 47] = [
    ("rbcs", "millions/uL"),
    ("wbc", "thousands/uL"),
    ("platelets", "thousands/uL"),
    ("hemoglobin", "g/dL"),
    ("hct", "%"),
    ("rdw", "%"),
    ("mcv", "fL"),
    ("mch", "pg"),
    ("mchc", "g/dL"),
    ("neutrophils", "%"),
    ("lymphocytes", "%"),
    ("monocytes", "%"),
    ("eosinophils", "%"),
    ("basophils", "%"),
    ("bun", "mg/dL"),
    ("temperature", "degC"),
    ("ph", "pH"),
    ("sodium", "mmol/L"),
    ("glucose", "mg/dL"),
    ("pao2", "mmHg"),
    ("ldh", "units/L"),
    ("direct_bilirubin", "mg/L"),
    ("total_bilirubin", "mg/L"),
    ("total_protein", "g/dL"),
    ("albumin", "g/dL"),
    ("pt", "sec"),
    ("ptt", "sec"),
    ("ast", "units/L"),
    ("alt", "units/L"),
    ("creatinine", "mg/dL"),
    ("troponin", "ng/mL"),
    ("alkaline_phosphatase", "units/L"),
    ("bands", "%"),
    ("bicarbonate", "mmol/L"),
    ("calcium", "mg/dL"),
    ("chloride", "mmol/L"),
    ("potassium", "mmol/L"),
    ("age", "years"),
    ("heart_rate", "beats/min"),
    ("sao2", "%"),
    ("gcs", "points"),
    ("respiratory_rate", "breaths/min"),
    ("bp_systolic", "mmHg"),
    ("bp_diastolic", "mmHg"),
    ("bp_mean_arterial", "mmHg"),
    // 0/1 numerics, normalized like the other numeric columns
    ("pleural_effusion", "0/1"),
    ("orientation", "0/1 (1 = confused)"),
];

const PNEUMONIA_BINARY: [&str; 5] = ["African American", "Asian", "Caucasian", "Hispanic", "Male"];

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDef>, outcomes: Vec<OutcomeDef>) -> Result<Self> {
        let schema = FeatureSchema { features, outcomes };
        schema.validate()?;
        Ok(schema)
    }

    /// The pneumonia cohort layout: 47 numeric and 5 binary features and the
    /// death / vasopressor / ventilator outcomes.
    pub fn pneumonia() -> Self {
        let mut features: Vec<FeatureDef> = PNEUMONIA_FEATURES
            .iter()
            .map(|(n, u)| FeatureDef::continuous(n, u))
            .collect();
        features.extend(PNEUMONIA_BINARY.iter().map(|n| FeatureDef::binary(n)));
        FeatureSchema {
            features,
            outcomes: Self::standard_outcomes(),
        }
    }

    /// Generic numeric schema `x1..xd` with the standard outcomes.
    pub fn numbered(d: usize) -> Self {
        FeatureSchema {
            features: (1..=d)
                .map(|i| FeatureDef::continuous(&format!("x{i}"), ""))
                .collect(),
            outcomes: Self::standard_outcomes(),
        }
    }

    pub fn standard_outcomes() -> Vec<OutcomeDef> {
        [DEATH, VASOPRESSOR, VENTILATOR]
            .iter()
            .map(|n| OutcomeDef::new(n))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema has no features".into()));
        }
        if self.outcomes.is_empty() {
            return Err(Error::Schema("schema has no outcomes".into()));
        }
        let mut seen = BTreeSet::new();
        let columns = self.features.iter().map(|f| &f.name).chain(
            self.outcomes
                .iter()
                .flat_map(|o| [&o.time_column, &o.event_column]),
        );
        for name in columns {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{name}`")));
            }
        }
        Ok(())
    }

    /// Checks the stricter invariants of the 52-feature pneumonia layout.
    pub fn validate_pneumonia(&self) -> Result<()> {
        self.validate()?;
        if self.features.len() != 52 {
            return Err(Error::Schema(format!(
                "expected 52 features, found {}",
                self.features.len()
            )));
        }
        let binary = self.features.iter().filter(|f| f.is_binary()).count();
        if binary != 5 {
            return Err(Error::Schema(format!(
                "expected 5 binary features, found {binary}"
            )));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn outcome_index(&self, name: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o.name == name)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pneumonia_layout_is_valid() {
        let s = FeatureSchema::pneumonia();
        s.validate_pneumonia().unwrap();
        assert_eq!(s.feature_index("sao2"), Some(39));
        assert_eq!(s.feature_index("Male"), Some(51));
        assert!(s.features[s.feature_index("orientation").unwrap()].kind == FeatureKind::Continuous);
        assert_eq!(s.outcome_index(VENTILATOR), Some(2));
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = FeatureSchema::new(
            alloc::vec![FeatureDef::continuous("a", ""), FeatureDef::binary("a")],
            FeatureSchema::standard_outcomes(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn numbered_schema_fails_pneumonia_check() {
        assert!(FeatureSchema::numbered(20).validate_pneumonia().is_err());
    }
}
