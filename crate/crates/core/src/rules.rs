//! User-supplied tabular scores: threshold rules worth points plus an
//! optional linear block, evaluated over [`ClinicalInputs`] fields.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::{ClinicalInputs, FIELDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
}

impl Op {
    pub fn test(self, x: f64, threshold: f64) -> bool {
        match self {
            Op::Lt => x < threshold,
            Op::Le => x <= threshold,
            Op::Gt => x > threshold,
            Op::Ge => x >= threshold,
            Op::Eq => x == threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub field: String,
    pub op: Op,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub field: String,
    pub op: Op,
    pub threshold: f64,
    pub points: f64,
    /// Rules sharing a group contribute the largest firing award once.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Extra predicates that must all hold for the rule to apply.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub when: Vec<Condition>,
    /// A missing field means "does not fire" instead of an error.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub optional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearTerm {
    pub field: String,
    pub coef: f64,
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "one")]
    pub std: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularScore {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub linear: Vec<LinearTerm>,
}

/// JSON re-encodings of the built-in scores, in the rule-file format.
pub const BUILTIN_RULE_FILES: [(&str, &str); 4] = [
    ("curb65", include_str!("../data/rules/curb65.json")),
    ("psi_port", include_str!("../data/rules/psi_port.json")),
    ("smart_cop", include_str!("../data/rules/smart_cop.json")),
    ("peer", include_str!("../data/rules/peer.json")),
];

/// The golden constant table of the published PEER model.
pub const PEER_CONSTANTS_CSV: &str = include_str!("../data/peer_constants.csv");

fn known(field: &str) -> Result<()> {
    if FIELDS.contains(&field) {
        Ok(())
    } else {
        Err(Error::Validation(format!("unknown field `{field}` in rule file")))
    }
}

impl TabularScore {
    pub fn validate(&self) -> Result<()> {
        for r in &self.rules {
            known(&r.field)?;
            for c in &r.when {
                known(&c.field)?;
                if !c.threshold.is_finite() {
                    return Err(Error::Validation(format!("non-finite threshold on `{}`", c.field)));
                }
            }
            if !r.threshold.is_finite() || !r.points.is_finite() {
                return Err(Error::Validation(format!("non-finite threshold or points on `{}`", r.field)));
            }
        }
        for t in &self.linear {
            known(&t.field)?;
            if !(t.std > 0.0) || !t.coef.is_finite() || !t.mean.is_finite() {
                return Err(Error::Validation(format!("bad linear term on `{}`", t.field)));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, inputs: &ClinicalInputs) -> Result<f64> {
        self.validate()?;
        let mut missing: Vec<String> = Vec::new();
        let mut fetch = |field: &str, optional: bool| -> Result<Option<f64>> {
            let v = inputs.get(field)?;
            if v.is_none() && !optional && !missing.iter().any(|m| m == field) {
                missing.push(field.to_string());
            }
            Ok(v)
        };

        let mut total = 0.0;
        let mut groups: Vec<(&str, f64)> = Vec::new();
        for r in &self.rules {
            let mut applies = true;
            for c in &r.when {
                match fetch(&c.field, r.optional)? {
                    Some(x) => applies &= c.op.test(x, c.threshold),
                    None => applies = false,
                }
            }
            if !applies {
                continue;
            }
            let fired = match fetch(&r.field, r.optional)? {
                Some(x) => r.op.test(x, r.threshold),
                None => false,
            };
            let award = if fired { r.points } else { 0.0 };
            match &r.group {
                None => total += award,
                Some(g) => match groups.iter_mut().find(|(name, _)| *name == g.as_str()) {
                    Some((_, best)) => *best = best.max(award),
                    None => groups.push((g.as_str(), award)),
                },
            }
        }
        total += groups.iter().map(|(_, p)| p).sum::<f64>();
        for t in &self.linear {
            if let Some(x) = fetch(&t.field, false)? {
                total += t.coef * (x - t.mean) / t.std;
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingInputs(missing));
        }
        Ok(total)
    }
}
