//! Survival modelling core for the PEER pneumonia mortality score.
//!
//! The crate is `no_std` + `alloc`. It contains the numerical pieces of the
//! pipeline: the L1-penalized Cox model and its Breslow baseline, MissForest
//! style imputation, concordance / Kaplan-Meier / calibration / Schoenfeld
//! diagnostics, the published PEER scorer and the baseline pneumonia scores,
//! nomogram construction and a synthetic cohort generator. File formats, plots
//! and the CLI live in the `peer` crate.
//!
//! Enable `std` for `std::error::Error` integration and `parallel` to spread
//! bootstrap replicates, CV folds and forest trees over a rayon pool. Results
//! do not depend on the degree of parallelism.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod calibration;
pub mod concordance;
pub mod cox;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod impute;
pub mod km;
pub mod math;
pub mod nomogram;
pub mod par;
pub mod rng;
pub mod rules;
pub mod schema;
pub mod schoenfeld;
pub mod scores;
pub mod synth;

pub use cox::{CoxFitConfig, CoxModel, HazardRatioTable};
pub use dataset::{PatientRecord, SplitAssignment, SurvivalData, SurvivalDataset};
pub use error::{Error, Result};
pub use km::KmCurve;
pub use schema::{FeatureDef, FeatureKind, FeatureSchema};
