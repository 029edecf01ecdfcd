mod common;

use peer_core::dataset::{OutcomeValue, PatientRecord, SurvivalDataset};
use peer_core::impute::{impute, impute_with_model, ImputeConfig};
use peer_core::schema::FeatureSchema;
use peer_core::synth::{apply_missingness_profile, generate, SynthConfig};
use peer_core::{math, rng};

fn dataset(rows: Vec<Vec<Option<f64>>>) -> SurvivalDataset {
    let d = rows[0].len();
    let records = rows
        .into_iter()
        .enumerate()
        .map(|(i, values)| PatientRecord {
            id: format!("p{i}"),
            values,
            outcomes: vec![OutcomeValue { time: 1.0 + i as f64, event: i % 2 == 0 }; 3],
        })
        .collect();
    SurvivalDataset::new(FeatureSchema::numbered(d), records).unwrap()
}

#[test]
fn duplicate_column_recovers_hidden_value() {
    let mut r = rng::rng(12);
    let base: Vec<f64> = (0..200).map(|_| common::normal(&mut r)).collect();
    let hidden = 17;
    let rows = (0..200)
        .map(|i| vec![Some(base[i]), if i == hidden { None } else { Some(base[i]) }])
        .collect();
    let ds = dataset(rows);
    let out = impute(&ds, &ImputeConfig { seed: 5, ..Default::default() }).unwrap();
    let sigma = math::sample_std(&base);
    let err = (out.data.records[hidden].values[1].unwrap() - base[hidden]).abs();
    assert!(err < 0.25 * sigma, "error {err} vs sigma {sigma}");
}

#[test]
fn observed_values_preserved_and_range_respected() {
    let cohort = generate(&SynthConfig::numbered(300, vec![0.5, 0.0, -0.3, 0.2, 0.0, 0.0], 3)).unwrap();
    let masked = apply_missingness_profile(&cohort.complete, &[0.1, 0.3, 0.05, 0.0, 0.2, 0.15], 9).unwrap();
    let cfg = ImputeConfig { n_trees: 30, seed: 1, ..Default::default() };
    let out = impute(&masked, &cfg).unwrap();
    assert!(out.data.is_complete());
    assert_eq!(out.convergence_trace.len(), out.iterations_run);
    for j in 0..masked.n_features() {
        let obs: Vec<f64> = masked.column(j).into_iter().flatten().collect();
        let (lo, hi) = obs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for (a, b) in masked.records.iter().zip(&out.data.records) {
            match a.values[j] {
                Some(v) => assert_eq!(v.to_bits(), b.values[j].unwrap().to_bits()),
                None => {
                    let v = b.values[j].unwrap();
                    assert!(v >= lo && v <= hi);
                }
            }
        }
    }
    let again = impute(&masked, &cfg).unwrap();
    assert_eq!(out.data, again.data);
    assert_eq!(out.convergence_trace, again.convergence_trace);
}

#[test]
fn frozen_model_imputes_a_second_cohort() {
    let cohort = generate(&SynthConfig::numbered(400, vec![0.5, 0.5, 0.0, 0.0], 4)).unwrap();
    let masked = apply_missingness_profile(&cohort.complete, &[0.2, 0.1, 0.0, 0.1], 2).unwrap();
    let split = masked.split(0.7, 1).unwrap();
    let train = masked.subset(&split.train_index);
    let test = masked.subset(&split.test_index);
    let (fitted, model) = impute_with_model(&train, &ImputeConfig { n_trees: 20, ..Default::default() }).unwrap();
    assert!(fitted.data.is_complete());
    let filled = model.apply(&test).unwrap();
    assert!(filled.is_complete());
    for (a, b) in test.records.iter().zip(&filled.records) {
        for (x, y) in a.values.iter().zip(&b.values) {
            if let Some(x) = x {
                assert_eq!(Some(*x), *y);
            }
        }
    }
}
