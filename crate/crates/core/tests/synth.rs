use peer_core::concordance::concordance;
use peer_core::schema::FeatureSchema;
use peer_core::synth::{apply_missingness_profile, generate, SynthCohort, SynthConfig};

fn oracle_cindex(c: &SynthCohort) -> f64 {
    let d = c.complete.survival_data(0).unwrap();
    concordance(&c.truth.linear_predictor, &d.time, &d.event).unwrap().cindex
}

#[test]
fn null_truth_gives_half_concordance() {
    let c = generate(&SynthConfig::numbered(2000, vec![0.0; 5], 21)).unwrap();
    let ci = oracle_cindex(&c);
    // the true predictor is identically zero, so every pair is tied
    assert!((ci - 0.5).abs() <= 0.03, "c = {ci}");
}

#[test]
fn strong_single_effect_is_discriminative() {
    let mut beta = vec![0.0; 5];
    beta[0] = 2.0;
    let c = generate(&SynthConfig::numbered(2000, beta, 22)).unwrap();
    assert!(oracle_cindex(&c) > 0.75);
}

#[test]
fn pneumonia_layout_hits_death_rate() {
    let c = generate(&SynthConfig::pneumonia(3000, 1.0, 8)).unwrap();
    let events = c.dataset.records.iter().filter(|r| r.outcomes[0].event).count();
    let frac = events as f64 / 3000.0;
    assert!((frac - 0.075).abs() <= 0.05, "death fraction {frac}");
    assert_eq!(c.dataset.schema, FeatureSchema::pneumonia());
}

#[test]
fn sao2_masking_matches_external_rate() {
    let c = generate(&SynthConfig::pneumonia(937, 1.0, 3)).unwrap();
    let j = c.complete.schema.feature_index("sao2").unwrap();
    let mut profile = vec![0.0; c.complete.n_features()];
    profile[j] = 0.726;
    let masked = apply_missingness_profile(&c.complete, &profile, 77).unwrap();
    let k = masked.missing_count(j) as f64;
    let sd = (937.0 * 0.726 * 0.274_f64).sqrt();
    assert!((k - 680.0).abs() <= 3.0 * sd, "masked {k}");
    for i in 0..masked.n_features() {
        if i != j {
            assert_eq!(masked.missing_count(i), 0);
        }
    }
    assert_eq!(masked, apply_missingness_profile(&c.complete, &profile, 77).unwrap());
}
