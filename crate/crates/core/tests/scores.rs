use peer_core::error::Error;
use peer_core::rng;
use peer_core::rules::TabularScore;
use peer_core::scores::{
    curb65, peer_score, psi_port, smart_cop, stratify, ClinicalInputs, PsiClass, PublishedPeerModel, Stratum,
    StratumRule, PUBLISHED_PEER,
};
use rand::Rng;

fn rule_file(name: &str) -> TabularScore {
    let text = match name {
        "curb65" => include_str!("../data/rules/curb65.json"),
        "psi_port" => include_str!("../data/rules/psi_port.json"),
        "smart_cop" => include_str!("../data/rules/smart_cop.json"),
        "peer" => include_str!("../data/rules/peer.json"),
        _ => unreachable!(),
    };
    serde_json::from_str(text).unwrap()
}

fn at_means() -> ClinicalInputs {
    let mut c = ClinicalInputs::default();
    for e in PUBLISHED_PEER {
        set(&mut c, e.feature, e.mean);
    }
    c
}

fn set(c: &mut ClinicalInputs, field: &str, v: f64) {
    let slot = match field {
        "age" => &mut c.age,
        "heart_rate" => &mut c.heart_rate,
        "bp_systolic" => &mut c.bp_systolic,
        "bp_diastolic" => &mut c.bp_diastolic,
        "bp_mean_arterial" => &mut c.bp_mean_arterial,
        "gcs" => &mut c.gcs,
        "wbc" => &mut c.wbc,
        "platelets" => &mut c.platelets,
        "rdw" => &mut c.rdw,
        "neutrophils" => &mut c.neutrophils,
        "bun" => &mut c.bun,
        "ast" => &mut c.ast,
        "direct_bilirubin" => &mut c.direct_bilirubin,
        "albumin" => &mut c.albumin,
        "troponin" => &mut c.troponin,
        "pt" => &mut c.pt,
        "ph" => &mut c.ph,
        "sao2" => &mut c.sao2,
        other => panic!("{other}"),
    };
    *slot = Some(v);
}

#[test]
fn constant_table_matches_golden_file() {
    let golden = include_str!("../data/peer_constants.csv");
    assert_eq!(PublishedPeerModel::published().to_csv(), golden);
    assert_eq!(PUBLISHED_PEER.len(), 18);
}

#[test]
fn mean_patient_scores_zero() {
    let s = peer_score(&at_means()).unwrap();
    assert!(s.log_hazard.abs() < 1e-12);
    assert!((s.hr_vs_mean - 1.0).abs() < 1e-12);
}

#[test]
fn one_sd_perturbations_reproduce_log_hazard_ratios() {
    for e in PUBLISHED_PEER {
        for sign in [1.0, -1.0] {
            let mut c = at_means();
            let x = e.mean + sign * e.std;
            set(&mut c, e.feature, x);
            if x < 0.0 {
                // skewed labs (AST, bilirubin, troponin) have mean - SD < 0
                assert!(matches!(peer_score(&c), Err(Error::ImpossibleValue { .. })), "{}", e.feature);
                continue;
            }
            let s = peer_score(&c).unwrap();
            assert!((s.log_hazard - sign * e.hr.ln()).abs() < 1e-12, "{} {sign}", e.feature);
        }
    }
    let mut c = at_means();
    c.sao2 = Some(95.8 - 4.12);
    assert!((peer_score(&c).unwrap().log_hazard - 0.2395).abs() < 5e-5);
    let mut c = at_means();
    c.age = Some(54.4 + 12.5);
    assert!((peer_score(&c).unwrap().log_hazard - 0.1989).abs() < 5e-5);
}

#[test]
fn peer_score_is_affine_and_signed() {
    for e in PUBLISHED_PEER {
        let mut a = at_means();
        let mut b = at_means();
        set(&mut a, e.feature, e.mean + 0.1 * e.std);
        set(&mut b, e.feature, e.mean + 0.6 * e.std);
        let slope = (peer_score(&b).unwrap().log_hazard - peer_score(&a).unwrap().log_hazard) / (0.5 * e.std);
        assert!((slope - e.hr.ln() / e.std).abs() < 1e-12 * (1.0 + slope.abs()) / e.std.min(1.0));
    }
    let mut older = at_means();
    older.age = Some(70.0);
    assert!(peer_score(&older).unwrap().log_hazard > 0.0);
    let mut oxygenated = at_means();
    oxygenated.sao2 = Some(99.0);
    assert!(peer_score(&oxygenated).unwrap().log_hazard < 0.0);
}

#[test]
fn peer_missing_and_impossible_inputs() {
    let mut c = at_means();
    c.age = None;
    c.ph = None;
    match peer_score(&c) {
        Err(Error::MissingInputs(m)) => assert_eq!(m, vec!["age".to_string(), "ph".to_string()]),
        other => panic!("{other:?}"),
    }
    let mut c = at_means();
    c.bp_systolic = Some(-5.0);
    assert!(matches!(peer_score(&c), Err(Error::ImpossibleValue { .. })));
    let mut c = at_means();
    c.heart_rate = Some(220.0);
    assert_eq!(peer_score(&c).unwrap().warnings.len(), 1);
}

fn normal_patient() -> ClinicalInputs {
    ClinicalInputs {
        age: Some(40.0),
        male: Some(true),
        heart_rate: Some(80.0),
        respiratory_rate: Some(16.0),
        bp_systolic: Some(120.0),
        bp_diastolic: Some(80.0),
        temperature: Some(37.0),
        gcs: Some(15.0),
        confusion: Some(false),
        hct: Some(40.0),
        bun: Some(10.0),
        sodium: Some(140.0),
        glucose: Some(100.0),
        ph: Some(7.40),
        pao2: Some(90.0),
        sao2: Some(98.0),
        albumin: Some(4.0),
        pleural_effusion: Some(false),
        nursing_home: Some(false),
        neoplastic_disease: Some(false),
        liver_disease: Some(false),
        congestive_heart_failure: Some(false),
        cerebrovascular_disease: Some(false),
        renal_disease: Some(false),
        multilobar_infiltrates: Some(false),
        ..Default::default()
    }
}

fn with(f: impl FnOnce(&mut ClinicalInputs)) -> ClinicalInputs {
    let mut c = normal_patient();
    f(&mut c);
    c
}

#[test]
fn curb65_fixtures() {
    let cases: Vec<(ClinicalInputs, u32)> = vec![
        (normal_patient(), 0),
        (
            with(|c| {
                c.confusion = Some(true);
                c.urea = Some(9.0);
                c.respiratory_rate = Some(32.0);
                c.bp_systolic = Some(85.0);
                c.age = Some(66.0);
            }),
            5,
        ),
        (with(|c| c.age = Some(65.0)), 1),
        (with(|c| c.age = Some(64.0)), 0),
        (with(|c| c.respiratory_rate = Some(30.0)), 1),
        (with(|c| c.respiratory_rate = Some(29.0)), 0),
        (with(|c| c.bp_systolic = Some(90.0)), 0),
        (with(|c| c.bp_systolic = Some(89.0)), 1),
        (with(|c| c.bp_diastolic = Some(60.0)), 1),
        (with(|c| c.urea = Some(7.0)), 0),
        (with(|c| c.bun = Some(20.0)), 1),
        (
            with(|c| {
                c.confusion = Some(true);
                c.age = Some(70.0);
                c.respiratory_rate = Some(30.0);
            }),
            3,
        ),
    ];
    for (k, (c, want)) in cases.iter().enumerate() {
        assert_eq!(curb65(c).unwrap(), *want, "case {k}");
    }
    let s = stratify(&[3.0, 2.0], &StratumRule::CURB65, None).unwrap();
    assert_eq!(s, vec![Stratum::High, Stratum::Low]);
    assert!(matches!(curb65(&with(|c| c.respiratory_rate = None)), Err(Error::MissingInputs(_))));
}

#[test]
fn psi_fixtures() {
    let man50 = || with(|c| c.age = Some(50.0));
    let cases: Vec<(ClinicalInputs, i32, PsiClass)> = vec![
        (man50(), 50, PsiClass::II),
        (
            with(|c| {
                c.age = Some(60.0);
                c.male = Some(false);
                c.ph = Some(7.30);
                c.bun = Some(35.0);
            }),
            100,
            PsiClass::IV,
        ),
        (with(|c| { c.age = Some(50.0); c.ph = Some(7.35) }), 50, PsiClass::II),
        (
            with(|c| {
                c.age = Some(50.0);
                c.neoplastic_disease = Some(true);
                c.liver_disease = Some(true);
                c.congestive_heart_failure = Some(true);
                c.respiratory_rate = Some(30.0);
            }),
            130,
            PsiClass::IV,
        ),
        (
            with(|c| {
                c.age = Some(51.0);
                c.neoplastic_disease = Some(true);
                c.liver_disease = Some(true);
                c.congestive_heart_failure = Some(true);
                c.respiratory_rate = Some(30.0);
            }),
            131,
            PsiClass::V,
        ),
        (with(|c| { c.age = Some(70.0); c.male = Some(false); c.nursing_home = Some(true) }), 70, PsiClass::II),
        (with(|c| { c.age = Some(71.0); c.male = Some(false); c.nursing_home = Some(true) }), 71, PsiClass::III),
        (with(|c| { c.age = Some(50.0); c.temperature = Some(34.9) }), 65, PsiClass::II),
        (with(|c| { c.age = Some(50.0); c.temperature = Some(40.0) }), 65, PsiClass::II),
        (with(|c| { c.age = Some(50.0); c.temperature = Some(39.9) }), 50, PsiClass::II),
        (with(|c| { c.age = Some(50.0); c.heart_rate = Some(125.0) }), 60, PsiClass::II),
        (with(|c| { c.age = Some(50.0); c.bp_systolic = Some(89.0) }), 70, PsiClass::II),
        (with(|c| { c.age = Some(50.0); c.bp_systolic = Some(90.0) }), 50, PsiClass::II),
        (
            with(|c| {
                c.age = Some(50.0);
                c.sodium = Some(129.0);
                c.glucose = Some(250.0);
                c.hct = Some(29.0);
                c.pao2 = Some(59.0);
                c.pleural_effusion = Some(true);
            }),
            110,
            PsiClass::IV,
        ),
    ];
    for (k, (c, pts, class)) in cases.iter().enumerate() {
        let r = psi_port(c).unwrap();
        assert_eq!((r.points, r.class), (*pts, *class), "case {k}");
        assert!(r.warnings.is_empty());
    }
    let labels = stratify(&[129.0, 130.0, 131.0], &StratumRule::PSI, None).unwrap();
    assert_eq!(labels, vec![Stratum::Low, Stratum::High, Stratum::High]);
    let unflagged = with(|c| {
        c.age = Some(50.0);
        c.nursing_home = None;
        c.renal_disease = None;
    });
    let r = psi_port(&unflagged).unwrap();
    assert_eq!(r.points, 50);
    assert_eq!(r.warnings.len(), 2);
}

#[test]
fn smart_cop_fixtures() {
    let cases: Vec<(ClinicalInputs, u32)> = vec![
        (normal_patient(), 0),
        (
            with(|c| {
                c.age = Some(45.0);
                c.respiratory_rate = Some(26.0);
                c.sao2 = Some(92.0);
                c.ph = Some(7.30);
            }),
            5,
        ),
        (with(|c| { c.age = Some(55.0); c.respiratory_rate = Some(26.0) }), 0),
        (with(|c| { c.age = Some(55.0); c.respiratory_rate = Some(30.0) }), 1),
        (with(|c| c.bp_systolic = Some(89.0)), 2),
        (with(|c| c.bp_systolic = Some(90.0)), 0),
        (with(|c| c.albumin = Some(3.4)), 1),
        (with(|c| c.albumin = Some(3.5)), 0),
        (with(|c| c.heart_rate = Some(125.0)), 1),
        (with(|c| c.ph = Some(7.35)), 0),
        (with(|c| c.ph = Some(7.34)), 2),
        (with(|c| { c.age = Some(51.0); c.pao2 = Some(65.0); c.sao2 = None }), 0),
        (with(|c| { c.age = Some(50.0); c.pao2 = Some(65.0); c.sao2 = None }), 2),
        (
            with(|c| {
                c.age = Some(60.0);
                c.bp_systolic = Some(80.0);
                c.multilobar_infiltrates = Some(true);
                c.albumin = Some(2.0);
                c.respiratory_rate = Some(35.0);
                c.heart_rate = Some(130.0);
                c.confusion = Some(true);
                c.sao2 = Some(85.0);
                c.ph = Some(7.2);
            }),
            11,
        ),
    ];
    for (k, (c, want)) in cases.iter().enumerate() {
        assert_eq!(smart_cop(c).unwrap().points, *want, "case {k}");
    }
    let r = smart_cop(&with(|c| c.multilobar_infiltrates = None)).unwrap();
    assert_eq!(r.warnings.len(), 1);
}

fn random_inputs(r: &mut rng::Rng) -> ClinicalInputs {
    let mut b = || r.gen::<bool>();
    let flags: Vec<bool> = (0..9).map(|_| b()).collect();
    ClinicalInputs {
        age: Some(r.gen_range(18..95) as f64),
        male: Some(flags[0]),
        heart_rate: Some(r.gen_range(50..160) as f64),
        respiratory_rate: Some(r.gen_range(10..40) as f64),
        bp_systolic: Some(r.gen_range(70..180) as f64),
        bp_diastolic: Some(r.gen_range(40..110) as f64),
        bp_mean_arterial: Some(r.gen_range(50.0..120.0)),
        temperature: Some(r.gen_range(340..410) as f64 / 10.0),
        gcs: Some(r.gen_range(3..=15) as f64),
        confusion: Some(flags[1]),
        wbc: Some(r.gen_range(1.0..30.0)),
        platelets: Some(r.gen_range(50.0..500.0)),
        rdw: Some(r.gen_range(11.0..25.0)),
        neutrophils: Some(r.gen_range(40.0..95.0)),
        hct: Some(r.gen_range(20..50) as f64),
        bun: Some(r.gen_range(5..60) as f64),
        urea: None,
        sodium: Some(r.gen_range(120..150) as f64),
        glucose: Some(r.gen_range(60..400) as f64),
        ph: Some(r.gen_range(715..750) as f64 / 100.0),
        pao2: Some(r.gen_range(40..120) as f64),
        sao2: Some(r.gen_range(80..=100) as f64),
        albumin: Some(r.gen_range(15..50) as f64 / 10.0),
        ast: Some(r.gen_range(10.0..400.0)),
        direct_bilirubin: Some(r.gen_range(0.0..3.0)),
        troponin: Some(r.gen_range(0.0..5.0)),
        pt: Some(r.gen_range(10.0..30.0)),
        pleural_effusion: Some(flags[2]),
        nursing_home: Some(flags[3]),
        neoplastic_disease: Some(flags[4]),
        liver_disease: Some(flags[5]),
        congestive_heart_failure: Some(flags[6]),
        cerebrovascular_disease: Some(flags[7]),
        renal_disease: Some(flags[8]),
        multilobar_infiltrates: Some(r.gen()),
    }
}

#[test]
fn tabular_encodings_match_builtins() {
    let (curb, psi, smart, peer) = (rule_file("curb65"), rule_file("psi_port"), rule_file("smart_cop"), rule_file("peer"));
    let mut r = rng::rng(77);
    for _ in 0..1000 {
        let c = random_inputs(&mut r);
        assert_eq!(curb.evaluate(&c).unwrap(), curb65(&c).unwrap() as f64);
        assert_eq!(psi.evaluate(&c).unwrap(), psi_port(&c).unwrap().points as f64);
        assert_eq!(smart.evaluate(&c).unwrap(), smart_cop(&c).unwrap().points as f64);
        let p = peer_score(&c).unwrap().log_hazard;
        assert!((peer.evaluate(&c).unwrap() - p).abs() < 1e-12);
    }
}

#[test]
fn integer_scores_are_bounded() {
    let mut r = rng::rng(3);
    for _ in 0..2000 {
        let c = random_inputs(&mut r);
        assert!(curb65(&c).unwrap() <= 5);
        assert!(smart_cop(&c).unwrap().points <= 11);
    }
}

#[test]
fn percentile_strata_invariant_under_monotone_transform() {
    let mut r = rng::rng(8);
    let train: Vec<f64> = (0..97).map(|_| r.gen_range(-3.0..3.0)).collect();
    let test: Vec<f64> = (0..40).map(|_| r.gen_range(-3.0..3.0)).collect();
    let f = |v: &[f64]| v.iter().map(|x: &f64| (2.0 * x).exp() + 5.0).collect::<Vec<_>>();
    let a = stratify(&test, &StratumRule::P90, Some(&train)).unwrap();
    let b = stratify(&f(&test), &StratumRule::P90, Some(&f(&train))).unwrap();
    assert_eq!(a, b);
}
