use peer_core::concordance::{concordance, concordance_ci, pair_counts};
use peer_core::rng;
use proptest::prelude::*;
use rand::Rng;

/// Exhaustive pair enumeration: (concordant, tied-risk, comparable).
fn brute(risks: &[f64], times: &[f64], events: &[bool]) -> (u64, u64, u64) {
    let (mut c, mut t, mut n) = (0, 0, 0);
    for i in 0..risks.len() {
        for j in 0..risks.len() {
            if events[i] && times[i] < times[j] {
                n += 1;
                if risks[i] > risks[j] {
                    c += 1;
                } else if risks[i] == risks[j] {
                    t += 1;
                }
            }
        }
    }
    (c, t, n)
}

fn instance(seed: u64) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut r = rng::rng(seed);
    let n = r.gen_range(2..=300);
    let censor = r.gen_range(0.0..0.9);
    // coarse grids force tied times and tied risks
    let risks = (0..n).map(|_| (r.gen_range(0..40) as f64) / 4.0).collect();
    let times = (0..n).map(|_| r.gen_range(1..60) as f64).collect();
    let events = (0..n).map(|_| r.gen::<f64>() >= censor).collect();
    (risks, times, events)
}

#[test]
fn fenwick_counts_equal_brute_force() {
    for seed in 0..200 {
        let (r, t, e) = instance(seed);
        let fast = pair_counts(&r, &t, &e);
        let (c, ties, n) = brute(&r, &t, &e);
        assert_eq!((fast.concordant, fast.tied_risk, fast.comparable), (c, ties, n), "seed {seed}");
        if n > 0 {
            let exact = (2 * c + ties) as f64 / (2 * n) as f64;
            assert_eq!(concordance(&r, &t, &e).unwrap().cindex, exact);
        }
    }
}

#[test]
fn no_comparable_pairs_is_an_error() {
    assert!(concordance(&[1.0, 2.0], &[3.0, 3.0], &[true, true]).is_err());
    assert!(concordance(&[1.0, 2.0], &[1.0, 2.0], &[false, false]).is_err());
}

#[test]
fn null_interval_covers_half() {
    let mut covered = 0;
    for rep in 0..50 {
        let mut r = rng::rng(10_000 + rep);
        let n = 200;
        let risks: Vec<f64> = (0..n).map(|_| r.gen()).collect();
        let times: Vec<f64> = (0..n).map(|_| r.gen::<f64>() * 10.0 + 0.01).collect();
        let events: Vec<bool> = (0..n).map(|_| r.gen::<f64>() < 0.7).collect();
        let c = concordance_ci(&risks, &times, &events, 500, rep).unwrap();
        assert!(c.ci_low <= c.ci_high);
        covered += (c.ci_low <= 0.5 && 0.5 <= c.ci_high) as usize;
    }
    assert!(covered >= 45, "covered {covered}/50");
}

proptest! {
    #[test]
    fn invariant_under_increasing_transform(
        data in prop::collection::vec((0u32..50, 1u32..30, any::<bool>()), 2..120)
    ) {
        let risks: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
        let times: Vec<f64> = data.iter().map(|d| d.1 as f64).collect();
        let events: Vec<bool> = data.iter().map(|d| d.2).collect();
        let a = pair_counts(&risks, &times, &events);
        let transformed: Vec<f64> = risks.iter().map(|r| (r / 7.0).exp() * 3.0 - 1.0).collect();
        let b = pair_counts(&transformed, &times, &events);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_is_deterministic(seed in 0u64..1000) {
        let (r, t, e) = instance(seed);
        if let Ok(a) = concordance_ci(&r, &t, &e, 20, seed) {
            let b = concordance_ci(&r, &t, &e, 20, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
