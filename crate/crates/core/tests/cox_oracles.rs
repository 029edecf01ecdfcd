mod common;

use common::cox_data;
use peer_core::cox::{self, CoxFitConfig, KKT_TOL};
use peer_core::dataset::SurvivalData;
use peer_core::rng;
use rand::Rng;

/// Direct O(n^2) Breslow log partial likelihood derivatives: returns
/// (nll, gradient, hessian) for the unpenalized problem.
fn brute_derivatives(data: &SurvivalData, beta: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let d = data.d;
    let eta = data.linear_predictor(beta);
    let mut nll = 0.0;
    let mut g = vec![0.0; d];
    let mut h = vec![0.0; d * d];
    for i in 0..data.n {
        if !data.event[i] {
            continue;
        }
        let risk: Vec<usize> = (0..data.n).filter(|&j| data.time[j] >= data.time[i]).collect();
        let s0: f64 = risk.iter().map(|&j| eta[j].exp()).sum();
        let mut mean = vec![0.0; d];
        for &j in &risk {
            let w = eta[j].exp() / s0;
            for a in 0..d {
                mean[a] += w * data.x[j * d + a];
            }
        }
        nll -= eta[i] - s0.ln();
        for a in 0..d {
            g[a] -= data.x[i * d + a] - mean[a];
        }
        for &j in &risk {
            let w = eta[j].exp() / s0;
            for a in 0..d {
                for b in 0..d {
                    h[a * d + b] += w * (data.x[j * d + a] - mean[a]) * (data.x[j * d + b] - mean[b]);
                }
            }
        }
    }
    (nll, g, h)
}

fn solve(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    // Gaussian elimination with partial pivoting
    let mut m: Vec<Vec<f64>> = (0..d).map(|i| {
        let mut row = a[i * d..(i + 1) * d].to_vec();
        row.push(b[i]);
        row
    }).collect();
    for c in 0..d {
        let p = (c..d).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        for r in 0..d {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=d {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    (0..d).map(|i| m[i][d] / m[i][i]).collect()
}

fn newton_raphson(data: &SurvivalData) -> Vec<f64> {
    let d = data.d;
    let mut beta = vec![0.0; d];
    for _ in 0..100 {
        let (f, g, h) = brute_derivatives(data, &beta);
        let step = solve(&h, &g, d);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
            if brute_derivatives(data, &cand).0 <= f + 1e-12 || t < 1e-8 {
                beta = cand;
                break;
            }
            t *= 0.5;
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-12 {
            break;
        }
    }
    beta
}

#[test]
fn unpenalized_fit_matches_newton_raphson() {
    for seed in 0..50 {
        let data = cox_data(50, &[0.8, -0.5, 0.0], 30.0, seed);
        let fit = cox::fit_data(&data, &CoxFitConfig::with_lambda(0.0), None).unwrap();
        let nr = newton_raphson(&data);
        for (a, b) in fit.beta.iter().zip(&nr) {
            assert!((a - b).abs() < 1e-4, "seed {seed}: {:?} vs {:?}", fit.beta, nr);
        }
        assert!(fit.kkt_residual <= KKT_TOL);
    }
}

#[test]
fn nll_and_gradient_match_brute_force() {
    let data = cox_data(40, &[0.3, 0.1, -0.7], 20.0, 11);
    let beta = [0.2, -0.4, 0.9];
    let (f, g, _) = brute_derivatives(&data, &beta);
    assert!((cox::neg_log_partial_likelihood(&beta, &data).unwrap() - f).abs() < 1e-10);
    for (a, b) in cox::gradient(&beta, &data).unwrap().iter().zip(&g) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..20 {
        let data = cox_data(30, &[0.5, -0.5, 0.2, 0.0, 1.0], 25.0, 100 + seed);
        let mut r = rng::rng(seed);
        let beta: Vec<f64> = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();
        let g = cox::gradient(&beta, &data).unwrap();
        for j in 0..5 {
            let h = 1e-6 * (1.0 + beta[j].abs());
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (cox::neg_log_partial_likelihood(&up, &data).unwrap()
                - cox::neg_log_partial_likelihood(&dn, &data).unwrap())
                / (2.0 * h);
            let rel = (g[j] - fd).abs() / g[j].abs().max(fd.abs());
            assert!(rel < 1e-5, "seed {seed} coord {j}: {} vs {fd}", g[j]);
        }
    }
}

#[test]
fn lambda_max_zeroes_everything() {
    for seed in 0..20 {
        let data = cox_data(60, &[1.0, -0.5, 0.3, 0.0], 30.0, 500 + seed);
        let lmax = cox::lambda_max(&data).unwrap();
        let fit = cox::fit_data(&data, &CoxFitConfig::with_lambda(lmax), None).unwrap();
        assert!(fit.beta.iter().all(|b| *b == 0.0), "seed {seed}: {:?}", fit.beta);
        let below = cox::fit_data(&data, &CoxFitConfig::with_lambda(0.9 * lmax), None).unwrap();
        assert!(below.support_size() >= 1);
    }
}

#[test]
fn penalized_fits_pass_kkt_and_descend() {
    for seed in 0..10 {
        let data = cox_data(80, &[1.0, -0.5, 0.3, 0.0, 0.0, 0.2], 30.0, 900 + seed);
        let lmax = cox::lambda_max(&data).unwrap();
        for frac in [0.5, 0.2, 0.05, 0.01] {
            let fit = cox::fit_data(&data, &CoxFitConfig::with_lambda(frac * lmax), None).unwrap();
            assert!(fit.kkt_residual <= KKT_TOL, "seed {seed}: kkt {}", fit.kkt_residual);
            assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-15 * w[0].abs()));
        }
    }
}

#[test]
fn warm_path_support_mostly_grows() {
    // support monotonicity is not a theorem; count violations only
    let data = cox_data(200, &[1.0, -0.8, 0.5, 0.3, 0.0, 0.0, 0.0, 0.1], 30.0, 4);
    let lmax = cox::lambda_max(&data).unwrap();
    let grid: Vec<f64> = (0..20).map(|k| lmax * 0.8f64.powi(k)).collect();
    let path = cox::fit_path(&data, &grid, &CoxFitConfig::default()).unwrap();
    let violations = path.windows(2).filter(|w| w[1].support_size() < w[0].support_size()).count();
    assert!(violations <= 2, "{violations} support decreases along the path");
    assert!(path.iter().all(|f| f.kkt_residual <= KKT_TOL));
}

/// Scaling covariates by `c` maps the optimum `beta` to `beta / c` when the
/// penalty is scaled to `c * lambda`.
#[test]
fn ranking_is_scale_equivariant() {
    let data = cox_data(100, &[0.9, -0.4, 0.2], 30.0, 77);
    let c = 3.0;
    let scaled = SurvivalData::new(data.x.iter().map(|v| v * c).collect(), data.d, data.time.clone(), data.event.clone()).unwrap();
    let a = cox::fit_data(&data, &CoxFitConfig::with_lambda(0.02), None).unwrap();
    let b = cox::fit_data(&scaled, &CoxFitConfig::with_lambda(0.02 * c), None).unwrap();
    let ra = data.linear_predictor(&a.beta);
    let rb = scaled.linear_predictor(&b.beta);
    let mut oa: Vec<usize> = (0..data.n).collect();
    let mut ob = oa.clone();
    oa.sort_by(|&i, &j| ra[i].total_cmp(&ra[j]));
    ob.sort_by(|&i, &j| rb[i].total_cmp(&rb[j]));
    assert_eq!(oa, ob);
    for (x, y) in a.beta.iter().zip(&b.beta) {
        assert!((x / c - y).abs() < 1e-6);
    }
}

#[test]
fn predict_log_hazard_is_centered_dot_product() {
    let data = cox_data(120, &[0.7, 0.0, -0.3], 30.0, 5);
    let fit = cox::fit_data(&data, &CoxFitConfig::with_lambda(0.01), None).unwrap();
    let stats = [(50.0, 10.0), (1.0, 2.0), (-3.0, 0.5)];
    let model = cox::CoxModel {
        feature_names: vec!["a".into(), "b".into(), "c".into()],
        beta: fit.beta.clone(),
        lambda: 0.01,
        norm_stats: stats
            .iter()
            .map(|&(mean, std)| peer_core::dataset::Standardization { mean, std })
            .collect(),
        baseline_cumhaz: cox::breslow_baseline(&data, &fit.beta).unwrap(),
    };
    let means: Vec<Option<f64>> = stats.iter().map(|s| Some(s.0)).collect();
    assert_eq!(model.predict_log_hazard(&means).unwrap(), 0.0);
    let raw = [Some(61.0), Some(0.0), Some(-2.5)];
    let mut expect = 0.0;
    for j in 0..3 {
        expect += fit.beta[j] * (raw[j].unwrap() - stats[j].0) / stats[j].1;
    }
    assert!((model.predict_log_hazard(&raw).unwrap() - expect).abs() < 1e-14);
    // survival is nonincreasing in time
    let lp = model.predict_log_hazard(&raw).unwrap();
    let mut prev = 1.0;
    for k in 0..100 {
        let s = model.survival(lp, k as f64 * 0.5);
        assert!(s <= prev);
        prev = s;
    }
}
