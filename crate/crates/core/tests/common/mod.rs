#![allow(dead_code)]

use peer_core::dataset::SurvivalData;
use peer_core::rng;
use rand::Rng;

pub fn normal(r: &mut rng::Rng) -> f64 {
    let u1: f64 = 1.0 - r.gen::<f64>();
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Exponential event times with rate `exp(beta^T x) * 0.1`, uniform censoring
/// on `[0, censor_max]`.
pub fn cox_data(n: usize, beta: &[f64], censor_max: f64, seed: u64) -> SurvivalData {
    let d = beta.len();
    let mut r = rng::rng(seed);
    let mut x = Vec::with_capacity(n * d);
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let t = -(1.0 - r.gen::<f64>()).ln() / (0.1 * eta.exp());
        let c = r.gen::<f64>() * censor_max;
        x.extend(row);
        time.push(t.min(c).max(1e-6));
        event.push(t <= c);
    }
    SurvivalData::new(x, d, time, event).unwrap()
}
