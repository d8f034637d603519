//! One-dimensional quadrature: Gauss–Legendre nodes and composite rules for
//! equally spaced time samples.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// The `n`-point Gauss–Legendre rule, cached.
pub fn gauss_legendre(n: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&n) {
        return r.clone();
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    cache
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(n, rule.clone());
    rule
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn compute_gauss_legendre(n: usize) -> GaussLegendre {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    GaussLegendre { nodes, weights }
}

/// Quadrature weights for `∫_{t_0}^{t_m} g dt` on `m + 1` equally spaced
/// samples with spacing `dt`.
///
/// Composite Simpson for even `m`; Simpson followed by Simpson's 3/8 rule on
/// the last three intervals for odd `m ≥ 3`. A single interval uses the
/// third-order formula through a third sample when `lookahead` holds it, and
/// the trapezoid rule otherwise.
pub fn interval_weights(m: usize, dt: f64, lookahead: bool) -> Vec<f64> {
    let mut w = vec![0.0; (m + 1).max(if m == 1 && lookahead { 3 } else { 0 })];
    match m {
        0 => {}
        1 if lookahead => {
            w[0] = 5.0 * dt / 12.0;
            w[1] = 8.0 * dt / 12.0;
            w[2] = -dt / 12.0;
        }
        1 => {
            w[0] = 0.5 * dt;
            w[1] = 0.5 * dt;
        }
        _ => {
            let simpson_end = if m % 2 == 0 { m } else { m - 3 };
            let mut i = 0;
            while i < simpson_end {
                w[i] += dt / 3.0;
                w[i + 1] += 4.0 * dt / 3.0;
                w[i + 2] += dt / 3.0;
                i += 2;
            }
            if m % 2 == 1 {
                let s = simpson_end;
                w[s] += 3.0 * dt / 8.0;
                w[s + 1] += 9.0 * dt / 8.0;
                w[s + 2] += 9.0 * dt / 8.0;
                w[s + 3] += 3.0 * dt / 8.0;
            }
        }
    }
    w
}

/// Cumulative integrals `∫_{t_0}^{t_m} g dt` for every sample index `m`.
pub fn cumulative(values: &[f64], dt: f64) -> Vec<f64> {
    let lookahead = values.len() >= 3;
    (0..values.len())
        .map(|m| {
            let w = interval_weights(m, dt, lookahead);
            let terms: Vec<f64> = w.iter().zip(values).map(|(a, b)| a * b).collect();
            crate::sum::pairwise(&terms)
        })
        .collect()
}

/// `∫_{t_0}^{t_last} g dt` over all samples.
pub fn integrate(values: &[f64], dt: f64) -> f64 {
    *cumulative(values, dt).last().unwrap_or(&0.0)
}

/// Checks that sample times are equally spaced and returns the spacing.
pub fn uniform_spacing(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::InvalidArgument("need at least two time samples".into()));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("time samples must increase".into()));
    }
    for (i, t) in times.iter().enumerate() {
        let expect = times[0] + i as f64 * dt;
        if (t - expect).abs() > 1e-9 * dt.max(expect.abs()) {
            return Err(Error::InvalidArgument(format!(
                "time samples are not equally spaced: t[{i}] = {t}, expected {expect}"
            )));
        }
    }
    Ok(dt)
}
