//! Quadrature rules for the normalized surface measure on `S^{d-1}` and the
//! spherical average `f̃(x) = ⨍ f(x + ℓσ) dσ`.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::quadrature::gauss_legendre;

/// Largest supported exactness degree on the circle.
pub const MAX_ORDER_2D: usize = 4096;
/// Largest supported exactness degree on the 2-sphere.
pub const MAX_ORDER_3D: usize = 512;

/// Construction used for a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SphereRuleKind {
    /// Equally spaced angles (d=2) or a Gauss–Legendre × trapezoid product
    /// rule (d=3).
    Tabulated,
    /// Antipodally symmetrized Fibonacci lattice with equal weights (d=3).
    Fibonacci,
    /// Nodes and weights supplied by the caller or a file.
    Custom,
}

/// Nodes `σ_k` on the unit sphere with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereRule {
    dim: usize,
    nodes: Vec<[f64; 3]>,
    weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    exactness: usize,
    kind: SphereRuleKind,
}

impl SphereRule {
    /// Rule from explicit nodes and weights. Nodes must be unit vectors and
    /// the weights must sum to one within `1e-12`.
    pub fn from_nodes(dim: usize, nodes: Vec<[f64; 3]>, weights: Vec<f64>, exactness: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!("sphere dimension {dim} unsupported")));
        }
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::InvalidArgument("node and weight counts differ or are zero".into()));
        }
        for (i, s) in nodes.iter().enumerate() {
            let r2 = s[0] * s[0] + s[1] * s[1] + s[2] * s[2];
            if (r2 - 1.0).abs() > 1e-12 || (dim == 2 && s[2] != 0.0) {
                return Err(Error::InvalidArgument(format!("node {i} is not a unit {dim}-vector")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, expected 1")));
        }
        Ok(SphereRule {
            dim,
            nodes,
            weights,
            exactness,
            kind: SphereRuleKind::Custom,
        })
    }

    /// Parses one `w σ_1 … σ_d` line per node; `#` starts a comment.
    pub fn from_text(dim: usize, text: &str, exactness: usize) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| Error::InvalidArgument(format!("line {}: {e}", lineno + 1)))?;
            if vals.len() != dim + 1 {
                return Err(Error::InvalidArgument(format!(
                    "line {}: expected {} numbers, found {}",
                    lineno + 1,
                    dim + 1,
                    vals.len()
                )));
            }
            let mut s = [0.0; 3];
            s[..dim].copy_from_slice(&vals[1..]);
            weights.push(vals[0]);
            nodes.push(s);
        }
        Self::from_nodes(dim, nodes, weights, exactness)
    }

    /// Loads a text rule from `path`.
    pub fn load(dim: usize, path: &Path, exactness: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(dim, &text, exactness)
    }

    /// Serializes to the text format read by [`from_text`](Self::from_text).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (w, n) in self.weights.iter().zip(&self.nodes) {
            s.push_str(&format!("{w:.17e}"));
            for v in n.iter().take(self.dim) {
                s.push_str(&format!(" {v:.17e}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn exactness(&self) -> usize {
        self.exactness
    }

    pub fn kind(&self) -> SphereRuleKind {
        self.kind
    }

    /// The reflected rule `{−σ_k}`.
    pub fn negated(&self) -> SphereRule {
        let mut r = self.clone();
        for s in r.nodes.iter_mut() {
            for v in s.iter_mut() {
                *v = -*v;
            }
        }
        r
    }

    /// `Σ_k w_k g(σ_k)`.
    pub fn integrate<F: Fn(&[f64; 3]) -> f64>(&self, g: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(s, w)| w * g(s)).sum()
    }
}

/// Default rule of at least the requested polynomial exactness.
///
/// d=2: `M` equally spaced angles with `M = order + 1` rounded up to even,
/// exact for trigonometric degree `M − 1`. d=3: Gauss–Legendre in `cos θ`
/// times equally spaced `φ`. Both are symmetric under `σ → −σ`.
pub fn sphere_rule(dim: usize, order: usize) -> Result<SphereRule> {
    if order < 2 {
        return Err(Error::InvalidArgument(format!("sphere rule order must be >= 2, got {order}")));
    }
    match dim {
        2 => {
            if order > MAX_ORDER_2D {
                return Err(Error::UnsupportedOrder {
                    dim,
                    requested: order,
                    max: MAX_ORDER_2D,
                });
            }
            let m = (order + 1).next_multiple_of(2);
            let nodes = (0..m)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / m as f64;
                    [t.cos(), t.sin(), 0.0]
                })
                .collect();
            Ok(SphereRule {
                dim,
                nodes,
                weights: vec![1.0 / m as f64; m],
                exactness: m - 1,
                kind: SphereRuleKind::Tabulated,
            })
        }
        3 => {
            if order > MAX_ORDER_3D {
                return Err(Error::UnsupportedOrder {
                    dim,
                    requested: order,
                    max: MAX_ORDER_3D,
                });
            }
            let n_mu = order / 2 + 1;
            let n_phi = (order + 1).next_multiple_of(2);
            let gl = gauss_legendre(n_mu);
            let mut nodes = Vec::with_capacity(n_mu * n_phi);
            let mut weights = Vec::with_capacity(n_mu * n_phi);
            for (mu, wmu) in gl.nodes.iter().zip(&gl.weights) {
                let rho = (1.0 - mu * mu).max(0.0).sqrt();
                for j in 0..n_phi {
                    let phi = 2.0 * PI * j as f64 / n_phi as f64;
                    nodes.push([rho * phi.cos(), rho * phi.sin(), *mu]);
                    weights.push(0.5 * wmu / n_phi as f64);
                }
            }
            let exactness = (2 * n_mu - 1).min(n_phi - 1);
            Ok(SphereRule {
                dim,
                nodes,
                weights,
                exactness,
                kind: SphereRuleKind::Tabulated,
            })
        }
        _ => Err(Error::InvalidArgument(format!("sphere dimension {dim} unsupported"))),
    }
}

/// Equal-weight Fibonacci set of `2m` points on `S²`: `m` lattice points and
/// their antipodes. Exact only for odd moments and constants.
pub fn fibonacci_rule(points: usize) -> Result<SphereRule> {
    if points < 2 || points % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "Fibonacci rule needs an even point count >= 2, got {points}"
        )));
    }
    let m = points / 2;
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut nodes = Vec::with_capacity(points);
    for i in 0..m {
        let z = 1.0 - (2.0 * i as f64 + 1.0) / (2.0 * m as f64);
        let rho = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        nodes.push([rho * phi.cos(), rho * phi.sin(), z]);
    }
    for i in 0..m {
        let s = nodes[i];
        nodes.push([-s[0], -s[1], -s[2]]);
    }
    Ok(SphereRule {
        dim: 3,
        nodes,
        weights: vec![1.0 / points as f64; points],
        exactness: 1,
        kind: SphereRuleKind::Fibonacci,
    })
}

/// Order that resolves increments of fields with wavenumbers up to `k_max`
/// at radius `r`: the angular bandwidth of a product of three plane waves is
/// about `3 k_max r`.
pub fn resolving_order(k_max: f64, r: f64) -> usize {
    (3.0 * k_max * r).ceil() as usize + 32
}

/// Spectral symbol `Σ_k w_k e^{i ℓ k·σ_k}` of the discrete sphere average.
pub(crate) fn average_symbol(grid: &crate::Grid, ell: f64, rule: &SphereRule) -> Vec<f64> {
    let parts: Vec<Vec<f64>> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(s, w)| {
            let y = [ell * s[0], ell * s[1], ell * s[2]];
            crate::field::phase_symbol(grid, &y).iter().map(|m| w * m.re).collect()
        })
        .collect();
    let mut out = vec![0.0; grid.len()];
    for p in &parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

/// `f̃(x) = Σ_k w_k f(x + ℓσ_k)`, applied through the spectral symbol so that
/// every off-grid sample is exact for band-limited `f`.
pub fn spherical_average(f: &Field, ell: f64, rule: &SphereRule) -> Result<Field> {
    if rule.dim() != f.grid().dim() {
        return Err(Error::InvalidArgument("sphere rule dimension differs from grid".into()));
    }
    if !(0.0..=PI / 2.0 + 1e-12).contains(&ell) {
        return Err(Error::InvalidArgument(format!("scale {ell} outside [0, π/2]")));
    }
    if ell == 0.0 {
        return Ok(f.clone());
    }
    let symbol = average_symbol(f.grid(), ell, rule);
    Ok(f.spectrum().apply_real(&symbol).to_field().with_time(f.time()))
}

/// Exact sphere average of `e^{i x·σ}` over `S^{d-1}` as a function of `|x|`:
/// `J_0` on the circle, `sin x / x` on the 2-sphere.
pub fn sphere_symbol(dim: usize, x: f64) -> f64 {
    if dim == 3 {
        if x.abs() < 1e-4 {
            let x2 = x * x;
            1.0 - x2 / 6.0 + x2 * x2 / 120.0
        } else {
            x.sin() / x
        }
    } else {
        bessel_j0(x)
    }
}

/// `J_0(x) = (1/π) ∫_{-1}^{1} cos(xt) (1−t²)^{-1/2} dt` by Gauss–Chebyshev.
pub fn bessel_j0(x: f64) -> f64 {
    let n = x.abs().ceil() as usize + 24;
    let mut s = 0.0;
    for j in 1..=n {
        let t = ((2 * j - 1) as f64 * PI / (2 * n) as f64).cos();
        s += (x * t).cos();
    }
    s / n as f64
}

/// `2 J_1(x)/x = (2/π) ∫_{-1}^{1} cos(xt) (1−t²)^{1/2} dt` by Gauss–Chebyshev
/// of the second kind.
pub fn bessel_j1_ratio(x: f64) -> f64 {
    let n = x.abs().ceil() as usize + 24;
    let mut s = 0.0;
    for j in 1..=n {
        let a = j as f64 * PI / (n + 1) as f64;
        let st = a.sin();
        s += st * st * (x * a.cos()).cos();
    }
    2.0 / (n + 1) as f64 * s
}

/// Normalized surface area `s_{d-1}` of the unit sphere.
pub fn sphere_area(dim: usize) -> f64 {
    if dim == 2 {
        2.0 * PI
    } else {
        4.0 * PI
    }
}

/// Volume `ω_d` of the unit ball.
pub fn ball_volume(dim: usize) -> f64 {
    if dim == 2 {
        PI
    } else {
        4.0 * PI / 3.0
    }
}

/// Random unit vectors for tests and shift sets.
pub fn random_directions(dim: usize, count: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| crate::field::random_unit(&mut rng, dim)).collect()
}
