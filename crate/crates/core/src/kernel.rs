//! Radial kernels: the mollifier family `φ_{ℓ,γ}`, the special kernel
//! `ov φ_ℓ`, and the matrix-valued combined longitudinal kernel.
//!
//! The mollifier profile is constant on `[0, 1−γ]`, falls to zero across
//! `[1−γ, 1+γ]` following the integral of `exp(−1/(1−ξ²))`, and vanishes
//! beyond. Writing `φ_{ℓ,γ}` as a superposition of ball averages at radii
//! `ℓ(1+γξ)` gives both its Fourier symbol and the radial weights used by
//! the mollified dissipation field, so the two are consistent to round-off.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::quadrature::gauss_legendre;
use crate::sphere::{ball_volume, bessel_j1_ratio, sphere_area, sphere_symbol, SphereRule};
use crate::tensor::TensorKind;

/// `∫_{-1}^{1} exp(−1/(1−ξ²)) dξ`.
pub const BUMP_MASS: f64 = 0.443_993_816_168_079_437_823;
/// Second moment of the normalized bump density.
pub const BUMP_SECOND_MOMENT: f64 = 0.158_113_636_263_798_230_228;

/// Default number of Gauss–Legendre nodes across the mollifier annulus.
pub const DEFAULT_RADIAL_NODES: usize = 16;

/// Radial profile of the mollifier family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Flat top with a `C^∞` transition built from `exp(−1/(1−ξ²))`.
    #[default]
    Bump,
}

/// Which kernel a [`KernelSpec`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `φ_{ℓ,γ}`: nonnegative, unit mass; a ball average when `γ = 0`.
    Standard,
    /// `ov φ_ℓ(y) = |B_ℓ|^{-1}(|y|²/ℓ² − 1)` on the ball.
    Special,
    /// `|B_ℓ|^{-1} 1_{B_ℓ} T_L − ov φ_ℓ T_T`, defining `u_{L,ℓ}`.
    CombinedL,
}

/// Scale, width and shape of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub ell: f64,
    pub gamma: f64,
    pub profile: Profile,
    pub kind: KernelKind,
    /// Gauss–Legendre nodes across the annulus `[ℓ(1−γ), ℓ(1+γ)]`.
    pub radial_nodes: usize,
}

/// The bump `exp(−1/(1−ξ²))` on `(−1, 1)`.
pub fn bump(xi: f64) -> f64 {
    if xi.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - xi * xi)).exp()
    }
}

/// Normalized cumulative bump `F(s) = Z^{-1}∫_{-1}^{s} bump`.
fn bump_cdf(s: f64) -> f64 {
    if s <= -1.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    if s > 0.0 {
        return 1.0 - bump_cdf(-s);
    }
    let gl = gauss_legendre(64);
    let half = 0.5 * (s + 1.0);
    let mid = 0.5 * (s - 1.0);
    let total: f64 = gl
        .nodes
        .iter()
        .zip(&gl.weights)
        .map(|(x, w)| w * bump(mid + half * x))
        .sum();
    total * half / BUMP_MASS
}

fn check_ell(ell: f64) -> Result<()> {
    if !(ell > 0.0 && ell <= PI / 2.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("kernel scale {ell} outside (0, π/2]")));
    }
    Ok(())
}

impl KernelSpec {
    /// `φ_{ℓ,γ}` with the bundled profile.
    pub fn standard(ell: f64, gamma: f64) -> Result<Self> {
        check_ell(ell)?;
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("kernel width {gamma} outside [0, 1]")));
        }
        Ok(KernelSpec {
            ell,
            gamma,
            profile: Profile::Bump,
            kind: KernelKind::Standard,
            radial_nodes: DEFAULT_RADIAL_NODES,
        })
    }

    /// `ov φ_ℓ`.
    pub fn special(ell: f64) -> Result<Self> {
        check_ell(ell)?;
        Ok(KernelSpec {
            ell,
            gamma: 0.0,
            profile: Profile::Bump,
            kind: KernelKind::Special,
            radial_nodes: DEFAULT_RADIAL_NODES,
        })
    }

    /// The combined longitudinal kernel.
    pub fn combined_l(ell: f64) -> Result<Self> {
        check_ell(ell)?;
        Ok(KernelSpec {
            ell,
            gamma: 0.0,
            profile: Profile::Bump,
            kind: KernelKind::CombinedL,
            radial_nodes: DEFAULT_RADIAL_NODES,
        })
    }

    pub fn with_radial_nodes(mut self, nodes: usize) -> Self {
        self.radial_nodes = nodes.max(1);
        self
    }

    /// Plateau value `C` of the profile, fixed by unit mass:
    /// `C = d / (s_{d−1} E[(1+γξ)^d])`.
    pub fn plateau(&self, dim: usize) -> f64 {
        let g2 = self.gamma * self.gamma * BUMP_SECOND_MOMENT;
        let moment = if dim == 2 { 1.0 + g2 } else { 1.0 + 3.0 * g2 };
        dim as f64 / (sphere_area(dim) * moment)
    }

    /// Profile `ψ(ρ)` of the standard kernel, `φ_{ℓ,γ}(y) = ℓ^{-d}ψ(|y|/ℓ)`.
    pub fn profile_value(&self, dim: usize, rho: f64) -> f64 {
        let c = self.plateau(dim);
        let g = self.gamma;
        if g == 0.0 {
            return if rho <= 1.0 { c } else { 0.0 };
        }
        if rho <= 1.0 - g {
            c
        } else if rho >= 1.0 + g {
            0.0
        } else {
            c * (1.0 - bump_cdf((rho - 1.0) / g))
        }
    }

    /// `ψ'(ρ) = −(C/γ) bump((ρ−1)/γ)/Z`.
    pub fn profile_derivative(&self, dim: usize, rho: f64) -> f64 {
        if self.gamma == 0.0 {
            return 0.0;
        }
        -self.plateau(dim) / self.gamma * bump((rho - 1.0) / self.gamma) / BUMP_MASS
    }

    /// Scalar kernel value at `y`. The combined kernel is matrix valued; use
    /// [`matrix_value`](Self::matrix_value).
    pub fn value(&self, dim: usize, y: &[f64; 3]) -> f64 {
        let r = norm(y);
        let ell = self.ell;
        match self.kind {
            KernelKind::Standard => self.profile_value(dim, r / ell) / ell.powi(dim as i32),
            KernelKind::Special | KernelKind::CombinedL => {
                if r <= ell {
                    (r * r / (ell * ell) - 1.0) / ball_measure(dim, ell)
                } else {
                    0.0
                }
            }
        }
    }

    /// Matrix value of the combined kernel, or `value · I` otherwise.
    pub fn matrix_value(&self, dim: usize, y: &[f64; 3]) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        match self.kind {
            KernelKind::CombinedL => {
                let r = norm(y);
                if r > self.ell || r == 0.0 {
                    return m;
                }
                let vb = 1.0 / ball_measure(dim, self.ell);
                let over = self.value(dim, y);
                let tl = TensorKind::L.matrix(y);
                let tt = TensorKind::T.matrix(y);
                for i in 0..dim {
                    for j in 0..dim {
                        m[i][j] = vb * tl[i][j] - over * tt[i][j];
                    }
                }
            }
            _ => {
                let v = self.value(dim, y);
                for (i, row) in m.iter_mut().enumerate().take(dim) {
                    row[i] = v;
                }
            }
        }
        m
    }

    /// Analytic gradient of the scalar kernel (zero for the combined kernel).
    pub fn gradient(&self, dim: usize, y: &[f64; 3]) -> [f64; 3] {
        let r = norm(y);
        let ell = self.ell;
        let scale = match self.kind {
            KernelKind::Standard => {
                if r == 0.0 {
                    return [0.0; 3];
                }
                self.profile_derivative(dim, r / ell) / (ell.powi(dim as i32 + 1) * r)
            }
            KernelKind::Special => {
                if r >= ell {
                    return [0.0; 3];
                }
                2.0 / (ell * ell * ball_measure(dim, ell))
            }
            KernelKind::CombinedL => return [0.0; 3],
        };
        [scale * y[0], scale * y[1], scale * y[2]]
    }

    /// Radii `r_q` and weights `c_q` (summing to one) such that
    /// `φ_{ℓ,γ} = Σ_q c_q |B_{r_q}|^{-1} 1_{B_{r_q}}`.
    pub fn ball_superposition(&self, dim: usize) -> Vec<(f64, f64)> {
        if self.gamma == 0.0 {
            return vec![(self.ell, 1.0)];
        }
        let gl = gauss_legendre(self.radial_nodes);
        let mut out: Vec<(f64, f64)> = gl
            .nodes
            .iter()
            .zip(&gl.weights)
            .map(|(xi, w)| {
                let s = 1.0 + self.gamma * xi;
                (self.ell * s, w * bump(*xi) * s.powi(dim as i32))
            })
            .collect();
        let total: f64 = out.iter().map(|p| p.1).sum();
        for p in out.iter_mut() {
            p.1 /= total;
        }
        out
    }

    /// Fourier symbol `∫ φ(y) e^{ik·y} dy` of the standard kernel at `|k| = κ`.
    pub fn standard_symbol(&self, dim: usize, kappa: f64) -> f64 {
        self.ball_superposition(dim)
            .iter()
            .map(|(r, c)| c * ball_symbol(dim, kappa * r))
            .sum()
    }
}

fn norm(y: &[f64; 3]) -> f64 {
    (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt()
}

/// `|B_ℓ(0)|`.
pub fn ball_measure(dim: usize, ell: f64) -> f64 {
    ball_volume(dim) * ell.powi(dim as i32)
}

/// Average of `e^{ik·y}` over the ball of radius `r`, as a function of
/// `x = |k| r`.
pub fn ball_symbol(dim: usize, x: f64) -> f64 {
    if dim == 3 {
        if x.abs() < 1e-3 {
            let x2 = x * x;
            1.0 - x2 / 10.0 + x2 * x2 / 280.0
        } else {
            3.0 * (x.sin() - x * x.cos()) / (x * x * x)
        }
    } else {
        bessel_j1_ratio(x)
    }
}

/// Transverse part `⨍ e^{i x σ_1} σ_2² dσ` of the sphere-averaged plane wave.
fn transverse_symbol(dim: usize, x: f64) -> f64 {
    ball_symbol(dim, x) / dim as f64
}

/// Longitudinal part `⨍ e^{i x σ_1} σ_1² dσ`.
fn longitudinal_symbol(dim: usize, x: f64) -> f64 {
    sphere_symbol(dim, x) - (dim as f64 - 1.0) * transverse_symbol(dim, x)
}

/// Symbol of an isotropic kernel `a(r) I + b(r) ŷŷᵀ` supported in `B_ℓ`:
/// returns `(A, B)` with `M(k) = A k̂k̂ᵀ + B (I − k̂k̂ᵀ)`.
pub fn isotropic_symbol<FA, FB>(dim: usize, ell: f64, kappa: f64, a: FA, b: FB) -> (f64, f64)
where
    FA: Fn(f64) -> f64,
    FB: Fn(f64) -> f64,
{
    let n = (kappa * ell).ceil() as usize + 24;
    let gl = gauss_legendre(n);
    let area = sphere_area(dim);
    let (mut sa, mut sb) = (0.0, 0.0);
    for (x, w) in gl.nodes.iter().zip(&gl.weights) {
        let r = 0.5 * ell * (x + 1.0);
        let jac = 0.5 * ell * w * area * r.powi(dim as i32 - 1);
        let z = kappa * r;
        let (s0, gl_, gt) = (sphere_symbol(dim, z), longitudinal_symbol(dim, z), transverse_symbol(dim, z));
        let (av, bv) = (a(r), b(r));
        sa += jac * (av * s0 + bv * gl_);
        sb += jac * (av * s0 + bv * gt);
    }
    (sa, sb)
}

/// `(A, B)` for the combined longitudinal kernel at `|k| = κ`.
pub fn combined_l_symbol(dim: usize, ell: f64, kappa: f64) -> (f64, f64) {
    let vb = 1.0 / ball_measure(dim, ell);
    isotropic_symbol(
        dim,
        ell,
        kappa,
        |r| vb * (1.0 - r * r / (ell * ell)),
        |r| vb * r * r / (ell * ell),
    )
}

/// Per-mode table of a radial symbol on `grid`, evaluated once per distinct
/// `|k|²`.
pub(crate) fn radial_table<F, T>(grid: &Grid, f: F) -> Vec<T>
where
    F: Fn(f64) -> T,
    T: Copy,
{
    let mut cache: HashMap<i64, T> = HashMap::new();
    (0..grid.len())
        .map(|i| {
            let k = grid.wavevector(i);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            *cache.entry(k2).or_insert_with(|| f((k2 as f64).sqrt()))
        })
        .collect()
}

/// What [`kernel_moment`] integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    /// `∫ K(y) dy`.
    Mass,
    /// `∫ K(y) T_•(ŷ) dy` for a scalar kernel `K`.
    Tensor(TensorKind),
}

/// Value of a kernel moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Scalar(f64),
    Matrix([[f64; 3]; 3]),
}

/// Radial mass `s_{d−1} ∫ K(r) r^{d−1} dr` of a scalar kernel by
/// piecewise Gauss–Legendre quadrature.
fn radial_mass(spec: &KernelSpec, dim: usize) -> f64 {
    let area = sphere_area(dim);
    let ell = spec.ell;
    let integrate = |lo: f64, hi: f64, n: usize| -> f64 {
        let gl = gauss_legendre(n);
        let half = 0.5 * (hi - lo);
        gl.nodes
            .iter()
            .zip(&gl.weights)
            .map(|(x, w)| {
                let r = lo + half * (x + 1.0);
                w * half * area * r.powi(dim as i32 - 1) * spec.value(dim, &[r, 0.0, 0.0])
            })
            .sum()
    };
    match spec.kind {
        KernelKind::Standard if spec.gamma > 0.0 => {
            let g = spec.gamma;
            integrate(0.0, ell * (1.0 - g), 8) + integrate(ell * (1.0 - g), ell, 256) + integrate(ell, ell * (1.0 + g), 256)
        }
        _ => integrate(0.0, ell, 8),
    }
}

/// Discrete sphere average `Σ w_k T_•(σ_k)`.
pub fn sphere_tensor_average(kind: TensorKind, rule: &SphereRule) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for (s, w) in rule.nodes().iter().zip(rule.weights()) {
        let t = kind.matrix(s);
        for i in 0..rule.dim() {
            for j in 0..rule.dim() {
                m[i][j] += w * t[i][j];
            }
        }
    }
    m
}

/// Numerical moments: radial integrals by Gauss–Legendre, angular factors by
/// the sphere rule. The combined kernel always yields its matrix mass.
pub fn kernel_moment(spec: &KernelSpec, dim: usize, which: MomentKind, rule: &SphereRule) -> Result<Moment> {
    if rule.dim() != dim {
        return Err(Error::InvalidArgument("sphere rule dimension differs from kernel dimension".into()));
    }
    match spec.kind {
        KernelKind::CombinedL => {
            let ball = KernelSpec::standard(spec.ell, 0.0)?;
            let mass_ball = radial_mass(&ball, dim);
            let over = KernelSpec::special(spec.ell)?;
            let mass_over = radial_mass(&over, dim);
            let tl = sphere_tensor_average(TensorKind::L, rule);
            let tt = sphere_tensor_average(TensorKind::T, rule);
            let mut m = [[0.0; 3]; 3];
            for i in 0..dim {
                for j in 0..dim {
                    m[i][j] = mass_ball * tl[i][j] - mass_over * tt[i][j];
                }
            }
            Ok(Moment::Matrix(m))
        }
        _ => {
            let mass = radial_mass(spec, dim);
            match which {
                MomentKind::Mass => Ok(Moment::Scalar(mass)),
                MomentKind::Tensor(kind) => {
                    let mut t = sphere_tensor_average(kind, rule);
                    for row in t.iter_mut() {
                        for v in row.iter_mut() {
                            *v *= mass;
                        }
                    }
                    Ok(Moment::Matrix(t))
                }
            }
        }
    }
}

/// Euclidean norm of `∂ ov φ_ℓ(y) − (2y/|y|²) ov φ_ℓ(y) − 2y/(|B_ℓ||y|²)`
/// using the analytic gradient. Defined for `0 < |y| < ℓ`.
pub fn special_kernel_gradient_identity(spec: &KernelSpec, dim: usize, y: &[f64; 3]) -> Result<f64> {
    if spec.kind != KernelKind::Special {
        return Err(Error::InvalidArgument("gradient identity needs the special kernel".into()));
    }
    let r = norm(y);
    if !(r > 0.0 && r < spec.ell) {
        return Err(Error::Domain(format!("|y| = {r} must lie in (0, {})", spec.ell)));
    }
    let grad = spec.gradient(dim, y);
    let v = spec.value(dim, y);
    let vb = ball_measure(dim, spec.ell);
    let mut s = 0.0;
    for a in 0..dim {
        let term = grad[a] - 2.0 * y[a] / (r * r) * v - 2.0 * y[a] / (vb * r * r);
        s += term * term;
    }
    Ok(s.sqrt())
}
