//! Energy bookkeeping: `ε_ν(t)`, the time-integrated balance at scale `ℓ`,
//! pointwise finite-`ℓ` balances, and audits of the three remainder bounds.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{max_norm, pressure_on_grid, same_shape, Field, Spectrum};
use crate::flux::{apply_matrix_symbol, combined_l_tables, flux_field_mollified, flux_field_sphere, structure_functions};
use crate::grid::Grid;
use crate::kernel::{radial_table, KernelSpec};
use crate::quadrature::{cumulative, uniform_spacing};
use crate::sphere::SphereRule;
use crate::sum;
use crate::tensor::TensorKind;

/// Kinetic energy, work and dissipation accumulators along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    pub times: Vec<f64>,
    /// `½‖u(t)‖²`.
    pub energy: Vec<f64>,
    /// `∫₀ᵗ ⟨f, u⟩`.
    pub work: Vec<f64>,
    /// `ν ∫₀ᵗ ‖∇u‖²`.
    pub dissipation: Vec<f64>,
    /// `ε_ν(t) = ½‖u₀‖² − ½‖u(t)‖² + ∫₀ᵗ ⟨f, u⟩`.
    pub eps: Vec<f64>,
    /// `max_t |ε_ν(t) − ν∫₀ᵗ‖∇u‖²|`, the discretization tolerance of the series.
    pub tolerance: f64,
}

impl EnergySeries {
    /// Plot-ready CSV with columns `t, energy, work, dissipation, eps`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "energy", "work", "dissipation", "eps"])?;
        for i in 0..self.times.len() {
            wr.write_record([
                self.times[i],
                self.energy[i],
                self.work[i],
                self.dissipation[i],
                self.eps[i],
            ]
            .map(|v| format!("{v:.17e}")))?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// `(2π)^d Σ_k Re(conj(â_k) b̂_k)` summed over components: `∫ a·b`.
pub(crate) fn spectral_inner(a: &Spectrum, b: &Spectrum) -> f64 {
    weighted_inner(a, b, |_| 1.0)
}

/// `∫ ∂_k a · ∂_k b`.
pub(crate) fn gradient_inner(a: &Spectrum, b: &Spectrum) -> f64 {
    let g = *a.grid();
    weighted_inner(a, b, |i| {
        let k = g.wavevector(i);
        (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64
    })
}

fn weighted_inner<W: Fn(usize) -> f64 + Sync>(a: &Spectrum, b: &Spectrum, w: W) -> f64 {
    let g = *a.grid();
    let terms: Vec<f64> = a
        .components()
        .iter()
        .zip(b.components())
        .map(|(ca, cb)| sum::par_sum(g.len(), |i| w(i) * (ca[i].conj() * cb[i]).re))
        .collect();
    g.volume() * sum::pairwise(&terms)
}

/// Validates a snapshot series with matching forces (an empty `forces`
/// slice means `f ≡ 0`) and returns the time step.
fn check_series(snapshots: &[Field], forces: &[Field], min: usize) -> Result<f64> {
    if snapshots.len() < min {
        return Err(Error::InvalidArgument(format!(
            "need at least {min} snapshots, got {}",
            snapshots.len()
        )));
    }
    let d = snapshots[0].grid().dim();
    for s in snapshots {
        same_shape(&snapshots[0], s)?;
        if s.ncomp() != d {
            return Err(Error::InvalidArgument("snapshots must be velocity fields".into()));
        }
    }
    if !forces.is_empty() {
        if forces.len() != snapshots.len() {
            return Err(Error::GridMismatch(format!(
                "{} forces for {} snapshots",
                forces.len(),
                snapshots.len()
            )));
        }
        for (f, s) in forces.iter().zip(snapshots) {
            same_shape(s, f)?;
            if (f.time() - s.time()).abs() > 1e-12 * (1.0 + s.time().abs()) {
                return Err(Error::GridMismatch(format!(
                    "force at t = {} paired with snapshot at t = {}",
                    f.time(),
                    s.time()
                )));
            }
        }
    }
    let times: Vec<f64> = snapshots.iter().map(|s| s.time()).collect();
    uniform_spacing(&times)
}

/// `ε_ν(t)` with its energy, work and dissipation ingredients. Time
/// integrals use [`cumulative`]: composite Simpson, with a 3/8 tail for odd
/// interval counts.
pub fn epsilon_series(snapshots: &[Field], forces: &[Field], nu: f64) -> Result<EnergySeries> {
    let dt = check_series(snapshots, forces, 3)?;
    let mut energy = Vec::with_capacity(snapshots.len());
    let mut power = Vec::with_capacity(snapshots.len());
    let mut grad = Vec::with_capacity(snapshots.len());
    for (m, u) in snapshots.iter().enumerate() {
        let s = u.spectrum();
        energy.push(0.5 * spectral_inner(&s, &s));
        grad.push(gradient_inner(&s, &s));
        power.push(match forces.get(m) {
            Some(f) => spectral_inner(&f.spectrum(), &s),
            None => 0.0,
        });
    }
    Ok(assemble_series(
        snapshots.iter().map(|s| s.time()).collect(),
        energy,
        &power,
        &grad,
        nu,
        dt,
    ))
}

pub(crate) fn assemble_series(
    times: Vec<f64>,
    energy: Vec<f64>,
    power: &[f64],
    grad: &[f64],
    nu: f64,
    dt: f64,
) -> EnergySeries {
    let work = cumulative(power, dt);
    let dissipation: Vec<f64> = cumulative(grad, dt).into_iter().map(|v| nu * v).collect();
    let eps: Vec<f64> = energy
        .iter()
        .zip(&work)
        .map(|(e, w)| energy[0] - e + w)
        .collect();
    let tolerance = eps
        .iter()
        .zip(&dissipation)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    EnergySeries {
        times,
        energy,
        work,
        dissipation,
        eps,
        tolerance,
    }
}

/// Per-mode symbol `(A, B)` of the normalized averaging operator `ũ` that
/// appears in the time-integrated balance for `projection`: the ball
/// average for `I`, `((d+2)/3) u_{L,ℓ}` for `L`, and the combination
/// dictated by additivity for `T`. Each maps constants to themselves.
pub fn balance_averaging_table(grid: &Grid, projection: TensorKind, ell: f64) -> Vec<(f64, f64)> {
    let d = grid.dim();
    let df = d as f64;
    let ball = radial_table(grid, |kappa| crate::kernel::ball_symbol(d, kappa * ell));
    if projection == TensorKind::I {
        return ball.into_iter().map(|b| (b, b)).collect();
    }
    let c = (df + 2.0) / 3.0;
    let comb = combined_l_tables(grid, ell);
    comb.iter()
        .zip(&ball)
        .map(|(&(a, b), &s)| match projection {
            TensorKind::L => (c * a, c * b),
            _ => (
                ((df + 2.0) * s - 3.0 * c * a) / (df - 1.0),
                ((df + 2.0) * s - 3.0 * c * b) / (df - 1.0),
            ),
        })
        .collect()
}

/// Time-integrated balance at one scale.
///
/// Left side `∫₀ᵀ S_•/ℓ + ε_ν(T)`, right side boundary + forcing + viscous
/// terms; `residual = (flux + eps) − (boundary + forcing + viscous)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub projection: TensorKind,
    pub ell: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// `∫₀ᵀ S_•(r, ℓ)/ℓ dr`.
    pub flux: f64,
    /// `ε_ν(T)`.
    pub eps: f64,
    /// `½∫[|u₀|² − ũ₀·u₀ + ũ_T·u_T − |u_T|²]`.
    pub boundary: f64,
    /// The two paired increments `½∫u₀·(u₀ − ũ₀)` and `½∫u_T·(u_T − ũ_T)`;
    /// `boundary` is their difference.
    pub boundary_pairs: [f64; 2],
    /// `∫∫ f·(u − ũ)`.
    pub forcing: f64,
    /// `ν ∫∫ ∂_k ũ^j ∂_k u^j`.
    pub viscous: f64,
    pub residual: f64,
    /// Snapshot times.
    pub times: Vec<f64>,
    /// `S_•(t, ℓ)` at every snapshot.
    pub structure: Vec<f64>,
    /// `R(t) = ∫₀ᵗ S_•/ℓ + ε_ν(t)` at every snapshot.
    pub law: Vec<f64>,
}

impl BalanceReport {
    /// The signed sum of the stored terms.
    pub fn bookkeeping(&self) -> f64 {
        (self.flux + self.eps) - (self.boundary + self.forcing + self.viscous)
    }

    /// CSV with columns `term, value`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["term", "value"])?;
        for (k, v) in [
            ("flux", self.flux),
            ("eps", self.eps),
            ("boundary", self.boundary),
            ("boundary_pair_0", self.boundary_pairs[0]),
            ("boundary_pair_T", self.boundary_pairs[1]),
            ("forcing", self.forcing),
            ("viscous", self.viscous),
            ("residual", self.residual),
        ] {
            wr.write_record([k.to_string(), format!("{v:.17e}")])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// The time-integrated balance for `•=I` with the ball average `u_ℓ`.
pub fn global_balance_residual(
    snapshots: &[Field],
    forces: &[Field],
    nu: f64,
    ell: f64,
    rule: &SphereRule,
) -> Result<BalanceReport> {
    global_balance_for(TensorKind::I, snapshots, forces, nu, ell, rule)
}

/// The time-integrated balance for any projection.
pub fn global_balance_for(
    projection: TensorKind,
    snapshots: &[Field],
    forces: &[Field],
    nu: f64,
    ell: f64,
    rule: &SphereRule,
) -> Result<BalanceReport> {
    let series = epsilon_series(snapshots, forces, nu)?;
    let structure = snapshots
        .iter()
        .map(|u| structure_functions(u, ell, rule).map(|s| s[projection as usize]))
        .collect::<Result<Vec<_>>>()?;
    global_balance_with(projection, snapshots, forces, nu, ell, &structure, &series)
}

/// The balance from precomputed `S_•(t, ℓ)` values and energy series.
pub fn global_balance_with(
    projection: TensorKind,
    snapshots: &[Field],
    forces: &[Field],
    nu: f64,
    ell: f64,
    structure: &[f64],
    series: &EnergySeries,
) -> Result<BalanceReport> {
    let dt = check_series(snapshots, forces, 3)?;
    if structure.len() != snapshots.len() || series.times.len() != snapshots.len() {
        return Err(Error::InvalidArgument("structure values or series do not match the snapshots".into()));
    }
    let grid = *snapshots[0].grid();
    let table = balance_averaging_table(&grid, projection, ell);
    let averaged = |u: &Field| apply_matrix_symbol(&u.spectrum(), &table);

    let mut force_terms = Vec::with_capacity(snapshots.len());
    let mut visc_terms = Vec::with_capacity(snapshots.len());
    for (m, u) in snapshots.iter().enumerate() {
        let s = u.spectrum();
        let a = averaged(u);
        visc_terms.push(gradient_inner(&a, &s));
        force_terms.push(match forces.get(m) {
            Some(f) => {
                let fs = f.spectrum();
                spectral_inner(&fs, &s) - spectral_inner(&fs, &a)
            }
            None => 0.0,
        });
    }
    let pair = |u: &Field| {
        let s = u.spectrum();
        0.5 * (spectral_inner(&s, &s) - spectral_inner(&s, &averaged(u)))
    };
    let last = snapshots.len() - 1;
    let pairs = [pair(&snapshots[0]), pair(&snapshots[last])];

    let flux_series = cumulative(&structure.iter().map(|s| s / ell).collect::<Vec<_>>(), dt);
    let law: Vec<f64> = flux_series.iter().zip(&series.eps).map(|(a, b)| a + b).collect();
    let flux = flux_series[last];
    let eps = series.eps[last];
    let boundary = pairs[0] - pairs[1];
    let forcing = *cumulative(&force_terms, dt).last().unwrap();
    let viscous = nu * cumulative(&visc_terms, dt).last().unwrap();
    let residual = (flux + eps) - (boundary + forcing + viscous);
    Ok(BalanceReport {
        projection,
        ell,
        t_start: snapshots[0].time(),
        t_end: snapshots[last].time(),
        flux,
        eps,
        boundary,
        boundary_pairs: pairs,
        forcing,
        viscous,
        residual,
        times: series.times.clone(),
        structure: structure.to_vec(),
        law,
    })
}

/// Pointwise residual of a finite-`ℓ` balance at the interior snapshots.
#[derive(Debug, Clone)]
pub struct LocalBalance {
    pub projection: TensorKind,
    pub ell: f64,
    pub gamma: f64,
    /// Interior snapshot times.
    pub times: Vec<f64>,
    pub residuals: Vec<Field>,
    /// `∫|residual| dx` per interior time.
    pub l1: Vec<f64>,
    /// Largest `∫|term| dx` among the individual terms, for scale.
    pub dominant: Vec<f64>,
}

impl LocalBalance {
    pub fn max_l1(&self) -> f64 {
        self.l1.iter().copied().fold(0.0, f64::max)
    }
}

/// How the kernel of a local balance acts on vectors, scalars and tensors.
enum Averaging {
    /// Scalar symbol `s(k)` times the identity.
    Scalar(Vec<f64>),
    /// `A k̂k̂ᵀ + B (I − k̂k̂ᵀ)`.
    Matrix(Vec<(f64, f64)>),
}

impl Averaging {
    fn on(grid: &Grid, projection: TensorKind, kernel: &KernelSpec) -> Averaging {
        let d = grid.dim();
        match projection {
            TensorKind::L => Averaging::Matrix(combined_l_tables(grid, kernel.ell)),
            _ => Averaging::Scalar(radial_table(grid, |kappa| kernel.standard_symbol(d, kappa))),
        }
    }

    fn vector(&self, s: &Spectrum) -> Spectrum {
        match self {
            Averaging::Scalar(t) => s.apply_real(t),
            Averaging::Matrix(t) => apply_matrix_symbol(s, t),
        }
    }

    /// Scalar companion: `p_φ` or `p_{L,ℓ}`.
    fn scalar(&self, s: &Spectrum) -> Spectrum {
        match self {
            Averaging::Scalar(t) => s.apply_real(t),
            Averaging::Matrix(t) => s.apply_real(&t.iter().map(|v| v.0).collect::<Vec<_>>()),
        }
    }

    /// `∫ K^{ab}(y) w^{ab}(x+y) dy` for a symmetric tensor given by its
    /// upper-triangle spectra in `(a, b)` order with `a ≤ b`.
    fn contract(&self, w: &[Vec<Complex64>], d: usize, grid: &Grid) -> Vec<f64> {
        let mut out = vec![Complex64::default(); grid.len()];
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
        for i in 0..grid.len() {
            let mut trace = Complex64::default();
            let mut along = Complex64::default();
            let k = grid.derivative_wavevector(i);
            let k2: f64 = k.iter().map(|v| v * v).sum();
            for (m, &(a, b)) in pairs.iter().enumerate() {
                if a == b {
                    trace += w[m][i];
                }
                if k2 > 0.0 {
                    let f = if a == b { 1.0 } else { 2.0 };
                    along += w[m][i] * (f * k[a] * k[b] / k2);
                }
            }
            out[i] = match self {
                Averaging::Scalar(t) => trace * t[i],
                Averaging::Matrix(t) => {
                    let (aa, bb) = t[i];
                    trace * bb + along * (aa - bb)
                }
            };
        }
        crate::field::inverse_many(grid, &[&out]).pop().unwrap()
    }
}

fn pointwise_dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    let n = a[0].len();
    (0..n).map(|i| a.iter().zip(b).map(|(x, y)| x[i] * y[i]).sum()).collect()
}

/// Restriction of a field on the doubled grid to the base grid points.
fn subsample(fine: &Grid, coarse: &Grid, v: &[f64]) -> Vec<f64> {
    (0..coarse.len())
        .map(|i| {
            let mut idx = coarse.multi_index(i);
            for a in 0..coarse.dim() {
                idx[a] *= 2;
            }
            v[fine.flat_index(idx)]
        })
        .collect()
}

fn divergence_of(grid: &Grid, comps: &[Vec<f64>]) -> Vec<f64> {
    let refs: Vec<&[f64]> = comps.iter().map(|c| c.as_slice()).collect();
    let spec = crate::field::forward_many(grid, &refs);
    let mut div = vec![Complex64::default(); grid.len()];
    for (a, s) in spec.iter().enumerate() {
        for i in 0..grid.len() {
            div[i] += s[i] * Complex64::new(0.0, grid.derivative_wavevector(i)[a]);
        }
    }
    crate::field::inverse_many(grid, &[&div]).pop().unwrap()
}

fn l1(grid: &Grid, v: &[f64]) -> f64 {
    grid.volume() * sum::par_mean(v.len(), |i| v[i].abs())
}

/// Residual of the finite-`ℓ` balance for `•=I`, i.e.
/// `∂_t(u·u_{ℓ,γ}) + ∂_j[(u·u_{ℓ,γ})u^j + ½((|u|²u^j)_{ℓ,γ} − u^j(|u|²)_{ℓ,γ})]
///  + ∂_i(p u^i_{ℓ,γ} + p_{ℓ,γ}u^i) − u·f_{ℓ,γ} − u_{ℓ,γ}·f
///  − ν(Δ(u·u_{ℓ,γ}) − 2∂_k u·∂_k u_{ℓ,γ}) + 2D_{I,ℓ,γ}`.
/// `γ = 0` uses the ball average and the sharp-sphere `D_{I,ℓ,0}`.
pub fn local_balance_residual_i(
    snapshots: &[Field],
    forces: &[Field],
    nu: f64,
    ell: f64,
    gamma: f64,
    rule: &SphereRule,
) -> Result<LocalBalance> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("γ = {gamma} outside [0, 1]")));
    }
    let kernel = KernelSpec::standard(ell, gamma)?;
    local_balance(TensorKind::I, snapshots, forces, nu, &kernel, rule)
}

/// Residual of the longitudinal finite-`ℓ` balance with the combined kernel
/// `u_{L,ℓ}`, `p_{L,ℓ}` and right-hand side
/// `(d/(2ℓ)) ⨍ (σ·δu)|T_L δu|² dσ`.
pub fn local_balance_residual_l(
    snapshots: &[Field],
    forces: &[Field],
    nu: f64,
    ell: f64,
    rule: &SphereRule,
) -> Result<LocalBalance> {
    let kernel = KernelSpec::combined_l(ell)?;
    local_balance(TensorKind::L, snapshots, forces, nu, &kernel, rule)
}

fn local_balance(
    projection: TensorKind,
    snapshots: &[Field],
    forces: &[Field],
    nu: f64,
    kernel: &KernelSpec,
    rule: &SphereRule,
) -> Result<LocalBalance> {
    let dt = check_series(snapshots, forces, 3)?;
    let grid = *snapshots[0].grid();
    let d = grid.dim();
    let fine = grid.refined(2, 1);
    let coarse_avg = Averaging::on(&grid, projection, kernel);
    let fine_avg = Averaging::on(&fine, projection, kernel);
    let zero = Field::zeros(grid, d);

    // u·ũ at every snapshot, sampled on the base grid.
    let products: Vec<Vec<f64>> = snapshots
        .iter()
        .map(|u| {
            let v = coarse_avg.vector(&u.spectrum()).to_field();
            pointwise_dot(u.components(), v.components())
        })
        .collect();

    let mut out = LocalBalance {
        projection,
        ell: kernel.ell,
        gamma: kernel.gamma,
        times: Vec::new(),
        residuals: Vec::new(),
        l1: Vec::new(),
        dominant: Vec::new(),
    };
    for m in 1..snapshots.len() - 1 {
        let u = &snapshots[m];
        let f = forces.get(m).unwrap_or(&zero);
        let us = u.spectrum().resampled(&fine);
        let fs = f.spectrum().resampled(&fine);
        let uf = us.to_field();
        let vs = fine_avg.vector(&us);
        let vf = vs.to_field();
        let ff = fs.to_field();
        let fphi = fine_avg.vector(&fs).to_field();
        let ps = pressure_on_grid(u, forces.get(m), &fine)?;
        let pf = ps.to_field();
        let pphi = fine_avg.scalar(&ps).to_field();
        let uc = uf.components();
        let vc = vf.components();
        let x = pointwise_dot(uc, vc);
        let n2 = fine.len();

        // Quadratic and cubic tensors for the flux terms.
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
        let quad: Vec<Vec<f64>> = pairs
            .iter()
            .map(|&(a, b)| (0..n2).map(|i| uc[a][i] * uc[b][i]).collect())
            .collect();
        let quad_refs: Vec<&[f64]> = quad.iter().map(|v| v.as_slice()).collect();
        let q = fine_avg.contract(&crate::field::forward_many(&fine, &quad_refs), d, &fine);
        let mut flux_y = Vec::with_capacity(d);
        for j in 0..d {
            let cubic: Vec<Vec<f64>> = quad
                .iter()
                .map(|w| (0..n2).map(|i| w[i] * uc[j][i]).collect())
                .collect();
            let refs: Vec<&[f64]> = cubic.iter().map(|v| v.as_slice()).collect();
            let wj = fine_avg.contract(&crate::field::forward_many(&fine, &refs), d, &fine);
            flux_y.push(
                (0..n2)
                    .map(|i| x[i] * uc[j][i] + 0.5 * (wj[i] - uc[j][i] * q[i]))
                    .collect::<Vec<f64>>(),
            );
        }
        let div_y = divergence_of(&fine, &flux_y);
        let press: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..n2)
                    .map(|k| vc[i][k] * pf.component(0)[k] + uc[i][k] * pphi.component(0)[k])
                    .collect()
            })
            .collect();
        let div_p = divergence_of(&fine, &press);
        let forcing: Vec<f64> = pointwise_dot(uc, fphi.components())
            .iter()
            .zip(pointwise_dot(vc, ff.components()))
            .map(|(a, b)| a + b)
            .collect();
        let lap_x = {
            let s = crate::field::forward_many(&fine, &[&x]);
            let spec = Spectrum::from_modes(fine, 0.0, s)?;
            spec.laplacian().to_field().into_components().pop().unwrap()
        };
        let mut grad_dot = vec![0.0; n2];
        for k in 0..d {
            let du = us.derivative(k).to_field();
            let dv = vs.derivative(k).to_field();
            for c in 0..d {
                let (a, b) = (du.component(c), dv.component(c));
                for i in 0..n2 {
                    grad_dot[i] += a[i] * b[i];
                }
            }
        }

        let sample = |v: &[f64]| subsample(&fine, &grid, v);
        let dtx: Vec<f64> = products[m + 1]
            .iter()
            .zip(&products[m - 1])
            .map(|(a, b)| (a - b) / (2.0 * dt))
            .collect();
        let div_y = sample(&div_y);
        let div_p = sample(&div_p);
        let forcing = sample(&forcing);
        let visc: Vec<f64> = sample(&lap_x)
            .iter()
            .zip(sample(&grad_dot))
            .map(|(l, g)| nu * (l - 2.0 * g))
            .collect();
        let rhs: Vec<f64> = match projection {
            TensorKind::I => {
                let dfield = if kernel.gamma > 0.0 {
                    flux_field_mollified(u, kernel, rule)?
                } else {
                    flux_field_sphere(u, TensorKind::I, kernel.ell, rule)?
                };
                dfield.values.component(0).iter().map(|v| -2.0 * v).collect()
            }
            _ => {
                let dfield = flux_field_sphere(u, TensorKind::L, kernel.ell, rule)?;
                let c = -(d as f64) / (2.0 * TensorKind::L.structure_constant(d));
                dfield.values.component(0).iter().map(|v| c * v).collect()
            }
        };
        let residual: Vec<f64> = (0..grid.len())
            .map(|i| dtx[i] + div_y[i] + div_p[i] - forcing[i] - visc[i] - rhs[i])
            .collect();
        let dominant = [&dtx, &div_y, &div_p, &forcing, &visc, &rhs]
            .iter()
            .map(|v| l1(&grid, v))
            .fold(0.0, f64::max);
        out.times.push(u.time());
        out.l1.push(l1(&grid, &residual));
        out.dominant.push(dominant);
        out.residuals.push(Field::from_parts(grid, u.time(), vec![residual]));
    }
    Ok(out)
}

/// One audited remainder term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditTerm {
    pub measured: f64,
    pub bound: f64,
    /// `measured / bound`, defined as 0 when both vanish.
    pub ratio: f64,
}

impl AuditTerm {
    fn new(measured: f64, bound: f64) -> AuditTerm {
        let ratio = if measured == 0.0 {
            0.0
        } else if bound == 0.0 {
            f64::INFINITY
        } else {
            measured / bound
        };
        AuditTerm { measured, bound, ratio }
    }
}

/// Measured remainder terms of the time-integrated balance against their
/// Besov-type bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderAudit {
    pub ell: f64,
    pub alpha: f64,
    /// Exponent in the `L^{1+σ}_t L²_x` forcing norm.
    pub sigma: f64,
    /// Boundary term: `½(‖u₀·(u₀−u_{ℓ,0})‖_{L¹} + ‖u_T·(u_T−u_{ℓ,T})‖_{L¹})`
    /// against `½ ℓ^α (‖u₀‖‖u₀‖_{B^α} + ‖u_T‖‖u_T‖_{B^α})`.
    pub boundary: AuditTerm,
    /// The raw four-piece boundary value `½∫[|u₀|² − u_{ℓ,0}·u₀ + u_{ℓ,T}·u_T − |u_T|²]`.
    pub boundary_raw: f64,
    /// `|∫∫ f·(u − u_ℓ)|` against `‖f‖_{L^{1+σ}_t L²} ℓ^α ‖u‖_{L^{(1+σ)/σ}_t B^α}`.
    pub forcing: AuditTerm,
    /// `|ν∫∫ ∂u_ℓ:∂u|` against `ν^{1/2}‖∇u‖_{L²_{t,x}} ν^{1/2} ℓ^{α−1} ‖u‖_{L²_t B^α}`.
    pub viscous: AuditTerm,
    /// Constant `C` in `measured ≤ C · bound`.
    pub constant: f64,
    pub pass: bool,
}

/// Default constant for [`remainder_bound_audit`].
pub const AUDIT_CONSTANT: f64 = 10.0;
/// Default `σ` in the forcing norm.
pub const DEFAULT_SIGMA: f64 = 0.5;

/// Audits the three remainder terms at scale `ell` with the ball average.
/// Besov seminorms are taken over [`crate::field::default_shift_set`].
pub fn remainder_bound_audit(
    snapshots: &[Field],
    forces: &[Field],
    nu: f64,
    ell: f64,
    alpha: f64,
) -> Result<RemainderAudit> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("α = {alpha} outside (0, 1]")));
    }
    let dt = check_series(snapshots, forces, 3)?;
    let grid = *snapshots[0].grid();
    let shifts = crate::field::default_shift_set(&grid, 0);
    let sigma = DEFAULT_SIGMA;
    let table: Vec<f64> = balance_averaging_table(&grid, TensorKind::I, ell)
        .into_iter()
        .map(|t| t.0)
        .collect();
    let avg = |u: &Field| u.spectrum().apply_real(&table);

    let besov: Vec<f64> = snapshots
        .iter()
        .map(|u| crate::field::besov_seminorm(u, alpha, &shifts))
        .collect::<Result<_>>()?;
    let norms: Vec<f64> = snapshots.iter().map(crate::field::l2_norm).collect();

    let pair = |m: usize| -> Result<(f64, f64)> {
        let u = &snapshots[m];
        let a = avg(u).to_field();
        let w: Vec<f64> = (0..grid.len())
            .map(|i| (0..grid.dim()).map(|c| u.component(c)[i] * (u.component(c)[i] - a.component(c)[i])).sum())
            .collect();
        let measured = l1(&grid, &w);
        Ok((measured, norms[m] * ell.powf(alpha) * besov[m]))
    };
    let last = snapshots.len() - 1;
    let (m0, b0) = pair(0)?;
    let (mt, bt) = pair(last)?;
    let raw = {
        let e = |m: usize| {
            let s = snapshots[m].spectrum();
            0.5 * (spectral_inner(&s, &s) - spectral_inner(&s, &avg(&snapshots[m])))
        };
        e(0) - e(last)
    };

    let mut force_terms = Vec::new();
    let mut force_norms = Vec::new();
    let mut visc_terms = Vec::new();
    let mut grad_sq = Vec::new();
    for (m, u) in snapshots.iter().enumerate() {
        let s = u.spectrum();
        let a = avg(u);
        visc_terms.push(gradient_inner(&a, &s));
        grad_sq.push(gradient_inner(&s, &s));
        match forces.get(m) {
            Some(f) => {
                let fs = f.spectrum();
                force_terms.push(spectral_inner(&fs, &s) - spectral_inner(&fs, &a));
                force_norms.push(crate::field::l2_norm(f));
            }
            None => {
                force_terms.push(0.0);
                force_norms.push(0.0);
            }
        }
    }
    let integral = |v: &[f64]| *cumulative(v, dt).last().unwrap();
    let time_norm = |v: &[f64], p: f64| integral(&v.iter().map(|x| x.abs().powf(p)).collect::<Vec<_>>()).max(0.0).powf(1.0 / p);
    let forcing_measured = integral(&force_terms).abs();
    let forcing_bound =
        time_norm(&force_norms, 1.0 + sigma) * ell.powf(alpha) * time_norm(&besov, (1.0 + sigma) / sigma);
    let viscous_measured = (nu * integral(&visc_terms)).abs();
    let viscous_bound = nu.sqrt() * integral(&grad_sq).max(0.0).sqrt() * nu.sqrt() * ell.powf(alpha - 1.0) * time_norm(&besov, 2.0);

    let boundary = AuditTerm::new(0.5 * (m0 + mt), 0.5 * (b0 + bt));
    let forcing = AuditTerm::new(forcing_measured, forcing_bound);
    let viscous = AuditTerm::new(viscous_measured, viscous_bound);
    let pass = [boundary, forcing, viscous]
        .iter()
        .all(|t| t.measured <= AUDIT_CONSTANT * t.bound || t.measured == 0.0);
    Ok(RemainderAudit {
        ell,
        alpha,
        sigma,
        boundary,
        boundary_raw: raw,
        forcing,
        viscous,
        constant: AUDIT_CONSTANT,
        pass,
    })
}

/// `max_x |f|` over every residual field of a local balance.
pub fn local_max(b: &LocalBalance) -> f64 {
    b.residuals.iter().map(max_norm).fold(0.0, f64::max)
}
