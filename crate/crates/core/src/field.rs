//! Real fields on a [`Grid`] and their Fourier coefficients.
//!
//! A [`Field`] holds one or more real components (velocity, forcing, or a
//! scalar such as pressure). Its spectrum is computed on demand and cached.
//! Off-grid translation, derivatives and the Leray projector act on the
//! trigonometric interpolant, so they are exact for band-limited data.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::Grid;
use crate::sum;

/// Relative divergence tolerance for fields flagged solenoidal.
pub const SOLENOIDAL_TOL: f64 = 1e-10;

/// Real-valued field with `ncomp` components sampled on a grid.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Grid,
    time: f64,
    data: Vec<Vec<f64>>,
    solenoidal: bool,
    spectrum: OnceLock<Arc<Spectrum>>,
}

/// Fourier coefficients of each component, normalized so that
/// `f(x) = Σ_k f̂_k e^{ik·x}`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: Grid,
    time: f64,
    modes: Vec<Vec<Complex64>>,
}

fn check_finite(data: &[Vec<f64>]) -> Result<()> {
    for (component, comp) in data.iter().enumerate() {
        if let Some(index) = comp.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { component, index });
        }
    }
    Ok(())
}

impl Field {
    /// Wraps component arrays, rejecting wrong lengths and non-finite values.
    pub fn new(grid: Grid, time: f64, data: Vec<Vec<f64>>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("a field needs at least one component".into()));
        }
        if let Some(c) = data.iter().position(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch(format!(
                "component {c} has {} values, grid has {}",
                data[c].len(),
                grid.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self::from_parts(grid, time, data))
    }

    pub(crate) fn from_parts(grid: Grid, time: f64, data: Vec<Vec<f64>>) -> Self {
        Field {
            grid,
            time,
            data,
            solenoidal: false,
            spectrum: OnceLock::new(),
        }
    }

    pub fn zeros(grid: Grid, ncomp: usize) -> Self {
        Self::from_parts(grid, 0.0, vec![vec![0.0; grid.len()]; ncomp])
    }

    /// Samples `f(x, component)` at every lattice point.
    pub fn from_fn<F>(grid: Grid, ncomp: usize, f: F) -> Self
    where
        F: Fn([f64; 3], usize) -> f64 + Sync,
    {
        let data = (0..ncomp)
            .map(|c| {
                (0..grid.len())
                    .into_par_iter()
                    .map(|i| f(grid.point(i), c))
                    .collect()
            })
            .collect();
        Self::from_parts(grid, 0.0, data)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        if let Some(s) = self.spectrum.get_mut() {
            Arc::make_mut(s).time = time;
        }
        self
    }

    pub fn ncomp(&self) -> usize {
        self.data.len()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.data[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.data
    }

    pub fn is_solenoidal(&self) -> bool {
        self.solenoidal
    }

    /// Flags the field solenoidal after checking its spectral divergence.
    pub fn into_solenoidal(mut self) -> Result<Self> {
        let div = max_divergence(&self)?;
        let scale = max_norm(&self);
        if div > SOLENOIDAL_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidArgument(format!(
                "field is not solenoidal: max |div| = {div:e}, max |u| = {scale:e}"
            )));
        }
        self.solenoidal = true;
        Ok(self)
    }

    /// Cached spectrum. Fields are validated finite on construction.
    pub fn spectrum(&self) -> Arc<Spectrum> {
        self.spectrum
            .get_or_init(|| Arc::new(Spectrum::of(self)))
            .clone()
    }

    /// `λ f`.
    pub fn scaled(&self, lambda: f64) -> Field {
        let data = self
            .data
            .iter()
            .map(|c| c.iter().map(|v| lambda * v).collect())
            .collect();
        Field::from_parts(self.grid, self.time, data)
    }

    /// `a f + b g`, componentwise.
    pub fn lincomb(a: f64, f: &Field, b: f64, g: &Field) -> Result<Field> {
        same_shape(f, g)?;
        let data = f
            .data
            .iter()
            .zip(&g.data)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect())
            .collect();
        Ok(Field::from_parts(f.grid, f.time, data))
    }

    /// The constant field `value` with `ncomp` components.
    pub fn constant(grid: Grid, value: &[f64]) -> Field {
        let data = value.iter().map(|&v| vec![v; grid.len()]).collect();
        Field::from_parts(grid, 0.0, data)
    }
}

pub(crate) fn same_shape(f: &Field, g: &Field) -> Result<()> {
    if f.grid != g.grid || f.ncomp() != g.ncomp() {
        return Err(Error::GridMismatch(format!(
            "fields differ in shape: {:?}/{} vs {:?}/{}",
            f.grid,
            f.ncomp(),
            g.grid,
            g.ncomp()
        )));
    }
    Ok(())
}

/// Forward transforms of several real arrays, two per complex FFT.
pub(crate) fn forward_many(grid: &Grid, arrays: &[&[f64]]) -> Vec<Vec<Complex64>> {
    let mut out = Vec::with_capacity(arrays.len());
    for pair in arrays.chunks(2) {
        let (a, b) = fft::forward_real_pair(grid, pair[0], pair.get(1).copied());
        out.push(a);
        if let Some(b) = b {
            out.push(b);
        }
    }
    out
}

/// Inverse transforms of several Hermitian spectra, two per complex FFT.
pub(crate) fn inverse_many(grid: &Grid, spectra: &[&[Complex64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(spectra.len());
    for pair in spectra.chunks(2) {
        let (a, b) = fft::inverse_real_pair(grid, pair[0], pair.get(1).copied());
        out.push(a);
        if let Some(b) = b {
            out.push(b);
        }
    }
    out
}

impl Spectrum {
    fn of(f: &Field) -> Spectrum {
        let refs: Vec<&[f64]> = f.data.iter().map(|c| c.as_slice()).collect();
        Spectrum {
            grid: f.grid,
            time: f.time,
            modes: forward_many(&f.grid, &refs),
        }
    }

    pub fn from_modes(grid: Grid, time: f64, modes: Vec<Vec<Complex64>>) -> Result<Self> {
        if modes.is_empty() || modes.iter().any(|m| m.len() != grid.len()) {
            return Err(Error::GridMismatch("spectrum length does not match grid".into()));
        }
        Ok(Spectrum { grid, time, modes })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn ncomp(&self) -> usize {
        self.modes.len()
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        &self.modes[c]
    }

    pub fn components(&self) -> &[Vec<Complex64>] {
        &self.modes
    }

    /// Synthesizes the real field. The spectrum must be Hermitian.
    pub fn to_field(&self) -> Field {
        let refs: Vec<&[Complex64]> = self.modes.iter().map(|c| c.as_slice()).collect();
        Field::from_parts(self.grid, self.time, inverse_many(&self.grid, &refs))
    }

    /// Multiplies every component by a scalar symbol `m(flat index)`.
    pub fn apply<F>(&self, m: F) -> Spectrum
    where
        F: Fn(usize) -> Complex64 + Sync,
    {
        let symbol: Vec<Complex64> = (0..self.grid.len()).into_par_iter().map(&m).collect();
        self.apply_symbol(&symbol)
    }

    pub(crate) fn apply_symbol(&self, symbol: &[Complex64]) -> Spectrum {
        let modes = self
            .modes
            .iter()
            .map(|c| c.iter().zip(symbol).map(|(a, b)| a * b).collect())
            .collect();
        Spectrum {
            grid: self.grid,
            time: self.time,
            modes,
        }
    }

    /// Multiplies every component by a real symbol.
    pub(crate) fn apply_real(&self, symbol: &[f64]) -> Spectrum {
        let modes = self
            .modes
            .iter()
            .map(|c| c.iter().zip(symbol).map(|(a, b)| a * b).collect())
            .collect();
        Spectrum {
            grid: self.grid,
            time: self.time,
            modes,
        }
    }

    /// `∂_axis` of every component.
    pub fn derivative(&self, axis: usize) -> Spectrum {
        let g = self.grid;
        self.apply(|i| Complex64::new(0.0, g.derivative_wavevector(i)[axis]))
    }

    /// Laplacian of every component.
    pub fn laplacian(&self) -> Spectrum {
        let g = self.grid;
        self.apply(|i| {
            let k = g.wavevector(i);
            Complex64::new(-((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64), 0.0)
        })
    }

    /// Translation `f(· + y)`.
    pub fn shifted(&self, y: &[f64; 3]) -> Spectrum {
        self.apply_symbol(&phase_symbol(&self.grid, y))
    }

    /// Zeroes every mode with some `|k_a| > cutoff`.
    pub fn truncated(&self, cutoff: i64) -> Spectrum {
        let g = self.grid;
        self.apply(|i| {
            let k = g.wavevector(i);
            if k.iter().any(|ka| ka.abs() > cutoff) {
                Complex64::default()
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
    }

    /// Restriction of the components `range` to a new spectrum.
    pub fn select(&self, range: std::ops::Range<usize>) -> Spectrum {
        Spectrum {
            grid: self.grid,
            time: self.time,
            modes: self.modes[range].to_vec(),
        }
    }

    /// The same trigonometric interpolant represented on `target`.
    ///
    /// Refinement zero-pads and splits Nyquist modes evenly between `±n/2`,
    /// which keeps the interpolant real. Coarsening folds every mode onto its
    /// alias, which is exactly pointwise sampling when `target.n()` divides
    /// `self.grid.n()`.
    pub fn resampled(&self, target: &Grid) -> Spectrum {
        assert_eq!(target.dim(), self.grid.dim());
        let src = self.grid;
        if target.n() == src.n() {
            return self.clone();
        }
        let d = src.dim();
        let mut modes = vec![vec![Complex64::default(); target.len()]; self.ncomp()];
        if target.n() > src.n() {
            let half = (src.n() / 2) as i64;
            for i in 0..src.len() {
                let k = src.wavevector(i);
                let nyq: Vec<usize> = (0..d).filter(|&a| k[a] == -half).collect();
                let copies = 1usize << nyq.len();
                let weight = 1.0 / copies as f64;
                for mask in 0..copies {
                    let mut kk = k;
                    for (bit, &a) in nyq.iter().enumerate() {
                        if mask >> bit & 1 == 1 {
                            kk[a] = half;
                        }
                    }
                    let mut idx = [0usize; 3];
                    for a in 0..d {
                        idx[a] = target.index_of_wavenumber(kk[a]);
                    }
                    let j = target.flat_index(idx);
                    for (dst, s) in modes.iter_mut().zip(&self.modes) {
                        dst[j] += s[i] * weight;
                    }
                }
            }
        } else {
            for i in 0..src.len() {
                let k = src.wavevector(i);
                let mut idx = [0usize; 3];
                for a in 0..d {
                    idx[a] = target.index_of_wavenumber(k[a]);
                }
                let j = target.flat_index(idx);
                for (dst, s) in modes.iter_mut().zip(&self.modes) {
                    dst[j] += s[i];
                }
            }
        }
        Spectrum {
            grid: *target,
            time: self.time,
            modes,
        }
    }

    /// Total power `Σ_c Σ_k |f̂_{c,k}|²` per mode.
    /// Per-mode power `P_k = Σ_c |û_{c,k}|²`, so that `∫|u|² = (2π)^d Σ_k P_k`.
    pub fn power(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| self.modes.iter().map(|c| c[i].norm_sqr()).sum())
            .collect()
    }
}

/// Per-axis translation factors `e^{i k_a y_a}`, with `cos(k_a y_a)` on the
/// Nyquist index.
pub(crate) fn phase_tables(grid: &Grid, y: &[f64; 3]) -> Vec<Vec<Complex64>> {
    (0..grid.dim())
        .map(|a| {
            (0..grid.n())
                .map(|i| {
                    let arg = grid.wavenumber(i) as f64 * y[a];
                    if grid.is_nyquist(i) {
                        Complex64::new(arg.cos(), 0.0)
                    } else {
                        Complex64::from_polar(1.0, arg)
                    }
                })
                .collect()
        })
        .collect()
}

/// Full translation symbol for shift `y`.
pub(crate) fn phase_symbol(grid: &Grid, y: &[f64; 3]) -> Vec<Complex64> {
    let tables = phase_tables(grid, y);
    let n = grid.n();
    let mut out = Vec::with_capacity(grid.len());
    match grid.dim() {
        2 => {
            for i in 0..n {
                for j in 0..n {
                    out.push(tables[0][i] * tables[1][j]);
                }
            }
        }
        _ => {
            for i in 0..n {
                for j in 0..n {
                    let tij = tables[0][i] * tables[1][j];
                    for k in 0..n {
                        out.push(tij * tables[2][k]);
                    }
                }
            }
        }
    }
    out
}

/// Spectral coefficients of `f`.
pub fn forward_transform(f: &Field) -> Result<Spectrum> {
    check_finite(&f.data)?;
    Ok((*f.spectrum()).clone())
}

/// Exact translation `f(· + y)` of the trigonometric interpolant.
pub fn shift(f: &Field, y: &[f64]) -> Result<Field> {
    let y = vector(f.grid.dim(), y)?;
    let mut out = f.spectrum().shifted(&y).to_field();
    out.solenoidal = f.solenoidal;
    Ok(out)
}

pub(crate) fn vector(dim: usize, y: &[f64]) -> Result<[f64; 3]> {
    if y.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "expected a {dim}-vector, got {} entries",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite vector entry".into()));
    }
    let mut out = [0.0; 3];
    out[..dim].copy_from_slice(y);
    Ok(out)
}

fn require_vector_field(f: &Field) -> Result<()> {
    if f.ncomp() != f.grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "expected a {}-component vector field, got {} components",
            f.grid.dim(),
            f.ncomp()
        )));
    }
    Ok(())
}

/// Leray projection of spectral coefficients, in place.
pub(crate) fn project_modes(grid: &Grid, modes: &mut [Vec<Complex64>]) {
    let d = grid.dim();
    for i in 0..grid.len() {
        let k = grid.derivative_wavevector(i);
        let k2: f64 = k.iter().map(|v| v * v).sum();
        if k2 == 0.0 {
            continue;
        }
        let mut dot = Complex64::default();
        for a in 0..d {
            dot += modes[a][i] * k[a];
        }
        let dot = dot / k2;
        for a in 0..d {
            modes[a][i] -= dot * k[a];
        }
    }
}

/// Orthogonal projection onto divergence-free fields.
pub fn leray_project(f: &Field) -> Result<Field> {
    require_vector_field(f)?;
    let mut s = (*f.spectrum()).clone();
    project_modes(&f.grid, &mut s.modes);
    let mut out = s.to_field();
    out.solenoidal = true;
    Ok(out)
}

/// Spectral divergence of a vector field.
pub fn divergence(f: &Field) -> Result<Field> {
    require_vector_field(f)?;
    let s = f.spectrum();
    let g = f.grid;
    let div: Vec<Complex64> = (0..g.len())
        .map(|i| {
            let k = g.derivative_wavevector(i);
            (0..g.dim())
                .map(|a| s.modes[a][i] * Complex64::new(0.0, k[a]))
                .sum()
        })
        .collect();
    let spec = Spectrum {
        grid: g,
        time: f.time,
        modes: vec![div],
    };
    Ok(spec.to_field())
}

/// `max_x |div f|`.
pub fn max_divergence(f: &Field) -> Result<f64> {
    Ok(max_norm(&divergence(f)?))
}

/// Gradient of a scalar field.
pub fn gradient(p: &Field) -> Result<Field> {
    if p.ncomp() != 1 {
        return Err(Error::InvalidArgument("gradient expects a scalar field".into()));
    }
    let s = p.spectrum();
    let parts: Vec<Vec<Complex64>> = (0..p.grid.dim())
        .map(|a| s.derivative(a).modes.remove(0))
        .collect();
    Ok(Spectrum {
        grid: p.grid,
        time: p.time,
        modes: parts,
    }
    .to_field())
}

/// `max_{c,x} |f_c(x)|`.
pub fn max_norm(f: &Field) -> f64 {
    f.data
        .iter()
        .map(|c| sum::par_max(c.len(), |i| c[i].abs()))
        .fold(0.0, f64::max)
}

/// `∫_{T^d} f·g dx` by uniform-grid quadrature.
pub fn inner(f: &Field, g: &Field) -> Result<f64> {
    same_shape(f, g)?;
    let vol = f.grid.volume();
    let nc = f.ncomp();
    Ok(vol
        * sum::par_mean(f.grid.len(), |i| {
            (0..nc).map(|c| f.data[c][i] * g.data[c][i]).sum::<f64>()
        }))
}

/// `‖f‖_{L²(T^d)}`.
pub fn l2_norm(f: &Field) -> f64 {
    inner(f, f).map(f64::sqrt).unwrap_or(0.0)
}

/// `(2π)^d Σ_k |f̂_k|²`, the Parseval form of `‖f‖²_{L²}`.
pub fn spectral_energy(s: &Spectrum) -> f64 {
    let p = s.power();
    s.grid.volume() * sum::pairwise(&p)
}

/// Pressure for velocity `u` and forcing `f`, sampled on the grid of `u`.
///
/// Solves `Δp = div f − ∂_i∂_j(u^i u^j)` with zero mean. The quadratic terms
/// are formed on a doubled grid, so the samples are exact whenever `u` is
/// band-limited.
pub fn pressure_from_velocity(u: &Field, f: Option<&Field>) -> Result<Field> {
    let fine = u.grid.refined(2, 1);
    let p = pressure_on_grid(u, f, &fine)?;
    Ok(p.resampled(&u.grid).to_field())
}

/// Spectrum of the pressure represented on `target`, a grid at least as fine
/// as that of `u`. Exact when `target` has more than twice the bandwidth of
/// the velocity products.
pub fn pressure_on_grid(u: &Field, f: Option<&Field>, target: &Grid) -> Result<Spectrum> {
    require_vector_field(u)?;
    if let Some(f) = f {
        same_shape(u, f)?;
    }
    if target.n() < u.grid.n() || target.dim() != u.grid.dim() {
        return Err(Error::GridMismatch("pressure target grid must refine the velocity grid".into()));
    }
    let d = u.grid.dim();
    let us = u.spectrum().resampled(target);
    let fs = f.map(|f| f.spectrum().resampled(target));
    let uf = us.to_field();
    let mut prods: Vec<Vec<f64>> = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..d {
        for j in i..d {
            prods.push(
                uf.data[i]
                    .iter()
                    .zip(&uf.data[j])
                    .map(|(a, b)| a * b)
                    .collect(),
            );
            pairs.push((i, j));
        }
    }
    let refs: Vec<&[f64]> = prods.iter().map(|v| v.as_slice()).collect();
    let w = forward_many(target, &refs);
    let g = *target;
    let p: Vec<Complex64> = (0..g.len())
        .into_par_iter()
        .map(|idx| pressure_mode(&g, idx, &pairs, &w, fs.as_ref()))
        .collect();
    Ok(Spectrum {
        grid: g,
        time: u.time,
        modes: vec![p],
    })
}

fn pressure_mode(
    g: &Grid,
    idx: usize,
    pairs: &[(usize, usize)],
    w: &[Vec<Complex64>],
    fs: Option<&Spectrum>,
) -> Complex64 {
    let kf = g.wavevector(idx);
    let k2 = (kf[0] * kf[0] + kf[1] * kf[1] + kf[2] * kf[2]) as f64;
    if k2 == 0.0 {
        return Complex64::default();
    }
    let ke = g.derivative_wavevector(idx);
    let mut rhs = Complex64::default();
    for (m, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            rhs += w[m][idx] * (kf[i] * kf[i]) as f64;
        } else {
            rhs += w[m][idx] * (2.0 * ke[i] * ke[j]);
        }
    }
    if let Some(fs) = fs {
        for a in 0..g.dim() {
            rhs += fs.modes[a][idx] * Complex64::new(0.0, ke[a]);
        }
    }
    -rhs / k2
}

fn validate_shift(y: &[f64; 3]) -> Result<f64> {
    let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
    if !(r > 0.0 && r <= PI + 1e-12) {
        return Err(Error::InvalidArgument(format!("shift magnitude {r} outside (0, π]")));
    }
    Ok(r)
}

/// `sup_{y ∈ shifts} |y|^{-α} ‖u(·+y) − u‖_{L²}`, evaluated through Parseval.
pub fn besov_seminorm(u: &Field, alpha: f64, shifts: &[[f64; 3]]) -> Result<f64> {
    let s = u.spectrum();
    besov_from_power(&u.grid, &s.power(), alpha, shifts)
}

/// Besov seminorm from a (possibly time-integrated) power spectrum
/// `P_k = Σ_c |û_{c,k}|²`.
pub fn besov_from_power(grid: &Grid, power: &[f64], alpha: f64, shifts: &[[f64; 3]]) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} outside (0, 1]")));
    }
    if shifts.is_empty() {
        return Err(Error::InvalidArgument("empty shift set".into()));
    }
    if power.len() != grid.len() {
        return Err(Error::GridMismatch("power spectrum length does not match grid".into()));
    }
    let radii = shifts.iter().map(validate_shift).collect::<Result<Vec<f64>>>()?;
    let vol = grid.volume();
    let values: Vec<f64> = shifts
        .par_iter()
        .zip(&radii)
        .map(|(y, r)| {
            let sym = phase_symbol(grid, y);
            let terms: Vec<f64> = sym
                .iter()
                .zip(power)
                .map(|(m, p)| (m - 1.0).norm_sqr() * p)
                .collect();
            (vol * sum::pairwise(&terms)).sqrt() / r.powf(alpha)
        })
        .collect();
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// Shift set for Besov estimates: every grid-aligned `y` with
/// `0 < |y| ≤ π/4`, plus 32 seeded random directions for each dyadic
/// magnitude `π/4 · 2^{-j} ≥ h`.
pub fn default_shift_set(grid: &Grid, seed: u64) -> Vec<[f64; 3]> {
    let h = grid.spacing();
    let rmax = PI / 4.0;
    let m = (rmax / h).floor() as i64;
    let d = grid.dim();
    let mut out = Vec::new();
    let range: Vec<i64> = (-m..=m).collect();
    let third: &[i64] = if d == 3 { &range } else { &[0] };
    for &a in &range {
        for &b in &range {
            for &c in third {
                let y = [a as f64 * h, b as f64 * h, c as f64 * h];
                let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
                if r > 0.0 && r <= rmax * (1.0 + 1e-12) {
                    out.push(y);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = rmax;
    while r >= h * (1.0 - 1e-12) {
        for _ in 0..32 {
            let dir = random_unit(&mut rng, d);
            out.push([dir[0] * r, dir[1] * r, dir[2] * r]);
        }
        r *= 0.5;
    }
    out
}

/// Sphere-averaged second-order structure function
/// `⨍ ‖u(·+rσ) − u‖²_{L²} dσ = (2π)^d Σ_k 2 P_k (1 − J(|k| r))` with the exact
/// sphere symbol `J`.
pub fn second_order_structure(grid: &Grid, power: &[f64], r: f64) -> f64 {
    let d = grid.dim();
    let terms: Vec<f64> = power
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let k = grid.wavevector(i);
            let kk = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
            2.0 * p * (1.0 - crate::sphere::sphere_symbol(d, kk * r))
        })
        .collect();
    grid.volume() * sum::pairwise(&terms)
}

/// Measured regularity exponent `α = ζ₂/2`: the least-squares slope of
/// `½ log S₂(r)` against `log r` over `radii`, with `S₂` from the
/// time-averaged power of `snapshots`. Clamped to `(0, 1]`.
pub fn fit_besov_exponent(snapshots: &[Field], radii: &[f64]) -> Result<f64> {
    if snapshots.is_empty() || radii.len() < 2 {
        return Err(Error::InvalidArgument("exponent fit needs snapshots and at least two radii".into()));
    }
    let grid = *snapshots[0].grid();
    let mut power = vec![0.0; grid.len()];
    for u in snapshots {
        if *u.grid() != grid {
            return Err(Error::GridMismatch("snapshots on different grids".into()));
        }
        for (a, b) in power.iter_mut().zip(u.spectrum().power()) {
            *a += b / snapshots.len() as f64;
        }
    }
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| (r.ln(), 0.5 * second_order_structure(&grid, &power, r).ln()))
        .collect();
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Domain("structure function vanishes; exponent undefined".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok((sxy / sxx).clamp(1e-6, 1.0))
}

pub(crate) fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> [f64; 3] {
    loop {
        let mut v = [0.0f64; 3];
        for x in v.iter_mut().take(d) {
            *x = StandardNormal.sample(rng);
        }
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r > 1e-8 {
            return [v[0] / r, v[1] / r, v[2] / r];
        }
    }
}

/// Parameters of a random band-limited solenoidal field.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RandomFieldSpec {
    pub seed: u64,
    /// Shell-energy slope: `E(|k|) ∝ |k|^slope`.
    pub slope: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// Target kinetic energy `½‖u‖²_{L²}`.
    pub energy: f64,
}

/// Random solenoidal field restricted to `k_min ≤ |k| ≤ k_max` and to the
/// 2/3-rule band, normalized to the requested energy.
pub fn random_solenoidal(grid: &Grid, spec: &RandomFieldSpec) -> Result<Field> {
    if !(spec.k_min >= 0.0 && spec.k_max >= spec.k_min && spec.energy >= 0.0 && spec.slope.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid random field parameters {spec:?}")));
    }
    let d = grid.dim();
    let cutoff = grid.two_thirds_cutoff();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut modes = vec![vec![Complex64::default(); grid.len()]; d];
    for i in 0..grid.len() {
        let k = grid.wavevector(i);
        let kk = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
        if kk == 0.0 || kk < spec.k_min || kk > spec.k_max || k.iter().any(|v| v.abs() > cutoff) {
            continue;
        }
        let amp = kk.powf(0.5 * (spec.slope - (d as f64 - 1.0)));
        for comp in modes.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            comp[i] = Complex64::new(re, im) * amp;
        }
    }
    // Hermitian part, so the synthesized field is real.
    let sym: Vec<Vec<Complex64>> = modes
        .iter()
        .map(|c| {
            (0..grid.len())
                .map(|i| (c[i] + c[grid.conjugate_index(i)].conj()) * 0.5)
                .collect()
        })
        .collect();
    let mut sym = sym;
    project_modes(grid, &mut sym);
    let spec_field = Spectrum {
        grid: *grid,
        time: 0.0,
        modes: sym,
    };
    let e = 0.5 * spectral_energy(&spec_field);
    if spec.energy > 0.0 && e == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "no admissible modes in |k| ∈ [{}, {}] at n = {}",
            spec.k_min,
            spec.k_max,
            grid.n()
        )));
    }
    let scale = if e > 0.0 { (spec.energy / e).sqrt() } else { 0.0 };
    let scaled = spec_field.apply_real(&vec![scale; grid.len()]);
    let mut out = scaled.to_field();
    out.solenoidal = true;
    Ok(out)
}
