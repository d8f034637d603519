//! Pseudo-spectral Navier–Stokes solver on the periodic box.
//!
//! The state is the Fourier spectrum of a solenoidal velocity. The
//! nonlinearity is evaluated in divergence form `−ik_j (u_j u)^`, dealiased by
//! the 2/3 rule (or by 3/2 padding), and Leray projected. Time stepping is
//! classical RK4, optionally with a Lawson integrating factor for the viscous
//! term. The work `∫⟨f,u⟩` and dissipation `ν∫‖∇u‖²` are integrated alongside
//! the velocity with the same stages.

use std::fs;
use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::balance::{assemble_series, gradient_inner, spectral_inner, EnergySeries};
use crate::error::{Error, Result};
use crate::field::{forward_many, inverse_many, project_modes, random_solenoidal, Field, RandomFieldSpec, Spectrum};
use crate::grid::Grid;

/// Dealiasing of the quadratic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dealias {
    /// Keep `|k_a| ≤ n/3` in every axis.
    #[default]
    TwoThirds,
    /// Evaluate products on a grid with `3n/2` points per axis.
    Padded,
}

/// Reaction to a violated CFL bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CflPolicy {
    #[default]
    Abort,
    Warn,
}

/// One forced Fourier mode `a cos(k·x + φ) cos(ω t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingMode {
    pub wavevector: [i64; 3],
    pub amplitude: [f64; 3],
    #[serde(default)]
    pub phase: f64,
    /// Angular frequency of the time modulation; 0 for steady forcing.
    #[serde(default)]
    pub frequency: f64,
}

/// Body force. Every evaluation is projected and dealiased.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    #[default]
    None,
    Modes { modes: Vec<ForcingMode> },
    /// FLD1 fields at increasing times, linearly interpolated and held
    /// constant outside the covered interval.
    Files { paths: Vec<PathBuf> },
}

/// Initial velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// `(sin kx cos ky, −cos kx sin ky)` in 2D, and
    /// `(sin kx cos ky cos kz, −cos kx sin ky cos kz, 0)` in 3D.
    TaylorGreen {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one_i")]
        wavenumber: i64,
    },
    Random(RandomFieldSpec),
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

fn one_i() -> i64 {
    1
}

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    pub dim: usize,
    pub n: usize,
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Steps between emitted snapshots.
    pub snapshot_stride: usize,
    #[serde(default)]
    pub dealias: Dealias,
    #[serde(default)]
    pub integrating_factor: bool,
    #[serde(default)]
    pub cfl: CflPolicy,
    #[serde(default)]
    pub forcing: ForcingSpec,
    pub init: InitSpec,
}

impl SolverParams {
    pub fn validate(&self) -> Result<Grid> {
        let grid = Grid::new(self.dim, self.n)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("nu = {} must be nonnegative", self.nu)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_end = {} must be nonnegative", self.t_end)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidArgument("snapshot stride must be positive".into()));
        }
        Ok(grid)
    }

    /// Number of time steps to reach `t_end`.
    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as u64
    }
}

/// Time-dependent forcing resolved on a grid.
enum Forcing {
    None,
    Modes(Vec<ForcingMode>),
    Samples { times: Vec<f64>, spectra: Vec<Spectrum> },
}

impl Forcing {
    fn new(spec: &ForcingSpec, grid: &Grid, mask: &Mask) -> Result<Forcing> {
        Ok(match spec {
            ForcingSpec::None => Forcing::None,
            ForcingSpec::Modes { modes } => {
                for m in modes {
                    if m.wavevector[grid.dim()..].iter().any(|&k| k != 0) || !m.amplitude.iter().all(|a| a.is_finite()) {
                        return Err(Error::InvalidArgument(format!("invalid forcing mode {m:?}")));
                    }
                }
                Forcing::Modes(modes.clone())
            }
            ForcingSpec::Files { paths } => {
                if paths.is_empty() {
                    return Err(Error::InvalidArgument("file forcing needs at least one field".into()));
                }
                let mut times = Vec::new();
                let mut spectra = Vec::new();
                for p in paths {
                    let (_, f) = crate::fld::read(p)?;
                    if f.grid() != grid || f.ncomp() != grid.dim() {
                        return Err(Error::GridMismatch(format!("{} does not match the solver grid", p.display())));
                    }
                    if times.last().is_some_and(|t| f.time() <= *t) {
                        return Err(Error::InvalidArgument(format!("{}: forcing times must increase", p.display())));
                    }
                    times.push(f.time());
                    spectra.push(mask.clean(&f.spectrum()));
                }
                Forcing::Samples { times, spectra }
            }
        })
    }

    /// Projected, dealiased forcing spectrum at time `t`, or `None` if zero.
    fn at(&self, t: f64, grid: &Grid, mask: &Mask) -> Option<Spectrum> {
        match self {
            Forcing::None => None,
            Forcing::Modes(modes) => {
                let d = grid.dim();
                let f = Field::from_fn(*grid, d, |x, c| {
                    modes
                        .iter()
                        .map(|m| {
                            let kx: f64 = (0..d).map(|a| m.wavevector[a] as f64 * x[a]).sum();
                            m.amplitude[c] * (kx + m.phase).cos() * (m.frequency * t).cos()
                        })
                        .sum()
                });
                Some(mask.clean(&f.spectrum()))
            }
            Forcing::Samples { times, spectra } => {
                let j = times.partition_point(|&s| s <= t);
                let s = if j == 0 {
                    spectra[0].clone()
                } else if j == times.len() {
                    spectra[j - 1].clone()
                } else {
                    let w = (t - times[j - 1]) / (times[j] - times[j - 1]);
                    combine(&spectra[j - 1], 1.0 - w, &spectra[j], w)
                };
                Some(s)
            }
        }
    }
}

fn combine(a: &Spectrum, wa: f64, b: &Spectrum, wb: f64) -> Spectrum {
    let modes = a
        .components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * wa + q * wb).collect())
        .collect();
    Spectrum::from_modes(*a.grid(), a.time(), modes).expect("same shape")
}

/// Dealiasing mask and projection.
struct Mask {
    grid: Grid,
    keep: Vec<bool>,
}

impl Mask {
    fn new(grid: &Grid, dealias: Dealias) -> Mask {
        let cutoff = grid.two_thirds_cutoff();
        let half = (grid.n() / 2) as i64;
        let keep = (0..grid.len())
            .map(|i| {
                let k = grid.wavevector(i);
                let (ok, nyq) = (k.iter().all(|v| v.abs() <= cutoff), k.iter().any(|v| *v == -half));
                match dealias {
                    Dealias::TwoThirds => ok,
                    Dealias::Padded => !nyq,
                }
            })
            .collect();
        Mask { grid: *grid, keep }
    }

    fn apply(&self, modes: &mut [Vec<Complex64>]) {
        for c in modes.iter_mut() {
            for (v, k) in c.iter_mut().zip(&self.keep) {
                if !k {
                    *v = Complex64::default();
                }
            }
        }
    }

    /// Removes the mean, dealiases and projects.
    fn clean(&self, s: &Spectrum) -> Spectrum {
        let mut modes = s.components().to_vec();
        self.apply(&mut modes);
        for c in modes.iter_mut() {
            c[0] = Complex64::default();
        }
        project_modes(&self.grid, &mut modes);
        Spectrum::from_modes(self.grid, s.time(), modes).expect("same shape")
    }
}

/// Augmented RK4 state: velocity spectrum plus the work and dissipation
/// integrals.
#[derive(Clone)]
struct State {
    modes: Vec<Vec<Complex64>>,
    work: f64,
    dissipation: f64,
}

/// Time derivative of the augmented state.
struct Rate {
    modes: Vec<Vec<Complex64>>,
    power: f64,
    dissipation_rate: f64,
    max_speed: f64,
}

/// Stepping engine for one trajectory.
pub struct Solver {
    params: SolverParams,
    grid: Grid,
    mask: Mask,
    forcing: Forcing,
    /// `|k|²` per mode.
    k2: Vec<f64>,
    padded: Option<Grid>,
    state: State,
    /// Time of step 0.
    origin: f64,
    step: u64,
    warnings: Vec<String>,
}

impl Solver {
    /// Solver at `t = 0` with the configured initial condition.
    pub fn new(params: &SolverParams) -> Result<Solver> {
        let grid = params.validate()?;
        let u0 = initial_field(params, &grid)?;
        Solver::from_field(params, &u0, 0, 0.0, 0.0)
    }

    /// Solver resumed from `u` after `step` steps with the given integrals;
    /// `u.time()` is the time after those steps.
    pub fn from_field(params: &SolverParams, u: &Field, step: u64, work: f64, dissipation: f64) -> Result<Solver> {
        let grid = params.validate()?;
        if *u.grid() != grid || u.ncomp() != grid.dim() {
            return Err(Error::GridMismatch("initial field does not match the solver grid".into()));
        }
        let mask = Mask::new(&grid, params.dealias);
        let forcing = Forcing::new(&params.forcing, &grid, &mask)?;
        let modes = mask.clean(&u.spectrum()).components().to_vec();
        let k2 = (0..grid.len())
            .map(|i| {
                let k = grid.wavevector(i);
                (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64
            })
            .collect();
        let padded = match params.dealias {
            Dealias::Padded => Some(grid.refined(3, 2)),
            Dealias::TwoThirds => None,
        };
        Ok(Solver {
            params: params.clone(),
            grid,
            mask,
            forcing,
            k2,
            padded,
            state: State {
                modes,
                work,
                dissipation,
            },
            origin: u.time() - step as f64 * params.dt,
            step,
            warnings: Vec::new(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.origin + self.step as f64 * self.params.dt
    }

    /// `∫₀ᵗ ⟨f, u⟩` integrated with the RK4 stages.
    pub fn work(&self) -> f64 {
        self.state.work
    }

    /// `ν ∫₀ᵗ ‖∇u‖²` integrated with the RK4 stages.
    pub fn dissipation(&self) -> f64 {
        self.state.dissipation
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum::from_modes(self.grid, self.time(), self.state.modes.clone()).expect("state shape")
    }

    pub fn field(&self) -> Field {
        self.spectrum().to_field()
    }

    /// Projected, dealiased forcing at the current time (zero if unforced).
    pub fn forcing_field(&self) -> Field {
        match self.forcing.at(self.time(), &self.grid, &self.mask) {
            Some(s) => s.to_field().with_time(self.time()),
            None => Field::zeros(self.grid, self.grid.dim()).with_time(self.time()),
        }
    }

    /// `½‖u‖²`.
    pub fn energy(&self) -> f64 {
        let s = self.spectrum();
        0.5 * spectral_inner(&s, &s)
    }

    /// Nonlinear term `P[−ik_j (u_j u)^]` for the velocity spectrum `modes`,
    /// plus `max |u|`.
    fn nonlinear(&self, modes: &[Vec<Complex64>]) -> (Vec<Vec<Complex64>>, f64) {
        let d = self.grid.dim();
        let work_grid = self.padded.unwrap_or(self.grid);
        let spec = Spectrum::from_modes(self.grid, 0.0, modes.to_vec()).expect("shape");
        let spec = if self.padded.is_some() { spec.resampled(&work_grid) } else { spec };
        let refs: Vec<&[Complex64]> = spec.components().iter().map(|c| c.as_slice()).collect();
        let u = inverse_many(&work_grid, &refs);
        let max_speed = crate::sum::par_max(work_grid.len(), |i| {
            (0..d).map(|c| u[c][i] * u[c][i]).sum::<f64>().sqrt()
        });
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
        let prods: Vec<Vec<f64>> = pairs
            .iter()
            .map(|&(a, b)| u[a].iter().zip(&u[b]).map(|(x, y)| x * y).collect())
            .collect();
        let prefs: Vec<&[f64]> = prods.iter().map(|v| v.as_slice()).collect();
        let w = forward_many(&work_grid, &prefs);
        let w: Vec<Vec<Complex64>> = if self.padded.is_some() {
            w.iter().map(|c| truncate_to(&work_grid, c, &self.grid)).collect()
        } else {
            w
        };
        let index = |a: usize, b: usize| pairs.iter().position(|&p| p == (a.min(b), a.max(b))).unwrap();
        let mut out = vec![vec![Complex64::default(); self.grid.len()]; d];
        for i in 0..self.grid.len() {
            let k = self.grid.derivative_wavevector(i);
            for (c, o) in out.iter_mut().enumerate() {
                let mut acc = Complex64::default();
                for (j, kj) in k.iter().take(d).enumerate() {
                    acc += w[index(c, j)][i] * *kj;
                }
                o[i] = Complex64::new(acc.im, -acc.re);
            }
        }
        self.mask.apply(&mut out);
        project_modes(&self.grid, &mut out);
        (out, max_speed)
    }

    /// Full rate at time `t`. With the integrating factor the viscous term
    /// is left out of the velocity rate.
    fn rate(&self, modes: &[Vec<Complex64>], t: f64) -> Rate {
        let (mut rate, max_speed) = self.nonlinear(modes);
        let f = self.forcing.at(t, &self.grid, &self.mask);
        let spec = Spectrum::from_modes(self.grid, t, modes.to_vec()).expect("shape");
        let power = match &f {
            Some(fs) => {
                for (r, c) in rate.iter_mut().zip(fs.components()) {
                    for (a, b) in r.iter_mut().zip(c) {
                        *a += b;
                    }
                }
                spectral_inner(fs, &spec)
            }
            None => 0.0,
        };
        let nu = self.params.nu;
        if !self.params.integrating_factor {
            for (r, m) in rate.iter_mut().zip(modes) {
                for i in 0..self.grid.len() {
                    r[i] -= m[i] * (nu * self.k2[i]);
                }
            }
        }
        Rate {
            modes: rate,
            power,
            dissipation_rate: nu * gradient_inner(&spec, &spec),
            max_speed,
        }
    }

    /// `E(h)`: the viscous propagator over `h`, identity without the
    /// integrating factor.
    fn propagate(&self, modes: &[Vec<Complex64>], h: f64) -> Vec<Vec<Complex64>> {
        if !self.params.integrating_factor || self.params.nu == 0.0 {
            return modes.to_vec();
        }
        let nu = self.params.nu;
        modes
            .iter()
            .map(|c| c.iter().zip(&self.k2).map(|(v, k2)| v * (-nu * k2 * h).exp()).collect())
            .collect()
    }

    /// Replaces the state by the cleaned transform of its synthesized field
    /// and returns that field. Snapshots are taken this way so that a run
    /// resumed from a stored field continues bit for bit.
    pub fn synchronize(&mut self) -> Field {
        let u = self.field();
        self.state.modes = self.mask.clean(&u.spectrum()).components().to_vec();
        u
    }

    /// Advances one step.
    pub fn step(&mut self) -> Result<()> {
        let h = self.params.dt;
        let t = self.time();
        let s = &self.state;
        let axpy = |base: &[Vec<Complex64>], r: &[Vec<Complex64>], a: f64| -> Vec<Vec<Complex64>> {
            base.iter()
                .zip(r)
                .map(|(b, r)| b.iter().zip(r).map(|(x, y)| x + y * a).collect())
                .collect()
        };

        let k1 = self.rate(&s.modes, t);
        let limit = 0.5 * self.grid.spacing() / k1.max_speed.max(f64::MIN_POSITIVE);
        if h > limit {
            match self.params.cfl {
                CflPolicy::Abort => {
                    return Err(Error::Cfl {
                        step: self.step,
                        dt: h,
                        limit,
                    })
                }
                CflPolicy::Warn => self
                    .warnings
                    .push(format!("step {}: dt = {h} exceeds the CFL limit {limit:.3e}", self.step)),
            }
        }
        let a = self.propagate(&axpy(&s.modes, &k1.modes, 0.5 * h), 0.5 * h);
        let k2 = self.rate(&a, t + 0.5 * h);
        let b = axpy(&self.propagate(&s.modes, 0.5 * h), &k2.modes, 0.5 * h);
        let k3 = self.rate(&b, t + 0.5 * h);
        let c = axpy(&self.propagate(&s.modes, h), &self.propagate(&k3.modes, 0.5 * h), h);
        let k4 = self.rate(&c, t + h);

        let e1 = self.propagate(&k1.modes, h);
        let e23: Vec<Vec<Complex64>> = self.propagate(
            &k2.modes
                .iter()
                .zip(&k3.modes)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
                .collect::<Vec<_>>(),
            0.5 * h,
        );
        let base = self.propagate(&s.modes, h);
        let mut next = base;
        for c_ in 0..next.len() {
            for i in 0..self.grid.len() {
                next[c_][i] += (e1[c_][i] + e23[c_][i] * 2.0 + k4.modes[c_][i]) * (h / 6.0);
            }
        }
        let sixth = |a: f64, b: f64, c: f64, d: f64| h / 6.0 * (a + 2.0 * b + 2.0 * c + d);
        let work = s.work + sixth(k1.power, k2.power, k3.power, k4.power);
        let dissipation = s.dissipation + sixth(k1.dissipation_rate, k2.dissipation_rate, k3.dissipation_rate, k4.dissipation_rate);

        if next.iter().any(|c| c.iter().any(|v| !v.re.is_finite() || !v.im.is_finite())) || !work.is_finite() || !dissipation.is_finite() {
            return Err(Error::Blowup { step: self.step + 1 });
        }
        self.state = State {
            modes: next,
            work,
            dissipation,
        };
        self.step += 1;
        Ok(())
    }
}

/// Modes of `fine` with `|k_a| < n/2` on `coarse`; the coarse Nyquist
/// modes are dropped.
fn truncate_to(fine: &Grid, values: &[Complex64], coarse: &Grid) -> Vec<Complex64> {
    let d = coarse.dim();
    let half = (coarse.n() / 2) as i64;
    (0..coarse.len())
        .map(|i| {
            let k = coarse.wavevector(i);
            if k.iter().take(d).any(|v| *v == -half) {
                return Complex64::default();
            }
            let mut idx = [0usize; 3];
            for a in 0..d {
                idx[a] = fine.index_of_wavenumber(k[a]);
            }
            values[fine.flat_index(idx)]
        })
        .collect()
}

fn initial_field(params: &SolverParams, grid: &Grid) -> Result<Field> {
    match &params.init {
        InitSpec::TaylorGreen { amplitude, wavenumber } => {
            let (a, k) = (*amplitude, *wavenumber as f64);
            if 3 * wavenumber.unsigned_abs() as usize > grid.n() {
                return Err(Error::InvalidArgument(format!(
                    "Taylor–Green wavenumber {wavenumber} is not resolved at n = {}",
                    grid.n()
                )));
            }
            Ok(match grid.dim() {
                2 => Field::from_fn(*grid, 2, |x, c| {
                    a * if c == 0 {
                        (k * x[0]).sin() * (k * x[1]).cos()
                    } else {
                        -(k * x[0]).cos() * (k * x[1]).sin()
                    }
                }),
                _ => Field::from_fn(*grid, 3, |x, c| {
                    let z = (k * x[2]).cos();
                    a * match c {
                        0 => (k * x[0]).sin() * (k * x[1]).cos() * z,
                        1 => -(k * x[0]).cos() * (k * x[1]).sin() * z,
                        _ => 0.0,
                    }
                }),
            })
        }
        InitSpec::Random(spec) => random_solenoidal(grid, spec),
        InitSpec::File { path } => {
            let (_, f) = crate::fld::read(path)?;
            if f.grid() != grid || f.ncomp() != grid.dim() {
                return Err(Error::GridMismatch(format!("{} does not match the solver grid", path.display())));
            }
            Ok(f.with_time(0.0))
        }
    }
}

/// One RK4 step from `state`, taken at time `state.time()`.
pub fn step(state: &Field, params: &SolverParams) -> Result<Field> {
    let mut s = Solver::from_field(params, state, 0, 0.0, 0.0)?;
    s.step()?;
    Ok(s.field())
}

/// RK4-integrated bookkeeping at one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccumulatorSample {
    pub t: f64,
    pub energy: f64,
    pub work: f64,
    pub dissipation: f64,
}

/// A completed in-memory run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<Field>,
    /// Forcing at the snapshot times; empty when unforced.
    pub forces: Vec<Field>,
    /// Series assembled from the snapshots with the balance quadrature.
    pub series: EnergySeries,
    pub accumulators: Vec<AccumulatorSample>,
    pub warnings: Vec<String>,
}

/// Runs from `t = 0` to `t_end`, calling `emit` with the solver and the
/// snapshot field at every snapshot.
pub fn run_with<F>(params: &SolverParams, mut emit: F) -> Result<Solver>
where
    F: FnMut(&Solver, &Field) -> Result<()>,
{
    let mut s = Solver::new(params)?;
    let u = s.synchronize();
    emit(&s, &u)?;
    advance(&mut s, params, &mut emit)?;
    Ok(s)
}

fn advance<F>(s: &mut Solver, params: &SolverParams, emit: &mut F) -> Result<()>
where
    F: FnMut(&Solver, &Field) -> Result<()>,
{
    let total = params.steps();
    while s.step_index() < total {
        s.step()?;
        if s.step_index() % params.snapshot_stride as u64 == 0 || s.step_index() == total {
            let u = s.synchronize();
            emit(s, &u)?;
        }
    }
    Ok(())
}

/// Runs and keeps every snapshot in memory.
pub fn run(params: &SolverParams) -> Result<RunOutput> {
    let forced = params.forcing != ForcingSpec::None;
    let mut snapshots = Vec::new();
    let mut forces = Vec::new();
    let mut accumulators = Vec::new();
    let s = run_with(params, |s, u| {
        snapshots.push(u.clone());
        if forced {
            forces.push(s.forcing_field());
        }
        accumulators.push(AccumulatorSample {
            t: s.time(),
            energy: s.energy(),
            work: s.work(),
            dissipation: s.dissipation(),
        });
        Ok(())
    })?;
    let series = series_from_snapshots(&snapshots, &forces, params.nu)?;
    Ok(RunOutput {
        snapshots,
        forces,
        series,
        accumulators,
        warnings: s.warnings().to_vec(),
    })
}

/// Energy series of emitted snapshots; equals
/// [`crate::balance::epsilon_series`] whenever that is defined, and falls
/// back to the same quadrature on shorter or uneven series.
fn series_from_snapshots(snapshots: &[Field], forces: &[Field], nu: f64) -> Result<EnergySeries> {
    if snapshots.len() >= 3 {
        if let Ok(s) = crate::balance::epsilon_series(snapshots, forces, nu) {
            return Ok(s);
        }
    }
    let times: Vec<f64> = snapshots.iter().map(|s| s.time()).collect();
    let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
    let mut energy = Vec::new();
    let mut power = Vec::new();
    let mut grad = Vec::new();
    for (m, u) in snapshots.iter().enumerate() {
        let s = u.spectrum();
        energy.push(0.5 * spectral_inner(&s, &s));
        grad.push(gradient_inner(&s, &s));
        power.push(forces.get(m).map_or(0.0, |f| spectral_inner(&f.spectrum(), &s)));
    }
    Ok(assemble_series(times, energy, &power, &grad, nu, dt))
}

/// JSON manifest written next to the snapshots of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub code_version: String,
    pub params: SolverParams,
    pub snapshots: Vec<SnapshotEntry>,
    pub complete: bool,
    pub warnings: Vec<String>,
}

/// One snapshot file of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub step: u64,
    pub t: f64,
    pub velocity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<String>,
    pub energy: f64,
    pub work: f64,
    pub dissipation: f64,
}

pub const MANIFEST: &str = "manifest.json";
pub const ENERGY_CSV: &str = "energy.csv";
pub const MANIFEST_FORMAT: &str = "kflux-run/1";

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m)?;
    write_file(&dir.join(MANIFEST), text.as_bytes())
}

/// Reads the manifest of a run directory.
pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        reason: e.to_string(),
    })
}

/// How [`run_to_dir`] treats an existing directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirMode {
    /// Refuse if the directory holds a manifest.
    Fresh,
    /// Remove previous outputs first.
    Overwrite,
    /// Continue from the last snapshot of an incomplete run.
    Resume,
}

/// Runs into `dir`: FLD1 snapshots `u_<step>.fld` (and `f_<step>.fld` when
/// forced), `manifest.json`, and `energy.csv`. The manifest is rewritten
/// after every snapshot so an interrupted run can be resumed.
pub fn run_to_dir(params: &SolverParams, dir: &Path, mode: DirMode) -> Result<RunManifest> {
    params.validate()?;
    let existing = dir.join(MANIFEST).exists();
    let mut manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        params: params.clone(),
        snapshots: Vec::new(),
        complete: false,
        warnings: Vec::new(),
    };
    let mut solver = None;
    match (existing, mode) {
        (true, DirMode::Fresh) => {
            return Err(Error::InvalidArgument(format!(
                "{} already holds a run; use --force to overwrite or --resume to continue",
                dir.display()
            )))
        }
        (true, DirMode::Overwrite) => {
            let old = read_manifest(dir).ok();
            if let Some(old) = old {
                for e in &old.snapshots {
                    let _ = fs::remove_file(dir.join(&e.velocity));
                    if let Some(f) = &e.forcing {
                        let _ = fs::remove_file(dir.join(f));
                    }
                }
            }
            let _ = fs::remove_file(dir.join(ENERGY_CSV));
        }
        (true, DirMode::Resume) => {
            let old = read_manifest(dir)?;
            if old.params != *params {
                return Err(Error::InvalidArgument(
                    "cannot resume: configuration differs from the recorded run".into(),
                ));
            }
            if old.complete {
                return Ok(old);
            }
            if let Some(last) = old.snapshots.last() {
                let (_, u) = crate::fld::read(&dir.join(&last.velocity))?;
                solver = Some(Solver::from_field(params, &u, last.step, last.work, last.dissipation)?);
                manifest.snapshots = old.snapshots.clone();
                manifest.warnings = old.warnings.clone();
            }
        }
        (false, _) => {}
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let forced = params.forcing != ForcingSpec::None;
    let mut emit = |s: &Solver, u: &Field| -> Result<()> {
        let name = format!("u_{:08}.fld", s.step_index());
        crate::fld::write(&dir.join(&name), u, params.nu)?;
        let forcing = if forced {
            let fname = format!("f_{:08}.fld", s.step_index());
            crate::fld::write(&dir.join(&fname), &s.forcing_field(), params.nu)?;
            Some(fname)
        } else {
            None
        };
        manifest.snapshots.push(SnapshotEntry {
            step: s.step_index(),
            t: s.time(),
            velocity: name,
            forcing,
            energy: s.energy(),
            work: s.work(),
            dissipation: s.dissipation(),
        });
        manifest.warnings = s.warnings().to_vec();
        write_manifest(dir, &manifest)
    };
    let mut s = match solver {
        Some(s) => s,
        None => {
            let mut s = Solver::new(params)?;
            let u = s.synchronize();
            emit(&s, &u)?;
            s
        }
    };
    advance(&mut s, params, &mut emit)?;
    drop(emit);
    manifest.complete = true;
    manifest.warnings = s.warnings().to_vec();
    write_manifest(dir, &manifest)?;

    let (snaps, forces) = load_run(dir, &manifest)?;
    let series = series_from_snapshots(&snaps, &forces, params.nu)?;
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    write_file(&dir.join(ENERGY_CSV), &buf)?;
    Ok(manifest)
}

/// Snapshots and forcing fields listed in a manifest.
pub fn load_run(dir: &Path, manifest: &RunManifest) -> Result<(Vec<Field>, Vec<Field>)> {
    let mut missing = Vec::new();
    for e in &manifest.snapshots {
        for name in std::iter::once(&e.velocity).chain(e.forcing.iter()) {
            if !dir.join(name).exists() {
                missing.push(name.clone());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: missing snapshot files: {}",
            dir.display(),
            missing.join(", ")
        )));
    }
    let mut snaps = Vec::new();
    let mut forces = Vec::new();
    for e in &manifest.snapshots {
        snaps.push(crate::fld::read(&dir.join(&e.velocity))?.1.with_time(e.t));
        if let Some(f) = &e.forcing {
            forces.push(crate::fld::read(&dir.join(f))?.1.with_time(e.t));
        }
    }
    Ok((snaps, forces))
}

/// `e^{−2νk²t}` times the Taylor–Green field of wavenumber `k` in 2D.
pub fn taylor_green_exact(grid: &Grid, amplitude: f64, wavenumber: i64, nu: f64, t: f64) -> Field {
    let k = wavenumber as f64;
    let decay = amplitude * (-2.0 * nu * k * k * t).exp();
    Field::from_fn(*grid, 2, |x, c| {
        decay
            * if c == 0 {
                (k * x[0]).sin() * (k * x[1]).cos()
            } else {
                -(k * x[0]).cos() * (k * x[1]).sin()
            }
    })
    .with_time(t)
}

/// Time step `courant · h / max|u|` for a field.
pub fn cfl_time_step(u: &Field, courant: f64) -> f64 {
    let m = crate::field::max_norm(u).max(1e-300);
    courant * u.grid().spacing() / m
}
