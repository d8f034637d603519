//! Run configuration: nested TOML with unit-suffixed keys. Unknown keys are
//! errors and every error names the offending key path.

use std::fmt;
use std::path::{Path, PathBuf};

use kflux::field::RandomFieldSpec;
use kflux::solver::{CflPolicy, Dealias, ForcingMode, ForcingSpec, InitSpec, SolverParams};
use kflux::TensorKind;
use serde::{Deserialize, Serialize};

/// Largest 3D grid accepted unless `solver.max_n_3d` raises it.
pub const DEFAULT_MAX_N_3D: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config key {}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn fail<T>(path: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        path: path.into(),
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub solver: SolverSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub forcing: ForcingSection,
    #[serde(default)]
    pub analysis: Option<AnalysisSection>,
    #[serde(default)]
    pub balance: Option<BalanceSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dim: usize,
    pub n: usize,
    /// Kinematic viscosity.
    pub nu: f64,
    pub dt_seconds: f64,
    pub t_end_seconds: f64,
    pub snapshot_every_steps: usize,
    #[serde(default)]
    pub dealias: Dealias,
    #[serde(default)]
    pub integrating_factor: bool,
    #[serde(default)]
    pub cfl: CflPolicy,
    #[serde(default = "default_max_n_3d")]
    pub max_n_3d: usize,
}

fn default_max_n_3d() -> usize {
    DEFAULT_MAX_N_3D
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSection {
    TaylorGreen {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one_i")]
        wavenumber: i64,
    },
    Random {
        seed: u64,
        /// Shell-spectrum slope `E(k) ∝ k^slope`.
        slope: f64,
        k_min: f64,
        k_max: f64,
        energy: f64,
    },
    File {
        path: PathBuf,
    },
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection::TaylorGreen {
            amplitude: 1.0,
            wavenumber: 1,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn one_i() -> i64 {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSection {
    #[default]
    None,
    Modes {
        modes: Vec<ModeSection>,
    },
    Files {
        paths: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub wavevector: Vec<i64>,
    pub amplitude: Vec<f64>,
    #[serde(default)]
    pub phase_radians: f64,
    #[serde(default)]
    pub frequency_radians_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub scales: Vec<f64>,
    #[serde(default = "all_projections")]
    pub projections: Vec<TensorKind>,
    /// Sphere rule order; chosen from the data when absent.
    #[serde(default)]
    pub sphere_order: Option<usize>,
}

fn all_projections() -> Vec<TensorKind> {
    TensorKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceSection {
    pub ell: f64,
    #[serde(default = "default_projection")]
    pub projection: TensorKind,
    /// Regularity exponent for the remainder audit; measured when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Also evaluate the pointwise balance (I and L only).
    #[serde(default)]
    pub local: bool,
    #[serde(default)]
    pub sphere_order: Option<usize>,
}

fn default_projection() -> TensorKind {
    TensorKind::I
}

/// `alpha = 0.8` or `alpha = "measured"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    Value(f64),
    Mode(AlphaMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Viscosities, strictly decreasing.
    pub nu: Vec<f64>,
    pub alpha: AlphaSetting,
    /// `L` in `ℓ_D = ν^L`.
    pub length_exponent: f64,
    /// Upper ends `ℓ_I` of the scale window, strictly decreasing.
    pub ell_i: Vec<f64>,
    /// `p` in the `L^p` time norm.
    #[serde(default = "one")]
    pub time_exponent: f64,
    /// Use the sup in time instead of `L^p`.
    #[serde(default)]
    pub uniform_in_time: bool,
    #[serde(default = "default_projection")]
    pub projection: TensorKind,
    #[serde(default)]
    pub sphere_order: Option<usize>,
    /// Keep each run directory under the sweep output.
    #[serde(default)]
    pub keep_runs: bool,
}

/// Parses and validates a configuration document.
pub fn parse(text: &str) -> Result<Config, ConfigError> {
    let de = toml::Deserializer::new(text);
    let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError {
            path: if path == "." { String::new() } else { path },
            message: inner.message().trim().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> anyhow::Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    Ok(parse(&text)?)
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        fail(path, format!("must be positive and finite, got {v}"))
    }
}

fn check_scale(path: &str, ell: f64) -> Result<(), ConfigError> {
    if ell > 0.0 && ell <= std::f64::consts::FRAC_PI_2 + 1e-12 {
        Ok(())
    } else {
        fail(path, format!("scale {ell} outside (0, π/2]"))
    }
}

fn strictly_decreasing(path: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.is_empty() {
        return fail(path, "must not be empty");
    }
    if v.windows(2).any(|w| w[1] >= w[0]) {
        return fail(path, "must be strictly decreasing");
    }
    Ok(())
}

/// Upper bound `1/(2(1−α))` on the length-scale exponent; infinite at α = 1.
pub fn length_exponent_bound(alpha: f64) -> f64 {
    if alpha >= 1.0 {
        f64::INFINITY
    } else {
        1.0 / (2.0 * (1.0 - alpha))
    }
}

/// Rejects `L ≥ 1/(2(1−α))`.
pub fn check_length_exponent(l: f64, alpha: f64) -> Result<(), ConfigError> {
    let bound = length_exponent_bound(alpha);
    if !(l > 0.0 && l < bound) {
        return fail(
            "sweep.length_exponent",
            format!("L = {l} must lie in (0, 1/(2(1−α))) = (0, {bound}) for α = {alpha}"),
        );
    }
    Ok(())
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.solver;
        if s.dim != 2 && s.dim != 3 {
            return fail("solver.dim", format!("must be 2 or 3, got {}", s.dim));
        }
        if s.n < 8 || s.n % 2 == 1 {
            return fail("solver.n", format!("must be even and at least 8, got {}", s.n));
        }
        if s.dim == 3 && s.n > s.max_n_3d {
            return fail(
                "solver.n",
                format!("3D grids are capped at n = {} (raise solver.max_n_3d to override)", s.max_n_3d),
            );
        }
        if !(s.nu >= 0.0 && s.nu.is_finite()) {
            return fail("solver.nu", format!("must be nonnegative, got {}", s.nu));
        }
        positive("solver.dt_seconds", s.dt_seconds)?;
        if !(s.t_end_seconds >= 0.0 && s.t_end_seconds.is_finite()) {
            return fail("solver.t_end_seconds", format!("must be nonnegative, got {}", s.t_end_seconds));
        }
        if s.snapshot_every_steps == 0 {
            return fail("solver.snapshot_every_steps", "must be positive");
        }
        match &self.init {
            InitSection::TaylorGreen { amplitude, wavenumber } => {
                if !amplitude.is_finite() {
                    return fail("init.amplitude", "must be finite");
                }
                if *wavenumber < 1 || *wavenumber as usize >= s.n / 2 {
                    return fail("init.wavenumber", format!("must lie in [1, n/2), got {wavenumber}"));
                }
            }
            InitSection::Random {
                k_min, k_max, energy, ..
            } => {
                if !(*k_min >= 0.0 && k_max >= k_min) {
                    return fail("init.k_max", "need 0 ≤ k_min ≤ k_max");
                }
                if !(*energy >= 0.0 && energy.is_finite()) {
                    return fail("init.energy", "must be nonnegative");
                }
            }
            InitSection::File { .. } => {}
        }
        if let ForcingSection::Modes { modes } = &self.forcing {
            for (i, m) in modes.iter().enumerate() {
                if m.wavevector.len() != s.dim {
                    return fail(&format!("forcing.modes[{i}].wavevector"), format!("needs {} entries", s.dim));
                }
                if m.amplitude.len() != s.dim {
                    return fail(&format!("forcing.modes[{i}].amplitude"), format!("needs {} entries", s.dim));
                }
            }
        }
        if let Some(a) = &self.analysis {
            if a.scales.is_empty() {
                return fail("analysis.scales", "must not be empty");
            }
            for (i, &ell) in a.scales.iter().enumerate() {
                check_scale(&format!("analysis.scales[{i}]"), ell)?;
            }
        }
        if let Some(b) = &self.balance {
            check_scale("balance.ell", b.ell)?;
            if let Some(alpha) = b.alpha {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return fail("balance.alpha", format!("must lie in (0, 1], got {alpha}"));
                }
            }
        }
        if let Some(w) = &self.sweep {
            strictly_decreasing("sweep.nu", &w.nu)?;
            if w.nu.iter().any(|v| !(*v > 0.0)) {
                return fail("sweep.nu", "viscosities must be positive");
            }
            strictly_decreasing("sweep.ell_i", &w.ell_i)?;
            for (i, &ell) in w.ell_i.iter().enumerate() {
                check_scale(&format!("sweep.ell_i[{i}]"), ell)?;
            }
            if !(w.time_exponent >= 1.0 && w.time_exponent.is_finite()) {
                return fail("sweep.time_exponent", "must be at least 1");
            }
            match w.alpha {
                AlphaSetting::Value(alpha) => {
                    if !(alpha > 0.0 && alpha <= 1.0) {
                        return fail("sweep.alpha", format!("must lie in (0, 1], got {alpha}"));
                    }
                    check_length_exponent(w.length_exponent, alpha)?;
                }
                AlphaSetting::Mode(AlphaMode::Measured) => {
                    if !(w.length_exponent > 0.0 && w.length_exponent.is_finite()) {
                        return fail("sweep.length_exponent", "must be positive");
                    }
                }
            }
        }
        Ok(())
    }

    /// Solver parameters, optionally overriding the random seed and viscosity.
    pub fn solver_params(&self, seed: Option<u64>, nu: Option<f64>) -> SolverParams {
        let s = &self.solver;
        let pad = |v: &[i64]| {
            let mut k = [0; 3];
            k[..v.len()].copy_from_slice(v);
            k
        };
        let padf = |v: &[f64]| {
            let mut a = [0.0; 3];
            a[..v.len()].copy_from_slice(v);
            a
        };
        let init = match &self.init {
            InitSection::TaylorGreen { amplitude, wavenumber } => InitSpec::TaylorGreen {
                amplitude: *amplitude,
                wavenumber: *wavenumber,
            },
            InitSection::Random {
                seed: s0,
                slope,
                k_min,
                k_max,
                energy,
            } => InitSpec::Random(RandomFieldSpec {
                seed: seed.unwrap_or(*s0),
                slope: *slope,
                k_min: *k_min,
                k_max: *k_max,
                energy: *energy,
            }),
            InitSection::File { path } => InitSpec::File { path: path.clone() },
        };
        let forcing = match &self.forcing {
            ForcingSection::None => ForcingSpec::None,
            ForcingSection::Modes { modes } => ForcingSpec::Modes {
                modes: modes
                    .iter()
                    .map(|m| ForcingMode {
                        wavevector: pad(&m.wavevector),
                        amplitude: padf(&m.amplitude),
                        phase: m.phase_radians,
                        frequency: m.frequency_radians_per_second,
                    })
                    .collect(),
            },
            ForcingSection::Files { paths } => ForcingSpec::Files { paths: paths.clone() },
        };
        SolverParams {
            dim: s.dim,
            n: s.n,
            nu: nu.unwrap_or(s.nu),
            dt: s.dt_seconds,
            t_end: s.t_end_seconds,
            snapshot_stride: s.snapshot_every_steps,
            dealias: s.dealias,
            integrating_factor: s.integrating_factor,
            cfl: s.cfl,
            forcing,
            init,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[solver]
dim = 2
n = 16
nu = 0.01
dt_seconds = 0.01
t_end_seconds = 0.1
snapshot_every_steps = 5
"#;

    #[test]
    fn minimal_config_defaults_to_taylor_green() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.init, InitSection::default());
        assert_eq!(c.solver_params(None, None).steps(), 10);
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let e = parse(&format!("{MINIMAL}viscosity = 3\n")).unwrap_err();
        assert!(e.to_string().contains("solver"), "{e}");
        let e = parse(&format!("{MINIMAL}[sweeep]\nnu = [1.0]\n")).unwrap_err();
        assert!(e.message.contains("sweeep"), "{e}");
    }

    #[test]
    fn type_errors_name_their_path() {
        let e = parse(&MINIMAL.replace("n = 16", "n = \"sixteen\"")).unwrap_err();
        assert_eq!(e.path, "solver.n");
    }

    #[test]
    fn nonpositive_dt_is_rejected() {
        let e = parse(&MINIMAL.replace("dt_seconds = 0.01", "dt_seconds = 0.0")).unwrap_err();
        assert!(e.to_string().contains("solver.dt"));
    }

    #[test]
    fn three_dimensional_grids_are_capped() {
        let text = MINIMAL.replace("dim = 2", "dim = 3").replace("n = 16", "n = 256");
        assert_eq!(parse(&text).unwrap_err().path, "solver.n");
        let text = text.replace("snapshot_every_steps = 5", "snapshot_every_steps = 5\nmax_n_3d = 256");
        assert!(parse(&text).is_ok());
    }

    #[test]
    fn length_exponent_bound_is_enforced() {
        let sweep = |l: f64, alpha: &str| {
            format!("{MINIMAL}[sweep]\nnu = [0.01, 0.005]\nalpha = {alpha}\nlength_exponent = {l}\nell_i = [0.5, 0.25]\n")
        };
        assert!(parse(&sweep(0.9, "0.5")).is_ok());
        let e = parse(&sweep(1.0, "0.5")).unwrap_err();
        assert_eq!(e.path, "sweep.length_exponent");
        assert!(parse(&sweep(1.5, "0.5")).is_err());
        assert!(parse(&sweep(1.5, "0.75")).is_ok());
        assert!(parse(&sweep(7.0, "\"measured\"")).is_ok());
        assert!(parse(&sweep(0.5, "\"guessed\"")).is_err());
    }

    #[test]
    fn sweep_lists_must_decrease() {
        let text = format!("{MINIMAL}[sweep]\nnu = [0.005, 0.01]\nalpha = 0.5\nlength_exponent = 0.5\nell_i = [0.5]\n");
        assert_eq!(parse(&text).unwrap_err().path, "sweep.nu");
    }
}
