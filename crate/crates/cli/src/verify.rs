//! Invariant suites behind `kflux verify`.

use std::str::FromStr;

use anyhow::{bail, Result};
use kflux::field::{random_solenoidal, RandomFieldSpec};
use kflux::flux::{combined_l_average, decomposition_identity};
use kflux::kernel::{kernel_moment, special_kernel_gradient_identity, sphere_tensor_average, Moment, MomentKind};
use kflux::sphere::{random_directions, resolving_order, sphere_rule};
use kflux::{Field, Grid, KernelSpec, TensorKind};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const VERIFY_FORMAT: &str = "kflux-verify/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Tensor,
    Kernel,
    Identity,
    All,
}

impl FromStr for Suite {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tensor" => Suite::Tensor,
            "kernel" => Suite::Kernel,
            "identity" => Suite::Identity,
            "all" => Suite::All,
            other => bail!("unknown suite {other:?} (tensor, kernel, identity, all)"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub format: String,
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Test hook: a multiplicative perturbation of `C_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub perturb_ct: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 2024,
            perturb_ct: None,
        }
    }
}

struct Recorder {
    suite: Suite,
    checks: Vec<Check>,
}

impl Recorder {
    fn check(&mut self, name: impl Into<String>, measured: f64, tolerance: f64) {
        self.checks.push(Check {
            suite: self.suite,
            name: name.into(),
            measured,
            tolerance,
            pass: measured <= tolerance,
        });
    }
}

fn transverse_constant(d: i64, opts: &VerifyOptions) -> Ratio<i64> {
    let exact = Ratio::new(d + 2, 4 * (d - 1));
    match opts.perturb_ct {
        Some(f) => exact * Ratio::approximate_float(f).unwrap_or(Ratio::from_integer(1)),
        None => exact,
    }
}

fn tensor_suite(r: &mut Recorder, opts: &VerifyOptions) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for d in [2usize, 3] {
        let mut additivity: f64 = 0.0;
        let mut idempotence: f64 = 0.0;
        for y in random_directions(d, 10_000, opts.seed + d as u64) {
            let mut v = [0.0; 3];
            for x in v.iter_mut().take(d) {
                *x = rng.random_range(-1.0..1.0);
            }
            let i = TensorKind::I.norm_sqr(&y, &v);
            let split = TensorKind::L.norm_sqr(&y, &v) + TensorKind::T.norm_sqr(&y, &v);
            additivity = additivity.max((i - split).abs());
            for kind in [TensorKind::L, TensorKind::T] {
                let once = kind.apply(&y, &v);
                let twice = kind.apply(&y, &once);
                for a in 0..3 {
                    idempotence = idempotence.max((once[a] - twice[a]).abs());
                }
            }
            let l = TensorKind::L.apply(&y, &v);
            let t = TensorKind::T.apply(&y, &v);
            idempotence = idempotence.max((l[0] * t[0] + l[1] * t[1] + l[2] * t[2]).abs());
        }
        r.check(format!("d{d}: |T_I v|² = |T_L v|² + |T_T v|² on 10⁴ samples"), additivity, 1e-14);
        r.check(format!("d{d}: T_L, T_T idempotent and orthogonal"), idempotence, 1e-14);

        let di = d as i64;
        let ct = transverse_constant(di, opts);
        let sum = Ratio::new(3, di + 2) + Ratio::new(1, 4) / ct;
        let gap = sum - Ratio::from_integer(1);
        r.check(
            format!("d{d}: 3/(d+2) + 1/(4 C_T) = 1 exactly"),
            (*gap.numer() as f64 / *gap.denom() as f64).abs(),
            0.0,
        );
    }
}

fn kernel_suite(r: &mut Recorder) -> Result<()> {
    for d in [2usize, 3] {
        let df = d as f64;
        let rule = sphere_rule(d, 8)?;
        let ell = 0.5;
        let Moment::Scalar(m) = kernel_moment(&KernelSpec::special(ell)?, d, MomentKind::Mass, &rule)? else {
            bail!("special kernel mass is scalar")
        };
        r.check(format!("d{d}: mass of the special kernel = −2/(d+2)"), (m + 2.0 / (df + 2.0)).abs(), 1e-8);

        let avg = sphere_tensor_average(TensorKind::L, &rule);
        let mut gap: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let e = if i == j { 1.0 / df } else { 0.0 };
                gap = gap.max((avg[i][j] - e).abs());
            }
        }
        r.check(format!("d{d}: sphere average of T_L = δ/d"), gap, 1e-12);

        let Moment::Scalar(unit) = kernel_moment(&KernelSpec::standard(ell, 0.3)?, d, MomentKind::Mass, &rule)? else {
            bail!("mollifier mass is scalar")
        };
        r.check(format!("d{d}: mollifier mass = 1"), (unit - 1.0).abs(), 1e-8);

        let g = Grid::new(d, 16)?;
        let value = [0.7, -1.3, 0.4];
        let u = Field::constant(g, &value[..d]);
        let v = combined_l_average(&u, ell)?;
        let mut gap: f64 = 0.0;
        for a in 0..d {
            for x in v.component(a) {
                gap = gap.max((x - 3.0 / (df + 2.0) * value[a]).abs());
            }
        }
        r.check(format!("d{d}: combined-L kernel maps c to 3c/(d+2)"), gap, 1e-8);

        let k = KernelSpec::special(ell)?;
        let mut gap: f64 = 0.0;
        for y in random_directions(d, 64, 7) {
            for rho in [0.1, 0.5, 0.9] {
                let p = [rho * ell * y[0], rho * ell * y[1], rho * ell * y[2]];
                let scale = 1.0 / (kflux::kernel::ball_measure(d, ell) * rho * ell);
                gap = gap.max(special_kernel_gradient_identity(&k, d, &p)? / scale);
            }
        }
        r.check(format!("d{d}: special kernel gradient identity (relative)"), gap, 1e-12);
    }
    Ok(())
}

fn identity_suite(r: &mut Recorder, opts: &VerifyOptions) -> Result<()> {
    for (d, n, k_max) in [(2usize, 32usize, 10.0), (3, 16, 5.0)] {
        let g = Grid::new(d, n)?;
        let mut worst: f64 = 0.0;
        for j in 0..4u64 {
            let spec = RandomFieldSpec {
                seed: opts.seed + 31 * j,
                slope: -5.0 / 3.0,
                k_min: 1.0,
                k_max,
                energy: 1.0,
            };
            let u = random_solenoidal(&g, &spec)?;
            let ell = [0.2, 0.5, 1.0, 1.5][j as usize];
            let order = if d == 2 { resolving_order(k_max, ell) } else { 10 };
            let residual = match opts.perturb_ct {
                None => decomposition_identity(&u, ell, &sphere_rule(d, order)?)?.residual,
                // Recombine the raw moments with the perturbed transverse constant.
                Some(f) => {
                    let m = kflux::flux::increment_moments(&u, ell, &sphere_rule(d, order)?)?;
                    let df = d as f64;
                    let c_t = df * kflux::tensor::transverse_constant(d) * f;
                    let lhs = m.i;
                    let rhs = m.l + TensorKind::T.identity_coefficient(d) * c_t * m.t;
                    (lhs - rhs).abs() / m.scale
                }
            };
            worst = worst.max(residual);
        }
        r.check(format!("d{d}: (4/d)S_I = (12/(d(d+2)))S_L + (4(d−1)/(d(d+2)))S_T"), worst, 1e-12);
    }
    Ok(())
}

pub fn verify(suite: Suite, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let run = |s: Suite| s == suite || suite == Suite::All;
    if run(Suite::Tensor) {
        let mut r = Recorder {
            suite: Suite::Tensor,
            checks: Vec::new(),
        };
        tensor_suite(&mut r, opts);
        checks.extend(r.checks);
    }
    if run(Suite::Kernel) {
        let mut r = Recorder {
            suite: Suite::Kernel,
            checks: Vec::new(),
        };
        kernel_suite(&mut r)?;
        checks.extend(r.checks);
    }
    if run(Suite::Identity) {
        let mut r = Recorder {
            suite: Suite::Identity,
            checks: Vec::new(),
        };
        identity_suite(&mut r, opts)?;
        checks.extend(r.checks);
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerifyReport {
        format: VERIFY_FORMAT.into(),
        suite,
        seed: opts.seed,
        checks,
        pass,
    })
}
