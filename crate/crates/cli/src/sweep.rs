//! Viscosity sweep of the finite-scale law residual
//! `R(ν, ℓ, t) = ∫₀ᵗ S_•(r, ℓ)/ℓ dr + ε_ν(t)`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use kflux::flux::structure_functions;
use kflux::quadrature::{cumulative, integrate, uniform_spacing};
use kflux::solver::{run, run_to_dir, DirMode, RunOutput};
use kflux::{Grid, TensorKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands::{band_limit, fit_radii, rule_for};
use crate::config::{check_length_exponent, AlphaMode, AlphaSetting, Config, SweepSection};

pub const SWEEP_FORMAT: &str = "kflux-sweep/1";

/// Direction of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Decreasing,
    NonIncreasing,
    NonMonotone,
    Undefined,
}

/// Classifies the defined entries of `values` in order.
pub fn trend(values: &[Option<f64>]) -> Trend {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.len() < 2 {
        return Trend::Undefined;
    }
    if v.windows(2).all(|w| w[1] < w[0]) {
        Trend::Decreasing
    } else if v.windows(2).all(|w| w[1] <= w[0]) {
        Trend::NonIncreasing
    } else {
        Trend::NonMonotone
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub ell: f64,
    /// `‖R(·, ℓ)‖` in the configured time norm.
    pub norm: f64,
    pub structure: Vec<f64>,
    pub law: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub nu: f64,
    /// `ℓ_D = ν^L`.
    pub ell_d: f64,
    /// Smallest analyzed scale, `max(ℓ_D, 4h)`.
    pub ell_lo: f64,
    pub warnings: Vec<String>,
    pub alpha_measured: f64,
    pub times: Vec<f64>,
    pub eps: Vec<f64>,
    /// Scales in decreasing order.
    pub cells: Vec<SweepCell>,
    /// `sup_{ℓ ∈ [ℓ_lo, ℓ_I]} ‖R‖` for each `ℓ_I`; absent for an empty window.
    pub sup: Vec<Option<f64>>,
    /// Trend of `sup` as `ℓ_I` shrinks.
    pub trend_over_ell_i: Trend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub ell_i: f64,
    /// One entry per viscosity, in decreasing ν.
    pub values: Vec<Option<f64>>,
    pub trend_over_nu: Trend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub nu: Vec<f64>,
    pub alpha: f64,
    pub alpha_source: String,
    pub length_exponent: f64,
    pub length_exponent_bound: f64,
    pub ell_i: Vec<f64>,
    pub time_exponent: f64,
    pub uniform_in_time: bool,
    pub projection: TensorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub format: String,
    pub settings: SweepSettings,
    pub runs: Vec<SweepRun>,
    pub trend_table: Vec<TrendRow>,
    pub warnings: Vec<String>,
}

/// Scales analyzed for one run: the dyadic lattice `ℓ_I[0]·2^{-j}`, every
/// `ℓ_I`, and the lower end `ℓ_lo`, restricted to `[ℓ_lo, ℓ_I[0]]`.
pub fn scale_lattice(ell_i: &[f64], ell_lo: f64) -> Vec<f64> {
    let top = ell_i[0];
    let mut v = Vec::new();
    let mut ell = top;
    while ell >= ell_lo * (1.0 - 1e-12) {
        v.push(ell);
        ell *= 0.5;
    }
    v.extend(ell_i.iter().copied().filter(|&l| l >= ell_lo * (1.0 - 1e-12)));
    if ell_lo <= top {
        v.push(ell_lo);
    }
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    v
}

/// `‖R‖_{L^p(0,T)}`, or `sup_t |R|` for the uniform variant.
pub fn time_norm(times: &[f64], law: &[f64], p: f64, uniform: bool) -> Result<f64> {
    if uniform {
        return Ok(law.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let dt = uniform_spacing(times)?;
    let powered: Vec<f64> = law.iter().map(|v| v.abs().powf(p)).collect();
    Ok(integrate(&powered, dt).max(0.0).powf(1.0 / p))
}

/// `R(t) = ∫₀ᵗ S/ℓ + ε(t)` at every snapshot.
pub fn law_series(times: &[f64], structure: &[f64], eps: &[f64], ell: f64) -> Result<Vec<f64>> {
    let dt = uniform_spacing(times)?;
    let flux: Vec<f64> = structure.iter().map(|s| s / ell).collect();
    Ok(cumulative(&flux, dt).iter().zip(eps).map(|(a, b)| a + b).collect())
}

fn analyze_run(
    sweep: &SweepSection,
    nu: f64,
    out: &RunOutput,
) -> Result<SweepRun> {
    let snaps = &out.snapshots;
    let grid: Grid = *snaps[0].grid();
    let h = grid.spacing();
    let ell_d = nu.powf(sweep.length_exponent);
    let mut warnings = out.warnings.clone();
    let resolved = 4.0 * h;
    let ell_lo = if ell_d < resolved {
        warnings.push(format!(
            "ν = {nu}: ℓ_D = {ell_d:.4e} is below 4h = {resolved:.4e}; analysis restricted to ℓ ≥ 4h"
        ));
        resolved
    } else {
        ell_d
    };
    let scales = scale_lattice(&sweep.ell_i, ell_lo);
    let k_max = band_limit(snaps);
    let times = out.series.times.clone();
    let eps = out.series.eps.clone();
    let mut cells = Vec::with_capacity(scales.len());
    for &ell in &scales {
        let rule = rule_for(&grid, k_max, ell, sweep.sphere_order)?;
        let structure = snaps
            .iter()
            .map(|u| structure_functions(u, ell, &rule).map(|s| s[sweep.projection as usize]))
            .collect::<kflux::Result<Vec<_>>>()?;
        let law = law_series(&times, &structure, &eps, ell)?;
        let norm = time_norm(&times, &law, sweep.time_exponent, sweep.uniform_in_time)?;
        cells.push(SweepCell {
            ell,
            norm,
            structure,
            law,
        });
    }
    let sup: Vec<Option<f64>> = sweep
        .ell_i
        .iter()
        .map(|&top| {
            cells
                .iter()
                .filter(|c| c.ell <= top * (1.0 + 1e-12))
                .map(|c| c.norm)
                .reduce(f64::max)
        })
        .collect();
    // Nested windows: the sup can only shrink with ℓ_I.
    for w in sup.windows(2) {
        if let (Some(a), Some(b)) = (w[0], w[1]) {
            assert!(b <= a, "sup over a smaller window exceeds the larger one");
        }
    }
    let alpha_measured = kflux::field::fit_besov_exponent(snaps, &fit_radii(&grid))?;
    Ok(SweepRun {
        nu,
        ell_d,
        ell_lo,
        warnings,
        alpha_measured,
        times,
        eps,
        cells,
        trend_over_ell_i: trend(&sup),
        sup,
    })
}

/// Runs every viscosity (concurrently), evaluates the law residual on the
/// scale lattice and assembles the trend tables.
pub fn sweep(cfg: &Config, out: &Path, seed: Option<u64>, force: bool) -> Result<SweepReport> {
    let Some(sw) = &cfg.sweep else {
        bail!("config has no [sweep] section");
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let report_path = out.join("sweep.json");
    if report_path.exists() && !force {
        bail!("{} already exists; use --force to overwrite", report_path.display());
    }
    let outputs: Vec<Result<RunOutput>> = sw
        .nu
        .par_iter()
        .map(|&nu| {
            let params = cfg.solver_params(seed, Some(nu));
            if sw.keep_runs {
                let dir = out.join(format!("run_nu_{nu:e}"));
                fs::create_dir_all(&dir)?;
                let mode = if force { DirMode::Overwrite } else { DirMode::Fresh };
                run_to_dir(&params, &dir, mode)?;
            }
            Ok(run(&params)?)
        })
        .collect();
    let mut runs = Vec::with_capacity(outputs.len());
    for (nu, o) in sw.nu.iter().zip(outputs) {
        let o = o.with_context(|| format!("simulation at ν = {nu}"))?;
        runs.push(analyze_run(sw, *nu, &o)?);
    }
    let (alpha, alpha_source) = match sw.alpha {
        AlphaSetting::Value(a) => (a, "supplied".to_string()),
        AlphaSetting::Mode(AlphaMode::Measured) => {
            let a = runs.iter().map(|r| r.alpha_measured).fold(1.0, f64::min);
            (a, "measured (minimum over runs)".to_string())
        }
    };
    check_length_exponent(sw.length_exponent, alpha)?;

    let trend_table = sw
        .ell_i
        .iter()
        .enumerate()
        .map(|(j, &ell_i)| {
            let values: Vec<Option<f64>> = runs.iter().map(|r| r.sup[j]).collect();
            TrendRow {
                ell_i,
                trend_over_nu: trend(&values),
                values,
            }
        })
        .collect();
    let warnings = runs.iter().flat_map(|r| r.warnings.iter().cloned()).collect();
    let report = SweepReport {
        format: SWEEP_FORMAT.into(),
        settings: SweepSettings {
            nu: sw.nu.clone(),
            alpha,
            alpha_source,
            length_exponent: sw.length_exponent,
            length_exponent_bound: crate::config::length_exponent_bound(alpha),
            ell_i: sw.ell_i.clone(),
            time_exponent: sw.time_exponent,
            uniform_in_time: sw.uniform_in_time,
            projection: sw.projection,
        },
        runs,
        trend_table,
        warnings,
    };
    write_report(&report, out)?;
    Ok(report)
}

fn write_report(report: &SweepReport, out: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(out.join("sweep.json"), text)?;

    let mut wr = csv::Writer::from_path(out.join("sweep.csv"))?;
    wr.write_record(["nu", "ell_i", "sup_norm"])?;
    for r in &report.runs {
        for (ell_i, s) in report.settings.ell_i.iter().zip(&r.sup) {
            let v = s.map(|v| format!("{v:.17e}")).unwrap_or_default();
            wr.write_record([format!("{:.17e}", r.nu), format!("{ell_i:.17e}"), v])?;
        }
    }
    wr.flush()?;

    let mut wr = csv::Writer::from_path(out.join("sweep_law.csv"))?;
    wr.write_record(["nu", "ell", "t", "structure", "eps", "law"])?;
    for r in &report.runs {
        for c in &r.cells {
            for i in 0..r.times.len() {
                wr.write_record(
                    [r.nu, c.ell, r.times[i], c.structure[i], r.eps[i], c.law[i]].map(|v| format!("{v:.17e}")),
                )?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_is_dyadic_and_bounded() {
        let l = scale_lattice(&[0.8, 0.4], 0.15);
        assert_eq!(l, vec![0.8, 0.4, 0.2, 0.15]);
        let l = scale_lattice(&[0.8, 0.3], 0.2);
        assert_eq!(l, vec![0.8, 0.4, 0.3, 0.2]);
        assert!(scale_lattice(&[0.1], 0.2).is_empty());
    }

    #[test]
    fn trends() {
        assert_eq!(trend(&[Some(3.0), Some(2.0), Some(1.0)]), Trend::Decreasing);
        assert_eq!(trend(&[Some(3.0), Some(3.0)]), Trend::NonIncreasing);
        assert_eq!(trend(&[Some(1.0), None, Some(2.0)]), Trend::NonMonotone);
        assert_eq!(trend(&[Some(1.0), None]), Trend::Undefined);
    }

    #[test]
    fn time_norms() {
        let t: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let r: Vec<f64> = t.iter().map(|x| -x).collect();
        assert!((time_norm(&t, &r, 1.0, false).unwrap() - 0.5).abs() < 1e-14);
        assert!((time_norm(&t, &r, 2.0, false).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert_eq!(time_norm(&t, &r, 1.0, true).unwrap(), 1.0);
    }
}
