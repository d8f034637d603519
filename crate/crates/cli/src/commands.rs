//! `simulate`, `analyze` and `balance`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kflux::balance::{
    epsilon_series, global_balance_with, local_balance_residual_i, local_balance_residual_l, remainder_bound_audit,
    BalanceReport, EnergySeries, RemainderAudit,
};
use kflux::flux::{decomposition_identity, flux_fields_sphere, StructureTable};
use kflux::solver::{load_run, read_manifest, run_to_dir, DirMode, RunManifest};
use kflux::sphere::{resolving_order, sphere_rule, MAX_ORDER_2D, MAX_ORDER_3D};
use kflux::{Field, Grid, SphereRule, TensorKind};
use serde::{Deserialize, Serialize};

use crate::config::Config;

/// Largest identity residual `analyze` accepts.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

pub fn simulate(cfg: &Config, out: &Path, mode: DirMode, seed: Option<u64>) -> Result<RunManifest> {
    let params = cfg.solver_params(seed, None);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(run_to_dir(&params, out, mode)?)
}

/// Loads a complete run directory.
pub fn open_run(dir: &Path) -> Result<(RunManifest, Vec<Field>, Vec<Field>)> {
    let manifest = read_manifest(dir)?;
    if !manifest.complete {
        bail!("{}: run is incomplete; finish it with simulate --resume", dir.display());
    }
    let (snaps, forces) = load_run(dir, &manifest)?;
    Ok((manifest, snaps, forces))
}

/// Largest `|k|` carrying power above round-off in any snapshot.
pub fn band_limit(snapshots: &[Field]) -> f64 {
    let mut kmax: f64 = 1.0;
    for u in snapshots {
        let g = *u.grid();
        let p = u.spectrum().power();
        let total: f64 = p.iter().sum();
        for (i, v) in p.iter().enumerate() {
            if *v > 1e-28 * total {
                let k = g.wavevector(i);
                kmax = kmax.max(((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt());
            }
        }
    }
    kmax
}

/// Sphere rule for scale `ell`: the requested order, or one resolving
/// wavenumbers up to `k_max`.
pub fn rule_for(grid: &Grid, k_max: f64, ell: f64, order: Option<usize>) -> kflux::Result<SphereRule> {
    let cap = if grid.dim() == 2 { MAX_ORDER_2D } else { MAX_ORDER_3D };
    let order = order.unwrap_or_else(|| resolving_order(k_max, ell).min(cap));
    sphere_rule(grid.dim(), order)
}

fn check_scales(scales: &[f64]) -> Result<Vec<f64>> {
    if scales.is_empty() {
        bail!("no scales given");
    }
    for &ell in scales {
        if !(ell > 0.0 && ell <= std::f64::consts::FRAC_PI_2 + 1e-12) {
            bail!("scale {ell} outside (0, π/2]");
        }
    }
    let mut s = scales.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    Ok(s)
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub t: f64,
    pub ell: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeSummary {
    pub format: String,
    pub run: PathBuf,
    pub scales: Vec<f64>,
    pub projections: Vec<TensorKind>,
    pub identity_max: f64,
    pub files: Vec<String>,
}

pub struct AnalyzeOutput {
    pub tables: [StructureTable; 3],
    pub identity: Vec<IdentityRow>,
    pub summary: AnalyzeSummary,
}

/// Structure tables, decomposition residuals and final-time flux fields for
/// every snapshot of a run.
pub fn analyze(
    run: &Path,
    out: &Path,
    scales: &[f64],
    projections: &[TensorKind],
    order: Option<usize>,
) -> Result<AnalyzeOutput> {
    let scales = check_scales(scales)?;
    let (_, snaps, _) = open_run(run)?;
    let grid = *snaps[0].grid();
    let k_max = band_limit(&snaps);
    let rule_at = |ell: f64| rule_for(&grid, k_max, ell, order);
    let tables = StructureTable::build_all(&snaps, &scales, &rule_at)?;

    let mut identity = Vec::new();
    for u in &snaps {
        for &ell in &scales {
            let c = decomposition_identity(u, ell, &rule_at(ell)?)?;
            identity.push(IdentityRow {
                t: u.time(),
                ell,
                residual: c.residual,
            });
        }
    }
    let identity_max = identity.iter().map(|r| r.residual).fold(0.0, f64::max);

    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    {
        let name = "structure.csv";
        let mut wr = csv::Writer::from_writer(create_file(&out.join(name))?);
        wr.write_record(["t", "ell", "projection", "value"])?;
        for kind in projections {
            let t = &tables[*kind as usize];
            for (time, row) in t.times.iter().zip(&t.values) {
                for (ell, v) in t.scales.iter().zip(row) {
                    wr.write_record([
                        format!("{time:.17e}"),
                        format!("{ell:.17e}"),
                        kind.name().to_string(),
                        format!("{v:.17e}"),
                    ])?;
                }
            }
        }
        wr.flush()?;
        files.push(name.to_string());
    }
    {
        let name = "identity.csv";
        let mut wr = csv::Writer::from_writer(create_file(&out.join(name))?);
        wr.write_record(["t", "ell", "residual"])?;
        for r in &identity {
            wr.write_record([format!("{:.17e}", r.t), format!("{:.17e}", r.ell), format!("{:.6e}", r.residual)])?;
        }
        wr.flush()?;
        files.push(name.to_string());
    }
    let last = snaps.last().expect("nonempty run");
    for (j, &ell) in scales.iter().enumerate() {
        let fields = flux_fields_sphere(last, ell, &rule_at(ell)?)?;
        for kind in projections {
            let name = format!("flux_{}_{j:02}.fld", kind.name());
            fields[*kind as usize].write_fld(&out.join(&name))?;
            files.push(name);
        }
    }
    let summary = AnalyzeSummary {
        format: "kflux-analyze/1".into(),
        run: run.to_path_buf(),
        scales: scales.clone(),
        projections: projections.to_vec(),
        identity_max,
        files,
    };
    write_json(&out.join("analyze.json"), &summary)?;
    if identity_max > IDENTITY_TOLERANCE {
        bail!("decomposition identity residual {identity_max:.3e} exceeds {IDENTITY_TOLERANCE:e}");
    }
    Ok(AnalyzeOutput {
        tables,
        identity,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSummary {
    pub times: Vec<f64>,
    pub l1: Vec<f64>,
    pub dominant: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceOutput {
    pub format: String,
    pub global: BalanceReport,
    pub alpha: f64,
    pub alpha_source: String,
    pub audit: RemainderAudit,
    pub local: Option<LocalSummary>,
}

/// Dyadic radii from `π/4` down to `4h` for the exponent fit.
pub fn fit_radii(grid: &Grid) -> Vec<f64> {
    let lo = 4.0 * grid.spacing();
    let mut r = std::f64::consts::FRAC_PI_4;
    let mut out = Vec::new();
    while r >= lo * (1.0 - 1e-12) {
        out.push(r);
        r *= 0.5;
    }
    if out.len() < 2 {
        out = vec![std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_8];
    }
    out
}

pub struct BalanceOptions {
    pub ell: f64,
    pub projection: TensorKind,
    pub alpha: Option<f64>,
    pub local: bool,
    pub order: Option<usize>,
}

/// Global balance, remainder audit and optionally the local residual.
pub fn balance(run: &Path, out: &Path, opts: &BalanceOptions) -> Result<BalanceOutput> {
    check_scales(&[opts.ell])?;
    let (manifest, snaps, forces) = open_run(run)?;
    let nu = manifest.params.nu;
    let grid = *snaps[0].grid();
    let rule = rule_for(&grid, band_limit(&snaps), opts.ell, opts.order)?;
    let series = epsilon_series(&snaps, &forces, nu)?;
    let structure = snaps
        .iter()
        .map(|u| kflux::flux::structure_functions(u, opts.ell, &rule).map(|s| s[opts.projection as usize]))
        .collect::<kflux::Result<Vec<_>>>()?;
    let global = global_balance_with(opts.projection, &snaps, &forces, nu, opts.ell, &structure, &series)?;
    let (alpha, alpha_source) = match opts.alpha {
        Some(a) => (a, "supplied".to_string()),
        None => (kflux::field::fit_besov_exponent(&snaps, &fit_radii(&grid))?, "measured".to_string()),
    };
    let audit = remainder_bound_audit(&snaps, &forces, nu, opts.ell, alpha)?;
    let local = if opts.local {
        let lb = match opts.projection {
            TensorKind::I => local_balance_residual_i(&snaps, &forces, nu, opts.ell, 0.0, &rule)?,
            TensorKind::L => local_balance_residual_l(&snaps, &forces, nu, opts.ell, &rule)?,
            TensorKind::T => bail!("the local balance is available for I and L only"),
        };
        Some(LocalSummary {
            times: lb.times,
            l1: lb.l1,
            dominant: lb.dominant,
        })
    } else {
        None
    };
    let report = BalanceOutput {
        format: "kflux-balance/1".into(),
        global,
        alpha,
        alpha_source,
        audit,
        local,
    };
    fs::create_dir_all(out)?;
    write_json(&out.join("balance.json"), &report)?;
    report.global.write_csv(create_file(&out.join("balance.csv"))?)?;
    write_law_csv(&out.join("law.csv"), &report.global, &series)?;
    Ok(report)
}

fn write_law_csv(path: &Path, report: &BalanceReport, series: &EnergySeries) -> Result<()> {
    let mut wr = csv::Writer::from_writer(create_file(path)?);
    wr.write_record(["t", "structure", "eps", "law"])?;
    for i in 0..report.times.len() {
        wr.write_record(
            [report.times[i], report.structure[i], series.eps[i], report.law[i]].map(|v| format!("{v:.17e}")),
        )?;
    }
    wr.flush()?;
    Ok(())
}
