use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use kflux::solver::DirMode;
use kflux::TensorKind;
use kflux_cli::commands::{self, BalanceOptions};
use kflux_cli::config;
use kflux_cli::sweep;
use kflux_cli::verify::{self, Suite, VerifyOptions};

#[derive(Parser)]
#[command(name = "kflux", version, about = "Structure functions, dissipation fields and energy balances for periodic flows")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the random seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver into a run directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing run.
        #[arg(long, conflicts_with = "resume")]
        force: bool,
        /// Continue an interrupted run from its last snapshot.
        #[arg(long)]
        resume: bool,
    },
    /// Structure tables, identity residuals and flux fields of a run.
    Analyze {
        /// Run directory.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated scales; taken from [analysis] when omitted.
        #[arg(long, value_delimiter = ',')]
        scales: Vec<f64>,
        /// Comma-separated projections among I, L, T.
        #[arg(long, value_delimiter = ',')]
        projections: Vec<TensorKind>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        sphere_order: Option<usize>,
    },
    /// Time-integrated balance, remainder audit and optional local residual.
    Balance {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ell: Option<f64>,
        #[arg(long)]
        projection: Option<TensorKind>,
        /// Regularity exponent for the audit; measured when omitted.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        local: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Viscosity sweep of the law residual.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Kernel, tensor and identity invariant suites.
    Verify {
        #[arg(long, default_value = "all")]
        suite: Suite,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Multiply C_T by this factor (negative control).
        #[arg(long, hide = true)]
        perturb_ct: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Simulate {
            config,
            out,
            force,
            resume,
        } => {
            let cfg = config::load(&config)?;
            let mode = if resume {
                DirMode::Resume
            } else if force {
                DirMode::Overwrite
            } else {
                DirMode::Fresh
            };
            let m = commands::simulate(&cfg, &out, mode, cli.seed)?;
            println!("{} snapshots written to {}", m.snapshots.len(), out.display());
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            Ok(true)
        }
        Command::Analyze {
            run,
            out,
            scales,
            projections,
            config,
            sphere_order,
        } => {
            let section = match &config {
                Some(p) => config::load(p)?.analysis,
                None => None,
            };
            let scales = if scales.is_empty() {
                match &section {
                    Some(a) => a.scales.clone(),
                    None => bail!("no scales: pass --scales or an [analysis] section"),
                }
            } else {
                scales
            };
            let projections = if projections.is_empty() {
                section.as_ref().map(|a| a.projections.clone()).unwrap_or(TensorKind::ALL.to_vec())
            } else {
                projections
            };
            let order = sphere_order.or(section.and_then(|a| a.sphere_order));
            let result = commands::analyze(&run, &out, &scales, &projections, order)?;
            for r in &result.identity {
                println!("t = {:.6}  ell = {:.6}  identity residual = {:.3e}", r.t, r.ell, r.residual);
            }
            Ok(true)
        }
        Command::Balance {
            run,
            out,
            ell,
            projection,
            alpha,
            local,
            config,
        } => {
            let section = match &config {
                Some(p) => config::load(p)?.balance,
                None => None,
            };
            let Some(ell) = ell.or(section.as_ref().map(|b| b.ell)) else {
                bail!("no scale: pass --ell or a [balance] section");
            };
            let opts = BalanceOptions {
                ell,
                projection: projection.or(section.as_ref().map(|b| b.projection)).unwrap_or(TensorKind::I),
                alpha: alpha.or(section.as_ref().and_then(|b| b.alpha)),
                local: local || section.as_ref().is_some_and(|b| b.local),
                order: section.and_then(|b| b.sphere_order),
            };
            let r = commands::balance(&run, &out, &opts)?;
            let g = &r.global;
            println!("flux {:.6e}  eps {:.6e}  boundary {:.6e}  forcing {:.6e}  viscous {:.6e}", g.flux, g.eps, g.boundary, g.forcing, g.viscous);
            println!("residual {:.3e}", g.residual);
            println!("remainder audit ({} α = {:.3}): {}", r.alpha_source, r.alpha, if r.audit.pass { "within bounds" } else { "exceeds bounds" });
            Ok(true)
        }
        Command::Sweep { config, out, force } => {
            let cfg = config::load(&config)?;
            let report = sweep::sweep(&cfg, &out, cli.seed, force)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for run in &report.runs {
                println!("ν = {:e}: sup over [ℓ_D, ℓ_I] as ℓ_I shrinks: {:?}", run.nu, run.trend_over_ell_i);
            }
            for row in &report.trend_table {
                println!("ℓ_I = {:.4}: over decreasing ν: {:?}", row.ell_i, row.trend_over_nu);
            }
            Ok(true)
        }
        Command::Verify {
            suite,
            out,
            perturb_ct,
        } => {
            let mut opts = VerifyOptions::default();
            if let Some(s) = cli.seed {
                opts.seed = s;
            }
            opts.perturb_ct = perturb_ct;
            let report = verify::verify(suite, &opts)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            for c in report.checks.iter().filter(|c| !c.pass) {
                eprintln!("FAIL {}: measured {:.3e} > tolerance {:.1e}", c.name, c.measured, c.tolerance);
            }
            Ok(report.pass)
        }
    }
}
