use kflux::balance::epsilon_series;
use kflux::field::{divergence, max_norm, RandomFieldSpec};
use kflux::solver::{
    read_manifest, run, run_to_dir, step, taylor_green_exact, CflPolicy, Dealias, DirMode, ForcingMode, ForcingSpec,
    InitSpec, Solver, SolverParams, MANIFEST,
};
use kflux::{Error, Field, Grid};

fn tg_params(n: usize, nu: f64, dt: f64, t_end: f64) -> SolverParams {
    SolverParams {
        dim: 2,
        n,
        nu,
        dt,
        t_end,
        snapshot_stride: 100,
        dealias: Dealias::TwoThirds,
        integrating_factor: false,
        cfl: CflPolicy::Abort,
        forcing: ForcingSpec::None,
        init: InitSpec::TaylorGreen {
            amplitude: 1.0,
            wavenumber: 1,
        },
    }
}

fn random_params(n: usize, nu: f64, dt: f64, t_end: f64, seed: u64) -> SolverParams {
    SolverParams {
        init: InitSpec::Random(RandomFieldSpec {
            seed,
            slope: -3.0,
            k_min: 1.0,
            k_max: 8.0,
            energy: 0.5,
        }),
        ..tg_params(n, nu, dt, t_end)
    }
}

fn max_diff(a: &Field, b: &Field) -> f64 {
    max_norm(&Field::lincomb(1.0, a, -1.0, b).unwrap())
}

fn final_field(p: &SolverParams) -> Field {
    let mut s = Solver::new(p).unwrap();
    while s.step_index() < p.steps() {
        s.step().unwrap();
    }
    s.field()
}

#[test]
fn zero_state_is_a_fixed_point() {
    let g = Grid::new(2, 16).unwrap();
    let u = Field::zeros(g, 2);
    let p = tg_params(16, 0.1, 0.01, 0.1);
    let v = step(&u, &p).unwrap();
    assert_eq!(max_norm(&v), 0.0);
    assert!((v.time() - 0.01).abs() < 1e-15);
}

#[test]
fn taylor_green_matches_the_exact_decay() {
    let p = tg_params(64, 0.01, 1e-3, 1.0);
    let u = final_field(&p);
    let exact = taylor_green_exact(u.grid(), 1.0, 1, 0.01, 1.0);
    assert!(max_diff(&u, &exact) <= 1e-8);
}

#[test]
fn rk4_is_fourth_order_on_a_stiff_decaying_mode() {
    // Wavenumber 8 at ν = 0.05 decays at rate 2νk² = 6.4.
    let err = |dt: f64| {
        let mut p = tg_params(32, 0.05, dt, 0.5);
        p.init = InitSpec::TaylorGreen {
            amplitude: 1.0,
            wavenumber: 8,
        };
        let u = final_field(&p);
        max_diff(&u, &taylor_green_exact(u.grid(), 1.0, 8, 0.05, 0.5))
    };
    let (e1, e2) = (err(0.02), err(0.01));
    assert!(e1 / e2 >= 12.0, "{e1} {e2}");
}

#[test]
fn rk4_self_convergence_on_a_nonlinear_flow() {
    let sol = |dt: f64| final_field(&random_params(32, 0.01, dt, 0.5, 7));
    let (a, b, c) = (sol(0.02), sol(0.01), sol(0.005));
    let ratio = max_diff(&a, &b) / max_diff(&b, &c);
    assert!(ratio > 12.0, "{ratio}");
}

#[test]
fn integrating_factor_and_padding_keep_taylor_green_exact() {
    for (ifac, dealias) in [(true, Dealias::TwoThirds), (false, Dealias::Padded), (true, Dealias::Padded)] {
        let mut p = tg_params(32, 0.05, 1e-2, 0.5);
        p.integrating_factor = ifac;
        p.dealias = dealias;
        let u = final_field(&p);
        let exact = taylor_green_exact(u.grid(), 1.0, 1, 0.05, 0.5);
        let tol = if ifac { 1e-13 } else { 1e-9 };
        assert!(max_diff(&u, &exact) < tol, "{ifac} {dealias:?}");
    }
}

#[test]
fn snapshots_stay_solenoidal_dealiased_and_dissipative() {
    let mut p = random_params(32, 0.01, 5e-3, 0.5, 3);
    p.snapshot_stride = 10;
    let out = run(&p).unwrap();
    assert_eq!(out.snapshots.len(), 11);
    let cutoff = out.snapshots[0].grid().two_thirds_cutoff();
    for u in &out.snapshots {
        let div = max_norm(&divergence(u).unwrap());
        assert!(div <= 1e-10 * max_norm(u).max(1.0));
        let s = u.spectrum();
        let g = *u.grid();
        for i in 0..g.len() {
            if g.wavevector(i).iter().any(|k| k.abs() > cutoff) {
                for c in 0..2 {
                    assert!(s.component(c)[i].norm() < 1e-15);
                }
            }
        }
    }
    assert!(out.series.energy.windows(2).all(|w| w[1] <= w[0] + 1e-14));
    let reference = epsilon_series(&out.snapshots, &out.forces, p.nu).unwrap();
    for (a, b) in out.series.eps.iter().zip(&reference.eps) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn inviscid_energy_is_conserved_to_fourth_order() {
    let drift = |dt: f64| {
        let mut p = random_params(32, 0.0, dt, 0.5, 9);
        p.snapshot_stride = 1_000_000;
        let out = run(&p).unwrap();
        let e = &out.series.energy;
        (e[e.len() - 1] - e[0]).abs()
    };
    let (a, b) = (drift(0.02), drift(0.01));
    assert!(a < 1e-6, "{a}");
    assert!(a / b > 12.0 || b < 1e-14, "{a} {b}");
}

#[test]
fn forced_accumulators_close_the_energy_budget() {
    let mut p = tg_params(32, 0.02, 2e-3, 1.0);
    p.snapshot_stride = 50;
    p.forcing = ForcingSpec::Modes {
        modes: vec![
            ForcingMode {
                wavevector: [1, 0, 0],
                amplitude: [0.0, 0.3, 0.0],
                phase: 0.2,
                frequency: 0.0,
            },
            ForcingMode {
                wavevector: [0, 2, 0],
                amplitude: [0.2, 0.0, 0.0],
                phase: 0.0,
                frequency: 3.0,
            },
        ],
    };
    let out = run(&p).unwrap();
    assert_eq!(out.forces.len(), out.snapshots.len());
    let e0 = out.accumulators[0].energy;
    for a in &out.accumulators {
        let eps = e0 - a.energy + a.work;
        assert!((eps - a.dissipation).abs() <= 1e-10, "t={}: {}", a.t, eps - a.dissipation);
    }
    assert!(out.accumulators.last().unwrap().work.abs() > 1e-3);
}

#[test]
fn cfl_violation_aborts_or_warns() {
    let mut p = tg_params(64, 0.01, 0.5, 1.0);
    match Solver::new(&p).unwrap().step() {
        Err(Error::Cfl { step, .. }) => assert_eq!(step, 0),
        other => panic!("expected CFL abort, got {other:?}"),
    }
    p.cfl = CflPolicy::Warn;
    p.t_end = 0.5;
    let mut s = Solver::new(&p).unwrap();
    let _ = s.step();
    assert_eq!(s.warnings().len(), 1);
}

#[test]
fn blowup_reports_the_step() {
    let mut p = tg_params(16, 0.0, 5.0, 1000.0);
    p.cfl = CflPolicy::Warn;
    p.init = InitSpec::Random(RandomFieldSpec {
        seed: 1,
        slope: 0.0,
        k_min: 1.0,
        k_max: 5.0,
        energy: 1e150,
    });
    let mut s = Solver::new(&p).unwrap();
    let mut result = Ok(());
    for _ in 0..50 {
        result = s.step();
        if result.is_err() {
            break;
        }
    }
    match result {
        Err(Error::Blowup { step }) => assert!(step >= 1),
        other => panic!("expected blow-up, got {other:?}"),
    }
}

#[test]
fn run_directories_are_reproducible_and_resumable() {
    let mut p = random_params(16, 0.02, 0.01, 0.2, 42);
    p.snapshot_stride = 5;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_to_dir(&p, a.path(), DirMode::Fresh).unwrap();
    run_to_dir(&p, b.path(), DirMode::Fresh).unwrap();
    assert_eq!(ma.snapshots.len(), 5);
    for e in &ma.snapshots {
        let x = std::fs::read(a.path().join(&e.velocity)).unwrap();
        let y = std::fs::read(b.path().join(&e.velocity)).unwrap();
        assert_eq!(x, y);
    }
    assert!(run_to_dir(&p, a.path(), DirMode::Fresh).is_err());

    // Simulate an interrupted run and resume it.
    let mut m = read_manifest(b.path()).unwrap();
    m.snapshots.truncate(2);
    m.complete = false;
    std::fs::write(b.path().join(MANIFEST), serde_json::to_string_pretty(&m).unwrap()).unwrap();
    let resumed = run_to_dir(&p, b.path(), DirMode::Resume).unwrap();
    assert_eq!(resumed.snapshots, ma.snapshots);
    for e in &ma.snapshots {
        let x = std::fs::read(a.path().join(&e.velocity)).unwrap();
        let y = std::fs::read(b.path().join(&e.velocity)).unwrap();
        assert_eq!(x, y, "{}", e.velocity);
    }
    run_to_dir(&p, a.path(), DirMode::Overwrite).unwrap();
}

#[test]
fn invalid_parameters_are_rejected() {
    let mut p = tg_params(64, 0.01, 0.0, 1.0);
    assert!(Solver::new(&p).is_err());
    p.dt = 1e-3;
    p.n = 48;
    assert!(Solver::new(&p).is_err());
}

#[test]
fn smooth_flows_measure_unit_regularity() {
    let g = Grid::new(2, 64).unwrap();
    let u = taylor_green_exact(&g, 1.0, 1, 0.0, 0.0);
    let radii = [0.05, 0.1, 0.2];
    let alpha = kflux::field::fit_besov_exponent(&[u], &radii).unwrap();
    assert!((alpha - 1.0).abs() < 0.01, "{alpha}");
}
