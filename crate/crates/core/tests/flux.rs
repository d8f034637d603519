use std::f64::consts::PI;

use kflux::field::{random_solenoidal, RandomFieldSpec};
use kflux::flux::{
    decomposition_identity, decomposition_identity_with, flux_field_mollified, flux_fields_sphere,
    mollifier_to_sphere_limit, structure_functions, StructureTable,
};
use kflux::sphere::{resolving_order, sphere_rule};
use kflux::{Field, Grid, KernelSpec, SphereRule, TensorKind};

fn random(dim: usize, n: usize, seed: u64, k_max: f64) -> Field {
    let g = Grid::new(dim, n).unwrap();
    let spec = RandomFieldSpec {
        seed,
        slope: -5.0 / 3.0,
        k_min: 1.0,
        k_max,
        energy: 1.0,
    };
    random_solenoidal(&g, &spec).unwrap()
}

fn taylor_green(n: usize) -> Field {
    Field::from_fn(Grid::new(2, n).unwrap(), 2, |x, c| {
        if c == 0 {
            x[0].sin() * x[1].cos()
        } else {
            -x[0].cos() * x[1].sin()
        }
    })
}

/// Grid-aligned rule with integer offsets `offsets[m]` (in grid cells) of
/// common length `radius`.
fn lattice_rule(offsets: &[[i64; 2]], radius: f64) -> SphereRule {
    let nodes = offsets
        .iter()
        .map(|o| [o[0] as f64 / radius, o[1] as f64 / radius, 0.0])
        .collect();
    let w = vec![1.0 / offsets.len() as f64; offsets.len()];
    SphereRule::from_nodes(2, nodes, w, 1).unwrap()
}

struct Brute {
    s: [f64; 3],
    d: [Vec<f64>; 3],
}

/// Direct real-space double loop over grid points and lattice offsets.
fn brute_force(u: &Field, offsets: &[[i64; 2]], radius_cells: f64) -> Brute {
    let g = *u.grid();
    let n = g.n() as i64;
    let h = g.spacing();
    let ell = radius_cells * h;
    let w = 1.0 / offsets.len() as f64;
    let mut d: [Vec<f64>; 3] = [vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()]];
    let mut total = [0.0; 3];
    for i0 in 0..n {
        for i1 in 0..n {
            let here = g.flat_index([i0 as usize, i1 as usize, 0]);
            let mut acc = [0.0; 3];
            for o in offsets {
                let there = g.flat_index([(i0 + o[0]).rem_euclid(n) as usize, (i1 + o[1]).rem_euclid(n) as usize, 0]);
                let sigma = [o[0] as f64 / radius_cells, o[1] as f64 / radius_cells];
                let du = [
                    u.component(0)[there] - u.component(0)[here],
                    u.component(1)[there] - u.component(1)[here],
                ];
                let long = sigma[0] * du[0] + sigma[1] * du[1];
                let q = du[0] * du[0] + du[1] * du[1];
                let t = [du[0] - long * sigma[0], du[1] - long * sigma[1]];
                acc[0] += w * long * q;
                acc[1] += w * long * long * long;
                acc[2] += w * long * (t[0] * t[0] + t[1] * t[1]);
            }
            for p in 0..3 {
                let c = TensorKind::ALL[p].structure_constant(2);
                d[p][here] = -c / ell * acc[p];
                total[p] += c * acc[p];
            }
        }
    }
    let cell = h * h;
    Brute {
        s: total.map(|t| t * cell),
        d,
    }
}

#[test]
fn brute_force_oracle_matches_spectral_evaluation() {
    // At n = 16 the admissible radii are at most four cells.
    let axis2: Vec<[i64; 2]> = vec![[2, 0], [0, 2], [-2, 0], [0, -2]];
    let axis4: Vec<[i64; 2]> = vec![[4, 0], [0, 4], [-4, 0], [0, -4]];
    let diagonal: Vec<[i64; 2]> = vec![[2, 2], [-2, 2], [2, -2], [-2, -2]];
    let cases = [(1u64, (&axis2, 2.0)), (2, (&axis4, 4.0)), (3, (&diagonal, 8f64.sqrt()))];
    for (seed, (offsets, radius)) in cases {
        let u = random(2, 16, seed, 5.0);
        let h = u.grid().spacing();
        let ell = radius * h;
        let rule = lattice_rule(offsets, radius);
        let oracle = brute_force(&u, offsets, radius);
        let s = structure_functions(&u, ell, &rule).unwrap();
        let fields = flux_fields_sphere(&u, ell, &rule).unwrap();
        for p in 0..3 {
            assert!((s[p] - oracle.s[p]).abs() <= 1e-10, "S {p}: {} vs {}", s[p], oracle.s[p]);
            for (a, b) in fields[p].values.component(0).iter().zip(&oracle.d[p]) {
                assert!((a - b).abs() <= 1e-10, "D {p}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn decomposition_identity_on_random_fields() {
    for seed in 0..12 {
        let u = random(2, 64, 100 + seed, 12.0);
        let ell = [0.1, 0.3, 0.7, 1.5][seed as usize % 4];
        let rule = sphere_rule(2, resolving_order(12.0, ell)).unwrap();
        let c = decomposition_identity(&u, ell, &rule).unwrap();
        assert!(c.residual <= 1e-12, "2D seed {seed}: {}", c.residual);
    }
    for seed in 0..8 {
        let u = random(3, 32, 200 + seed, 6.0);
        let ell = [0.2, 0.5, 1.0, 1.5][seed as usize % 4];
        let rule = sphere_rule(3, 12).unwrap();
        let c = decomposition_identity(&u, ell, &rule).unwrap();
        assert!(c.residual <= 1e-12, "3D seed {seed}: {}", c.residual);
    }
}

#[test]
fn identity_rejects_mismatched_rules() {
    let u = taylor_green(16);
    let a = sphere_rule(2, 8).unwrap();
    let b = sphere_rule(2, 16).unwrap();
    assert!(decomposition_identity_with(&u, 0.5, [&a, &a, &b]).is_err());
    assert!(decomposition_identity_with(&u, 0.5, [&a, &a, &a]).is_ok());
}

#[test]
fn structure_functions_scale_cubically_and_flip_under_negation() {
    let u = random(2, 32, 9, 8.0);
    let rule = sphere_rule(2, 64).unwrap();
    let base = structure_functions(&u, 0.4, &rule).unwrap();
    let scaled = structure_functions(&u.scaled(2.0), 0.4, &rule).unwrap();
    let negated = structure_functions(&u.scaled(-1.0), 0.4, &rule).unwrap();
    for p in 0..3 {
        assert!((scaled[p] - 8.0 * base[p]).abs() <= 1e-12 * base[p].abs().max(1.0));
        assert!((negated[p] + base[p]).abs() <= 1e-12 * base[p].abs().max(1.0));
    }
}

#[test]
fn sphere_fields_integrate_to_structure_functions() {
    let u = random(2, 32, 3, 8.0);
    let ell = 0.3;
    let rule = sphere_rule(2, resolving_order(8.0, ell)).unwrap();
    let s = structure_functions(&u, ell, &rule).unwrap();
    let d = flux_fields_sphere(&u, ell, &rule).unwrap();
    for p in 0..3 {
        assert!((d[p].integral() + s[p] / ell).abs() <= 1e-11 * s[p].abs().max(1.0));
        assert_eq!(d[p].projection, TensorKind::ALL[p]);
    }
}

#[test]
fn mollified_field_approaches_sphere_field() {
    let u = random(2, 32, 5, 6.0);
    let ell = 0.5;
    let rule = sphere_rule(2, resolving_order(6.0, 1.0)).unwrap();
    let sharp = &flux_fields_sphere(&u, ell, &rule).unwrap()[0];
    let mut prev = f64::INFINITY;
    for gamma in [0.4, 0.2, 0.1, 0.05] {
        let k = KernelSpec::standard(ell, gamma).unwrap();
        let m = flux_field_mollified(&u, &k, &rule).unwrap();
        let gap = kflux::field::max_norm(&Field::lincomb(1.0, &m.values, -1.0, &sharp.values).unwrap());
        assert!(gap < prev, "γ={gamma}: {gap} vs {prev}");
        prev = gap;
    }
    assert!(prev < 1e-2 * sharp.max_abs());
    let k = KernelSpec::standard(ell, 0.0).unwrap();
    assert!(flux_field_mollified(&u, &k, &rule).is_err());
}

#[test]
fn single_mode_mollifier_gap_is_monotone_and_quadratic() {
    let g = Grid::new(2, 32).unwrap();
    let f = Field::from_fn(g, 1, |x, _| (3.0 * x[0] + 4.0 * x[1]).cos());
    let rec = mollifier_to_sphere_limit(&f, PI / 8.0, &[0.2, 0.1, 0.05]).unwrap();
    assert!(rec.monotone);
    let ratio = rec.gaps[1] / rec.gaps[2];
    assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    assert!(mollifier_to_sphere_limit(&f, PI / 8.0, &[0.1, 0.2]).is_err());
    assert!(mollifier_to_sphere_limit(&f, PI / 8.0, &[1.5]).is_err());
}

#[test]
fn taylor_green_flux_vanishes_on_average() {
    let u = taylor_green(64);
    for ell in [PI / 4.0, PI / 16.0] {
        let rule = sphere_rule(2, resolving_order(1.0, ell)).unwrap();
        let s = structure_functions(&u, ell, &rule).unwrap();
        assert!(s[0].abs() < 1e-13, "{}", s[0]);
    }
}

#[test]
fn scales_outside_the_admissible_range_are_rejected() {
    let u = taylor_green(16);
    let rule = sphere_rule(2, 8).unwrap();
    for ell in [0.0, -0.1, 1.6, f64::NAN] {
        assert!(structure_functions(&u, ell, &rule).is_err(), "{ell}");
    }
}

#[test]
fn structure_table_csv_round_trip() {
    let snaps: Vec<Field> = (0..3).map(|i| random(2, 16, 40, 4.0).with_time(0.1 * i as f64)).collect();
    let scales = [0.2, 0.4];
    let rule_for = |ell: f64| sphere_rule(2, resolving_order(4.0, ell));
    let tables = StructureTable::build_all(&snaps, &scales, &rule_for).unwrap();
    let mut buf = Vec::new();
    tables[1].write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next().unwrap(), "t,ell,projection,value");
    let body: Vec<&str> = rows.collect();
    assert_eq!(body.len(), 6);
    for (row, line) in body.iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[2], "L");
        let v: f64 = cols[3].parse().unwrap();
        assert_eq!(v, tables[1].values[row / 2][row % 2]);
    }
    let direct = structure_functions(&snaps[2], 0.4, &rule_for(0.4).unwrap()).unwrap();
    assert_eq!(direct[1], tables[1].values[2][1]);
}
