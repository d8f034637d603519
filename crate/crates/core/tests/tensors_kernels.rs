use kflux::field::{random_solenoidal, RandomFieldSpec};
use kflux::flux::combined_l_average;
use kflux::kernel::{kernel_moment, special_kernel_gradient_identity, sphere_tensor_average, Moment, MomentKind};
use kflux::sphere::{random_directions, sphere_rule};
use kflux::tensor::transverse_constant;
use kflux::{Field, Grid, KernelSpec, TensorKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(v: [f64; 3], dim: usize) -> [f64; 3] {
    let mut v = v;
    if dim == 2 {
        v[2] = 0.0;
    }
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / r, v[1] / r, v[2] / r]
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

fn max_entry_gap(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut e: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            e = e.max((a[i][j] - b[i][j]).abs());
        }
    }
    e
}

#[test]
fn projector_additivity_on_ten_thousand_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for dim in [2, 3] {
        let dirs = random_directions(dim, 10_000, 5 + dim as u64);
        for y in &dirs {
            let v = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let v = if dim == 2 { [v[0], v[1], 0.0] } else { v };
            let i = TensorKind::I.norm_sqr(y, &v);
            let l = TensorKind::L.norm_sqr(y, &v);
            let t = TensorKind::T.norm_sqr(y, &v);
            assert!((i - l - t).abs() <= 1e-14 * i.max(1.0), "{i} {l} {t}");
        }
    }
}

#[test]
fn transverse_constant_is_exact() {
    for d in [2i64, 3] {
        // C_T = p/q, so 3/(d+2) + 1/(4 C_T) = 3/(d+2) + q/(4p), in integers.
        let (p, q) = (d + 2, 4 * (d - 1));
        let (num, den) = (3 * 4 * p + q * (d + 2), (d + 2) * 4 * p);
        assert_eq!(num, den);
        let c = transverse_constant(d as usize);
        assert!((3.0 / (d as f64 + 2.0) + 1.0 / (4.0 * c) - 1.0).abs() < 1e-15);
        assert_eq!(TensorKind::T.structure_constant(d as usize), d as f64 * c);
    }
}

#[test]
fn kernel_moments() {
    for d in [2, 3] {
        let df = d as f64;
        let rule = sphere_rule(d, 8).unwrap();
        let k = KernelSpec::special(0.6).unwrap();
        let Moment::Scalar(m) = kernel_moment(&k, d, MomentKind::Mass, &rule).unwrap() else {
            panic!("scalar expected")
        };
        assert!((m + 2.0 / (df + 2.0)).abs() <= 1e-8);

        let avg = sphere_tensor_average(TensorKind::L, &rule);
        for i in 0..d {
            for j in 0..d {
                let e = if i == j { 1.0 / df } else { 0.0 };
                assert!((avg[i][j] - e).abs() <= 1e-12);
            }
        }

        let c = KernelSpec::combined_l(0.6).unwrap();
        let Moment::Matrix(mm) = kernel_moment(&c, d, MomentKind::Mass, &rule).unwrap() else {
            panic!("matrix expected")
        };
        for i in 0..d {
            assert!((mm[i][i] - 3.0 / (df + 2.0)).abs() <= 1e-8);
        }

        let g = Grid::new(d, 16).unwrap();
        let value = [0.7, -1.3, 0.4];
        let u = Field::constant(g, &value[..d]);
        let v = combined_l_average(&u, 0.6).unwrap();
        for a in 0..d {
            for x in v.component(a) {
                assert!((x - 3.0 / (df + 2.0) * value[a]).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn combined_average_matches_real_space_quadrature() {
    // Oracle: Riemann sum of ∫ K(y) u(x − y) dy for a single Fourier mode,
    // with a fine radial grid and a dense angular rule.
    let g = Grid::new(2, 32).unwrap();
    let ell = 0.7;
    let k = [2.0, 1.0];
    let u = Field::from_fn(g, 2, |x, c| {
        let ph = (k[0] * x[0] + k[1] * x[1]).cos();
        if c == 0 { -k[1] * ph } else { k[0] * ph }
    });
    let out = combined_l_average(&u, ell).unwrap();
    let spec = KernelSpec::combined_l(ell).unwrap();
    let x0 = g.point(37);
    let nr = 400;
    let na = 256;
    let mut acc = [0.0; 2];
    for ir in 0..nr {
        let r = (ir as f64 + 0.5) * ell / nr as f64;
        for ia in 0..na {
            let th = 2.0 * std::f64::consts::PI * ia as f64 / na as f64;
            let y = [r * th.cos(), r * th.sin(), 0.0];
            let w = r * (ell / nr as f64) * (2.0 * std::f64::consts::PI / na as f64);
            let m = spec.matrix_value(2, &y);
            let ph = (k[0] * (x0[0] - y[0]) + k[1] * (x0[1] - y[1])).cos();
            let uv = [-k[1] * ph, k[0] * ph];
            for a in 0..2 {
                acc[a] += w * (m[a][0] * uv[0] + m[a][1] * uv[1]);
            }
        }
    }
    for a in 0..2 {
        assert!((acc[a] - out.component(a)[37]).abs() < 1e-4, "{a}: {} {}", acc[a], out.component(a)[37]);
    }
}

#[test]
fn combined_average_commutes_with_random_fields() {
    // Linear and translation invariant: averaging a shifted field equals
    // shifting the average.
    let g = Grid::new(2, 32).unwrap();
    let spec = RandomFieldSpec {
        seed: 4,
        slope: -2.0,
        k_min: 1.0,
        k_max: 8.0,
        energy: 1.0,
    };
    let u = random_solenoidal(&g, &spec).unwrap();
    let shift = [3.0 * g.spacing(), -5.0 * g.spacing()];
    let a = combined_l_average(&kflux::field::shift(&u, &shift).unwrap(), 0.5).unwrap();
    let b = kflux::field::shift(&combined_l_average(&u, 0.5).unwrap(), &shift).unwrap();
    let gap = kflux::field::max_norm(&Field::lincomb(1.0, &a, -1.0, &b).unwrap());
    assert!(gap < 1e-12, "{gap}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projectors_are_complementary_idempotents(
        y in prop::array::uniform3(-1.0f64..1.0),
        dim in 2usize..=3,
    ) {
        let y = if dim == 2 { [y[0], y[1], 0.0] } else { y };
        prop_assume!(y[0] * y[0] + y[1] * y[1] + y[2] * y[2] > 1e-4);
        let l = TensorKind::L.matrix(&y);
        let t = TensorKind::T.matrix(&y);
        prop_assert!(max_entry_gap(&matmul(&l, &l), &l) < 1e-14);
        prop_assert!(max_entry_gap(&matmul(&t, &t), &t) < 1e-14);
        let zero = [[0.0; 3]; 3];
        prop_assert!(max_entry_gap(&matmul(&l, &t), &zero) < 1e-14);
        let tr_l: f64 = (0..dim).map(|i| l[i][i]).sum();
        let tr_t: f64 = (0..dim).map(|i| t[i][i]).sum();
        prop_assert!((tr_l - 1.0).abs() < 1e-14);
        prop_assert!((tr_t - (dim as f64 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn norms_split_pythagorean(
        y in prop::array::uniform3(-1.0f64..1.0),
        v in prop::array::uniform3(-10.0f64..10.0),
    ) {
        prop_assume!(y[0] * y[0] + y[1] * y[1] + y[2] * y[2] > 1e-4);
        let y = unit(y, 3);
        let i = TensorKind::I.norm_sqr(&y, &v);
        let split = TensorKind::L.norm_sqr(&y, &v) + TensorKind::T.norm_sqr(&y, &v);
        prop_assert!((i - split).abs() <= 1e-14 * i.max(1.0));
        let lv = TensorKind::L.apply(&y, &v);
        let tv = TensorKind::T.apply(&y, &v);
        let dot = lv[0] * tv[0] + lv[1] * tv[1] + lv[2] * tv[2];
        prop_assert!(dot.abs() <= 1e-13 * i.max(1.0));
    }

    #[test]
    fn special_kernel_gradient_identity_holds(
        r in 0.01f64..0.99,
        th in 0.0f64..6.28,
        ph in 0.0f64..3.14,
        ell in 0.1f64..1.5,
    ) {
        for dim in [2, 3] {
            let y = if dim == 2 {
                [r * ell * th.cos(), r * ell * th.sin(), 0.0]
            } else {
                [r * ell * th.cos() * ph.sin(), r * ell * th.sin() * ph.sin(), r * ell * ph.cos()]
            };
            let k = KernelSpec::special(ell).unwrap();
            let gap = special_kernel_gradient_identity(&k, dim, &y).unwrap();
            let scale = 1.0 / (ell.powi(dim as i32) * r * ell);
            prop_assert!(gap <= 1e-10 * scale, "{gap}");
        }
    }

    #[test]
    fn mollifier_is_nonnegative_and_radial(
        rho in 0.0f64..2.5,
        gamma in 0.01f64..1.0,
        th in 0.0f64..6.28,
    ) {
        let k = KernelSpec::standard(0.5, gamma).unwrap();
        let r = rho * 0.5;
        let a = k.value(2, &[r, 0.0, 0.0]);
        let b = k.value(2, &[r * th.cos(), r * th.sin(), 0.0]);
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        if rho > 1.0 + gamma {
            prop_assert_eq!(a, 0.0);
        }
    }
}
