//! Third-order structure functions `S_•(t, ℓ)`, local dissipation fields
//! `D_{•,ℓ,γ}`, and the combined longitudinal average.
//!
//! Increments `δu = u(x + rσ) − u(x)` are formed for every sphere node with
//! exact spectral shifts, so off-lattice separations carry no interpolation
//! error. Nodes are processed in fixed batches and reduced in node order,
//! which makes every result independent of the thread count.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{inverse_many, phase_symbol, Field, Spectrum};
use crate::grid::Grid;
use crate::kernel::{combined_l_symbol, radial_table, KernelKind, KernelSpec};
use crate::sphere::SphereRule;
use crate::sum;
use crate::tensor::{dot, TensorKind};

const NODE_BATCH: usize = 8;

fn check_scale(ell: f64) -> Result<()> {
    if !(ell > 0.0 && ell <= PI / 2.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("scale ℓ = {ell} outside (0, π/2]")));
    }
    Ok(())
}

fn check_velocity(u: &Field, rule: &SphereRule) -> Result<()> {
    let d = u.grid().dim();
    if u.ncomp() != d {
        return Err(Error::InvalidArgument(format!(
            "expected a {d}-component velocity, got {} components",
            u.ncomp()
        )));
    }
    if rule.dim() != d {
        return Err(Error::InvalidArgument(format!(
            "sphere rule is for d={}, field has d={d}",
            rule.dim()
        )));
    }
    Ok(())
}

/// Increments `u(x + rσ) − u(x)` for one node.
fn increment(u: &Field, spec: &Spectrum, y: &[f64; 3]) -> Vec<Vec<f64>> {
    let sym = phase_symbol(u.grid(), y);
    let shifted: Vec<Vec<Complex64>> = spec
        .components()
        .iter()
        .map(|c| c.iter().zip(&sym).map(|(a, b)| a * b).collect())
        .collect();
    let refs: Vec<&[Complex64]> = shifted.iter().map(|c| c.as_slice()).collect();
    let mut out = inverse_many(u.grid(), &refs);
    for (o, base) in out.iter_mut().zip(u.components()) {
        for (v, b) in o.iter_mut().zip(base) {
            *v -= b;
        }
    }
    out
}

/// Maps every node of `rule` at radius `r` through `map(σ, δu)` and folds
/// the results in node order with `fold(acc, weight, result)`.
fn fold_nodes<R, A, M, F>(u: &Field, r: f64, rule: &SphereRule, mut acc: A, map: M, mut fold: F) -> A
where
    R: Send,
    M: Fn(&[f64; 3], &[Vec<f64>]) -> R + Sync,
    F: FnMut(&mut A, f64, R),
{
    let spec = u.spectrum();
    let nodes = rule.nodes();
    let weights = rule.weights();
    for start in (0..nodes.len()).step_by(NODE_BATCH) {
        let end = (start + NODE_BATCH).min(nodes.len());
        let results: Vec<R> = (start..end)
            .into_par_iter()
            .map(|m| {
                let s = nodes[m];
                let du = increment(u, &spec, &[r * s[0], r * s[1], r * s[2]]);
                map(&s, &du)
            })
            .collect();
        for (m, res) in (start..end).zip(results) {
            fold(&mut acc, weights[m], res);
        }
    }
    acc
}

/// Pointwise `(σ·δu)|T_• δu|²` for `I`, `L`, `T` and the scale `|σ·δu| |δu|²`.
#[inline]
fn integrands(d: usize, s: &[f64; 3], du: &[Vec<f64>], i: usize) -> [f64; 4] {
    let mut v = [0.0; 3];
    for a in 0..d {
        v[a] = du[a][i];
    }
    let long = dot(s, &v);
    let q = dot(&v, &v);
    let t = TensorKind::T.apply(s, &v);
    let tq = dot(&t, &t);
    [long * q, long * long * long, long * tq, long.abs() * q]
}

/// Space-and-sphere means `J_• = mean_x Σ_k w_k (σ_k·δu)|T_• δu|²` of the
/// raw third-order integrands, with the absolute scale
/// `mean_x Σ_k w_k |σ_k·δu| |δu|²` used to normalize residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementMoments {
    pub i: f64,
    pub l: f64,
    pub t: f64,
    pub scale: f64,
}

impl IncrementMoments {
    pub fn get(&self, kind: TensorKind) -> f64 {
        match kind {
            TensorKind::I => self.i,
            TensorKind::L => self.l,
            TensorKind::T => self.t,
        }
    }
}

/// Raw increment moments at scale `ell` for one velocity field.
pub fn increment_moments(u: &Field, ell: f64, rule: &SphereRule) -> Result<IncrementMoments> {
    check_scale(ell)?;
    check_velocity(u, rule)?;
    let d = u.grid().dim();
    let n = u.grid().len();
    let acc = fold_nodes(
        u,
        ell,
        rule,
        [Vec::new(), Vec::new(), Vec::new(), Vec::new()],
        |s, du| {
            let mut out = [0.0; 4];
            for (p, o) in out.iter_mut().enumerate() {
                *o = sum::par_mean(n, |i| integrands(d, s, du, i)[p]);
            }
            out
        },
        |acc: &mut [Vec<f64>; 4], w, r| {
            for p in 0..4 {
                acc[p].push(w * r[p]);
            }
        },
    );
    Ok(IncrementMoments {
        i: sum::pairwise(&acc[0]),
        l: sum::pairwise(&acc[1]),
        t: sum::pairwise(&acc[2]),
        scale: sum::pairwise(&acc[3]),
    })
}

/// `S_•(t, ℓ) = C_• ∫_{T^d} ⨍ (σ·δu)|T_• δu|² dσ dx` with the constants
/// `d/4`, `d(d+2)/12`, `d(d+2)/(4(d−1))`.
pub fn structure_function(u: &Field, projection: TensorKind, ell: f64, rule: &SphereRule) -> Result<f64> {
    let m = increment_moments(u, ell, rule)?;
    Ok(from_moment(u.grid(), projection, m.get(projection)))
}

/// All three structure functions from one increment sweep.
pub fn structure_functions(u: &Field, ell: f64, rule: &SphereRule) -> Result<[f64; 3]> {
    let m = increment_moments(u, ell, rule)?;
    Ok(TensorKind::ALL.map(|k| from_moment(u.grid(), k, m.get(k))))
}

fn from_moment(grid: &Grid, kind: TensorKind, j: f64) -> f64 {
    kind.structure_constant(grid.dim()) * grid.volume() * j
}

/// Outcome of the decomposition identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    /// `(4/d) S_I`.
    pub lhs: f64,
    /// `(12/(d(d+2))) S_L + (4(d−1)/(d(d+2))) S_T`.
    pub rhs: f64,
    /// `|lhs − rhs|` divided by the absolute scale `(2π)^d mean Σ w |σ·δu||δu|²`.
    pub residual: f64,
    pub scale: f64,
}

/// Checks `(4/d)S_I = (12/(d(d+2)))S_L + (4(d−1)/(d(d+2)))S_T`. The
/// residual is relative to the accumulated magnitude of the integrand, since
/// `S_I` itself may vanish (e.g. for Taylor–Green).
pub fn decomposition_identity(u: &Field, ell: f64, rule: &SphereRule) -> Result<DecompositionCheck> {
    let d = u.grid().dim();
    let m = increment_moments(u, ell, rule)?;
    let vol = u.grid().volume();
    let s = TensorKind::ALL.map(|k| from_moment(u.grid(), k, m.get(k)));
    let lhs = TensorKind::I.identity_coefficient(d) * s[0];
    let rhs = TensorKind::L.identity_coefficient(d) * s[1] + TensorKind::T.identity_coefficient(d) * s[2];
    let scale = vol * m.scale;
    let residual = if scale > 0.0 { (lhs - rhs).abs() / scale } else { (lhs - rhs).abs() };
    Ok(DecompositionCheck {
        lhs,
        rhs,
        residual,
        scale,
    })
}

/// The identity evaluated with one rule per projection; the rules must agree.
pub fn decomposition_identity_with(u: &Field, ell: f64, rules: [&SphereRule; 3]) -> Result<DecompositionCheck> {
    if rules[0] != rules[1] || rules[0] != rules[2] {
        return Err(Error::InvalidArgument(
            "decomposition identity needs the same sphere rule for I, L and T".into(),
        ));
    }
    decomposition_identity(u, ell, rules[0])
}

/// Local dissipation field `D_{•,ℓ,γ}(x)`; nonnegative values dissipate.
#[derive(Debug, Clone)]
pub struct FluxField {
    pub projection: TensorKind,
    pub ell: f64,
    /// Mollifier width; 0 for the sharp sphere form.
    pub gamma: f64,
    pub values: Field,
}

impl FluxField {
    /// `∫_{T^d} D dx`.
    pub fn integral(&self) -> f64 {
        let g = self.values.grid();
        let v = self.values.component(0);
        g.volume() * sum::par_mean(g.len(), |i| v[i])
    }

    /// `max_x |D|`.
    pub fn max_abs(&self) -> f64 {
        crate::field::max_norm(&self.values)
    }

    /// `∫ |D| dx`.
    pub fn l1(&self) -> f64 {
        let g = self.values.grid();
        let v = self.values.component(0);
        g.volume() * sum::par_mean(g.len(), |i| v[i].abs())
    }

    pub fn write_fld(&self, path: &Path) -> Result<()> {
        crate::fld::write(path, &self.values, 0.0)
    }
}

/// Sharp-sphere fields `D_{•,ℓ,0}(x) = −(C_•/ℓ) ⨍ (σ·δu)|T_• δu|² dσ` for
/// `I`, `L`, `T` from one increment sweep.
pub fn flux_fields_sphere(u: &Field, ell: f64, rule: &SphereRule) -> Result<[FluxField; 3]> {
    check_scale(ell)?;
    check_velocity(u, rule)?;
    let d = u.grid().dim();
    let n = u.grid().len();
    let acc = fold_nodes(
        u,
        ell,
        rule,
        vec![vec![0.0; n]; 3],
        |s, du| {
            let mut out = vec![vec![0.0; n]; 3];
            for i in 0..n {
                let v = integrands(d, s, du, i);
                out[0][i] = v[0];
                out[1][i] = v[1];
                out[2][i] = v[2];
            }
            out
        },
        |acc: &mut Vec<Vec<f64>>, w, r| {
            for p in 0..3 {
                for (a, b) in acc[p].iter_mut().zip(&r[p]) {
                    *a += w * b;
                }
            }
        },
    );
    let mut it = acc.into_iter();
    Ok(TensorKind::ALL.map(|kind| {
        let c = -kind.structure_constant(d) / ell;
        let vals: Vec<f64> = it.next().unwrap().into_iter().map(|v| c * v).collect();
        FluxField {
            projection: kind,
            ell,
            gamma: 0.0,
            values: Field::from_parts(*u.grid(), u.time(), vec![vals]),
        }
    }))
}

/// Sharp-sphere field for one projection.
pub fn flux_field_sphere(u: &Field, projection: TensorKind, ell: f64, rule: &SphereRule) -> Result<FluxField> {
    let [i, l, t] = flux_fields_sphere(u, ell, rule)?;
    Ok(match projection {
        TensorKind::I => i,
        TensorKind::L => l,
        TensorKind::T => t,
    })
}

/// Mollified field `D_{I,ℓ,γ} = ¼ ∫ ∂_jφ_{ℓ,γ}(y) δu^j |δu|² dy`, evaluated
/// as `Σ_q c_q (−d/(4 r_q)) ⨍ (σ·δu)|δu|²(r_q σ) dσ` over the ball
/// superposition of the kernel.
pub fn flux_field_mollified(u: &Field, kernel: &KernelSpec, rule: &SphereRule) -> Result<FluxField> {
    check_velocity(u, rule)?;
    if kernel.kind != KernelKind::Standard {
        return Err(Error::InvalidArgument("mollified flux needs the standard kernel".into()));
    }
    if kernel.gamma == 0.0 {
        return Err(Error::InvalidArgument(
            "γ = 0 is the sharp-sphere form; use flux_field_sphere".into(),
        ));
    }
    let d = u.grid().dim();
    let n = u.grid().len();
    let mut total = vec![0.0; n];
    for (r, c) in kernel.ball_superposition(d) {
        let acc = fold_nodes(
            u,
            r,
            rule,
            vec![0.0; n],
            |s, du| (0..n).map(|i| integrands(d, s, du, i)[0]).collect::<Vec<f64>>(),
            |acc: &mut Vec<f64>, w, v| {
                for (a, b) in acc.iter_mut().zip(&v) {
                    *a += w * b;
                }
            },
        );
        let coef = -c * d as f64 / (4.0 * r);
        for (t, a) in total.iter_mut().zip(&acc) {
            *t += coef * a;
        }
    }
    Ok(FluxField {
        projection: TensorKind::I,
        ell: kernel.ell,
        gamma: kernel.gamma,
        values: Field::from_parts(*u.grid(), u.time(), vec![total]),
    })
}

/// `(A, B)` symbol tables of the combined longitudinal kernel on `grid`.
pub(crate) fn combined_l_tables(grid: &Grid, ell: f64) -> Vec<(f64, f64)> {
    let d = grid.dim();
    radial_table(grid, |kappa| combined_l_symbol(d, ell, kappa))
}

/// Applies `M(k) = A k̂k̂ᵀ + B (I − k̂k̂ᵀ)` to a vector spectrum.
pub(crate) fn apply_matrix_symbol(s: &Spectrum, table: &[(f64, f64)]) -> Spectrum {
    let g = *s.grid();
    let d = g.dim();
    let mut modes = vec![vec![Complex64::default(); g.len()]; d];
    for i in 0..g.len() {
        let (a, b) = table[i];
        let k = g.derivative_wavevector(i);
        let k2: f64 = k.iter().map(|v| v * v).sum();
        let mut proj = Complex64::default();
        if k2 > 0.0 {
            for c in 0..d {
                proj += s.component(c)[i] * k[c];
            }
            proj /= k2;
        }
        for c in 0..d {
            modes[c][i] = s.component(c)[i] * b + proj * k[c] * (a - b);
        }
    }
    Spectrum::from_modes(g, s.time(), modes).expect("shape preserved")
}

/// `u_{L,ℓ} = ∫ (|B_ℓ|^{-1} 1_{B_ℓ} T_L − ov φ_ℓ T_T)(y) u(x+y) dy`.
/// Constant fields map to `(3/(d+2)) c`.
pub fn combined_l_average(u: &Field, ell: f64) -> Result<Field> {
    check_scale(ell)?;
    let d = u.grid().dim();
    if u.ncomp() != d {
        return Err(Error::InvalidArgument("combined average needs a vector field".into()));
    }
    let table = combined_l_tables(u.grid(), ell);
    Ok(apply_matrix_symbol(&u.spectrum(), &table).to_field())
}

/// `p_{L,ℓ}`: the scalar potential companion of the combined kernel, with
/// symbol `A(|k|)`, so that `K ∗ ∇p = ∇ p_{L,ℓ}`.
pub fn combined_l_scalar(p: &Field, ell: f64) -> Result<Field> {
    check_scale(ell)?;
    if p.ncomp() != 1 {
        return Err(Error::InvalidArgument("expected a scalar field".into()));
    }
    let table = combined_l_tables(p.grid(), ell);
    let a: Vec<f64> = table.iter().map(|t| t.0).collect();
    Ok(p.spectrum().apply_real(&a).to_field())
}

/// Metadata attached to a [`StructureTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub dim: usize,
    pub n: usize,
    pub rule: String,
    pub constant: f64,
    /// Sign convention of the stored values.
    pub sign: String,
}

/// `S_•(t, ℓ)` over a time × scale lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureTable {
    pub projection: TensorKind,
    pub times: Vec<f64>,
    pub scales: Vec<f64>,
    /// `values[t][ℓ]`.
    pub values: Vec<Vec<f64>>,
    pub metadata: TableMetadata,
}

/// Sphere rule used at one scale.
pub type RuleForScale<'a> = dyn Fn(f64) -> Result<SphereRule> + Sync + 'a;

impl StructureTable {
    /// Tables for `I`, `L`, `T` over `snapshots × scales`. Scales must be
    /// strictly increasing.
    pub fn build_all(snapshots: &[Field], scales: &[f64], rule_for: &RuleForScale) -> Result<[StructureTable; 3]> {
        if snapshots.is_empty() {
            return Err(Error::InvalidArgument("no snapshots".into()));
        }
        if scales.is_empty() || scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("scales must be nonempty and strictly increasing".into()));
        }
        let g = *snapshots[0].grid();
        let rules = scales.iter().map(|&l| rule_for(l)).collect::<Result<Vec<_>>>()?;
        let mut vals = vec![vec![[0.0; 3]; scales.len()]; snapshots.len()];
        for (ti, u) in snapshots.iter().enumerate() {
            if *u.grid() != g {
                return Err(Error::GridMismatch("snapshots live on different grids".into()));
            }
            for (li, (&ell, rule)) in scales.iter().zip(&rules).enumerate() {
                vals[ti][li] = structure_functions(u, ell, rule)?;
            }
        }
        let rule_desc = format!("{:?}, {} nodes, exactness {}", rules[0].kind(), rules[0].len(), rules[0].exactness());
        Ok(TensorKind::ALL.map(|kind| {
            let p = kind as usize;
            StructureTable {
                projection: kind,
                times: snapshots.iter().map(|s| s.time()).collect(),
                scales: scales.to_vec(),
                values: vals.iter().map(|row| row.iter().map(|v| v[p]).collect()).collect(),
                metadata: TableMetadata {
                    dim: g.dim(),
                    n: g.n(),
                    rule: rule_desc.clone(),
                    constant: kind.structure_constant(g.dim()),
                    sign: "S as defined; negative for a forward cascade".into(),
                },
            }
        }))
    }

    /// RFC-4180 CSV with columns `t, ell, projection, value`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "ell", "projection", "value"])?;
        for (t, row) in self.times.iter().zip(&self.values) {
            for (ell, v) in self.scales.iter().zip(row) {
                wr.write_record([
                    format!("{t:.17e}"),
                    format!("{ell:.17e}"),
                    self.projection.name().to_string(),
                    format!("{v:.17e}"),
                ])?;
            }
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Convergence record of the γ-smeared radial average towards the sharp
/// sphere average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereLimitRecord {
    pub ell: f64,
    pub gammas: Vec<f64>,
    /// `max_x |I_{ℓ,γ} f − f̃_ℓ|` per γ.
    pub gaps: Vec<f64>,
    /// Whether the gaps are nonincreasing within `1e-10` slack.
    pub monotone: bool,
}

/// Compares `I_{ℓ,γ} f = Σ_q c_q f̃_{r_q}` (the sphere averages weighted by
/// the mollifier's radial derivative) with the sharp average `f̃_ℓ`, using
/// exact sphere symbols.
pub fn mollifier_to_sphere_limit(f: &Field, ell: f64, gammas: &[f64]) -> Result<SphereLimitRecord> {
    check_scale(ell)?;
    if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
        return Err(Error::InvalidArgument("widths must lie in (0, 1]".into()));
    }
    if gammas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("widths must decrease".into()));
    }
    let g = *f.grid();
    let d = g.dim();
    let spec = f.spectrum();
    let sharp = radial_table(&g, |kappa| crate::sphere::sphere_symbol(d, kappa * ell));
    let mut gaps = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let k = KernelSpec::standard(ell, gamma)?;
        let parts = k.ball_superposition(d);
        let smooth = radial_table(&g, |kappa| {
            parts
                .iter()
                .map(|(r, c)| c * crate::sphere::sphere_symbol(d, kappa * r))
                .sum::<f64>()
        });
        let diff: Vec<f64> = smooth.iter().zip(&sharp).map(|(a, b)| a - b).collect();
        let field = spec.apply_real(&diff).to_field();
        gaps.push(crate::field::max_norm(&field));
    }
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-10);
    Ok(SphereLimitRecord {
        ell,
        gammas: gammas.to_vec(),
        gaps,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::sphere_rule;

    fn tg(g: Grid) -> Field {
        Field::from_fn(g, 2, |x, c| {
            if c == 0 {
                x[0].sin() * x[1].cos()
            } else {
                -x[0].cos() * x[1].sin()
            }
        })
    }

    #[test]
    fn constant_field_has_no_flux() {
        let g = Grid::new(2, 16).unwrap();
        let u = Field::constant(g, &[0.3, -1.0]);
        let rule = sphere_rule(2, 16).unwrap();
        for s in structure_functions(&u, 0.5, &rule).unwrap() {
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn taylor_green_identity_and_mean() {
        let g = Grid::new(2, 32).unwrap();
        let u = tg(g);
        let rule = sphere_rule(2, 40).unwrap();
        let c = decomposition_identity(&u, PI / 8.0, &rule).unwrap();
        assert!(c.residual < 1e-12);
        let s = structure_function(&u, TensorKind::I, PI / 8.0, &rule).unwrap();
        let dfield = flux_field_sphere(&u, TensorKind::I, PI / 8.0, &rule).unwrap();
        assert!((dfield.integral() + s / (PI / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn combined_average_of_constant() {
        let g = Grid::new(3, 8).unwrap();
        let u = Field::constant(g, &[1.0, 0.0, 0.0]);
        let v = combined_l_average(&u, 0.5).unwrap();
        assert!((v.component(0)[7] - 0.6).abs() < 1e-12);
        assert!(v.component(1)[3].abs() < 1e-14);
    }
}
