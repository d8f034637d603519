//! Multi-dimensional complex FFTs on [`Grid`]s.
//!
//! Forward transforms are normalized by `1/N` so that `cos x₁` has the
//! coefficients `1/2` at `k = (±1, 0)`. Plans are cached process-wide.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::grid::Grid;

type Plan = Arc<dyn Fft<f64>>;

fn plan(n: usize, direction: FftDirection) -> Plan {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    let key = (n, direction == FftDirection::Forward);
    if let Some(p) = guard.1.get(&key) {
        return p.clone();
    }
    let p = guard.0.plan_fft(n, direction);
    guard.1.insert(key, p.clone());
    p
}

/// Transform every axis of `data` in place. Lines along one axis are
/// independent, so the result does not depend on the thread count.
fn transform(grid: &Grid, data: &mut [Complex64], direction: FftDirection) {
    let n = grid.n();
    let d = grid.dim();
    assert_eq!(data.len(), grid.len());
    let fft = plan(n, direction);
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = n * stride;
        if stride == 1 {
            data.par_chunks_mut(block.max(n * 64)).for_each(|chunk| {
                let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(chunk, &mut scratch);
            });
        } else {
            data.par_chunks_mut(block).for_each(|chunk| {
                let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                let mut lines = vec![Complex64::default(); block];
                // transpose n × stride -> stride × n
                for i in 0..n {
                    for j in 0..stride {
                        lines[j * n + i] = chunk[i * stride + j];
                    }
                }
                fft.process_with_scratch(&mut lines, &mut scratch);
                for i in 0..n {
                    for j in 0..stride {
                        chunk[i * stride + j] = lines[j * n + i];
                    }
                }
            });
        }
    }
}

/// Forward transform with `1/N` normalization.
pub fn forward(grid: &Grid, data: &mut [Complex64]) {
    transform(grid, data, FftDirection::Forward);
    let scale = 1.0 / grid.len() as f64;
    data.par_iter_mut().for_each(|z| *z *= scale);
}

/// Unnormalized inverse transform (synthesis of the Fourier series).
pub fn inverse(grid: &Grid, data: &mut [Complex64]) {
    transform(grid, data, FftDirection::Inverse);
}

/// Spectra of two real arrays computed with one complex transform.
pub fn forward_real_pair(grid: &Grid, a: &[f64], b: Option<&[f64]>) -> (Vec<Complex64>, Option<Vec<Complex64>>) {
    let mut z: Vec<Complex64> = match b {
        Some(b) => a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect(),
        None => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
    };
    forward(grid, &mut z);
    if b.is_none() {
        return (z, None);
    }
    let mut za = vec![Complex64::default(); z.len()];
    let mut zb = vec![Complex64::default(); z.len()];
    za.par_iter_mut()
        .zip(zb.par_iter_mut())
        .enumerate()
        .for_each(|(i, (pa, pb))| {
            let zk = z[i];
            let zc = z[grid.conjugate_index(i)].conj();
            *pa = (zk + zc) * 0.5;
            *pb = (zk - zc) * Complex64::new(0.0, -0.5);
        });
    (za, Some(zb))
}

/// Real fields synthesized from two Hermitian spectra with one complex
/// transform. Imaginary round-off of a single spectrum is discarded.
pub fn inverse_real_pair(grid: &Grid, a: &[Complex64], b: Option<&[Complex64]>) -> (Vec<f64>, Option<Vec<f64>>) {
    let mut z: Vec<Complex64> = match b {
        Some(b) => a
            .iter()
            .zip(b)
            .map(|(&x, &y)| x + Complex64::new(-y.im, y.re))
            .collect(),
        None => a.to_vec(),
    };
    inverse(grid, &mut z);
    let re = z.iter().map(|c| c.re).collect();
    let im = b.map(|_| z.iter().map(|c| c.im).collect());
    (re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_has_two_half_modes() {
        let g = Grid::new(2, 32).unwrap();
        let a: Vec<f64> = (0..g.len()).map(|i| g.point(i)[0].cos()).collect();
        let (s, _) = forward_real_pair(&g, &a, None);
        for (i, c) in s.iter().enumerate() {
            let k = g.wavevector(i);
            let expect = if k[1] == 0 && k[0].abs() == 1 { 0.5 } else { 0.0 };
            assert!((c.re - expect).abs() < 1e-15 && c.im.abs() < 1e-15, "{k:?} {c}");
        }
    }

    #[test]
    fn pair_packing_round_trip_3d() {
        let g = Grid::new(3, 8).unwrap();
        let a: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.11).cos() + 0.2).collect();
        let (sa, sb) = forward_real_pair(&g, &a, Some(&b));
        let (sa1, _) = forward_real_pair(&g, &a, None);
        for (x, y) in sa.iter().zip(&sa1) {
            assert!((x - y).norm() < 1e-14);
        }
        let (ra, rb) = inverse_real_pair(&g, &sa, sb.as_deref());
        let rb = rb.unwrap();
        for i in 0..g.len() {
            assert!((ra[i] - a[i]).abs() < 1e-13);
            assert!((rb[i] - b[i]).abs() < 1e-13);
        }
    }
}
