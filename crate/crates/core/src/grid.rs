//! Uniform periodic lattices on the torus `[0, 2π)^d`.
//!
//! Storage order is row-major with axis 0 slowest: the flat index of the
//! multi-index `(i_0, .., i_{d-1})` is `Σ_a i_a n^(d-1-a)`. Points and
//! wavevectors are carried as `[_; 3]` arrays; entries past `d` are zero.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible resolution for a user-facing grid.
pub const MIN_POINTS: usize = 8;

/// Periodic uniform grid with `n` points per axis in `d ∈ {2, 3}` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    /// A validated grid: `d ∈ {2,3}`, `n ≥ 8` and a power of two.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n < MIN_POINTS || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= {MIN_POINTS}, got {n}"
            )));
        }
        Ok(Grid { dim, n })
    }

    /// Product grid used internally for alias-free nonlinear terms. Only
    /// requires an even size.
    pub(crate) fn auxiliary(dim: usize, n: usize) -> Self {
        debug_assert!((2..=3).contains(&dim) && n >= 2 && n % 2 == 0);
        Grid { dim, n }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of lattice points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `h = 2π/n`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Volume of the torus, `(2π)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim as i32)
    }

    /// Integer wavenumber of axis index `i`, in `[-n/2, n/2)`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Axis index holding wavenumber `k` (taken modulo `n`).
    pub fn index_of_wavenumber(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.n / 2
    }

    /// Multi-index of a flat index.
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rem = flat;
        for a in (0..self.dim).rev() {
            idx[a] = rem % self.n;
            rem /= self.n;
        }
        idx
    }

    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, a| acc * self.n + idx[a])
    }

    /// Coordinates of lattice point `flat`.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = idx[a] as f64 * h;
        }
        x
    }

    /// Integer wavevector stored at flat spectral index `flat`.
    pub fn wavevector(&self, flat: usize) -> [i64; 3] {
        let idx = self.multi_index(flat);
        let mut k = [0i64; 3];
        for a in 0..self.dim {
            k[a] = self.wavenumber(idx[a]);
        }
        k
    }

    /// Wavevector used for first derivatives: Nyquist entries are zeroed so
    /// that odd derivatives of real fields stay real.
    pub fn derivative_wavevector(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let mut k = [0.0; 3];
        for a in 0..self.dim {
            if !self.is_nyquist(idx[a]) {
                k[a] = self.wavenumber(idx[a]) as f64;
            }
        }
        k
    }

    /// Flat index of the wavevector `-k` for the wavevector at `flat`.
    pub fn conjugate_index(&self, flat: usize) -> usize {
        let idx = self.multi_index(flat);
        let mut out = [0usize; 3];
        for a in 0..self.dim {
            out[a] = (self.n - idx[a]) % self.n;
        }
        self.flat_index(out)
    }

    /// Largest wavenumber retained by the 2/3 rule, `floor(n/3)`.
    pub fn two_thirds_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// The grid with `factor` times as many points per axis.
    pub(crate) fn refined(&self, factor_num: usize, factor_den: usize) -> Grid {
        Grid::auxiliary(self.dim, self.n * factor_num / factor_den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Grid::new(1, 16).is_err());
        assert!(Grid::new(4, 16).is_err());
        assert!(Grid::new(2, 4).is_err());
        assert!(Grid::new(2, 24).is_err());
        assert!(Grid::new(3, 8).is_ok());
    }

    #[test]
    fn wavenumbers_span_half_open_range() {
        let g = Grid::new(2, 8).unwrap();
        let ks: Vec<i64> = (0..8).map(|i| g.wavenumber(i)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        for k in -4..4 {
            assert_eq!(g.wavenumber(g.index_of_wavenumber(k)), k);
        }
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new(3, 8).unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.flat_index(g.multi_index(flat)), flat);
            let k = g.wavevector(flat);
            let c = g.wavevector(g.conjugate_index(flat));
            for a in 0..3 {
                if k[a] != -4 {
                    assert_eq!(c[a], -k[a]);
                }
            }
        }
    }
}
