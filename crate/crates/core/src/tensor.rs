//! Projection tensors `T_I = I`, `T_L = ŷŷᵀ`, `T_T = I − ŷŷᵀ` and the
//! normalization constants attached to each projection.

use serde::{Deserialize, Serialize};

/// Which part of a velocity increment is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TensorKind {
    /// Full increment.
    I,
    /// Longitudinal part, along the separation.
    L,
    /// Transverse part, orthogonal to the separation.
    T,
}

impl TensorKind {
    pub const ALL: [TensorKind; 3] = [TensorKind::I, TensorKind::L, TensorKind::T];

    pub fn name(self) -> &'static str {
        match self {
            TensorKind::I => "I",
            TensorKind::L => "L",
            TensorKind::T => "T",
        }
    }

    /// `T(y) v` for a unit vector `y`.
    pub fn apply(self, y: &[f64; 3], v: &[f64; 3]) -> [f64; 3] {
        match self {
            TensorKind::I => *v,
            TensorKind::L => {
                let s = dot(y, v);
                [s * y[0], s * y[1], s * y[2]]
            }
            TensorKind::T => {
                let s = dot(y, v);
                [v[0] - s * y[0], v[1] - s * y[1], v[2] - s * y[2]]
            }
        }
    }

    /// `|T(y) v|²` for a unit vector `y`.
    pub fn norm_sqr(self, y: &[f64; 3], v: &[f64; 3]) -> f64 {
        match self {
            TensorKind::I => dot(v, v),
            TensorKind::L => {
                let s = dot(y, v);
                s * s
            }
            TensorKind::T => {
                let s = dot(y, v);
                dot(v, v) - s * s
            }
        }
    }

    /// The matrix `T(y)` for a nonzero (not necessarily unit) `y`.
    pub fn matrix(self, y: &[f64; 3]) -> [[f64; 3]; 3] {
        let r2 = dot(y, y);
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                let l = y[i] * y[j] / r2;
                m[i][j] = match self {
                    TensorKind::I => id,
                    TensorKind::L => l,
                    TensorKind::T => id - l,
                };
            }
        }
        m
    }

    /// Constant multiplying the structure function `S_•`:
    /// `d/4`, `d(d+2)/12`, `d(d+2)/(4(d−1))`.
    pub fn structure_constant(self, d: usize) -> f64 {
        let d = d as f64;
        match self {
            TensorKind::I => d / 4.0,
            TensorKind::L => d * (d + 2.0) / 12.0,
            TensorKind::T => d * (d + 2.0) / (4.0 * (d - 1.0)),
        }
    }

    /// Coefficient in the decomposition identity, the reciprocal of
    /// [`structure_constant`](Self::structure_constant): `4/d`, `12/(d(d+2))`,
    /// `4(d−1)/(d(d+2))`.
    pub fn identity_coefficient(self, d: usize) -> f64 {
        1.0 / self.structure_constant(d)
    }
}

impl std::fmt::Display for TensorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TensorKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "I" | "i" => Ok(TensorKind::I),
            "L" | "l" => Ok(TensorKind::L),
            "T" | "t" => Ok(TensorKind::T),
            other => Err(crate::Error::InvalidArgument(format!("unknown projection {other:?}"))),
        }
    }
}

/// The transverse constant `C_T = (d+2)/(4(d−1))`.
pub fn transverse_constant(d: usize) -> f64 {
    (d as f64 + 2.0) / (4.0 * (d as f64 - 1.0))
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
