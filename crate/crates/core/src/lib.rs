//! Kolmogorov-law diagnostics for periodic velocity fields.

pub mod balance;
pub mod error;
pub mod fft;
pub mod field;
pub mod fld;
pub mod flux;
pub mod grid;
pub mod kernel;
pub mod quadrature;
pub mod solver;
pub mod sphere;
pub mod sum;
pub mod tensor;

pub use error::{Error, Result};
pub use field::{Field, Spectrum};
pub use grid::Grid;
pub use kernel::KernelSpec;
pub use sphere::SphereRule;
pub use tensor::TensorKind;
