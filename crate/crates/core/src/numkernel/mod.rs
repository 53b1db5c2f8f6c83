//! Dense linear-algebra substrate shared by every other module.
//!
//! Matrices are `nalgebra::DMatrix<f64>`; complex arithmetic only appears
//! inside [`SpectralData`] and is projected back to real results.

mod expm;
mod fractional;
mod lyapunov;
mod norms;
pub mod quadrature;
mod spectral;

pub use expm::{matrix_exponential_apply, ExpIntegrals, Propagator};
pub use fractional::fractional_power;
pub use lyapunov::solve_lyapunov;
pub use norms::{d_eps_norm, weighted_norm, weighted_norm_of_path, NormMode, WeightedNorm};
pub use quadrature::{quadrature, GradedRule, Rule, Samples};
pub use spectral::SpectralData;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Spectral (2-) norm.
pub fn norm2(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// ‖M − Mᵀ‖_max / max(1, ‖M‖_max).
pub fn asymmetry(m: &Matrix) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

/// max Re λ(A).
pub fn spectral_abscissa(a: &Matrix) -> f64 {
    if a.is_empty() {
        return f64::NEG_INFINITY;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Quadratic form (Mx, y).
pub fn bilinear(m: &Matrix, x: &Vector, y: &Vector) -> f64 {
    (m * x).dot(y)
}
