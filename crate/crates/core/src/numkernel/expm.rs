use nalgebra::Complex;

use super::{ensure_finite, ensure_square, Matrix, SpectralData};
use crate::error::{Error, Result};
use crate::tolerances::SPECTRAL_EXPM_COND_MAX;

/// Returns `e^{At} X`.
///
/// Diagonalizable, well-conditioned generators go through their
/// eigendecomposition; everything else through Padé scaling-and-squaring.
pub fn matrix_exponential_apply(a: &Matrix, t: f64, x: &Matrix) -> Result<Matrix> {
    ensure_finite(x, "X")?;
    if x.nrows() != a.nrows() {
        return Err(Error::Dimension(format!(
            "X has {} rows, A is {}x{}",
            x.nrows(),
            a.nrows(),
            a.ncols()
        )));
    }
    let prop = Propagator::new(a)?;
    Ok(prop.exp(t)? * x)
}

/// Cached semigroup evaluator for a fixed generator.
#[derive(Debug, Clone)]
pub struct Propagator {
    a: Matrix,
    spectral: Option<SpectralData>,
}

impl Propagator {
    pub fn new(a: &Matrix) -> Result<Self> {
        ensure_square(a, "A")?;
        ensure_finite(a, "A")?;
        let spectral = SpectralData::new(a)
            .ok()
            .filter(|s| s.condition_number() <= SPECTRAL_EXPM_COND_MAX);
        Ok(Self {
            a: a.clone(),
            spectral,
        })
    }

    pub fn generator(&self) -> &Matrix {
        &self.a
    }

    pub fn spectral(&self) -> Option<&SpectralData> {
        self.spectral.as_ref()
    }

    /// `e^{At}`.
    pub fn exp(&self, t: f64) -> Result<Matrix> {
        if t.is_nan() {
            return Err(Error::NonFinite("t"));
        }
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.exp_unchecked(t))
    }

    /// `e^{At}` for any real `t`, no sign check. Used for the adjoint flow
    /// and for short backward steps inside the solvers.
    pub(crate) fn exp_unchecked(&self, t: f64) -> Matrix {
        let n = self.a.nrows();
        if t == 0.0 || n == 0 {
            return Matrix::identity(n, n);
        }
        match &self.spectral {
            Some(s) => s.apply_function(|z: Complex<f64>| (z * t).exp()),
            None => (&self.a * t).exp(),
        }
    }

    /// `e^{Aᵀt}`.
    pub fn exp_adjoint(&self, t: f64) -> Result<Matrix> {
        Ok(self.exp(t)?.transpose())
    }
}

/// `e^{Aτ}` together with the two convolution integrals needed to push a
/// linearly varying input through one step exactly:
///
/// `∫₀^τ e^{A(τ−σ)} (u₀ + σ s) dσ = int1 · u₀ + int2 · s`.
#[derive(Debug, Clone)]
pub struct ExpIntegrals {
    pub tau: f64,
    pub exp: Matrix,
    pub int1: Matrix,
    pub int2: Matrix,
}

impl ExpIntegrals {
    pub fn new(a: &Matrix, tau: f64) -> Result<Self> {
        ensure_square(a, "A")?;
        if tau < 0.0 {
            return Err(Error::NegativeTime(tau));
        }
        let n = a.nrows();
        let mut big = Matrix::zeros(3 * n, 3 * n);
        big.view_mut((0, 0), (n, n)).copy_from(&(a * tau));
        for i in 0..n {
            big[(i, n + i)] = tau;
            big[(n + i, 2 * n + i)] = tau;
        }
        let e = big.exp();
        Ok(Self {
            tau,
            exp: e.view((0, 0), (n, n)).into_owned(),
            int1: e.view((0, n), (n, n)).into_owned(),
            int2: e.view((0, 2 * n), (n, n)).into_owned(),
        })
    }
}
