use nalgebra::Complex;

use super::{Matrix, SpectralData};
use crate::error::{Error, Result};
use crate::tolerances::EIGENBASIS_COND_MAX;

/// `(−A)^α` for a stable diagonalizable `A`, principal branch.
pub fn fractional_power(a: &Matrix, alpha: f64) -> Result<Matrix> {
    let spectral = SpectralData::new(a)?;
    fractional_power_from(&spectral, alpha)
}

pub(crate) fn fractional_power_from(spectral: &SpectralData, alpha: f64) -> Result<Matrix> {
    if !alpha.is_finite() || alpha <= -1.0 || alpha >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "fractional exponent {alpha} outside (-1, 1)"
        )));
    }
    let abscissa = spectral.abscissa();
    if spectral.dim() > 0 && abscissa >= 0.0 {
        return Err(Error::Unstable { abscissa });
    }
    if spectral.condition_number() > EIGENBASIS_COND_MAX {
        return Err(Error::IllConditioned {
            cond: spectral.condition_number(),
        });
    }
    if alpha == 0.0 {
        let n = spectral.dim();
        return Ok(Matrix::identity(n, n));
    }
    Ok(spectral.apply_function(|z: Complex<f64>| (-z).powf(alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_square_root() {
        let r = fractional_power(&dmatrix![-4.0], 0.5).unwrap();
        assert!((r[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_square_root() {
        let r = fractional_power(&dmatrix![-1.0, 0.0; 0.0, -9.0], 0.5).unwrap();
        assert!((r - dmatrix![1.0, 0.0; 0.0, 3.0]).amax() < 1e-14);
    }

    #[test]
    fn inverse_pair() {
        let a = dmatrix![-2.0, 1.0; -0.5, -3.0];
        let p = fractional_power(&a, 0.3).unwrap();
        let q = fractional_power(&a, -0.3).unwrap();
        assert!((p * q - Matrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn rejects_unstable_and_bad_exponent() {
        assert!(matches!(
            fractional_power(&dmatrix![1.0], 0.5),
            Err(Error::Unstable { .. })
        ));
        assert!(fractional_power(&dmatrix![-1.0], 1.0).is_err());
    }
}
