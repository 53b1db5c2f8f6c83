use nalgebra::{Complex, DMatrix};

use super::{ensure_finite, ensure_square, norm2, Matrix};
use crate::error::{Error, Result};
use crate::tolerances::{EIGEN_CLUSTER, SPECTRAL_RECONSTRUCTION};

type C64 = Complex<f64>;
type CMatrix = DMatrix<C64>;

/// Eigendecomposition `A = V diag(λ) V⁻¹` of a diagonalizable real matrix.
#[derive(Debug, Clone)]
pub struct SpectralData {
    eigenvalues: Vec<C64>,
    basis: CMatrix,
    inverse: CMatrix,
    cond: f64,
}

impl SpectralData {
    /// Decompose `a`. Symmetric inputs go through the symmetric solver and
    /// get an orthogonal basis; everything else gets eigenvectors from the
    /// null spaces of `A − λI`, one cluster of (numerically) equal
    /// eigenvalues at a time.
    pub fn new(a: &Matrix) -> Result<Self> {
        ensure_square(a, "A")?;
        ensure_finite(a, "A")?;
        let n = a.nrows();
        if n == 0 {
            return Ok(Self {
                eigenvalues: vec![],
                basis: CMatrix::zeros(0, 0),
                inverse: CMatrix::zeros(0, 0),
                cond: 1.0,
            });
        }
        let scale = a.amax().max(f64::MIN_POSITIVE);
        let data = if (a - a.transpose()).amax() <= 1e-14 * scale {
            Self::symmetric(a)
        } else {
            Self::general(a)?
        };
        let err = (data.reconstruct() - a).amax();
        if !(err <= SPECTRAL_RECONSTRUCTION * norm2(a).max(f64::MIN_POSITIVE)) {
            return Err(Error::IllConditioned { cond: data.cond.max(1.0 / f64::EPSILON) });
        }
        Ok(data)
    }

    fn symmetric(a: &Matrix) -> Self {
        let eig = super::symmetrize(a).symmetric_eigen();
        let basis = eig.eigenvectors.map(|v| C64::new(v, 0.0));
        let inverse = basis.transpose();
        Self {
            eigenvalues: eig.eigenvalues.iter().map(|&l| C64::new(l, 0.0)).collect(),
            basis,
            inverse,
            cond: 1.0,
        }
    }

    fn general(a: &Matrix) -> Result<Self> {
        let n = a.nrows();
        let lambdas: Vec<C64> = a.complex_eigenvalues().iter().copied().collect();
        let radius = lambdas.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let ac = a.map(|v| C64::new(v, 0.0));

        // cluster eigenvalues that coincide to working precision
        let mut assigned = vec![false; n];
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            if assigned[i] {
                continue;
            }
            let mut members = vec![i];
            assigned[i] = true;
            for j in (i + 1)..n {
                if !assigned[j] && (lambdas[i] - lambdas[j]).norm() <= EIGEN_CLUSTER * radius {
                    members.push(j);
                    assigned[j] = true;
                }
            }
            clusters.push(members);
        }

        let mut eigenvalues = Vec::with_capacity(n);
        let mut basis = CMatrix::zeros(n, n);
        let mut col = 0;
        for members in clusters {
            let k = members.len();
            let mean = members.iter().map(|&i| lambdas[i]).sum::<C64>() / k as f64;
            let shifted = &ac - CMatrix::identity(n, n) * mean;
            let svd = shifted.svd(false, true);
            let v_t = svd.v_t.ok_or(Error::Singular("eigenvector SVD"))?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
            for (slot, &idx) in order.iter().take(k).enumerate() {
                let v = v_t.row(idx).adjoint();
                let v = &v / C64::new(v.norm(), 0.0);
                basis.set_column(col, &v);
                eigenvalues.push(lambdas[members[slot]]);
                col += 1;
            }
        }

        let svals = basis.clone().singular_values();
        let smin = svals.min();
        let cond = if smin > 0.0 { svals.max() / smin } else { f64::INFINITY };
        if !cond.is_finite() {
            return Err(Error::IllConditioned { cond });
        }
        let inverse = basis
            .clone()
            .try_inverse()
            .ok_or(Error::IllConditioned { cond })?;
        Ok(Self {
            eigenvalues,
            basis,
            inverse,
            cond,
        })
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    pub fn condition_number(&self) -> f64 {
        self.cond
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn abscissa(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `V diag(f(λ)) V⁻¹`, real part.
    pub fn apply_function(&self, f: impl Fn(C64) -> C64) -> Matrix {
        let n = self.dim();
        let mut scaled = self.basis.clone();
        for j in 0..n {
            let fj = f(self.eigenvalues[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        (scaled * &self.inverse).map(|z| z.re)
    }

    pub fn reconstruct(&self) -> Matrix {
        self.apply_function(|z| z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_roundtrip() {
        let a = Matrix::from_diagonal(&nalgebra::dvector![-1.0, -2.0, -3.0]);
        let s = SpectralData::new(&a).unwrap();
        assert!((s.reconstruct() - &a).amax() < 1e-14);
        assert_eq!(s.condition_number(), 1.0);
    }

    #[test]
    fn complex_pair() {
        let a = Matrix::from_row_slice(2, 2, &[-0.5, 2.0, -2.0, -0.5]);
        let s = SpectralData::new(&a).unwrap();
        assert!((s.abscissa() + 0.5).abs() < 1e-12);
        assert!((s.reconstruct() - &a).amax() < 1e-12);
    }

    #[test]
    fn repeated_eigenvalue_nonsymmetric() {
        // diagonalizable with a double eigenvalue, non-symmetric storage
        let t = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 3.0]);
        let d = Matrix::from_diagonal(&nalgebra::dvector![-2.0, -2.0, -5.0]);
        let a = &t * d * t.clone().try_inverse().unwrap();
        let s = SpectralData::new(&a).unwrap();
        assert!((s.reconstruct() - &a).amax() < 1e-10);
    }

    #[test]
    fn defective_rejected() {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        assert!(matches!(SpectralData::new(&a), Err(Error::IllConditioned { .. })));
    }
}
