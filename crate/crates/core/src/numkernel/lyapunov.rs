use nalgebra::linalg::Schur;

use super::{ensure_finite, ensure_square, symmetrize, Matrix};
use crate::error::{Error, Result};

/// Solves `AᵀX + XA + Q = 0` for stable `A` and symmetric `Q`
/// (Bartels-Stewart on the real Schur form).
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    ensure_square(a, "A")?;
    ensure_square(q, "Q")?;
    ensure_finite(a, "A")?;
    ensure_finite(q, "Q")?;
    let n = a.nrows();
    if q.nrows() != n {
        return Err(Error::Dimension(format!("Q is {}x{}, A is {n}x{n}", q.nrows(), q.ncols())));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let qscale = q.amax().max(1.0);
    if (q - q.transpose()).amax() > 1e-8 * qscale {
        return Err(Error::InvalidArgument("Q must be symmetric".into()));
    }

    let (u, t) = Schur::new(a.clone()).unpack();
    let blocks = diagonal_blocks(&t);

    let abscissa = blocks
        .iter()
        .map(|&(s, len)| block_abscissa(&t, s, len))
        .fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= 0.0 {
        return Err(Error::Unstable { abscissa });
    }

    // Tᵀ Y + Y T = C with Y = UᵀXU, C = −UᵀQU
    let c = -(u.transpose() * symmetrize(q) * &u);
    let mut y = Matrix::zeros(n, n);
    for (bi, &(i0, p)) in blocks.iter().enumerate() {
        for &(j0, r) in blocks.iter() {
            let mut rhs = c.view((i0, j0), (p, r)).into_owned();
            for &(k0, s) in blocks.iter().take(bi) {
                rhs -= t.view((k0, i0), (s, p)).transpose() * y.view((k0, j0), (s, r));
            }
            if j0 > 0 {
                rhs -= y.view((i0, 0), (p, j0)) * t.view((0, j0), (j0, r));
            }
            let tii = t.view((i0, i0), (p, p)).into_owned();
            let tjj = t.view((j0, j0), (r, r)).into_owned();
            let block = solve_small_sylvester(&tii, &tjj, &rhs)?;
            y.view_mut((i0, j0), (p, r)).copy_from(&block);
        }
    }
    Ok(symmetrize(&(&u * y * u.transpose())))
}

/// (start, size) of the 1×1 and 2×2 diagonal blocks of a quasi-triangular T.
fn diagonal_blocks(t: &Matrix) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

fn block_abscissa(t: &Matrix, s: usize, len: usize) -> f64 {
    if len == 1 {
        t[(s, s)]
    } else {
        let (a, b, c, d) = (t[(s, s)], t[(s, s + 1)], t[(s + 1, s)], t[(s + 1, s + 1)]);
        let tr = 0.5 * (a + d);
        let disc = 0.25 * (a - d) * (a - d) + b * c;
        if disc >= 0.0 {
            tr + disc.sqrt()
        } else {
            tr
        }
    }
}

/// Solves `TiiᵀY + Y Tjj = C` for blocks of size ≤ 2 through the Kronecker form.
fn solve_small_sylvester(tii: &Matrix, tjj: &Matrix, c: &Matrix) -> Result<Matrix> {
    let (p, r) = (tii.nrows(), tjj.nrows());
    let dim = p * r;
    let mut k = Matrix::zeros(dim, dim);
    // column-major vec: vec(TiiᵀY) = (I ⊗ Tiiᵀ) vec Y, vec(Y Tjj) = (Tjjᵀ ⊗ I) vec Y
    for col in 0..r {
        for i in 0..p {
            for l in 0..p {
                k[(col * p + i, col * p + l)] += tii[(l, i)];
            }
        }
    }
    for a in 0..r {
        for b in 0..r {
            for i in 0..p {
                k[(a * p + i, b * p + i)] += tjj[(b, a)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("Lyapunov block (λᵢ + λⱼ = 0)"))?;
    Ok(Matrix::from_column_slice(p, r, sol.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn scalar() {
        let x = solve_lyapunov(&dmatrix![-1.0], &dmatrix![2.0]).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decoupled() {
        let x = solve_lyapunov(&dmatrix![-1.0, 0.0; 0.0, -2.0], &Matrix::identity(2, 2)).unwrap();
        assert!((x - dmatrix![0.5, 0.0; 0.0, 0.25]).amax() < 1e-15);
    }

    #[test]
    fn complex_pair_block() {
        let a = dmatrix![-0.2, 3.0, 0.0; -3.0, -0.2, 1.0; 0.0, 0.0, -1.0];
        let q = dmatrix![1.0, 0.2, 0.0; 0.2, 2.0, 0.1; 0.0, 0.1, 1.0];
        let x = solve_lyapunov(&a, &q).unwrap();
        let res = a.transpose() * &x + &x * &a + &q;
        assert!(res.amax() < 1e-12);
    }

    #[test]
    fn unstable_rejected() {
        assert!(matches!(
            solve_lyapunov(&dmatrix![0.5], &dmatrix![1.0]),
            Err(Error::Unstable { .. })
        ));
    }
}
