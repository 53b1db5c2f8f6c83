use crate::error::{Error, Result};
use crate::numkernel::{solve_lyapunov, symmetrize, Matrix};
use crate::tolerances::{NEWTON_MAX_ITER, NEWTON_TOL};

/// Newton-Kleinman iteration for `AᵀX + XA − XSX + W = 0`, started from
/// `x0` (which must make `A − S x0` stable).
///
/// Returns the solution and the number of iterations. Stops on a relative
/// step below `tol`, or once the step stops shrinking at round-off level.
pub fn newton_kleinman(
    a: &Matrix,
    s: &Matrix,
    w: &Matrix,
    x0: &Matrix,
    tol: f64,
) -> Result<(Matrix, usize)> {
    let tol = if tol > 0.0 { tol } else { NEWTON_TOL };
    let mut x = x0.clone();
    let mut last_step = f64::INFINITY;
    for it in 1..=NEWTON_MAX_ITER {
        let ak = a - s * &x;
        let rhs = w + &x * s * &x;
        let next = solve_lyapunov(&ak, &symmetrize(&rhs))?;
        let step = (&next - &x).norm() / next.norm().max(1.0);
        x = next;
        if step <= tol || (step < 1e-8 && step >= last_step) {
            return Ok((x, it));
        }
        last_step = step;
    }
    Err(Error::NotConverged {
        method: "newton-kleinman",
        iterations: NEWTON_MAX_ITER,
        last: last_step,
    })
}
