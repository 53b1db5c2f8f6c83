//! Algebraic Riccati equation `AᵀP + PA − PBBᵀP + RᵀR = 0`: two independent
//! solvers, the integral form, the generator identity and the value-sandwich
//! uniqueness test.

mod newton;

pub use newton::newton_kleinman;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::LqModel;
use crate::numkernel::{
    min_symmetric_eigenvalue, norm2, spectral_abscissa, symmetrize, Matrix, Propagator, Vector,
};
use crate::tolerances::{IMAGINARY_AXIS, SIGN_MAX_ITER, SIGN_TOL, SUBSPACE_COND_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreMethod {
    Newton,
    Spectral,
}

impl fmt::Display for AreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AreMethod::Newton => "newton-kleinman",
            AreMethod::Spectral => "hamiltonian-sign",
        })
    }
}

impl FromStr for AreMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newton-kleinman" | "newton" => Ok(AreMethod::Newton),
            "hamiltonian-sign" | "spectral" => Ok(AreMethod::Spectral),
            other => Err(Error::Parse(format!("unknown ARE method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreSolution {
    pub p: Matrix,
    /// Bᵀ P
    pub k: Matrix,
    /// A − BBᵀP
    pub a_p: Matrix,
    pub method: AreMethod,
    /// Relative ARE residual.
    pub residual: f64,
    /// Spectral abscissa of `A_P`.
    pub abscissa: f64,
    pub iterations: usize,
    pub model_id: String,
}

impl AreSolution {
    fn assemble(model: &LqModel, p: Matrix, method: AreMethod, iterations: usize) -> Self {
        let p = symmetrize(&p);
        let k = model.b.transpose() * &p;
        let a_p = &model.a - &model.b * &k;
        Self {
            residual: are_residual(model, &p),
            abscissa: spectral_abscissa(&a_p),
            p,
            k,
            a_p,
            method,
            iterations,
            model_id: model.id.clone(),
        }
    }

    /// One-row CSV: `vec(P)` and `vec(K)` row-major, then abscissa, method,
    /// residual.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let (n, m) = (self.p.nrows(), self.k.nrows());
        let mut header: Vec<String> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                header.push(format!("P_{}_{}", i + 1, j + 1));
            }
        }
        for i in 0..m {
            for j in 0..n {
                header.push(format!("K_{}_{}", i + 1, j + 1));
            }
        }
        header.extend(["abscissa", "method", "residual"].map(String::from));
        w.write_record(&header)?;
        let mut row: Vec<String> = Vec::new();
        row.extend(row_major(&self.p));
        row.extend(row_major(&self.k));
        row.push(format!("{:.16e}", self.abscissa));
        row.push(self.method.to_string());
        row.push(format!("{:.16e}", self.residual));
        w.write_record(&row)?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        Ok(format!("# model_id = {}\n{}", self.model_id, String::from_utf8_lossy(&bytes)))
    }

    /// Reads a solution written by [`AreSolution::to_csv`]. Only `P` and the
    /// method are taken from the file; gain, closed loop, residual and
    /// abscissa are recomputed against `model`.
    pub fn from_csv(text: &str, model: &LqModel) -> Result<Self> {
        let mut model_id = None;
        let mut body = String::new();
        for line in text.lines() {
            match line.strip_prefix('#') {
                Some(c) => {
                    if let Some(("model_id", v)) = c.split_once('=').map(|(k, v)| (k.trim(), v)) {
                        model_id = Some(v.trim().to_string());
                    }
                }
                None => {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
        let n = model.n();
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let header = rdr.headers()?.clone();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("missing column {name}")))
        };
        let method_col = col("method")?;
        let p_cols = (0..n * n)
            .map(|k| col(&format!("P_{}_{}", k / n + 1, k % n + 1)))
            .collect::<Result<Vec<_>>>()?;
        let rec = rdr
            .records()
            .next()
            .ok_or_else(|| Error::Parse("ARE solution has no data row".into()))??;
        let vals = p_cols
            .iter()
            .map(|&c| {
                let s = rec.get(c).unwrap_or("").trim();
                s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let p = Matrix::from_row_slice(n, n, &vals);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("P"));
        }
        let method = rec.get(method_col).unwrap_or("").trim().parse::<AreMethod>()?;
        let mut sol = Self::assemble(model, p, method, 0);
        sol.model_id = model_id.ok_or_else(|| Error::Parse("missing model_id header".into()))?;
        Ok(sol)
    }
}

pub(crate) fn row_major(m: &Matrix) -> Vec<String> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(format!("{:.16e}", m[(i, j)]));
        }
    }
    out
}

/// `AᵀP + PA − PBBᵀP + RᵀR`.
pub fn are_operator(model: &LqModel, p: &Matrix) -> Matrix {
    let pb = p * &model.b;
    model.a.transpose() * p + p * &model.a - &pb * pb.transpose() + model.observation_gram()
}

/// ARE residual relative to `2‖A‖‖P‖ + ‖B‖²‖P‖² + ‖R‖²`.
pub fn are_residual(model: &LqModel, p: &Matrix) -> f64 {
    let np = norm2(p);
    let nb = norm2(&model.b);
    let nr = norm2(&model.r);
    let scale = 2.0 * norm2(&model.a) * np + nb * nb * np * np + nr * nr;
    norm2(&are_operator(model, p)) / scale.max(f64::MIN_POSITIVE)
}

fn check_framework(model: &LqModel) -> Result<()> {
    model.require_infinite()?;
    let abscissa = model.abscissa();
    if abscissa >= 0.0 {
        return Err(Error::Unstable { abscissa });
    }
    Ok(())
}

/// Newton-Kleinman from `P₀ = 0`.
pub fn solve_are_newton(model: &LqModel, tol: f64) -> Result<AreSolution> {
    check_framework(model)?;
    let n = model.n();
    let (p, it) = newton_kleinman(
        &model.a,
        &model.control_gram(),
        &model.observation_gram(),
        &Matrix::zeros(n, n),
        tol,
    )?;
    Ok(AreSolution::assemble(model, p, AreMethod::Newton, it))
}

/// Stable invariant subspace of the Hamiltonian via the matrix sign
/// function; `P` solves `[Z₁₂; Z₂₂ + I] P = −[Z₁₁ + I; Z₂₁]` in least squares.
pub fn solve_are_spectral(model: &LqModel) -> Result<AreSolution> {
    check_framework(model)?;
    let n = model.n();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&model.a);
    h.view_mut((0, n), (n, n)).copy_from(&(-model.control_gram()));
    h.view_mut((n, 0), (n, n)).copy_from(&(-model.observation_gram()));
    h.view_mut((n, n), (n, n)).copy_from(&(-model.a.transpose()));

    let hnorm = norm2(&h);
    let min_re = h
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.abs())
        .fold(f64::INFINITY, f64::min);
    if min_re <= IMAGINARY_AXIS * hnorm.max(1.0) {
        return Err(Error::ImaginaryAxis(min_re));
    }

    let (z, iterations) = matrix_sign(&h)?;
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(z.view((n, n), (n, n)) + Matrix::identity(n, n)));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(z.view((0, 0), (n, n)) + Matrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z.view((n, 0), (n, n))));

    let svd = lhs.svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > 0.0) || smax / smin > SUBSPACE_COND_MAX {
        return Err(Error::IllConditioned {
            cond: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        });
    }
    let p = svd
        .solve(&rhs, 0.0)
        .map_err(|_| Error::Singular("stable subspace basis"))?;
    Ok(AreSolution::assemble(model, p, AreMethod::Spectral, iterations))
}

/// Newton iteration with determinant scaling for `sign(H)`.
fn matrix_sign(h: &Matrix) -> Result<(Matrix, usize)> {
    let dim = h.nrows() as f64;
    let mut z = h.clone();
    let mut last = f64::INFINITY;
    for it in 1..=SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse().ok_or(Error::Singular("Hamiltonian sign iterate"))?;
        let c = if det.is_finite() && det != 0.0 && last > 1e-2 {
            det.abs().powf(-1.0 / dim)
        } else {
            1.0
        };
        let next = (&z * c + inv / c) * 0.5;
        let step = (&next - &z).norm() / next.norm();
        z = next;
        if step <= SIGN_TOL || (step < 1e-10 && step >= last) {
            return Ok((z, it));
        }
        last = step;
    }
    Err(Error::NotConverged {
        method: "matrix-sign",
        iterations: SIGN_MAX_ITER,
        last,
    })
}

/// Integral form of the ARE on `[s, t]`, Simpson on `steps` uniform
/// intervals with midpoints.
pub fn are_integral_residual(
    sol: &AreSolution,
    model: &LqModel,
    s: f64,
    t: f64,
    x: &Vector,
    y: &Vector,
    steps: usize,
) -> Result<f64> {
    if s > t {
        return Err(Error::InvalidArgument(format!("need s <= t, got s = {s}, t = {t}")));
    }
    if x.len() != model.n() || y.len() != model.n() {
        return Err(Error::Dimension("probe vectors do not match n".into()));
    }
    if t == s {
        return Ok(0.0);
    }
    let steps = steps.max(1);
    let h = (t - s) / steps as f64;
    let prop = Propagator::new(&model.a)?;
    let half = prop.exp(0.5 * h)?;
    let integrand = |ex: &Vector, ey: &Vector| {
        (&model.r * ex).dot(&(&model.r * ey)) - (&sol.k * ex).dot(&(&sol.k * ey))
    };
    let (mut ex, mut ey) = (x.clone(), y.clone());
    let mut integral = 0.0;
    for _ in 0..steps {
        let (mx, my) = (&half * &ex, &half * &ey);
        let (nx, ny) = (&half * &mx, &half * &my);
        integral += h / 6.0 * (integrand(&ex, &ey) + 4.0 * integrand(&mx, &my) + integrand(&nx, &ny));
        ex = nx;
        ey = ny;
    }
    let lhs = (&sol.p * &ex).dot(&ey) - (&sol.p * x).dot(y);
    Ok((lhs + integral).abs())
}

/// `‖A(I − A⁻¹BBᵀP) − (A − BBᵀP)‖`.
pub fn generator_identity_check(sol: &AreSolution, model: &LqModel) -> Result<f64> {
    let n = model.n();
    let sp = &model.b * &sol.k;
    let ainv_sp = model
        .a
        .clone()
        .lu()
        .solve(&sp)
        .ok_or(Error::Singular("A"))?;
    let lhs = &model.a * (Matrix::identity(n, n) - ainv_sp);
    Ok(norm2(&(lhs - &sol.a_p)))
}

/// Gaps of the value sandwich for a candidate `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichGaps {
    /// J(û) − (Qx, x)
    pub upper_gap: f64,
    /// (Qx, x) − J(u_Q)
    pub lower_gap: f64,
}

impl SandwichGaps {
    pub fn within(&self, tol: f64) -> bool {
        self.upper_gap.abs() <= tol && self.lower_gap.abs() <= tol
    }
}

/// Cost of the feedback `u = −G y` along `y' = (A − BG)y`, on
/// `[0, t_trunc]` by Simpson with midpoints.
fn feedback_cost(model: &LqModel, gain: &Matrix, x: &Vector, t_trunc: f64, steps: usize) -> Result<f64> {
    let a_cl = &model.a - &model.b * gain;
    let abscissa = spectral_abscissa(&a_cl);
    if abscissa >= 0.0 {
        return Err(Error::ClosedLoopUnstable(abscissa));
    }
    let h = t_trunc / steps as f64;
    let half = Propagator::new(&a_cl)?.exp(0.5 * h)?;
    let running = |y: &Vector| (&model.r * y).norm_squared() + (gain * y).norm_squared();
    let mut y = x.clone();
    let mut cost = 0.0;
    for _ in 0..steps {
        let mid = &half * &y;
        let next = &half * &mid;
        cost += h / 6.0 * (running(&y) + 4.0 * running(&mid) + running(&next));
        y = next;
    }
    Ok(cost)
}

/// Upper and lower gaps of the value sandwich: `û` is the optimal feedback
/// of `reference`, `u_Q = −BᵀQy` along the closed loop generated by `Q`.
pub fn value_sandwich_test(
    q: &Matrix,
    model: &LqModel,
    reference: &AreSolution,
    x: &Vector,
    t_trunc: f64,
    grid_steps: usize,
) -> Result<SandwichGaps> {
    if q.shape() != (model.n(), model.n()) || x.len() != model.n() {
        return Err(Error::Dimension("candidate or probe does not match n".into()));
    }
    if !(t_trunc > 0.0) || grid_steps == 0 {
        return Err(Error::InvalidArgument("truncation horizon and steps must be positive".into()));
    }
    let scale = norm2(q).max(1.0);
    if (q - q.transpose()).amax() > 1e-10 * scale
        || min_symmetric_eigenvalue(q) < crate::tolerances::PSD_FLOOR * scale
    {
        return Err(Error::ClassViolation("candidate must be symmetric PSD".into()));
    }
    let qxx = (q * x).dot(x);
    let j_hat = feedback_cost(model, &reference.k, x, t_trunc, grid_steps)?;
    let j_q = feedback_cost(model, &(model.b.transpose() * q), x, t_trunc, grid_steps)?;
    Ok(SandwichGaps {
        upper_gap: j_hat - qxx,
        lower_gap: qxx - j_q,
    })
}

/// Truncation time with `M e^{−ω T} ≤ tail` from the model's constants.
pub fn truncation_horizon(model: &LqModel, tail: f64) -> f64 {
    let p = &model.assumption;
    (p.m_const / tail).ln() / p.omega
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{random_stable, scalar_model, Horizon};
    use crate::numkernel::solve_lyapunov;
    use approx::assert_relative_eq;

    fn scalar() -> LqModel {
        scalar_model(-1.0, 1.0, 1.0, Horizon::Infinite).unwrap()
    }

    #[test]
    fn scalar_closed_form_both_methods() {
        let m = scalar();
        let exact = 2f64.sqrt() - 1.0;
        let n = solve_are_newton(&m, 0.0).unwrap();
        let s = solve_are_spectral(&m).unwrap();
        assert_relative_eq!(n.p[(0, 0)], exact, epsilon = 1e-10);
        assert_relative_eq!(s.p[(0, 0)], exact, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_cases() {
        let mut m = random_stable(4, 2, 3, 3, 0.5).unwrap().with_horizon(Horizon::Infinite);
        m.r = Matrix::zeros(3, 4);
        assert_eq!(solve_are_newton(&m, 0.0).unwrap().p.amax(), 0.0);
        assert!(solve_are_spectral(&m).unwrap().p.amax() < 1e-12);

        let m = random_stable(4, 0, 3, 3, 0.5).unwrap().with_horizon(Horizon::Infinite);
        let lyap = solve_lyapunov(&m.a, &m.observation_gram()).unwrap();
        assert!((solve_are_newton(&m, 0.0).unwrap().p - lyap).amax() < 1e-12);
    }

    #[test]
    fn methods_agree() {
        let m = random_stable(8, 2, 3, 17, 0.5).unwrap().with_horizon(Horizon::Infinite);
        let n = solve_are_newton(&m, 0.0).unwrap();
        let s = solve_are_spectral(&m).unwrap();
        assert!(norm2(&(&n.p - &s.p)) <= 1e-9 * norm2(&n.p));
        assert!(n.abscissa < 0.0 && n.residual < 1e-12);
    }

    #[test]
    fn finite_horizon_rejected() {
        let m = scalar().with_horizon(Horizon::Finite(1.0));
        assert!(matches!(solve_are_newton(&m, 0.0), Err(Error::HorizonMismatch(_))));
    }

    #[test]
    fn integral_form_and_generator_identity() {
        let m = random_stable(5, 2, 2, 4, 0.5).unwrap().with_horizon(Horizon::Infinite);
        let sol = solve_are_newton(&m, 0.0).unwrap();
        let x = Vector::from_fn(5, |i, _| (i as f64).sin());
        let y = Vector::from_fn(5, |i, _| (i as f64).cos());
        assert_eq!(are_integral_residual(&sol, &m, 1.0, 1.0, &x, &y, 10).unwrap(), 0.0);
        let r = are_integral_residual(&sol, &m, 0.0, 5.0, &x, &y, 5000).unwrap();
        assert!(r <= 1e-7 * (1.0 + x.norm() * y.norm()), "{r}");
        assert!(generator_identity_check(&sol, &m).unwrap() <= 1e-10 * norm2(&m.a));
    }

    #[test]
    fn sandwich() {
        let m = random_stable(4, 2, 3, 9, 0.5).unwrap().with_horizon(Horizon::Infinite);
        let sol = solve_are_newton(&m, 0.0).unwrap();
        let x = Vector::from_element(4, 0.5);
        let t = truncation_horizon(&m, 1e-8);
        let g = value_sandwich_test(&sol.p, &m, &sol, &x, t, 4000).unwrap();
        assert!(g.within(1e-6), "{g:?}");
        let bumped = &sol.p + Matrix::identity(4, 4) * 0.1;
        let g = value_sandwich_test(&bumped, &m, &sol, &x, t, 4000).unwrap();
        assert!(g.lower_gap > 1e-4);
        let g = value_sandwich_test(&Matrix::zeros(4, 4), &m, &sol, &x, t, 4000).unwrap();
        assert!(g.upper_gap > 0.0);
    }

    #[test]
    fn csv_roundtrip_recomputes_derived_fields() {
        let m = random_stable(3, 1, 2, 9, 0.5).unwrap().with_horizon(Horizon::Infinite);
        let sol = solve_are_newton(&m, 0.0).unwrap();
        let back = AreSolution::from_csv(&sol.to_csv().unwrap(), &m).unwrap();
        assert_eq!(back.p, sol.p);
        assert_eq!(back.k, sol.k);
        assert_eq!(back.method, sol.method);
        assert_eq!(back.model_id, sol.model_id);

        assert!(AreSolution::from_csv("# model_id = x\nabscissa\n1\n", &m).is_err());
    }
}
