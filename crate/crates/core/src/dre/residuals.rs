use super::DreSolution;
use crate::error::{Error, Result};
use crate::models::LqModel;
use crate::numkernel::{norm2, Matrix, Propagator, Vector};
use crate::rng;
use crate::semiflow::TimeGrid;
use crate::tolerances::RK4_STIFFNESS_LIMIT;

/// Pieces `(i, a, b)` of `[s, t]` cut at the grid nodes, `i` the grid
/// interval containing the piece.
pub(crate) fn pieces(grid: &TimeGrid, s: f64, t: f64) -> Vec<(usize, f64, f64)> {
    let nodes = grid.nodes();
    let mut out = Vec::new();
    for i in 0..nodes.len().saturating_sub(1) {
        let (a, b) = (nodes[i].max(s), nodes[i + 1].min(t));
        if b > a {
            out.push((i, a, b));
        }
    }
    out
}

/// `e^{Aτ}` memoized on τ.
pub(crate) struct ExpCache {
    prop: Propagator,
    cache: Vec<(f64, Matrix)>,
}

impl ExpCache {
    pub(crate) fn new(a: &Matrix) -> Result<Self> {
        Ok(Self {
            prop: Propagator::new(a)?,
            cache: Vec::new(),
        })
    }

    pub(crate) fn get(&mut self, tau: f64) -> &Matrix {
        let pos = self
            .cache
            .iter()
            .position(|(c, _)| (c - tau).abs() <= 1e-14 * tau.abs().max(1e-300));
        match pos {
            Some(i) => &self.cache[i].1,
            None => {
                let e = self.prop.exp_unchecked(tau);
                self.cache.push((tau, e));
                &self.cache.last().expect("just pushed").1
            }
        }
    }
}

fn check_window(sol: &DreSolution, s: f64, t: f64) -> Result<()> {
    if s > t {
        return Err(Error::InvalidArgument(format!("need s <= t, got s = {s}, t = {t}")));
    }
    if s < sol.grid().start() || t > sol.horizon() {
        return Err(Error::GridMismatch(format!(
            "[{s}, {t}] outside [0, {}]",
            sol.horizon()
        )));
    }
    Ok(())
}

/// Residual of the integral Riccati equation tested on `(x, y)`:
/// `(Q(t)E x, E y) − (Q(s)x, y) + ∫(R E_r x, R E_r y) − ∫(BᵀQ E_r x, BᵀQ E_r y)`
/// with `E_r = e^{A(r−s)}`, Simpson on each grid piece.
pub fn ire_residual(
    sol: &DreSolution,
    model: &LqModel,
    s: f64,
    t: f64,
    x: &Vector,
    y: &Vector,
) -> Result<f64> {
    check_window(sol, s, t)?;
    if x.len() != model.n() || y.len() != model.n() {
        return Err(Error::Dimension("probe vectors do not match n".into()));
    }
    if t == s {
        return Ok(0.0);
    }
    let mut exps = ExpCache::new(&model.a)?;
    let integrand = |q: &Matrix, ex: &Vector, ey: &Vector| {
        let bq = model.b.transpose() * q;
        (&model.r * ex).dot(&(&model.r * ey)) - (&bq * ex).dot(&(&bq * ey))
    };
    let (mut ex, mut ey) = (x.clone(), y.clone());
    let mut integral = 0.0;
    for (i, a, b) in pieces(sol.grid(), s, t) {
        let half = exps.get(0.5 * (b - a)).clone();
        let (mx, my) = (&half * &ex, &half * &ey);
        let (nx, ny) = (&half * &mx, &half * &my);
        let qa = sol.path.eval_in(i, a);
        let qm = sol.path.eval_in(i, 0.5 * (a + b));
        let qb = sol.path.eval_in(i, b);
        integral += (b - a) / 6.0
            * (integrand(&qa, &ex, &ey) + 4.0 * integrand(&qm, &mx, &my) + integrand(&qb, &nx, &ny));
        ex = nx;
        ey = ny;
    }
    let qt = sol.eval(t)?;
    let qs = sol.eval(s)?;
    Ok(((&qt * &ex).dot(&ey) - (&qs * x).dot(y) + integral).abs())
}

/// Spectral norm of the operator form of the integral Riccati equation.
pub fn ire_strong_residual(sol: &DreSolution, model: &LqModel, s: f64, t: f64) -> Result<f64> {
    check_window(sol, s, t)?;
    if t == s {
        return Ok(0.0);
    }
    let n = model.n();
    let w = model.observation_gram();
    let bbt = model.control_gram();
    let mut exps = ExpCache::new(&model.a)?;
    let integrand = |q: &Matrix, e: &Matrix| e.transpose() * (&w - q * &bbt * q) * e;
    let mut e = Matrix::identity(n, n);
    let mut integral = Matrix::zeros(n, n);
    for (i, a, b) in pieces(sol.grid(), s, t) {
        let half = exps.get(0.5 * (b - a)).clone();
        let em = &half * &e;
        let eb = &half * &em;
        let qa = sol.path.eval_in(i, a);
        let qm = sol.path.eval_in(i, 0.5 * (a + b));
        let qb = sol.path.eval_in(i, b);
        integral += (integrand(&qa, &e) + integrand(&qm, &em) * 4.0 + integrand(&qb, &eb)) * ((b - a) / 6.0);
        e = eb;
    }
    let qt = sol.eval(t)?;
    let qs = sol.eval(s)?;
    Ok(norm2(&(e.transpose() * qt * &e - qs + integral)))
}

/// Closed-loop evolution `Φ(τ, t0)X` for `y' = (A − BBᵀP(τ))y`, sampled at
/// the ends and midpoints of the grid pieces of `[t0, t1]`
/// (`2·pieces + 1` samples).
pub(crate) fn closed_loop_sweep(
    sol: &DreSolution,
    model: &LqModel,
    t0: f64,
    t1: f64,
    x: &Matrix,
) -> Vec<(f64, Matrix)> {
    let s = model.control_gram();
    let (a_norm, s_norm) = (norm2(&model.a), norm2(&s));
    let field = |i: usize, tau: f64, y: &Matrix| {
        let p = sol.path.eval_in(i, tau);
        &model.a * y - &s * (p * y)
    };
    let mut out = vec![(t0, x.clone())];
    let mut y = x.clone();
    for (i, a, b) in pieces(sol.grid(), t0, t1) {
        let pmax = norm2(&sol.path.values[i]).max(norm2(&sol.path.values[i + 1]));
        for (lo, hi) in [(a, 0.5 * (a + b)), (0.5 * (a + b), b)] {
            let h = hi - lo;
            let stiff = h * (a_norm + s_norm * pmax);
            let sub = ((stiff / RK4_STIFFNESS_LIMIT).ceil() as usize).max(1);
            let dt = h / sub as f64;
            for k in 0..sub {
                let tau = lo + k as f64 * dt;
                let k1 = field(i, tau, &y);
                let k2 = field(i, tau + 0.5 * dt, &(&y + &k1 * (0.5 * dt)));
                let k3 = field(i, tau + 0.5 * dt, &(&y + &k2 * (0.5 * dt)));
                let k4 = field(i, tau + dt, &(&y + &k3 * dt));
                y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            }
            out.push((hi, y.clone()));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpricReport {
    /// max over probes of `‖P(t)x − ∫_t^T e^{Aᵀ(τ−t)}RᵀRΦ(τ,t)x dτ‖`
    pub residual: f64,
    /// `‖Φ(T,σ)Φ(σ,t) − Φ(T,t)‖` at an off-grid σ.
    pub evolution_defect: f64,
}

/// Checks the optimal-cost representation of `P(t)` through the closed-loop
/// evolution, and the evolution property of that evolution.
pub fn opric_selfconsistency(
    sol: &DreSolution,
    model: &LqModel,
    t: f64,
    probes: usize,
    seed: u64,
) -> Result<OpricReport> {
    let t_end = sol.horizon();
    check_window(sol, t, t_end)?;
    if t == t_end {
        return Ok(OpricReport {
            residual: 0.0,
            evolution_defect: 0.0,
        });
    }
    let n = model.n();
    let xs = rng::unit_probes(seed, n, probes);
    let x = Matrix::from_columns(&xs);
    let sweep = closed_loop_sweep(sol, model, t, t_end, &x);
    let w = model.observation_gram();
    let mut exps = ExpCache::new(&model.a)?;
    let integrand = |e: &Matrix, phi: &Matrix| e.transpose() * &w * phi;

    let mut e = Matrix::identity(n, n);
    let mut integral = Matrix::zeros(n, xs.len());
    for k in 0..(sweep.len() - 1) / 2 {
        let (ta, pa) = &sweep[2 * k];
        let (tm, pm) = &sweep[2 * k + 1];
        let (tb, pb) = &sweep[2 * k + 2];
        let em = exps.get(tm - ta).clone() * &e;
        let eb = exps.get(tb - tm).clone() * &em;
        integral += (integrand(&e, pa) + integrand(&em, pm) * 4.0 + integrand(&eb, pb)) * ((tb - ta) / 6.0);
        e = eb;
    }
    let diff = sol.eval(t)? * &x - integral;
    let residual = diff.column_iter().map(|c| c.norm()).fold(0.0, f64::max);

    let sigma = t + 0.37 * (t_end - t);
    let id = Matrix::identity(n, n);
    let phi_full = &sweep_end(sol, model, t, t_end, &id);
    let phi_head = sweep_end(sol, model, t, sigma, &id);
    let phi_tail = sweep_end(sol, model, sigma, t_end, &id);
    let evolution_defect = norm2(&(phi_tail * phi_head - phi_full));
    Ok(OpricReport {
        residual,
        evolution_defect,
    })
}

fn sweep_end(sol: &DreSolution, model: &LqModel, t0: f64, t1: f64, x: &Matrix) -> Matrix {
    closed_loop_sweep(sol, model, t0, t1, x)
        .pop()
        .map(|(_, m)| m)
        .unwrap_or_else(|| x.clone())
}

/// `(∫_s^T ‖BᵀP(r)e^{A(r−s)}x‖² dr, ∫_s^T ‖Re^{A(r−s)}x‖² dr)`.
pub fn gain_square_integrability(
    sol: &DreSolution,
    model: &LqModel,
    s: f64,
    x: &Vector,
) -> Result<(f64, f64)> {
    let t_end = sol.horizon();
    check_window(sol, s, t_end)?;
    let mut exps = ExpCache::new(&model.a)?;
    let mut ex = x.clone();
    let (mut gain, mut obs) = (0.0, 0.0);
    for (i, a, b) in pieces(sol.grid(), s, t_end) {
        let half = exps.get(0.5 * (b - a)).clone();
        let mx = &half * &ex;
        let nx = &half * &mx;
        let g = |t: f64, v: &Vector| (&model.b.transpose() * sol.path.eval_in(i, t) * v).norm_squared();
        let o = |v: &Vector| (&model.r * v).norm_squared();
        let m = 0.5 * (a + b);
        gain += (b - a) / 6.0 * (g(a, &ex) + 4.0 * g(m, &mx) + g(b, &nx));
        obs += (b - a) / 6.0 * (o(&ex) + 4.0 * o(&mx) + o(&nx));
        ex = nx;
    }
    Ok((gain, obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dre::{solve_dre, Integrator};
    use crate::models::{random_stable, scalar_model, Horizon};

    fn scalar() -> LqModel {
        scalar_model(-1.0, 1.0, 1.0, Horizon::Finite(1.0)).unwrap()
    }

    #[test]
    fn ire_trivial_and_small() {
        let m = random_stable(4, 2, 2, 3, 0.5).unwrap();
        let sol = solve_dre(&m, 2000, Integrator::Rk4).unwrap();
        let x = Vector::from_fn(4, |i, _| 1.0 + i as f64);
        let y = Vector::from_fn(4, |i, _| (i as f64).cos());
        assert_eq!(ire_residual(&sol, &m, 0.3, 0.3, &x, &y).unwrap(), 0.0);
        let r = ire_residual(&sol, &m, 0.1234, 0.8765, &x, &y).unwrap();
        assert!(r <= 1e-6 * (1.0 + x.norm() * y.norm()), "{r}");
        let strong = ire_strong_residual(&sol, &m, 0.0, 1.0).unwrap();
        assert!(strong < 1e-8, "{strong}");
        assert!(ire_residual(&sol, &m, 0.5, 0.2, &x, &y).is_err());
    }

    #[test]
    fn ire_with_zero_q_is_observation_integral() {
        let m = scalar();
        let mut sol = solve_dre(&m, 100, Integrator::Rk4).unwrap();
        for v in sol.path.values.iter_mut() {
            v.fill(0.0);
        }
        sol.path.derivs = None;
        let x = Vector::from_element(1, 1.0);
        let r = ire_residual(&sol, &m, 0.0, 1.0, &x, &x).unwrap();
        let exact = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((r - exact).abs() < 1e-9);
    }

    #[test]
    fn opric_scalar() {
        let sol = solve_dre(&scalar(), 4000, Integrator::Rk4).unwrap();
        let rep = opric_selfconsistency(&sol, &scalar(), 0.0, 1, 0).unwrap();
        assert!(rep.residual <= 1e-5 && rep.evolution_defect < 1e-8, "{rep:?}");
        let rep = opric_selfconsistency(&sol, &scalar(), 1.0, 1, 0).unwrap();
        assert_eq!(rep.residual, 0.0);
    }

    #[test]
    fn gain_bounded_by_observation() {
        let m = random_stable(5, 2, 3, 12, 0.5).unwrap();
        let sol = solve_dre(&m, 1000, Integrator::Rk4).unwrap();
        for x in rng::unit_probes(4, 5, 4) {
            let (g, o) = gain_square_integrability(&sol, &m, 0.2, &x).unwrap();
            assert!(g <= o + 1e-10);
        }
    }
}
