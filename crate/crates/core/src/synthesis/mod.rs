//! Closed loops, feedback synthesis, cost identities, and the sampled
//! dynamic-programming oracle.

mod closed_loop;
mod dp;

pub use closed_loop::{closed_loop_fixed_point, closed_loop_ode, FixedPointTrace};
pub use dp::{discrete_dp_oracle, DiscreteDp};

use crate::are::{are_integral_residual, AreSolution};
use crate::dre::{ire_residual, DreSolution, MatrixPath};
use crate::error::{Error, Result};
use crate::models::LqModel;
use crate::numkernel::{norm2, Matrix, Vector};
use crate::semiflow::{ControlPath, Flow, Interp, TimeGrid, Trajectory};
use crate::tolerances::{ACCURACY_STEP, IRE_PRECHECK};

/// Where the feedback operator `Q(t)` comes from.
#[derive(Debug, Clone, Copy)]
pub enum GainSource<'a> {
    Constant(&'a Matrix),
    /// Time-varying `Q(t)`, interpolated by the path.
    Path(&'a MatrixPath),
}

impl GainSource<'_> {
    /// `Q(t)`. Times within round-off of the path ends are clamped.
    pub fn at(&self, t: f64) -> Result<Matrix> {
        match self {
            GainSource::Constant(q) => Ok((*q).clone()),
            GainSource::Path(p) => {
                let (lo, hi) = (p.grid.start(), p.grid.end());
                let slack = 1e-12 * (1.0 + hi.abs());
                let t = if t < lo && t >= lo - slack {
                    lo
                } else if t > hi && t <= hi + slack {
                    hi
                } else {
                    t
                };
                p.eval(t)
            }
        }
    }

    fn check(&self, model: &LqModel, start: f64, end: f64) -> Result<()> {
        let n = model.n();
        let shape = match self {
            GainSource::Constant(q) => q.shape(),
            GainSource::Path(p) => (p.dim(), p.values[0].ncols()),
        };
        if shape != (n, n) {
            return Err(Error::Dimension(format!("gain is {shape:?}, n = {n}")));
        }
        if let GainSource::Path(p) = self {
            let slack = 1e-12 * (1.0 + end.abs());
            if start < p.grid.start() - slack || end > p.grid.end() + slack {
                return Err(Error::GridMismatch(format!(
                    "gain defined on [{}, {}], requested [{start}, {end}]",
                    p.grid.start(),
                    p.grid.end()
                )));
            }
        }
        Ok(())
    }
}

/// A Riccati solution on either horizon.
#[derive(Debug, Clone, Copy)]
pub enum RiccatiSolution<'a> {
    Dre(&'a DreSolution),
    Are(&'a AreSolution),
}

impl<'a> From<&'a DreSolution> for RiccatiSolution<'a> {
    fn from(s: &'a DreSolution) -> Self {
        RiccatiSolution::Dre(s)
    }
}

impl<'a> From<&'a AreSolution> for RiccatiSolution<'a> {
    fn from(s: &'a AreSolution) -> Self {
        RiccatiSolution::Are(s)
    }
}

impl<'a> RiccatiSolution<'a> {
    pub fn gain(&self) -> GainSource<'a> {
        match *self {
            RiccatiSolution::Dre(s) => GainSource::Path(&s.path),
            RiccatiSolution::Are(s) => GainSource::Constant(&s.p),
        }
    }

    pub fn model_id(&self) -> &str {
        match self {
            RiccatiSolution::Dre(s) => &s.model_id,
            RiccatiSolution::Are(s) => &s.model_id,
        }
    }
}

fn stage_cost(model: &LqModel, y: &Vector, u: &Vector) -> f64 {
    (&model.r * y).norm_squared() + u.norm_squared()
}

/// Mild solution `y = e^{A·}x + L₀u` on the control grid (exact for the
/// path's interpolation) and the cost `∫(‖Ry‖² + ‖u‖²)` by Simpson with
/// exact midpoint states.
pub fn simulate(model: &LqModel, u: &ControlPath, x: &Vector) -> Result<Trajectory> {
    let mut flow = Flow::for_model(model);
    let states = flow.propagate(x, u)?;
    let nodes = u.grid.nodes();
    let mut running = Vec::with_capacity(nodes.len());
    running.push(0.0);
    let mut acc = 0.0;
    for i in 0..nodes.len() - 1 {
        let h = nodes[i + 1] - nodes[i];
        let (u0, slope) = u.segment(i);
        let mid = flow.advance(&states[i], &u0, &slope, 0.5 * h)?;
        let tm = nodes[i] + 0.5 * h;
        acc += h / 6.0
            * (stage_cost(model, &states[i], &u.eval_in(i, nodes[i]))
                + 4.0 * stage_cost(model, &mid, &u.eval_in(i, tm))
                + stage_cost(model, &states[i + 1], &u.eval_in(i, nodes[i + 1])));
        running.push(acc);
    }
    Ok(Trajectory {
        grid: u.grid.clone(),
        states,
        controls: Some(u.clone()),
        cost: Some(acc),
        running_cost: Some(running),
    })
}

/// Both sides of the fundamental identity along `y = simulate(u)` started
/// from `x` at time `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalIdentity {
    /// `(Q(t)y(t), y(t)) − (Q(s)x, x)`
    pub lhs: f64,
    /// `∫_s^t (‖Ry‖² + ‖u‖²)`
    pub cost: f64,
    /// `∫_s^t ‖u + BᵀQy‖²`
    pub square: f64,
    /// `|lhs + cost − square|`
    pub residual: f64,
    /// Residual of the integral-equation precheck.
    pub precheck: f64,
}

/// Evaluates the fundamental identity on `[s, t]` for an arbitrary control.
///
/// The candidate must first pass its integral Riccati precheck on `[s, t]`
/// (the identity only holds for solutions of the integral equation);
/// failure is reported as [`Error::PrecheckFailed`]. Integrals use Simpson
/// on the union of the control grid and, for a DRE solution, its grid, with
/// pieces subdivided until `h·ρ ≤ ACCURACY_STEP` for the fastest rate ρ of
/// the open and closed loop.
pub fn fundamental_identity(
    source: RiccatiSolution,
    model: &LqModel,
    u: &ControlPath,
    x: &Vector,
    s: f64,
    t: f64,
) -> Result<FundamentalIdentity> {
    if !(s <= t) {
        return Err(Error::InvalidArgument(format!("need s <= t, got s = {s}, t = {t}")));
    }
    if x.len() != model.n() {
        return Err(Error::Dimension("initial state does not match n".into()));
    }
    if s < u.grid.start() || t > u.grid.end() {
        return Err(Error::GridMismatch(format!(
            "[{s}, {t}] outside control grid [{}, {}]",
            u.grid.start(),
            u.grid.end()
        )));
    }
    let q_sup = match source {
        RiccatiSolution::Dre(sol) => sol.path.sup_norm(),
        RiccatiSolution::Are(sol) => norm2(&sol.p),
    };
    let rate = norm2(&model.a) + norm2(&model.control_gram()) * q_sup;
    let mut cuts: Vec<f64> = u.grid.nodes().iter().cloned().filter(|&r| r > s && r < t).collect();
    let precheck = match source {
        RiccatiSolution::Dre(sol) => {
            cuts.extend(sol.grid().nodes().iter().cloned().filter(|&r| r > s && r < t));
            ire_residual(sol, model, s, t, x, x)?
        }
        RiccatiSolution::Are(sol) => {
            let steps = (((t - s) * rate / ACCURACY_STEP).ceil() as usize).max(cuts.len()).max(64);
            are_integral_residual(sol, model, s, t, x, x, steps)?
        }
    };
    let scale = 1.0 + x.norm_squared();
    if precheck > IRE_PRECHECK * scale {
        return Err(Error::PrecheckFailed(format!(
            "integral Riccati residual {precheck:.3e} on [{s}, {t}]"
        )));
    }
    cuts.push(s);
    cuts.push(t);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
    let mut pieces = Vec::with_capacity(cuts.len());
    for w in cuts.windows(2) {
        let k = (((w[1] - w[0]) * rate / ACCURACY_STEP).ceil() as usize).max(1);
        let h = (w[1] - w[0]) / k as f64;
        for j in 0..k {
            let b = if j + 1 == k { w[1] } else { w[0] + (j + 1) as f64 * h };
            pieces.push((w[0] + j as f64 * h, b));
        }
    }

    let gain = source.gain();
    let q_at = |r: f64, inside: usize| -> Result<Matrix> {
        match source {
            RiccatiSolution::Dre(sol) => Ok(sol.path.eval_in(inside, r)),
            RiccatiSolution::Are(_) => gain.at(r),
        }
    };
    let square = |q: &Matrix, y: &Vector, v: &Vector| (v + model.b.transpose() * (q * y)).norm_squared();
    let mut flow = Flow::for_model(model);
    let mut y = x.clone();
    let (mut cost, mut sq) = (0.0, 0.0);
    for (a, b) in pieces {
        if b <= a {
            continue;
        }
        let mid_t = 0.5 * (a + b);
        let ui = u.grid.interval(mid_t).expect("piece inside control grid");
        let qi = match source {
            RiccatiSolution::Dre(sol) => sol.grid().interval(mid_t).expect("piece inside solution grid"),
            RiccatiSolution::Are(_) => 0,
        };
        let (_, slope) = u.segment(ui);
        let ua = u.eval_in(ui, a);
        let um = u.eval_in(ui, mid_t);
        let ub = u.eval_in(ui, b);
        let ym = flow.advance(&y, &ua, &slope, 0.5 * (b - a))?;
        let yb = flow.advance(&ym, &um, &slope, 0.5 * (b - a))?;
        let (qa, qm, qb) = (q_at(a, qi)?, q_at(mid_t, qi)?, q_at(b, qi)?);
        cost += (b - a) / 6.0
            * (stage_cost(model, &y, &ua) + 4.0 * stage_cost(model, &ym, &um) + stage_cost(model, &yb, &ub));
        sq += (b - a) / 6.0 * (square(&qa, &y, &ua) + 4.0 * square(&qm, &ym, &um) + square(&qb, &yb, &ub));
        y = yb;
    }
    let (qs, qt) = match source {
        RiccatiSolution::Dre(sol) => (sol.eval(s)?, sol.eval(t)?),
        RiccatiSolution::Are(sol) => (sol.p.clone(), sol.p.clone()),
    };
    let lhs = (&qt * &y).dot(&y) - (&qs * x).dot(x);
    Ok(FundamentalIdentity {
        lhs,
        cost,
        square: sq,
        residual: (lhs + cost - sq).abs(),
        precheck,
    })
}

/// `|(Q(t)y(t), y(t)) − (Q(s)x, x) + ∫(‖Ry‖² + ‖u‖²) − ∫‖u + BᵀQy‖²|`.
pub fn fundamental_identity_residual(
    source: RiccatiSolution,
    model: &LqModel,
    u: &ControlPath,
    x: &Vector,
    s: f64,
    t: f64,
) -> Result<f64> {
    Ok(fundamental_identity(source, model, u, x, s, t)?.residual)
}

/// Optimal feedback control, state and cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    /// `û(t) = −K(t)ŷ(t)` at the nodes, linearly interpolated between.
    pub u_hat: ControlPath,
    pub y_hat: Trajectory,
    pub j_hat: f64,
}

/// Closed-loop state `ŷ` from [`closed_loop_ode`] with `Q = P`, feedback
/// `û = −BᵀPŷ`, and `Ĵ = ∫(‖Rŷ‖² + ‖û‖²)` by Simpson. Midpoint states come
/// from integrating on the bisected grid.
pub fn feedback_synthesis(
    model: &LqModel,
    sol: RiccatiSolution,
    x: &Vector,
    grid: &TimeGrid,
) -> Result<Synthesis> {
    if let (RiccatiSolution::Dre(_), Some(len)) = (sol, model.horizon.finite()) {
        if grid.end() > len * (1.0 + 1e-12) {
            return Err(Error::HorizonMismatch(format!(
                "grid ends at {} beyond T = {len}",
                grid.end()
            )));
        }
    }
    let gain = sol.gain();
    let fine = grid.refine();
    let fine_traj = closed_loop_ode(model, gain, x, &fine)?;
    let k_at = |t: f64| -> Result<Matrix> { Ok(model.b.transpose() * gain.at(t)?) };
    let nodes = grid.nodes();
    let states: Vec<Vector> = fine_traj.states.iter().step_by(2).cloned().collect();
    let controls = nodes
        .iter()
        .zip(&states)
        .map(|(&t, y)| Ok(-(k_at(t)? * y)))
        .collect::<Result<Vec<Vector>>>()?;
    let mut running = Vec::with_capacity(nodes.len());
    running.push(0.0);
    let mut acc = 0.0;
    for i in 0..nodes.len() - 1 {
        let h = nodes[i + 1] - nodes[i];
        let tm = nodes[i] + 0.5 * h;
        let ym = &fine_traj.states[2 * i + 1];
        let um = -(k_at(tm)? * ym);
        acc += h / 6.0
            * (stage_cost(model, &states[i], &controls[i])
                + 4.0 * stage_cost(model, ym, &um)
                + stage_cost(model, &states[i + 1], &controls[i + 1]));
        running.push(acc);
    }
    let u_hat = ControlPath::new(grid.clone(), controls, Interp::Linear)?;
    Ok(Synthesis {
        y_hat: Trajectory {
            grid: grid.clone(),
            states,
            controls: Some(u_hat.clone()),
            cost: Some(acc),
            running_cost: Some(running),
        },
        u_hat,
        j_hat: acc,
    })
}

/// CSV with one row per node: `t`, state, control (if any), running cost
/// (if any).
pub fn trajectory_to_csv(traj: &Trajectory) -> Result<String> {
    let n = traj.states[0].len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("y_{i}")));
    if let Some(u) = &traj.controls {
        header.extend((1..=u.dim()).map(|i| format!("u_{i}")));
    }
    if traj.running_cost.is_some() {
        header.push("running_cost".into());
    }
    w.write_record(&header)?;
    for (idx, &t) in traj.grid.nodes().iter().enumerate() {
        let mut row = vec![format!("{t:.16e}")];
        row.extend(traj.states[idx].iter().map(|v| format!("{v:.16e}")));
        if let Some(u) = &traj.controls {
            row.extend(u.values[idx].iter().map(|v| format!("{v:.16e}")));
        }
        if let Some(c) = &traj.running_cost {
            row.push(format!("{:.16e}", c[idx]));
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::are::solve_are_newton;
    use crate::dre::{solve_dre, Integrator};
    use crate::models::{heat_boundary_surrogate, scalar_model, Horizon};

    #[test]
    fn free_decay_cost_on_truncated_half_line() {
        let m = scalar_model(-1.0, 1.0, 1.0, Horizon::Infinite).unwrap();
        let u = ControlPath::zeros(TimeGrid::uniform(0.0, 40.0, 4000).unwrap(), 1);
        let tr = simulate(&m, &u, &Vector::from_element(1, 1.0)).unwrap();
        assert!((tr.cost.unwrap() - 0.5).abs() < 1e-5);
        let zero = simulate(&m, &u, &Vector::zeros(1)).unwrap();
        assert_eq!(zero.cost.unwrap(), 0.0);
    }

    #[test]
    fn superposition() {
        let m = heat_boundary_surrogate(6, 0.5).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 200).unwrap();
        let u = ControlPath::random_hold(grid.clone(), m.m(), 5);
        let x = Vector::from_fn(m.n(), |i, _| 1.0 / (1.0 + i as f64));
        let full = simulate(&m, &u, &x).unwrap();
        let free = simulate(&m, &ControlPath::zeros(grid, m.m()), &x).unwrap();
        let forced = simulate(&m, &u, &Vector::zeros(m.n())).unwrap();
        for k in 0..full.states.len() {
            let d = &full.states[k] - &free.states[k] - &forced.states[k];
            assert!(d.amax() < 1e-12);
        }
    }

    #[test]
    fn identity_trivial_without_observation() {
        let mut m = heat_boundary_surrogate(4, 0.5).unwrap();
        m.r = Matrix::zeros(m.p(), m.n());
        let sol = solve_dre(&m, 200, Integrator::Rk4).unwrap();
        let u = ControlPath::random_hold(TimeGrid::uniform(0.0, 1.0, 50).unwrap(), m.m(), 2);
        let x = Vector::from_element(m.n(), 1.0);
        let id = fundamental_identity((&sol).into(), &m, &u, &x, 0.0, 1.0).unwrap();
        assert!(id.lhs == 0.0);
        assert!(id.residual < 1e-12 * (1.0 + id.cost));
    }

    #[test]
    fn identity_holds_for_random_control() {
        let m = heat_boundary_surrogate(6, 0.25).unwrap();
        let sol = solve_dre(&m, 1000, Integrator::Rk4).unwrap();
        let u = ControlPath::random_hold(TimeGrid::uniform(0.0, 1.0, 100).unwrap(), m.m(), 9);
        let x = Vector::from_fn(m.n(), |i, _| (i as f64 + 1.0).recip());
        let id = fundamental_identity((&sol).into(), &m, &u, &x, 0.0, 1.0).unwrap();
        let scale = 1.0 + x.norm_squared() + u.lp_norm(2.0).powi(2);
        assert!(id.residual < 1e-5 * scale, "residual {:e}", id.residual);
    }

    #[test]
    fn scalar_feedback_cost_is_value() {
        let m = scalar_model(-1.0, 1.0, 1.0, Horizon::Infinite).unwrap();
        let sol = solve_are_newton(&m, 0.0).unwrap();
        let x = Vector::from_element(1, 1.0);
        let grid = TimeGrid::uniform(0.0, 20.0, 2000).unwrap();
        let syn = feedback_synthesis(&m, (&sol).into(), &x, &grid).unwrap();
        assert!((syn.j_hat - (2f64.sqrt() - 1.0)).abs() < 1e-6);
        for (k, (y, u)) in syn.y_hat.states.iter().zip(&syn.u_hat.values).enumerate() {
            let expect = -(&sol.k * y);
            assert!((u - expect).amax() <= 1e-12, "node {k}");
        }
    }

    #[test]
    fn zero_observation_gives_zero_feedback() {
        let mut m = heat_boundary_surrogate(4, 0.5).unwrap();
        m.r = Matrix::zeros(m.p(), m.n());
        let sol = solve_dre(&m, 100, Integrator::Rk4).unwrap();
        let syn = feedback_synthesis(&m, (&sol).into(), &Vector::from_element(m.n(), 1.0), sol.grid()).unwrap();
        assert_eq!(syn.j_hat, 0.0);
        assert!(syn.u_hat.values.iter().all(|u| u.amax() == 0.0));
    }

    #[test]
    fn trajectory_csv_has_all_columns() {
        let m = scalar_model(-1.0, 1.0, 1.0, Horizon::Finite(1.0)).unwrap();
        let u = ControlPath::zeros(TimeGrid::uniform(0.0, 1.0, 4).unwrap(), 1);
        let csv = trajectory_to_csv(&simulate(&m, &u, &Vector::from_element(1, 1.0)).unwrap()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,y_1,u_1,running_cost");
        assert_eq!(lines.count(), 5);
    }
}
