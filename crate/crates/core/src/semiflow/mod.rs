//! Input-to-state maps and measurement of the regularity hypotheses.
//!
//! Controls are piecewise constant or piecewise linear on their grid, and
//! states are propagated with exact exponential integrators, so the only
//! discretization error in a state is the one already present in the input.

mod metrology;

pub use metrology::{
    adjoint_duality_residual, admissibility_constant, admissibility_gramian,
    assumption_report, estimate_singular_decay, fit_power_law, holder_bound,
    improved_regularity_probe, kernel_rule, regularity_probe, weighted_kernel_lq,
    AssumptionReport, MetrologyConfig, SingularFit,
};

use crate::error::{Error, Result};
use crate::models::LqModel;
use crate::numkernel::{ExpIntegrals, Matrix, Vector};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::GridMismatch("empty grid".into()));
        }
        if nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("grid node"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::GridMismatch("grid must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn uniform(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(end > start) {
            return Err(Error::GridMismatch(format!(
                "uniform grid on [{start}, {end}] with {steps} steps"
            )));
        }
        let h = (end - start) / steps as f64;
        let mut nodes: Vec<f64> = (0..=steps).map(|i| start + i as f64 * h).collect();
        nodes[steps] = end;
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn max_step(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index `i` of the interval `[t_i, t_{i+1}]` containing `t` (the last
    /// interval for `t = end`).
    pub fn interval(&self, t: f64) -> Option<usize> {
        if self.nodes.len() < 2 || t < self.start() || t > self.end() {
            return None;
        }
        let i = self.nodes.partition_point(|&x| x <= t);
        Some(i.saturating_sub(1).min(self.nodes.len() - 2))
    }

    /// Bisects every interval.
    pub fn refine(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(self.end());
        Self { nodes }
    }

    /// True if both endpoints match `[start, end]` to relative round-off.
    pub fn spans(&self, start: f64, end: f64) -> bool {
        let scale = 1e-12 * (1.0 + start.abs().max(end.abs()));
        (self.start() - start).abs() <= scale && (self.end() - end).abs() <= scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    /// Piecewise constant, `u = values[i]` on `[t_i, t_{i+1})`.
    Hold,
    /// Piecewise linear between node values.
    Linear,
}

/// A vector-valued path on a grid. Used for controls and, in the duality
/// checks, for state-space test paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    pub grid: TimeGrid,
    pub values: Vec<Vector>,
    pub interp: Interp,
}

impl ControlPath {
    pub fn new(grid: TimeGrid, values: Vec<Vector>, interp: Interp) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values on a {}-node grid",
                values.len(),
                grid.len()
            )));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::Dimension("path values of unequal length".into()));
        }
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("path value"));
        }
        Ok(Self {
            grid,
            values,
            interp,
        })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        let values = vec![Vector::zeros(dim); grid.len()];
        Self {
            grid,
            values,
            interp: Interp::Hold,
        }
    }

    pub fn from_fn(grid: TimeGrid, interp: Interp, f: impl Fn(f64) -> Vector) -> Result<Self> {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        Self::new(grid, values, interp)
    }

    /// Seeded Gaussian piecewise-constant path.
    pub fn random_hold(grid: TimeGrid, dim: usize, seed: u64) -> Self {
        let mut g = rng::rng(seed, 0);
        let values = (0..grid.len())
            .map(|_| rng::gaussian_vector(&mut g, dim))
            .collect();
        Self {
            grid,
            values,
            interp: Interp::Hold,
        }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Value and slope on interval `i`, evaluated at the left end.
    pub fn segment(&self, i: usize) -> (Vector, Vector) {
        match self.interp {
            Interp::Hold => (self.values[i].clone(), Vector::zeros(self.dim())),
            Interp::Linear => {
                let h = self.grid.nodes[i + 1] - self.grid.nodes[i];
                let slope = (&self.values[i + 1] - &self.values[i]) / h;
                (self.values[i].clone(), slope)
            }
        }
    }

    /// Value at `t`, taken from interval `i` (left limit at its right end).
    pub fn eval_in(&self, i: usize, t: f64) -> Vector {
        let (v, s) = self.segment(i);
        match self.interp {
            Interp::Hold => v,
            Interp::Linear => v + s * (t - self.grid.nodes[i]),
        }
    }

    pub fn eval(&self, t: f64) -> Option<Vector> {
        if self.grid.len() == 1 {
            return (t == self.grid.start()).then(|| self.values[0].clone());
        }
        self.grid.interval(t).map(|i| self.eval_in(i, t))
    }

    /// `(∫ ‖u(t)‖^p dt)^{1/p}`; exact for held paths, Simpson per interval
    /// otherwise.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let nodes = self.grid.nodes();
        let mut acc = 0.0;
        for i in 0..self.grid.len().saturating_sub(1) {
            let h = nodes[i + 1] - nodes[i];
            acc += match self.interp {
                Interp::Hold => h * self.values[i].norm().powf(p),
                Interp::Linear => {
                    let mid = 0.5 * (&self.values[i] + &self.values[i + 1]);
                    h / 6.0
                        * (self.values[i].norm().powf(p)
                            + 4.0 * mid.norm().powf(p)
                            + self.values[i + 1].norm().powf(p))
                }
            };
        }
        acc.powf(1.0 / p)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * alpha).collect(),
            interp: self.interp,
        }
    }

    /// `alpha * self + other` on a shared grid.
    pub fn axpy(&self, alpha: f64, other: &ControlPath) -> Result<Self> {
        if self.grid != other.grid || self.interp != other.interp {
            return Err(Error::GridMismatch("paths on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * alpha + b)
            .collect();
        Self::new(self.grid.clone(), values, self.interp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<Vector>,
    pub controls: Option<ControlPath>,
    pub cost: Option<f64>,
    /// Cumulative cost at every node, when computed.
    pub running_cost: Option<Vec<f64>>,
}

struct StepCache {
    tau: f64,
    exp: Matrix,
    /// ∫₀^τ e^{A(τ−σ)} dσ · B
    int1_b: Matrix,
    /// ∫₀^τ e^{A(τ−σ)} σ dσ · B
    int2_b: Matrix,
}

/// Exact propagation of `y' = Ay + Bu` for piecewise-polynomial inputs.
pub struct Flow {
    a: Matrix,
    b: Matrix,
    cache: Vec<StepCache>,
}

impl Flow {
    pub fn new(a: &Matrix, b: &Matrix) -> Self {
        Self {
            a: a.clone(),
            b: b.clone(),
            cache: Vec::new(),
        }
    }

    pub fn for_model(model: &LqModel) -> Self {
        Self::new(&model.a, &model.b)
    }

    fn step(&mut self, tau: f64) -> Result<&StepCache> {
        let pos = self
            .cache
            .iter()
            .position(|c| (c.tau - tau).abs() <= 1e-14 * tau.max(1e-300));
        let idx = match pos {
            Some(i) => i,
            None => {
                let e = ExpIntegrals::new(&self.a, tau)?;
                self.cache.push(StepCache {
                    tau,
                    int1_b: &e.int1 * &self.b,
                    int2_b: &e.int2 * &self.b,
                    exp: e.exp,
                });
                self.cache.len() - 1
            }
        };
        Ok(&self.cache[idx])
    }

    /// `e^{Aτ}x + ∫₀^τ e^{A(τ−σ)}B(u₀ + σ·slope) dσ`.
    pub fn advance(&mut self, x: &Vector, u0: &Vector, slope: &Vector, tau: f64) -> Result<Vector> {
        if tau == 0.0 {
            return Ok(x.clone());
        }
        let c = self.step(tau)?;
        Ok(&c.exp * x + &c.int1_b * u0 + &c.int2_b * slope)
    }

    /// State at every node of the control grid, starting from `x0`.
    pub fn propagate(&mut self, x0: &Vector, u: &ControlPath) -> Result<Vec<Vector>> {
        self.check(x0, u)?;
        let nodes = u.grid.nodes();
        let mut out = Vec::with_capacity(nodes.len());
        out.push(x0.clone());
        for i in 0..nodes.len() - 1 {
            let (u0, slope) = u.segment(i);
            let next = self.advance(&out[i], &u0, &slope, nodes[i + 1] - nodes[i])?;
            out.push(next);
        }
        Ok(out)
    }

    /// State at time `t` starting from `x0` at `s`, both inside the grid.
    pub fn state_at(&mut self, x0: &Vector, u: &ControlPath, s: f64, t: f64) -> Result<Vector> {
        self.check(x0, u)?;
        if !(s <= t) {
            return Err(Error::InvalidArgument(format!("need s <= t, got s = {s}, t = {t}")));
        }
        if s < u.grid.start() || t > u.grid.end() {
            return Err(Error::GridMismatch(format!(
                "[{s}, {t}] outside control grid [{}, {}]",
                u.grid.start(),
                u.grid.end()
            )));
        }
        let nodes = u.grid.nodes();
        let mut x = x0.clone();
        for i in 0..nodes.len().saturating_sub(1) {
            let (lo, hi) = (nodes[i].max(s), nodes[i + 1].min(t));
            if hi <= lo {
                continue;
            }
            let (mut u0, slope) = u.segment(i);
            u0 += &slope * (lo - nodes[i]);
            x = self.advance(&x, &u0, &slope, hi - lo)?;
        }
        Ok(x)
    }

    fn check(&self, x0: &Vector, u: &ControlPath) -> Result<()> {
        if x0.len() != self.a.nrows() {
            return Err(Error::Dimension(format!(
                "initial state has length {}, n = {}",
                x0.len(),
                self.a.nrows()
            )));
        }
        if u.dim() != self.b.ncols() {
            return Err(Error::Dimension(format!(
                "control has dimension {}, m = {}",
                u.dim(),
                self.b.ncols()
            )));
        }
        Ok(())
    }
}

/// `(L_s u)(t) = ∫_s^t e^{A(t−r)} B u(r) dr`, exact for the path's
/// interpolation.
pub fn input_to_state(model: &LqModel, s: f64, u: &ControlPath, t: f64) -> Result<Vector> {
    let mut flow = Flow::for_model(model);
    flow.state_at(&Vector::zeros(model.n()), u, s, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{random_stable, scalar_model, Horizon};
    use approx::assert_relative_eq;

    #[test]
    fn zero_input_and_empty_interval() {
        let m = random_stable(3, 2, 2, 1, 0.5).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let zero = ControlPath::zeros(grid.clone(), 2);
        assert_eq!(input_to_state(&m, 0.0, &zero, 1.0).unwrap().amax(), 0.0);
        let u = ControlPath::random_hold(grid, 2, 3);
        assert_eq!(input_to_state(&m, 0.4, &u, 0.4).unwrap().amax(), 0.0);
    }

    #[test]
    fn scalar_unit_input() {
        let m = scalar_model(-1.0, 1.0, 1.0, Horizon::Finite(1.0)).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 1000).unwrap();
        let u = ControlPath::from_fn(grid, Interp::Hold, |_| Vector::from_element(1, 1.0)).unwrap();
        let y = input_to_state(&m, 0.0, &u, 1.0).unwrap();
        assert_relative_eq!(y[0], 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn linear_input_exact() {
        // y' = -y + r, y(0) = 0  =>  y(1) = 1 - 1 + e^{-1} = e^{-1}
        let m = scalar_model(-1.0, 1.0, 1.0, Horizon::Finite(1.0)).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 7).unwrap();
        let u = ControlPath::from_fn(grid, Interp::Linear, |t| Vector::from_element(1, t)).unwrap();
        let y = input_to_state(&m, 0.0, &u, 1.0).unwrap();
        assert_relative_eq!(y[0], (-1.0f64).exp(), epsilon = 1e-13);
    }

    #[test]
    fn outside_span_rejected() {
        let m = scalar_model(-1.0, 1.0, 1.0, Horizon::Finite(1.0)).unwrap();
        let u = ControlPath::zeros(TimeGrid::uniform(0.0, 1.0, 4).unwrap(), 1);
        assert!(matches!(input_to_state(&m, 0.0, &u, 1.5), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn cocycle() {
        let m = random_stable(4, 2, 2, 8, 0.3).unwrap();
        let grid = TimeGrid::uniform(0.0, 2.0, 40).unwrap();
        let u = ControlPath::random_hold(grid, 2, 5);
        let (s, t) = (0.65, 1.7);
        let full = input_to_state(&m, 0.0, &u, t).unwrap();
        let head = input_to_state(&m, 0.0, &u, s).unwrap();
        let tail = input_to_state(&m, s, &u, t).unwrap();
        let prop = crate::numkernel::Propagator::new(&m.a).unwrap();
        let recombined = prop.exp(t - s).unwrap() * head + tail;
        assert!((full - recombined).amax() < 1e-12);
    }

    #[test]
    fn grid_helpers() {
        let g = TimeGrid::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(g.interval(0.0), Some(0));
        assert_eq!(g.interval(0.25), Some(1));
        assert_eq!(g.interval(1.0), Some(3));
        assert_eq!(g.interval(1.1), None);
        assert_eq!(g.refine().steps(), 8);
        assert!(TimeGrid::new(vec![0.0, 0.0]).is_err());
    }
}
