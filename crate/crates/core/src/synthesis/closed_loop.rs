use super::GainSource;
use crate::error::{Error, Result};
use crate::models::LqModel;
use crate::numkernel::{fractional_power, norm2, weighted_norm, Matrix, Vector, WeightedNorm};
use crate::semiflow::{TimeGrid, Trajectory};
use crate::tolerances::ACCURACY_STEP;

/// Record of the Picard iteration for the closed-loop integral equation.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointTrace {
    /// `y_0 = e^{A·}x`, then one entry per Picard step.
    pub iterates: Vec<Trajectory>,
    /// `‖y_{k+1} − y_k‖_{X,r} / ‖y_k − y_{k−1}‖_{X,r}`, for differences above
    /// round-off relative to `‖y‖_{X,r}`.
    pub contraction_factors: Vec<f64>,
    /// Weighted differences `‖y_{k+1} − y_k‖_{X,r}`.
    pub differences: Vec<f64>,
    pub rate: f64,
    pub converged: bool,
}

impl FixedPointTrace {
    pub fn limit(&self) -> &Trajectory {
        self.iterates.last().expect("trace holds at least one iterate")
    }

    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }

    /// Median of the contraction factors, 0 when there are none.
    pub fn median_factor(&self) -> f64 {
        let mut f: Vec<f64> = self.contraction_factors.clone();
        if f.is_empty() {
            return 0.0;
        }
        f.sort_by(f64::total_cmp);
        let k = f.len();
        if k % 2 == 1 {
            f[k / 2]
        } else {
            0.5 * (f[k / 2 - 1] + f[k / 2])
        }
    }
}

/// Convolution matrices for one step with a quadratic input
/// `u(σ) = c₀ + c₁σ + c₂σ²`, premultiplied by `B`.
struct QuadStep {
    exp: Matrix,
    m0: Matrix,
    m1: Matrix,
    m2: Matrix,
}

impl QuadStep {
    fn new(a: &Matrix, b: &Matrix, tau: f64) -> Self {
        let n = a.nrows();
        let mut big = Matrix::zeros(4 * n, 4 * n);
        big.view_mut((0, 0), (n, n)).copy_from(&(a * tau));
        for k in 0..3 {
            for i in 0..n {
                big[(k * n + i, (k + 1) * n + i)] = tau;
            }
        }
        let e = big.exp();
        let block = |k: usize| e.view((0, k * n), (n, n)).into_owned();
        Self {
            exp: block(0),
            m0: block(1) * b,
            m1: block(2) * b,
            // the chain yields ∫ e^{A(τ−σ)} σ²/2 dσ
            m2: block(3) * b * 2.0,
        }
    }
}

struct StepTable {
    entries: Vec<QuadStep>,
    taus: Vec<f64>,
}

impl StepTable {
    fn get(&mut self, a: &Matrix, b: &Matrix, tau: f64) -> &QuadStep {
        let pos = self
            .taus
            .iter()
            .position(|&c| (c - tau).abs() <= 1e-14 * tau.max(1e-300));
        let idx = match pos {
            Some(i) => i,
            None => {
                self.taus.push(tau);
                self.entries.push(QuadStep::new(a, b, tau));
                self.entries.len() - 1
            }
        };
        &self.entries[idx]
    }
}

/// Coefficients of the quadratic through `(d_j, v_j)`, in powers of the
/// local offset.
fn quadratic_coeffs(d: [f64; 3], v: [&Vector; 3]) -> [Vector; 3] {
    let dim = v[0].len();
    let mut c = [Vector::zeros(dim), Vector::zeros(dim), Vector::zeros(dim)];
    for j in 0..3 {
        let (p, q) = ((j + 1) % 3, (j + 2) % 3);
        let denom = (d[j] - d[p]) * (d[j] - d[q]);
        c[0] += v[j] * (d[p] * d[q] / denom);
        c[1] -= v[j] * ((d[p] + d[q]) / denom);
        c[2] += v[j] / denom;
    }
    c
}

/// `y(t) = e^{At}x + ∫₀ᵗ e^{A(t−σ)}Bv(σ)dσ` at the grid nodes, with `v`
/// interpolated by local quadratics through its node values.
fn convolve(
    model: &LqModel,
    table: &mut StepTable,
    nodes: &[f64],
    x: &Vector,
    v: &[Vector],
) -> Vec<Vector> {
    let mut y = Vec::with_capacity(nodes.len());
    y.push(x.clone());
    let last = nodes.len() - 1;
    for i in 0..last {
        let h = nodes[i + 1] - nodes[i];
        let step = table.get(&model.a, &model.b, h);
        let mut next = &step.exp * &y[i];
        if last == 1 {
            let slope = (&v[1] - &v[0]) / h;
            next += &step.m0 * &v[0] + &step.m1 * slope;
        } else {
            let j = if i + 2 <= last { i } else { i - 1 };
            let d = [nodes[j] - nodes[i], nodes[j + 1] - nodes[i], nodes[j + 2] - nodes[i]];
            let c = quadratic_coeffs(d, [&v[j], &v[j + 1], &v[j + 2]]);
            next += &step.m0 * &c[0] + &step.m1 * &c[1] + &step.m2 * &c[2];
        }
        y.push(next);
    }
    y
}

fn check_inputs(model: &LqModel, gain: &GainSource, x: &Vector, grid: &TimeGrid) -> Result<()> {
    if x.len() != model.n() {
        return Err(Error::Dimension(format!(
            "initial state has length {}, n = {}",
            x.len(),
            model.n()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    if grid.len() < 2 {
        return Err(Error::GridMismatch("closed loop needs at least one interval".into()));
    }
    gain.check(model, grid.start(), grid.end())
}

fn trajectory(grid: &TimeGrid, states: Vec<Vector>) -> Trajectory {
    Trajectory {
        grid: grid.clone(),
        states,
        controls: None,
        cost: None,
        running_cost: None,
    }
}

/// Picard iteration `y_{k+1} = e^{A·}x − L(BᵀQ y_k)` for the closed-loop
/// integral equation on `grid`.
///
/// Differences are measured in `‖y‖_{X,r} = sup_t e^{−rt}‖(−A)^ε y(t)‖`.
/// The iteration stops once the unweighted difference
/// `sup_t ‖(−A)^ε (y_{k+1} − y_k)(t)‖` is below `tol` times
/// `max(1, sup_t ‖(−A)^ε y_{k+1}(t)‖)`, so the accuracy of the limit does not
/// depend on `r`.
pub fn closed_loop_fixed_point(
    model: &LqModel,
    gain: GainSource,
    x: &Vector,
    grid: &TimeGrid,
    r: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointTrace> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("weight rate r = {r} must be >= 0")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be > 0")));
    }
    check_inputs(model, &gain, x, grid)?;
    let nodes = grid.nodes();
    let frac = fractional_power(&model.a, model.assumption.epsilon)?;
    let gains = nodes
        .iter()
        .map(|&t| Ok(model.b.transpose() * gain.at(t)?))
        .collect::<Result<Vec<Matrix>>>()?;
    let mut table = StepTable {
        entries: Vec::new(),
        taus: Vec::new(),
    };
    let eps_norms = |y: &[Vector]| -> Vec<f64> { y.iter().map(|v| (&frac * v).norm()).collect() };

    let zero = vec![Vector::zeros(model.m()); nodes.len()];
    let mut current = convolve(model, &mut table, nodes, x, &zero);
    let mut iterates = vec![trajectory(grid, current.clone())];
    let mut factors = Vec::new();
    let mut differences = Vec::new();
    let mut last_plain = f64::INFINITY;
    let mut last_factor = f64::NAN;
    for _ in 0..max_iter {
        let v: Vec<Vector> = gains.iter().zip(&current).map(|(k, y)| -(k * y)).collect();
        let next = convolve(model, &mut table, nodes, x, &v);
        let diff: Vec<Vector> = next.iter().zip(&current).map(|(a, b)| a - b).collect();
        let diff_norms = eps_norms(&diff);
        let weighted = weighted_norm(nodes, &diff_norms, WeightedNorm::sup(r))?;
        let plain = diff_norms.iter().cloned().fold(0.0, f64::max);
        let next_norms = eps_norms(&next);
        let scale = next_norms.iter().cloned().fold(1.0, f64::max);
        // factors between differences at round-off level carry no information;
        // the unweighted gate selects the same iterations for every r
        let floor = 1e-13 * weighted_norm(nodes, &next_norms, WeightedNorm::sup(r))?;
        let plain_floor = 1e-11 * scale;
        if let Some(&prev) = differences.last() {
            if prev > floor && weighted > floor && last_plain > plain_floor && plain > plain_floor {
                last_factor = weighted / prev;
                factors.push(last_factor);
            }
        }
        differences.push(weighted);
        current = next;
        iterates.push(trajectory(grid, current.clone()));
        if !plain.is_finite() {
            return Err(Error::NonFinite("Picard iterate"));
        }
        // second clause: round-off floor reached and no further progress
        if plain <= tol * scale || (plain <= 1e-13 * scale && plain >= last_plain) {
            return Ok(FixedPointTrace {
                iterates,
                contraction_factors: factors,
                differences,
                rate: r,
                converged: true,
            });
        }
        last_plain = plain;
    }
    Err(Error::NotConverged {
        method: "closed-loop picard",
        iterations: max_iter,
        last: last_factor,
    })
}

/// RK4 for `y' = (A − BBᵀQ(t))y`, `y(t₀) = x`, reported on `grid`. Intervals
/// are sub-stepped so that `h(‖A‖ + ‖BBᵀ‖‖Q‖)` stays below
/// [`ACCURACY_STEP`].
pub fn closed_loop_ode(model: &LqModel, gain: GainSource, x: &Vector, grid: &TimeGrid) -> Result<Trajectory> {
    check_inputs(model, &gain, x, grid)?;
    let bbt = model.control_gram();
    let (a_norm, s_norm) = (norm2(&model.a), norm2(&bbt));
    let field = |t: f64, y: &Vector| -> Result<Vector> { Ok(&model.a * y - &bbt * (gain.at(t)? * y)) };
    let nodes = grid.nodes();
    let mut states = Vec::with_capacity(nodes.len());
    states.push(x.clone());
    let mut y = x.clone();
    for w in nodes.windows(2) {
        let h = w[1] - w[0];
        let q_norm = norm2(&gain.at(w[0])?).max(norm2(&gain.at(w[1])?));
        let sub = ((h * (a_norm + s_norm * q_norm) / ACCURACY_STEP).ceil() as usize).max(1);
        let dt = h / sub as f64;
        for k in 0..sub {
            let t = w[0] + k as f64 * dt;
            let k1 = field(t, &y)?;
            let k2 = field(t + 0.5 * dt, &(&y + &k1 * (0.5 * dt)))?;
            let k3 = field(t + 0.5 * dt, &(&y + &k2 * (0.5 * dt)))?;
            let k4 = field(t + dt, &(&y + &k3 * dt))?;
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        states.push(y.clone());
    }
    Ok(trajectory(grid, states))
}
