use super::residuals::ExpCache;
use super::{DreSolution, MatrixPath};
use crate::error::{Error, Result};
use crate::models::LqModel;
use crate::numkernel::{fractional_power, min_symmetric_eigenvalue, norm2, symmetrize, Matrix};
use crate::rng;
use crate::tolerances::{CLASS_CONTINUITY_JUMP, PSD_FLOOR, SYMMETRY};

/// Membership of a Riccati path in the uniqueness class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    /// max adjacent-node ‖Q(t_{i+1}) − Q(t_i)‖ relative to sup‖Q‖
    pub continuity_jump: f64,
    /// max ‖Q − Qᵀ‖ relative to max(1, sup‖Q‖)
    pub asymmetry: f64,
    /// min eigenvalue relative to max(1, sup‖Q‖)
    pub min_eigenvalue: f64,
    pub terminal: f64,
    /// sup_t ‖BᵀQ(t)(−A)^{−ε}‖
    pub gain_sup: f64,
}

impl ClassReport {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.continuity_jump <= CLASS_CONTINUITY_JUMP) {
            out.push(format!("continuity jump {:e}", self.continuity_jump));
        }
        if !(self.asymmetry <= SYMMETRY) {
            out.push(format!("asymmetry {:e}", self.asymmetry));
        }
        if !(self.min_eigenvalue >= PSD_FLOOR) {
            out.push(format!("min eigenvalue {:e}", self.min_eigenvalue));
        }
        if self.terminal != 0.0 {
            out.push(format!("terminal value {:e}", self.terminal));
        }
        if !self.gain_sup.is_finite() {
            out.push("unbounded gain".into());
        }
        out
    }

    pub fn pass(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn require(&self) -> Result<()> {
        match self.violations() {
            v if v.is_empty() => Ok(()),
            v => Err(Error::ClassViolation(v.join("; "))),
        }
    }
}

pub fn class_check(path: &MatrixPath, model: &LqModel) -> Result<ClassReport> {
    let frac_neg = fractional_power(&model.a, -model.assumption.epsilon)?;
    Ok(class_check_with(path, model, &frac_neg))
}

fn class_check_with(path: &MatrixPath, model: &LqModel, frac_neg: &Matrix) -> ClassReport {
    let sup = path.sup_norm();
    let scale = sup.max(1.0);
    let continuity_jump = if sup > 0.0 {
        path.values
            .windows(2)
            .map(|w| norm2(&(&w[1] - &w[0])))
            .fold(0.0, f64::max)
            / sup
    } else {
        0.0
    };
    let asymmetry = path
        .values
        .iter()
        .map(|q| (q - q.transpose()).amax())
        .fold(0.0, f64::max)
        / scale;
    let min_eigenvalue = path
        .values
        .iter()
        .map(min_symmetric_eigenvalue)
        .fold(f64::INFINITY, f64::min)
        / scale;
    let terminal = path.values.last().map(|q| q.amax()).unwrap_or(0.0);
    let bt = model.b.transpose();
    let gain_sup = path
        .values
        .iter()
        .map(|q| norm2(&(&bt * q * frac_neg)))
        .fold(0.0, f64::max);
    ClassReport {
        continuity_jump,
        asymmetry,
        min_eigenvalue,
        terminal,
        gain_sup,
    }
}

fn same_grid(paths: &[&MatrixPath]) -> Result<()> {
    if paths.windows(2).any(|w| w[0].grid != w[1].grid) {
        return Err(Error::GridMismatch("uniqueness map paths on different grids".into()));
    }
    Ok(())
}

/// Backward recursion for `V(s) = −∫_s^T e^{Aᵀ(r−s)} M(r) e^{A(r−s)} dr`,
/// `M = P1 BBᵀ Q + Q BBᵀ P`, on nodes `from..=N`.
fn map_recursion(
    q: &MatrixPath,
    p: &MatrixPath,
    p1: &MatrixPath,
    model: &LqModel,
    exps: &mut ExpCache,
    from: usize,
) -> Vec<Matrix> {
    let s = model.control_gram();
    let nodes = q.grid.nodes();
    let last = nodes.len() - 1;
    let n = model.n();
    let m_at = |i: usize, t: f64| {
        let qt = q.eval_in(i, t);
        p1.eval_in(i, t) * &s * &qt + &qt * &s * p.eval_in(i, t)
    };
    let mut out = vec![Matrix::zeros(n, n); last + 1 - from];
    for i in (from..last).rev() {
        let (a, b) = (nodes[i], nodes[i + 1]);
        let eh = exps.get(0.5 * (b - a)).clone();
        let ef = exps.get(b - a).clone();
        let quad = (m_at(i, a)
            + eh.transpose() * m_at(i, 0.5 * (a + b)) * &eh * 4.0
            + ef.transpose() * m_at(i, b) * &ef)
            * ((b - a) / 6.0);
        out[i - from] = ef.transpose() * &out[i + 1 - from] * &ef - quad;
    }
    out
}

/// The map at every node of the shared grid.
pub fn uniqueness_map_path(
    q: &MatrixPath,
    p: &DreSolution,
    p1: &DreSolution,
    model: &LqModel,
) -> Result<MatrixPath> {
    same_grid(&[q, &p.path, &p1.path])?;
    let mut exps = ExpCache::new(&model.a)?;
    let values = map_recursion(q, &p.path, &p1.path, model, &mut exps, 0);
    MatrixPath::new(q.grid.clone(), values, None)
}

/// `−∫_s^T e^{Aᵀ(r−s)}[P1(r)BBᵀQ(r) + Q(r)BBᵀP(r)]e^{A(r−s)} dr`.
pub fn uniqueness_map_apply(
    q: &MatrixPath,
    p: &DreSolution,
    p1: &DreSolution,
    model: &LqModel,
    s: f64,
) -> Result<Matrix> {
    same_grid(&[q, &p.path, &p1.path])?;
    let grid = &q.grid;
    if s < grid.start() || s > grid.end() {
        return Err(Error::GridMismatch(format!("s = {s} outside the grid")));
    }
    let mut exps = ExpCache::new(&model.a)?;
    let nodes = grid.nodes();
    let j = nodes.partition_point(|&t| t < s);
    let tail = map_recursion(q, &p.path, &p1.path, model, &mut exps, j);
    if nodes[j] == s {
        return Ok(tail[0].clone());
    }
    // partial piece [s, t_j] inside interval j − 1
    let sq = model.control_gram();
    let m_at = |t: f64| {
        let qt = q.eval_in(j - 1, t);
        p1.path.eval_in(j - 1, t) * &sq * &qt + &qt * &sq * p.path.eval_in(j - 1, t)
    };
    let (a, b) = (s, nodes[j]);
    let eh = exps.get(0.5 * (b - a)).clone();
    let ef = exps.get(b - a).clone();
    let quad = (m_at(a) + eh.transpose() * m_at(0.5 * (a + b)) * &eh * 4.0 + ef.transpose() * m_at(b) * &ef)
        * ((b - a) / 6.0);
    Ok(ef.transpose() * &tail[0] * &ef - quad)
}

/// Estimated norm of `Q ↦ 𝓜Q` on paths supported in `[T − δ, T]`, in the
/// norm `sup_s ‖BᵀQ(s)(−A)^{−ε}‖` over the window.
///
/// Probes are random symmetric paths on every dyadic sub-window (node
/// counts W, W/2, W/4, ...), each followed by a few power iterations. The
/// probe set of a window contains that of every smaller dyadic window, so
/// the estimate is monotone in δ.
pub fn uniqueness_contraction_estimate(
    p: &DreSolution,
    p1: &DreSolution,
    model: &LqModel,
    delta: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    const POWER_STEPS: usize = 3;
    let t_end = p.horizon();
    if !(delta > 0.0 && delta <= t_end * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!("window {delta} outside (0, {t_end}]")));
    }
    same_grid(&[&p.path, &p1.path])?;
    if model.b.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let frac_neg = fractional_power(&model.a, -model.assumption.epsilon)?;
    class_check_with(&p.path, model, &frac_neg).require()?;
    class_check_with(&p1.path, model, &frac_neg).require()?;

    let grid = p.grid().clone();
    let nodes = grid.nodes();
    let last = nodes.len() - 1;
    let cut = t_end - delta - 1e-12 * t_end;
    let window = last - nodes.partition_point(|&t| t < cut);
    let lo = last - window;
    let n = model.n();
    let bt = model.b.transpose();
    let gain = |q: &Matrix| norm2(&(&bt * q * &frac_neg));
    let mut exps = ExpCache::new(&model.a)?;

    let mut best: f64 = 0.0;
    let mut w = window;
    while w >= 2 {
        let start = last - w;
        for k in 0..probes {
            let mut g = rng::rng(rng::sub_seed(seed, w as u64), k as u64);
            let mut values = vec![Matrix::zeros(n, n); last + 1];
            for v in values.iter_mut().take(last).skip(start + 1) {
                *v = symmetrize(&rng::gaussian_matrix(&mut g, n, n));
            }
            let mut q = MatrixPath::new(grid.clone(), values, None)?;
            for _ in 0..POWER_STEPS {
                let qn = q.values[lo..].iter().map(gain).fold(0.0, f64::max);
                if !(qn > 0.0) {
                    break;
                }
                let mq = map_recursion(&q, &p.path, &p1.path, model, &mut exps, lo);
                let mn = mq.iter().map(gain).fold(0.0, f64::max);
                best = best.max(mn / qn);
                // next iterate: the image restricted to the probe's own window
                let mut values = vec![Matrix::zeros(n, n); last + 1];
                for i in start + 1..last {
                    values[i] = &mq[i - lo] / qn;
                }
                q = MatrixPath::new(grid.clone(), values, None)?;
            }
        }
        w /= 2;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dre::{solve_dre, Integrator};
    use crate::models::{heat_boundary_surrogate, random_stable};

    #[test]
    fn zero_q_maps_to_zero() {
        let m = random_stable(3, 1, 2, 2, 0.5).unwrap();
        let p = solve_dre(&m, 50, Integrator::Rk4).unwrap();
        let q = MatrixPath::zeros(p.grid().clone(), 3);
        assert_eq!(uniqueness_map_apply(&q, &p, &p, &m, 0.3).unwrap().amax(), 0.0);
    }

    #[test]
    fn difference_of_integrators_is_a_fixed_point() {
        let m = random_stable(3, 2, 2, 4, 0.5).unwrap();
        let mut prev = f64::INFINITY;
        for steps in [50, 100, 200] {
            let p = solve_dre(&m, steps, Integrator::Rk4).unwrap();
            let p1 = solve_dre(&m, steps, Integrator::ImplicitMidpoint).unwrap();
            let q = p1.path.difference(&p.path).unwrap();
            let v = uniqueness_map_apply(&q, &p, &p1, &m, 0.0).unwrap();
            let err = norm2(&(v - &q.values[0]));
            assert!(err < prev / 2.0, "{err} vs {prev}");
            prev = err;
        }
    }

    #[test]
    fn contraction_monotone_and_zero_without_control() {
        let m = heat_boundary_surrogate(6, 0.5).unwrap();
        let p = solve_dre(&m, 256, Integrator::Rk4).unwrap();
        let full = uniqueness_contraction_estimate(&p, &p, &m, 1.0, 2, 3).unwrap();
        let half = uniqueness_contraction_estimate(&p, &p, &m, 0.5, 2, 3).unwrap();
        assert!(half <= full && full > 0.0);

        let mut m0 = m.clone();
        m0.b.fill(0.0);
        let p0 = solve_dre(&m0, 16, Integrator::Rk4).unwrap();
        assert_eq!(uniqueness_contraction_estimate(&p0, &p0, &m0, 1.0, 2, 3).unwrap(), 0.0);
    }

    #[test]
    fn class_report_flags_violations() {
        let m = random_stable(3, 1, 2, 2, 0.5).unwrap();
        let p = solve_dre(&m, 50, Integrator::Rk4).unwrap();
        assert!(class_check(&p.path, &m).unwrap().pass());
        let mut bad = p.path.clone();
        bad.values[50][(0, 0)] = 1.0;
        assert!(!class_check(&bad, &m).unwrap().pass());
    }
}
