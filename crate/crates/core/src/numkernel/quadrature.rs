//! Quadrature on sampled grids and graded rules for integrands with an
//! integrable `t^{−γ}` singularity at the left endpoint.

use std::ops::{AddAssign, Mul};

use crate::error::{Error, Result};
use crate::tolerances::{GRADED_LEVELS, GRADED_ORDER, GRADED_RATIO};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Trapezoid,
    /// Composite Simpson on node pairs; an odd trailing interval is
    /// integrated with the quadratic through the last three nodes.
    Simpson,
}

/// Values that can be combined linearly by a quadrature rule.
pub trait Samples: Clone + AddAssign + Mul<f64, Output = Self> {}
impl<T: Clone + AddAssign + Mul<f64, Output = T>> Samples for T {}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("quadrature needs at least 2 nodes".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("grid"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// ∫ over [a, b] of the three Lagrange basis polynomials through x0 < x1 < x2.
fn quadratic_basis_integrals(x: [f64; 3], a: f64, b: f64) -> [f64; 3] {
    let o = x[0];
    let (x, a, b) = ([0.0, x[1] - o, x[2] - o], a - o, b - o);
    let prim = |p: f64, q: f64, t: f64| t * t * t / 3.0 - (p + q) * t * t / 2.0 + p * q * t;
    let int = |p: f64, q: f64| prim(p, q, b) - prim(p, q, a);
    [
        int(x[1], x[2]) / ((x[0] - x[1]) * (x[0] - x[2])),
        int(x[0], x[2]) / ((x[1] - x[0]) * (x[1] - x[2])),
        int(x[0], x[1]) / ((x[2] - x[0]) * (x[2] - x[1])),
    ]
}

/// Quadrature weights for the given grid.
pub fn weights(grid: &[f64], rule: Rule) -> Result<Vec<f64>> {
    check_grid(grid)?;
    let n = grid.len();
    let mut w = vec![0.0; n];
    match rule {
        Rule::Trapezoid => {
            for i in 0..n - 1 {
                let h = grid[i + 1] - grid[i];
                w[i] += 0.5 * h;
                w[i + 1] += 0.5 * h;
            }
        }
        Rule::Simpson => {
            if n == 2 {
                return weights(grid, Rule::Trapezoid);
            }
            let intervals = n - 1;
            let paired = intervals - intervals % 2;
            let mut i = 0;
            while i < paired {
                let x = [grid[i], grid[i + 1], grid[i + 2]];
                let c = quadratic_basis_integrals(x, x[0], x[2]);
                for k in 0..3 {
                    w[i + k] += c[k];
                }
                i += 2;
            }
            if paired < intervals {
                let x = [grid[n - 3], grid[n - 2], grid[n - 1]];
                let c = quadratic_basis_integrals(x, x[1], x[2]);
                for k in 0..3 {
                    w[n - 3 + k] += c[k];
                }
            }
        }
    }
    Ok(w)
}

/// Integrates sampled values (scalars, vectors or matrices) on a grid.
pub fn quadrature<T: Samples>(grid: &[f64], samples: &[T], rule: Rule) -> Result<T> {
    if samples.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} samples on a {}-node grid",
            samples.len(),
            grid.len()
        )));
    }
    let w = weights(grid, rule)?;
    let mut acc = samples[0].clone() * w[0];
    for (s, &wi) in samples.iter().zip(&w).skip(1) {
        acc += s.clone() * wi;
    }
    Ok(acc)
}

pub fn quadrature_scalar(grid: &[f64], samples: &[f64], rule: Rule) -> Result<f64> {
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("samples"));
    }
    quadrature(grid, samples, rule)
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch free, Newton on P_n).
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order.max(1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Sum of graded level sums plus the tail below the innermost level.
///
/// When consecutive level sums decay like a power law slower than the
/// panel ratio itself, the tail is the continued geometric series; for
/// integrands that are regular at the origin the `innermost` panel sum is
/// used instead.
pub fn extrapolate_tail(level_sums: &[f64], ratio: f64, innermost: impl FnOnce() -> f64) -> f64 {
    let body: f64 = level_sums.iter().sum();
    let n = level_sums.len();
    if n >= 2 {
        let (prev, last) = (level_sums[n - 2], level_sums[n - 1]);
        let rho = last / prev;
        let singular = rho > ratio * 1.05;
        if prev != 0.0 && singular && rho < 1.0 {
            return body + last * rho / (1.0 - rho);
        }
    }
    body + innermost()
}

/// Geometrically graded composite Gauss-Legendre rule on [a, b], clustered
/// toward `a`.
///
/// Panel k (k = 0..levels) covers `[a + L r^{k+1}, a + L r^k]`. The leftover
/// `[a, a + L r^levels]` is either integrated with one more Gauss panel or,
/// for scalar integrands, estimated by continuing the geometric series of the
/// last two panel sums, which is exact for pure power laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradedRule {
    pub levels: usize,
    pub order: usize,
    pub ratio: f64,
    /// Panels wider than this are split uniformly.
    pub max_width: Option<f64>,
}

impl Default for GradedRule {
    fn default() -> Self {
        Self {
            levels: GRADED_LEVELS,
            order: GRADED_ORDER,
            ratio: GRADED_RATIO,
            max_width: None,
        }
    }
}

/// Nodes and weights grouped by geometric level.
#[derive(Debug, Clone)]
pub struct GradedNodes {
    pub levels: Vec<(Vec<f64>, Vec<f64>)>,
    pub innermost: (Vec<f64>, Vec<f64>),
}

impl GradedNodes {
    pub fn all(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.levels
            .iter()
            .chain(std::iter::once(&self.innermost))
            .flat_map(|(x, w)| x.iter().copied().zip(w.iter().copied()))
    }

    pub fn count(&self) -> usize {
        self.levels.iter().map(|(x, _)| x.len()).sum::<usize>() + self.innermost.0.len()
    }
}

impl GradedRule {
    pub fn new(levels: usize, order: usize) -> Self {
        Self {
            levels,
            order,
            ..Self::default()
        }
    }

    /// Rule fitted to a generator: the innermost panel resolves the fastest
    /// decay `fastest_rate`, and no panel is wider than `max_width`.
    pub fn adapted(length: f64, fastest_rate: f64, max_width: f64) -> Self {
        let mut rule = Self::default();
        let need = (length * fastest_rate.max(1.0) * 10.0).log2().ceil();
        if need.is_finite() && need > 0.0 {
            rule.levels = rule.levels.max(need as usize + 2);
        }
        rule.max_width = Some(max_width);
        rule
    }

    pub fn nodes(&self, a: f64, b: f64) -> GradedNodes {
        let (gx, gw) = gauss_legendre(self.order);
        let panel = |lo: f64, hi: f64, xs: &mut Vec<f64>, ws: &mut Vec<f64>| {
            let width = hi - lo;
            let pieces = match self.max_width {
                Some(mw) if mw > 0.0 && width > mw => (width / mw).ceil() as usize,
                _ => 1,
            };
            let h = width / pieces as f64;
            for p in 0..pieces {
                let l = lo + p as f64 * h;
                for (&x, &w) in gx.iter().zip(&gw) {
                    xs.push(l + 0.5 * h * (x + 1.0));
                    ws.push(0.5 * h * w);
                }
            }
        };
        let len = b - a;
        let mut levels = Vec::with_capacity(self.levels);
        let mut hi = 1.0;
        for _ in 0..self.levels {
            let lo = hi * self.ratio;
            let (mut xs, mut ws) = (Vec::new(), Vec::new());
            panel(a + len * lo, a + len * hi, &mut xs, &mut ws);
            levels.push((xs, ws));
            hi = lo;
        }
        let (mut xs, mut ws) = (Vec::new(), Vec::new());
        panel(a, a + len * hi, &mut xs, &mut ws);
        GradedNodes {
            levels,
            innermost: (xs, ws),
        }
    }

    /// Scalar integral with geometric tail extrapolation.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
        if !(b > a) {
            return Err(Error::InvalidArgument(format!("empty interval [{a}, {b}]")));
        }
        let nodes = self.nodes(a, b);
        let sums: Vec<f64> = nodes
            .levels
            .iter()
            .map(|(x, w)| x.iter().zip(w).map(|(&t, &wt)| wt * f(t)).sum())
            .collect();
        if sums.iter().any(|s: &f64| s.is_nan()) {
            return Err(Error::NonFinite("integrand"));
        }
        Ok(extrapolate_tail(&sums, self.ratio, || self.innermost_sum(&nodes, &f)))
    }

    fn innermost_sum(&self, nodes: &GradedNodes, f: &impl Fn(f64) -> f64) -> f64 {
        let (x, w) = &nodes.innermost;
        x.iter().zip(w).map(|(&t, &wt)| wt * f(t)).sum()
    }

    /// Integral of a vector- or matrix-valued integrand; the innermost panel
    /// is integrated directly (no extrapolation).
    pub fn integrate_samples<T: Samples>(&self, a: f64, b: f64, f: impl Fn(f64) -> T) -> Result<T> {
        if !(b > a) {
            return Err(Error::InvalidArgument(format!("empty interval [{a}, {b}]")));
        }
        let nodes = self.nodes(a, b);
        let mut acc: Option<T> = None;
        for (t, w) in nodes.all() {
            let v = f(t) * w;
            match acc.as_mut() {
                Some(s) => *s += v,
                None => acc = Some(v),
            }
        }
        acc.ok_or_else(|| Error::InvalidArgument("graded rule produced no nodes".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_linear() {
        let grid: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let ones = vec![1.0; 11];
        assert!((quadrature_scalar(&grid, &ones, Rule::Trapezoid).unwrap() - 1.0).abs() < 1e-15);
        assert!((quadrature_scalar(&grid, &ones, Rule::Simpson).unwrap() - 1.0).abs() < 1e-14);
        // dyadic nodes so the linear case is exact in floating point too
        let dyadic: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        assert_eq!(quadrature_scalar(&dyadic, &dyadic, Rule::Trapezoid).unwrap(), 0.5);
    }

    #[test]
    fn simpson_odd_intervals_exact_for_quadratics() {
        let grid: Vec<f64> = vec![0.0, 0.1, 0.35, 0.5, 0.8, 1.0];
        let f: Vec<f64> = grid.iter().map(|t| 3.0 * t * t - t + 2.0).collect();
        let exact = 1.0 - 0.5 + 2.0;
        assert!((quadrature_scalar(&grid, &f, Rule::Simpson).unwrap() - exact).abs() < 1e-14);
    }

    #[test]
    fn errors() {
        assert!(quadrature_scalar(&[0.0], &[1.0], Rule::Trapezoid).is_err());
        assert!(quadrature_scalar(&[0.0, 1.0], &[1.0, f64::NAN], Rule::Trapezoid).is_err());
        assert!(quadrature_scalar(&[0.0, 0.0], &[1.0, 1.0], Rule::Trapezoid).is_err());
    }

    #[test]
    fn gauss_legendre_exactness() {
        for order in 1..12 {
            let (x, w) = gauss_legendre(order);
            for deg in 0..(2 * order) {
                let approx: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "order {order} deg {deg}");
            }
        }
    }

    #[test]
    fn graded_inverse_sqrt() {
        let rule = GradedRule::new(16, 4);
        assert_eq!(rule.nodes(0.0, 1.0).levels.iter().map(|l| l.0.len()).sum::<usize>(), 64);
        let v = rule.integrate(0.0, 1.0, |t| t.powf(-0.5)).unwrap();
        assert!((v - 2.0).abs() < 1e-4, "{v}");
    }
}
