use super::quadrature::{quadrature_scalar, Rule};
use super::{Matrix, Vector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormMode {
    Sup,
    Lp(f64),
}

/// Exponentially weighted time norm: `sup_t e^{−rt}‖y(t)‖` or
/// `(∫ (e^{−rt}‖y(t)‖)^p dt)^{1/p}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNorm {
    pub rate: f64,
    pub mode: NormMode,
}

impl WeightedNorm {
    pub fn sup(rate: f64) -> Self {
        Self {
            rate,
            mode: NormMode::Sup,
        }
    }

    pub fn lp(rate: f64, p: f64) -> Self {
        Self {
            rate,
            mode: NormMode::Lp(p),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0) {
            return Err(Error::InvalidArgument(format!("weight rate {} < 0", self.rate)));
        }
        if let NormMode::Lp(p) = self.mode {
            if !(p >= 1.0) {
                return Err(Error::InvalidArgument(format!("exponent p = {p} < 1")));
            }
        }
        Ok(())
    }
}

/// Weighted norm of a path given by its pointwise norms on a grid.
pub fn weighted_norm(grid: &[f64], pointwise: &[f64], w: WeightedNorm) -> Result<f64> {
    w.validate()?;
    if grid.is_empty() || grid.len() != pointwise.len() {
        return Err(Error::Dimension(format!(
            "{} values on a {}-node grid",
            pointwise.len(),
            grid.len()
        )));
    }
    let weighted = grid
        .iter()
        .zip(pointwise)
        .map(|(&t, &v)| (-w.rate * t).exp() * v);
    match w.mode {
        NormMode::Sup => Ok(weighted.fold(0.0, f64::max)),
        NormMode::Lp(p) => {
            if grid.len() == 1 {
                return Ok(0.0);
            }
            let vals: Vec<f64> = weighted.map(|v| v.powf(p)).collect();
            Ok(quadrature_scalar(grid, &vals, Rule::Simpson)?.powf(1.0 / p))
        }
    }
}

/// `‖(−A)^ε x‖`, with the fractional power supplied precomputed.
pub fn d_eps_norm(frac_power: &Matrix, x: &Vector) -> f64 {
    (frac_power * x).norm()
}

/// Weighted norm of a vector path measured in the D(A^ε) norm
/// (`frac_power = None` means the plain Euclidean norm).
pub fn weighted_norm_of_path(
    grid: &[f64],
    path: &[Vector],
    frac_power: Option<&Matrix>,
    w: WeightedNorm,
) -> Result<f64> {
    let pointwise: Vec<f64> = path
        .iter()
        .map(|y| match frac_power {
            Some(f) => d_eps_norm(f, y),
            None => y.norm(),
        })
        .collect();
    weighted_norm(grid, &pointwise, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, t: f64) -> Vec<f64> {
        (0..=n).map(|i| t * i as f64 / n as f64).collect()
    }

    #[test]
    fn constant_sup() {
        let g = grid(10, 1.0);
        assert_eq!(weighted_norm(&g, &[1.0; 11], WeightedNorm::sup(0.0)).unwrap(), 1.0);
    }

    #[test]
    fn weight_cancels_growth() {
        let r = 0.7;
        let g = grid(100, 3.0);
        let vals: Vec<f64> = g.iter().map(|t| (r * t).exp()).collect();
        let v = weighted_norm(&g, &vals, WeightedNorm::sup(r)).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn weighted_l2() {
        let g = grid(200, 1.0);
        let v = weighted_norm(&g, &vec![1.0; 201], WeightedNorm::lp(1.0, 2.0)).unwrap();
        let exact = ((1.0 - (-2.0f64).exp()) / 2.0).sqrt();
        assert!((v - exact).abs() < 1e-3);
    }

    #[test]
    fn validation() {
        let g = grid(2, 1.0);
        assert!(weighted_norm(&g, &[1.0; 3], WeightedNorm::sup(-1.0)).is_err());
        assert!(weighted_norm(&g, &[1.0; 3], WeightedNorm::lp(0.0, 0.5)).is_err());
        assert!(weighted_norm(&[], &[], WeightedNorm::sup(0.0)).is_err());
    }
}
