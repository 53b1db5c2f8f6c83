use crate::error::{Error, Result};
use crate::models::LqModel;
use crate::numkernel::{symmetrize, ExpIntegrals, Matrix, Vector};
use crate::semiflow::TimeGrid;

/// Value matrices of the sampled problem: `values[k]` is the cost-to-go
/// from node `k`, `gains[k]` the optimal sampled feedback there.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDp {
    pub grid: TimeGrid,
    pub values: Vec<Matrix>,
    pub gains: Vec<Matrix>,
    pub dt: f64,
}

impl DiscreteDp {
    pub fn p0(&self) -> &Matrix {
        &self.values[0]
    }

    /// Optimal sampled cost `xᵀP_k x` from node `k`.
    pub fn cost_at(&self, k: usize, x: &Vector) -> f64 {
        (&self.values[k] * x).dot(x)
    }

    pub fn cost(&self, x: &Vector) -> f64 {
        self.cost_at(0, x)
    }
}

/// Backward Riccati difference recursion for `y_{k+1} = F y_k + G u_k`,
/// `F = e^{A dt}`, `G = ∫₀^{dt} e^{As}B ds`, stage cost
/// `dt(‖R y_k‖² + ‖u_k‖²)` and zero terminal cost.
pub fn discrete_dp_oracle(model: &LqModel, horizon: f64, dt: f64) -> Result<DiscreteDp> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step {dt} must be > 0")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be finite and > 0")));
    }
    let steps = (horizon / dt).round();
    if steps < 1.0 || (steps * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidArgument(format!("dt = {dt} does not divide T = {horizon}")));
    }
    let steps = steps as usize;
    let (n, m) = (model.n(), model.m());
    let e = ExpIntegrals::new(&model.a, dt)?;
    let f = e.exp;
    let g = &e.int1 * &model.b;
    let stage = model.observation_gram() * dt;
    let mut values = vec![Matrix::zeros(n, n); steps + 1];
    let mut gains = vec![Matrix::zeros(m, n); steps + 1];
    for k in (0..steps).rev() {
        let p = &values[k + 1];
        let gtp = g.transpose() * p;
        let lhs = Matrix::identity(m, m) * dt + &gtp * &g;
        let rhs = &gtp * &f;
        let gain = lhs
            .cholesky()
            .ok_or(Error::Singular("dt I + GᵀPG"))?
            .solve(&rhs);
        let next = &stage + f.transpose() * p * &f - rhs.transpose() * &gain;
        values[k] = symmetrize(&next);
        gains[k] = gain;
    }
    Ok(DiscreteDp {
        grid: TimeGrid::uniform(0.0, horizon, steps)?,
        values,
        gains,
        dt,
    })
}
