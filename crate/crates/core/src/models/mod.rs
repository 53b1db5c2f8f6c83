//! Finite-dimensional surrogate LQ problems.
//!
//! A model is the quadruple `(A, B, R, T)` plus the constants of the
//! regularity hypotheses. Unboundedness of the control operator is emulated
//! by grading the entries of `B` against the spectrum of `A`, so the
//! constants blow up as the dimension grows.

mod generators;
mod io;

use std::collections::BTreeMap;

pub use generators::{composite_surrogate, heat_boundary_surrogate, random_stable, scalar_model, shipped_models};
pub use io::{load_model, parse_model, save_model, write_model, MODEL_FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::numkernel::{
    ensure_finite, ensure_square, fractional_power, norm2, spectral_abscissa, Matrix, Propagator,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

impl Horizon {
    pub fn is_finite(&self) -> bool {
        matches!(self, Horizon::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Horizon::Finite(t) => Some(t),
            Horizon::Infinite => None,
        }
    }
}

/// Constants of the singular estimate, the L^q regularity hypothesis and
/// exponential stability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionParams {
    /// Singular exponent: ‖F(t)‖ ≤ N t^{−γ}.
    pub gamma: f64,
    pub n_const: f64,
    /// Fractional domain exponent ε of D(A^ε).
    pub epsilon: f64,
    /// Summability exponent q ∈ (1, 2) of the kernel B*e^{A*t}(A*)^ε.
    pub q: f64,
    /// Stability margin: ‖e^{At}‖ ≤ M e^{−ωt}.
    pub omega: f64,
    /// Decay rate of the singular component, N t^{−γ} e^{−ηt}.
    pub eta: f64,
    pub m_const: f64,
    /// Weight exponent for the e^{δt}-weighted kernel spaces.
    pub delta: f64,
}

impl AssumptionParams {
    /// Consistent defaults for a given singular exponent: ε = (1−γ)/4 and
    /// q = 2/(1+γ), so that q(γ+ε) < 1 and the kernel is L^q near t = 0.
    pub fn for_gamma(gamma: f64, omega: f64, m_const: f64) -> Self {
        Self {
            gamma,
            n_const: 1.0,
            epsilon: (1.0 - gamma) / 4.0,
            q: 2.0 / (1.0 + gamma),
            omega,
            eta: omega,
            m_const: m_const.max(1.0),
            delta: 0.5 * omega,
        }
    }

    /// Conjugate exponent q' = q/(q−1).
    pub fn q_conjugate(&self) -> f64 {
        self.q / (self.q - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("assumption parameter {what}")));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma outside (0, 1)");
        }
        if !(self.q > 1.0 && self.q < 2.0) {
            return bad("q outside (1, 2)");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon outside (0, 1)");
        }
        if !(self.n_const > 0.0 && self.omega > 0.0 && self.eta > 0.0) {
            return bad("N, omega, eta must be positive");
        }
        if !(self.m_const >= 1.0) {
            return bad("M must be >= 1");
        }
        if !(self.delta >= 0.0 && self.delta < self.omega.min(self.eta)) {
            return bad("delta outside [0, min(omega, eta))");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqModel {
    pub id: String,
    pub a: Matrix,
    pub b: Matrix,
    pub r: Matrix,
    pub horizon: Horizon,
    /// State indices (0-based) carrying the parabolic, singular part of the
    /// control action.
    pub parabolic: Vec<usize>,
    pub assumption: AssumptionParams,
    /// Free-form provenance written to the model file.
    pub metadata: BTreeMap<String, String>,
}

impl LqModel {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.r.nrows()
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// `T` for finite-horizon models.
    pub fn horizon_length(&self) -> Result<f64> {
        self.horizon
            .finite()
            .ok_or_else(|| Error::HorizonMismatch(format!("model {} has infinite horizon", self.id)))
    }

    pub fn require_infinite(&self) -> Result<()> {
        match self.horizon {
            Horizon::Infinite => Ok(()),
            Horizon::Finite(t) => Err(Error::HorizonMismatch(format!(
                "model {} has finite horizon T = {t}",
                self.id
            ))),
        }
    }

    /// B Bᵀ.
    pub fn control_gram(&self) -> Matrix {
        &self.b * self.b.transpose()
    }

    /// Rᵀ R.
    pub fn observation_gram(&self) -> Matrix {
        self.r.transpose() * &self.r
    }

    pub fn abscissa(&self) -> f64 {
        spectral_abscissa(&self.a)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_square(&self.a, "A")?;
        ensure_finite(&self.a, "A")?;
        ensure_finite(&self.b, "B")?;
        ensure_finite(&self.r, "R")?;
        let n = self.n();
        if n == 0 {
            return Err(Error::Dimension("empty model".into()));
        }
        if self.b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, n = {n}", self.b.nrows())));
        }
        if self.r.ncols() != n {
            return Err(Error::Dimension(format!("R has {} columns, n = {n}", self.r.ncols())));
        }
        if let Some(&bad) = self.parabolic.iter().find(|&&i| i >= n) {
            return Err(Error::Dimension(format!("parabolic index {bad} >= n = {n}")));
        }
        if let Horizon::Finite(t) = self.horizon {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument(format!("horizon T = {t} must be positive")));
            }
        }
        let smin = self.a.singular_values().min();
        if !(smin > 1e-14 * norm2(&self.a)) {
            return Err(Error::Singular("A (the generator must be boundedly invertible)"));
        }
        let abscissa = self.abscissa();
        if self.horizon == Horizon::Infinite && abscissa >= 0.0 {
            return Err(Error::Unstable { abscissa });
        }
        self.assumption.validate()
    }

    /// The adjoint kernel `Bᵀ e^{Aᵀt}` (m × n).
    pub fn adjoint_kernel(&self, prop: &Propagator, t: f64) -> Result<Matrix> {
        Ok(self.b.transpose() * prop.exp_adjoint(t)?)
    }

    /// Rows of B restricted to the parabolic block (other rows zeroed).
    pub fn parabolic_control(&self) -> Matrix {
        let mut bp = Matrix::zeros(self.n(), self.m());
        for &i in &self.parabolic {
            bp.set_row(i, &self.b.row(i));
        }
        bp
    }

    /// Caches the semigroup and the fractional powers (−A)^{±ε}.
    pub fn realize(&self) -> Result<Realization> {
        let prop = Propagator::new(&self.a)?;
        let eps = self.assumption.epsilon;
        Ok(Realization {
            frac_eps: fractional_power(&self.a, eps)?,
            frac_neg_eps: fractional_power(&self.a, -eps)?,
            bp: self.parabolic_control(),
            bbt: self.control_gram(),
            rtr: self.observation_gram(),
            prop,
        })
    }
}

/// Precomputed operators attached to one model.
#[derive(Debug, Clone)]
pub struct Realization {
    pub prop: Propagator,
    /// (−A)^ε
    pub frac_eps: Matrix,
    /// (−A)^{−ε}
    pub frac_neg_eps: Matrix,
    bp: Matrix,
    pub bbt: Matrix,
    pub rtr: Matrix,
}

/// Splits `Bᵀe^{Aᵀt} = F(t) + G(t)`: `F` is the action of the rows of `B` in
/// the parabolic block, `G` the remainder.
pub fn decompose_adjoint_kernel(model: &LqModel, t: f64) -> Result<(Matrix, Matrix)> {
    let prop = Propagator::new(&model.a)?;
    decompose_with(model, &prop, &model.parabolic_control(), t)
}

pub(crate) fn decompose_with(
    model: &LqModel,
    prop: &Propagator,
    bp: &Matrix,
    t: f64,
) -> Result<(Matrix, Matrix)> {
    if model.n() == 0 {
        return Err(Error::Dimension("empty model".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("kernel split needs t > 0, got {t}")));
    }
    let e = prop.exp_adjoint(t)?;
    let f = bp.transpose() * &e;
    let g = (&model.b - bp).transpose() * &e;
    Ok((f, g))
}

impl Realization {
    pub fn split_kernel(&self, model: &LqModel, t: f64) -> Result<(Matrix, Matrix)> {
        decompose_with(model, &self.prop, &self.bp, t)
    }
}
