//! Differential Riccati equation on a finite horizon
//! `P' = −(AᵀP + PA − PBBᵀP + RᵀR)`, `P(T) = 0`, integrated backward.

mod residuals;
mod uniqueness;

pub use residuals::{
    gain_square_integrability, ire_residual, ire_strong_residual, opric_selfconsistency,
    OpricReport,
};
pub use uniqueness::{
    class_check, uniqueness_contraction_estimate, uniqueness_map_apply, uniqueness_map_path,
    ClassReport,
};

use std::fmt;
use std::str::FromStr;

use crate::are::{newton_kleinman, row_major};
use crate::error::{Error, Result};
use crate::models::LqModel;
use crate::numkernel::{min_symmetric_eigenvalue, norm2, symmetrize, Matrix};
use crate::semiflow::TimeGrid;
use crate::tolerances::{DRE_BLOWUP, NEWTON_TOL, PSD_FLOOR, RK4_STIFFNESS_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    ImplicitMidpoint,
}

impl Integrator {
    pub fn order(&self) -> u32 {
        match self {
            Integrator::Rk4 => 4,
            Integrator::ImplicitMidpoint => 2,
        }
    }
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::Rk4 => "rk4",
            Integrator::ImplicitMidpoint => "implicit-midpoint",
        })
    }
}

impl FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Integrator::Rk4),
            "implicit-midpoint" | "midpoint" => Ok(Integrator::ImplicitMidpoint),
            other => Err(Error::Parse(format!("unknown integrator {other:?}"))),
        }
    }
}

/// Matrix-valued path on a grid, with optional node derivatives for cubic
/// Hermite interpolation (linear interpolation otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPath {
    pub grid: TimeGrid,
    pub values: Vec<Matrix>,
    pub derivs: Option<Vec<Matrix>>,
}

impl MatrixPath {
    pub fn new(grid: TimeGrid, values: Vec<Matrix>, derivs: Option<Vec<Matrix>>) -> Result<Self> {
        if values.len() != grid.len() || derivs.as_ref().is_some_and(|d| d.len() != grid.len()) {
            return Err(Error::GridMismatch(format!(
                "{} values on a {}-node grid",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            derivs,
        })
    }

    pub fn zeros(grid: TimeGrid, n: usize) -> Self {
        let values = vec![Matrix::zeros(n, n); grid.len()];
        Self {
            grid,
            values,
            derivs: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.values[0].nrows()
    }

    /// Value at `t` inside interval `i`.
    pub fn eval_in(&self, i: usize, t: f64) -> Matrix {
        let nodes = self.grid.nodes();
        let (t0, t1) = (nodes[i], nodes[i + 1]);
        let h = t1 - t0;
        let th = (t - t0) / h;
        let (p0, p1) = (&self.values[i], &self.values[i + 1]);
        match &self.derivs {
            Some(d) => {
                let th2 = th * th;
                let th3 = th2 * th;
                let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
                let h10 = th3 - 2.0 * th2 + th;
                let h01 = -2.0 * th3 + 3.0 * th2;
                let h11 = th3 - th2;
                p0 * h00 + &d[i] * (h * h10) + p1 * h01 + &d[i + 1] * (h * h11)
            }
            None => p0 * (1.0 - th) + p1 * th,
        }
    }

    pub fn eval(&self, t: f64) -> Result<Matrix> {
        let i = self.grid.interval(t).ok_or_else(|| {
            Error::GridMismatch(format!(
                "t = {t} outside [{}, {}]",
                self.grid.start(),
                self.grid.end()
            ))
        })?;
        Ok(self.eval_in(i, t))
    }

    /// `self − other` on a shared grid.
    pub fn difference(&self, other: &MatrixPath) -> Result<MatrixPath> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("paths on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        let derivs = match (&self.derivs, &other.derivs) {
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x - y).collect()),
            _ => None,
        };
        MatrixPath::new(self.grid.clone(), values, derivs)
    }

    /// `sup_t ‖Q(t)‖₂`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(norm2).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DreSolution {
    /// P(t) with node derivatives dP/dt from the equation itself.
    pub path: MatrixPath,
    /// K(t) = BᵀP(t)
    pub k: Vec<Matrix>,
    pub integrator: Integrator,
    pub model_id: String,
}

impl DreSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.path.grid
    }

    pub fn p(&self, i: usize) -> &Matrix {
        &self.path.values[i]
    }

    pub fn horizon(&self) -> f64 {
        self.path.grid.end()
    }

    /// Hermite-interpolated P(t).
    pub fn eval(&self, t: f64) -> Result<Matrix> {
        self.path.eval(t)
    }

    /// CSV with one row per node: `t`, `vec(P)`, `vec(K)` (row-major).
    pub fn to_csv(&self) -> Result<String> {
        let n = self.path.dim();
        let m = self.k[0].nrows();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
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
        w.write_record(&header)?;
        for (idx, &t) in self.grid().nodes().iter().enumerate() {
            let mut row = vec![format!("{t:.16e}")];
            row.extend(row_major(&self.path.values[idx]));
            row.extend(row_major(&self.k[idx]));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        Ok(format!(
            "# model_id = {}\n# integrator = {}\n{}",
            self.model_id,
            self.integrator,
            String::from_utf8_lossy(&bytes)
        ))
    }

    /// Reads a solution written by [`DreSolution::to_csv`]; derivatives are
    /// recomputed from `model`.
    pub fn from_csv(text: &str, model: &LqModel) -> Result<Self> {
        let mut model_id = None;
        let mut integrator = None;
        let mut body = String::new();
        for line in text.lines() {
            match line.strip_prefix('#') {
                Some(c) => {
                    if let Some((k, v)) = c.split_once('=') {
                        match k.trim() {
                            "model_id" => model_id = Some(v.trim().to_string()),
                            "integrator" => integrator = Some(v.trim().parse::<Integrator>()?),
                            _ => {}
                        }
                    }
                }
                None => {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
        let (n, m) = (model.n(), model.m());
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let (mut ts, mut ps, mut ks) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 1 + n * n + m * n {
                return Err(Error::Parse(format!(
                    "row has {} fields, expected {}",
                    rec.len(),
                    1 + n * n + m * n
                )));
            }
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            ts.push(vals[0]);
            ps.push(Matrix::from_row_slice(n, n, &vals[1..1 + n * n]));
            ks.push(Matrix::from_row_slice(m, n, &vals[1 + n * n..]));
        }
        let grid = TimeGrid::new(ts)?;
        let derivs = ps.iter().map(|p| -riccati_operator(model, p)).collect();
        Ok(Self {
            path: MatrixPath::new(grid, ps, Some(derivs))?,
            k: ks,
            integrator: integrator.ok_or_else(|| Error::Parse("missing integrator header".into()))?,
            model_id: model_id.ok_or_else(|| Error::Parse("missing model_id header".into()))?,
        })
    }
}

/// `AᵀP + PA − PBBᵀP + RᵀR`.
pub fn riccati_operator(model: &LqModel, p: &Matrix) -> Matrix {
    crate::are::are_operator(model, p)
}

struct Stepper<'a> {
    model: &'a LqModel,
    a_norm: f64,
    s: Matrix,
    w: Matrix,
}

impl Stepper<'_> {
    fn f(&self, p: &Matrix) -> Matrix {
        let pa = p * &self.model.a;
        pa.transpose() + pa - p * &self.s * p + &self.w
    }

    /// One backward step of length `h` (forward in reversed time).
    fn rk4(&self, p: &Matrix, h: f64) -> Matrix {
        let stiff = h * (2.0 * self.a_norm + norm2(&self.s) * p.norm());
        let sub = ((stiff / RK4_STIFFNESS_LIMIT).ceil() as usize).max(1);
        let dt = h / sub as f64;
        let mut x = p.clone();
        for _ in 0..sub {
            let k1 = self.f(&x);
            let k2 = self.f(&(&x + &k1 * (0.5 * dt)));
            let k3 = self.f(&(&x + &k2 * (0.5 * dt)));
            let k4 = self.f(&(&x + &k3 * dt));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            x = symmetrize(&x);
        }
        x
    }

    /// Implicit midpoint: the midpoint value M solves a CARE with shifted
    /// generator `A − I/h` and source `RᵀR + (2/h)P`.
    fn midpoint(&self, p: &Matrix, h: f64) -> Result<Matrix> {
        let n = p.nrows();
        let a_shift = &self.model.a - Matrix::identity(n, n) * (1.0 / h);
        let w = &self.w + p * (2.0 / h);
        let (m, _) = match newton_kleinman(&a_shift, &self.s, &w, p, NEWTON_TOL) {
            Ok(r) => r,
            Err(_) => newton_kleinman(&a_shift, &self.s, &w, &Matrix::zeros(n, n), NEWTON_TOL)?,
        };
        Ok(symmetrize(&(m * 2.0 - p)))
    }
}

/// Backward integration from `P(T) = 0` on a uniform grid of `steps`
/// intervals.
pub fn solve_dre(model: &LqModel, steps: usize, integrator: Integrator) -> Result<DreSolution> {
    let t_end = model.horizon_length()?;
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 steps, got {steps}")));
    }
    let grid = TimeGrid::uniform(0.0, t_end, steps)?;
    let n = model.n();
    let stepper = Stepper {
        model,
        a_norm: norm2(&model.a),
        s: model.control_gram(),
        w: model.observation_gram(),
    };
    let nodes = grid.nodes().to_vec();
    let mut ps = vec![Matrix::zeros(n, n); steps + 1];
    for k in (0..steps).rev() {
        let h = nodes[k + 1] - nodes[k];
        let next = match integrator {
            Integrator::Rk4 => stepper.rk4(&ps[k + 1], h),
            Integrator::ImplicitMidpoint => stepper.midpoint(&ps[k + 1], h)?,
        };
        let norm = next.norm();
        if !norm.is_finite() || norm > DRE_BLOWUP {
            return Err(Error::BlowUp { t: nodes[k], norm });
        }
        ps[k] = next;
    }
    for (k, p) in ps.iter().enumerate() {
        let floor = PSD_FLOOR * norm2(p).max(1.0);
        let lam = min_symmetric_eigenvalue(p);
        if lam < floor {
            return Err(Error::ClassViolation(format!(
                "P(t) not positive semidefinite at t = {} (min eigenvalue {lam:e})",
                nodes[k]
            )));
        }
    }
    let derivs = ps.iter().map(|p| -stepper.f(p)).collect();
    let k = ps.iter().map(|p| model.b.transpose() * p).collect();
    Ok(DreSolution {
        path: MatrixPath::new(grid, ps, Some(derivs))?,
        k,
        integrator,
        model_id: model.id.clone(),
    })
}
