use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{AssumptionParams, Horizon, LqModel};
use crate::error::{Error, Result};
use crate::numkernel::{norm2, spectral_abscissa, Matrix, Propagator};
use crate::rng;

const MAX_RESAMPLES: usize = 32;
const GAMMA_CEILING: f64 = 0.99;

/// One-dimensional model `y' = a y + b u`, cost `r² y²`.
pub fn scalar_model(a: f64, b: f64, r: f64, horizon: Horizon) -> Result<LqModel> {
    let am = Matrix::from_element(1, 1, a);
    let omega = if a < 0.0 { -a } else { 1.0 };
    let mut metadata = BTreeMap::new();
    metadata.insert("generator".into(), "scalar".into());
    let model = LqModel {
        id: format!("scalar-a{a}-b{b}-r{r}"),
        a: am,
        b: Matrix::from_element(1, 1, b),
        r: Matrix::from_element(1, 1, r),
        horizon,
        parabolic: vec![0],
        assumption: AssumptionParams::for_gamma(0.5, omega, 1.0),
        metadata,
    };
    model.validate()?;
    Ok(model)
}

/// Diagonal heat surrogate with boundary-type control graded by `beta`.
pub fn heat_boundary_surrogate(n: usize, beta: f64) -> Result<LqModel> {
    if n == 0 {
        return Err(Error::InvalidArgument("heat surrogate needs n >= 1".into()));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!(
            "grading exponent beta = {beta} outside [0, 1)"
        )));
    }
    let lambda = |k: usize| (k as f64 * PI).powi(2);
    let a = Matrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| -lambda(i + 1)));
    let b = Matrix::from_fn(n, 1, |i, _| 2f64.sqrt() * lambda(i + 1).powf(beta));
    let gamma = (beta + 0.25).min(GAMMA_CEILING);
    let omega = PI * PI;

    let mut metadata = BTreeMap::new();
    metadata.insert("generator".into(), "heat".into());
    metadata.insert("n".into(), n.to_string());
    metadata.insert("beta".into(), beta.to_string());
    let model = LqModel {
        id: format!("heat-n{n}-b{beta}"),
        a,
        b,
        r: Matrix::identity(n, n),
        horizon: Horizon::Finite(1.0),
        parabolic: (0..n).collect(),
        assumption: AssumptionParams::for_gamma(gamma, omega, 1.0),
        metadata,
    };
    model.validate()?;
    Ok(model)
}

/// Damped oscillators (hyperbolic block) coupled to a diagonal heat block.
///
/// The hyperbolic block is a chain of rotations with frequencies kπ; the
/// coupling `[[0, κC], [−κCᵀ, 0]]` is skew, so `A + Aᵀ` is negative definite
/// and the semigroup is dissipative for every κ.
pub fn composite_surrogate(
    n_h: usize,
    n_p: usize,
    kappa: f64,
    damping: f64,
    seed: u64,
) -> Result<LqModel> {
    if n_h == 0 || n_p == 0 {
        return Err(Error::InvalidArgument("composite surrogate needs n_h, n_p >= 1".into()));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!("coupling kappa = {kappa} must be >= 0")));
    }
    if !(damping > 0.0 && damping.is_finite()) {
        return Err(Error::InvalidArgument(format!("damping = {damping} must be > 0")));
    }
    let n = n_h + n_p;
    let beta_par = 0.25;

    for attempt in 0..MAX_RESAMPLES {
        let mut g = rng::rng(seed, attempt as u64);
        let mut a = Matrix::zeros(n, n);
        for k in 0..n_h / 2 {
            let w = (k + 1) as f64 * PI;
            a[(2 * k, 2 * k + 1)] = w;
            a[(2 * k + 1, 2 * k)] = -w;
        }
        for i in 0..n_h {
            a[(i, i)] = -damping;
        }
        for k in 0..n_p {
            a[(n_h + k, n_h + k)] = -((k + 1) as f64 * PI).powi(2);
        }
        let c = rng::gaussian_matrix(&mut g, n_h, n_p) / (n_p as f64).sqrt();
        a.view_mut((0, n_h), (n_h, n_p)).copy_from(&(&c * kappa));
        a.view_mut((n_h, 0), (n_p, n_h)).copy_from(&(-c.transpose() * kappa));

        let mut b = Matrix::zeros(n, 1);
        let hyp = rng::unit_vector(&mut g, n_h);
        for i in 0..n_h {
            b[(i, 0)] = hyp[i];
        }
        for k in 0..n_p {
            b[(n_h + k, 0)] = 2f64.sqrt() * ((k + 1) as f64 * PI).powf(2.0 * beta_par);
        }

        let abscissa = spectral_abscissa(&a);
        if !(abscissa < 0.0) {
            continue;
        }
        let omega = -abscissa;
        let m_const = growth_constant(&a, omega)?;

        let mut metadata = BTreeMap::new();
        metadata.insert("generator".into(), "composite".into());
        metadata.insert("n_h".into(), n_h.to_string());
        metadata.insert("n_p".into(), n_p.to_string());
        metadata.insert("kappa".into(), kappa.to_string());
        metadata.insert("damping".into(), damping.to_string());
        metadata.insert("seed".into(), seed.to_string());
        metadata.insert("resamples".into(), attempt.to_string());
        metadata.insert(
            "coupling".into(),
            if kappa == 0.0 { "block-diagonal" } else { "coupled" }.into(),
        );
        metadata.insert("spectrum".into(), spectrum_string(&a));

        let model = LqModel {
            id: format!("composite-h{n_h}-p{n_p}-k{kappa}-d{damping}-s{seed}"),
            a,
            b,
            r: Matrix::identity(n, n),
            horizon: Horizon::Finite(1.0),
            parabolic: (n_h..n).collect(),
            assumption: AssumptionParams::for_gamma(beta_par + 0.25, omega, m_const),
            metadata,
        };
        model.validate()?;
        return Ok(model);
    }
    Err(Error::InvalidArgument(format!(
        "no stable composite generator after {MAX_RESAMPLES} resamples"
    )))
}

/// The fixed model set every acceptance run and shipped example uses, all
/// on the horizon `T = 1` (switch with [`LqModel::with_horizon`]).
pub fn shipped_models() -> Result<Vec<LqModel>> {
    Ok(vec![
        scalar_model(-1.0, 1.0, 1.0, Horizon::Finite(1.0))?,
        heat_boundary_surrogate(8, 0.25)?,
        composite_surrogate(4, 4, 1.0, 0.2, 1)?,
        random_stable(6, 2, 3, 11, 0.5)?.with_horizon(Horizon::Finite(1.0)),
    ])
}

/// Seeded dense stable model, shifted so that `max Re λ(A) = −margin`.
pub fn random_stable(n: usize, m: usize, p: usize, seed: u64, margin: f64) -> Result<LqModel> {
    if n == 0 {
        return Err(Error::InvalidArgument("random model needs n >= 1".into()));
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::InvalidArgument(format!("margin = {margin} must be > 0")));
    }
    let mut g = rng::rng(seed, 0);
    let mut a = rng::gaussian_matrix(&mut g, n, n) / (n as f64).sqrt();
    let shift = spectral_abscissa(&a) + margin + 1e-10;
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let b = unit_columns(rng::gaussian_matrix(&mut g, n, m));
    let r = unit_columns(rng::gaussian_matrix(&mut g, p, n));
    let omega = -spectral_abscissa(&a);
    let m_const = growth_constant(&a, omega)?;

    let mut metadata = BTreeMap::new();
    metadata.insert("generator".into(), "random".into());
    metadata.insert("n".into(), n.to_string());
    metadata.insert("m".into(), m.to_string());
    metadata.insert("p".into(), p.to_string());
    metadata.insert("seed".into(), seed.to_string());
    metadata.insert("margin".into(), margin.to_string());

    let model = LqModel {
        id: format!("random-n{n}-m{m}-p{p}-s{seed}-g{margin}"),
        a,
        b,
        r,
        horizon: Horizon::Finite(1.0),
        parabolic: (0..n).collect(),
        assumption: AssumptionParams::for_gamma(0.5, omega, m_const),
        metadata,
    };
    model.validate()?;
    Ok(model)
}

fn unit_columns(mut m: Matrix) -> Matrix {
    for mut col in m.column_iter_mut() {
        let nrm = col.norm();
        if nrm > 0.0 {
            col /= nrm;
        }
    }
    m
}

/// Sampled `sup_t e^{ωt}‖e^{At}‖`.
fn growth_constant(a: &Matrix, omega: f64) -> Result<f64> {
    let prop = Propagator::new(a)?;
    let t_max = 20.0 / omega.max(1e-3);
    let mut best: f64 = 1.0;
    for i in 0..=120 {
        let t = t_max * 10f64.powf(-6.0 * (1.0 - i as f64 / 120.0));
        best = best.max((omega * t).exp() * norm2(&prop.exp(t)?));
    }
    Ok(best)
}

fn spectrum_string(a: &Matrix) -> String {
    let mut eig: Vec<(f64, f64)> = a
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    eig.iter()
        .map(|(re, im)| format!("{re:.6e}{im:+.6e}i"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::decompose_adjoint_kernel;

    #[test]
    fn heat_n1_beta0() {
        let m = heat_boundary_surrogate(1, 0.0).unwrap();
        assert!((m.a[(0, 0)] + PI * PI).abs() < 1e-15);
        assert!((m.b[(0, 0)] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.r, Matrix::identity(1, 1));
        assert!((m.assumption.gamma - 0.25).abs() < 1e-15);
    }

    #[test]
    fn heat_rejects_beta_one() {
        assert!(heat_boundary_surrogate(4, 1.0).is_err());
        assert!(heat_boundary_surrogate(0, 0.5).is_err());
    }

    #[test]
    fn composite_stable_and_split() {
        let m = composite_surrogate(4, 4, 0.5, 0.1, 7).unwrap();
        assert!(m.abscissa() < 0.0);
        assert_eq!(m.parabolic, vec![4, 5, 6, 7]);
        let prop = Propagator::new(&m.a).unwrap();
        for &t in &[1e-3, 0.1, 1.0] {
            let (f, g) = decompose_adjoint_kernel(&m, t).unwrap();
            let full = m.adjoint_kernel(&prop, t).unwrap();
            assert!((f + g - full).amax() < 1e-12);
        }
    }

    #[test]
    fn composite_uncoupled_spectrum_is_union() {
        let m = composite_surrogate(3, 2, 0.0, 0.2, 1).unwrap();
        assert_eq!(m.metadata["coupling"], "block-diagonal");
        let mut re: Vec<f64> = m.a.complex_eigenvalues().iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expected = vec![-4.0 * PI * PI, -PI * PI, -0.2, -0.2, -0.2];
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, y) in re.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-9, "{re:?}");
        }
    }

    #[test]
    fn random_is_reproducible_with_margin() {
        let a = random_stable(6, 2, 3, 42, 0.5).unwrap();
        let b = random_stable(6, 2, 3, 42, 0.5).unwrap();
        assert_eq!(a, b);
        assert!(a.abscissa() <= -0.5);
        for col in a.b.column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn random_without_control() {
        let m = random_stable(4, 0, 2, 3, 0.5).unwrap();
        assert_eq!(m.b.shape(), (4, 0));
    }

    #[test]
    fn split_extremes() {
        let mut m = random_stable(4, 2, 2, 5, 0.5).unwrap();
        let (_, g) = decompose_adjoint_kernel(&m, 0.3).unwrap();
        assert_eq!(g.amax(), 0.0);
        m.parabolic.clear();
        let (f, _) = decompose_adjoint_kernel(&m, 0.3).unwrap();
        assert_eq!(f.amax(), 0.0);
        assert!(decompose_adjoint_kernel(&m, 0.0).is_err());
    }
}
