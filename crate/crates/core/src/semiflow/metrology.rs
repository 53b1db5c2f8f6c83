use serde::Serialize;

use super::{ControlPath, Flow, TimeGrid};
use crate::error::{Error, Result};
use crate::models::{Horizon, LqModel};
use crate::numkernel::quadrature::{extrapolate_tail, gauss_legendre, GradedRule};
use crate::numkernel::{fractional_power, norm2, ExpIntegrals, Matrix, Propagator, Vector};
use crate::rng;
use crate::tolerances::{DEFAULT_PROBES, GRADED_ORDER, TRUNCATION_TAIL};

/// Graded rule resolving the fastest decay of `e^{At}` on `[0, length]`.
pub fn kernel_rule(model: &LqModel, length: f64) -> GradedRule {
    GradedRule::adapted(length, 2.0 * norm2(&model.a), 0.25)
}

fn fractional_or_identity(model: &LqModel, eps: f64) -> Result<Matrix> {
    if eps == 0.0 {
        Ok(Matrix::identity(model.n(), model.n()))
    } else {
        fractional_power(&model.a, eps)
    }
}

/// Largest sampled `sup_t ‖(−A)^ε (L_s u)(t)‖` over random held controls
/// normalized in `L^{q'}(s, T)`, with ε and q taken from the model.
pub fn improved_regularity_probe(
    model: &LqModel,
    s: f64,
    t_end: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    regularity_probe(model, model.assumption.epsilon, s, t_end, samples, seed)
}

pub fn regularity_probe(
    model: &LqModel,
    eps: f64,
    s: f64,
    t_end: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample required".into()));
    }
    let grid = TimeGrid::uniform(s, t_end, 256)?;
    let frac = fractional_or_identity(model, eps)?;
    let qc = model.assumption.q_conjugate();
    let x0 = Vector::zeros(model.n());
    let mut flow = Flow::for_model(model);
    let mut best: f64 = 0.0;
    for k in 0..samples {
        let u = ControlPath::random_hold(grid.clone(), model.m(), rng::sub_seed(seed, k as u64));
        let norm = u.lp_norm(qc);
        if !(norm > 0.0) {
            continue;
        }
        let states = flow.propagate(&x0, &u.scaled(1.0 / norm))?;
        for y in &states {
            best = best.max((&frac * y).norm());
        }
    }
    Ok(best)
}

/// Hölder bound `(∫₀^L ‖(−A)^ε e^{Ar} B‖^q dr)^{1/q}` for the regularity probe.
pub fn holder_bound(model: &LqModel, eps: f64, length: f64) -> Result<f64> {
    let q = model.assumption.q;
    let frac = fractional_or_identity(model, eps)?;
    let fb = &frac * &model.b;
    let prop = Propagator::new(&model.a)?;
    let integral = kernel_rule(model, length).integrate(0.0, length, |r| {
        norm2(&(prop.exp_unchecked(r) * &fb)).powf(q)
    })?;
    Ok(integral.powf(1.0 / q))
}

/// `∫₀^T e^{At} B Bᵀ e^{Aᵀt} dt` on the graded rule.
pub fn admissibility_gramian(model: &LqModel, t_end: f64) -> Result<Matrix> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon {t_end} must be positive")));
    }
    let prop = Propagator::new(&model.a)?;
    let w = kernel_rule(model, t_end).integrate_samples(0.0, t_end, |t| {
        let k = prop.exp_unchecked(t) * &model.b;
        &k * k.transpose()
    })?;
    Ok(crate::numkernel::symmetrize(&w))
}

/// `max_x ∫₀^T ‖Bᵀe^{Aᵀt}x‖² dt` over seeded unit probes, the canonical
/// basis and the top eigenvector of the Gramian.
pub fn admissibility_constant(model: &LqModel, t_end: f64, probes: usize, seed: u64) -> Result<f64> {
    let w = admissibility_gramian(model, t_end)?;
    let mut xs = rng::unit_probes(seed, model.n(), probes);
    let eig = w.clone().symmetric_eigen();
    let top = eig.eigenvalues.imax();
    xs.push(eig.eigenvectors.column(top).into_owned());
    Ok(xs
        .iter()
        .map(|x| x.dot(&(&w * x)))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularFit {
    pub gamma_hat: f64,
    #[serde(rename = "N_hat")]
    pub n_hat: f64,
    /// RMS of the log-residuals.
    pub fit_residual: f64,
}

/// Least-squares fit of `log v = log N − γ log t`.
pub fn fit_power_law(ts: &[f64], vals: &[f64]) -> Result<SingularFit> {
    if ts.len() != vals.len() || ts.len() < 2 {
        return Err(Error::Dimension("power-law fit needs matching samples".into()));
    }
    if vals.iter().any(|&v| !(v > 0.0)) || ts.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("power-law fit needs positive data".into()));
    }
    let n = ts.len() as f64;
    let x: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Ok(SingularFit {
        gamma_hat: -slope,
        n_hat: intercept.exp(),
        fit_residual: (rss / n).sqrt(),
    })
}

/// Fits `‖F(t)‖ ≈ N t^{−γ}` on log-spaced nodes of `[t_min, t_max]`.
pub fn estimate_singular_decay(
    model: &LqModel,
    t_min: f64,
    t_max: f64,
    nodes: usize,
) -> Result<SingularFit> {
    if !(t_min > 0.0 && t_max > t_min) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < t_min < t_max, got [{t_min}, {t_max}]"
        )));
    }
    if nodes < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 nodes, got {nodes}")));
    }
    let bp = model.parabolic_control();
    if bp.iter().all(|&x| x == 0.0) {
        return Err(Error::NoSingularComponent);
    }
    let prop = Propagator::new(&model.a)?;
    let ratio = (t_max / t_min).ln();
    let ts: Vec<f64> = (0..nodes)
        .map(|i| t_min * (ratio * i as f64 / (nodes - 1) as f64).exp())
        .collect();
    let mut vals = Vec::with_capacity(nodes);
    for &t in &ts {
        let (f, _) = crate::models::decompose_with(model, &prop, &bp, t)?;
        vals.push(norm2(&f));
    }
    if vals.iter().all(|&v| v == 0.0) {
        return Err(Error::NoSingularComponent);
    }
    fit_power_law(&ts, &vals)
}

/// `max_x ‖e^{δ·} Bᵀ e^{Aᵀ·} ((−A)ᵀ)^ε x‖_{L^q(0, horizon; U)}` over seeded
/// unit probes and the canonical basis.
pub fn weighted_kernel_lq(
    model: &LqModel,
    delta: f64,
    q: f64,
    eps: f64,
    horizon: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if !(q > 1.0 && q < 2.0) {
        return Err(Error::InvalidArgument(format!("q = {q} outside (1, 2)")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("weight delta = {delta} < 0")));
    }
    let limit = model.assumption.omega.min(model.assumption.eta);
    if model.horizon == Horizon::Infinite && delta >= limit {
        return Err(Error::InvalidArgument(format!(
            "weight delta = {delta} must be below min(omega, eta) = {limit}"
        )));
    }
    if model.m() == 0 {
        return Ok(0.0);
    }
    let frac_t = fractional_or_identity(model, eps)?.transpose();
    let prop = Propagator::new(&model.a)?;
    let rule = kernel_rule(model, horizon);
    let nodes = rule.nodes(0.0, horizon);
    let kernel = |t: f64| (delta * t).exp() * model.b.transpose() * prop.exp_unchecked(t).transpose() * &frac_t;
    let tabulate = |(xs, ws): &(Vec<f64>, Vec<f64>)| -> Vec<(f64, Matrix)> {
        xs.iter().zip(ws).map(|(&t, &w)| (w, kernel(t))).collect()
    };
    let levels: Vec<Vec<(f64, Matrix)>> = nodes.levels.iter().map(tabulate).collect();
    let inner = tabulate(&nodes.innermost);

    let sum = |tab: &[(f64, Matrix)], x: &Vector| -> f64 {
        tab.iter().map(|(w, k)| w * (k * x).norm().powf(q)).sum()
    };
    let mut best: f64 = 0.0;
    for x in rng::unit_probes(seed, model.n(), probes) {
        let level_sums: Vec<f64> = levels.iter().map(|tab| sum(tab, &x)).collect();
        let integral = extrapolate_tail(&level_sums, rule.ratio, || sum(&inner, &x));
        best = best.max(integral.max(0.0).powf(1.0 / q));
    }
    Ok(best)
}

/// `(∫₀^τ e^{Mσ} dσ, ∫₀^τ e^{Mσ} σ dσ)`.
fn forward_integrals(m: &Matrix, tau: f64) -> Result<(Matrix, Matrix)> {
    let e = ExpIntegrals::new(m, tau)?;
    let j2 = &e.int1 * tau - &e.int2;
    Ok((e.int1, j2))
}

/// Duality residuals for the weighted kernel operators
/// `(Sz)(t) = e^{δt}Bᵀe^{Aᵀt}((−A)ᵀ)^ε z` and
/// `(Tw)(t) = e^{δt}(−A)^{−ε}e^{At}B w`.
///
/// The adjoints `S*h`, `T*g` are integrated exactly for the path's
/// interpolation; the pairings `⟨h, Sz⟩`, `⟨g, Tw⟩` use Gauss-Legendre on
/// each grid interval, so the residuals measure pure quadrature error.
pub fn adjoint_duality_residual(
    model: &LqModel,
    delta: f64,
    h: &ControlPath,
    g: &ControlPath,
    z: &Vector,
    w: &Vector,
    horizon: f64,
) -> Result<(f64, f64)> {
    let (n, m) = (model.n(), model.m());
    let limit = model.assumption.omega.min(model.assumption.eta);
    if !(delta > 0.0 && delta < limit) {
        return Err(Error::InvalidArgument(format!(
            "weight delta = {delta} outside (0, {limit})"
        )));
    }
    for (path, name) in [(h, "h"), (g, "g")] {
        if !path.grid.spans(0.0, horizon) || path.grid.len() < 2 {
            return Err(Error::GridMismatch(format!(
                "{name} grid [{}, {}] does not span [0, {horizon}]",
                path.grid.start(),
                path.grid.end()
            )));
        }
    }
    if h.dim() != m || g.dim() != n || z.len() != n || w.len() != m {
        return Err(Error::Dimension("duality test vectors do not match (n, m)".into()));
    }
    let eps = model.assumption.epsilon;
    let frac = fractional_power(&model.a, eps)?;
    let frac_neg = fractional_power(&model.a, -eps)?;
    let a_delta = &model.a + Matrix::identity(n, n) * delta;
    let prop = Propagator::new(&a_delta)?;

    // S*h = (−A)^ε Σ e^{A_δ t_i} [J1 B h_i + J2 B s_i], and T*g likewise.
    let mut s_star = Vector::zeros(n);
    let mut t_star = Vector::zeros(m);
    let mut pair_s = 0.0;
    let mut pair_t = 0.0;
    let fz = frac.transpose() * z;
    let bw = &model.b * w;
    let kernel_s = |e: &Matrix| model.b.transpose() * e.transpose() * &fz;
    let kernel_t = |e: &Matrix| &frac_neg * e * &bw;

    let nodes = h.grid.nodes();
    let mut cache: Vec<(f64, Matrix, Matrix)> = Vec::new();
    let (gl_nodes, gl_weights) = gauss_legendre(GRADED_ORDER);
    let mut local_exps: Vec<(f64, Vec<Matrix>)> = Vec::new();
    for i in 0..nodes.len() - 1 {
        let (t0, t1) = (nodes[i], nodes[i + 1]);
        let tau = t1 - t0;
        let pos = cache
            .iter()
            .position(|(c, _, _)| (c - tau).abs() <= 1e-14 * tau);
        let (j1, j2) = match pos {
            Some(p) => (&cache[p].1, &cache[p].2),
            None => {
                let (a, b) = forward_integrals(&a_delta, tau)?;
                cache.push((tau, a, b));
                let last = cache.last().expect("just pushed");
                (&last.1, &last.2)
            }
        };
        let e0 = prop.exp(t0)?;
        let (h0, hs) = h.segment(i);
        s_star += &e0 * (j1 * (&model.b * h0) + j2 * (&model.b * hs));
        let (g0, gs) = g.segment(i);
        let gf = frac_neg.transpose();
        t_star += model.b.transpose()
            * e0.transpose()
            * (j1.transpose() * (&gf * g0) + j2.transpose() * (&gf * gs));

        let local = match local_exps.iter().position(|(c, _)| (c - tau).abs() <= 1e-14 * tau) {
            Some(p) => &local_exps[p].1,
            None => {
                let es = gl_nodes
                    .iter()
                    .map(|&z| prop.exp(0.5 * tau * (z + 1.0)))
                    .collect::<Result<Vec<Matrix>>>()?;
                local_exps.push((tau, es));
                &local_exps.last().expect("just pushed").1
            }
        };
        for ((&z, &wt), el) in gl_nodes.iter().zip(&gl_weights).zip(local) {
            let tk = t0 + 0.5 * tau * (z + 1.0);
            let e = &e0 * el;
            pair_s += 0.5 * tau * wt * h.eval_in(i, tk).dot(&kernel_s(&e));
            pair_t += 0.5 * tau * wt * g.eval_in(i, tk).dot(&kernel_t(&e));
        }
    }
    let s_star = frac * s_star;
    Ok(((s_star.dot(z) - pair_s).abs(), (t_star.dot(w) - pair_t).abs()))
}

/// Inputs of the full assumption report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetrologyConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub fit_nodes: usize,
    pub probes: usize,
    pub seed: u64,
    /// Grid step of the duality test paths.
    pub duality_step: f64,
}

impl Default for MetrologyConfig {
    fn default() -> Self {
        Self {
            t_min: 1e-4,
            t_max: 1e-1,
            fit_nodes: 32,
            probes: DEFAULT_PROBES,
            seed: 0,
            duality_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub model_id: String,
    pub gamma_hat: Option<f64>,
    #[serde(rename = "N_hat")]
    pub n_hat: Option<f64>,
    pub fit_residuals: Option<f64>,
    /// "fitted" or "no singular component".
    pub singular_status: String,
    #[serde(rename = "admissibility_C")]
    pub admissibility_c: f64,
    #[serde(rename = "weighted_Lq")]
    pub weighted_lq: f64,
    pub regularity_probe: f64,
    pub duality_residual_s: f64,
    pub duality_residual_t: f64,
    /// Interval used for the time integrals.
    pub horizon: f64,
    pub probes: usize,
    pub seed: u64,
}

/// Integration length: `T` for finite horizons, otherwise long enough for
/// the weighted kernel tail to fall below the truncation tolerance.
fn metrology_horizon(model: &LqModel) -> f64 {
    match model.horizon {
        Horizon::Finite(t) => t,
        Horizon::Infinite => {
            let p = &model.assumption;
            let rate = (p.omega.min(p.eta) - p.delta) * p.q;
            (1.0 / TRUNCATION_TAIL).ln() / rate
        }
    }
}

pub fn assumption_report(model: &LqModel, cfg: &MetrologyConfig) -> Result<AssumptionReport> {
    model.validate()?;
    let p = model.assumption;
    let horizon = metrology_horizon(model);
    let (gamma_hat, n_hat, fit_residuals, status) =
        match estimate_singular_decay(model, cfg.t_min, cfg.t_max, cfg.fit_nodes) {
            Ok(f) => (Some(f.gamma_hat), Some(f.n_hat), Some(f.fit_residual), "fitted"),
            Err(Error::NoSingularComponent) => (None, None, None, "no singular component"),
            Err(e) => return Err(e),
        };
    let admissibility_c = admissibility_constant(model, horizon, cfg.probes, cfg.seed)?;
    let weighted_lq = weighted_kernel_lq(model, p.delta, p.q, p.epsilon, horizon, cfg.probes, cfg.seed)?;
    let regularity = improved_regularity_probe(model, 0.0, horizon, cfg.probes.clamp(1, 16), cfg.seed)?;

    let steps = ((horizon / cfg.duality_step).round() as usize).max(2);
    let grid = TimeGrid::uniform(0.0, horizon, steps)?;
    let h = ControlPath::random_hold(grid.clone(), model.m(), rng::sub_seed(cfg.seed, 1));
    let g = ControlPath::random_hold(grid, model.n(), rng::sub_seed(cfg.seed, 2));
    let z = rng::unit_vector(&mut rng::rng(cfg.seed, 3), model.n());
    let w = rng::unit_vector(&mut rng::rng(cfg.seed, 4), model.m());
    let (duality_residual_s, duality_residual_t) = if p.delta > 0.0 {
        adjoint_duality_residual(model, p.delta, &h, &g, &z, &w, horizon)?
    } else {
        (0.0, 0.0)
    };

    Ok(AssumptionReport {
        model_id: model.id.clone(),
        gamma_hat,
        n_hat,
        fit_residuals,
        singular_status: status.into(),
        admissibility_c,
        weighted_lq,
        regularity_probe: regularity,
        duality_residual_s,
        duality_residual_t,
        horizon,
        probes: cfg.probes,
        seed: cfg.seed,
    })
}
