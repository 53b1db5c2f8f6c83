//! The verification suite behind `verify` (and the solver residuals that
//! `solve` reports). Checks are grouped by the computation they share; the
//! groups run concurrently and results are keyed by check name.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use riccati_lab::are::{
    are_integral_residual, generator_identity_check, solve_are_newton, value_sandwich_test, AreSolution,
};
use riccati_lab::dre::{
    class_check, ire_residual, ire_strong_residual, opric_selfconsistency, uniqueness_contraction_estimate,
    DreSolution,
};
use riccati_lab::models::LqModel;
use riccati_lab::numkernel::norm2;
use riccati_lab::semiflow::{ControlPath, TimeGrid};
use riccati_lab::synthesis::{
    closed_loop_fixed_point, closed_loop_ode, fundamental_identity, GainSource, RiccatiSolution,
};
use riccati_lab::tolerances::{
    ACCURACY_STEP, ARE_RESIDUAL, CLASS_CONTINUITY_JUMP, GENERATOR_IDENTITY, IRE_PRECHECK, PSD_FLOOR, SYMMETRY,
};
use riccati_lab::{rng, Error, Vector};

use crate::config::VerifyConfig;
use crate::error::{CliError, Result};
use crate::report::CheckResult;

pub const DRE_CHECKS: &[&str] = &[
    "class",
    "closed_loop_agreement",
    "closed_loop_contraction",
    "closed_loop_monotone",
    "evolution",
    "fundamental_identity",
    "fundamental_identity_precheck",
    "ire",
    "ire_strong",
    "self_consistency",
    "uniqueness_probe",
];

pub const ARE_CHECKS: &[&str] = &[
    "are_integral",
    "are_residual",
    "closed_loop_agreement",
    "closed_loop_contraction",
    "closed_loop_monotone",
    "fundamental_identity",
    "fundamental_identity_precheck",
    "generator_identity",
    "value_sandwich",
];

const PICARD_TOL: f64 = 1e-12;
const PICARD_MAX_ITER: usize = 400;
/// Decades of closed-loop decay covered by truncated infinite horizons.
const IDENTITY_DECADES: f64 = 8.0;
const SANDWICH_DECADES: f64 = 10.0;
const CLOSED_LOOP_HORIZON_CAP: f64 = 20.0;
/// The uniqueness probe uses the window `[T − T/16, T]`.
const UNIQUENESS_WINDOWS: f64 = 16.0;

pub fn is_check_name(name: &str) -> bool {
    DRE_CHECKS.contains(&name) || ARE_CHECKS.contains(&name)
}

pub fn default_tolerance(name: &str) -> f64 {
    match name {
        "ire" | "ire_strong" | "are_integral" | "value_sandwich" => 1e-6,
        "fundamental_identity" | "self_consistency" => 1e-5,
        "fundamental_identity_precheck" => IRE_PRECHECK,
        "are_residual" => ARE_RESIDUAL,
        "generator_identity" => GENERATOR_IDENTITY,
        "evolution" | "closed_loop_monotone" => 1e-8,
        "closed_loop_agreement" => PICARD_TOL,
        // contraction factors and class margins are "at most one"
        _ => 1.0,
    }
}

pub enum Candidate {
    Dre(DreSolution),
    Are(AreSolution),
}

impl Candidate {
    pub fn applicable(&self) -> &'static [&'static str] {
        match self {
            Candidate::Dre(_) => DRE_CHECKS,
            Candidate::Are(_) => ARE_CHECKS,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Candidate::Dre(_) => "DRE",
            Candidate::Are(_) => "ARE",
        }
    }

    fn riccati(&self) -> RiccatiSolution<'_> {
        match self {
            Candidate::Dre(d) => d.into(),
            Candidate::Are(a) => a.into(),
        }
    }
}

pub struct Suite<'a> {
    pub model: &'a LqModel,
    pub candidate: &'a Candidate,
    pub cfg: &'a VerifyConfig,
    pub tolerances: &'a BTreeMap<String, f64>,
    /// Freshly solved ARE: sets truncation horizons and anchors the sandwich.
    reference: Option<AreSolution>,
}

type Entries = Vec<(&'static str, CheckResult)>;

struct Group {
    names: &'static [&'static str],
    run: fn(&Suite) -> Entries,
}

const GROUPS: &[Group] = &[
    Group { names: &["ire"], run: ire },
    Group { names: &["ire_strong"], run: ire_strong },
    Group { names: &["fundamental_identity", "fundamental_identity_precheck"], run: identity },
    Group {
        names: &["closed_loop_agreement", "closed_loop_contraction", "closed_loop_monotone"],
        run: closed_loop,
    },
    Group { names: &["uniqueness_probe"], run: uniqueness_probe },
    Group { names: &["evolution", "self_consistency"], run: self_consistency },
    Group { names: &["class"], run: class },
    Group { names: &["are_residual"], run: are_residual },
    Group { names: &["are_integral"], run: are_integral },
    Group { names: &["generator_identity"], run: generator_identity },
    Group { names: &["value_sandwich"], run: value_sandwich },
];

impl<'a> Suite<'a> {
    pub fn new(
        model: &'a LqModel,
        candidate: &'a Candidate,
        cfg: &'a VerifyConfig,
        tolerances: &'a BTreeMap<String, f64>,
    ) -> Result<Self> {
        let reference = match candidate {
            Candidate::Are(_) => Some(solve_are_newton(model, 0.0)?),
            Candidate::Dre(_) => None,
        };
        Ok(Self {
            model,
            candidate,
            cfg,
            tolerances,
            reference,
        })
    }

    fn tol(&self, name: &str) -> f64 {
        self.tolerances.get(name).copied().unwrap_or_else(|| default_tolerance(name))
    }

    fn dre(&self) -> &DreSolution {
        match self.candidate {
            Candidate::Dre(d) => d,
            Candidate::Are(_) => unreachable!("DRE check on an ARE solution"),
        }
    }

    fn are(&self) -> &AreSolution {
        match self.candidate {
            Candidate::Are(a) => a,
            Candidate::Dre(_) => unreachable!("ARE check on a DRE solution"),
        }
    }

    fn reference(&self) -> &AreSolution {
        self.reference.as_ref().expect("reference solved for ARE candidates")
    }

    /// Time for the reference closed loop to decay by `decades` decades.
    fn decay_horizon(&self, decades: f64) -> f64 {
        decades * 10f64.ln() / -self.reference().abscissa
    }

    fn entry(&self, name: &'static str, clock: Instant, value: riccati_lab::Result<f64>) -> (&'static str, CheckResult) {
        let secs = clock.elapsed().as_secs_f64();
        let tol = self.tol(name);
        match value {
            Ok(r) => (name, CheckResult::measured(r, tol, secs)),
            Err(e) => (name, CheckResult::failed(e.to_string(), tol, secs)),
        }
    }

    /// Runs the selected checks (every applicable one when `selected` is
    /// `None`). Unknown or inapplicable names are usage errors.
    pub fn run(&self, selected: Option<&[String]>) -> Result<BTreeMap<String, CheckResult>> {
        let applicable = self.candidate.applicable();
        let wanted: BTreeSet<&str> = match selected {
            None => applicable.iter().copied().collect(),
            Some(names) => {
                for n in names {
                    if !applicable.contains(&n.as_str()) {
                        return Err(CliError::Usage(format!(
                            "check {n:?} does not apply to a {} solution",
                            self.candidate.label()
                        )));
                    }
                }
                names.iter().map(String::as_str).collect()
            }
        };
        let groups: Vec<&Group> = GROUPS
            .iter()
            .filter(|g| g.names.iter().any(|n| wanted.contains(n)))
            .collect();
        let entries: Vec<Entries> = groups.par_iter().map(|g| (g.run)(self)).collect();
        Ok(entries
            .into_iter()
            .flatten()
            .filter(|(name, _)| wanted.contains(name))
            .map(|(name, r)| (name.to_string(), r))
            .collect())
    }
}

/// Window `k` of `count` nested sub-intervals of `[0, length]`.
fn window(k: usize, count: usize, length: f64) -> (f64, f64) {
    let f = k as f64 / count as f64;
    (0.5 * f * length, (1.0 - 0.25 * f) * length)
}

fn probe_pair(seed: u64, k: usize, n: usize) -> (Vector, Vector) {
    let mut g = rng::rng(seed, 10 + k as u64);
    (rng::gaussian_vector(&mut g, n), rng::gaussian_vector(&mut g, n))
}

fn ire(s: &Suite) -> Entries {
    let clock = Instant::now();
    let sol = s.dre();
    let scale = sol.path.sup_norm().max(1.0);
    let value = (|| {
        let mut worst: f64 = 0.0;
        for k in 0..s.cfg.probes {
            let (a, b) = window(k, s.cfg.probes, sol.horizon());
            let (x, y) = probe_pair(s.cfg.seed, k, s.model.n());
            let r = ire_residual(sol, s.model, a, b, &x, &y)?;
            worst = worst.max(r / ((1.0 + x.norm() * y.norm()) * scale));
        }
        Ok(worst)
    })();
    vec![s.entry("ire", clock, value)]
}

fn ire_strong(s: &Suite) -> Entries {
    let clock = Instant::now();
    let sol = s.dre();
    let scale = sol.path.sup_norm().max(1.0);
    let value = (|| {
        let mut worst: f64 = 0.0;
        for k in 0..s.cfg.probes {
            let (a, b) = window(k, s.cfg.probes, sol.horizon());
            worst = worst.max(ire_strong_residual(sol, s.model, a, b)? / scale);
        }
        Ok(worst)
    })();
    vec![s.entry("ire_strong", clock, value)]
}

fn identity(s: &Suite) -> Entries {
    let clock = Instant::now();
    let horizon = match s.candidate {
        Candidate::Dre(d) => d.horizon(),
        Candidate::Are(_) => s.decay_horizon(IDENTITY_DECADES),
    };
    let (n, m) = (s.model.n(), s.model.m());
    let run = || -> riccati_lab::Result<(f64, f64)> {
        let grid = TimeGrid::uniform(0.0, horizon, s.cfg.control_intervals)?;
        let (mut pre, mut res): (f64, f64) = (0.0, 0.0);
        for k in 0..s.cfg.controls as u64 {
            let u = ControlPath::random_hold(grid.clone(), m, rng::sub_seed(s.cfg.seed, 200 + k));
            let x = rng::gaussian_vector(&mut rng::rng(s.cfg.seed, 300 + k), n);
            let id = fundamental_identity(s.candidate.riccati(), s.model, &u, &x, 0.0, horizon)?;
            pre = pre.max(id.precheck / (1.0 + x.norm_squared()));
            res = res.max(id.residual / (1.0 + x.norm_squared() + u.lp_norm(2.0).powi(2)));
        }
        Ok((pre, res))
    };
    match run() {
        Ok((pre, res)) => vec![
            s.entry("fundamental_identity_precheck", clock, Ok(pre)),
            s.entry("fundamental_identity", clock, Ok(res)),
        ],
        Err(Error::PrecheckFailed(msg)) => vec![
            s.entry("fundamental_identity_precheck", clock, Err(Error::PrecheckFailed(msg))),
            (
                "fundamental_identity",
                CheckResult::failed(
                    "skipped: integral Riccati precheck failed".into(),
                    s.tol("fundamental_identity"),
                    clock.elapsed().as_secs_f64(),
                ),
            ),
        ],
        Err(e) => vec![
            s.entry("fundamental_identity_precheck", clock, Err(e.clone())),
            s.entry("fundamental_identity", clock, Err(e)),
        ],
    }
}

fn closed_loop(s: &Suite) -> Entries {
    let clock = Instant::now();
    let (gain, horizon) = match s.candidate {
        Candidate::Dre(d) => (GainSource::Path(&d.path), d.horizon()),
        Candidate::Are(a) => (
            GainSource::Constant(&a.p),
            s.decay_horizon(IDENTITY_DECADES).min(CLOSED_LOOP_HORIZON_CAP),
        ),
    };
    let x = rng::unit_vector(&mut rng::rng(s.cfg.seed, 400), s.model.n());
    let run = || -> riccati_lab::Result<(f64, f64, f64, f64)> {
        let grid = TimeGrid::uniform(0.0, horizon, s.cfg.picard_steps)?;
        let mut medians = Vec::new();
        let mut limit = None;
        for &r in &s.cfg.picard_rates {
            let tr = closed_loop_fixed_point(s.model, gain, &x, &grid, r, PICARD_TOL, PICARD_MAX_ITER)?;
            if !tr.converged {
                return Err(Error::NotConverged {
                    method: "closed-loop picard",
                    iterations: tr.iterations(),
                    last: tr.differences.last().copied().unwrap_or(f64::NAN),
                });
            }
            medians.push(tr.median_factor());
            limit.get_or_insert_with(|| tr.limit().states.clone());
        }
        let worst = medians.iter().copied().fold(0.0, f64::max);
        let increase = medians.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let limit = limit.expect("at least one rate");
        let ode = closed_loop_ode(s.model, gain, &x, &grid)?;
        let fine = closed_loop_fixed_point(
            s.model,
            gain,
            &x,
            &grid.refine(),
            s.cfg.picard_rates[0],
            PICARD_TOL,
            PICARD_MAX_ITER,
        )?;
        let gap = |a: &[Vector], b: &[Vector]| a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        let fine_states: Vec<Vector> = fine.limit().states.iter().step_by(2).cloned().collect();
        Ok((worst, increase, gap(&limit, &ode.states), gap(&limit, &fine_states)))
    };
    match run() {
        Ok((worst, increase, gap, order_err)) => {
            let secs = clock.elapsed().as_secs_f64();
            // the fixed point and the ODE agree up to the grid error of the
            // fixed point, measured by one refinement
            let tol = s.tol("closed_loop_agreement").max(2.0 * order_err) + 1e-13;
            vec![
                ("closed_loop_agreement", CheckResult::measured(gap, tol, secs)),
                s.entry("closed_loop_contraction", clock, Ok(worst)),
                s.entry("closed_loop_monotone", clock, Ok(increase)),
            ]
        }
        Err(e) => ["closed_loop_agreement", "closed_loop_contraction", "closed_loop_monotone"]
            .into_iter()
            .map(|name| s.entry(name, clock, Err(e.clone())))
            .collect(),
    }
}

fn uniqueness_probe(s: &Suite) -> Entries {
    let clock = Instant::now();
    let sol = s.dre();
    // the estimate is monotone in the window, so the smallest window of the
    // dyadic ladder gives its minimum
    let delta = sol.horizon() / UNIQUENESS_WINDOWS;
    let value = uniqueness_contraction_estimate(sol, sol, s.model, delta, s.cfg.probes, s.cfg.seed);
    vec![s.entry("uniqueness_probe", clock, value)]
}

fn self_consistency(s: &Suite) -> Entries {
    let clock = Instant::now();
    let sol = s.dre();
    match opric_selfconsistency(sol, s.model, 0.0, s.cfg.probes, s.cfg.seed) {
        Ok(rep) => vec![
            s.entry("evolution", clock, Ok(rep.evolution_defect)),
            s.entry("self_consistency", clock, Ok(rep.residual / sol.path.sup_norm().max(1.0))),
        ],
        Err(e) => vec![
            s.entry("evolution", clock, Err(e.clone())),
            s.entry("self_consistency", clock, Err(e)),
        ],
    }
}

/// Largest class-condition value relative to its threshold; `≤ 1` means
/// the path is in the uniqueness class.
fn class(s: &Suite) -> Entries {
    let clock = Instant::now();
    let value = class_check(&s.dre().path, s.model).map(|c| {
        let mut margin = (c.continuity_jump / CLASS_CONTINUITY_JUMP).max(c.asymmetry / SYMMETRY);
        if c.min_eigenvalue < 0.0 {
            margin = margin.max(c.min_eigenvalue / PSD_FLOOR);
        }
        if c.terminal != 0.0 || !c.gain_sup.is_finite() {
            margin = f64::INFINITY;
        }
        margin
    });
    vec![s.entry("class", clock, value)]
}

fn are_residual(s: &Suite) -> Entries {
    vec![s.entry("are_residual", Instant::now(), Ok(s.are().residual))]
}

fn are_integral(s: &Suite) -> Entries {
    let clock = Instant::now();
    let sol = s.are();
    let rate = norm2(&s.model.a) + norm2(&s.model.control_gram()) * norm2(&sol.p);
    let scale = norm2(&sol.p).max(1.0);
    let value = (|| {
        let mut worst: f64 = 0.0;
        for k in 0..s.cfg.probes {
            let (a, b) = window(k, s.cfg.probes, 2.0);
            let (x, y) = probe_pair(s.cfg.seed, k, s.model.n());
            let steps = (((b - a) * rate / ACCURACY_STEP).ceil() as usize).max(64);
            let r = are_integral_residual(sol, s.model, a, b, &x, &y, steps)?;
            worst = worst.max(r / ((1.0 + x.norm() * y.norm()) * scale));
        }
        Ok(worst)
    })();
    vec![s.entry("are_integral", clock, value)]
}

fn generator_identity(s: &Suite) -> Entries {
    let clock = Instant::now();
    let scale = norm2(&s.model.a).max(1.0);
    let value = generator_identity_check(s.are(), s.model).map(|r| r / scale);
    vec![s.entry("generator_identity", clock, value)]
}

fn value_sandwich(s: &Suite) -> Entries {
    let clock = Instant::now();
    let reference = s.reference();
    let t_trunc = s.decay_horizon(SANDWICH_DECADES);
    // Simpson pieces must resolve the fastest closed-loop mode
    let steps = ((t_trunc * norm2(&reference.a_p) / ACCURACY_STEP).ceil() as usize).max(4000);
    let value = (|| {
        let mut worst: f64 = 0.0;
        for k in 0..s.cfg.probes as u64 {
            let x = rng::unit_vector(&mut rng::rng(s.cfg.seed, 500 + k), s.model.n());
            let g = value_sandwich_test(&s.are().p, s.model, reference, &x, t_trunc, steps)?;
            worst = worst.max(g.upper_gap.abs()).max(g.lower_gap.abs());
        }
        Ok(worst)
    })();
    vec![s.entry("value_sandwich", clock, value)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_cover_every_check_once() {
        let mut seen: Vec<&str> = GROUPS.iter().flat_map(|g| g.names.iter().copied()).collect();
        seen.sort_unstable();
        let mut all: Vec<&str> = DRE_CHECKS.iter().chain(ARE_CHECKS).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(seen, all);
    }

    #[test]
    fn windows_are_nested_and_ordered() {
        for k in 0..8 {
            let (a, b) = window(k, 8, 2.0);
            assert!(0.0 <= a && a < b && b <= 2.0);
        }
        assert_eq!(window(0, 4, 1.0), (0.0, 1.0));
    }
}
