use std::path::{Path, PathBuf};

use riccati_lab::are::{solve_are_newton, solve_are_spectral, AreMethod, AreSolution};
use riccati_lab::dre::{solve_dre, DreSolution, Integrator};
use riccati_lab::models::{decompose_adjoint_kernel, write_model, Horizon, LqModel};
use riccati_lab::numkernel::norm2;
use riccati_lab::semiflow::{assumption_report, AssumptionReport, MetrologyConfig};
use serde::Serialize;
use serde_json::json;

use crate::checks::{Candidate, Suite};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::report::{matrix_json, to_json, write_atomic, Environment, VerificationReport};

pub const SOLUTION_FILE: &str = "solution.csv";

/// What a finished command tells `main` about the exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equation {
    Dre,
    Are,
}

fn out_dir(cfg: &RunConfig) -> &Path {
    &cfg.output.dir
}

/// Writes the generated model to `<out>/<model_id>.model`.
pub fn cmd_gen(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.model.is_file() {
        return Err(CliError::Usage("gen needs a generator kind, not a model file".into()));
    }
    let model = cfg.model.build()?;
    let path = write_atomic(out_dir(cfg), &format!("{}.model", model.id), &write_model(&model))?;
    println!("{}", model.id);
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Pass)
}

pub fn cmd_solve(cfg: &RunConfig, equation: Equation) -> Result<Outcome> {
    let model = cfg.model.build()?;
    let (candidate, csv, solution) = match equation {
        Equation::Dre => {
            model.horizon_length()?;
            let integrator: Integrator = cfg.solve.integrator.parse()?;
            let sol = solve_dre(&model, cfg.solve.steps, integrator)?;
            let summary = json!({
                "equation": "dre",
                "integrator": integrator.to_string(),
                "steps": cfg.solve.steps,
                "horizon": sol.horizon(),
                "P0": matrix_json(sol.p(0)),
                "K0": matrix_json(&sol.k[0]),
                "sup_norm": sol.path.sup_norm(),
            });
            let csv = sol.to_csv()?;
            (Candidate::Dre(sol), csv, summary)
        }
        Equation::Are => {
            model.require_infinite()?;
            let method: AreMethod = cfg.solve.method.parse()?;
            let sol = match method {
                AreMethod::Newton => solve_are_newton(&model, 0.0)?,
                AreMethod::Spectral => solve_are_spectral(&model)?,
            };
            let summary = json!({
                "equation": "are",
                "method": sol.method.to_string(),
                "iterations": sol.iterations,
                "abscissa": sol.abscissa,
                "P": matrix_json(&sol.p),
                "K": matrix_json(&sol.k),
            });
            let csv = sol.to_csv()?;
            (Candidate::Are(sol), csv, summary)
        }
    };
    let check = match equation {
        Equation::Dre => "ire_strong",
        Equation::Are => "are_residual",
    };
    let suite = Suite::new(&model, &candidate, &cfg.verify, &cfg.tolerances)?;
    let checks = suite.run(Some(&[check.to_string()]))?;
    let mut report = VerificationReport::new("solve", &model.id, checks, cfg.echo());
    report.solution = Some(solution);
    let sol_path = write_atomic(out_dir(cfg), SOLUTION_FILE, &csv)?;
    let rep_path = write_atomic(out_dir(cfg), "solve_report.json", &to_json(&report))?;
    eprintln!("wrote {} and {}", sol_path.display(), rep_path.display());
    Ok(Outcome::from_pass(report.pass))
}

/// Reads a DRE or ARE solution file, telling them apart by the integrator
/// header that only DRE files carry.
fn read_solution(path: &Path, model: &LqModel) -> Result<Candidate> {
    if !path.exists() {
        return Err(CliError::Usage(format!("missing solution: {} does not exist", path.display())));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read solution {}: {e}", path.display())))?;
    let is_dre = text.lines().any(|l| l.trim_start_matches('#').trim().starts_with("integrator"));
    let (candidate, id) = if is_dre {
        model.horizon_length()?;
        let sol = DreSolution::from_csv(&text, model)?;
        let id = sol.model_id.clone();
        (Candidate::Dre(sol), id)
    } else {
        model.require_infinite()?;
        let sol = AreSolution::from_csv(&text, model)?;
        let id = sol.model_id.clone();
        (Candidate::Are(sol), id)
    };
    if id != model.id {
        return Err(CliError::Usage(format!(
            "solution belongs to model {id}, configured model is {}",
            model.id
        )));
    }
    if let (Candidate::Dre(sol), Horizon::Finite(t)) = (&candidate, model.horizon) {
        if (sol.horizon() - t).abs() > 1e-12 * t.max(1.0) || sol.grid().start() != 0.0 {
            return Err(CliError::Usage(format!(
                "solution covers [{}, {}], model horizon is T = {t}",
                sol.grid().start(),
                sol.horizon()
            )));
        }
    }
    Ok(candidate)
}

pub fn solution_path(cfg: &RunConfig) -> PathBuf {
    cfg.verify
        .solution
        .clone()
        .unwrap_or_else(|| out_dir(cfg).join(SOLUTION_FILE))
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let model = cfg.model.build()?;
    let candidate = read_solution(&solution_path(cfg), &model)?;
    let suite = Suite::new(&model, &candidate, &cfg.verify, &cfg.tolerances)?;
    let checks = suite.run(cfg.verify.checks.as_deref())?;
    let report = VerificationReport::new("verify", &model.id, checks, cfg.echo());
    for (name, c) in &report.checks {
        let residual = c.residual.map_or_else(|| "-".to_string(), |r| format!("{r:.3e}"));
        println!(
            "{name:<32} {} residual {residual} tolerance {:.1e}{}",
            if c.pass { "PASS" } else { "FAIL" },
            c.tolerance,
            c.error.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
        );
    }
    let path = write_atomic(out_dir(cfg), "verify_report.json", &to_json(&report))?;
    eprintln!("wrote {}", path.display());
    Ok(Outcome::from_pass(report.pass))
}

#[derive(Debug, Serialize)]
struct AssumptionsDocument<'a> {
    command: &'static str,
    model_id: &'a str,
    report: &'a AssumptionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_series: Option<String>,
    environment: Environment,
    config: serde_json::Value,
}

/// `t, ‖F(t)‖, fitted` on a log-spaced grid of the fit window; the fitted
/// column is empty without a singular component.
fn kernel_series(model: &LqModel, cfg: &MetrologyConfig, report: &AssumptionReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Core(e.into());
    w.write_record(["t", "norm_F", "fitted"]).map_err(io)?;
    let ratio = (cfg.t_max / cfg.t_min).ln();
    for k in 0..cfg.fit_nodes {
        let t = cfg.t_min * (ratio * k as f64 / (cfg.fit_nodes - 1) as f64).exp();
        let (f, _) = decompose_adjoint_kernel(model, t)?;
        let fitted = match (report.gamma_hat, report.n_hat) {
            (Some(g), Some(n)) => format!("{:.16e}", n * t.powf(-g)),
            _ => String::new(),
        };
        w.write_record([format!("{t:.16e}"), format!("{:.16e}", norm2(&f)), fitted])
            .map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Core(riccati_lab::Error::Io(e.to_string())))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

pub fn cmd_assumptions(cfg: &RunConfig) -> Result<Outcome> {
    let model = cfg.model.build()?;
    let a = &cfg.assumptions;
    let metrology = MetrologyConfig {
        t_min: a.t_min,
        t_max: a.t_max,
        fit_nodes: a.fit_nodes,
        probes: a.probes,
        seed: a.seed,
        duality_step: a.duality_step,
    };
    let report = assumption_report(&model, &metrology)?;
    let series = if a.series {
        let text = kernel_series(&model, &metrology, &report)?;
        write_atomic(out_dir(cfg), "kernel_series.csv", &text)?;
        Some("kernel_series.csv".to_string())
    } else {
        None
    };
    let doc = AssumptionsDocument {
        command: "assumptions",
        model_id: &model.id,
        report: &report,
        kernel_series: series,
        environment: Environment::current(),
        config: cfg.echo(),
    };
    match (report.gamma_hat, report.n_hat) {
        (Some(g), Some(n)) => println!("{}: gamma_hat {g:.4} N_hat {n:.4e}", model.id),
        _ => println!("{}: {}", model.id, report.singular_status),
    }
    let path = write_atomic(out_dir(cfg), "assumptions_report.json", &to_json(&doc))?;
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Pass)
}
