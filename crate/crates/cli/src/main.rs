//! `riccati-lab`: batch front end for model generation, Riccati solves,
//! verification suites and assumption metrology.
//!
//! Exit status: 0 when every check passes, 1 on a verification or numerical
//! failure, 2 on usage, config or input errors.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod checks;
mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::{Equation, Outcome};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

const THREADS_VAR: &str = "RICCATI_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "riccati-lab", version, about = "Riccati laboratory for LQ boundary control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a surrogate model file.
    Gen(Common),
    /// Solve the differential or algebraic Riccati equation.
    Solve {
        #[arg(value_enum)]
        equation: EquationArg,
        #[command(flatten)]
        common: Common,
    },
    /// Run the verification suite on a stored solution.
    Verify {
        /// Solution CSV (shortcut for verify.solution).
        #[arg(long)]
        solution: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Measure the assumption constants of a model.
    Assumptions(Common),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EquationArg {
    Dre,
    Are,
}

/// Options every command accepts. The shortcut flags are sugar for the
/// matching `--set` override and are applied after it.
#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Inline override `section.key=value`, repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Model file (model.kind = "file", model.path).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Generator name (model.kind).
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Horizon, a positive number or `inf` (model.horizon).
    #[arg(long = "T", value_name = "T")]
    horizon: Option<String>,
    /// Grid steps (solve.steps).
    #[arg(long)]
    steps: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut out = self.set.clone();
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                out.push(format!("{key}={v}"));
            }
        };
        push("model.kind", self.model.as_ref().map(|_| "\"file\"".into()));
        push("model.path", self.model.as_ref().map(|p| toml_string(&p.display().to_string())));
        push("model.kind", self.kind.as_ref().map(|k| toml_string(k)));
        push("model.n", self.n.map(|v| v.to_string()));
        push("model.beta", self.beta.map(|v| format!("{v:?}")));
        push("model.kappa", self.kappa.map(|v| format!("{v:?}")));
        push("model.seed", self.seed.map(|v| v.to_string()));
        push("model.horizon", self.horizon.clone());
        push("solve.steps", self.steps.map(|v| v.to_string()));
        push("output.dir", self.out.as_ref().map(|p| toml_string(&p.display().to_string())));
        out
    }

    fn load(&self, extra: &[String]) -> Result<RunConfig> {
        let mut overrides = self.overrides();
        overrides.extend_from_slice(extra);
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR} = {raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<Outcome> {
    init_threads()?;
    match cli.command {
        Command::Gen(c) => commands::cmd_gen(&c.load(&[])?),
        Command::Solve { equation, common } => {
            let eq = match equation {
                EquationArg::Dre => Equation::Dre,
                EquationArg::Are => Equation::Are,
            };
            commands::cmd_solve(&common.load(&[])?, eq)
        }
        Command::Verify { solution, common } => {
            let extra: Vec<String> = solution
                .iter()
                .map(|p| format!("verify.solution={}", toml_string(&p.display().to_string())))
                .collect();
            commands::cmd_verify(&common.load(&extra)?)
        }
        Command::Assumptions(c) => commands::cmd_assumptions(&c.load(&[])?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
