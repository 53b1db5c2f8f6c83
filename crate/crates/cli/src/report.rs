use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

/// One executed check. `pass` holds exactly when `residual ≤ tolerance`; a
/// check that could not produce a residual reports `null` and an error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub residual: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    /// Wall-clock seconds.
    pub runtime: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CheckResult {
    pub fn measured(residual: f64, tolerance: f64, runtime: f64) -> Self {
        let finite = residual.is_finite();
        Self {
            residual: finite.then_some(residual),
            tolerance,
            pass: finite && residual <= tolerance,
            runtime,
            error: (!finite).then(|| format!("non-finite residual {residual}")),
        }
    }

    pub fn failed(error: String, tolerance: f64, runtime: f64) -> Self {
        Self {
            residual: None,
            tolerance,
            pass: false,
            runtime,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub tool: &'static str,
    pub version: &'static str,
    pub os: &'static str,
    pub arch: &'static str,
    pub threads: usize,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads: rayon::current_num_threads(),
        }
    }
}

/// Report shared by `solve` and `verify`; check names are sorted.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub command: String,
    pub model_id: String,
    pub pass: bool,
    pub checks: BTreeMap<String, CheckResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<serde_json::Value>,
    pub environment: Environment,
    pub config: serde_json::Value,
}

impl VerificationReport {
    pub fn new(command: &str, model_id: &str, checks: BTreeMap<String, CheckResult>, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            model_id: model_id.into(),
            pass: checks.values().all(|c| c.pass),
            checks,
            solution: None,
            environment: Environment::current(),
            config,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let target = dir.join(name);
    let fail = |e: std::io::Error| CliError::Write {
        path: target.display().to_string(),
        reason: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(fail)?;
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(fail)?;
    f.write_all(contents.as_bytes()).map_err(fail)?;
    f.sync_all().map_err(fail)?;
    drop(f);
    std::fs::rename(&tmp, &target).map_err(fail)?;
    Ok(target)
}

/// `rows × cols` as nested arrays.
pub fn matrix_json(m: &riccati_lab::Matrix) -> serde_json::Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect();
    serde_json::json!(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_iff_residual_within_tolerance() {
        assert!(CheckResult::measured(1e-7, 1e-6, 0.0).pass);
        assert!(CheckResult::measured(1e-6, 1e-6, 0.0).pass);
        assert!(!CheckResult::measured(2e-6, 1e-6, 0.0).pass);
        let nan = CheckResult::measured(f64::NAN, 1e-6, 0.0);
        assert!(!nan.pass && nan.residual.is_none() && nan.error.is_some());
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.txt", "one").unwrap();
        let p = write_atomic(dir.path(), "a.txt", "two").unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
