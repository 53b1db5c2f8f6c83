use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use riccati_lab::models::{
    composite_surrogate, heat_boundary_surrogate, load_model, random_stable, scalar_model, Horizon, LqModel,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Everything a command needs, after file, `--set` and shortcut merging.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub solve: SolveConfig,
    pub verify: VerifyConfig,
    pub assumptions: AssumptionsConfig,
    /// Per-check tolerance overrides, keyed by check name.
    pub tolerances: BTreeMap<String, f64>,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonValue {
    Length(f64),
    Word(String),
}

/// Generator name and parameters, or a model file. Parameters left unset
/// take the generator defaults listed in the README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_h: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// `T > 0` or `"inf"`; overrides the generator or file horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<HorizonValue>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: "heat".into(),
            path: None,
            n: None,
            beta: None,
            n_h: None,
            n_p: None,
            kappa: None,
            damping: None,
            m: None,
            p: None,
            margin: None,
            seed: None,
            a: None,
            b: None,
            r: None,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub steps: usize,
    pub integrator: String,
    pub method: String,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            integrator: "rk4".into(),
            method: "newton".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Defaults to `<output.dir>/solution.csv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<PathBuf>,
    /// Unset runs every check that applies to the solution type.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<String>>,
    pub probes: usize,
    pub controls: usize,
    pub control_intervals: usize,
    pub picard_steps: usize,
    pub picard_rates: Vec<f64>,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            solution: None,
            checks: None,
            probes: 4,
            controls: 8,
            control_intervals: 100,
            picard_steps: 500,
            picard_rates: vec![1.0, 2.0, 4.0, 8.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssumptionsConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub fit_nodes: usize,
    pub probes: usize,
    pub seed: u64,
    pub duality_step: f64,
    /// Also write `kernel_series.csv` with `t, ‖F(t)‖, fitted`.
    pub series: bool,
}

impl Default for AssumptionsConfig {
    fn default() -> Self {
        let d = riccati_lab::semiflow::MetrologyConfig::default();
        Self {
            t_min: d.t_min,
            t_max: d.t_max,
            fit_nodes: d.fit_nodes,
            probes: d.probes,
            seed: d.seed,
            duality_step: d.duality_step,
            series: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Parses a `--set` value as a TOML literal, falling back to a bare string.
fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `section.key=value` override to the raw table.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {spec:?} is not section.key=value")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| CliError::Usage(format!("override key {key:?} is not section.key")))?;
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(CliError::Usage(format!("[{section}] is not a section")));
    };
    sec.insert(field.to_string(), parse_literal(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides in order and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for spec in overrides {
            apply_override(&mut table, spec)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
        // a bare `inf` parses as a float; keep the echo JSON-representable
        if cfg.model.horizon == Some(HorizonValue::Length(f64::INFINITY)) {
            cfg.model.horizon = Some(HorizonValue::Word("inf".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |what: &str| Err(CliError::Usage(format!("config: {what}")));
        if self.solve.steps == 0 {
            return bad("solve.steps must be >= 1");
        }
        let v = &self.verify;
        if v.probes == 0 || v.control_intervals == 0 || v.picard_steps == 0 {
            return bad("verify.probes, control_intervals and picard_steps must be >= 1");
        }
        if v.picard_rates.is_empty() || v.picard_rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("verify.picard_rates must be a non-empty list of positive rates");
        }
        let a = &self.assumptions;
        if !(a.t_min > 0.0 && a.t_min < a.t_max && a.t_max.is_finite()) {
            return bad("assumptions needs 0 < t_min < t_max");
        }
        if a.fit_nodes < 2 || a.probes == 0 || !(a.duality_step > 0.0) {
            return bad("assumptions needs fit_nodes >= 2, probes >= 1, duality_step > 0");
        }
        for (name, tol) in &self.tolerances {
            if !crate::checks::is_check_name(name) {
                return bad(&format!("unknown check {name:?} in [tolerances]"));
            }
            if !(*tol > 0.0 && tol.is_finite()) {
                return bad(&format!("tolerance {name} = {tol} must be > 0"));
            }
        }
        if let Some(checks) = &v.checks {
            for name in checks {
                if !crate::checks::is_check_name(name) {
                    return bad(&format!("unknown check {name:?} in verify.checks"));
                }
            }
        }
        Ok(())
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

impl ModelConfig {
    /// Keys each kind accepts besides `kind` and `horizon`.
    fn allowed(&self) -> Option<&'static [&'static str]> {
        Some(match self.kind.as_str() {
            "heat" => &["n", "beta"],
            "composite" => &["n_h", "n_p", "kappa", "damping", "seed"],
            "random" => &["n", "m", "p", "seed", "margin"],
            "scalar" => &["a", "b", "r"],
            "file" => &["path"],
            _ => return None,
        })
    }

    fn set_keys(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut mark = |set: bool, name| {
            if set {
                out.push(name)
            }
        };
        mark(self.path.is_some(), "path");
        mark(self.n.is_some(), "n");
        mark(self.beta.is_some(), "beta");
        mark(self.n_h.is_some(), "n_h");
        mark(self.n_p.is_some(), "n_p");
        mark(self.kappa.is_some(), "kappa");
        mark(self.damping.is_some(), "damping");
        mark(self.m.is_some(), "m");
        mark(self.p.is_some(), "p");
        mark(self.margin.is_some(), "margin");
        mark(self.seed.is_some(), "seed");
        mark(self.a.is_some(), "a");
        mark(self.b.is_some(), "b");
        mark(self.r.is_some(), "r");
        out
    }

    fn validate(&self) -> Result<()> {
        let allowed = self.allowed().ok_or_else(|| {
            CliError::Usage(format!(
                "model.kind {:?} is not one of heat, composite, random, scalar, file",
                self.kind
            ))
        })?;
        if let Some(key) = self.set_keys().into_iter().find(|k| !allowed.contains(k)) {
            return Err(CliError::Usage(format!(
                "model.{key} does not apply to kind {:?}",
                self.kind
            )));
        }
        if self.kind == "file" && self.path.is_none() {
            return Err(CliError::Usage("model.kind = \"file\" needs model.path".into()));
        }
        self.horizon()?;
        Ok(())
    }

    fn horizon(&self) -> Result<Option<Horizon>> {
        match &self.horizon {
            None => Ok(None),
            Some(HorizonValue::Length(t)) if *t == f64::INFINITY => Ok(Some(Horizon::Infinite)),
            Some(HorizonValue::Length(t)) if *t > 0.0 && t.is_finite() => Ok(Some(Horizon::Finite(*t))),
            Some(HorizonValue::Word(w)) if matches!(w.as_str(), "inf" | "infinite") => Ok(Some(Horizon::Infinite)),
            Some(other) => Err(CliError::Usage(format!(
                "model.horizon {other:?} must be a positive number or \"inf\""
            ))),
        }
    }

    pub fn is_file(&self) -> bool {
        self.kind == "file"
    }

    /// Builds (or loads) the model and applies the horizon override.
    pub fn build(&self) -> Result<LqModel> {
        let model = match self.kind.as_str() {
            "heat" => heat_boundary_surrogate(self.n.unwrap_or(8), self.beta.unwrap_or(0.25))?,
            "composite" => composite_surrogate(
                self.n_h.unwrap_or(4),
                self.n_p.unwrap_or(4),
                self.kappa.unwrap_or(1.0),
                self.damping.unwrap_or(0.2),
                self.seed.unwrap_or(1),
            )?,
            "random" => random_stable(
                self.n.unwrap_or(6),
                self.m.unwrap_or(2),
                self.p.unwrap_or(3),
                self.seed.unwrap_or(11),
                self.margin.unwrap_or(0.5),
            )?,
            "scalar" => scalar_model(
                self.a.unwrap_or(-1.0),
                self.b.unwrap_or(1.0),
                self.r.unwrap_or(1.0),
                Horizon::Finite(1.0),
            )?,
            "file" => {
                let path = self.path.as_deref().expect("validated");
                if !path.exists() {
                    return Err(CliError::Usage(format!("model file {} does not exist", path.display())));
                }
                load_model(path)?
            }
            other => return Err(CliError::Usage(format!("unknown model kind {other:?}"))),
        };
        Ok(match self.horizon()? {
            Some(h) => model.with_horizon(h),
            None => model,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_literals() {
        let overrides: Vec<String> = ["model.n=16", "model.kind=random", "model.horizon=inf", "verify.checks=[]"]
            .map(String::from)
            .to_vec();
        let cfg = RunConfig::load(None, &overrides).unwrap();
        assert_eq!(cfg.model.n, Some(16));
        assert_eq!(cfg.model.kind, "random");
        assert_eq!(cfg.model.horizon, Some(HorizonValue::Word("inf".into())));
        assert_eq!(cfg.model.build().unwrap().horizon, Horizon::Infinite);
        assert_eq!(cfg.verify.checks, Some(vec![]));
    }

    #[test]
    fn integer_literal_is_accepted_for_floats() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "model.horizon=2").unwrap();
        apply_override(&mut t, "model.kind=heat").unwrap();
        apply_override(&mut t, "model.beta=0").unwrap();
        let cfg: RunConfig = toml::Value::Table(t).try_into().unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.model.build().unwrap().horizon, Horizon::Finite(2.0));
    }

    #[test]
    fn rejects_unknown_and_misplaced_keys() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "model.bta=0.5").unwrap();
        assert!(toml::Value::Table(t).try_into::<RunConfig>().is_err());

        let mut cfg = RunConfig::default();
        cfg.model.kind = "random".into();
        cfg.model.beta = Some(0.5);
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.tolerances.insert("no_such_check".into(), 1e-3);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn echo_roundtrips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.model.kind = "composite".into();
        cfg.model.kappa = Some(0.0);
        cfg.tolerances.insert("ire".into(), 1e-7);
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
