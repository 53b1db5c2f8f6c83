use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{AssumptionParams, Horizon, LqModel};
use crate::error::{Error, Result};
use crate::numkernel::Matrix;

pub const MODEL_FORMAT_VERSION: &str = "riccati-lab-model/1";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "\n[{name}]");
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&x| num(x)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

/// Serializes a model in the plain-text section format.
pub fn write_model(model: &LqModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "version = {MODEL_FORMAT_VERSION}");
    let _ = writeln!(out, "model_id = {}", model.id);
    let _ = writeln!(out, "\n[dims]");
    let _ = writeln!(out, "n = {}", model.n());
    let _ = writeln!(out, "m = {}", model.m());
    let _ = writeln!(out, "p = {}", model.p());
    let horizon = match model.horizon {
        Horizon::Finite(t) => num(t),
        Horizon::Infinite => "inf".to_string(),
    };
    let _ = writeln!(out, "horizon = {horizon}");
    let par: Vec<String> = model.parabolic.iter().map(|i| (i + 1).to_string()).collect();
    let _ = writeln!(out, "parabolic = {}", par.join(" "));
    if !model.metadata.is_empty() {
        let _ = writeln!(out, "\n[metadata]");
        for (k, v) in &model.metadata {
            let _ = writeln!(out, "{k} = {v}");
        }
    }
    write_matrix(&mut out, "A", &model.a);
    write_matrix(&mut out, "B", &model.b);
    write_matrix(&mut out, "R", &model.r);
    let p = &model.assumption;
    let _ = writeln!(out, "\n[assumption]");
    for (k, v) in [
        ("gamma", p.gamma),
        ("N", p.n_const),
        ("epsilon", p.epsilon),
        ("q", p.q),
        ("omega", p.omega),
        ("eta", p.eta),
        ("M", p.m_const),
        ("delta", p.delta),
    ] {
        let _ = writeln!(out, "{k} = {}", num(v));
    }
    out
}

/// Writes the model file atomically (temporary file, then rename).
pub fn save_model(model: &LqModel, path: &Path) -> Result<()> {
    for (k, v) in &model.metadata {
        if k.contains('=') || k.contains('\n') || v.contains('\n') || k.trim() != k {
            return Err(Error::InvalidArgument(format!("metadata entry {k:?} not representable")));
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, write_model(model))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<LqModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

#[derive(Default)]
struct Sections {
    header: BTreeMap<String, (usize, String)>,
    keyed: BTreeMap<String, BTreeMap<String, (usize, String)>>,
    numeric: BTreeMap<String, Vec<(usize, String)>>,
}

const KEYED: [&str; 3] = ["dims", "metadata", "assumption"];
const NUMERIC: [&str; 3] = ["A", "B", "R"];

fn split_sections(text: &str) -> Result<Sections> {
    let mut s = Sections::default();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !KEYED.contains(&name.as_str()) && !NUMERIC.contains(&name.as_str()) {
                return Err(Error::Parse(format!("line {line_no}: unknown section [{name}]")));
            }
            if s.keyed.contains_key(&name) || s.numeric.contains_key(&name) {
                return Err(Error::Parse(format!("line {line_no}: duplicate section [{name}]")));
            }
            if KEYED.contains(&name.as_str()) {
                s.keyed.insert(name.clone(), BTreeMap::new());
            } else {
                s.numeric.insert(name.clone(), Vec::new());
            }
            current = Some(name);
            continue;
        }
        match current.as_deref() {
            Some(sec) if NUMERIC.contains(&sec) => {
                let tokens = s.numeric.get_mut(sec).expect("section registered");
                tokens.extend(line.split_whitespace().map(|t| (line_no, t.to_string())));
            }
            other => {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("line {line_no}: expected key = value")))?;
                let (k, v) = (k.trim().to_string(), v.trim().to_string());
                let map = match other {
                    None => &mut s.header,
                    Some(sec) => s.keyed.get_mut(sec).expect("section registered"),
                };
                if map.insert(k.clone(), (line_no, v)).is_some() {
                    return Err(Error::Parse(format!("line {line_no}: duplicate key {k}")));
                }
            }
        }
    }
    Ok(s)
}

fn take(
    map: &mut BTreeMap<String, (usize, String)>,
    section: &str,
    key: &str,
) -> Result<(usize, String)> {
    map.remove(key)
        .ok_or_else(|| Error::Parse(format!("missing key {key} in {section}")))
}

fn parse_f64(line: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: invalid number {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: non-finite number {s:?}")));
    }
    Ok(v)
}

fn parse_usize(line: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Parse(format!("line {line}: invalid count {s:?}")))
}

fn reject_leftovers(map: &BTreeMap<String, (usize, String)>, section: &str) -> Result<()> {
    match map.iter().next() {
        Some((k, (line, _))) => Err(Error::Parse(format!("line {line}: unknown key {k} in {section}"))),
        None => Ok(()),
    }
}

fn matrix(s: &mut Sections, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
    let tokens = s
        .numeric
        .remove(name)
        .ok_or_else(|| Error::Parse(format!("missing section [{name}]")))?;
    if tokens.len() != rows * cols {
        return Err(Error::Parse(format!(
            "section [{name}] has {} entries, expected {rows}x{cols}",
            tokens.len()
        )));
    }
    let vals = tokens
        .iter()
        .map(|(line, t)| parse_f64(*line, t))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Matrix::from_row_slice(rows, cols, &vals))
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<LqModel> {
    let mut s = split_sections(text)?;
    let (line, version) = take(&mut s.header, "header", "version")?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "line {line}: unsupported version {version:?}, expected {MODEL_FORMAT_VERSION}"
        )));
    }
    let (_, id) = take(&mut s.header, "header", "model_id")?;
    reject_leftovers(&s.header, "header")?;

    let mut dims = s
        .keyed
        .remove("dims")
        .ok_or_else(|| Error::Parse("missing section [dims]".into()))?;
    let mut count = |key: &str| -> Result<usize> {
        let (line, v) = take(&mut dims, "[dims]", key)?;
        parse_usize(line, &v)
    };
    let (n, m, p) = (count("n")?, count("m")?, count("p")?);
    let (line, h) = take(&mut dims, "[dims]", "horizon")?;
    let horizon = if h == "inf" {
        Horizon::Infinite
    } else {
        Horizon::Finite(parse_f64(line, &h)?)
    };
    let (line, par) = take(&mut dims, "[dims]", "parabolic")?;
    let parabolic = par
        .split_whitespace()
        .map(|t| match parse_usize(line, t)? {
            0 => Err(Error::Parse(format!("line {line}: parabolic indices are 1-based"))),
            i => Ok(i - 1),
        })
        .collect::<Result<Vec<usize>>>()?;
    reject_leftovers(&dims, "[dims]")?;

    let metadata = s
        .keyed
        .remove("metadata")
        .unwrap_or_default()
        .into_iter()
        .map(|(k, (_, v))| (k, v))
        .collect();

    let mut asm = s
        .keyed
        .remove("assumption")
        .ok_or_else(|| Error::Parse("missing section [assumption]".into()))?;
    let mut value = |key: &str| -> Result<f64> {
        let (line, v) = take(&mut asm, "[assumption]", key)?;
        parse_f64(line, &v)
    };
    let assumption = AssumptionParams {
        gamma: value("gamma")?,
        n_const: value("N")?,
        epsilon: value("epsilon")?,
        q: value("q")?,
        omega: value("omega")?,
        eta: value("eta")?,
        m_const: value("M")?,
        delta: value("delta")?,
    };
    reject_leftovers(&asm, "[assumption]")?;

    let a = matrix(&mut s, "A", n, n)?;
    let b = matrix(&mut s, "B", n, m)?;
    let r = matrix(&mut s, "R", p, n)?;

    let model = LqModel {
        id,
        a,
        b,
        r,
        horizon,
        parabolic,
        assumption,
        metadata,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{composite_surrogate, heat_boundary_surrogate, random_stable};

    #[test]
    fn roundtrip_is_exact() {
        for model in [
            heat_boundary_surrogate(5, 0.5).unwrap(),
            composite_surrogate(3, 2, 0.5, 0.1, 9).unwrap(),
            random_stable(4, 0, 2, 1, 0.3).unwrap().with_horizon(Horizon::Infinite),
        ] {
            let text = write_model(&model);
            let back = parse_model(&text).unwrap();
            assert_eq!(back, model);
            assert_eq!(write_model(&back), text);
        }
    }

    #[test]
    fn rejects_bad_files() {
        let text = write_model(&heat_boundary_surrogate(2, 0.0).unwrap());
        assert!(matches!(
            parse_model(&text.replace(MODEL_FORMAT_VERSION, "riccati-lab-model/0")),
            Err(Error::Parse(_))
        ));
        assert!(parse_model(&text.replace("n = 2", "n = 3")).is_err());
        assert!(parse_model(&text.replace("[assumption]", "[assumption]\nfoo = 1")).is_err());
        assert!(parse_model(&text.replace("[A]", "[Z]")).is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = std::env::temp_dir().join(format!("rl-model-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.model");
        let model = random_stable(3, 1, 2, 4, 0.5).unwrap();
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
