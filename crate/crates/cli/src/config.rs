//! Run configuration: a JSON document with matrices as nested [re, im] pairs.

use std::path::Path;

use rislab_core::model::{self, ProbeSpec, RisModel};
use rislab_core::qlinalg::{hermiticity_residual, Operator, C64};
use rislab_core::semigroup::CompositeKind;
use serde_json::{json, Map, Value};

use crate::error::{ConfigError, ConfigErrorKind};
use crate::tolerances::Tolerances;

#[derive(Clone, Debug, PartialEq)]
pub enum ModelConfig {
    Toy {
        e: f64,
        e0: f64,
        lambdas: Vec<f64>,
        taus: Vec<f64>,
        betas: Vec<f64>,
        beta_ref: f64,
    },
    Explicit {
        h_sys: Operator,
        probes: Vec<ProbeSpec>,
        beta_ref: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub path: Option<String>,
    pub format: Format,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub probe_weights: Option<Vec<f64>>,
    pub kind: CompositeKind,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub output: OutputConfig,
}

fn err(kind: ConfigErrorKind, path: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError { kind, path: path.to_string(), message: msg.into() }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ConfigError> {
    v.as_object().ok_or_else(|| err(ConfigErrorKind::Invalid, path, "expected an object"))
}

fn field<'a>(o: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, ConfigError> {
    o.get(key).ok_or_else(|| err(ConfigErrorKind::Invalid, &join(path, key), "missing field"))
}

fn reject_unknown(o: &Map<String, Value>, allowed: &[&str], path: &str) -> Result<(), ConfigError> {
    match o.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(err(ConfigErrorKind::Invalid, &join(path, k), "unknown field")),
        None => Ok(()),
    }
}

fn number(v: &Value, path: &str) -> Result<f64, ConfigError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| err(ConfigErrorKind::Invalid, path, "expected a finite number"))
}

fn numbers(v: &Value, path: &str) -> Result<Vec<f64>, ConfigError> {
    let a = v.as_array().ok_or_else(|| err(ConfigErrorKind::Invalid, path, "expected an array of numbers"))?;
    a.iter().enumerate().map(|(i, x)| number(x, &format!("{path}[{i}]"))).collect()
}

fn matrix(v: &Value, path: &str) -> Result<Operator, ConfigError> {
    let rows = v
        .as_array()
        .ok_or_else(|| err(ConfigErrorKind::Invalid, path, "expected a matrix (array of rows)"))?;
    let n = rows.len();
    if n == 0 {
        return Err(err(ConfigErrorKind::Dimension, path, "matrix is empty"));
    }
    let mut out = Operator::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let rp = format!("{path}[{i}]");
        let row = row.as_array().ok_or_else(|| err(ConfigErrorKind::Invalid, &rp, "expected a row"))?;
        if row.len() != n {
            return Err(err(
                ConfigErrorKind::Dimension,
                &rp,
                format!("row has {} entries, matrix has {n} rows", row.len()),
            ));
        }
        for (j, z) in row.iter().enumerate() {
            let zp = format!("{rp}[{j}]");
            let pair = z
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| err(ConfigErrorKind::Invalid, &zp, "expected an [re, im] pair"))?;
            out[(i, j)] = C64::new(number(&pair[0], &format!("{zp}[0]"))?, number(&pair[1], &format!("{zp}[1]"))?);
        }
    }
    Ok(out)
}

fn hermitian(m: Operator, path: &str, tol: f64) -> Result<Operator, ConfigError> {
    let r = hermiticity_residual(&m);
    if r > tol {
        return Err(err(ConfigErrorKind::NonHermitian, path, format!("matrix is not Hermitian (residual {r:.3e})")));
    }
    Ok(m)
}

fn parse_model(v: &Value, tol: &Tolerances) -> Result<ModelConfig, ConfigError> {
    let path = "model";
    let o = object(v, path)?;
    if let Some(p) = o.get("preset") {
        if p.as_str() != Some("toy") {
            return Err(err(ConfigErrorKind::Invalid, "model.preset", "only the \"toy\" preset exists"));
        }
        reject_unknown(o, &["preset", "E", "E0", "lambdas", "taus", "betas", "beta_ref"], path)?;
        let lambdas = numbers(field(o, "lambdas", path)?, "model.lambdas")?;
        let taus = numbers(field(o, "taus", path)?, "model.taus")?;
        let betas = numbers(field(o, "betas", path)?, "model.betas")?;
        if lambdas.is_empty() {
            return Err(err(ConfigErrorKind::Dimension, "model.lambdas", "at least one probe is required"));
        }
        for (name, len) in [("taus", taus.len()), ("betas", betas.len())] {
            if len != lambdas.len() {
                return Err(err(
                    ConfigErrorKind::Dimension,
                    &format!("model.{name}"),
                    format!("has {len} entries, lambdas has {}", lambdas.len()),
                ));
            }
        }
        check_taus(&taus, "model.taus")?;
        return Ok(ModelConfig::Toy {
            e: number(field(o, "E", path)?, "model.E")?,
            e0: number(field(o, "E0", path)?, "model.E0")?,
            lambdas,
            taus,
            betas,
            beta_ref: number(field(o, "beta_ref", path)?, "model.beta_ref")?,
        });
    }
    reject_unknown(o, &["h_sys", "probes", "beta_ref"], path)?;
    let h_sys = hermitian(matrix(field(o, "h_sys", path)?, "model.h_sys")?, "model.h_sys", tol.hermitian)?;
    let ds = h_sys.nrows();
    let arr = field(o, "probes", path)?
        .as_array()
        .ok_or_else(|| err(ConfigErrorKind::Invalid, "model.probes", "expected an array"))?;
    if arr.is_empty() {
        return Err(err(ConfigErrorKind::Dimension, "model.probes", "at least one probe is required"));
    }
    let mut probes = Vec::with_capacity(arr.len());
    for (j, p) in arr.iter().enumerate() {
        let pp = format!("model.probes[{j}]");
        let po = object(p, &pp)?;
        reject_unknown(po, &["h_env", "coupling", "tau", "beta"], &pp)?;
        let hp = join(&pp, "h_env");
        let h_env = hermitian(matrix(field(po, "h_env", &pp)?, &hp)?, &hp, tol.hermitian)?;
        let cp = join(&pp, "coupling");
        let coupling = matrix(field(po, "coupling", &pp)?, &cp)?;
        let want = ds * h_env.nrows();
        if coupling.nrows() != want {
            return Err(err(
                ConfigErrorKind::Dimension,
                &cp,
                format!("coupling is {0}x{0}, expected {want}x{want}", coupling.nrows()),
            ));
        }
        let coupling = hermitian(coupling, &cp, tol.hermitian)?;
        let tau = number(field(po, "tau", &pp)?, &join(&pp, "tau"))?;
        check_taus(&[tau], &join(&pp, "tau"))?;
        let beta = number(field(po, "beta", &pp)?, &join(&pp, "beta"))?;
        probes.push(ProbeSpec { h_env, coupling, tau, beta });
    }
    Ok(ModelConfig::Explicit {
        h_sys,
        probes,
        beta_ref: number(field(o, "beta_ref", path)?, "model.beta_ref")?,
    })
}

fn check_taus(taus: &[f64], path: &str) -> Result<(), ConfigError> {
    match taus.iter().position(|&t| t <= 0.0) {
        Some(i) if taus.len() > 1 => Err(err(ConfigErrorKind::Invalid, &format!("{path}[{i}]"), "tau must be positive")),
        Some(_) => Err(err(ConfigErrorKind::Invalid, path, "tau must be positive")),
        None => Ok(()),
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(ConfigErrorKind::Io, "", format!("{}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let v: Value = serde_json::from_str(text).map_err(|e| err(ConfigErrorKind::Malformed, "", e.to_string()))?;
        Self::from_value(&v)
    }

    pub fn from_value(v: &Value) -> Result<Self, ConfigError> {
        let o = object(v, "")?;
        reject_unknown(o, &["model", "probe_weights", "kind", "tolerances", "seed", "output"], "")?;
        let tolerances = match o.get("tolerances") {
            None => Tolerances::defaults(),
            Some(t) => {
                let to = object(t, "tolerances")?;
                let mut tol = Tolerances::defaults();
                for (k, x) in to {
                    let p = join("tolerances", k);
                    let val = number(x, &p)?;
                    if !tol.set(k, val) {
                        return Err(err(ConfigErrorKind::Invalid, &p, "unknown tolerance"));
                    }
                }
                tol
            }
        };
        let model = parse_model(field(o, "model", "")?, &tolerances)?;
        let m = match &model {
            ModelConfig::Toy { lambdas, .. } => lambdas.len(),
            ModelConfig::Explicit { probes, .. } => probes.len(),
        };
        let probe_weights = match o.get("probe_weights") {
            None | Some(Value::Null) => None,
            Some(w) => {
                let w = numbers(w, "probe_weights")?;
                if w.len() != m {
                    return Err(err(ConfigErrorKind::Dimension, "probe_weights", format!("expected {m} entries")));
                }
                Some(w)
            }
        };
        let kind = match o.get("kind") {
            None => CompositeKind::Cyclic,
            Some(k) => k
                .as_str()
                .and_then(CompositeKind::parse)
                .ok_or_else(|| err(ConfigErrorKind::Invalid, "kind", "expected cyclic, reversed_cyclic or random"))?,
        };
        let seed = match o.get("seed") {
            None => 0,
            Some(s) => s
                .as_u64()
                .ok_or_else(|| err(ConfigErrorKind::Invalid, "seed", "expected a nonnegative integer"))?,
        };
        let output = match o.get("output") {
            None => OutputConfig { path: None, format: Format::Csv },
            Some(out) => {
                let oo = object(out, "output")?;
                reject_unknown(oo, &["path", "format"], "output")?;
                let path = match oo.get("path") {
                    None | Some(Value::Null) => None,
                    Some(p) => Some(
                        p.as_str()
                            .ok_or_else(|| err(ConfigErrorKind::Invalid, "output.path", "expected a string"))?
                            .to_string(),
                    ),
                };
                let format = match oo.get("format") {
                    None => Format::Csv,
                    Some(f) => f
                        .as_str()
                        .and_then(Format::parse)
                        .ok_or_else(|| err(ConfigErrorKind::Invalid, "output.format", "expected csv or json"))?,
                };
                OutputConfig { path, format }
            }
        };
        let cfg = RunConfig { model, probe_weights, kind, tolerances, seed, output };
        // remaining invariants (e.g. weight normalization) are checked by the model builder
        cfg.build_model()?;
        Ok(cfg)
    }

    pub fn build_model(&self) -> Result<RisModel, ConfigError> {
        let built = match &self.model {
            ModelConfig::Toy { e, e0, lambdas, taus, betas, beta_ref } => {
                model::toy_model(*e, *e0, lambdas, taus, betas, *beta_ref)
            }
            ModelConfig::Explicit { h_sys, probes, beta_ref } => RisModel::new(h_sys.clone(), probes.clone(), *beta_ref),
        };
        let model = built.map_err(|e| err(ConfigErrorKind::from_core(&e), "model", e.to_string()))?;
        match &self.probe_weights {
            None => Ok(model),
            Some(w) => model
                .with_probe_weights(w.clone())
                .map_err(|e| err(ConfigErrorKind::Invalid, "probe_weights", e.to_string())),
        }
    }

    /// Canonical JSON form; parsing it yields an equal config.
    pub fn to_value(&self) -> Value {
        let model = match &self.model {
            ModelConfig::Toy { e, e0, lambdas, taus, betas, beta_ref } => json!({
                "preset": "toy", "E": e, "E0": e0, "lambdas": lambdas, "taus": taus, "betas": betas, "beta_ref": beta_ref,
            }),
            ModelConfig::Explicit { h_sys, probes, beta_ref } => json!({
                "h_sys": matrix_value(h_sys),
                "probes": probes.iter().map(|p| json!({
                    "h_env": matrix_value(&p.h_env),
                    "coupling": matrix_value(&p.coupling),
                    "tau": p.tau,
                    "beta": p.beta,
                })).collect::<Vec<_>>(),
                "beta_ref": beta_ref,
            }),
        };
        let mut out = json!({
            "model": model,
            "kind": self.kind.name(),
            "tolerances": self.tolerances.to_value(),
            "seed": self.seed,
            "output": { "path": self.output.path, "format": self.output.format.name() },
        });
        if let Some(w) = &self.probe_weights {
            out["probe_weights"] = json!(w);
        }
        out
    }

    pub fn to_canonical_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("config serializes")
    }
}

pub fn matrix_value(m: &Operator) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect()))
            .collect(),
    )
}

/// Toy configuration shipped with the binary.
pub const BUNDLED_TOY: &str = include_str!("../configs/toy.json");

#[cfg(test)]
mod tests {
    use super::*;

    fn explicit(coupling_dim: usize) -> String {
        let m = |d: usize| {
            let rows: Vec<Value> = (0..d)
                .map(|i| Value::Array((0..d).map(|j| json!([if i == j { 1.0 } else { 0.0 }, 0.0])).collect()))
                .collect();
            Value::Array(rows)
        };
        json!({
            "model": {
                "h_sys": m(2),
                "probes": [{"h_env": m(2), "coupling": m(coupling_dim), "tau": 1.0, "beta": 1.0}],
                "beta_ref": 1.0
            }
        })
        .to_string()
    }

    #[test]
    fn bundled_toy_parses() {
        let cfg = RunConfig::from_str(BUNDLED_TOY).unwrap();
        assert_eq!(cfg.build_model().unwrap().m(), 2);
    }

    #[test]
    fn wrong_coupling_dimension_names_the_field() {
        let e = RunConfig::from_str(&explicit(3)).unwrap_err();
        assert_eq!(e.kind, ConfigErrorKind::Dimension);
        assert_eq!(e.path, "model.probes[0].coupling");
        assert!(RunConfig::from_str(&explicit(4)).is_ok());
    }

    #[test]
    fn error_kinds_are_distinct() {
        assert_eq!(RunConfig::from_str("{ not json").unwrap_err().kind, ConfigErrorKind::Malformed);
        let mut v: Value = serde_json::from_str(&explicit(4)).unwrap();
        v["model"]["h_sys"][0][1] = json!([0.5, 0.0]);
        let e = RunConfig::from_value(&v).unwrap_err();
        assert_eq!(e.kind, ConfigErrorKind::NonHermitian);
        assert_eq!(e.path, "model.h_sys");
        let codes = [ConfigErrorKind::Malformed, ConfigErrorKind::Dimension, ConfigErrorKind::NonHermitian];
        let names: std::collections::HashSet<_> = codes.iter().map(|k| k.code()).collect();
        assert_eq!(names.len(), 3);
    }

    #[test]
    fn canonical_form_is_idempotent() {
        for text in [BUNDLED_TOY.to_string(), explicit(4)] {
            let a = RunConfig::from_str(&text).unwrap();
            let s1 = a.to_canonical_string();
            let b = RunConfig::from_str(&s1).unwrap();
            assert_eq!(a, b);
            assert_eq!(s1, b.to_canonical_string());
        }
    }

    #[test]
    fn nonpositive_tau_is_rejected() {
        let mut v: Value = serde_json::from_str(BUNDLED_TOY).unwrap();
        v["model"]["taus"][1] = json!(0.0);
        assert_eq!(RunConfig::from_value(&v).unwrap_err().path, "model.taus[1]");
    }
}
