//! Job configuration files.

use std::path::Path;

use rcbf_core::model::{CbfCandidate, CONTROL, ControlSet, ParameterSet, SystemModel, ThetaEncoding, ThetaKind};
use rcbf_core::momentrelax::{ExtractOptions, VerifyOptions};
use rcbf_core::polyalg::{Polynomial, VariableSpace};
use rcbf_core::popbuild::PopOptions;
use rcbf_core::synth::Sense;
use rcbf_sdp::{EmbeddedBackend, ExternalBackend, SdpBackend, SolverSettings};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {msg}")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{field}: {msg}")]
    Invalid { field: String, msg: String },
}

fn invalid<T>(field: impl Into<String>, msg: impl ToString) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid {
        field: field.into(),
        msg: msg.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlConfig {
    Box {
        half_widths: Vec<f64>,
    },
    Ellipsoid {
        w: Vec<Vec<f64>>,
    },
    Polytope {
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vertices: Option<Vec<Vec<f64>>>,
    },
    /// Constraints c_i(u) ≤ 0 over u1..um.
    General { dim: usize, constraints: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Drift, one polynomial in x1..xn per state.
    pub f: Vec<String>,
    /// Input matrix, n rows of m entries.
    pub g: Vec<Vec<String>>,
    /// Disturbance matrix, n rows of d entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub m_eps: f64,
    pub control: ControlConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbfConfig {
    /// b(x, θ) in x1..xn and t (or t1..tk).
    pub b: String,
    pub theta: ThetaKind,
    #[serde(default)]
    pub encoding: ThetaEncoding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub kappa: usize,
    /// Sweep samples, either a list or "lo:step:hi".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thetas: Option<ThetaSamples>,
    pub tol_verify: f64,
    pub feas_tol: f64,
    pub marginal_fallback: bool,
    /// Boundary points per unit of angle for the grid oracle column.
    pub oracle_points: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let d = VerifyOptions::default();
        VerifyConfig {
            kappa: d.kappa,
            thetas: None,
            tol_verify: d.tol_verify,
            feas_tol: d.feas_tol,
            marginal_fallback: d.marginal_fallback,
            oracle_points: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSamples {
    List(Vec<Vec<f64>>),
    Scalars(Vec<f64>),
    Range(String),
}

/// Parses "lo:step:hi" into inclusive samples.
pub fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let nums = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| format!("bad number {p:?} in range {s:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    match nums.as_slice() {
        [v] => Ok(vec![*v]),
        [lo, step, hi] if *step > 0.0 && hi >= lo => {
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12).collect())
        }
        _ => Err(format!("range {s:?} must be lo:step:hi with step > 0")),
    }
}

impl ThetaSamples {
    pub fn expand(&self) -> Result<Vec<Vec<f64>>, String> {
        match self {
            ThetaSamples::List(v) => Ok(v.clone()),
            ThetaSamples::Scalars(v) => Ok(v.iter().map(|t| vec![*t]).collect()),
            ThetaSamples::Range(s) => Ok(parse_range(s)?.into_iter().map(|t| vec![t]).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub nus: Vec<usize>,
    /// Breakpoints of a scalar parameter; each piece is synthesized
    /// separately.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<f64>>,
    /// Order used to maximize V_ν; defaults to ν + 2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_kappa: Option<usize>,
    /// Samples per parameter coordinate in the V_ν grid CSV.
    pub grid_points: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            nus: vec![3],
            partition: None,
            max_kappa: None,
            grid_points: 201,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub metric: String,
    pub sense: Sense,
    pub nu: usize,
    pub kappa: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            metric: "1".into(),
            sense: Sense::Max,
            nu: 3,
            kappa: 4,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    #[default]
    Embedded,
    /// `program args… input.dat-s output.json`
    External {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Job {
    Verify,
    Sweep,
    Synth,
    Select,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job: Option<Job>,
    pub model: ModelConfig,
    pub cbf: CbfConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub select: SelectConfig,
    #[serde(default)]
    pub pop: PopOptions,
    #[serde(default)]
    pub extract: ExtractOptions,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub backend: BackendConfig,
    /// Output directory; defaults to `results/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// Model and candidate built from a configuration.
pub struct Problem {
    pub model: SystemModel,
    pub cbf: CbfCandidate,
}

pub fn load_config(path: &Path) -> Result<JobConfig, ConfigError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
    parse_config(&text, &p)
}

pub fn parse_config(text: &str, origin: &str) -> Result<JobConfig, ConfigError> {
    let cfg: JobConfig = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    cfg.build()?;
    if let Some(s) = &cfg.verify.thetas {
        if let Err(e) = s.expand() {
            return invalid("verify.thetas", e);
        }
    }
    Ok(cfg)
}

impl JobConfig {
    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            kappa: self.verify.kappa,
            tol_verify: self.verify.tol_verify,
            feas_tol: self.verify.feas_tol,
            extract: self.extract,
            pop: self.pop,
            marginal_fallback: self.verify.marginal_fallback,
        }
    }

    /// Solver settings with environment overrides applied.
    pub fn solver_settings(&self) -> SolverSettings {
        self.solver.clone().with_env_overrides()
    }

    pub fn backend(&self) -> Box<dyn SdpBackend> {
        match &self.backend {
            BackendConfig::Embedded => Box::new(EmbeddedBackend::new(self.solver_settings())),
            BackendConfig::External { program, args } => Box::new(ExternalBackend {
                program: program.into(),
                args: args.clone(),
            }),
        }
    }

    pub fn output_dir(&self) -> std::path::PathBuf {
        match &self.output {
            Some(o) => o.into(),
            None => Path::new("results").join(&self.name),
        }
    }

    /// Validates and builds the model and candidate.
    pub fn build(&self) -> Result<Problem, ConfigError> {
        let m = &self.model;
        let n = m.f.len();
        if n == 0 {
            return invalid("model.f", "at least one state is required");
        }
        let xs = SystemModel::state_space(n);
        let parse = |field: String, s: &str| {
            Polynomial::parse(&xs, s).or_else(|e| invalid(field, e))
        };
        let f = m
            .f
            .iter()
            .enumerate()
            .map(|(i, s)| parse(format!("model.f[{i}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        let matrix = |name: &str, rows: &[Vec<String>]| -> Result<Vec<Vec<Polynomial>>, ConfigError> {
            if rows.len() != n {
                return invalid(format!("model.{name}"), format!("expected {n} rows, got {}", rows.len()));
            }
            rows.iter()
                .enumerate()
                .map(|(i, r)| {
                    r.iter()
                        .enumerate()
                        .map(|(k, s)| parse(format!("model.{name}[{i}][{k}]"), s))
                        .collect()
                })
                .collect()
        };
        let g = matrix("g", &m.g)?;
        let j = m.j.as_ref().map(|j| matrix("j", j)).transpose()?;
        let control = match &m.control {
            ControlConfig::Box { half_widths } => ControlSet::box_set(half_widths),
            ControlConfig::Ellipsoid { w } => ControlSet::ellipsoid(w.clone()),
            ControlConfig::Polytope {
                normals,
                offsets,
                vertices,
            } => ControlSet::polytope(normals.clone(), offsets.clone(), vertices.clone()),
            ControlConfig::General { dim, constraints } => {
                let us = VariableSpace::new(&[(CONTROL, *dim)]).or_else(|e| invalid("model.control.dim", e))?;
                let cs = constraints
                    .iter()
                    .enumerate()
                    .map(|(i, s)| Polynomial::parse(&us, s).or_else(|e| invalid(format!("model.control.constraints[{i}]"), e)))
                    .collect::<Result<Vec<_>, _>>()?;
                ControlSet::general(*dim, cs)
            }
        }
        .or_else(|e| invalid("model.control", e))?;
        let model = SystemModel::new(f, g, j, m.m_eps, control).or_else(|e| invalid("model", e))?;
        let theta = ParameterSet::new(self.cbf.theta.clone())
            .or_else(|e| invalid("cbf.theta", e))?
            .with_encoding(self.cbf.encoding);
        let cbf = CbfCandidate::parse(n, &self.cbf.b, theta).or_else(|e| invalid("cbf.b", e))?;
        if self.verify.kappa == 0 {
            return invalid("verify.kappa", "must be positive");
        }
        if self.synth.nus.is_empty() || self.synth.nus.contains(&0) {
            return invalid("synth.nus", "needs at least one positive order");
        }
        if let Some(p) = &self.synth.partition {
            if p.len() < 2 || p.windows(2).any(|w| !(w[0] < w[1])) {
                return invalid("synth.partition", "breakpoints must be increasing");
            }
        }
        Ok(Problem { model, cbf })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLEAN: &str = include_str!("../../../configs/vanderpol_clean.json");
    const UNCERTAIN: &str = include_str!("../../../configs/vanderpol_uncertain.json");

    #[test]
    fn bundled_clean_config() {
        let cfg = parse_config(CLEAN, "clean").unwrap();
        let p = cfg.build().unwrap();
        assert_eq!(p.model.n(), 2);
        assert!(!p.model.has_uncertainty());
        assert_eq!(p.cbf.family, rcbf_core::model::CbfFamily::Circular);
        assert_eq!(cfg.cbf.theta, ThetaKind::Interval { lo: 0.0, hi: 2.0 });
        assert_eq!(cfg.model.control, ControlConfig::Box { half_widths: vec![5.0] });
    }

    #[test]
    fn bundled_uncertain_config() {
        let cfg = parse_config(UNCERTAIN, "uncertain").unwrap();
        let p = cfg.build().unwrap();
        assert_eq!(p.model.m_eps, 0.1);
        assert_eq!(p.cbf.family, rcbf_core::model::CbfFamily::Elliptical);
        assert_eq!(cfg.cbf.theta, ThetaKind::EllipseCoupled { lo: 0.25, hi: 0.75, xi: 0.6 });
    }

    #[test]
    fn round_trip() {
        for text in [CLEAN, UNCERTAIN] {
            let cfg = parse_config(text, "x").unwrap();
            let again = parse_config(&serde_json::to_string_pretty(&cfg).unwrap(), "y").unwrap();
            assert_eq!(cfg, again);
        }
    }

    #[test]
    fn field_paths_in_errors() {
        let bad = CLEAN.replace("0.5*(1 - x2^2)*x2 - x1", "0.5*(1 - x2^2)*x2 - y");
        let err = parse_config(&bad, "bad").unwrap_err().to_string();
        assert!(err.starts_with("model.f[1]"), "{err}");
        let err = parse_config("{ \"name\": 3 }", "s").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn ranges() {
        let r = parse_range("0:0.1:2").unwrap();
        assert_eq!(r.len(), 21);
        assert_eq!(r[3], 0.3);
        assert_eq!(r[20], 2.0);
        assert_eq!(parse_range("1.1").unwrap(), vec![1.1]);
        assert!(parse_range("1:0:2").is_err());
    }
}
