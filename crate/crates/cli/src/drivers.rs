//! Experiment drivers: verification sweeps, the synthesis ladder and
//! metric-based selection.

use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use rcbf_core::model::{boundary_grid_oracle, CbfCandidate, SystemModel, PARAM};
use rcbf_core::momentrelax::{verify, VerificationVerdict};
use rcbf_core::polyalg::{Polynomial, VariableSpace};
use rcbf_core::synth::{
    best_maximizer, restrict_interval, select_by_metric, synthesize_level, Maximization, Selection, SynthOptions,
    SynthesisLevel, SynthesisRecord,
};
use rcbf_sdp::SdpBackend;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, Job, JobConfig, Problem};

pub const SCHEMA: &str = "rcbf-result/1";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver: {0}")]
    Solver(#[from] rcbf_core::CoreError),
    #[error("{0}")]
    Failed(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Worker pool bounded by `RCBF_WORKERS`.
pub fn worker_pool() -> rayon::ThreadPool {
    let n = std::env::var("RCBF_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<VerificationVerdict>,
    /// Boundary-grid value of V(θ), planar systems only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub nu: usize,
    /// Parameter interval of the refined piece, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub piece: Option<[f64; 2]>,
    /// V_ν as (exponents, coefficient) pairs in the parameters.
    pub coefficients: Vec<(Vec<u8>, f64)>,
    pub integral: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sdp_status: Option<rcbf_sdp::Status>,
    pub residual: f64,
    pub tainted: bool,
    pub maximum: Maximization,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LevelReport {
    fn from_level(l: &SynthesisLevel, piece: Option<[f64; 2]>) -> Self {
        LevelReport {
            nu: l.nu,
            piece,
            coefficients: l.bound.coefficients(),
            integral: l.bound.integral,
            sdp_status: Some(l.bound.status),
            residual: l.bound.residual,
            tainted: l.bound.tainted,
            maximum: l.max.clone(),
            seconds: l.seconds,
            error: None,
        }
    }

    fn failed(nu: usize, piece: Option<[f64; 2]>, err: String, seconds: f64) -> Self {
        LevelReport {
            nu,
            piece,
            coefficients: vec![],
            integral: f64::NAN,
            sdp_status: None,
            residual: f64::NAN,
            tainted: true,
            maximum: Maximization {
                value: f64::NAN,
                maximizers: vec![],
                values: vec![],
                rank: None,
                flagged: true,
                diagnostic: Some(err.clone()),
            },
            seconds,
            error: Some(err),
        }
    }

    /// V_ν rebuilt from the stored coefficients.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .map(|(e, c)| c * e.iter().zip(theta).map(|(&k, t)| t.powi(k as i32)).product::<f64>())
            .sum()
    }

    pub fn covers(&self, theta: &[f64]) -> bool {
        match self.piece {
            Some([lo, hi]) => theta[0] >= lo - 1e-12 && theta[0] <= hi + 1e-12,
            None => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub levels: Vec<LevelReport>,
    /// Running best max_θ V_ν over the unrefined ladder.
    pub best_value: Option<f64>,
    pub best_theta: Option<Vec<f64>>,
    /// ν of the level attaining the best value.
    pub best_nu: Option<usize>,
    /// Parameter grid for the V_ν tables, with the boundary-grid value of
    /// V(θ) when it is computed.
    pub grid: Vec<GridPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub theta: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
}

/// Uniform grid of the parameter set: `points` samples for a scalar
/// parameter, 11 per coordinate (inside Θ) otherwise.
pub fn parameter_grid(cbf: &CbfCandidate, points: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = cbf.theta.bounds();
    let k = lo.len();
    let per = if k == 1 { points.max(2) } else { 11 };
    let mut out = vec![];
    let mut idx = vec![0usize; k];
    loop {
        let t: Vec<f64> = (0..k)
            .map(|i| lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / (per - 1) as f64)
            .collect();
        if cbf.theta.contains(&t, 1e-12) {
            out.push(t);
        }
        let mut i = 0;
        loop {
            if i == k {
                return out;
            }
            idx[i] += 1;
            if idx[i] < per {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub metric: String,
    pub sense: rcbf_core::synth::Sense,
    pub nu: usize,
    pub kappa: usize,
    pub level: LevelReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub version: String,
    pub backend: String,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub schema: String,
    pub job: Job,
    pub meta: RunMeta,
    /// The full configuration that produced these numbers.
    pub config: JobConfig,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub sweep: Vec<SweepRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub synthesis: Option<SynthesisReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selection: Option<SelectionReport>,
}

impl ResultBundle {
    fn new(job: Job, cfg: &JobConfig, backend: &dyn SdpBackend) -> Self {
        ResultBundle {
            schema: SCHEMA.into(),
            job,
            meta: RunMeta {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                backend: backend.name(),
                wall_seconds: 0.0,
            },
            config: cfg.clone(),
            sweep: vec![],
            synthesis: None,
            selection: None,
        }
    }
}

fn oracle_value(p: &Problem, theta: &[f64], rays: usize) -> Option<f64> {
    if p.model.n() != 2 || rays == 0 {
        return None;
    }
    boundary_grid_oracle(&p.model, &p.cbf, theta, rays).ok().map(|o| o.value)
}

fn verify_row(cfg: &JobConfig, p: &Problem, backend: &dyn SdpBackend, theta: &[f64]) -> SweepRow {
    let opts = cfg.verify_options();
    let oracle = oracle_value(p, theta, cfg.verify.oracle_points);
    match verify(&p.model, &p.cbf, theta, backend, &opts) {
        Ok(v) => {
            info!("θ={theta:?}: ρ={:.6e} {} ({:.2}s)", v.rho, v.status.as_str(), v.seconds);
            SweepRow {
                theta: theta.to_vec(),
                verdict: Some(v),
                oracle,
                error: None,
            }
        }
        Err(e) => {
            warn!("θ={theta:?}: {e}");
            SweepRow {
                theta: theta.to_vec(),
                verdict: None,
                oracle,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Verifies one parameter value.
pub fn run_verify(cfg: &JobConfig, theta: &[f64]) -> Result<ResultBundle, RunError> {
    let start = Instant::now();
    let p = cfg.build()?;
    if !p.cbf.theta.contains(theta, 1e-9) {
        return Err(ConfigError::Invalid {
            field: "theta".into(),
            msg: format!("{theta:?} lies outside the parameter set"),
        }
        .into());
    }
    let backend = cfg.backend();
    let mut out = ResultBundle::new(Job::Verify, cfg, backend.as_ref());
    let row = verify_row(cfg, &p, backend.as_ref(), theta);
    if let Some(e) = &row.error {
        return Err(RunError::Failed(e.clone()));
    }
    out.sweep.push(row);
    out.meta.wall_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Verifies every sample; failed solves are recorded per row.
pub fn run_verify_sweep(cfg: &JobConfig, thetas: &[Vec<f64>]) -> Result<ResultBundle, RunError> {
    let start = Instant::now();
    let p = cfg.build()?;
    for t in thetas {
        if t.len() != p.cbf.k() {
            return Err(ConfigError::Invalid {
                field: "verify.thetas".into(),
                msg: format!("sample {t:?} has {} entries, the parameter has {}", t.len(), p.cbf.k()),
            }
            .into());
        }
    }
    let backend = cfg.backend();
    let mut out = ResultBundle::new(Job::Sweep, cfg, backend.as_ref());
    let pool = worker_pool();
    let b = backend.as_ref();
    out.sweep = pool.install(|| thetas.par_iter().map(|t| verify_row(cfg, &p, b, t)).collect());
    out.meta.wall_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

fn synth_options(cfg: &JobConfig) -> SynthOptions {
    SynthOptions {
        max_kappa: cfg.synth.max_kappa,
        extract: cfg.extract,
        pop: cfg.pop,
    }
}

fn run_level(
    model: &SystemModel,
    cbf: &CbfCandidate,
    nu: usize,
    piece: Option<[f64; 2]>,
    backend: &dyn SdpBackend,
    opts: &SynthOptions,
) -> (LevelReport, Option<SynthesisLevel>) {
    let start = Instant::now();
    let cbf = match piece {
        Some([lo, hi]) => match restrict_interval(cbf, lo, hi) {
            Ok(c) => c,
            Err(e) => return (LevelReport::failed(nu, piece, e.to_string(), 0.0), None),
        },
        None => cbf.clone(),
    };
    match synthesize_level(model, &cbf, nu, backend, opts) {
        Ok(l) => {
            info!(
                "ν={nu} {piece:?}: max V_ν = {:.6e} at {:?} ({:.1}s){}",
                l.max.value,
                l.max.maximizers,
                l.seconds,
                if l.bound.tainted { " [tainted]" } else { "" }
            );
            (LevelReport::from_level(&l, piece), Some(l))
        }
        Err(e) => {
            warn!("ν={nu} {piece:?}: {e}");
            (LevelReport::failed(nu, piece, e.to_string(), start.elapsed().as_secs_f64()), None)
        }
    }
}

/// Runs the ν ladder, optionally on each piece of a partition of a scalar
/// parameter. Failed or tainted levels are recorded and the ladder goes on.
pub fn run_synthesis(cfg: &JobConfig) -> Result<ResultBundle, RunError> {
    run_synthesis_levels(cfg).map(|(b, _)| b)
}

/// As [`run_synthesis`], also returning the levels in report order.
pub fn run_synthesis_levels(cfg: &JobConfig) -> Result<(ResultBundle, Vec<Option<SynthesisLevel>>), RunError> {
    let start = Instant::now();
    let p = cfg.build()?;
    let pieces: Vec<Option<[f64; 2]>> = match &cfg.synth.partition {
        Some(bp) => {
            if p.cbf.k() != 1 {
                return Err(ConfigError::Invalid {
                    field: "synth.partition".into(),
                    msg: "refinement needs a scalar parameter".into(),
                }
                .into());
            }
            bp.windows(2).map(|w| Some([w[0], w[1]])).collect()
        }
        None => vec![None],
    };
    let backend = cfg.backend();
    let mut out = ResultBundle::new(Job::Synth, cfg, backend.as_ref());
    let opts = synth_options(cfg);
    let jobs: Vec<(usize, Option<[f64; 2]>)> = pieces
        .iter()
        .flat_map(|pc| cfg.synth.nus.iter().map(move |&nu| (nu, *pc)))
        .collect();
    let b = backend.as_ref();
    let levels: Vec<(LevelReport, Option<SynthesisLevel>)> = worker_pool().install(|| {
        jobs.par_iter()
            .map(|&(nu, pc)| run_level(&p.model, &p.cbf, nu, pc, b, &opts))
            .collect()
    });
    let kept: Vec<Option<SynthesisLevel>> = levels.iter().map(|(_, l)| l.clone()).collect();
    let mut report = summarize(levels);
    let oracle_rays = if p.cbf.k() == 1 { cfg.verify.oracle_points } else { 0 };
    report.grid = worker_pool().install(|| {
        parameter_grid(&p.cbf, cfg.synth.grid_points)
            .into_par_iter()
            .map(|t| GridPoint {
                oracle: oracle_value(&p, &t, oracle_rays),
                theta: t,
            })
            .collect()
    });
    out.synthesis = Some(report);
    out.meta.wall_seconds = start.elapsed().as_secs_f64();
    Ok((out, kept))
}

fn summarize(levels: Vec<(LevelReport, Option<SynthesisLevel>)>) -> SynthesisReport {
    // the running best is taken over the unrefined ladder only
    let mut record = SynthesisRecord::default();
    for (r, l) in &levels {
        if let (None, Some(l)) = (r.piece, l) {
            if l.max.value.is_finite() {
                record.push(l.clone());
            }
        }
    }
    let (best_value, best_theta, best_nu) = match best_maximizer(&record) {
        Some((v, k)) => {
            let l = &record.levels[k];
            let arg = l
                .max
                .maximizers
                .iter()
                .zip(&l.max.values)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(t, _)| t.clone());
            (Some(v), arg, Some(l.nu))
        }
        None => (None, None, None),
    };
    SynthesisReport {
        levels: levels.into_iter().map(|(r, _)| r).collect(),
        best_value,
        best_theta,
        best_nu,
        grid: vec![],
    }
}

/// Synthesizes V_ν, then optimizes the metric over {θ : V_ν(θ) ≥ 0}.
pub fn run_selection(cfg: &JobConfig) -> Result<ResultBundle, RunError> {
    run_selection_with(cfg, None)
}

/// Selection reusing an already synthesized level of order `select.nu`.
pub fn run_selection_with(cfg: &JobConfig, level: Option<&SynthesisLevel>) -> Result<ResultBundle, RunError> {
    let start = Instant::now();
    let p = cfg.build()?;
    let sel = &cfg.select;
    let ps = VariableSpace::new(&[(PARAM, p.cbf.k())]).map_err(RunError::Solver)?;
    let metric = Polynomial::parse(&ps, &sel.metric).map_err(|e| ConfigError::Invalid {
        field: "select.metric".into(),
        msg: e.to_string(),
    })?;
    let backend = cfg.backend();
    let mut out = ResultBundle::new(Job::Select, cfg, backend.as_ref());
    let lstart = Instant::now();
    let level = match level {
        Some(l) if l.nu == sel.nu => Ok(l.clone()),
        _ => synthesize_level(&p.model, &p.cbf, sel.nu, backend.as_ref(), &synth_options(cfg)),
    };
    let (report, selection, error) = match level {
        Ok(l) => {
            let rep = LevelReport::from_level(&l, None);
            match select_by_metric(&metric, &l.bound, &p.cbf.theta, sel.sense, sel.kappa, backend.as_ref(), &cfg.extract) {
                Ok(s) => {
                    info!("selected θ = {:?} with metric {:.6}", s.theta, s.metric);
                    (rep, Some(s), None)
                }
                Err(e) => (rep, None, Some(e.to_string())),
            }
        }
        Err(e) => (
            LevelReport::failed(sel.nu, None, e.to_string(), lstart.elapsed().as_secs_f64()),
            None,
            Some(e.to_string()),
        ),
    };
    out.selection = Some(SelectionReport {
        metric: sel.metric.clone(),
        sense: sel.sense,
        nu: sel.nu,
        kappa: sel.kappa,
        level: report,
        selection,
        error,
    });
    out.meta.wall_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}
