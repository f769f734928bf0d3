use std::time::Instant;

use rcbf_sdp::{Residuals, SdpBackend, Status};
use serde::{Deserialize, Serialize};

use super::build::build_moment_sdp;
use super::extract::{check_flatness_extract, extract_on, ExtractOptions};
use crate::error::Result;
use crate::model::{inner_solution_with, lie_derivatives, variable_bounds, BoundSet, CbfCandidate, SystemModel, STATE};
use crate::popbuild::{build_verification_pop, PopOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub kappa: usize,
    /// ρ ≥ −tol_verify counts as verified.
    pub tol_verify: f64,
    /// Constraint violation allowed for an extracted witness.
    pub feas_tol: f64,
    pub extract: ExtractOptions,
    pub pop: PopOptions,
    /// Extract on the state marginal when the joint moments are not flat.
    pub marginal_fallback: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            kappa: 4,
            tol_verify: 1e-6,
            feas_tol: 1e-6,
            extract: ExtractOptions::default(),
            pop: PopOptions::default(),
            marginal_fallback: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Verified,
    Refuted,
    Inconclusive,
}

impl VerdictStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictStatus::Verified => "verified",
            VerdictStatus::Refuted => "refuted",
            VerdictStatus::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    Joint,
    StateMarginal,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub theta: Vec<f64>,
    pub kappa: usize,
    /// Relaxation value, a lower bound on V(θ).
    pub rho: f64,
    pub dual_value: f64,
    pub status: VerdictStatus,
    pub rank: Option<usize>,
    pub ranks: Vec<usize>,
    pub extraction: ExtractionMode,
    /// Minimizers over the POP variables, completed and checked.
    pub minimizers: Vec<Vec<f64>>,
    /// POP objective at each minimizer.
    pub values: Vec<f64>,
    /// Largest constraint violation at each minimizer.
    pub violations: Vec<f64>,
    pub sdp_status: Status,
    pub residuals: Residuals,
    pub moment_min_eig: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub diagnostic: Option<String>,
}

impl VerificationVerdict {
    /// State parts of the minimizers.
    pub fn states(&self, n: usize) -> Vec<Vec<f64>> {
        self.minimizers.iter().map(|y| y[..n].to_vec()).collect()
    }
}

/// Newton steps moving x onto b(x, θ) = 0 along ∇ₓb.
fn polish_onto_boundary(cbf: &CbfCandidate, x: &[f64], theta: &[f64]) -> Vec<f64> {
    let n = x.len();
    let grad: Vec<_> = (0..n).map(|i| cbf.b.differentiate(i)).collect();
    let mut pt = x.to_vec();
    pt.extend_from_slice(theta);
    for _ in 0..50 {
        let r = cbf.b.eval_dense(&pt);
        if r.abs() < 1e-14 {
            break;
        }
        let g: Vec<f64> = grad.iter().map(|p| p.eval_dense(&pt)).collect();
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if gg < 1e-300 {
            break;
        }
        for i in 0..n {
            pt[i] -= r * g[i] / gg;
        }
    }
    pt.truncate(n);
    pt
}

pub fn verify(
    model: &SystemModel,
    cbf: &CbfCandidate,
    theta: &[f64],
    backend: &dyn SdpBackend,
    opts: &VerifyOptions,
) -> Result<VerificationVerdict> {
    let bounds = variable_bounds(model, cbf, None)?;
    verify_with_bounds(model, cbf, &bounds, theta, backend, opts)
}

pub fn verify_with_bounds(
    model: &SystemModel,
    cbf: &CbfCandidate,
    bounds: &BoundSet,
    theta: &[f64],
    backend: &dyn SdpBackend,
    opts: &VerifyOptions,
) -> Result<VerificationVerdict> {
    let start = Instant::now();
    let pop = build_verification_pop(model, cbf, Some(theta), bounds, opts.pop)?;
    let msdp = build_moment_sdp(&pop, opts.kappa)?;
    let sol = backend.solve(&msdp.sdp)?;
    let mut verdict = VerificationVerdict {
        theta: theta.to_vec(),
        kappa: opts.kappa,
        rho: msdp.bound(&sol),
        dual_value: msdp.dual_bound(&sol),
        status: VerdictStatus::Inconclusive,
        rank: None,
        ranks: Vec::new(),
        extraction: ExtractionMode::Failed,
        minimizers: Vec::new(),
        values: Vec::new(),
        violations: Vec::new(),
        sdp_status: sol.status,
        residuals: sol.residuals,
        moment_min_eig: sol.x.first().map(|x| x.min_eigenvalue()).unwrap_or(0.0),
        iterations: sol.iterations,
        seconds: 0.0,
        diagnostic: None,
    };
    match sol.status {
        Status::Infeasible => {
            verdict.diagnostic = Some("relaxation infeasible: the boundary b(x, θ) = 0 may be empty".into());
            verdict.seconds = start.elapsed().as_secs_f64();
            return Ok(verdict);
        }
        Status::Unbounded => {
            verdict.diagnostic = Some("relaxation unbounded: missing bounds on the POP variables".into());
            verdict.seconds = start.elapsed().as_secs_f64();
            return Ok(verdict);
        }
        Status::MaxIters => {
            verdict.diagnostic = Some("solver hit its iteration limit; try a higher limit".into());
        }
        Status::Optimal => {}
    }

    let n = model.n();
    let joint = check_flatness_extract(&sol, &msdp, &opts.extract)?;
    verdict.ranks = joint.ranks.clone();
    let mut states: Vec<Vec<f64>> = Vec::new();
    let mut raw: Vec<Vec<f64>> = Vec::new();
    if !joint.atoms.is_empty() {
        verdict.extraction = ExtractionMode::Joint;
        verdict.rank = joint.rank;
        states = joint.atoms.iter().map(|a| a[..n].to_vec()).collect();
        raw = joint.atoms;
    } else if opts.marginal_fallback {
        let xs: Vec<usize> = pop.space.block_range(STATE).expect("state block").collect();
        let marg = extract_on(&sol, &msdp, &xs, 1, &opts.extract)?;
        if !marg.atoms.is_empty() {
            verdict.extraction = ExtractionMode::StateMarginal;
            verdict.rank = marg.rank;
            verdict.ranks = marg.ranks;
            states = marg.atoms;
        } else if verdict.diagnostic.is_none() {
            verdict.diagnostic = marg.diagnostic.or(joint.diagnostic);
        }
    } else if verdict.diagnostic.is_none() {
        verdict.diagnostic = joint.diagnostic;
    }

    let lie = lie_derivatives(model, cbf)?;
    for (k, x) in states.iter().enumerate() {
        let x = polish_onto_boundary(cbf, x, theta);
        let y = match inner_solution_with(model, &lie, &x, theta) {
            Ok(s) => {
                let mut y = x.clone();
                y.extend(s.z);
                y.extend(s.u);
                y.extend(s.zeta);
                y
            }
            Err(_) if k < raw.len() => raw[k].clone(),
            Err(_) => continue,
        };
        verdict.values.push(pop.objective.eval_dense(&y));
        verdict.violations.push(pop.violation(&y));
        verdict.minimizers.push(y);
    }

    verdict.status = if verdict.rho >= -opts.tol_verify {
        VerdictStatus::Verified
    } else if verdict
        .values
        .iter()
        .zip(&verdict.violations)
        .any(|(v, e)| *v < -opts.tol_verify && *e <= opts.feas_tol)
    {
        VerdictStatus::Refuted
    } else {
        if verdict.diagnostic.is_none() {
            verdict.diagnostic = Some(format!("no feasible witness extracted; try κ = {}", opts.kappa + 1));
        }
        VerdictStatus::Inconclusive
    };
    verdict.seconds = start.elapsed().as_secs_f64();
    Ok(verdict)
}
