//! Polynomial lower bounds V_ν(θ) ≤ V(θ) over the parameter set, their
//! maximization, and metric-driven parameter selection.

use std::sync::Arc;
use std::time::Instant;

use rcbf_sdp::{SdpBackend, SdpProblem, SdpSolution, Status};
use serde::{Deserialize, Serialize};

use crate::error::{structure, CoreError, Result};
use crate::model::{variable_bounds, CbfCandidate, ParameterSet, SystemModel, ThetaKind, PARAM};
use crate::momentrelax::{build_moment_sdp, build_moment_sdp_with, check_flatness_extract, ExtractOptions, MomentSdp};
use crate::polyalg::{Monomial, Polynomial, VariableSpace};
use crate::popbuild::{build_verification_pop, PopMode, PopOptions, StandardPop};

/// Probability measure on Θ, described through its moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaMeasure {
    Interval { lo: f64, hi: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    EllipseCoupled { lo: f64, hi: f64, xi: f64 },
    /// Explicit moments keyed by exponent vector.
    Table { dim: usize, moments: Vec<(Vec<u8>, f64)> },
}

impl ThetaMeasure {
    /// Uniform measure on the parameter set.
    pub fn uniform(ps: &ParameterSet) -> Result<Self> {
        match &ps.kind {
            ThetaKind::Interval { lo, hi } => Ok(ThetaMeasure::Interval { lo: *lo, hi: *hi }),
            ThetaKind::Box { lo, hi } => Ok(ThetaMeasure::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            }),
            ThetaKind::EllipseCoupled { lo, hi, xi } => Ok(ThetaMeasure::EllipseCoupled {
                lo: *lo,
                hi: *hi,
                xi: *xi,
            }),
            ThetaKind::General { .. } => Err(CoreError::Unsupported(
                "no closed-form moments for a general parameter set; supply a moment table".into(),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ThetaMeasure::Interval { .. } => 1,
            ThetaMeasure::Box { lo, .. } => lo.len(),
            ThetaMeasure::EllipseCoupled { .. } => 3,
            ThetaMeasure::Table { dim, .. } => *dim,
        }
    }
}

fn interval_moment(lo: f64, hi: f64, b: u8) -> f64 {
    let e = b as i32 + 1;
    (hi.powi(e) - lo.powi(e)) / (e as f64 * (hi - lo))
}

/// ∫_lo^hi θ^(p−1) dθ for real p > 0.
fn power_integral(lo: f64, hi: f64, p: f64) -> f64 {
    (hi.powf(p) - lo.powf(p)) / p
}

fn ellipse_unnormalized(lo: f64, hi: f64, xi: f64, b: &[u8]) -> f64 {
    let b3 = b[2] as f64;
    if b[2] % 2 == 1 {
        return 0.0;
    }
    let half = (b3 + 1.0) / 2.0;
    2.0 * xi.powf(b3 + 1.0) / (b3 + 1.0)
        * power_integral(lo, hi, b[0] as f64 + 1.0 + half)
        * power_integral(lo, hi, b[1] as f64 + 1.0 + half)
}

/// γ_β = ∫ θ^β dμ.
pub fn theta_moments(m: &ThetaMeasure, beta: &[u8]) -> Result<f64> {
    if beta.len() != m.dim() {
        return structure(format!("multi-index has {} entries, measure has dimension {}", beta.len(), m.dim()));
    }
    match m {
        ThetaMeasure::Interval { lo, hi } => Ok(interval_moment(*lo, *hi, beta[0])),
        ThetaMeasure::Box { lo, hi } => Ok((0..lo.len()).map(|i| interval_moment(lo[i], hi[i], beta[i])).product()),
        ThetaMeasure::EllipseCoupled { lo, hi, xi } => {
            Ok(ellipse_unnormalized(*lo, *hi, *xi, beta) / ellipse_unnormalized(*lo, *hi, *xi, &[0, 0, 0]))
        }
        ThetaMeasure::Table { moments, .. } => moments
            .iter()
            .find(|(b, _)| b.as_slice() == beta)
            .map(|(_, v)| *v)
            .ok_or_else(|| CoreError::Structure(format!("moment table lacks {beta:?}"))),
    }
}

/// V_ν(θ) = Σ λ_β θ^β with the bookkeeping of how it was obtained.
#[derive(Clone, Debug)]
pub struct LowerBoundPoly {
    pub nu: usize,
    /// Polynomial over the parameter space `[t]`.
    pub poly: Polynomial,
    /// ∫ V_ν dμ, the SOS objective.
    pub integral: f64,
    pub status: Status,
    /// Largest solver residual.
    pub residual: f64,
    /// Set when the residuals exceed the acceptance threshold.
    pub tainted: bool,
}

impl LowerBoundPoly {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.poly.eval_dense(theta)
    }

    /// Coefficients as (exponents, value) in graded order.
    pub fn coefficients(&self) -> Vec<(Vec<u8>, f64)> {
        self.poly.terms().map(|(m, c)| (m.exponents().to_vec(), c)).collect()
    }
}

/// Links the SOS program to the moment rows whose multipliers are λ.
#[derive(Clone, Debug)]
pub struct LowerBoundRecovery {
    pub msdp: MomentSdp,
    pub betas: Vec<Monomial>,
    pub gammas: Vec<f64>,
    pub param_space: Arc<VariableSpace>,
    pub nu: usize,
}

/// Parameter monomials up to degree 2ν, embedded in the POP space.
fn theta_monomials(pop: &StandardPop, two_nu: usize) -> Result<(Vec<Monomial>, Vec<Vec<u8>>)> {
    let r = pop
        .space
        .block_range(PARAM)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| CoreError::Structure("POP has no parameter block".into()))?;
    let n = pop.nvars();
    let vars: Vec<usize> = r.clone().collect();
    let mut ms = Monomial::all_up_to_in(n, &vars, two_nu);
    ms.sort();
    let local = ms.iter().map(|m| r.clone().map(|i| m.exp(i)).collect()).collect();
    Ok((ms, local))
}

/// The SOS program for the best lower bound of degree 2ν, posed as its
/// dual moment problem: min L(ϕ) subject to L(θ^β) = γ_β for |β| ≤ 2ν and
/// the localizing conditions. The multipliers of the γ rows are λ.
pub fn build_lower_bound_sos(pop: &StandardPop, nu: usize, measure: &ThetaMeasure) -> Result<(SdpProblem, LowerBoundRecovery)> {
    if pop.mode != PopMode::Symbolic {
        return structure("lower-bound synthesis needs a POP with symbolic θ");
    }
    let (betas, local) = theta_monomials(pop, 2 * nu)?;
    if local.first().map(|b| b.len()) != Some(measure.dim()) {
        return structure("measure dimension does not match the parameter block");
    }
    let gammas = local.iter().map(|b| theta_moments(measure, b)).collect::<Result<Vec<_>>>()?;
    let fixed: Vec<(Monomial, f64)> = betas.iter().cloned().zip(gammas.iter().copied()).collect();
    let msdp = build_moment_sdp_with(pop, nu, &fixed)?;
    let param_space = VariableSpace::new(&[(PARAM, measure.dim())])?;
    Ok((
        msdp.sdp.clone(),
        LowerBoundRecovery {
            msdp,
            betas,
            gammas,
            param_space,
            nu,
        },
    ))
}

/// Residual threshold above which a recovered bound is marked tainted.
pub const TAINT_RESIDUAL: f64 = 1e-4;

pub fn recover_lower_bound(sol: &SdpSolution, map: &LowerBoundRecovery) -> LowerBoundPoly {
    let r = map.msdp.pop.space.block_range(PARAM).expect("parameter block");
    let terms: Vec<(Monomial, f64)> = map
        .betas
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let local: Vec<u8> = r.clone().map(|i| m.exp(i)).collect();
            (Monomial::from_exponents(&local), map.msdp.fixed_multiplier(sol, k, m))
        })
        .collect();
    let poly = Polynomial::from_terms(&map.param_space, terms);
    let integral = map
        .betas
        .iter()
        .enumerate()
        .map(|(k, m)| map.msdp.fixed_multiplier(sol, k, m) * map.gammas[k])
        .sum();
    let residual = sol.residuals.max();
    LowerBoundPoly {
        nu: map.nu,
        poly,
        integral,
        status: sol.status,
        residual,
        tainted: !(sol.status == Status::Optimal || residual <= TAINT_RESIDUAL),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Maximization {
    pub value: f64,
    pub maximizers: Vec<Vec<f64>>,
    /// V_ν at each maximizer.
    pub values: Vec<f64>,
    pub rank: Option<usize>,
    pub flagged: bool,
    pub diagnostic: Option<String>,
}

fn param_pop(ps: &ParameterSet, objective: &Polynomial, extra: Vec<Polynomial>) -> Result<StandardPop> {
    let sp = VariableSpace::new(&[(PARAM, ps.dim())])?;
    let mut ineqs = ps.constraints(&sp)?;
    ineqs.extend(extra);
    let mut pop = StandardPop::new(&sp, objective.embed(&sp)?, vec![], ineqs)?;
    let (lo, hi) = ps.bounds();
    pop.scale = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| match a.abs().max(b.abs()) {
            s if s > 1e-8 => s,
            _ => 1.0,
        })
        .collect();
    Ok(pop)
}

fn solve_param_pop(pop: &StandardPop, kappa: usize, backend: &dyn SdpBackend, extract: &ExtractOptions) -> Result<(f64, Vec<Vec<f64>>, Option<usize>, Option<String>, Status)> {
    let msdp = build_moment_sdp(pop, kappa)?;
    let sol = backend.solve(&msdp.sdp)?;
    if matches!(sol.status, Status::Infeasible | Status::Unbounded) {
        return Ok((f64::NAN, vec![], None, Some(format!("relaxation {}", sol.status)), sol.status));
    }
    let ex = check_flatness_extract(&sol, &msdp, extract)?;
    Ok((msdp.bound(&sol), ex.atoms, ex.rank, ex.diagnostic, sol.status))
}

/// max_θ V_ν(θ) over Θ via an order-κ moment relaxation.
pub fn maximize_lower_bound(
    v: &LowerBoundPoly,
    theta: &ParameterSet,
    kappa: usize,
    backend: &dyn SdpBackend,
    extract: &ExtractOptions,
) -> Result<Maximization> {
    let pop = param_pop(theta, &-&v.poly, vec![])?;
    let (rho, atoms, rank, diag, status) = solve_param_pop(&pop, kappa, backend, extract)?;
    let values: Vec<f64> = atoms.iter().map(|a| v.eval(a)).collect();
    let flagged = atoms.is_empty() || status != Status::Optimal;
    Ok(Maximization {
        value: -rho,
        maximizers: atoms,
        values,
        rank,
        flagged,
        diagnostic: diag,
    })
}

/// One level of the synthesis ladder.
#[derive(Clone, Debug)]
pub struct SynthesisLevel {
    pub nu: usize,
    pub bound: LowerBoundPoly,
    pub max: Maximization,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SynthesisRecord {
    pub levels: Vec<SynthesisLevel>,
}

impl SynthesisRecord {
    pub fn push(&mut self, level: SynthesisLevel) {
        self.levels.push(level);
    }

    /// Ṽ(θ) = max over recorded levels of V_l(θ).
    pub fn pointwise(&self, theta: &[f64]) -> f64 {
        self.levels.iter().map(|l| l.bound.eval(theta)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Running best value and the index of the level attaining it.
pub fn best_maximizer(rec: &SynthesisRecord) -> Option<(f64, usize)> {
    rec.levels
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(f64, usize)>, (i, l)| match acc {
            Some((v, _)) if v >= l.max.value => acc,
            _ => Some((l.max.value, i)),
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    /// Order for maximizing V_ν; `None` uses ν + 2.
    pub max_kappa: Option<usize>,
    pub extract: ExtractOptions,
    pub pop: PopOptions,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            max_kappa: None,
            extract: ExtractOptions::default(),
            pop: PopOptions::default(),
        }
    }
}

/// Builds, solves and maximizes V_ν for one ν with the uniform measure on
/// the candidate's parameter set.
pub fn synthesize_level(
    model: &SystemModel,
    cbf: &CbfCandidate,
    nu: usize,
    backend: &dyn SdpBackend,
    opts: &SynthOptions,
) -> Result<SynthesisLevel> {
    let start = Instant::now();
    let bounds = variable_bounds(model, cbf, None)?;
    let pop = build_verification_pop(model, cbf, None, &bounds, opts.pop)?;
    let measure = ThetaMeasure::uniform(&cbf.theta)?;
    let (sdp, map) = build_lower_bound_sos(&pop, nu, &measure)?;
    let sol = backend.solve(&sdp)?;
    if matches!(sol.status, Status::Infeasible | Status::Unbounded) {
        return Err(CoreError::Numeric(format!("lower-bound program {}", sol.status)));
    }
    let bound = recover_lower_bound(&sol, &map);
    let kappa = opts.max_kappa.unwrap_or(nu + 2);
    let max = maximize_lower_bound(&bound, &cbf.theta, kappa, backend, &opts.extract)?;
    Ok(SynthesisLevel {
        nu,
        bound,
        max,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Same candidate restricted to a sub-interval of a scalar parameter.
pub fn restrict_interval(cbf: &CbfCandidate, lo: f64, hi: f64) -> Result<CbfCandidate> {
    if cbf.k() != 1 {
        return structure("interval refinement needs a scalar parameter");
    }
    let theta = ParameterSet::new(ThetaKind::Interval { lo, hi })?.with_encoding(cbf.theta.encoding);
    Ok(CbfCandidate {
        theta,
        ..cbf.clone()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub theta: Vec<f64>,
    pub metric: f64,
    /// V_ν at the selected parameter.
    pub lower_bound: f64,
    pub candidates: Vec<Vec<f64>>,
    pub relaxation_value: f64,
}

/// Optimizes Ψ(θ) over {θ ∈ Θ : V_ν(θ) ≥ 0}.
pub fn select_by_metric(
    metric: &Polynomial,
    v: &LowerBoundPoly,
    theta: &ParameterSet,
    sense: Sense,
    kappa: usize,
    backend: &dyn SdpBackend,
    extract: &ExtractOptions,
) -> Result<Selection> {
    let sp = VariableSpace::new(&[(PARAM, theta.dim())])?;
    let psi = metric.embed(&sp)?;
    let obj = match sense {
        Sense::Min => psi.clone(),
        Sense::Max => -&psi,
    };
    let pop = param_pop(theta, &obj, vec![v.poly.embed(&sp)?])?;
    let kappa = kappa.max(pop.max_degree().div_ceil(2));
    let (rho, atoms, _, diag, status) = solve_param_pop(&pop, kappa, backend, extract)?;
    if status == Status::Infeasible {
        return Err(CoreError::Numeric(
            "no parameter with a nonnegative lower bound is certified (relaxation infeasible)".into(),
        ));
    }
    let ok = |a: &Vec<f64>| v.eval(a) >= -1e-6 && theta.contains(a, 1e-8);
    let pick = atoms
        .iter()
        .filter(|a| ok(a))
        .min_by(|a, b| obj.eval_dense(a).total_cmp(&obj.eval_dense(b)))
        .cloned();
    let chosen = match pick {
        Some(t) => t,
        None => {
            return Err(CoreError::Numeric(format!(
                "selection produced no parameter with V_ν ≥ −1e−6 inside Θ ({})",
                diag.unwrap_or_else(|| format!("{} candidates", atoms.len()))
            )))
        }
    };
    let relaxation_value = match sense {
        Sense::Min => rho,
        Sense::Max => -rho,
    };
    Ok(Selection {
        metric: psi.eval_dense(&chosen),
        lower_bound: v.eval(&chosen),
        theta: chosen,
        candidates: atoms,
        relaxation_value,
    })
}

/// Grid of V_ν values for plotting, one row per θ.
pub fn grid_values(levels: &[&LowerBoundPoly], grid: &[Vec<f64>]) -> Vec<Vec<f64>> {
    grid.iter().map(|t| levels.iter().map(|l| l.eval(t)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rcbf_sdp::{EmbeddedBackend, SolverSettings};

    fn backend() -> EmbeddedBackend {
        EmbeddedBackend::new(SolverSettings::default())
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn interval_moments() {
        let m = ThetaMeasure::Interval { lo: 0.0, hi: 2.0 };
        assert_eq!(theta_moments(&m, &[0]).unwrap(), 1.0);
        assert_eq!(theta_moments(&m, &[3]).unwrap(), 2.0);
        let m = ThetaMeasure::Interval { lo: 0.3, hi: 1.7 };
        for b in 0..=10u8 {
            let q = simpson(|t| t.powi(b as i32), 0.3, 1.7, 20_000) / 1.4;
            let g = theta_moments(&m, &[b]).unwrap();
            assert!((g - q).abs() <= 1e-12 * q.abs().max(1.0), "β={b}: {g} vs {q}");
        }
    }

    #[test]
    fn ellipse_moments() {
        let m = ThetaMeasure::EllipseCoupled { lo: 0.25, hi: 0.75, xi: 0.6 };
        assert!((theta_moments(&m, &[0, 0, 0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(theta_moments(&m, &[2, 1, 1]).unwrap(), 0.0);
        assert_eq!(theta_moments(&m, &[0, 0, 3]).unwrap(), 0.0);
        // symmetric in θ1 ↔ θ2
        let a = theta_moments(&m, &[2, 1, 2]).unwrap();
        let b = theta_moments(&m, &[1, 2, 2]).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(theta_moments(&m, &[1, 0]).is_err());
    }

    #[test]
    fn table_moments() {
        let m = ThetaMeasure::Table {
            dim: 1,
            moments: vec![(vec![0], 1.0), (vec![1], 0.5)],
        };
        assert_eq!(theta_moments(&m, &[1]).unwrap(), 0.5);
        assert!(theta_moments(&m, &[2]).is_err());
    }

    #[test]
    fn toy_family_lower_bound() {
        // min_y (y − θ)² over y² ≤ 1 is 0 for every θ ∈ [−1, 1]
        let sp = VariableSpace::new(&[("y", 1), (PARAM, 1)]).unwrap();
        let p = |s: &str| Polynomial::parse(&sp, s).unwrap();
        let mut pop = StandardPop::new(&sp, p("(y - t)^2"), vec![], vec![p("1 - y^2"), p("1 + t"), p("1 - t")]).unwrap();
        pop.mode = PopMode::Symbolic;
        let ps = ParameterSet::new(ThetaKind::Interval { lo: -1.0, hi: 1.0 }).unwrap();
        let (sdp, map) = build_lower_bound_sos(&pop, 1, &ThetaMeasure::uniform(&ps).unwrap()).unwrap();
        let sol = backend().solve(&sdp).unwrap();
        let v = recover_lower_bound(&sol, &map);
        assert!(!v.tainted);
        assert!(v.integral.abs() < 1e-5, "{}", v.integral);
        for k in 0..=20 {
            let t = -1.0 + 0.1 * k as f64;
            assert!(v.eval(&[t]) <= 1e-5);
        }
        let mx = maximize_lower_bound(&v, &ps, 3, &backend(), &ExtractOptions::default()).unwrap();
        assert!(mx.value.abs() < 1e-4);
    }

    #[test]
    fn zero_polynomial_bound() {
        let sp = VariableSpace::new(&[(PARAM, 1)]).unwrap();
        let v = LowerBoundPoly {
            nu: 1,
            poly: Polynomial::zero(&sp),
            integral: 0.0,
            status: Status::Optimal,
            residual: 0.0,
            tainted: false,
        };
        assert!(v.coefficients().is_empty());
        assert_eq!(v.eval(&[0.4]), 0.0);
    }

    #[test]
    fn parabola_maximum() {
        let sp = VariableSpace::new(&[(PARAM, 1)]).unwrap();
        let v = LowerBoundPoly {
            nu: 1,
            poly: Polynomial::parse(&sp, "-(t - 1)^2").unwrap(),
            integral: 0.0,
            status: Status::Optimal,
            residual: 0.0,
            tainted: false,
        };
        let ps = ParameterSet::new(ThetaKind::Interval { lo: 0.0, hi: 2.0 }).unwrap();
        let mx = maximize_lower_bound(&v, &ps, 3, &backend(), &ExtractOptions::default()).unwrap();
        assert!(mx.value.abs() < 1e-6);
        assert_eq!(mx.maximizers.len(), 1);
        assert!((mx.maximizers[0][0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn constant_metric_selection() {
        let sp = VariableSpace::new(&[(PARAM, 1)]).unwrap();
        let v = LowerBoundPoly {
            nu: 1,
            poly: Polynomial::parse(&sp, "(t - 0.5)*(1.5 - t)").unwrap(),
            integral: 0.0,
            status: Status::Optimal,
            residual: 0.0,
            tainted: false,
        };
        let ps = ParameterSet::new(ThetaKind::Interval { lo: 0.0, hi: 2.0 }).unwrap();
        let lin = Polynomial::parse(&sp, "t").unwrap();
        let s = select_by_metric(&lin, &v, &ps, Sense::Max, 2, &backend(), &ExtractOptions::default()).unwrap();
        assert!((s.theta[0] - 1.5).abs() < 1e-4);
        assert!(s.lower_bound >= -1e-6);
    }

    fn level(value: f64, poly: &str) -> SynthesisLevel {
        let sp = VariableSpace::new(&[(PARAM, 1)]).unwrap();
        SynthesisLevel {
            nu: 0,
            bound: LowerBoundPoly {
                nu: 0,
                poly: Polynomial::parse(&sp, poly).unwrap(),
                integral: 0.0,
                status: Status::Optimal,
                residual: 0.0,
                tainted: false,
            },
            max: Maximization {
                value,
                maximizers: vec![],
                values: vec![],
                rank: None,
                flagged: false,
                diagnostic: None,
            },
            seconds: 0.0,
        }
    }

    #[test]
    fn running_best() {
        let mut rec = SynthesisRecord::default();
        assert_eq!(best_maximizer(&rec), None);
        rec.push(level(-0.1, "t - 1"));
        assert_eq!(best_maximizer(&rec), Some((-0.1, 0)));
        rec.push(level(0.02, "-t"));
        rec.push(level(0.015, "0.1*t^2 - 0.5"));
        assert_eq!(best_maximizer(&rec), Some((0.02, 1)));
        for k in 0..100 {
            let t = -2.0 + 0.04 * k as f64;
            let m = rec.pointwise(&[t]);
            assert!(rec.levels.iter().all(|l| m >= l.bound.eval(&[t])));
        }
    }
}
