//! Reference problems built on the reversed Van der Pol oscillator
//! ẋ1 = x2, ẋ2 = 0.5(1 − x2²)x2 − x1 + x1·u with |u| ≤ 5.

use crate::error::Result;
use crate::model::{CbfCandidate, ControlSet, ParameterSet, SystemModel, ThetaKind};
use crate::polyalg::Polynomial;

pub const U_MAX: f64 = 5.0;
pub const M_EPS: f64 = 0.1;

/// Dynamics; with `uncertain`, adds J = [0; 1] and M_ε = 0.1.
pub fn vanderpol(uncertain: bool) -> Result<SystemModel> {
    let space = SystemModel::state_space(2);
    let p = |s: &str| Polynomial::parse(&space, s);
    let f = vec![p("x2")?, p("0.5*(1 - x2^2)*x2 - x1")?];
    let g = vec![vec![p("0")?], vec![p("x1")?]];
    let (j, m_eps) = if uncertain {
        (Some(vec![vec![p("0")?], vec![p("1")?]]), M_EPS)
    } else {
        (None, 0.0)
    };
    SystemModel::new(f, g, j, m_eps, ControlSet::box_set(&[U_MAX])?)
}

/// b = θ − ‖x‖² with θ ∈ [0, 2].
pub fn circular_cbf() -> Result<CbfCandidate> {
    CbfCandidate::parse(2, "t - x1^2 - x2^2", ParameterSet::new(ThetaKind::Interval { lo: 0.0, hi: 2.0 })?)
}

/// b = 1 − xᵀAx, A = [[θ1, θ3], [θ3, θ2]], θ1, θ2 ∈ [0.25, 0.75],
/// θ3² ≤ 0.36 θ1θ2.
pub fn elliptical_cbf() -> Result<CbfCandidate> {
    CbfCandidate::parse(
        2,
        "1 - t1*x1^2 - 2*t3*x1*x2 - t2*x2^2",
        ParameterSet::new(ThetaKind::EllipseCoupled {
            lo: 0.25,
            hi: 0.75,
            xi: 0.6,
        })?,
    )
}
