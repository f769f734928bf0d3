use serde::{Deserialize, Serialize};

use crate::problem::SymMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    /// The primal problem has no feasible point.
    Infeasible,
    /// The primal objective is unbounded below.
    Unbounded,
    MaxIters,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::MaxIters => "max-iters",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// max_j |⟨A_j, X⟩ − b_j|
    pub primal: f64,
    /// max entry of |C − Σ y_j A_j − S|
    pub dual: f64,
    /// |⟨C, X⟩ − bᵀy| / (1 + |⟨C, X⟩|)
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: Status,
    pub x: Vec<SymMatrix>,
    pub y: Vec<f64>,
    pub s: Vec<SymMatrix>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl SdpSolution {
    /// Smallest eigenvalue over all primal blocks.
    pub fn min_primal_eigenvalue(&self) -> f64 {
        self.x
            .iter()
            .map(|b| b.min_eigenvalue())
            .fold(f64::INFINITY, f64::min)
    }
}
