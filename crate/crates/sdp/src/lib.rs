//! Block-diagonal semidefinite programming: an embedded operator-splitting
//! solver, SDPA sparse-format I/O and a pluggable backend interface.

pub mod admm;
mod anderson;
pub mod backend;
pub mod error;
pub mod presolve;
pub mod problem;
pub mod random;
pub mod sdpa;
pub mod solution;

pub use admm::{AdmmSolver, SolverSettings};
pub use backend::{EmbeddedBackend, ExternalBackend, SdpBackend};
pub use error::{Result, SdpError};
pub use problem::{BlockKind, Constraint, Entry, SdpProblem, SymMatrix};
pub use sdpa::{parse_sdpa, write_sdpa};
pub use solution::{Residuals, SdpSolution, Status};

/// Solves with the embedded solver.
pub fn sdp_solve(p: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution> {
    AdmmSolver::new(settings.clone()).solve(p)
}
