//! Sparse multivariate polynomials over named variable blocks.

mod monomial;
mod parse;
mod poly;
mod space;

pub use monomial::Monomial;
pub use poly::{Polynomial, DROP_TOL};
pub use space::{Block, VariableSpace};
