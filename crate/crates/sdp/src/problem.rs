//! Block-diagonal SDP data in standard primal form:
//! minimize ⟨C, X⟩ subject to ⟨A_j, X⟩ = b_j, X ⪰ 0.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdpError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Dense symmetric block constrained to the PSD cone.
    Psd(usize),
    /// Diagonal block, i.e. a nonnegative vector.
    Diagonal(usize),
}

impl BlockKind {
    pub fn dim(&self) -> usize {
        match *self {
            BlockKind::Psd(n) | BlockKind::Diagonal(n) => n,
        }
    }

    /// Size with the SDPA sign convention (negative for diagonal blocks).
    pub fn signed_size(&self) -> i64 {
        match *self {
            BlockKind::Psd(n) => n as i64,
            BlockKind::Diagonal(n) => -(n as i64),
        }
    }

    pub fn from_signed(size: i64) -> Self {
        if size < 0 {
            BlockKind::Diagonal(size.unsigned_abs() as usize)
        } else {
            BlockKind::Psd(size as usize)
        }
    }

    /// Number of free scalar cells (upper triangle for PSD blocks).
    pub fn cells(&self) -> usize {
        match *self {
            BlockKind::Psd(n) => n * (n + 1) / 2,
            BlockKind::Diagonal(n) => n,
        }
    }
}

/// One upper-triangle entry (`row <= col`) of a symmetric block-diagonal matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(block: usize, row: usize, col: usize, value: f64) -> Self {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        Entry {
            block,
            row,
            col,
            value,
        }
    }

    /// Weight of this entry in a trace inner product with a symmetric matrix.
    pub fn multiplicity(&self) -> f64 {
        if self.row == self.col {
            1.0
        } else {
            2.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub entries: Vec<Entry>,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<BlockKind>,
    pub objective: Vec<Entry>,
    pub constraints: Vec<Constraint>,
    /// Optional a priori bound on the magnitude of the primal entries.
    pub bound_hint: Option<f64>,
}

/// Dense symmetric matrix stored row-major in full.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn to_faer(&self) -> faer::Mat<f64> {
        faer::Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn from_faer(m: faer::MatRef<'_, f64>) -> Self {
        let n = m.nrows();
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] = 0.5 * (m[(i, j)] + m[(j, i)]);
            }
        }
        out
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.n == 0 {
            return Vec::new();
        }
        let m = self.to_faer();
        match m.self_adjoint_eigenvalues(faer::Side::Lower) {
            Ok(v) => v,
            Err(_) => vec![f64::NAN; self.n],
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }
}

impl SdpProblem {
    pub fn new(blocks: Vec<BlockKind>) -> Self {
        SdpProblem {
            blocks,
            objective: Vec::new(),
            constraints: Vec::new(),
            bound_hint: None,
        }
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_constraint(&mut self, entries: Vec<Entry>, rhs: f64) -> usize {
        self.constraints.push(Constraint { entries, rhs });
        self.constraints.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.constraints.is_empty() {
            return Err(SdpError::Structure("problem has no constraints".into()));
        }
        let check = |e: &Entry, what: &str| -> Result<()> {
            let kind = self.blocks.get(e.block).ok_or_else(|| {
                SdpError::Structure(format!("{what}: block {} out of range", e.block))
            })?;
            let n = kind.dim();
            if e.row > e.col || e.col >= n {
                return Err(SdpError::Structure(format!(
                    "{what}: entry ({}, {}) invalid for block {} of size {n}",
                    e.row, e.col, e.block
                )));
            }
            if matches!(kind, BlockKind::Diagonal(_)) && e.row != e.col {
                return Err(SdpError::Structure(format!(
                    "{what}: off-diagonal entry in diagonal block {}",
                    e.block
                )));
            }
            if !e.value.is_finite() {
                return Err(SdpError::Structure(format!("{what}: non-finite value")));
            }
            Ok(())
        };
        for e in &self.objective {
            check(e, "objective")?;
        }
        for (j, c) in self.constraints.iter().enumerate() {
            for e in &c.entries {
                check(e, &format!("constraint {j}"))?;
            }
            if !c.rhs.is_finite() {
                return Err(SdpError::Structure(format!("constraint {j}: non-finite rhs")));
            }
        }
        Ok(())
    }

    /// ⟨M, X⟩ for a sparse symmetric M given by its upper triangle.
    pub fn inner(entries: &[Entry], x: &[SymMatrix]) -> f64 {
        entries
            .iter()
            .map(|e| e.multiplicity() * e.value * x[e.block].get(e.row, e.col))
            .sum()
    }

    pub fn objective_value(&self, x: &[SymMatrix]) -> f64 {
        Self::inner(&self.objective, x)
    }

    /// max_j |⟨A_j, X⟩ − b_j|
    pub fn primal_infeasibility(&self, x: &[SymMatrix]) -> f64 {
        self.constraints
            .iter()
            .map(|c| (Self::inner(&c.entries, x) - c.rhs).abs())
            .fold(0.0, f64::max)
    }

    /// C − Σ_j y_j A_j as dense blocks.
    pub fn dual_slack(&self, y: &[f64]) -> Vec<SymMatrix> {
        let mut s: Vec<SymMatrix> = self.blocks.iter().map(|b| SymMatrix::zeros(b.dim())).collect();
        let mut add = |e: &Entry, w: f64| {
            let m = &mut s[e.block];
            let v = m.get(e.row, e.col) + w * e.value;
            m.set(e.row, e.col, v);
        };
        for e in &self.objective {
            add(e, 1.0);
        }
        for (c, &yj) in self.constraints.iter().zip(y) {
            if yj != 0.0 {
                for e in &c.entries {
                    add(e, -yj);
                }
            }
        }
        s
    }

    pub fn dual_objective(&self, y: &[f64]) -> f64 {
        self.constraints.iter().zip(y).map(|(c, yj)| c.rhs * yj).sum()
    }
}
