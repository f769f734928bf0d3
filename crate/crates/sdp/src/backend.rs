//! Routing of SDP solves to the embedded solver or to an external process.

use std::path::PathBuf;
use std::process::Command;

use serde::Deserialize;

use crate::admm::{AdmmSolver, SolverSettings};
use crate::error::{Result, SdpError};
use crate::problem::{BlockKind, SdpProblem, SymMatrix};
use crate::sdpa::write_sdpa;
use crate::solution::{Residuals, SdpSolution, Status};

pub trait SdpBackend: Send + Sync {
    fn name(&self) -> String;
    fn solve(&self, p: &SdpProblem) -> Result<SdpSolution>;
}

#[derive(Clone, Debug, Default)]
pub struct EmbeddedBackend {
    pub settings: SolverSettings,
}

impl EmbeddedBackend {
    pub fn new(settings: SolverSettings) -> Self {
        EmbeddedBackend { settings }
    }
}

impl SdpBackend for EmbeddedBackend {
    fn name(&self) -> String {
        "embedded-admm".into()
    }

    fn solve(&self, p: &SdpProblem) -> Result<SdpSolution> {
        AdmmSolver::new(self.settings.clone()).solve(p)
    }
}

/// Runs `program args... <input.dat-s> <output.json>`.
///
/// The program must write a JSON object with `status`, `y` (one multiplier
/// per constraint) and `x` (one entry per block: a row-major nested array for
/// PSD blocks, a flat array for diagonal blocks).
#[derive(Clone, Debug)]
pub struct ExternalBackend {
    pub program: PathBuf,
    pub args: Vec<String>,
}

#[derive(Deserialize)]
struct ExternalOutput {
    status: String,
    y: Vec<f64>,
    x: Vec<serde_json::Value>,
    #[serde(default)]
    iterations: usize,
}

fn parse_block(kind: BlockKind, v: &serde_json::Value) -> Result<SymMatrix> {
    let bad = || SdpError::External("malformed block in solver output".into());
    let n = kind.dim();
    let mut m = SymMatrix::zeros(n);
    let arr = v.as_array().ok_or_else(bad)?;
    if arr.len() != n {
        return Err(bad());
    }
    match kind {
        BlockKind::Diagonal(_) => {
            for (i, x) in arr.iter().enumerate() {
                m.set(i, i, x.as_f64().ok_or_else(bad)?);
            }
        }
        BlockKind::Psd(_) => {
            for (i, row) in arr.iter().enumerate() {
                let row = row.as_array().ok_or_else(bad)?;
                if row.len() != n {
                    return Err(bad());
                }
                for (j, x) in row.iter().enumerate() {
                    m.data[i * n + j] = x.as_f64().ok_or_else(bad)?;
                }
            }
            let sym = SymMatrix::from_faer(m.to_faer().as_ref());
            m = sym;
        }
    }
    Ok(m)
}

impl SdpBackend for ExternalBackend {
    fn name(&self) -> String {
        format!("external:{}", self.program.display())
    }

    fn solve(&self, p: &SdpProblem) -> Result<SdpSolution> {
        p.validate()?;
        let dir = tempfile::tempdir()?;
        let input = dir.path().join("problem.dat-s");
        let output = dir.path().join("solution.json");
        std::fs::write(&input, write_sdpa(p))?;
        let res = Command::new(&self.program)
            .args(&self.args)
            .arg(&input)
            .arg(&output)
            .output()
            .map_err(|e| SdpError::External(format!("spawning {}: {e}", self.program.display())))?;
        if !res.status.success() {
            return Err(SdpError::External(format!(
                "{} exited with {}: {}",
                self.program.display(),
                res.status,
                String::from_utf8_lossy(&res.stderr).trim()
            )));
        }
        let text = std::fs::read_to_string(&output)?;
        let out: ExternalOutput = serde_json::from_str(&text)
            .map_err(|e| SdpError::External(format!("reading solver output: {e}")))?;
        let status = match out.status.as_str() {
            "optimal" => Status::Optimal,
            "infeasible" => Status::Infeasible,
            "unbounded" => Status::Unbounded,
            _ => Status::MaxIters,
        };
        if out.y.len() != p.constraints.len() || out.x.len() != p.blocks.len() {
            return Err(SdpError::External("solver output has wrong dimensions".into()));
        }
        let x = p
            .blocks
            .iter()
            .zip(&out.x)
            .map(|(k, v)| parse_block(*k, v))
            .collect::<Result<Vec<_>>>()?;
        let s = p.dual_slack(&out.y);
        let pobj = p.objective_value(&x);
        let dobj = p.dual_objective(&out.y);
        Ok(SdpSolution {
            status,
            residuals: Residuals {
                primal: p.primal_infeasibility(&x),
                dual: 0.0,
                gap: (pobj - dobj).abs() / (1.0 + pobj.abs()),
            },
            x,
            y: out.y,
            s,
            primal_objective: pobj,
            dual_objective: dobj,
            iterations: out.iterations,
        })
    }
}
