//! Operator-splitting iteration on the presolved problem.
//!
//! After presolve the primal is `min cᵀv  s.t.  Ev = b,  X(v) ⪰ 0` where
//! `X(v)` places `factor·v[class]` into every cell. Writing the constraints as
//! `Av + b0 ∈ K` with `K = {0}^p × PSD blocks`, each iteration solves one
//! least-squares problem with the fixed matrix `H = AᵀDA`, where `D` weighs
//! blocks by the Frobenius metric and equality rows by `zero_row_weight`.
//! `H` does not depend on the penalty `ρ`, so it is factored once and `ρ` can
//! adapt freely.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use log::debug;
use serde::{Deserialize, Serialize};

use crate::anderson::Anderson;
use crate::error::{Result, SdpError};
use crate::presolve::{presolve, Reduced};
use crate::problem::{BlockKind, SdpProblem, SymMatrix};
use crate::solution::{Residuals, SdpSolution, Status};

/// Consecutive certificate checks required before declaring infeasibility.
const CERTIFICATE_PERSISTENCE: usize = 5;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
/// Penalty is rebalanced when primal/dual residual ratio leaves [1/5, 5].
const RHO_ADAPT_RATIO: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iters: usize,
    /// Row and objective equilibration.
    pub scaling: bool,
    pub rho: f64,
    pub relaxation: f64,
    pub zero_row_weight: f64,
    pub check_every: usize,
    pub adapt_every: usize,
    pub eps_infeasible: f64,
    /// Anderson acceleration memory; 0 disables it.
    pub anderson_memory: usize,
    /// An extrapolated step is kept only if it does not grow the fixed-point
    /// residual by more than this factor.
    pub anderson_safeguard: f64,
    /// Wall-clock budget in seconds; exhausting it reports `max-iters`.
    pub time_limit: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            max_iters: 200_000,
            scaling: true,
            rho: 0.1,
            relaxation: 1.6,
            zero_row_weight: 1.0,
            check_every: 10,
            adapt_every: 50,
            eps_infeasible: 1e-7,
            anderson_memory: 10,
            anderson_safeguard: 1.0,
            time_limit: None,
        }
    }
}

impl SolverSettings {
    /// Applies `RCBF_SDP_MAXITERS` when set to a valid integer.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(v) = std::env::var("RCBF_SDP_MAXITERS") {
            match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => self.max_iters = n,
                _ => log::warn!("ignoring invalid RCBF_SDP_MAXITERS={v:?}"),
            }
        }
        self
    }
}

struct PsdBlock {
    n: usize,
    offset: usize,
}

struct Workspace<'a> {
    red: &'a Reduced,
    psd: Vec<PsdBlock>,
    diag_cells: Vec<usize>,
    mult: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    row_scale: Vec<f64>,
    c: Vec<f64>,
    c_scale: f64,
    beta: f64,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

#[derive(Clone)]
struct Iterate {
    v: Vec<f64>,
    w: Vec<f64>,
    u: Vec<f64>,
    uz: Vec<f64>,
    rho: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Measures {
    r_pri: f64,
    r_dual: f64,
    gap: f64,
    eps_pri: f64,
    eps_dual: f64,
    eps_gap: f64,
    scale_pri: f64,
    scale_dual: f64,
    pobj: f64,
    dobj: f64,
}

impl Measures {
    fn merit(&self) -> f64 {
        (self.r_pri / self.eps_pri)
            .max(self.r_dual / self.eps_dual)
            .max(self.gap / self.eps_gap)
    }

    fn converged(&self) -> bool {
        self.r_pri <= self.eps_pri && self.r_dual <= self.eps_dual && self.gap <= self.eps_gap
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl<'a> Workspace<'a> {
    fn new(p: &SdpProblem, red: &'a Reduced, s: &SolverSettings) -> Result<Self> {
        let layout = &red.layout;
        let mut psd = Vec::new();
        let mut diag_cells = Vec::new();
        for (b, kind) in p.blocks.iter().enumerate() {
            match *kind {
                BlockKind::Psd(n) => psd.push(PsdBlock {
                    n,
                    offset: layout.offsets[b],
                }),
                BlockKind::Diagonal(n) => diag_cells.extend(layout.offsets[b]..layout.offsets[b] + n),
            }
        }
        let mult: Vec<f64> = (0..layout.ncells).map(|c| layout.multiplicity(c)).collect();

        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(red.rows.len());
        let mut b = Vec::with_capacity(red.rows.len());
        let mut row_scale = Vec::with_capacity(red.rows.len());
        for r in &red.rows {
            let norm = if s.scaling {
                r.coeffs.iter().map(|(_, a)| a * a).sum::<f64>().sqrt()
            } else {
                1.0
            };
            rows.push(r.coeffs.iter().map(|&(k, a)| (k, a / norm)).collect());
            b.push(r.rhs / norm);
            row_scale.push(norm);
        }
        let c_scale = if s.scaling { inf_norm(&red.c).max(1e-12) } else { 1.0 };
        let c: Vec<f64> = red.c.iter().map(|x| x / c_scale).collect();
        let beta = s.zero_row_weight;

        let nv = red.nvars;
        let mut diag = vec![0.0; nv];
        for cell in 0..layout.ncells {
            let f = red.factor[cell];
            diag[red.class[cell]] += mult[cell] * f * f;
        }
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        for (k, d) in diag.iter().enumerate() {
            trip.push((k, k, *d));
        }
        for row in &rows {
            for &(i, ai) in row.iter() {
                for &(j, aj) in row.iter() {
                    if i >= j {
                        trip.push((i, j, beta * ai * aj));
                    }
                }
            }
        }
        trip.sort_by(|x, y| (x.1, x.0).cmp(&(y.1, y.0)));
        let mut merged: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(trip.len());
        for (i, j, v) in trip {
            match merged.last_mut() {
                Some(t) if t.row == i && t.col == j => t.val += v,
                _ => merged.push(Triplet::new(i, j, v)),
            }
        }
        let h = SparseColMat::<usize, f64>::try_new_from_triplets(nv, nv, &merged)
            .map_err(|e| SdpError::Numeric(format!("assembling normal matrix: {e:?}")))?;
        let llt = h
            .sp_cholesky(Side::Lower)
            .map_err(|e| SdpError::Numeric(format!("factoring normal matrix: {e:?}")))?;

        Ok(Workspace {
            red,
            psd,
            diag_cells,
            mult,
            rows,
            b,
            row_scale,
            c,
            c_scale,
            beta,
            llt,
        })
    }

    fn ncells(&self) -> usize {
        self.red.layout.ncells
    }

    /// X(v) cellwise.
    fn cells_of(&self, v: &[f64], out: &mut [f64]) {
        for (cell, o) in out.iter_mut().enumerate() {
            *o = self.red.factor[cell] * v[self.red.class[cell]];
        }
    }

    /// Adds Σ_cells mult·factor·W into `out` (adjoint of `cells_of`).
    fn add_cells_adjoint(&self, wcells: &[f64], scale: f64, out: &mut [f64]) {
        for (cell, &wv) in wcells.iter().enumerate() {
            out[self.red.class[cell]] += scale * self.mult[cell] * self.red.factor[cell] * wv;
        }
    }

    fn add_rows_adjoint(&self, z: &[f64], scale: f64, out: &mut [f64]) {
        for (row, &zj) in self.rows.iter().zip(z) {
            if zj != 0.0 {
                for &(k, a) in row {
                    out[k] += scale * a * zj;
                }
            }
        }
    }

    fn row_values(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(k, a)| a * v[k]).sum();
        }
    }

    fn unpack(&self, blk: &PsdBlock, cells: &[f64]) -> Mat<f64> {
        let n = blk.n;
        let mut m = Mat::<f64>::zeros(n, n);
        let mut idx = blk.offset;
        for j in 0..n {
            for i in 0..=j {
                m[(i, j)] = cells[idx];
                m[(j, i)] = cells[idx];
                idx += 1;
            }
        }
        m
    }

    /// Projects the cone part of `cells` onto the product of PSD and
    /// nonnegative cones in place.
    fn project(&self, cells: &mut [f64]) {
        for &c in &self.diag_cells {
            cells[c] = cells[c].max(0.0);
        }
        for blk in &self.psd {
            if blk.n == 1 {
                cells[blk.offset] = cells[blk.offset].max(0.0);
                continue;
            }
            let m = self.unpack(blk, cells);
            let p = project_psd(&m);
            let mut idx = blk.offset;
            for j in 0..blk.n {
                for i in 0..=j {
                    cells[idx] = 0.5 * (p[(i, j)] + p[(j, i)]);
                    idx += 1;
                }
            }
        }
    }

    fn min_eig_cells(&self, cells: &[f64]) -> f64 {
        let mut lo = f64::INFINITY;
        for &c in &self.diag_cells {
            lo = lo.min(cells[c]);
        }
        for blk in &self.psd {
            let m = self.unpack(blk, cells);
            if let Ok(ev) = m.self_adjoint_eigenvalues(Side::Lower) {
                if let Some(&e) = ev.first() {
                    lo = lo.min(e);
                }
            }
        }
        lo
    }

    fn measures(&self, it: &Iterate, xcells: &[f64], rowv: &[f64], s: &SolverSettings) -> Measures {
        let rho = it.rho;
        let mut r_pri = 0.0f64;
        let mut scale_pri = 0.0f64;
        for ((rv, bj), sj) in rowv.iter().zip(&self.b).zip(&self.row_scale) {
            r_pri = r_pri.max(sj * (rv - bj).abs());
            scale_pri = scale_pri.max(sj * rv.abs()).max(sj * bj.abs());
        }
        for (x, w) in xcells.iter().zip(&it.w) {
            r_pri = r_pri.max((x - w).abs());
            scale_pri = scale_pri.max(x.abs()).max(w.abs());
        }

        let nv = self.red.nvars;
        let mut aty_cells = vec![0.0; nv];
        self.add_cells_adjoint(&it.u, -rho, &mut aty_cells);
        let mut aty_rows = vec![0.0; nv];
        self.add_rows_adjoint(&it.uz, -rho * self.beta, &mut aty_rows);
        let mut r_dual = 0.0f64;
        for k in 0..nv {
            r_dual = r_dual.max((self.c[k] - aty_cells[k] - aty_rows[k]).abs());
        }
        let scale_dual = inf_norm(&self.c)
            .max(inf_norm(&aty_cells))
            .max(inf_norm(&aty_rows));

        let pobj: f64 = self.c.iter().zip(&it.v).map(|(c, v)| c * v).sum::<f64>() * self.c_scale;
        let dobj: f64 = self
            .b
            .iter()
            .zip(&it.uz)
            .map(|(b, u)| -rho * self.beta * b * u)
            .sum::<f64>()
            * self.c_scale;

        Measures {
            r_pri,
            r_dual: r_dual * self.c_scale,
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs()),
            eps_pri: s.eps_abs + s.eps_rel * scale_pri,
            eps_dual: s.eps_abs + s.eps_rel * scale_dual * self.c_scale,
            eps_gap: s.eps_rel.max(1e-15),
            scale_pri,
            scale_dual: scale_dual * self.c_scale,
            pobj,
            dobj,
        }
    }
}

fn project_psd(m: &Mat<f64>) -> Mat<f64> {
    let n = m.nrows();
    let evd = match m.self_adjoint_eigen(Side::Lower) {
        Ok(e) => e,
        Err(_) => return Mat::zeros(n, n),
    };
    let s = evd.S().column_vector();
    let u = evd.U();
    let npos = (0..n).filter(|&i| s[i] > 0.0).count();
    if npos == 0 {
        return Mat::zeros(n, n);
    }
    if npos == n {
        return m.clone();
    }
    if npos <= n - npos {
        let mut vp = Mat::<f64>::zeros(n, npos);
        let mut col = 0;
        for k in 0..n {
            if s[k] > 0.0 {
                let r = s[k].sqrt();
                for i in 0..n {
                    vp[(i, col)] = u[(i, k)] * r;
                }
                col += 1;
            }
        }
        &vp * vp.transpose()
    } else {
        let nneg = n - npos;
        let mut vn = Mat::<f64>::zeros(n, nneg);
        let mut col = 0;
        for k in 0..n {
            if s[k] <= 0.0 {
                let r = (-s[k]).sqrt();
                for i in 0..n {
                    vn[(i, col)] = u[(i, k)] * r;
                }
                col += 1;
            }
        }
        m + &vn * vn.transpose()
    }
}

/// Embedded first-order SDP solver.
#[derive(Clone, Debug, Default)]
pub struct AdmmSolver {
    pub settings: SolverSettings,
}

impl AdmmSolver {
    pub fn new(settings: SolverSettings) -> Self {
        AdmmSolver { settings }
    }

    pub fn solve(&self, p: &SdpProblem) -> Result<SdpSolution> {
        p.validate()?;
        let s = &self.settings;
        let red = presolve(p);
        debug!(
            "presolve: {} cells -> {} unknowns, {} rows -> {} rows ({} merged)",
            red.layout.ncells,
            red.nvars,
            p.constraints.len(),
            red.rows.len(),
            red.merges.len()
        );
        if let Some(j) = red.inconsistent {
            debug!("constraint {j} reduces to 0 = b with b != 0");
            return Ok(trivial_solution(p, &red, Status::Infeasible));
        }
        let ws = Workspace::new(p, &red, s)?;
        let nv = red.nvars;
        let nc = ws.ncells();
        let nr = ws.rows.len();

        let mut it = Iterate {
            v: vec![0.0; nv],
            w: vec![0.0; nc],
            u: vec![0.0; nc],
            uz: vec![0.0; nr],
            rho: s.rho,
        };
        // fixed-point state: pre-projection cells followed by row multipliers
        let mut state = vec![0.0; nc + nr];
        let mut weights = ws.mult.clone();
        weights.extend(std::iter::repeat_n(ws.beta, nr));
        let mut aa = Anderson::new(nc + nr, s.anderson_memory, weights, s.anderson_safeguard);
        let mut best: Option<(f64, Iterate)> = None;
        let mut xcells = vec![0.0; nc];
        let mut rowv = vec![0.0; nr];
        let mut what = vec![0.0; nc];
        let mut rhs = Mat::<f64>::zeros(nv, 1);
        let mut prev: Option<Iterate> = None;
        let mut pinf_streak = 0;
        let mut dinf_streak = 0;
        let alpha = s.relaxation;
        let start = Instant::now();
        let mut status = Status::MaxIters;
        let mut iters = 0;
        let mut adapt_gap = s.adapt_every.max(1);
        let mut next_adapt = adapt_gap;

        loop {
            // projection of the current state
            it.w.copy_from_slice(&state[..nc]);
            ws.project(&mut it.w);
            for cell in 0..nc {
                it.u[cell] = state[cell] - it.w[cell];
            }
            it.uz.copy_from_slice(&state[nc..]);

            let checking = iters > 0 && (iters % s.check_every.max(1) == 0 || iters == s.max_iters);
            if checking {
                let m = ws.measures(&it, &xcells, &rowv, s);
                let merit = m.merit();
                if best.as_ref().is_none_or(|(b, _)| merit < *b) {
                    best = Some((merit, it.clone()));
                }
                if iters % 1000 == 0 {
                    debug!(
                        "iter {iters}: pri {:.2e} dual {:.2e} gap {:.2e} pobj {:.8} dobj {:.8} rho {:.2e} aa {}/{}",
                        m.r_pri, m.r_dual, m.gap, m.pobj, m.dobj, it.rho, aa.accepted, aa.rejected
                    );
                }
                if m.converged() {
                    status = Status::Optimal;
                    break;
                }
                if let Some(pv) = prev.as_ref() {
                    let (pinf, dinf) = certificates(&ws, pv, &it, s.eps_infeasible);
                    pinf_streak = if pinf { pinf_streak + 1 } else { 0 };
                    dinf_streak = if dinf { dinf_streak + 1 } else { 0 };
                    if pinf_streak >= CERTIFICATE_PERSISTENCE {
                        status = Status::Infeasible;
                        break;
                    }
                    if dinf_streak >= CERTIFICATE_PERSISTENCE {
                        status = Status::Unbounded;
                        break;
                    }
                }
                prev = Some(it.clone());

                if s.adapt_every > 0 && iters >= next_adapt {
                    next_adapt = iters + adapt_gap;
                    let rp = m.r_pri / m.scale_pri.max(1e-12);
                    let rd = m.r_dual / m.scale_dual.max(1e-12);
                    if rp > 0.0 && rd > 0.0 {
                        let ratio = (rp / rd).sqrt();
                        let new_rho = (it.rho * ratio).clamp(RHO_MIN, RHO_MAX);
                        if !(1.0 / RHO_ADAPT_RATIO..=RHO_ADAPT_RATIO).contains(&ratio) && new_rho != it.rho {
                            let f = it.rho / new_rho;
                            it.u.iter_mut().for_each(|x| *x *= f);
                            it.uz.iter_mut().for_each(|x| *x *= f);
                            it.rho = new_rho;
                            // back off so rho does not thrash between two regimes
                            adapt_gap = (adapt_gap * 2).min(s.adapt_every * 64);
                            aa.reset();
                            prev = None;
                        }
                    }
                }
                if let Some(limit) = s.time_limit {
                    if start.elapsed().as_secs_f64() > limit {
                        break;
                    }
                }
            }
            if iters >= s.max_iters {
                break;
            }
            iters += 1;

            // least-squares step
            let mut r = vec![0.0; nv];
            for cell in 0..nc {
                what[cell] = it.w[cell] - it.u[cell];
            }
            ws.add_cells_adjoint(&what, 1.0, &mut r);
            let zt: Vec<f64> = ws.b.iter().zip(&it.uz).map(|(b, u)| b - u).collect();
            ws.add_rows_adjoint(&zt, ws.beta, &mut r);
            for k in 0..nv {
                rhs[(k, 0)] = r[k] - ws.c[k] / it.rho;
            }
            ws.llt.solve_in_place(rhs.as_mut());
            for k in 0..nv {
                it.v[k] = rhs[(k, 0)];
            }
            ws.cells_of(&it.v, &mut xcells);
            ws.row_values(&it.v, &mut rowv);

            // relaxed step; the next projection happens at the top of the loop
            let mut f = vec![0.0; nc + nr];
            for cell in 0..nc {
                f[cell] = alpha * xcells[cell] + (1.0 - alpha) * it.w[cell] + it.u[cell];
            }
            for j in 0..nr {
                f[nc + j] = it.uz[j] + alpha * (rowv[j] - ws.b[j]);
            }
            let cur: Vec<f64> = it.w.iter().zip(&it.u).map(|(w, u)| w + u).chain(it.uz.iter().copied()).collect();
            state = aa.next(&cur, f);
        }

        if status == Status::MaxIters {
            if let Some((_, b)) = best {
                it = b;
            }
        }
        debug!("finished with {status} after {iters} iterations");
        Ok(finish(p, &ws, &it, status, iters))
    }
}

/// Normalized certificate tests on successive iterate differences.
fn certificates(ws: &Workspace, prev: &Iterate, cur: &Iterate, eps: f64) -> (bool, bool) {
    let nv = ws.red.nvars;
    // dual direction: dy = -rho·D·du
    let dcell: Vec<f64> = cur
        .u
        .iter()
        .zip(&prev.u)
        .map(|(a, b)| -(cur.rho * a - prev.rho * b))
        .collect();
    let dz: Vec<f64> = cur
        .uz
        .iter()
        .zip(&prev.uz)
        .map(|(a, b)| -ws.beta * (cur.rho * a - prev.rho * b))
        .collect();
    let ny = inf_norm(&dcell).max(inf_norm(&dz));
    let mut pinf = false;
    if ny > 1e-10 {
        let mut aty = vec![0.0; nv];
        ws.add_cells_adjoint(&dcell, 1.0, &mut aty);
        ws.add_rows_adjoint(&dz, 1.0, &mut aty);
        let by: f64 = ws.b.iter().zip(&dz).map(|(b, y)| b * y).sum();
        // certificate: Aᵀy = 0, y ∈ K*, bᵀy > 0, normalized by the
        // objective gain so slowly drifting multipliers do not qualify
        if by > eps * ny && inf_norm(&aty) <= eps * by {
            pinf = ws.min_eig_cells(&dcell) >= -eps.sqrt() * by;
        }
    }

    let dv: Vec<f64> = cur.v.iter().zip(&prev.v).map(|(a, b)| a - b).collect();
    let nvn = inf_norm(&dv);
    let mut dinf = false;
    if nvn > 1e-10 {
        let cdv: f64 = ws.c.iter().zip(&dv).map(|(c, v)| c * v).sum();
        if cdv < -eps * nvn {
            let mut rv = vec![0.0; ws.rows.len()];
            ws.row_values(&dv, &mut rv);
            if inf_norm(&rv) <= eps * nvn {
                let mut cells = vec![0.0; ws.ncells()];
                ws.cells_of(&dv, &mut cells);
                dinf = ws.min_eig_cells(&cells) >= -eps * nvn;
            }
        }
    }
    (pinf, dinf)
}

fn blocks_from_cells(p: &SdpProblem, red: &Reduced, cells: &[f64]) -> Vec<SymMatrix> {
    let mut out: Vec<SymMatrix> = p.blocks.iter().map(|b| SymMatrix::zeros(b.dim())).collect();
    for (cell, &(b, i, j)) in red.layout.coords.iter().enumerate() {
        out[b].set(i, j, cells[cell]);
    }
    out
}

fn trivial_solution(p: &SdpProblem, red: &Reduced, status: Status) -> SdpSolution {
    let zeros = vec![0.0; red.layout.ncells];
    let x = blocks_from_cells(p, red, &zeros);
    SdpSolution {
        status,
        s: x.clone(),
        x,
        y: vec![0.0; p.constraints.len()],
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        residuals: Residuals {
            primal: f64::INFINITY,
            dual: f64::INFINITY,
            gap: f64::INFINITY,
        },
        iterations: 0,
    }
}

fn finish(p: &SdpProblem, ws: &Workspace, it: &Iterate, status: Status, iters: usize) -> SdpSolution {
    let red = ws.red;
    let nc = ws.ncells();
    let mut xcells = vec![0.0; nc];
    ws.cells_of(&it.v, &mut xcells);
    let x = blocks_from_cells(p, red, &xcells);

    let scells: Vec<f64> = it.u.iter().map(|u| -it.rho * u * ws.c_scale).collect();
    let s_blocks = blocks_from_cells(p, red, &scells);

    let mut y = vec![0.0; p.constraints.len()];
    for (j, r) in red.rows.iter().enumerate() {
        y[r.orig] = -it.rho * ws.beta * it.uz[j] * ws.c_scale / ws.row_scale[j];
    }
    // weighted cell residual of C − S − Σ_{surviving} y_j A_j, then peel merges
    let mut resid = vec![0.0; nc];
    let cell = |e: &crate::problem::Entry| red.layout.cell(&p.blocks, e.block, e.row, e.col);
    for e in &p.objective {
        resid[cell(e)] += e.multiplicity() * e.value;
    }
    for k in 0..nc {
        resid[k] -= ws.mult[k] * scells[k];
    }
    for r in &red.rows {
        let yj = y[r.orig];
        if yj != 0.0 {
            for e in &p.constraints[r.orig].entries {
                resid[cell(e)] -= yj * e.multiplicity() * e.value;
            }
        }
    }
    red.recover_merge_duals(&mut resid, &mut y);

    let slack_check = p.dual_slack(&y);
    let mut dual_res = 0.0f64;
    for (sc, sb) in slack_check.iter().zip(&s_blocks) {
        for (a, b) in sc.data.iter().zip(&sb.data) {
            dual_res = dual_res.max((a - b).abs());
        }
    }
    let pobj = p.objective_value(&x);
    let dobj = p.dual_objective(&y);
    let (pobj, dobj) = match status {
        Status::Infeasible => (f64::INFINITY, dobj),
        Status::Unbounded => (f64::NEG_INFINITY, dobj),
        _ => (pobj, dobj),
    };
    SdpSolution {
        status,
        residuals: Residuals {
            primal: p.primal_infeasibility(&x),
            dual: dual_res,
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs()),
        },
        x,
        y,
        s: s_blocks,
        primal_objective: pobj,
        dual_objective: dobj,
        iterations: iters,
    }
}
