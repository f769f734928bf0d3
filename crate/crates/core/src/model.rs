//! Dynamics, control sets, CBF candidates and the quantities derived from
//! them: Lie derivatives, bounds on the auxiliary variables, and the
//! closed-form inner value used as an oracle.

use std::sync::Arc;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{structure, CoreError, Result};
use crate::polyalg::{Polynomial, VariableSpace};

pub const STATE: &str = "x";
pub const LIFT: &str = "z";
pub const CONTROL: &str = "u";
pub const DUAL: &str = "zeta";
pub const PARAM: &str = "t";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlKind {
    /// |u_i| ≤ w_i, encoded as u_i² − w_i² ≤ 0.
    Box { half_widths: Vec<f64> },
    /// uᵀWu ≤ 1.
    Ellipsoid { w: Vec<Vec<f64>> },
    /// w_iᵀu ≤ d_i.
    Polytope {
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        vertices: Option<Vec<Vec<f64>>>,
    },
    General,
}

/// Control constraints c_i(u) ≤ 0 over the space `[u]`.
#[derive(Clone, Debug)]
pub struct ControlSet {
    pub kind: ControlKind,
    pub space: Arc<VariableSpace>,
    pub constraints: Vec<Polynomial>,
}

fn sym_eigs(w: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = w.len();
    if w.iter().any(|r| r.len() != n) {
        return structure("matrix is not square");
    }
    let m = Mat::from_fn(n, n, |i, j| 0.5 * (w[i][j] + w[j][i]));
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| CoreError::Numeric(format!("eigenvalues: {e:?}")))
}

fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let m = Mat::from_fn(n, n, |i, j| a[i][j]);
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let lu = m.partial_piv_lu();
    use faer::linalg::solvers::Solve;
    let x = lu.solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::Numeric("singular linear system".into()));
    }
    Ok(out)
}

impl ControlSet {
    fn control_space(m: usize) -> Arc<VariableSpace> {
        VariableSpace::new(&[(CONTROL, m)]).expect("valid control space")
    }

    pub fn box_set(half_widths: &[f64]) -> Result<Self> {
        if half_widths.is_empty() || half_widths.iter().any(|w| !(*w > 0.0)) {
            return structure("box half-widths must be positive");
        }
        let space = Self::control_space(half_widths.len());
        let constraints = half_widths
            .iter()
            .enumerate()
            .map(|(i, w)| Polynomial::var(&space, i).pow(2).add_constant(-w * w))
            .collect();
        Ok(ControlSet {
            kind: ControlKind::Box {
                half_widths: half_widths.to_vec(),
            },
            space,
            constraints,
        })
    }

    pub fn ellipsoid(w: Vec<Vec<f64>>) -> Result<Self> {
        let eig = sym_eigs(&w)?;
        if eig.is_empty() || eig[0] <= 0.0 {
            return structure("ellipsoid matrix must be positive definite");
        }
        let m = w.len();
        let space = Self::control_space(m);
        let mut c = Polynomial::constant(&space, -1.0);
        for i in 0..m {
            for j in 0..m {
                let coef = 0.5 * (w[i][j] + w[j][i]);
                c = &c + &(&(&Polynomial::var(&space, i) * &Polynomial::var(&space, j)) * coef);
            }
        }
        Ok(ControlSet {
            kind: ControlKind::Ellipsoid { w },
            space,
            constraints: vec![c],
        })
    }

    pub fn polytope(normals: Vec<Vec<f64>>, offsets: Vec<f64>, vertices: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if normals.is_empty() || normals.len() != offsets.len() {
            return structure("polytope needs one offset per normal");
        }
        let m = normals[0].len();
        if m == 0 || normals.iter().any(|w| w.len() != m) {
            return structure("polytope normals must share a positive dimension");
        }
        // Slater point: vertex centroid when available, otherwise the origin
        let u0 = match &vertices {
            Some(vs) if !vs.is_empty() => {
                let mut c = vec![0.0; m];
                for v in vs {
                    if v.len() != m {
                        return structure("vertex dimension mismatch");
                    }
                    for (ci, vi) in c.iter_mut().zip(v) {
                        *ci += vi / vs.len() as f64;
                    }
                }
                c
            }
            _ => vec![0.0; m],
        };
        for (w, d) in normals.iter().zip(&offsets) {
            let s: f64 = w.iter().zip(&u0).map(|(a, b)| a * b).sum();
            if s >= *d {
                return structure("polytope has no strictly feasible reference point");
            }
        }
        let space = Self::control_space(m);
        let constraints = normals
            .iter()
            .zip(&offsets)
            .map(|(w, d)| {
                let mut c = Polynomial::constant(&space, -d);
                for (i, wi) in w.iter().enumerate() {
                    c = &c + &(&Polynomial::var(&space, i) * *wi);
                }
                c
            })
            .collect();
        Ok(ControlSet {
            kind: ControlKind::Polytope {
                normals,
                offsets,
                vertices,
            },
            space,
            constraints,
        })
    }

    pub fn general(m: usize, constraints: Vec<Polynomial>) -> Result<Self> {
        let space = Self::control_space(m);
        if constraints.is_empty() {
            return structure("general control set needs at least one constraint");
        }
        let constraints = constraints
            .iter()
            .map(|c| c.embed(&space))
            .collect::<Result<Vec<_>>>()?;
        Ok(ControlSet {
            kind: ControlKind::General,
            space,
            constraints,
        })
    }

    pub fn dim(&self) -> usize {
        self.space.nvars()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Radius of a ball containing the set.
    pub fn radius(&self) -> Result<f64> {
        match &self.kind {
            ControlKind::Box { half_widths } => Ok(half_widths.iter().map(|w| w * w).sum::<f64>().sqrt()),
            ControlKind::Ellipsoid { w } => Ok(1.0 / sym_eigs(w)?[0].sqrt()),
            ControlKind::Polytope {
                vertices: Some(vs), ..
            } => Ok(vs
                .iter()
                .map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt())
                .fold(0.0, f64::max)),
            _ => Err(CoreError::Unsupported(
                "control radius needs a box, an ellipsoid or a polytope with vertices".into(),
            )),
        }
    }

    /// max_{u ∈ U} l·u with a maximizer and its KKT multipliers.
    pub fn support(&self, l: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let m = self.dim();
        if l.len() != m {
            return structure("direction has the wrong dimension");
        }
        match &self.kind {
            ControlKind::Box { half_widths } => {
                let mut val = 0.0;
                let mut u = vec![0.0; m];
                let mut zeta = vec![0.0; m];
                for i in 0..m {
                    let w = half_widths[i];
                    val += w * l[i].abs();
                    if l[i] != 0.0 {
                        u[i] = w * l[i].signum();
                        zeta[i] = l[i].abs() / (2.0 * w);
                    }
                }
                Ok((val, u, zeta))
            }
            ControlKind::Ellipsoid { w } => {
                let winv_l = solve_dense(w, l)?;
                let q: f64 = l.iter().zip(&winv_l).map(|(a, b)| a * b).sum::<f64>().max(0.0);
                let s = q.sqrt();
                if s == 0.0 {
                    return Ok((0.0, vec![0.0; m], vec![0.0]));
                }
                let u = winv_l.iter().map(|v| v / s).collect();
                Ok((s, u, vec![s / 2.0]))
            }
            ControlKind::Polytope {
                normals,
                offsets,
                vertices,
            } => {
                let vs = vertices.as_ref().ok_or_else(|| {
                    CoreError::Unsupported("polytope support value needs a vertex list".into())
                })?;
                let mut best = (f64::NEG_INFINITY, Vec::new());
                for v in vs {
                    let s: f64 = v.iter().zip(l).map(|(a, b)| a * b).sum();
                    if s > best.0 {
                        best = (s, v.clone());
                    }
                }
                let u = best.1;
                let active: Vec<usize> = (0..normals.len())
                    .filter(|&i| {
                        let s: f64 = normals[i].iter().zip(&u).map(|(a, b)| a * b).sum();
                        (s - offsets[i]).abs() <= 1e-9 * (1.0 + offsets[i].abs())
                    })
                    .collect();
                let zeta = polytope_multipliers(normals, &active, l)?;
                Ok((best.0, u, zeta))
            }
            ControlKind::General => Err(CoreError::Unsupported(
                "closed-form control value needs a box, ellipsoid or polytope".into(),
            )),
        }
    }
}

/// Nonnegative ζ supported on `active` with Σ ζ_i w_i = l, by least squares
/// over the active normals.
fn polytope_multipliers(normals: &[Vec<f64>], active: &[usize], l: &[f64]) -> Result<Vec<f64>> {
    let mut zeta = vec![0.0; normals.len()];
    if l.iter().all(|v| *v == 0.0) {
        return Ok(zeta);
    }
    let k = active.len();
    if k == 0 {
        return Err(CoreError::Numeric("no active constraint at maximizing vertex".into()));
    }
    // normal equations (W_Aᵀ W_A) ζ_A = W_Aᵀ l
    let mut g = vec![vec![0.0; k]; k];
    let mut r = vec![0.0; k];
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            g[a][b] = normals[i].iter().zip(&normals[j]).map(|(p, q)| p * q).sum();
        }
        r[a] = normals[i].iter().zip(l).map(|(p, q)| p * q).sum();
    }
    let za = solve_dense(&g, &r)?;
    for (a, &i) in active.iter().enumerate() {
        zeta[i] = za[a].max(0.0);
    }
    Ok(zeta)
}

/// Upper bound on ‖ζ*‖ from a bound on ‖L_g b‖.
pub fn dual_bound(cs: &ControlSet, lgb_sup: f64) -> Result<f64> {
    if lgb_sup < 0.0 {
        return structure("lgb_sup must be nonnegative");
    }
    match &cs.kind {
        ControlKind::Box { half_widths } => {
            let wmin = half_widths.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(lgb_sup / (2.0 * wmin))
        }
        ControlKind::Ellipsoid { w } => Ok(lgb_sup / (2.0 * sym_eigs(w)?[0].sqrt())),
        ControlKind::Polytope { normals, .. } => {
            let m = normals[0].len();
            let lam = min_subset_eig(normals, m.min(normals.len()))?;
            Ok(lgb_sup / lam.sqrt())
        }
        ControlKind::General => Err(CoreError::Unsupported(
            "dual bound is only available for box, ellipsoid and polytope control sets".into(),
        )),
    }
}

/// Minimum of λ_min(W_SᵀW_S) over linearly independent subsets S of size
/// at most `k`.
fn min_subset_eig(normals: &[Vec<f64>], k: usize) -> Result<f64> {
    let n = normals.len();
    let mut best = f64::INFINITY;
    let mut subset = Vec::new();
    fn rec(
        normals: &[Vec<f64>],
        start: usize,
        k: usize,
        subset: &mut Vec<usize>,
        best: &mut f64,
    ) -> Result<()> {
        if !subset.is_empty() {
            let s = subset.len();
            let g: Vec<Vec<f64>> = (0..s)
                .map(|a| {
                    (0..s)
                        .map(|b| normals[subset[a]].iter().zip(&normals[subset[b]]).map(|(p, q)| p * q).sum())
                        .collect()
                })
                .collect();
            let lam = sym_eigs(&g)?[0];
            if lam > 1e-10 {
                *best = best.min(lam);
            }
        }
        if subset.len() == k {
            return Ok(());
        }
        for i in start..normals.len() {
            subset.push(i);
            rec(normals, i + 1, k, subset, best)?;
            subset.pop();
        }
        Ok(())
    }
    rec(normals, 0, k.min(n), &mut subset, &mut best)?;
    if best.is_finite() {
        Ok(best)
    } else {
        Err(CoreError::Numeric("polytope normals are degenerate".into()))
    }
}

/// f, g, J as polynomials over the state space `[x]`.
#[derive(Clone, Debug)]
pub struct SystemModel {
    pub space: Arc<VariableSpace>,
    pub f: Vec<Polynomial>,
    /// n rows, m columns.
    pub g: Vec<Vec<Polynomial>>,
    /// n rows, d columns.
    pub j: Option<Vec<Vec<Polynomial>>>,
    pub m_eps: f64,
    pub control: ControlSet,
}

impl SystemModel {
    pub fn state_space(n: usize) -> Arc<VariableSpace> {
        VariableSpace::new(&[(STATE, n)]).expect("valid state space")
    }

    pub fn new(
        f: Vec<Polynomial>,
        g: Vec<Vec<Polynomial>>,
        j: Option<Vec<Vec<Polynomial>>>,
        m_eps: f64,
        control: ControlSet,
    ) -> Result<Self> {
        let n = f.len();
        if n == 0 {
            return structure("dynamics need at least one state");
        }
        let space = Self::state_space(n);
        let emb = |p: &Polynomial| {
            p.embed(&space)
                .map_err(|_| CoreError::Structure("dynamics may only depend on the state".into()))
        };
        let f = f.iter().map(emb).collect::<Result<Vec<_>>>()?;
        let m = control.dim();
        if g.len() != n || g.iter().any(|r| r.len() != m) {
            return structure(format!("g must be {n}x{m}"));
        }
        let g = g
            .iter()
            .map(|r| r.iter().map(emb).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        if !(m_eps >= 0.0) {
            return structure("uncertainty bound must be nonnegative");
        }
        let j = match j {
            Some(j) => {
                if m_eps == 0.0 {
                    return structure("J is given but the uncertainty bound is zero");
                }
                let d = j.first().map(|r| r.len()).unwrap_or(0);
                if j.len() != n || d == 0 || j.iter().any(|r| r.len() != d) {
                    return structure(format!("J must be {n}xd with d > 0"));
                }
                Some(
                    j.iter()
                        .map(|r| r.iter().map(emb).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            None => {
                if m_eps != 0.0 {
                    return structure("nonzero uncertainty bound needs J");
                }
                None
            }
        };
        Ok(SystemModel {
            space,
            f,
            g,
            j,
            m_eps,
            control,
        })
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn m(&self) -> usize {
        self.control.dim()
    }

    pub fn has_uncertainty(&self) -> bool {
        self.j.is_some() && self.m_eps > 0.0
    }

    /// Largest singular value of J when J is constant.
    pub fn constant_j_norm(&self) -> Option<f64> {
        let j = self.j.as_ref()?;
        if j.iter().flatten().any(|p| p.degree() > 0) {
            return None;
        }
        let n = j.len();
        let d = j[0].len();
        let m = Mat::from_fn(n, d, |a, b| j[a][b].constant_term());
        let sv = m.singular_values().ok()?;
        Some(sv.first().copied().unwrap_or(0.0))
    }

    /// For each column of g, `Some((k, j))` when the column is `x_j e_k`
    /// with j ≠ k.
    fn cross_gain_columns(&self) -> Option<Vec<(usize, usize)>> {
        let n = self.n();
        (0..self.m())
            .map(|c| {
                let nz: Vec<usize> = (0..n).filter(|&r| !self.g[r][c].is_zero()).collect();
                if nz.len() != 1 {
                    return None;
                }
                let k = nz[0];
                (0..n).find(|&j| j != k && self.g[k][c] == Polynomial::var(&self.space, j)).map(|j| (k, j))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaKind {
    Interval { lo: f64, hi: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// θ1, θ2 ∈ [lo, hi], θ3² ≤ ξ²θ1θ2.
    EllipseCoupled { lo: f64, hi: f64, xi: f64 },
    /// Arbitrary constraints g(θ) ≥ 0 (given as text) inside a bounding box.
    General {
        lo: Vec<f64>,
        hi: Vec<f64>,
        constraints: Vec<String>,
    },
}

/// How interval bounds on a parameter become inequalities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaEncoding {
    /// θ − lo ≥ 0 and hi − θ ≥ 0.
    #[default]
    Linear,
    /// (θ − lo)(hi − θ) ≥ 0.
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub kind: ThetaKind,
    #[serde(default)]
    pub encoding: ThetaEncoding,
}

impl ParameterSet {
    pub fn new(kind: ThetaKind) -> Result<Self> {
        match &kind {
            ThetaKind::Interval { lo, hi } if !(lo < hi) => return structure("interval needs lo < hi"),
            ThetaKind::Box { lo, hi } | ThetaKind::General { lo, hi, .. }
                if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(hi).any(|(a, b)| !(a < b)) =>
            {
                return structure("parameter box needs lo < hi in every coordinate")
            }
            ThetaKind::EllipseCoupled { lo, hi, xi } if !(0.0 < *lo && lo < hi && 0.0 < *xi && *xi < 1.0) => {
                return structure("ellipse-coupled set needs 0 < lo < hi and 0 < xi < 1")
            }
            _ => {}
        }
        Ok(ParameterSet {
            kind,
            encoding: ThetaEncoding::default(),
        })
    }

    pub fn with_encoding(mut self, e: ThetaEncoding) -> Self {
        self.encoding = e;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ThetaKind::Interval { .. } => 1,
            ThetaKind::Box { lo, .. } | ThetaKind::General { lo, .. } => lo.len(),
            ThetaKind::EllipseCoupled { .. } => 3,
        }
    }

    /// Per-coordinate bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            ThetaKind::Interval { lo, hi } => (vec![*lo], vec![*hi]),
            ThetaKind::Box { lo, hi } | ThetaKind::General { lo, hi, .. } => (lo.clone(), hi.clone()),
            ThetaKind::EllipseCoupled { lo, hi, xi } => {
                (vec![*lo, *lo, -xi * hi], vec![*hi, *hi, xi * hi])
            }
        }
    }

    /// Constraint polynomials g(θ) ≥ 0 in `space`, which must contain the
    /// parameter block.
    pub fn constraints(&self, space: &Arc<VariableSpace>) -> Result<Vec<Polynomial>> {
        let t = |i: usize| -> Result<Polynomial> { Ok(Polynomial::var(space, space.var(PARAM, i)?)) };
        let interval = |p: Polynomial, lo: f64, hi: f64, out: &mut Vec<Polynomial>| match self.encoding {
            ThetaEncoding::Linear => {
                out.push(p.add_constant(-lo));
                out.push((-&p).add_constant(hi));
            }
            ThetaEncoding::Quadratic => out.push(&p.add_constant(-lo) * &(-&p).add_constant(hi)),
        };
        let mut out = Vec::new();
        match &self.kind {
            ThetaKind::Interval { lo, hi } => interval(t(0)?, *lo, *hi, &mut out),
            ThetaKind::Box { lo, hi } => {
                for i in 0..lo.len() {
                    interval(t(i)?, lo[i], hi[i], &mut out);
                }
            }
            ThetaKind::EllipseCoupled { lo, hi, xi } => {
                interval(t(0)?, *lo, *hi, &mut out);
                interval(t(1)?, *lo, *hi, &mut out);
                out.push(&(&t(0)? * &t(1)?) * (xi * xi) - t(2)?.pow(2));
            }
            ThetaKind::General { lo, hi, constraints } => {
                for i in 0..lo.len() {
                    interval(t(i)?, lo[i], hi[i], &mut out);
                }
                let k = lo.len();
                let pspace = VariableSpace::new(&[(PARAM, k)])?;
                for c in constraints {
                    out.push(Polynomial::parse(&pspace, c)?.embed(space)?);
                }
            }
        }
        Ok(out)
    }

    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        if theta.len() != self.dim() {
            return false;
        }
        let space = VariableSpace::new(&[(PARAM, self.dim())]).expect("valid parameter space");
        match self.constraints(&space) {
            Ok(cs) => cs.iter().all(|c| c.eval_dense(theta) >= -tol),
            Err(_) => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CbfFamily {
    /// b = θ − ‖x‖²
    Circular,
    /// b = 1 − xᵀAx with A = [[θ1, θ3], [θ3, θ2]]
    Elliptical,
    Other,
}

/// Barrier b(x, θ) over the space `[x, t]`.
#[derive(Clone, Debug)]
pub struct CbfCandidate {
    pub space: Arc<VariableSpace>,
    pub b: Polynomial,
    pub theta: ParameterSet,
    pub family: CbfFamily,
}

impl CbfCandidate {
    pub fn cbf_space(n: usize, k: usize) -> Arc<VariableSpace> {
        VariableSpace::new(&[(STATE, n), (PARAM, k)]).expect("valid barrier space")
    }

    pub fn new(n: usize, b: &Polynomial, theta: ParameterSet) -> Result<Self> {
        let k = theta.dim();
        let space = Self::cbf_space(n, k);
        let b = b.embed(&space).map_err(|_| {
            CoreError::Structure("barrier may only depend on the state and the parameters".into())
        })?;
        let family = detect_family(&space, &b, n, k);
        Ok(CbfCandidate {
            space,
            b,
            theta,
            family,
        })
    }

    pub fn parse(n: usize, text: &str, theta: ParameterSet) -> Result<Self> {
        let space = Self::cbf_space(n, theta.dim());
        let b = Polynomial::parse(&space, text)?;
        Self::new(n, &b, theta)
    }

    pub fn n(&self) -> usize {
        self.space.block_range(STATE).map(|r| r.len()).unwrap_or(0)
    }

    pub fn k(&self) -> usize {
        self.theta.dim()
    }
}

fn detect_family(space: &Arc<VariableSpace>, b: &Polynomial, n: usize, k: usize) -> CbfFamily {
    let x = |i: usize| Polynomial::var(space, i);
    let t = |i: usize| Polynomial::var(space, n + i);
    if k == 1 {
        let mut circ = t(0);
        for i in 0..n {
            circ = &circ - &x(i).pow(2);
        }
        if b.max_coeff_diff(&circ) < 1e-12 {
            return CbfFamily::Circular;
        }
    }
    if n == 2 && k == 3 {
        let quad = &(&(&t(0) * &x(0).pow(2)) + &(&t(1) * &x(1).pow(2))) + &(&(&t(2) * &(&x(0) * &x(1))) * 2.0);
        let ell = (-quad).add_constant(1.0);
        if b.max_coeff_diff(&ell) < 1e-12 {
            return CbfFamily::Elliptical;
        }
    }
    CbfFamily::Other
}

/// Lie derivatives over the barrier space `[x, t]`.
#[derive(Clone, Debug)]
pub struct LieDerivatives {
    pub lfb: Polynomial,
    pub lgb: Vec<Polynomial>,
    pub ljb: Option<Vec<Polynomial>>,
}

pub fn lie_derivatives(model: &SystemModel, cbf: &CbfCandidate) -> Result<LieDerivatives> {
    let n = model.n();
    if cbf.n() != n {
        return structure(format!("barrier has {} states, dynamics have {n}", cbf.n()));
    }
    let grad: Vec<Polynomial> = (0..n).map(|i| cbf.b.differentiate(i)).collect();
    let contract = |col: &dyn Fn(usize) -> Result<Polynomial>| -> Result<Polynomial> {
        let mut acc = Polynomial::zero(&cbf.space);
        for (i, gi) in grad.iter().enumerate() {
            acc = &acc + &(gi * &col(i)?);
        }
        Ok(acc)
    };
    let lfb = contract(&|i| model.f[i].embed(&cbf.space))?;
    let lgb = (0..model.m())
        .map(|c| contract(&|i| model.g[i][c].embed(&cbf.space)))
        .collect::<Result<Vec<_>>>()?;
    let ljb = match &model.j {
        Some(j) => Some(
            (0..j[0].len())
                .map(|c| contract(&|i| j[i][c].embed(&cbf.space)))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    Ok(LieDerivatives { lfb, lgb, ljb })
}

/// Value and optimal inner variables at a boundary point.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerSolution {
    pub value: f64,
    pub u: Vec<f64>,
    pub zeta: Vec<f64>,
    /// ‖L_J b‖, absent without uncertainty.
    pub z: Option<f64>,
}

pub fn inner_solution(model: &SystemModel, cbf: &CbfCandidate, x: &[f64], theta: &[f64]) -> Result<InnerSolution> {
    let lie = lie_derivatives(model, cbf)?;
    inner_solution_with(model, &lie, x, theta)
}

pub fn inner_solution_with(model: &SystemModel, lie: &LieDerivatives, x: &[f64], theta: &[f64]) -> Result<InnerSolution> {
    let mut pt = x.to_vec();
    pt.extend_from_slice(theta);
    if pt.len() != lie.lfb.space().nvars() {
        return structure("point has the wrong dimension");
    }
    let lgb: Vec<f64> = lie.lgb.iter().map(|p| p.eval_dense(&pt)).collect();
    let (vu, u, zeta) = model.control.support(&lgb)?;
    let z = if model.has_uncertainty() {
        let ljb = lie.ljb.as_ref().expect("uncertain model has J");
        Some(ljb.iter().map(|p| p.eval_dense(&pt).powi(2)).sum::<f64>().sqrt())
    } else {
        None
    };
    let value = lie.lfb.eval_dense(&pt) + vu - model.m_eps * z.unwrap_or(0.0);
    Ok(InnerSolution { value, u, zeta, z })
}

/// L_f b + max_u L_g b·u + min_ε L_J b·ε at (x, θ).
pub fn inner_closed_form(model: &SystemModel, cbf: &CbfCandidate, x: &[f64], theta: &[f64]) -> Result<f64> {
    Ok(inner_solution(model, cbf, x, theta)?.value)
}

/// Brute-force V(θ) over sampled boundary points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryOracle {
    /// Minimum inner value; +∞ when no boundary point was found.
    pub value: f64,
    pub argmin: Option<Vec<f64>>,
    pub points: usize,
}

/// Minimizes the closed-form inner value over the boundary b(x, θ) = 0 of a
/// planar system, sampled along `rays` rays from the origin. Each ray is
/// scanned for sign changes of b up to the state radius and every crossing
/// is refined by bisection.
pub fn boundary_grid_oracle(model: &SystemModel, cbf: &CbfCandidate, theta: &[f64], rays: usize) -> Result<BoundaryOracle> {
    if model.n() != 2 {
        return structure("the boundary grid oracle needs a planar state");
    }
    let radius = match family_x_radius(cbf, theta) {
        Some(r) => r * 1.01 + 1e-9,
        None => variable_bounds(model, cbf, None)?.radii.x,
    };
    let lie = lie_derivatives(model, cbf)?;
    let b_at = |x: [f64; 2]| cbf.b.eval_dense(&[&x[..], theta].concat());
    let mut best = BoundaryOracle {
        value: f64::INFINITY,
        argmin: None,
        points: 0,
    };
    let visit = |x: [f64; 2], best: &mut BoundaryOracle| -> Result<()> {
        let v = inner_solution_with(model, &lie, &x, theta)?.value;
        best.points += 1;
        if v < best.value {
            best.value = v;
            best.argmin = Some(x.to_vec());
        }
        Ok(())
    };
    if b_at([0.0, 0.0]).abs() <= 1e-12 {
        visit([0.0, 0.0], &mut best)?;
    }
    const STEPS: usize = 256;
    for k in 0..rays {
        let a = std::f64::consts::TAU * k as f64 / rays as f64;
        let d = [a.cos(), a.sin()];
        let at = |r: f64| b_at([r * d[0], r * d[1]]);
        let mut r0 = 0.0;
        let mut g0 = at(0.0);
        for s in 1..=STEPS {
            let r1 = radius * s as f64 / STEPS as f64;
            let g1 = at(r1);
            if g0 != 0.0 && (g1 == 0.0 || g0.signum() != g1.signum()) {
                let (mut lo, mut hi, glo) = (r0, r1, g0);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let gm = at(mid);
                    if gm == 0.0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if gm.signum() == glo.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let r = 0.5 * (lo + hi);
                visit([r * d[0], r * d[1]], &mut best)?;
            }
            r0 = r1;
            g0 = g1;
        }
    }
    Ok(best)
}

/// Numeric radii for the blocks of y, used for scaling and the optional
/// aggregate ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRadii {
    pub x: f64,
    pub z: f64,
    pub u: f64,
    pub zeta: f64,
}

impl BlockRadii {
    pub fn ball(&self) -> f64 {
        self.x * self.x + self.z * self.z + self.u * self.u + self.zeta * self.zeta
    }
}

#[derive(Clone, Debug)]
pub struct BoundRow {
    pub label: String,
    /// Nonnegative on the feasible set.
    pub poly: Polynomial,
}

/// Redundant inequalities bounding the blocks of y, over the symbolic POP
/// space `[x, z, u, zeta, t]`.
#[derive(Clone, Debug)]
pub struct BoundSet {
    pub rows: Vec<BoundRow>,
    /// Radii valid for every θ ∈ Θ.
    pub radii: BlockRadii,
    /// Whether the family-specific forms were used for each of x, z, ζ.
    pub family_rows: [bool; 3],
    /// Constant used by the generic ζ row, when present.
    pub m_zeta: Option<f64>,
}

/// Optional user-supplied bounds for candidates outside the built-in
/// families.
#[derive(Clone, Debug, Default)]
pub struct BoundOverrides {
    /// Rows g ≥ 0 in the symbolic POP space.
    pub rows: Vec<Polynomial>,
    /// Radius of a ball containing ∂C for every θ ∈ Θ.
    pub x_radius: Option<f64>,
}

/// The symbolic POP space for a model and candidate.
pub fn pop_space(model: &SystemModel, cbf: &CbfCandidate, symbolic: bool) -> Arc<VariableSpace> {
    let zdim = usize::from(model.has_uncertainty());
    let k = if symbolic { cbf.k() } else { 0 };
    VariableSpace::new(&[
        (STATE, model.n()),
        (LIFT, zdim),
        (CONTROL, model.m()),
        (DUAL, model.control.len()),
        (PARAM, k),
    ])
    .expect("valid POP space")
}

/// Radius of ∂C per θ for the built-in families.
fn family_x_radius(cbf: &CbfCandidate, theta: &[f64]) -> Option<f64> {
    match cbf.family {
        CbfFamily::Circular => Some(theta[0].max(0.0).sqrt()),
        CbfFamily::Elliptical => {
            let det = theta[0] * theta[1] - theta[2] * theta[2];
            (det > 0.0).then(|| ((theta[0] + theta[1]) / det).sqrt())
        }
        CbfFamily::Other => None,
    }
}

/// Worst case of `family_x_radius` over Θ.
fn family_x_radius_sup(cbf: &CbfCandidate) -> Option<f64> {
    match (&cbf.family, &cbf.theta.kind) {
        (CbfFamily::Circular, _) => {
            let (_, hi) = cbf.theta.bounds();
            Some(hi[0].max(0.0).sqrt())
        }
        (CbfFamily::Elliptical, ThetaKind::EllipseCoupled { lo, xi, .. }) => {
            // (θ1+θ2)/(θ1θ2(1−ξ²)) is largest at θ1 = θ2 = lo
            Some((2.0 / ((1.0 - xi * xi) * lo)).sqrt())
        }
        _ => None,
    }
}

/// Supremum of |p| over |x_i| ≤ r and θ in its bounding box.
fn sup_abs(p: &Polynomial, n: usize, r: f64, tlo: &[f64], thi: &[f64]) -> f64 {
    let mut lo = vec![-r; n];
    let mut hi = vec![r; n];
    lo.extend_from_slice(tlo);
    hi.extend_from_slice(thi);
    let (a, b) = p.interval_bounds(&lo, &hi);
    a.abs().max(b.abs())
}

fn sup_norm(ps: &[Polynomial], n: usize, r: f64, tlo: &[f64], thi: &[f64]) -> f64 {
    ps.iter().map(|p| sup_abs(p, n, r, tlo, thi).powi(2)).sum::<f64>().sqrt()
}

pub fn variable_bounds(model: &SystemModel, cbf: &CbfCandidate, overrides: Option<&BoundOverrides>) -> Result<BoundSet> {
    let n = model.n();
    let space = pop_space(model, cbf, true);
    let lie = lie_derivatives(model, cbf)?;
    let (tlo, thi) = cbf.theta.bounds();
    let v = |name: &str, i: usize| -> Result<Polynomial> { Ok(Polynomial::var(&space, space.var(name, i)?)) };
    let tt = |i: usize| v(PARAM, i);
    let sum_sq = |name: &str, d: usize| -> Result<Polynomial> {
        let mut acc = Polynomial::zero(&space);
        for i in 0..d {
            acc = &acc + &v(name, i)?.pow(2);
        }
        Ok(acc)
    };

    let mut rows = Vec::new();
    let mut family_rows = [false; 3];
    let mut m_zeta = None;

    let known = cbf.family != CbfFamily::Other;
    let x_radius = match (family_x_radius_sup(cbf), overrides.and_then(|o| o.x_radius)) {
        (_, Some(r)) => r,
        (Some(r), None) if known => r,
        _ => {
            return Err(CoreError::Unsupported(
                "barrier is outside the built-in families; supply bound overrides with a state radius".into(),
            ))
        }
    };

    // state
    let xx = sum_sq(STATE, n)?;
    match cbf.family {
        CbfFamily::Circular => {
            rows.push(BoundRow {
                label: "state".into(),
                poly: &tt(0)? - &xx,
            });
            family_rows[0] = true;
        }
        CbfFamily::Elliptical => {
            let trace = &tt(0)? + &tt(1)?;
            let det = &(&tt(0)? * &tt(1)?) - &tt(2)?.pow(2);
            rows.push(BoundRow {
                label: "state".into(),
                poly: &trace - &(&xx * &det),
            });
            family_rows[0] = true;
        }
        CbfFamily::Other => {}
    }
    if let Some(o) = overrides {
        for (i, r) in o.rows.iter().enumerate() {
            rows.push(BoundRow {
                label: format!("override{}", i + 1),
                poly: r.embed(&space)?,
            });
        }
    }
    if cbf.family == CbfFamily::Other && overrides.is_none_or(|o| o.rows.is_empty()) {
        rows.push(BoundRow {
            label: "state".into(),
            poly: (-&xx).add_constant(x_radius * x_radius),
        });
    }

    // lift
    let mut z_radius = 0.0;
    if model.has_uncertainty() {
        let zsq = v(LIFT, 0)?.pow(2);
        let jn = model.constant_j_norm();
        let ljb = lie.ljb.as_ref().expect("uncertain model has J");
        match (cbf.family, jn) {
            (CbfFamily::Circular, Some(s)) => {
                // ‖L_J b‖² = 4‖Jᵀx‖² ≤ 4σ²θ
                rows.push(BoundRow {
                    label: "lift".into(),
                    poly: &(&tt(0)? * (4.0 * s * s)) - &zsq,
                });
                family_rows[1] = true;
                z_radius = 2.0 * s * thi[0].max(0.0).sqrt();
            }
            (CbfFamily::Elliptical, Some(s)) => {
                // ‖L_J b‖² ≤ 4σ² xᵀA²x ≤ 4σ² λ_max(A) ≤ 4σ²(θ1 + θ2)
                rows.push(BoundRow {
                    label: "lift".into(),
                    poly: &(&(&tt(0)? + &tt(1)?) * (4.0 * s * s)) - &zsq,
                });
                family_rows[1] = true;
                z_radius = 2.0 * s * (thi[0] + thi[1]).sqrt();
            }
            _ => {
                let zs = sup_norm(ljb, n, x_radius, &tlo, &thi);
                rows.push(BoundRow {
                    label: "lift".into(),
                    poly: (-&zsq).add_constant(zs * zs),
                });
                z_radius = zs;
            }
        }
    }

    // dual
    let l_u = model.control.len();
    let cross = model.cross_gain_columns();
    let box_widths = match &model.control.kind {
        ControlKind::Box { half_widths } => Some(half_widths.clone()),
        _ => None,
    };
    let zeta_radius;
    match (cbf.family, &cross, &box_widths) {
        (CbfFamily::Circular, Some(_), Some(w)) => {
            // |L_g b_i| = 2|x_k x_j| ≤ ‖x‖² = θ, so ζ_i² ≤ θ²/(4w_i²)
            for (i, wi) in w.iter().enumerate() {
                rows.push(BoundRow {
                    label: format!("dual{}", i + 1),
                    poly: &(&tt(0)?.pow(2) * (1.0 / (4.0 * wi * wi))) - &v(DUAL, i)?.pow(2),
                });
            }
            family_rows[2] = true;
            let wmin = w.iter().copied().fold(f64::INFINITY, f64::min);
            zeta_radius = (l_u as f64).sqrt() * thi[0] / (2.0 * wmin);
        }
        (CbfFamily::Elliptical, Some(_), Some(w)) => {
            // (L_g b_i)² ≤ 4(θ1+θ2)²/det A, so ζ_i² w_i² det A ≤ (θ1+θ2)²
            let trace = &tt(0)? + &tt(1)?;
            let det = &(&tt(0)? * &tt(1)?) - &tt(2)?.pow(2);
            for (i, wi) in w.iter().enumerate() {
                rows.push(BoundRow {
                    label: format!("dual{}", i + 1),
                    poly: &trace.pow(2) - &(&(&v(DUAL, i)?.pow(2) * &det) * (wi * wi)),
                });
            }
            family_rows[2] = true;
            let wmin = w.iter().copied().fold(f64::INFINITY, f64::min);
            zeta_radius = (l_u as f64).sqrt() * x_radius * x_radius / wmin;
        }
        _ => {
            let lgb_sup = sup_norm(&lie.lgb, n, x_radius, &tlo, &thi);
            let mz = dual_bound(&model.control, lgb_sup)?;
            rows.push(BoundRow {
                label: "dual".into(),
                poly: (-&sum_sq(DUAL, l_u)?).add_constant(mz * mz),
            });
            m_zeta = Some(mz);
            zeta_radius = mz;
        }
    }

    let u_radius = model.control.radius().unwrap_or(1.0);
    Ok(BoundSet {
        rows,
        radii: BlockRadii {
            x: x_radius,
            z: z_radius,
            u: u_radius,
            zeta: zeta_radius,
        },
        family_rows,
        m_zeta,
    })
}

/// Block radii at a fixed parameter, falling back to the Θ-wide values.
pub fn radii_at(model: &SystemModel, cbf: &CbfCandidate, bounds: &BoundSet, theta: &[f64]) -> BlockRadii {
    let mut r = bounds.radii;
    if let Some(x) = family_x_radius(cbf, theta) {
        r.x = x;
        let lie = match lie_derivatives(model, cbf) {
            Ok(l) => l,
            Err(_) => return r,
        };
        if let Some(ljb) = &lie.ljb {
            r.z = sup_norm(ljb, model.n(), x, theta, theta);
        }
        if bounds.family_rows[2] {
            let lgb_sup = sup_norm(&lie.lgb, model.n(), x, theta, theta);
            if let Ok(mz) = dual_bound(&model.control, lgb_sup) {
                r.zeta = mz.max(1e-3);
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{circular_cbf, elliptical_cbf, vanderpol};

    fn p(space: &Arc<VariableSpace>, s: &str) -> Polynomial {
        Polynomial::parse(space, s).unwrap()
    }

    #[test]
    fn lie_derivatives_clean() {
        let m = vanderpol(false).unwrap();
        let c = circular_cbf().unwrap();
        assert_eq!(c.family, CbfFamily::Circular);
        let l = lie_derivatives(&m, &c).unwrap();
        assert!(l.lfb.max_coeff_diff(&p(&c.space, "-x2^2 + x2^4")) < 1e-14);
        assert!(l.lgb[0].max_coeff_diff(&p(&c.space, "-2*x1*x2")) < 1e-14);
        assert!(l.ljb.is_none());
    }

    #[test]
    fn lie_derivatives_uncertain() {
        let m = vanderpol(true).unwrap();
        let c = circular_cbf().unwrap();
        let l = lie_derivatives(&m, &c).unwrap();
        let ljb = l.ljb.unwrap();
        assert_eq!(ljb.len(), 1);
        assert!(ljb[0].max_coeff_diff(&p(&c.space, "-2*x2")) < 1e-14);
        assert_eq!(m.constant_j_norm(), Some(1.0));
    }

    #[test]
    fn uncertainty_invariant() {
        let s = SystemModel::state_space(1);
        let cs = ControlSet::box_set(&[1.0]).unwrap();
        let f = vec![p(&s, "x")];
        let g = vec![vec![p(&s, "1")]];
        assert!(SystemModel::new(f.clone(), g.clone(), None, 0.1, cs.clone()).is_err());
        assert!(SystemModel::new(f.clone(), g.clone(), Some(vec![vec![p(&s, "1")]]), 0.0, cs.clone()).is_err());
        assert!(SystemModel::new(f, g, None, 0.0, cs).is_ok());
    }

    #[test]
    fn dual_bounds() {
        let bx = ControlSet::box_set(&[5.0]).unwrap();
        assert!((dual_bound(&bx, 2.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(dual_bound(&bx, 0.0).unwrap(), 0.0);
        let el = ControlSet::ellipsoid(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((dual_bound(&el, 2.0).unwrap() - 1.0).abs() < 1e-14);
        let poly = ControlSet::polytope(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            vec![1.0; 4],
            None,
        )
        .unwrap();
        assert!((dual_bound(&poly, 3.0).unwrap() - 3.0).abs() < 1e-12);
        let gen = ControlSet::general(1, vec![p(&ControlSet::box_set(&[1.0]).unwrap().space, "u^4 - 1")]).unwrap();
        assert!(matches!(dual_bound(&gen, 1.0), Err(CoreError::Unsupported(_))));
    }

    #[test]
    fn support_satisfies_kkt() {
        let el = ControlSet::ellipsoid(vec![vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let l = [0.3, -1.2];
        let (v, u, zeta) = el.support(&l).unwrap();
        assert!((v - (l[0] * u[0] + l[1] * u[1])).abs() < 1e-12);
        assert!(el.constraints[0].eval_dense(&u).abs() < 1e-12);
        for i in 0..2 {
            let du = el.constraints[0].differentiate(i).eval_dense(&u);
            assert!((-l[i] + zeta[0] * du).abs() < 1e-12);
        }
        let sq = ControlSet::polytope(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            vec![1.0; 4],
            Some(vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]]),
        )
        .unwrap();
        let (v, u, zeta) = sq.support(&[2.0, -0.5]).unwrap();
        assert_eq!(v, 2.5);
        assert_eq!(u, vec![1.0, -1.0]);
        assert!((zeta[0] - 2.0).abs() < 1e-12 && (zeta[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn closed_form_values() {
        let m = vanderpol(false).unwrap();
        let c = circular_cbf().unwrap();
        let v = inner_closed_form(&m, &c, &[0.0, 0.1f64.sqrt()], &[0.1]).unwrap();
        assert!((v + 0.09).abs() < 1e-12);
        let v = inner_closed_form(&m, &c, &[1.5f64.sqrt(), 0.0], &[1.5]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn grid_minimum_matches_analytic_profile() {
        // V(θ) = −θ(1 − θ) on [0, 1] and 0 beyond
        let m = vanderpol(false).unwrap();
        let c = circular_cbf().unwrap();
        let lie = lie_derivatives(&m, &c).unwrap();
        for &theta in &[0.1, 0.3, 0.5, 0.9, 1.2, 2.0] {
            let r = f64::sqrt(theta);
            let vmin = (0..10_000)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / 10_000.0;
                    inner_solution_with(&m, &lie, &[r * a.cos(), r * a.sin()], &[theta]).unwrap().value
                })
                .fold(f64::INFINITY, f64::min);
            let exact = if theta <= 1.0 { -theta * (1.0 - theta) } else { 0.0 };
            assert!((vmin - exact).abs() < 1e-6, "θ={theta}: {vmin} vs {exact}");
        }
    }

    #[test]
    fn boundary_oracle_matches_profile() {
        let m = vanderpol(false).unwrap();
        let c = circular_cbf().unwrap();
        for &theta in &[0.0, 0.1, 0.5, 1.1, 2.0] {
            let o = boundary_grid_oracle(&m, &c, &[theta], 10_000).unwrap();
            let exact = if theta <= 1.0 { -theta * (1.0 - theta) } else { 0.0 };
            assert!((o.value - exact).abs() < 1e-6, "θ={theta}: {} vs {exact}", o.value);
            if theta > 0.0 {
                assert_eq!(o.points, 10_000);
            }
        }
        let c = elliptical_cbf().unwrap();
        let o = boundary_grid_oracle(&m, &c, &[0.5, 0.5, 0.1], 2_000).unwrap();
        let x = o.argmin.unwrap();
        assert!(c.b.eval_dense(&[x[0], x[1], 0.5, 0.5, 0.1]).abs() < 1e-9);
    }

    #[test]
    fn elliptical_bounds_at_corner() {
        let m = vanderpol(false).unwrap();
        let c = elliptical_cbf().unwrap();
        assert_eq!(c.family, CbfFamily::Elliptical);
        let b = variable_bounds(&m, &c, None).unwrap();
        assert_eq!(b.family_rows, [true, false, true]);
        assert!((b.radii.x.powi(2) - 12.5).abs() < 1e-9);
        let sp = pop_space(&m, &c, true);
        let theta = [0.25, 0.25, 0.15];
        // x on the boundary of the bound, ζ on the bound
        let x2 = 12.5f64;
        let mut pt = vec![x2.sqrt(), 0.0];
        pt.push(0.0);
        let det = 0.25 * 0.25 - 0.15 * 0.15;
        let zeta = ((0.5f64).powi(2) / (25.0 * det)).sqrt();
        assert!((zeta * zeta - 0.25).abs() < 1e-12);
        pt.push(zeta);
        pt.extend_from_slice(&theta);
        assert_eq!(sp.nvars(), pt.len());
        for row in &b.rows {
            assert!(row.poly.eval_dense(&pt).abs() < 1e-9, "{} = {}", row.label, row.poly.eval_dense(&pt));
        }
    }

    #[test]
    fn circular_bounds_hold_at_optimum() {
        let m = vanderpol(true).unwrap();
        let c = circular_cbf().unwrap();
        let b = variable_bounds(&m, &c, None).unwrap();
        assert_eq!(b.family_rows, [true, true, true]);
        let sp = pop_space(&m, &c, true);
        let lie = lie_derivatives(&m, &c).unwrap();
        for k in 0..50 {
            let theta = 0.04 * k as f64;
            let a = 0.37 * k as f64;
            let x = [theta.sqrt() * a.cos(), theta.sqrt() * a.sin()];
            let s = inner_solution_with(&m, &lie, &x, &[theta]).unwrap();
            let pt = [x[0], x[1], s.z.unwrap(), s.u[0], s.zeta[0], theta];
            assert_eq!(sp.nvars(), pt.len());
            for row in &b.rows {
                assert!(row.poly.eval_dense(&pt) >= -1e-12, "{} at θ={theta}", row.label);
            }
        }
    }

    #[test]
    fn unknown_family_needs_overrides() {
        let m = vanderpol(false).unwrap();
        let th = ParameterSet::new(ThetaKind::Interval { lo: 0.5, hi: 1.0 }).unwrap();
        let c = CbfCandidate::parse(2, "t - x1^4 - x2^2", th).unwrap();
        assert_eq!(c.family, CbfFamily::Other);
        assert!(matches!(variable_bounds(&m, &c, None), Err(CoreError::Unsupported(_))));
        let o = BoundOverrides {
            rows: vec![],
            x_radius: Some(1.0),
        };
        let b = variable_bounds(&m, &c, Some(&o)).unwrap();
        assert!(b.m_zeta.unwrap() > 0.0);
    }

    #[test]
    fn parameter_encodings() {
        let ps = ParameterSet::new(ThetaKind::Interval { lo: 0.0, hi: 2.0 }).unwrap();
        let sp = VariableSpace::new(&[(PARAM, 1)]).unwrap();
        assert_eq!(ps.constraints(&sp).unwrap().len(), 2);
        let q = ps.clone().with_encoding(ThetaEncoding::Quadratic);
        let cs = q.constraints(&sp).unwrap();
        assert_eq!(cs.len(), 1);
        assert!(cs[0].max_coeff_diff(&p(&sp, "2*t - t^2")) < 1e-15);
        assert!(ps.contains(&[1.0], 0.0) && !ps.contains(&[2.5], 0.0));
        let e = elliptical_cbf().unwrap().theta;
        assert!(e.contains(&[0.25, 0.25, 0.15], 1e-12));
        assert!(!e.contains(&[0.25, 0.25, 0.16], 1e-12));
    }
}
