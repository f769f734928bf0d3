use std::collections::HashMap;

use rcbf_sdp::{BlockKind, Entry, SdpProblem, SdpSolution};

use crate::error::{CoreError, Result};
use crate::polyalg::{Monomial, Polynomial};
use crate::popbuild::{Labeled, StandardPop};

/// Monomials of degree ≤ order in graded order; position 0 is 1.
#[derive(Clone, Debug)]
pub struct MomentBasis {
    pub nvars: usize,
    pub order: usize,
    pub monomials: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
}

impl MomentBasis {
    pub fn new(nvars: usize, order: usize) -> Self {
        let mut monomials = Monomial::all_up_to(nvars, order);
        monomials.sort();
        let index = monomials.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        MomentBasis {
            nvars,
            order,
            monomials,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn position(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }

    /// Number of basis monomials of degree ≤ d.
    pub fn prefix_len(&self, d: usize) -> usize {
        self.monomials.partition_point(|m| m.degree() <= d)
    }
}

/// A moment relaxation with the bookkeeping to read moments back.
#[derive(Clone, Debug)]
pub struct MomentSdp {
    pub sdp: SdpProblem,
    pub order: usize,
    pub min_order: usize,
    pub basis: MomentBasis,
    /// Moment monomials up to degree 2κ and their representative cells in
    /// the moment block.
    pub moments: Vec<Monomial>,
    pub moment_cells: Vec<(usize, usize)>,
    moment_index: HashMap<Monomial, usize>,
    /// Original (unscaled) problem.
    pub pop: StandardPop,
    /// y = scale ⊙ ỹ, with the relaxation posed in ỹ.
    pub scale: Vec<f64>,
    /// ϕ = obj_scale · ϕ̃.
    pub obj_scale: f64,
    /// Localizing blocks: (inequality index, block index, order).
    pub localizing: Vec<(usize, usize, usize)>,
    /// SDP row of each fixed moment, in the order given.
    pub fixed_rows: Vec<usize>,
}

fn max_abs_coeff(p: &Polynomial) -> f64 {
    p.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max)
}

/// Substitutes y = s ⊙ ỹ and normalizes every constraint.
fn rescale(pop: &StandardPop) -> (StandardPop, f64) {
    let s = &pop.scale;
    let sub = |p: &Polynomial| {
        Polynomial::from_terms(
            p.space(),
            p.terms().map(|(m, c)| {
                let f: f64 = m.support().map(|(i, e)| s[i].powi(e as i32)).product();
                (m.clone(), c * f)
            }),
        )
    };
    let norm = |p: Polynomial| {
        let a = max_abs_coeff(&p);
        if a > 0.0 {
            p.scale(1.0 / a)
        } else {
            p
        }
    };
    let obj = sub(&pop.objective);
    let obj_scale = match max_abs_coeff(&obj) {
        a if a > 0.0 => a,
        _ => 1.0,
    };
    let relabel = |v: &[Labeled]| {
        v.iter()
            .map(|c| Labeled {
                label: c.label.clone(),
                poly: norm(sub(&c.poly)),
            })
            .collect()
    };
    let scaled = StandardPop {
        space: pop.space.clone(),
        objective: obj.scale(1.0 / obj_scale),
        equalities: relabel(&pop.equalities),
        inequalities: relabel(&pop.inequalities),
        mode: pop.mode.clone(),
        scale: vec![1.0; s.len()],
    };
    (scaled, obj_scale)
}

/// Coefficient map for one linear row, keyed by cell.
#[derive(Default)]
struct RowBuilder(HashMap<(usize, usize, usize), f64>);

impl RowBuilder {
    /// Adds `coeff` times the value of cell (r, c).
    fn add(&mut self, block: usize, r: usize, c: usize, coeff: f64) {
        let key = (block, r.min(c), r.max(c));
        *self.0.entry(key).or_insert(0.0) += coeff;
    }

    fn finish(self) -> Vec<Entry> {
        let mut v: Vec<Entry> = self
            .0
            .into_iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|((b, r, c), v)| {
                let e = Entry::new(b, r, c, v);
                Entry { value: v / e.multiplicity(), ..e }
            })
            .collect();
        v.sort_by_key(|e| (e.block, e.row, e.col));
        v
    }
}

pub fn build_moment_sdp(pop: &StandardPop, order: usize) -> Result<MomentSdp> {
    build_moment_sdp_with(pop, order, &[])
}

fn half_ceil(d: usize) -> usize {
    d.div_ceil(2)
}

/// Moment relaxation with extra rows fixing L(m) = value for each given
/// monomial (in the unscaled variables).
pub fn build_moment_sdp_with(pop: &StandardPop, order: usize, fixed: &[(Monomial, f64)]) -> Result<MomentSdp> {
    let min_order = half_ceil(pop.max_degree()).max(1);
    if order < min_order {
        return Err(CoreError::OrderTooLow { order, min: min_order });
    }
    let n = pop.nvars();
    let (scaled, obj_scale) = rescale(pop);
    let basis = MomentBasis::new(n, order);
    let s = basis.len();

    let mut blocks = vec![BlockKind::Psd(s)];
    let mut localizing = Vec::new();
    let mut loc_bases = Vec::new();
    for (i, c) in scaled.inequalities.iter().enumerate() {
        let d = c.poly.degree();
        let lo = order.checked_sub(half_ceil(d)).ok_or(CoreError::OrderTooLow { order, min: half_ceil(d) })?;
        let lb = basis.prefix_len(lo);
        localizing.push((i, blocks.len(), lo));
        loc_bases.push(lb);
        blocks.push(if lb == 1 { BlockKind::Diagonal(1) } else { BlockKind::Psd(lb) });
    }
    let mut sdp = SdpProblem::new(blocks);

    // representative cell for each moment; duplicates tied to it
    let mut moments = Vec::new();
    let mut moment_cells = Vec::new();
    let mut moment_index: HashMap<Monomial, usize> = HashMap::new();
    for i in 0..s {
        for j in i..s {
            let m = basis.monomials[i].mul(&basis.monomials[j]);
            match moment_index.get(&m) {
                Some(&k) => {
                    let (ri, rj) = moment_cells[k];
                    let mut row = RowBuilder::default();
                    row.add(0, i, j, 1.0);
                    row.add(0, ri, rj, -1.0);
                    sdp.add_constraint(row.finish(), 0.0);
                }
                None => {
                    moment_index.insert(m.clone(), moments.len());
                    moments.push(m);
                    moment_cells.push((i, j));
                }
            }
        }
    }
    let cell_of = |m: &Monomial| -> (usize, usize) { moment_cells[moment_index[m]] };

    let mut fixed_rows = Vec::with_capacity(fixed.len());
    let fixes_one = fixed.iter().any(|(m, _)| m.is_one());
    if !fixes_one {
        sdp.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], 1.0);
    }
    for (m, v) in fixed {
        if m.nvars() != n || m.degree() > 2 * order {
            return Err(CoreError::Structure("fixed moment outside the relaxation".into()));
        }
        let f: f64 = m.support().map(|(i, e)| pop.scale[i].powi(e as i32)).product();
        let (r, c) = cell_of(m);
        let mut row = RowBuilder::default();
        row.add(0, r, c, 1.0);
        fixed_rows.push(sdp.add_constraint(row.finish(), v / f));
    }

    // equalities: L(h·y^α) = 0
    for h in &scaled.equalities {
        let dh = h.poly.degree();
        if dh > 2 * order {
            return Err(CoreError::OrderTooLow { order, min: half_ceil(dh) });
        }
        let mut shifts = Monomial::all_up_to(n, 2 * order - dh);
        shifts.sort();
        for a in &shifts {
            let mut row = RowBuilder::default();
            for (g, c) in h.poly.terms() {
                let (r, cc) = cell_of(&g.mul(a));
                row.add(0, r, cc, c);
            }
            let entries = row.finish();
            if !entries.is_empty() {
                sdp.add_constraint(entries, 0.0);
            }
        }
    }

    // localizing blocks: S[a,b] = L(s·y^{a+b}), duplicates tied together
    for ((ci, blk, _), &lb) in localizing.iter().zip(&loc_bases) {
        let poly = &scaled.inequalities[*ci].poly;
        let mut seen: HashMap<Monomial, (usize, usize)> = HashMap::new();
        for a in 0..lb {
            for b in a..lb {
                let m = basis.monomials[a].mul(&basis.monomials[b]);
                let mut row = RowBuilder::default();
                row.add(*blk, a, b, 1.0);
                match seen.get(&m) {
                    Some(&(ra, rb)) => {
                        row.add(*blk, ra, rb, -1.0);
                    }
                    None => {
                        seen.insert(m.clone(), (a, b));
                        for (g, c) in poly.terms() {
                            let (r, cc) = cell_of(&g.mul(&m));
                            row.add(0, r, cc, -c);
                        }
                    }
                }
                sdp.add_constraint(row.finish(), 0.0);
            }
        }
    }

    let mut obj = RowBuilder::default();
    for (g, c) in scaled.objective.terms() {
        let (r, cc) = cell_of(g);
        obj.add(0, r, cc, c);
    }
    sdp.objective = obj.finish();

    Ok(MomentSdp {
        sdp,
        order,
        min_order,
        basis,
        moments,
        moment_cells,
        moment_index,
        pop: pop.clone(),
        scale: pop.scale.clone(),
        obj_scale,
        localizing,
        fixed_rows,
    })
}

impl MomentSdp {
    /// Scaled moment value L(ỹ^m) from a solution.
    pub fn scaled_moment(&self, sol: &SdpSolution, m: &Monomial) -> Option<f64> {
        let k = *self.moment_index.get(m)?;
        let (r, c) = self.moment_cells[k];
        Some(sol.x[0].get(r, c))
    }

    /// Moment L(y^m) in the original variables.
    pub fn moment(&self, sol: &SdpSolution, m: &Monomial) -> Option<f64> {
        let f: f64 = m.support().map(|(i, e)| self.scale[i].powi(e as i32)).product();
        Some(self.scaled_moment(sol, m)? * f)
    }

    /// Lower bound on the POP value.
    pub fn bound(&self, sol: &SdpSolution) -> f64 {
        self.obj_scale * sol.primal_objective
    }

    /// Lower bound from the dual side.
    pub fn dual_bound(&self, sol: &SdpSolution) -> f64 {
        self.obj_scale * sol.dual_objective
    }

    /// Multiplier of the row fixing the given moment, in the original
    /// variables and objective units.
    pub fn fixed_multiplier(&self, sol: &SdpSolution, k: usize, m: &Monomial) -> f64 {
        let f: f64 = m.support().map(|(i, e)| self.scale[i].powi(e as i32)).product();
        sol.y[self.fixed_rows[k]] * self.obj_scale / f
    }
}
