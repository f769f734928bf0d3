//! Elimination of homogeneous two-term rows `a·X_p + c·X_q = 0`.
//!
//! Such rows dominate moment relaxations (one per duplicated moment cell), so
//! the cells they tie together are merged into a single scalar unknown and the
//! row disappears from the iteration. Duals of the eliminated rows are rebuilt
//! afterwards by peeling the spanning forest of merges.

use std::collections::BTreeMap;

use crate::problem::{BlockKind, SdpProblem};

const CONSISTENCY_TOL: f64 = 1e-12;
const ROW_DROP_TOL: f64 = 1e-14;

/// Cell layout shared by the presolve and the iteration.
#[derive(Clone, Debug)]
pub struct CellLayout {
    pub offsets: Vec<usize>,
    pub ncells: usize,
    /// (block, row, col) of each cell.
    pub coords: Vec<(usize, usize, usize)>,
}

impl CellLayout {
    pub fn new(blocks: &[BlockKind]) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut coords = Vec::new();
        let mut off = 0;
        for (b, kind) in blocks.iter().enumerate() {
            offsets.push(off);
            match *kind {
                BlockKind::Psd(n) => {
                    for j in 0..n {
                        for i in 0..=j {
                            coords.push((b, i, j));
                        }
                    }
                }
                BlockKind::Diagonal(n) => {
                    for i in 0..n {
                        coords.push((b, i, i));
                    }
                }
            }
            off += kind.cells();
        }
        CellLayout {
            offsets,
            ncells: off,
            coords,
        }
    }

    pub fn cell(&self, blocks: &[BlockKind], block: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        match blocks[block] {
            BlockKind::Psd(_) => self.offsets[block] + j * (j + 1) / 2 + i,
            BlockKind::Diagonal(_) => self.offsets[block] + i,
        }
    }

    pub fn multiplicity(&self, cell: usize) -> f64 {
        let (_, i, j) = self.coords[cell];
        if i == j {
            1.0
        } else {
            2.0
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReducedRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub orig: usize,
}

/// A row consumed by a merge; both coefficients include the cell multiplicity.
#[derive(Clone, Debug)]
pub struct MergeEdge {
    pub orig: usize,
    pub p: usize,
    pub q: usize,
    pub ap: f64,
    pub aq: f64,
}

#[derive(Clone, Debug)]
pub struct Reduced {
    pub layout: CellLayout,
    pub nvars: usize,
    /// X_cell = factor[cell] · v[class[cell]]
    pub class: Vec<usize>,
    pub factor: Vec<f64>,
    pub rows: Vec<ReducedRow>,
    pub merges: Vec<MergeEdge>,
    pub c: Vec<f64>,
    /// Index of an original row that reduced to `0 = b` with `b ≠ 0`.
    pub inconsistent: Option<usize>,
}

struct Forest {
    parent: Vec<usize>,
    ratio: Vec<f64>,
}

impl Forest {
    fn new(n: usize) -> Self {
        Forest {
            parent: (0..n).collect(),
            ratio: vec![1.0; n],
        }
    }

    /// Returns (root, r) with X_e = r · X_root.
    fn find(&mut self, e: usize) -> (usize, f64) {
        let mut path = Vec::new();
        let mut cur = e;
        while self.parent[cur] != cur {
            path.push(cur);
            cur = self.parent[cur];
        }
        let root = cur;
        let mut acc = 1.0;
        for &node in path.iter().rev() {
            acc *= self.ratio[node];
            self.ratio[node] = acc;
            self.parent[node] = root;
        }
        (root, if e == root { 1.0 } else { self.ratio[e] })
    }
}

fn cell_row(
    layout: &CellLayout,
    blocks: &[BlockKind],
    entries: &[crate::problem::Entry],
) -> BTreeMap<usize, f64> {
    let mut row = BTreeMap::new();
    for e in entries {
        let cell = layout.cell(blocks, e.block, e.row, e.col);
        *row.entry(cell).or_insert(0.0) += e.multiplicity() * e.value;
    }
    row.retain(|_, v| *v != 0.0);
    row
}

pub fn presolve(p: &SdpProblem) -> Reduced {
    let layout = CellLayout::new(&p.blocks);
    let mut forest = Forest::new(layout.ncells);
    let mut merges = Vec::new();
    let mut pending: Vec<(usize, BTreeMap<usize, f64>)> = Vec::new();
    let mut inconsistent = None;

    for (j, con) in p.constraints.iter().enumerate() {
        let row = cell_row(&layout, &p.blocks, &con.entries);
        if row.len() == 2 && con.rhs == 0.0 {
            let mut it = row.iter();
            let (&pc, &ap) = it.next().unwrap();
            let (&qc, &aq) = it.next().unwrap();
            let (rp, fp) = forest.find(pc);
            let (rq, fq) = forest.find(qc);
            if rp != rq {
                forest.parent[rp] = rq;
                forest.ratio[rp] = -(aq * fq) / (ap * fp);
                merges.push(MergeEdge {
                    orig: j,
                    p: pc,
                    q: qc,
                    ap,
                    aq,
                });
                continue;
            }
            let net = ap * fp + aq * fq;
            if net.abs() <= CONSISTENCY_TOL * (ap.abs() * fp.abs() + aq.abs() * fq.abs()) {
                continue;
            }
        }
        pending.push((j, row));
    }

    let mut class = vec![usize::MAX; layout.ncells];
    let mut factor = vec![0.0; layout.ncells];
    let mut root_var: BTreeMap<usize, usize> = BTreeMap::new();
    let mut nvars = 0;
    for cell in 0..layout.ncells {
        let (root, r) = forest.find(cell);
        let var = *root_var.entry(root).or_insert_with(|| {
            nvars += 1;
            nvars - 1
        });
        class[cell] = var;
        factor[cell] = r;
    }

    let mut rows = Vec::with_capacity(pending.len());
    for (j, row) in pending {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (cell, a) in row {
            *acc.entry(class[cell]).or_insert(0.0) += a * factor[cell];
        }
        let scale = acc.values().fold(0.0f64, |m, v| m.max(v.abs()));
        let coeffs: Vec<(usize, f64)> = acc
            .into_iter()
            .filter(|(_, v)| v.abs() > ROW_DROP_TOL * scale.max(1.0))
            .collect();
        let rhs = p.constraints[j].rhs;
        if coeffs.is_empty() {
            if rhs.abs() > 1e-12 && inconsistent.is_none() {
                inconsistent = Some(j);
            }
            continue;
        }
        rows.push(ReducedRow {
            coeffs,
            rhs,
            orig: j,
        });
    }

    let mut c = vec![0.0; nvars];
    for e in &p.objective {
        let cell = layout.cell(&p.blocks, e.block, e.row, e.col);
        c[class[cell]] += e.multiplicity() * e.value * factor[cell];
    }

    Reduced {
        layout,
        nvars,
        class,
        factor,
        rows,
        merges,
        c,
        inconsistent,
    }
}

impl Reduced {
    /// Fills in the multipliers of merged rows. `resid[cell]` must hold the
    /// multiplicity-weighted dual residual of each cell with respect to the
    /// surviving rows; it is consumed.
    pub fn recover_merge_duals(&self, resid: &mut [f64], y: &mut [f64]) {
        let n = self.layout.ncells;
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, m) in self.merges.iter().enumerate() {
            incident[m.p].push(k);
            incident[m.q].push(k);
        }
        let mut degree: Vec<usize> = incident.iter().map(|v| v.len()).collect();
        let mut done = vec![false; self.merges.len()];
        let mut stack: Vec<usize> = (0..n).filter(|&c| degree[c] == 1).collect();
        stack.reverse();
        while let Some(cell) = stack.pop() {
            if degree[cell] != 1 {
                continue;
            }
            let k = match incident[cell].iter().copied().find(|&k| !done[k]) {
                Some(k) => k,
                None => continue,
            };
            let m = &self.merges[k];
            let (a_here, other, a_other) = if m.p == cell {
                (m.ap, m.q, m.aq)
            } else {
                (m.aq, m.p, m.ap)
            };
            let yk = resid[cell] / a_here;
            y[m.orig] = yk;
            resid[cell] = 0.0;
            resid[other] -= yk * a_other;
            done[k] = true;
            degree[cell] -= 1;
            degree[other] -= 1;
            if degree[other] == 1 {
                stack.push(other);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Entry;

    #[test]
    fn merges_duplicate_cells() {
        // X01 = X11 and X00 + X11 = 1 on a 2x2 block
        let mut p = SdpProblem::new(vec![BlockKind::Psd(2)]);
        p.add_constraint(vec![Entry::new(0, 0, 1, 0.5), Entry::new(0, 1, 1, -1.0)], 0.0);
        p.add_constraint(vec![Entry::new(0, 0, 0, 1.0), Entry::new(0, 1, 1, 1.0)], 1.0);
        let r = presolve(&p);
        assert_eq!(r.nvars, 2);
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.merges.len(), 1);
        let c01 = r.layout.cell(&p.blocks, 0, 0, 1);
        let c11 = r.layout.cell(&p.blocks, 0, 1, 1);
        assert_eq!(r.class[c01], r.class[c11]);
        assert!((r.factor[c01] / r.factor[c11] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn detects_contradictory_cycle() {
        let mut p = SdpProblem::new(vec![BlockKind::Diagonal(2)]);
        p.add_constraint(vec![Entry::new(0, 0, 0, 1.0), Entry::new(0, 1, 1, -1.0)], 0.0);
        p.add_constraint(vec![Entry::new(0, 0, 0, 1.0), Entry::new(0, 1, 1, -1.0)], 0.0);
        p.add_constraint(vec![Entry::new(0, 0, 0, 1.0), Entry::new(0, 1, 1, 1.0)], 0.0);
        let r = presolve(&p);
        assert_eq!(r.nvars, 1);
        // the redundant copy vanishes, the conflicting one forces X00 = 0
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].orig, 2);
    }

    #[test]
    fn empty_row_with_nonzero_rhs_is_inconsistent() {
        let mut p = SdpProblem::new(vec![BlockKind::Diagonal(2)]);
        p.add_constraint(vec![Entry::new(0, 0, 0, 1.0), Entry::new(0, 0, 0, -1.0)], 3.0);
        assert_eq!(presolve(&p).inconsistent, Some(0));
    }
}
