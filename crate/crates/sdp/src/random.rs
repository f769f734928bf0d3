//! Random primal-dual feasible instances for property checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::problem::{BlockKind, Entry, SdpProblem};

pub fn random_feasible(seed: u64) -> SdpProblem {
    random_feasible_with_witness(seed).0
}

/// Instance together with the primal point it was built around.
pub fn random_feasible_with_witness(seed: u64) -> (SdpProblem, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.gen_range(1..=3);
    let mut blocks = Vec::new();
    for _ in 0..nb {
        let n = rng.gen_range(1..=5);
        blocks.push(if rng.gen_bool(0.25) { BlockKind::Diagonal(n) } else { BlockKind::Psd(n) });
    }
    // X0 = G Gᵀ with random rank, S0 likewise: primal and dual feasible
    let mut x0 = Vec::new();
    let mut s0 = Vec::new();
    for b in &blocks {
        let n = b.dim();
        let mk = |rng: &mut ChaCha8Rng| {
            let r = rng.gen_range(1..=n);
            let g: Vec<f64> = (0..n * r).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let diag_only = matches!(b, BlockKind::Diagonal(_)) && i != j;
                    if !diag_only {
                        m[i * n + j] = (0..r).map(|k| g[i * r + k] * g[j * r + k]).sum();
                    }
                }
            }
            m
        };
        x0.push(mk(&mut rng));
        s0.push(mk(&mut rng));
    }
    let mut p = SdpProblem::new(blocks.clone());
    let ncells: usize = blocks.iter().map(|b| b.cells()).sum();
    let m = rng.gen_range(1..=6.min(ncells.saturating_sub(1)).max(1));
    let mut y0 = Vec::new();
    for _ in 0..m {
        let mut entries = Vec::new();
        let mut rhs = 0.0;
        for (bi, b) in blocks.iter().enumerate() {
            let n = b.dim();
            for i in 0..n {
                for j in i..n {
                    if matches!(b, BlockKind::Diagonal(_)) && i != j {
                        continue;
                    }
                    if rng.gen_bool(0.5) {
                        let mag: f64 = rng.gen_range(0.2..1.0);
                        let v = if rng.gen_bool(0.5) { mag } else { -mag };
                        let e = Entry::new(bi, i, j, v);
                        rhs += e.multiplicity() * v * x0[bi][i * n + j];
                        entries.push(e);
                    }
                }
            }
        }
        if entries.is_empty() {
            let e = Entry::new(0, 0, 0, 1.0);
            rhs += x0[0][0];
            entries.push(e);
        }
        p.add_constraint(entries, rhs);
        y0.push(rng.gen_range(-1.0..1.0));
    }
    // C = S0 + Σ y0_j A_j
    let mut obj = std::collections::BTreeMap::new();
    for (bi, b) in blocks.iter().enumerate() {
        let n = b.dim();
        for i in 0..n {
            for j in i..n {
                let v = s0[bi][i * n + j];
                if v != 0.0 {
                    *obj.entry((bi, i, j)).or_insert(0.0) += v;
                }
            }
        }
    }
    for (c, y) in p.constraints.iter().zip(&y0) {
        for e in &c.entries {
            *obj.entry((e.block, e.row, e.col)).or_insert(0.0) += y * e.value;
        }
    }
    p.objective = obj.into_iter().map(|((b, i, j), v)| Entry::new(b, i, j, v)).collect();
    (p, x0)
}
