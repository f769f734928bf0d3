use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcbf_sdp::SdpSolution;
use serde::{Deserialize, Serialize};

use super::build::MomentSdp;
use crate::error::{CoreError, Result};
use crate::polyalg::Monomial;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractOptions {
    /// σ_j counts toward the rank iff σ_j > rank_tol·σ_1.
    pub rank_tol: f64,
    /// Pivot threshold of the column echelon reduction, relative to the
    /// largest entry.
    pub pivot_tol: f64,
    pub seed: u64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            rank_tol: 1e-6,
            pivot_tol: 1e-6,
            seed: 7,
        }
    }
}

/// Outcome of a flatness test and atom extraction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    /// Numeric ranks of the nested moment matrices, degree 0 up to κ.
    pub ranks: Vec<usize>,
    /// Degree t at which rank M_t = rank M_{t−d}.
    pub flat_level: Option<usize>,
    pub rank: Option<usize>,
    /// Atoms in the original variables, each over the requested coordinates.
    pub atoms: Vec<Vec<f64>>,
    pub diagnostic: Option<String>,
}

/// Moment matrix over monomials in `vars` up to degree `t`, in the
/// original variables. Returns the monomials and the matrix.
pub fn moment_matrix(msdp: &MomentSdp, sol: &SdpSolution, vars: &[usize], t: usize) -> (Vec<Monomial>, Mat<f64>) {
    let n = msdp.basis.nvars;
    let mut monos = Monomial::all_up_to_in(n, vars, t);
    monos.sort();
    let k = monos.len();
    let mut m = Mat::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = msdp.moment(sol, &monos[i].mul(&monos[j])).unwrap_or(0.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    (monos, m)
}

fn numeric_rank(m: &Mat<f64>, tol: f64) -> Result<usize> {
    let sv = m
        .singular_values()
        .map_err(|e| CoreError::Numeric(format!("singular values: {e:?}")))?;
    let top = sv.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|s| **s > tol * top).count())
}

/// Flatness test over all variables with d = κ₀, then extraction.
pub fn check_flatness_extract(sol: &SdpSolution, msdp: &MomentSdp, opts: &ExtractOptions) -> Result<Extraction> {
    let vars: Vec<usize> = (0..msdp.basis.nvars).collect();
    extract_on(sol, msdp, &vars, msdp.min_order, opts)
}

/// Flatness test and extraction on the marginal over `vars`, using the
/// rank condition rank M_t = rank M_{t−d}.
pub fn extract_on(sol: &SdpSolution, msdp: &MomentSdp, vars: &[usize], d: usize, opts: &ExtractOptions) -> Result<Extraction> {
    let kappa = msdp.order;
    let d = d.max(1);
    let (monos, full) = moment_matrix(msdp, sol, vars, kappa);
    let sizes: Vec<usize> = (0..=kappa).map(|t| monos.partition_point(|m| m.degree() <= t)).collect();
    let mut ranks = Vec::with_capacity(kappa + 1);
    for &sz in &sizes {
        let sub = full.subrows(0, sz).subcols(0, sz).to_owned();
        ranks.push(numeric_rank(&sub, opts.rank_tol)?);
    }
    let mut out = Extraction {
        ranks: ranks.clone(),
        ..Default::default()
    };
    let flat = (d..=kappa).find(|&t| ranks[t] == ranks[t - d] && ranks[t] > 0);
    let t = match flat {
        Some(t) => t,
        None => {
            out.diagnostic = Some(format!("no flat level among ranks {ranks:?}"));
            return Ok(out);
        }
    };
    out.flat_level = Some(t);
    let r = ranks[t];
    out.rank = Some(r);
    let sub = full.subrows(0, sizes[t]).subcols(0, sizes[t]).to_owned();
    match atoms_from_flat(&sub, &monos[..sizes[t]], vars, r, opts) {
        Ok(a) => out.atoms = a,
        Err(e) => out.diagnostic = Some(format!("extraction failed: {e}")),
    }
    Ok(out)
}

/// Multiplication-operator extraction from a flat moment matrix of rank r.
fn atoms_from_flat(m: &Mat<f64>, monos: &[Monomial], vars: &[usize], r: usize, opts: &ExtractOptions) -> Result<Vec<Vec<f64>>> {
    let s = m.nrows();
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| CoreError::Numeric(format!("eigendecomposition: {e:?}")))?;
    let lam = evd.S().column_vector();
    let u = evd.U();
    // top-r factor V with M ≈ V Vᵀ (eigenvalues ascending)
    let mut v = Mat::<f64>::zeros(s, r);
    for k in 0..r {
        let src = s - 1 - k;
        let w = lam[src].max(0.0).sqrt();
        for i in 0..s {
            v[(i, k)] = u[(i, src)] * w;
        }
    }
    if r == 1 {
        let c = v[(0, 0)];
        if c.abs() < 1e-12 {
            return Err(CoreError::Numeric("zero mass".into()));
        }
        let atom = vars
            .iter()
            .map(|&i| {
                let e = Monomial::var(monos[0].nvars(), i);
                let p = monos.iter().position(|m| *m == e).expect("first-order monomial present");
                v[(p, 0)] / c
            })
            .collect();
        return Ok(vec![atom]);
    }

    // reduced column echelon form: pivot rows become the identity
    let scale = (0..s).flat_map(|i| (0..r).map(move |k| (i, k))).map(|(i, k)| v[(i, k)].abs()).fold(0.0, f64::max);
    let mut pivots = Vec::with_capacity(r);
    for row in 0..s {
        if pivots.len() == r {
            break;
        }
        let p = pivots.len();
        let (best, val) = (p..r).map(|k| (k, v[(row, k)])).fold((p, 0.0f64), |a, b| if b.1.abs() > a.1.abs() { b } else { a });
        if val.abs() <= opts.pivot_tol * scale {
            continue;
        }
        for i in 0..s {
            let t = v[(i, p)];
            v[(i, p)] = v[(i, best)];
            v[(i, best)] = t;
        }
        for i in 0..s {
            v[(i, p)] /= val;
        }
        for k in 0..r {
            if k != p {
                let f = v[(row, k)];
                if f != 0.0 {
                    for i in 0..s {
                        v[(i, k)] -= f * v[(i, p)];
                    }
                }
            }
        }
        pivots.push(row);
    }
    if pivots.len() < r {
        return Err(CoreError::Numeric("column echelon form lost rank".into()));
    }

    // multiplication matrices N_i[j, :] = row of y_i·w_j
    let n = monos[0].nvars();
    let mut mult = Vec::with_capacity(vars.len());
    for &var in vars {
        let e = Monomial::var(n, var);
        let mut nm = Mat::<f64>::zeros(r, r);
        for (j, &pr) in pivots.iter().enumerate() {
            let target = monos[pr].mul(&e);
            let row = monos
                .iter()
                .position(|m| *m == target)
                .ok_or_else(|| CoreError::Numeric("shifted pivot monomial outside the flat level".into()))?;
            for k in 0..r {
                nm[(j, k)] = v[(row, k)];
            }
        }
        mult.push(nm);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut coef: Vec<f64> = (0..vars.len()).map(|_| rng.gen_range(0.1..1.0)).collect();
    let tot: f64 = coef.iter().sum();
    coef.iter_mut().for_each(|c| *c /= tot);
    let mut comb = Mat::<f64>::zeros(r, r);
    for (c, nm) in coef.iter().zip(&mult) {
        comb += nm * faer::Scale(*c);
    }
    let eig = comb
        .eigen()
        .map_err(|e| CoreError::Numeric(format!("eigendecomposition: {e:?}")))?;
    let q = eig.U();
    let mut atoms = Vec::with_capacity(r);
    for j in 0..r {
        let (re, im): (Vec<f64>, Vec<f64>) = (0..r).map(|i| (q[(i, j)].re, q[(i, j)].im)).unzip();
        let nn: f64 = re.iter().zip(&im).map(|(a, b)| a * a + b * b).sum();
        let atom = mult
            .iter()
            .map(|nm| {
                // Re(qᴴ N q) / qᴴq
                let mut acc = 0.0;
                for a in 0..r {
                    for b in 0..r {
                        acc += nm[(a, b)] * (re[a] * re[b] + im[a] * im[b]);
                    }
                }
                acc / nn
            })
            .collect();
        atoms.push(atom);
    }
    Ok(atoms)
}
