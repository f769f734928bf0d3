//! Type-II Anderson acceleration for a fixed-point iteration s ← F(s), with
//! a residual-decrease safeguard.

use faer::Mat;

const MAX_JUMP: f64 = 10.0;

pub(crate) struct Anderson {
    mem: usize,
    /// Metric weights per coordinate.
    weights: Vec<f64>,
    ds: Vec<Vec<f64>>,
    dg: Vec<Vec<f64>>,
    prev_s: Option<Vec<f64>>,
    prev_g: Option<Vec<f64>>,
    /// Plain F output of the last accepted point, kept while an
    /// extrapolated point is on trial.
    fallback: Option<Vec<f64>>,
    last_gnorm: f64,
    safeguard: f64,
    pub rejected: usize,
    pub accepted: usize,
}

impl Anderson {
    pub fn new(dim: usize, mem: usize, weights: Vec<f64>, safeguard: f64) -> Self {
        debug_assert_eq!(weights.len(), dim);
        Anderson {
            mem,
            weights,
            ds: Vec::new(),
            dg: Vec::new(),
            prev_s: None,
            prev_g: None,
            fallback: None,
            last_gnorm: f64::INFINITY,
            safeguard,
            rejected: 0,
            accepted: 0,
        }
    }

    pub fn reset(&mut self) {
        self.ds.clear();
        self.dg.clear();
        self.prev_s = None;
        self.prev_g = None;
        self.fallback = None;
        self.last_gnorm = f64::INFINITY;
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| w * x * y).sum()
    }

    /// Given the current point `s` and `f = F(s)`, returns the next point.
    pub fn next(&mut self, s: &[f64], f: Vec<f64>) -> Vec<f64> {
        if self.mem == 0 {
            return f;
        }
        let g: Vec<f64> = f.iter().zip(s).map(|(a, b)| a - b).collect();
        let gnorm = self.dot(&g, &g).sqrt();
        if let Some(fb) = self.fallback.take() {
            if !(gnorm <= self.safeguard * self.last_gnorm) {
                // extrapolated point made things worse: restart from the plain step
                self.rejected += 1;
                self.reset();
                return fb;
            }
            self.accepted += 1;
        }
        if let (Some(ps), Some(pg)) = (self.prev_s.take(), self.prev_g.take()) {
            self.ds.push(s.iter().zip(&ps).map(|(a, b)| a - b).collect());
            self.dg.push(g.iter().zip(&pg).map(|(a, b)| a - b).collect());
            if self.ds.len() > self.mem {
                self.ds.remove(0);
                self.dg.remove(0);
            }
        }
        self.prev_s = Some(s.to_vec());
        self.prev_g = Some(g.clone());
        self.last_gnorm = gnorm;
        let k = self.dg.len();
        if k == 0 {
            return f;
        }
        // γ = argmin ‖g − ΔG γ‖ through regularized normal equations
        let mut gram = Mat::<f64>::zeros(k, k);
        let mut rhs = Mat::<f64>::zeros(k, 1);
        let mut trace = 0.0;
        for i in 0..k {
            for j in i..k {
                let v = self.dot(&self.dg[i], &self.dg[j]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
            trace += gram[(i, i)];
            rhs[(i, 0)] = self.dot(&self.dg[i], &g);
        }
        if !(trace > 0.0) {
            return f;
        }
        for i in 0..k {
            gram[(i, i)] += 1e-10 * trace;
        }
        let gamma = {
            use faer::linalg::solvers::Solve;
            let lu = gram.partial_piv_lu();
            lu.solve(&rhs)
        };
        if (0..k).any(|i| !gamma[(i, 0)].is_finite()) {
            self.reset();
            return f;
        }
        let mut out = f.clone();
        for i in 0..k {
            let gi = gamma[(i, 0)];
            for ((o, a), b) in out.iter_mut().zip(&self.ds[i]).zip(&self.dg[i]) {
                *o -= gi * (a + b);
            }
        }
        // a jump far beyond the iterate scale means the residual is not
        // vanishing (diverging iterates) and the extrapolation is meaningless
        let jump: Vec<f64> = out.iter().zip(&f).map(|(a, b)| a - b).collect();
        let fnorm = self.dot(&f, &f).sqrt();
        if !(self.dot(&jump, &jump).sqrt() <= MAX_JUMP * fnorm.max(1.0)) {
            self.rejected += 1;
            self.reset();
            return f;
        }
        self.fallback = Some(f);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accelerates_linear_contraction() {
        // s ← A s + c with spectral radius 0.99
        let a = [[0.99, 0.0], [0.0, 0.5]];
        let c = [0.01, 0.5];
        let fixed = [1.0f64, 1.0];
        let run = |mem: usize| {
            let mut aa = Anderson::new(2, mem, vec![1.0; 2], 1.0);
            let mut s = vec![0.0f64, 0.0];
            for k in 0..2000 {
                let f = vec![a[0][0] * s[0] + c[0], a[1][1] * s[1] + c[1]];
                let err = ((s[0] - fixed[0]).powi(2) + (s[1] - fixed[1]).powi(2)).sqrt();
                if err < 1e-10 {
                    return k;
                }
                s = aa.next(&s, f);
            }
            2000
        };
        let plain = run(0);
        let acc = run(5);
        assert!(acc * 10 < plain, "plain {plain}, accelerated {acc}");
    }
}
