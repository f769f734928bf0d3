use std::cmp::Ordering;

use smallvec::SmallVec;

/// Dense exponent vector over the scalar variables of a space.
///
/// Ordered by total degree, then lexicographically with higher powers of
/// earlier variables first, so `1 < x1 < x2 < x1² < x1x2 < x2²`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: SmallVec<[u8; 16]>,
}

impl Monomial {
    pub fn one(n: usize) -> Self {
        Monomial {
            exps: SmallVec::from_elem(0, n),
        }
    }

    pub fn var(n: usize, i: usize) -> Self {
        Self::var_pow(n, i, 1)
    }

    pub fn var_pow(n: usize, i: usize, k: u8) -> Self {
        let mut m = Self::one(n);
        m.exps[i] = k;
        m
    }

    pub fn from_exponents(exps: &[u8]) -> Self {
        Monomial {
            exps: SmallVec::from_slice(exps),
        }
    }

    pub fn exponents(&self) -> &[u8] {
        &self.exps
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn exp(&self, i: usize) -> u8 {
        self.exps[i]
    }

    pub fn degree(&self) -> usize {
        self.exps.iter().map(|&e| e as usize).sum()
    }

    pub fn degree_in(&self, vars: std::ops::Range<usize>) -> usize {
        self.exps[vars].iter().map(|&e| e as usize).sum()
    }

    pub fn is_one(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.exps.len(), other.exps.len());
        Monomial {
            exps: self
                .exps
                .iter()
                .zip(&other.exps)
                .map(|(a, b)| a.checked_add(*b).expect("monomial exponent overflow"))
                .collect(),
        }
    }

    /// `self / other` when `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut exps = SmallVec::with_capacity(self.exps.len());
        for (a, b) in self.exps.iter().zip(&other.exps) {
            exps.push(a.checked_sub(*b)?);
        }
        Some(Monomial { exps })
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut v = 1.0;
        for (&e, &x) in self.exps.iter().zip(point) {
            if e > 0 {
                v *= x.powi(e as i32);
            }
        }
        v
    }

    /// Nonzero (variable, exponent) pairs.
    pub fn support(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.exps.iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, &e)| (i, e))
    }

    /// All monomials in `n` variables of degree ≤ `d`, in basis order.
    pub fn all_up_to(n: usize, d: usize) -> Vec<Monomial> {
        let mut out = Vec::new();
        for deg in 0..=d {
            let mut cur = vec![0u8; n];
            fill(&mut out, &mut cur, 0, deg);
        }
        out
    }

    /// Monomials of degree ≤ `d` supported only on the variables in `vars`.
    pub fn all_up_to_in(n: usize, vars: &[usize], d: usize) -> Vec<Monomial> {
        Monomial::all_up_to(vars.len(), d)
            .into_iter()
            .map(|m| {
                let mut full = Monomial::one(n);
                for (k, &v) in vars.iter().enumerate() {
                    full.exps[v] = m.exps[k];
                }
                full
            })
            .collect()
    }
}

fn fill(out: &mut Vec<Monomial>, cur: &mut [u8], pos: usize, left: usize) {
    if pos + 1 >= cur.len() {
        if !cur.is_empty() {
            cur[pos] = left as u8;
        } else if left > 0 {
            return;
        }
        out.push(Monomial::from_exponents(cur));
        if !cur.is_empty() {
            cur[pos] = 0;
        }
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e as u8;
        fill(out, cur, pos + 1, left - e);
    }
    cur[pos] = 0;
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| {
                for (a, b) in self.exps.iter().zip(&other.exps) {
                    match b.cmp(a) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                Ordering::Equal
            })
            .then_with(|| self.exps.len().cmp(&other.exps.len()))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_order() {
        let b = Monomial::all_up_to(2, 2);
        let e: Vec<&[u8]> = b.iter().map(|m| m.exponents()).collect();
        assert_eq!(e, vec![&[0, 0][..], &[1, 0], &[0, 1], &[2, 0], &[1, 1], &[0, 2]]);
        let mut sorted = b.clone();
        sorted.sort();
        assert_eq!(sorted, b);
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(Monomial::all_up_to(2, 2).len(), 6);
        assert_eq!(Monomial::all_up_to(4, 4).len(), 70);
        assert_eq!(Monomial::all_up_to(8, 8).len(), 12870);
        assert_eq!(Monomial::all_up_to(0, 3).len(), 1);
    }

    #[test]
    fn division() {
        let a = Monomial::from_exponents(&[2, 1]);
        let b = Monomial::from_exponents(&[1, 1]);
        assert_eq!(a.div(&b), Some(Monomial::from_exponents(&[1, 0])));
        assert_eq!(b.div(&a), None);
    }
}
