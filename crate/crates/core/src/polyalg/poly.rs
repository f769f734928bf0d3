use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use super::monomial::Monomial;
use super::space::VariableSpace;
use crate::error::{structure, CoreError, Result};

/// Coefficients at or below this magnitude are dropped.
pub const DROP_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Polynomial {
    space: Arc<VariableSpace>,
    terms: BTreeMap<Monomial, f64>,
}

impl PartialEq for Polynomial {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.terms == other.terms
    }
}

impl Polynomial {
    pub fn zero(space: &Arc<VariableSpace>) -> Self {
        Polynomial {
            space: space.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(space: &Arc<VariableSpace>, c: f64) -> Self {
        Self::from_terms(space, [(Monomial::one(space.nvars()), c)])
    }

    pub fn var(space: &Arc<VariableSpace>, i: usize) -> Self {
        Self::from_terms(space, [(Monomial::var(space.nvars(), i), 1.0)])
    }

    /// Variable by scalar name.
    pub fn named(space: &Arc<VariableSpace>, name: &str) -> Result<Self> {
        match space.index(name) {
            Some(i) => Ok(Self::var(space, i)),
            None => structure(format!("unknown variable {name:?}")),
        }
    }

    pub fn from_terms(space: &Arc<VariableSpace>, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut map = BTreeMap::new();
        for (m, c) in terms {
            assert_eq!(m.nvars(), space.nvars(), "monomial does not match variable space");
            *map.entry(m).or_insert(0.0) += c;
        }
        let mut p = Polynomial {
            space: space.clone(),
            terms: map,
        };
        p.canonicalize();
        p
    }

    fn canonicalize(&mut self) {
        self.terms.retain(|_, c| c.abs() > DROP_TOL);
    }

    pub fn space(&self) -> &Arc<VariableSpace> {
        &self.space
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff(&Monomial::one(self.space.nvars()))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn degree_in_block(&self, block: &str) -> usize {
        match self.space.block_range(block) {
            Some(r) => self.terms.keys().map(|m| m.degree_in(r.clone())).max().unwrap_or(0),
            None => 0,
        }
    }

    /// Whether any variable of `block` appears.
    pub fn involves_block(&self, block: &str) -> bool {
        self.degree_in_block(block) > 0
    }

    pub fn involves(&self, i: usize) -> bool {
        self.terms.keys().any(|m| m.exp(i) > 0)
    }

    fn check_space(&self, other: &Polynomial) -> Result<()> {
        if Arc::ptr_eq(&self.space, &other.space) || self.space == other.space {
            Ok(())
        } else {
            structure("polynomials live in different variable spaces")
        }
    }

    pub fn try_add(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_space(other)?;
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            *terms.entry(m.clone()).or_insert(0.0) += c;
        }
        let mut p = Polynomial {
            space: self.space.clone(),
            terms,
        };
        p.canonicalize();
        Ok(p)
    }

    pub fn try_sub(&self, other: &Polynomial) -> Result<Polynomial> {
        self.try_add(&other.scale(-1.0))
    }

    pub fn try_mul(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_space(other)?;
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *terms.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        let mut p = Polynomial {
            space: self.space.clone(),
            terms,
        };
        p.canonicalize();
        Ok(p)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut p = Polynomial {
            space: self.space.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        };
        p.canonicalize();
        p
    }

    pub fn add_constant(&self, c: f64) -> Polynomial {
        self + &Polynomial::constant(&self.space, c)
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(&self.space, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    pub fn differentiate(&self, i: usize) -> Polynomial {
        let n = self.space.nvars();
        assert!(i < n, "variable index out of range");
        let terms = self.terms.iter().filter_map(|(m, c)| {
            let e = m.exp(i);
            if e == 0 {
                return None;
            }
            let mut exps = m.exponents().to_vec();
            exps[i] -= 1;
            Some((Monomial::from_exponents(&exps), c * e as f64))
        });
        Polynomial::from_terms(&self.space, terms)
    }

    /// Evaluates at a dense point indexed like the space's scalars.
    pub fn eval_dense(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(point)).sum()
    }

    /// Evaluates with values given per block name.
    pub fn evaluate(&self, assignment: &HashMap<String, Vec<f64>>) -> Result<f64> {
        let n = self.space.nvars();
        let mut point = vec![f64::NAN; n];
        for b in self.space.blocks() {
            if let Some(vals) = assignment.get(&b.name) {
                if vals.len() != b.dim {
                    return structure(format!(
                        "block {:?} expects {} values, got {}",
                        b.name,
                        b.dim,
                        vals.len()
                    ));
                }
                let r = self.space.block_range(&b.name).unwrap();
                point[r].copy_from_slice(vals);
            }
        }
        for m in self.terms.keys() {
            for (i, _) in m.support() {
                if point[i].is_nan() {
                    return structure(format!(
                        "assignment does not cover variable {}",
                        self.space.scalar_name(i)
                    ));
                }
            }
        }
        Ok(self.eval_dense(&point))
    }

    /// Replaces scalar variables by polynomials in the same space.
    pub fn substitute(&self, bindings: &[(usize, Polynomial)]) -> Result<Polynomial> {
        if bindings.is_empty() {
            return Ok(self.clone());
        }
        let n = self.space.nvars();
        let mut map: Vec<Option<&Polynomial>> = vec![None; n];
        for (i, p) in bindings {
            self.check_space(p)?;
            if *i >= n {
                return structure("substitution index out of range");
            }
            map[*i] = Some(p);
        }
        let mut powers: HashMap<(usize, u8), Polynomial> = HashMap::new();
        let mut out = Polynomial::zero(&self.space);
        for (m, c) in &self.terms {
            let mut kept = Monomial::one(n);
            let mut factor = Polynomial::constant(&self.space, *c);
            let mut exps = kept.exponents().to_vec();
            for (i, e) in m.support() {
                match map[i] {
                    Some(q) => {
                        let qp = powers.entry((i, e)).or_insert_with(|| q.pow(e as u32));
                        factor = &factor * &*qp;
                    }
                    None => exps[i] = e,
                }
            }
            kept = Monomial::from_exponents(&exps);
            let mono = Polynomial::from_terms(&self.space, [(kept, 1.0)]);
            out = &out + &(&factor * &mono);
        }
        Ok(out)
    }

    /// Fixes every variable of `block` to the given values.
    pub fn fix_block(&self, block: &str, values: &[f64]) -> Result<Polynomial> {
        let r = match self.space.block_range(block) {
            Some(r) => r,
            None => return structure(format!("unknown block {block:?}")),
        };
        if r.len() != values.len() {
            return structure(format!("block {block:?} has dimension {}, got {} values", r.len(), values.len()));
        }
        let bindings: Vec<(usize, Polynomial)> = r
            .zip(values)
            .map(|(i, v)| (i, Polynomial::constant(&self.space, *v)))
            .collect();
        self.substitute(&bindings)
    }

    /// Re-expresses the polynomial in another space by matching scalar names.
    pub fn embed(&self, target: &Arc<VariableSpace>) -> Result<Polynomial> {
        let n = target.nvars();
        let mut idx = vec![None; self.space.nvars()];
        for m in self.terms.keys() {
            for (i, _) in m.support() {
                if idx[i].is_none() {
                    let name = self.space.scalar_name(i);
                    idx[i] = Some(target.index(name).ok_or_else(|| {
                        CoreError::Structure(format!("variable {name:?} missing from target space"))
                    })?);
                }
            }
        }
        let terms = self.terms.iter().map(|(m, c)| {
            let mut exps = vec![0u8; n];
            for (i, e) in m.support() {
                exps[idx[i].unwrap()] += e;
            }
            (Monomial::from_exponents(&exps), *c)
        });
        Ok(Polynomial::from_terms(target, terms))
    }

    /// Bounds of the polynomial over the box `lo ≤ y ≤ hi` by interval
    /// arithmetic on each monomial.
    pub fn interval_bounds(&self, lo: &[f64], hi: &[f64]) -> (f64, f64) {
        let mut acc = (0.0, 0.0);
        for (m, c) in &self.terms {
            let mut iv = (1.0f64, 1.0f64);
            for (i, e) in m.support() {
                let p = interval_pow(lo[i], hi[i], e as i32);
                let cands = [iv.0 * p.0, iv.0 * p.1, iv.1 * p.0, iv.1 * p.1];
                iv = (
                    cands.iter().copied().fold(f64::INFINITY, f64::min),
                    cands.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                );
            }
            let t = if *c >= 0.0 { (c * iv.0, c * iv.1) } else { (c * iv.1, c * iv.0) };
            acc = (acc.0 + t.0, acc.1 + t.1);
        }
        acc
    }

    /// Max coefficient magnitude of `self − other`.
    pub fn max_coeff_diff(&self, other: &Polynomial) -> f64 {
        let mut keys: Vec<&Monomial> = self.terms.keys().collect();
        keys.extend(other.terms.keys());
        keys.iter().map(|m| (self.coeff(m) - other.coeff(m)).abs()).fold(0.0, f64::max)
    }

    pub fn parse(space: &Arc<VariableSpace>, text: &str) -> Result<Polynomial> {
        super::parse::parse(space, text)
    }

    /// Canonical text form, e.g. `1.0 - 2.0 * x1^2*u^1`.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

fn interval_pow(lo: f64, hi: f64, e: i32) -> (f64, f64) {
    let a = lo.powi(e);
    let b = hi.powi(e);
    if e % 2 == 0 && lo <= 0.0 && hi >= 0.0 {
        (0.0, a.max(b))
    } else {
        (a.min(b), a.max(b))
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0.0");
        }
        for (k, (m, c)) in self.terms.iter().enumerate() {
            let mag = c.abs();
            if k == 0 {
                if *c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
            }
            write!(f, "{mag:?}")?;
            if !m.is_one() {
                write!(f, " * ")?;
                for (j, (i, e)) in m.support().enumerate() {
                    if j > 0 {
                        write!(f, "*")?;
                    }
                    write!(f, "{}^{}", self.space.scalar_name(i), e)?;
                }
            }
        }
        Ok(())
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $try:ident) => {
        impl $tr<&Polynomial> for &Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                self.$try(rhs).expect("polynomials live in different variable spaces")
            }
        }
        impl $tr<Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: Polynomial) -> Polynomial {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                (&self).$method(rhs)
            }
        }
    };
}

binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);

impl Mul<f64> for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: f64) -> Polynomial {
        self.scale(rhs)
    }
}

impl Mul<f64> for Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: f64) -> Polynomial {
        self.scale(rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> Arc<VariableSpace> {
        VariableSpace::new(&[("x", 2), ("u", 1), ("t", 1)]).unwrap()
    }

    fn p(s: &Arc<VariableSpace>, t: &str) -> Polynomial {
        Polynomial::parse(s, t).unwrap()
    }

    #[test]
    fn difference_of_squares() {
        let s = space();
        let a = p(&s, "x1 + 1");
        let b = p(&s, "x1 - 1");
        assert_eq!(&a * &b, p(&s, "x1^2 - 1"));
    }

    #[test]
    fn additive_inverse_and_identity() {
        let s = space();
        let b = p(&s, "t - x1^2 - x2^2");
        assert!((&b + &(&b * -1.0)).is_zero());
        assert_eq!(&b * &Polynomial::constant(&s, 1.0), b);
    }

    #[test]
    fn mismatched_spaces_are_rejected() {
        let s = space();
        let other = VariableSpace::new(&[("x", 3)]).unwrap();
        let a = p(&s, "x1");
        let b = Polynomial::parse(&other, "x1").unwrap();
        assert!(matches!(a.try_add(&b), Err(CoreError::Structure(_))));
    }

    #[test]
    fn derivatives() {
        let s = space();
        let b = p(&s, "t - x1^2 - x2^2");
        assert_eq!(b.differentiate(0), p(&s, "-2*x1"));
        assert!(Polynomial::constant(&s, 5.0).differentiate(1).is_zero());
        assert_eq!(p(&s, "u^2 - 25").differentiate(2), p(&s, "2*u"));
    }

    #[test]
    fn evaluation() {
        let s = space();
        let b = p(&s, "t - x1^2 - x2^2");
        let a: HashMap<String, Vec<f64>> =
            [("t".to_string(), vec![0.1]), ("x".to_string(), vec![0.0, 0.3162])].into();
        let v = b.evaluate(&a).unwrap();
        assert!(v > 0.0 && v < 2e-5, "{v}");
        assert_eq!(Polynomial::zero(&s).evaluate(&HashMap::new()).unwrap(), 0.0);
        let lf = p(&s, "-x2^2*(1 - x2^2)");
        let a2: HashMap<String, Vec<f64>> = [("x".to_string(), vec![0.0, 0.1f64.sqrt()])].into();
        assert!((lf.evaluate(&a2).unwrap() + 0.09).abs() < 1e-12);
        assert!(b.evaluate(&a2).is_err());
    }

    #[test]
    fn substitution() {
        let s = space();
        let b = p(&s, "t - x1^2 - x2^2");
        let fixed = b.fix_block("t", &[1.1]).unwrap();
        assert_eq!(fixed, p(&s, "1.1 - x1^2 - x2^2"));
        assert!(!fixed.involves_block("t"));
        assert_eq!(b.substitute(&[]).unwrap(), b);
        assert_eq!(b.substitute(&[(0, Polynomial::var(&s, 0))]).unwrap(), b);
    }

    #[test]
    fn text_form() {
        let s = space();
        let q = p(&s, "1 - 2*x1^2*u");
        assert_eq!(q.to_string(), "1.0 - 2.0 * x1^2*u^1");
        assert_eq!(p(&s, &q.to_string()), q);
        assert_eq!(Polynomial::zero(&s).to_string(), "0.0");
    }

    #[test]
    fn interval_bounds_enclose() {
        let s = space();
        let q = p(&s, "-2*x1*x2 + x1^2");
        let (lo, hi) = q.interval_bounds(&[-1.0, -2.0, 0.0, 0.0], &[1.0, 2.0, 0.0, 0.0]);
        assert_eq!((lo, hi), (-4.0, 5.0));
    }

    #[test]
    fn embed_by_name() {
        let s = space();
        let small = VariableSpace::new(&[("x", 2)]).unwrap();
        let q = Polynomial::parse(&small, "x2^2 - x1").unwrap();
        assert_eq!(q.embed(&s).unwrap(), p(&s, "x2^2 - x1"));
        assert!(p(&s, "u").embed(&small).is_err());
    }
}
