//! Sparse multivariate polynomials over the rationals.
//!
//! Used to push monomials through affine changes of variables when computing
//! exact moments over simplices and facet charts.

use super::rational::{qi, Q};
use num::{One, Zero};
use std::collections::BTreeMap;

/// Monomial exponent vector.
pub type Expo = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QPoly {
    pub nvars: usize,
    pub terms: BTreeMap<Expo, Q>,
}

impl QPoly {
    pub fn zero(nvars: usize) -> Self {
        QPoly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Q) -> Self {
        let mut p = Self::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn monomial(nvars: usize, expo: Expo, c: Q) -> Self {
        assert_eq!(expo.len(), nvars);
        let mut p = Self::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(expo, c);
        }
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(nvars, e, qi(1))
    }

    /// Affine polynomial c0 + <grad, x>.
    pub fn affine(nvars: usize, c0: Q, grad: &[Q]) -> Self {
        let mut p = Self::constant(nvars, c0);
        for (i, g) in grad.iter().enumerate() {
            p = p.add(&Self::monomial(nvars, {
                let mut e = vec![0; nvars];
                e[i] = 1;
                e
            }, g.clone()));
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    fn insert(&mut self, e: Expo, c: Q) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let v = o.get() + &c;
                if v.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn add(&self, other: &QPoly) -> QPoly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert(e.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> QPoly {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -c.clone();
        }
        out
    }

    pub fn mul(&self, other: &QPoly) -> QPoly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = QPoly::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Expo = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.insert(e, c1 * c2);
            }
        }
        out
    }

    pub fn scale(&self, s: &Q) -> QPoly {
        let mut out = QPoly::zero(self.nvars);
        for (e, c) in &self.terms {
            out.insert(e.clone(), c * s);
        }
        out
    }

    pub fn pow(&self, mut k: u32) -> QPoly {
        let mut base = self.clone();
        let mut acc = QPoly::constant(self.nvars, qi(1));
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    pub fn eval(&self, x: &[Q]) -> Q {
        assert_eq!(x.len(), self.nvars);
        let mut acc = Q::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (i, &p) in e.iter().enumerate() {
                for _ in 0..p {
                    t *= &x[i];
                }
            }
            acc += t;
        }
        acc
    }

    /// Partial derivative with respect to variable `i`.
    pub fn diff(&self, i: usize) -> QPoly {
        let mut out = QPoly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            out.insert(e2, c * qi(e[i] as i64));
        }
        out
    }

    /// Directional derivative <grad ., e>.
    pub fn diff_dir(&self, dir: &[Q]) -> QPoly {
        let mut out = QPoly::zero(self.nvars);
        for (i, d) in dir.iter().enumerate() {
            if !d.is_zero() {
                out = out.add(&self.diff(i).scale(d));
            }
        }
        out
    }

    /// Substitute x_i = subs[i], where each subs[i] is a polynomial in the
    /// target variable set. Used for affine chart composition.
    pub fn compose(&self, subs: &[QPoly]) -> QPoly {
        assert_eq!(subs.len(), self.nvars);
        let target_vars = if subs.is_empty() { 0 } else { subs[0].nvars };
        let mut out = QPoly::zero(target_vars);
        for (e, c) in &self.terms {
            let mut term = QPoly::constant(target_vars, c.clone());
            for (i, &p) in e.iter().enumerate() {
                if p > 0 {
                    term = term.mul(&subs[i].pow(p));
                }
            }
            out = out.add(&term);
        }
        out
    }
}

impl One for QPoly {
    fn one() -> Self {
        QPoly::constant(0, qi(1))
    }
}

impl Zero for QPoly {
    fn zero() -> Self {
        QPoly::zero(0)
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

impl std::ops::Add for QPoly {
    type Output = QPoly;
    fn add(self, rhs: QPoly) -> QPoly {
        QPoly::add(&self, &rhs)
    }
}

impl std::ops::Mul for QPoly {
    type Output = QPoly;
    fn mul(self, rhs: QPoly) -> QPoly {
        QPoly::mul(&self, &rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rational::q;

    #[test]
    fn arithmetic_and_eval() {
        let x = QPoly::var(2, 0);
        let y = QPoly::var(2, 1);
        let p = x.clone().mul(&x).add(&y.scale(&qi(3))); // x^2 + 3y
        assert_eq!(p.eval(&[qi(2), qi(5)]), qi(19));
        assert_eq!(p.degree(), 2);
        assert_eq!(p.diff(0).eval(&[qi(2), qi(5)]), qi(4));
        assert_eq!(p.diff(1).eval(&[qi(0), qi(0)]), qi(3));
    }

    #[test]
    fn compose_affine() {
        // p(x) = x^2, x = 1 + 2t  =>  1 + 4t + 4t^2
        let p = QPoly::monomial(1, vec![2], qi(1));
        let sub = QPoly::affine(1, qi(1), &[qi(2)]);
        let c = p.compose(&[sub]);
        assert_eq!(c.eval(&[q(1, 2)]), qi(4));
        assert_eq!(c.degree(), 2);
    }
}
