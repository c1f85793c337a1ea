//! Exact polynomials with rational coefficients.
//!
//! Flat-space Killing systems are solved on polynomial ansätze; keeping the
//! coefficients exact means differentiation and the resulting linear
//! constraints carry no rounding at all.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::expr::{self, ScalarField};

/// Exponent vector of a monomial, one entry per coordinate.
pub type Exponents = Vec<u32>;

pub fn degree(exps: &[u32]) -> u32 {
    exps.iter().sum()
}

/// All exponent vectors in `n` variables of total degree `<= max_degree`,
/// ordered by degree and then lexicographically.
pub fn monomials(n: usize, max_degree: u32) -> Vec<Exponents> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        let mut current = vec![0; n];
        fill(&mut out, &mut current, 0, d);
    }
    out
}

fn fill(out: &mut Vec<Exponents>, current: &mut Exponents, var: usize, remaining: u32) {
    let n = current.len();
    if n == 0 {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if var == n - 1 {
        current[var] = remaining;
        out.push(current.clone());
        current[var] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e;
        fill(out, current, var + 1, remaining - e);
    }
    current[var] = 0;
}

/// Number of distinct orderings of the index multiset with exponents `exps`:
/// `q! / prod(e_i!)`.
pub fn multinomial(exps: &[u32]) -> BigInt {
    let mut num = BigInt::one();
    let mut k = 0u32;
    for &e in exps {
        for j in 1..=e {
            k += 1;
            num = num * BigInt::from(k) / BigInt::from(j);
        }
    }
    num
}

#[derive(Clone, PartialEq, Eq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<Exponents, BigRational>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: BigRational) -> Self {
        let mut p = Self::zero(n);
        p.add_term(vec![0; n], c);
        p
    }

    pub fn monomial(exps: Exponents, c: BigRational) -> Self {
        let mut p = Self::zero(exps.len());
        p.add_term(exps, c);
        p
    }

    /// The coordinate function `x{index+1}`.
    pub fn var(n: usize, index: usize) -> Self {
        let mut exps = vec![0; n];
        exps[index] = 1;
        Self::monomial(exps, BigRational::one())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, exps: Exponents, c: BigRational) {
        debug_assert_eq!(exps.len(), self.n);
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(exps).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn coefficient(&self, exps: &[u32]) -> BigRational {
        self.terms.get(exps).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &BigRational)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| degree(e)).max()
    }

    pub fn derivative(&self, var: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (exps, c) in &self.terms {
            if exps[var] == 0 {
                continue;
            }
            let mut e = exps.clone();
            e[var] -= 1;
            out.add_term(e, c * BigRational::from_integer(BigInt::from(exps[var])));
        }
        out
    }

    pub fn scale(&self, factor: &BigRational) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c * factor);
        }
        out
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let m: f64 = e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product();
                expr::rational_to_f64(c) * m
            })
            .sum()
    }

    /// Expression tree for this polynomial, terms in degree order.
    pub fn to_field(&self) -> ScalarField {
        let mut ordered: Vec<_> = self.terms.iter().collect();
        ordered.sort_by(|(a, _), (b, _)| degree(a).cmp(&degree(b)).then_with(|| b.cmp(a)));
        let mut acc: Option<ScalarField> = None;
        for (exps, c) in ordered {
            let mut mono = ScalarField::one(self.n);
            for (i, &k) in exps.iter().enumerate() {
                if k > 0 {
                    mono = mono * ScalarField::var(self.n, i).powi(k as i32);
                }
            }
            acc = Some(match acc {
                None => mono.scale(c),
                Some(a) if c.is_negative() => a - mono.scale(&-c),
                Some(a) => a + mono.scale(c),
            });
        }
        acc.unwrap_or_else(|| ScalarField::zero(self.n))
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial({})", self.to_field())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn monomial_counts() {
        // C(n + d, d) monomials of degree <= d
        assert_eq!(monomials(3, 2).len(), 10);
        assert_eq!(monomials(5, 3).len(), 56);
        assert_eq!(monomials(2, 0), vec![vec![0, 0]]);
        assert_eq!(monomials(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn multinomial_counts_orderings() {
        assert_eq!(multinomial(&[2, 1]), BigInt::from(3));
        assert_eq!(multinomial(&[1, 1, 1]), BigInt::from(6));
        assert_eq!(multinomial(&[0, 0]), BigInt::from(1));
        assert_eq!(multinomial(&[3, 0, 2]), BigInt::from(10));
    }

    #[test]
    fn derivative_and_field_agree() {
        let mut p = Polynomial::zero(2);
        p.add_term(vec![2, 1], q(3, 2));
        p.add_term(vec![0, 1], q(-1, 1));
        p.add_term(vec![0, 0], q(5, 7));
        let f = p.to_field();
        let x = [0.4, -1.1];
        assert!((f.eval(&x).unwrap() - p.eval(&x)).abs() < 1e-15);
        let d = p.derivative(0);
        assert_eq!(d.coefficient(&[1, 1]), q(3, 1));
        assert!((f.diff(1).eval(&x).unwrap() - p.derivative(1).eval(&x)).abs() < 1e-15);
    }

    #[test]
    fn cancelling_terms_vanish() {
        let mut p = Polynomial::var(3, 1);
        p.add_term(vec![0, 1, 0], q(-1, 1));
        assert!(p.is_zero());
        assert!(p.to_field().is_zero());
    }
}
