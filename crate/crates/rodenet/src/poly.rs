//! Sparse multivariate polynomials as maps from exponent multi-indices to
//! coefficients.
//!
//! Keys are ordered graded-lexicographically: lower total degree first, ties
//! broken so that earlier variables sort first (1, x1, x2, x3, x1^2, x1 x2,
//! ...). Canonical form never stores a zero coefficient.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Exponent multi-index of one monomial, length = number of variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// The constant monomial in `d` variables.
    pub fn one(d: usize) -> Self {
        Monomial(vec![0; d])
    }

    /// The monomial `x_i` (zero-based) in `d` variables.
    pub fn var(d: usize, i: usize) -> Self {
        let mut e = vec![0; d];
        e[i] = 1;
        Monomial(e)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (i, &e) in self.0.iter().enumerate() {
            acc *= x[i].powi(e as i32);
        }
        acc
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            // Higher exponent on an earlier variable sorts first within a
            // degree class, giving x1^2 < x1 x2 < x2^2.
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.total_degree() == 0 {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, " ")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, e)?;
            }
        }
        Ok(())
    }
}

/// A polynomial in `d` variables; the output of expanding a symbolic network.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialExpr {
    d: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl PolynomialExpr {
    pub fn zero(d: usize) -> Self {
        Self {
            d,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(d: usize, c: f64) -> Self {
        let mut p = Self::zero(d);
        p.add_term(Monomial::one(d), c);
        p
    }

    /// The variable `x_i` (zero-based).
    pub fn variable(d: usize, i: usize) -> Self {
        let mut p = Self::zero(d);
        p.add_term(Monomial::var(d, i), 1.0);
        p
    }

    pub fn num_vars(&self) -> usize {
        self.d
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::total_degree).max().unwrap_or(0)
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Iterate terms in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    /// Add `c` to the coefficient of `m`, keeping canonical form.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        assert_eq!(m.0.len(), self.d, "monomial arity mismatch");
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == 0.0 {
                    e.remove();
                }
            }
            Entry::Vacant(e) => {
                if c != 0.0 {
                    e.insert(c);
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d);
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::zero(self.d);
        if c == 0.0 {
            return out;
        }
        for (m, v) in self.terms() {
            out.terms.insert(m.clone(), c * v);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d);
        let mut out = Self::zero(self.d);
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                let exps: Vec<u32> = ma.0.iter().zip(&mb.0).map(|(a, b)| a + b).collect();
                out.add_term(Monomial(exps), ca * cb);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.d, "evaluation point arity mismatch");
        let mut acc = 0.0;
        for (m, c) in self.terms() {
            acc += c * m.eval(x);
        }
        acc
    }

    /// Drop terms with |coefficient| < tol. A tolerance of 0 keeps everything
    /// (exact zeros are never stored).
    pub fn prune(&self, tol: f64) -> Self {
        let mut out = Self::zero(self.d);
        for (m, c) in self.terms() {
            if c.abs() >= tol && c != 0.0 {
                out.terms.insert(m.clone(), c);
            }
        }
        out
    }

    /// Coefficients on an explicit monomial basis (absent terms read as 0).
    pub fn coefficients_on(&self, basis: &[Monomial]) -> Vec<f64> {
        basis.iter().map(|m| self.coefficient(m)).collect()
    }

    /// Human-readable expression, small coefficients suppressed for display.
    pub fn display_with_threshold(&self, tol: f64) -> String {
        let mut parts = Vec::new();
        for (m, c) in self.terms() {
            if c.abs() < tol {
                continue;
            }
            parts.push(format!("{c:+.4} {m}"));
        }
        if parts.is_empty() {
            "0".to_string()
        } else {
            parts.join(" ")
        }
    }
}

/// All monomials in `d` variables with total degree <= `max_degree`, in
/// graded-lex order.
pub fn monomial_basis(d: usize, max_degree: u32) -> Vec<Monomial> {
    let mut all = Vec::new();
    let mut current = vec![0u32; d];
    gen_rec(d, max_degree, 0, &mut current, &mut all);
    all.sort();
    all
}

fn gen_rec(d: usize, max_degree: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    if pos == d {
        out.push(Monomial(current.clone()));
        return;
    }
    let used: u32 = current[..pos].iter().sum();
    for e in 0..=(max_degree - used) {
        current[pos] = e;
        gen_rec(d, max_degree, pos + 1, current, out);
    }
    current[pos] = 0;
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    exps: Vec<u32>,
    coef: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyJson {
    terms: Vec<TermJson>,
}

impl Serialize for PolynomialExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let terms = self
            .terms()
            .map(|(m, c)| TermJson {
                exps: m.0.clone(),
                coef: c,
            })
            .collect();
        PolyJson { terms }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PolynomialExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = PolyJson::deserialize(deserializer)?;
        let d = raw
            .terms
            .first()
            .map(|t| t.exps.len())
            .ok_or_else(|| D::Error::custom("cannot infer arity of empty polynomial"));
        // An empty term list is a valid zero polynomial only when arity is
        // recoverable; default to 3 variables, the crate's working dimension.
        let d = d.unwrap_or(3);
        let mut p = PolynomialExpr::zero(d);
        for t in raw.terms {
            if t.exps.len() != d {
                return Err(D::Error::custom("inconsistent exponent arity"));
            }
            p.add_term(Monomial(t.exps), t.coef);
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_ordering() {
        let basis = monomial_basis(3, 2);
        let strings: Vec<String> = basis.iter().map(|m| m.to_string()).collect();
        assert_eq!(
            strings,
            vec!["1", "x1", "x2", "x3", "x1^2", "x1 x2", "x1 x3", "x2^2", "x2 x3", "x3^2"]
        );
    }

    #[test]
    fn basis_count_degree_4_in_3_vars() {
        // C(3 + 4, 4) = 35
        assert_eq!(monomial_basis(3, 4).len(), 35);
    }

    #[test]
    fn arithmetic_and_eval_agree() {
        // (x1 + 2)(x2 - x1) = x1 x2 - x1^2 + 2 x2 - 2 x1
        let d = 2;
        let x1 = PolynomialExpr::variable(d, 0);
        let x2 = PolynomialExpr::variable(d, 1);
        let two = PolynomialExpr::constant(d, 2.0);
        let p = x1.add(&two).mul(&x2.sub(&x1));
        let at = [1.5, -0.5];
        let direct = (1.5 + 2.0) * (-0.5 - 1.5);
        assert!((p.eval(&at) - direct).abs() < 1e-12);
        assert_eq!(p.num_terms(), 4);
    }

    #[test]
    fn cancellation_keeps_canonical_form() {
        let d = 2;
        let x1 = PolynomialExpr::variable(d, 0);
        let p = x1.sub(&x1);
        assert!(p.is_zero());
        assert_eq!(p.num_terms(), 0);
    }

    #[test]
    fn json_round_trip_in_graded_lex_order() {
        let d = 3;
        let mut p = PolynomialExpr::zero(d);
        p.add_term(Monomial(vec![1, 1, 0]), 1.0);
        p.add_term(Monomial(vec![0, 0, 1]), -0.5);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"terms":[{"exps":[0,0,1],"coef":-0.5},{"exps":[1,1,0],"coef":1.0}]}"#);
        let back: PolynomialExpr = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
