//! Exact-rational combinatorics of the travel-time expansion near a strictly
//! convex boundary direction.
//!
//! Terms are `R^{j,k}` with a coefficient `c·K^d`; the derivation operator acts
//! by `V(R^{j,k}) = jK·R^{j−1,k} + R^{j+1,k+1}`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn fact_q(n: u32) -> Rational {
    Rational::from_integer(factorial(n))
}

/// `Σ_{j=0}^{m−1} (−1)^j / ((m+j)(m+j+1)(m−j−1)! j!)`.
pub fn series_sum(m: u32) -> Result<Rational> {
    if m == 0 {
        return Err(Error::InvalidParameter("series index must be at least 1".into()));
    }
    let mut s = Rational::zero();
    for j in 0..m {
        let den = Rational::from_integer(BigInt::from((m + j) as u64 * (m + j + 1) as u64))
            * fact_q(m - j - 1)
            * fact_q(j);
        let term = den.recip();
        if j % 2 == 0 {
            s += term;
        } else {
            s -= term;
        }
    }
    Ok(s)
}

/// `m!/(2m)!`.
pub fn series_closed_form(m: u32) -> Rational {
    fact_q(m) / fact_q(2 * m)
}

/// `c·K^d·R^{j,k}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct SymbolicTerm {
    pub j: u32,
    pub k: u32,
    pub d: u32,
    #[serde(serialize_with = "ser_rational")]
    pub coeff: Rational,
}

fn ser_rational<S: serde::Serializer>(q: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&q.to_string())
}

impl fmt::Display for SymbolicTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}·K^{}·R^{{{},{}}}", self.coeff, self.d, self.j, self.k)
    }
}

fn collect(map: BTreeMap<(u32, u32, u32), Rational>) -> Vec<SymbolicTerm> {
    map.into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|((j, k, d), coeff)| SymbolicTerm { j, k, d, coeff })
        .collect()
}

/// `V^l(R^{0,1})` by `l` applications of the derivation rule.
pub fn expansion_recurrence(l: u32) -> Vec<SymbolicTerm> {
    let mut terms: BTreeMap<(u32, u32, u32), Rational> = BTreeMap::new();
    terms.insert((0, 1, 0), Rational::one());
    for _ in 0..l {
        let mut next: BTreeMap<(u32, u32, u32), Rational> = BTreeMap::new();
        for ((j, k, d), c) in terms {
            if j > 0 {
                *next.entry((j - 1, k, d + 1)).or_insert_with(Rational::zero) += &c * int(j as i64);
            }
            *next.entry((j + 1, k + 1, d)).or_insert_with(Rational::zero) += c;
        }
        terms = next;
    }
    collect(terms)
}

/// `Σ_d l!/((l−2d)! d! 2^d) K^d R^{l−2d, 1+l−d}`.
pub fn expansion_closed_form(l: u32) -> Vec<SymbolicTerm> {
    let mut terms = BTreeMap::new();
    for d in 0..=l / 2 {
        let c = fact_q(l) / (fact_q(l - 2 * d) * fact_q(d) * Rational::from_integer(BigInt::from(1u64 << d)));
        terms.insert((l - 2 * d, 1 + l - d, d), c);
    }
    collect(terms)
}

/// Coefficient of `K^d R^{l−2d,·}` in `V^l(R^{0,1})`, read off the recurrence.
pub fn recurrence_coefficient(l: u32, d: u32) -> Rational {
    expansion_recurrence(l)
        .into_iter()
        .find(|t| t.d == d && t.j + 2 * d == l)
        .map(|t| t.coeff)
        .unwrap_or_else(Rational::zero)
}

/// `c·K^p` with symbolic `K` and integer `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KMonomial {
    pub coeff: Rational,
    pub power: i64,
}

impl KMonomial {
    pub fn eval(&self, k: &Rational) -> Result<Rational> {
        if k.is_zero() && self.power < 0 {
            return Err(Error::ConvexityViolation("K = 0".into()));
        }
        let base = if self.power < 0 { k.recip() } else { k.clone() };
        let mut out = self.coeff.clone();
        for _ in 0..self.power.unsigned_abs() {
            out *= &base;
        }
        Ok(out)
    }
}

impl fmt::Display for KMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}·K^{}", self.coeff, self.power)
    }
}

/// Sum of monomials that must share one power of `K`.
fn sum_same_power(terms: &[KMonomial]) -> Result<KMonomial> {
    let power = terms.first().map(|t| t.power).unwrap_or(0);
    if terms.iter().any(|t| t.power != power) {
        return Err(Error::Inconsistency("assembled terms carry different powers of K".into()));
    }
    let coeff = terms.iter().fold(Rational::zero(), |acc, t| acc + &t.coeff);
    Ok(KMonomial { coeff, power })
}

fn pow_signed(base: i64, e: u32) -> Rational {
    int(base).pow(e as i32)
}

/// `½(−2K^{−1})^{m+1}·m!/(2m)!` as a monomial in `K`.
pub fn jet_coefficient_symbolic(m: u32) -> KMonomial {
    KMonomial {
        coeff: ratio(1, 2) * pow_signed(-2, m + 1) * series_closed_form(m),
        power: -((m + 1) as i64),
    }
}

/// The coefficient of `∂_n^m g(v, v)` in the `ε^{2m−1}` term of `τ(ε)`.
pub fn jet_coefficient(m: u32, k: &Rational) -> Result<Rational> {
    if m == 0 {
        return Err(Error::InvalidParameter("jet order must be at least 1".into()));
    }
    if k.is_zero() {
        return Err(Error::ConvexityViolation("K = 0".into()));
    }
    jet_coefficient_symbolic(m).eval(k)
}

/// `Σ_j C_j/(m+j+1)!·(−2K^{−1})^{m+j+1}` with
/// `C_j = ½·[K^j R^{m−j−1,·} coefficient of V^{m+j−1}(R^{0,1})]·K^j`.
pub fn assembled_coefficient(m: u32) -> Result<KMonomial> {
    if m == 0 {
        return Err(Error::InvalidParameter("jet order must be at least 1".into()));
    }
    let mut terms = Vec::with_capacity(m as usize);
    for j in 0..m {
        let c_j = ratio(1, 2) * recurrence_coefficient(m + j - 1, j);
        let e = m + j + 1;
        terms.push(KMonomial {
            coeff: c_j / fact_q(e) * pow_signed(-2, e),
            power: j as i64 - e as i64,
        });
    }
    sum_same_power(&terms)
}

/// The `m = 2` coefficient written out by hand: `(−2K^{−1})³/24`.
pub fn worked_m2() -> KMonomial {
    KMonomial {
        coeff: pow_signed(-2, 3) / int(24),
        power: -3,
    }
}

/// Floating value of a rational.
pub fn to_f64(q: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    q.to_f64().unwrap_or_else(|| {
        if q.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_examples() {
        assert_eq!(series_sum(1).unwrap(), ratio(1, 2));
        assert_eq!(series_sum(2).unwrap(), ratio(1, 12));
        assert_eq!(series_sum(3).unwrap(), ratio(1, 120));
        assert!(series_sum(0).is_err());
    }

    #[test]
    fn recurrence_examples() {
        assert_eq!(
            expansion_recurrence(0),
            vec![SymbolicTerm { j: 0, k: 1, d: 0, coeff: int(1) }]
        );
        let l2 = expansion_recurrence(2);
        assert_eq!(l2.len(), 2);
        assert!(l2.contains(&SymbolicTerm { j: 2, k: 3, d: 0, coeff: int(1) }));
        assert!(l2.contains(&SymbolicTerm { j: 0, k: 2, d: 1, coeff: int(1) }));
        let t = expansion_recurrence(5).into_iter().find(|t| t.j == 1 && t.k == 4).unwrap();
        assert_eq!((t.d, t.coeff), (2, int(15)));
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(jet_coefficient(2, &ratio(-1, 4)).unwrap(), ratio(64, 3));
        assert_eq!(jet_coefficient(2, &int(-1)).unwrap(), ratio(1, 3));
        assert_eq!(jet_coefficient(1, &int(-1)).unwrap(), int(1));
        assert!(matches!(jet_coefficient(2, &int(0)), Err(Error::ConvexityViolation(_))));
        assert_eq!(worked_m2(), jet_coefficient_symbolic(2));
    }
}
