//! Exponential polynomials `sum c t^p e^{mu t}` with `Re mu <= 0`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::quad::Majorant;
use super::sup::{sup_weighted, TailTerm};
use super::Weight;
use crate::error::{Error, Result};

/// Relative tolerance used when deciding that two exponents coincide.
pub const EXPONENT_TOL: f64 = 1e-12;

/// One term `coeff * t^power * exp(exponent * t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub coeff: Complex64,
    pub power: u32,
    pub exponent: Complex64,
}

/// Finite exponential polynomial, kept merged and sorted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ExpTerm>", into = "Vec<ExpTerm>")]
pub struct ExpPoly {
    terms: Vec<ExpTerm>,
}

impl TryFrom<Vec<ExpTerm>> for ExpPoly {
    type Error = Error;
    fn try_from(terms: Vec<ExpTerm>) -> Result<Self> {
        ExpPoly::new(terms)
    }
}

impl From<ExpPoly> for Vec<ExpTerm> {
    fn from(p: ExpPoly) -> Self {
        p.terms
    }
}

fn same_exponent(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= EXPONENT_TOL * a.norm().max(b.norm()).max(1.0)
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn falling(p: u32, j: u32) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (p - i) as f64)
}

impl ExpPoly {
    /// Builds an exponential polynomial, rejecting growing exponents.
    pub fn new(terms: Vec<ExpTerm>) -> Result<Self> {
        for t in &terms {
            if !(t.coeff.re.is_finite() && t.coeff.im.is_finite()) {
                return Err(Error::InvalidTimeFn("non-finite coefficient".into()));
            }
            if t.exponent.re > EXPONENT_TOL * t.exponent.norm().max(1.0) {
                return Err(Error::InvalidTimeFn(format!(
                    "growing exponent {} (Re mu must be <= 0)",
                    t.exponent
                )));
            }
        }
        Ok(Self::from_terms_unchecked(terms))
    }

    pub(crate) fn from_terms_unchecked(mut terms: Vec<ExpTerm>) -> Self {
        for t in &mut terms {
            if t.exponent.re > 0.0 {
                t.exponent.re = 0.0;
            }
        }
        terms.sort_by(|a, b| {
            a.power
                .cmp(&b.power)
                .then(a.exponent.re.total_cmp(&b.exponent.re))
                .then(a.exponent.im.total_cmp(&b.exponent.im))
        });
        let mut merged: Vec<ExpTerm> = Vec::with_capacity(terms.len());
        for t in terms {
            if let Some(m) = merged
                .iter_mut()
                .rev()
                .take_while(|m| m.power == t.power)
                .find(|m| same_exponent(m.exponent, t.exponent))
            {
                m.coeff += t.coeff;
            } else {
                merged.push(t);
            }
        }
        merged.retain(|t| t.coeff != Complex64::new(0.0, 0.0));
        Self { terms: merged }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// `c` as a constant function.
    pub fn constant(c: Complex64) -> Self {
        Self::from_terms_unchecked(vec![ExpTerm {
            coeff: c,
            power: 0,
            exponent: Complex64::new(0.0, 0.0),
        }])
    }

    /// `c * t^p * e^{mu t}`.
    pub fn term(c: Complex64, power: u32, exponent: Complex64) -> Result<Self> {
        Self::new(vec![ExpTerm {
            coeff: c,
            power,
            exponent,
        }])
    }

    /// `c * e^{-rate t}`.
    pub fn decaying(c: f64, rate: f64) -> Self {
        Self::from_terms_unchecked(vec![ExpTerm {
            coeff: Complex64::new(c, 0.0),
            power: 0,
            exponent: Complex64::new(-rate, 0.0),
        }])
    }

    pub fn terms(&self) -> &[ExpTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|term| {
                let poly = if term.power == 0 {
                    1.0
                } else {
                    t.powi(term.power as i32)
                };
                term.coeff * poly * (term.exponent * t).exp()
            })
            .sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self::from_terms_unchecked(terms)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        if c == Complex64::new(0.0, 0.0) {
            return Self::zero();
        }
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| ExpTerm {
                    coeff: t.coeff * c,
                    ..*t
                })
                .collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.len() * other.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(ExpTerm {
                    coeff: a.coeff * b.coeff,
                    power: a.power + b.power,
                    exponent: a.exponent + b.exponent,
                });
            }
        }
        Self::from_terms_unchecked(terms)
    }

    pub fn conj(&self) -> Self {
        Self::from_terms_unchecked(
            self.terms
                .iter()
                .map(|t| ExpTerm {
                    coeff: t.coeff.conj(),
                    power: t.power,
                    exponent: t.exponent.conj(),
                })
                .collect(),
        )
    }

    pub fn derivative(&self) -> Self {
        let mut terms = Vec::with_capacity(2 * self.len());
        for t in &self.terms {
            if t.power > 0 {
                terms.push(ExpTerm {
                    coeff: t.coeff * t.power as f64,
                    power: t.power - 1,
                    exponent: t.exponent,
                });
            }
            terms.push(ExpTerm {
                coeff: t.coeff * t.exponent,
                ..*t
            });
        }
        Self::from_terms_unchecked(terms)
    }

    /// Multiplies by `e^{shift t}`; the caller guarantees the result decays or oscillates.
    pub(crate) fn shift_exponents(&self, shift: Complex64) -> Self {
        Self::from_terms_unchecked(
            self.terms
                .iter()
                .map(|t| ExpTerm {
                    exponent: t.exponent + shift,
                    ..*t
                })
                .collect(),
        )
    }

    /// Re-expands `s -> f(s + delta)`.
    pub fn translate(&self, delta: f64) -> Self {
        let mut terms = Vec::new();
        for t in &self.terms {
            let base = t.coeff * (t.exponent * delta).exp();
            for q in 0..=t.power {
                let c = base * binomial(t.power, q) * delta.powi((t.power - q) as i32);
                terms.push(ExpTerm {
                    coeff: c,
                    power: q,
                    exponent: t.exponent,
                });
            }
        }
        Self::from_terms_unchecked(terms)
    }

    /// Antiderivative `P` with `P' = f`, using `e^{nu t}` closed forms.
    ///
    /// Terms with zero exponent integrate to polynomials; `P(0)` is not normalised.
    pub(crate) fn antiderivative(&self) -> Self {
        let mut terms = Vec::new();
        for t in &self.terms {
            if t.exponent.norm() <= EXPONENT_TOL {
                terms.push(ExpTerm {
                    coeff: t.coeff / (t.power + 1) as f64,
                    power: t.power + 1,
                    exponent: t.exponent,
                });
                continue;
            }
            let nu = t.exponent;
            let mut nu_pow = nu;
            for j in 0..=t.power {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                terms.push(ExpTerm {
                    coeff: t.coeff * (sign * falling(t.power, j)) / nu_pow,
                    power: t.power - j,
                    exponent: nu,
                });
                nu_pow *= nu;
            }
        }
        Self::from_terms_unchecked(terms)
    }

    /// `c(t) = -int_t^inf e^{i lambda (s-t)} f(s) ds`, the decaying solution of
    /// `c' + i lambda c = f`.
    pub fn oscillatory_tail(&self, lambda: f64) -> Result<Self> {
        let shift = Complex64::new(0.0, lambda);
        for t in &self.terms {
            if t.exponent.re >= 0.0 {
                return Err(Error::TailDiverges(format!(
                    "term t^{} e^({} t) does not decay",
                    t.power, t.exponent
                )));
            }
        }
        // e^{-i lambda t} P(t) where P' = e^{i lambda s} f(s) and P(inf) = 0
        Ok(self
            .shift_exponents(shift)
            .antiderivative()
            .shift_exponents(-shift))
    }

    /// Largest rate `a` with `sup |f| e^{a t} < inf`, and whether it is attained.
    pub fn max_rate(&self) -> (f64, bool) {
        let mut best = f64::INFINITY;
        let mut attained = true;
        for t in &self.terms {
            let b = -t.exponent.re;
            if b < best - 1e-15 {
                best = b;
                attained = t.power == 0;
            } else if (b - best).abs() <= 1e-15 && t.power > 0 {
                attained = false;
            }
        }
        (best, attained)
    }

    /// Smallest `M` with `|f(t)| <= M / w(t)` for the weight `w`.
    pub fn certify(&self, weight: Weight) -> Result<f64> {
        if self.is_empty() {
            return Ok(0.0);
        }
        let mut tails = Vec::with_capacity(self.len());
        for t in &self.terms {
            let (decay, extra_power) = match weight {
                Weight::Exp { rate } => (-t.exponent.re - rate, 0),
                Weight::Power { power } => (-t.exponent.re, power),
            };
            let tol = EXPONENT_TOL * t.exponent.norm().max(1.0);
            let persistent = decay.abs() <= tol;
            if decay < -tol || (persistent && (t.power > 0 || extra_power > 0)) {
                let (max, _) = self.max_rate();
                return Err(Error::RateTooLarge {
                    requested: match weight {
                        Weight::Exp { rate } => rate,
                        Weight::Power { power } => power as f64,
                    },
                    max,
                });
            }
            tails.push(TailTerm {
                amplitude: t.coeff.norm(),
                power: t.power + extra_power,
                decay: if persistent { 0.0 } else { decay },
                frequency: t.exponent.im,
            });
        }
        let value = |t: f64| self.eval(t).norm() * weight.factor(t);
        Ok(sup_weighted(&value, &tails))
    }

    /// Crude majorant of `sup_t |f(t)|`.
    pub fn sup_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let b = -t.exponent.re;
                let peak = if t.power == 0 {
                    1.0
                } else if b <= 0.0 {
                    f64::INFINITY
                } else {
                    let tp = t.power as f64 / b;
                    tp.powi(t.power as i32) * (-b * tp).exp()
                };
                t.coeff.norm() * peak
            })
            .sum()
    }

    /// Limit as `t -> inf`, if it exists.
    pub fn limit_at_infinity(&self) -> Option<Complex64> {
        let mut limit = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            if t.exponent.re < 0.0 {
                continue;
            }
            if t.power > 0 || t.exponent.im != 0.0 {
                return None;
            }
            limit += t.coeff;
        }
        Some(limit)
    }

    /// Single-rate exponential majorant.
    pub fn majorant(&self) -> Majorant {
        let (b, attained) = self.max_rate();
        let rate = if !b.is_finite() {
            0.0
        } else if attained {
            b
        } else {
            0.5 * b
        };
        let amplitude = self
            .terms
            .iter()
            .map(|t| {
                let gap = -t.exponent.re - rate;
                let peak = if t.power == 0 {
                    1.0
                } else {
                    let tp = t.power as f64 / gap;
                    tp.powi(t.power as i32) * (-gap * tp).exp()
                };
                t.coeff.norm() * peak
            })
            .sum();
        Majorant {
            amplitude,
            weight: Weight::Exp { rate },
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.norm()).fold(0.0, f64::max)
    }

    /// Drops terms with `|c| < threshold`, returning the dropped majorant.
    pub fn prune(&mut self, threshold: f64) -> f64 {
        let mut dropped = 0.0;
        self.terms.retain(|t| {
            let keep = t.coeff.norm() >= threshold;
            if !keep {
                dropped += t.coeff.norm();
            }
            keep
        });
        dropped
    }

    /// True when both sides agree term by term within a relative tolerance.
    pub fn approx_eq(&self, other: &Self, rel: f64) -> bool {
        let diff = self.add(&other.scale(Complex64::new(-1.0, 0.0)));
        let scale = self.max_abs_coeff().max(other.max_abs_coeff());
        diff.max_abs_coeff() <= rel * scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn product_adds_exponents() {
        let e = ExpPoly::decaying(1.0, 1.0);
        assert_eq!(e.mul(&e), ExpPoly::decaying(1.0, 2.0));
        let te = ExpPoly::term(c(1.0, 0.0), 1, c(-1.0, 0.0)).unwrap();
        let prod = te.mul(&ExpPoly::decaying(1.0, 2.0));
        assert_eq!(prod, ExpPoly::term(c(1.0, 0.0), 1, c(-3.0, 0.0)).unwrap());
    }

    #[test]
    fn derivative_product_rule() {
        let a = 0.7;
        assert_eq!(ExpPoly::decaying(1.0, a).derivative(), ExpPoly::decaying(-a, a));
        let te = ExpPoly::term(c(1.0, 0.0), 1, c(-1.0, 0.0)).unwrap();
        let expected = ExpPoly::decaying(1.0, 1.0).add(&te.scale(c(-1.0, 0.0)));
        assert_eq!(te.derivative(), expected);
    }

    #[test]
    fn rejects_growth() {
        assert!(ExpPoly::term(c(1.0, 0.0), 0, c(0.1, 0.0)).is_err());
    }

    #[test]
    fn merges_equal_exponents() {
        let p = ExpPoly::decaying(1.0, 0.3).add(&ExpPoly::decaying(2.0, 0.3));
        assert_eq!(p.len(), 1);
        assert_eq!(p.terms()[0].coeff, c(3.0, 0.0));
        let z = ExpPoly::decaying(1.0, 0.3).add(&ExpPoly::decaying(-1.0, 0.3));
        assert!(z.is_empty());
    }

    #[test]
    fn tail_of_exponential() {
        let a = 0.4;
        let tail = ExpPoly::decaying(1.0, a).oscillatory_tail(0.0).unwrap();
        for &t in &[0.0, 1.0, 7.5] {
            let expect = -(-a * t).exp() / a;
            assert!((tail.eval(t).re - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn tail_of_polynomial_term_solves_ode() {
        let f = ExpPoly::term(c(0.3, -1.0), 3, c(-0.5, 2.0)).unwrap();
        let lam = -1.3;
        let tail = f.oscillatory_tail(lam).unwrap();
        let resid = tail.derivative().add(&tail.scale(c(0.0, lam))).add(&f.scale(c(-1.0, 0.0)));
        for &t in &[0.0, 0.5, 3.0, 11.0] {
            assert!(resid.eval(t).norm() < 1e-13, "{}", resid.eval(t));
        }
    }

    #[test]
    fn tail_of_nondecaying_fails() {
        assert!(ExpPoly::constant(c(1.0, 0.0)).oscillatory_tail(1.0).is_err());
    }

    #[test]
    fn translate_matches_shifted_eval() {
        let f = ExpPoly::term(c(1.0, 0.5), 2, c(-0.2, 1.0)).unwrap();
        let g = f.translate(1.7);
        for &s in &[0.0, 0.3, 2.2] {
            assert!((g.eval(s) - f.eval(s + 1.7)).norm() < 1e-13);
        }
    }

    #[test]
    fn certify_t_exp() {
        let (cc, a, ap) = (2.5, 0.6, 0.25);
        let f = ExpPoly::term(c(cc, 0.0), 1, c(-a, 0.0)).unwrap();
        let m = f.certify(Weight::Exp { rate: ap }).unwrap();
        let expect = cc / (std::f64::consts::E * (a - ap));
        assert!((m - expect).abs() < 1e-12 * expect, "{m} vs {expect}");
        // dense sampling cross-check
        let sampled = (0..200_000)
            .map(|i| i as f64 * 1e-3)
            .map(|t| f.eval(t).norm() * (ap * t).exp())
            .fold(0.0, f64::max);
        assert!(sampled <= m * (1.0 + 1e-12) && sampled > m * (1.0 - 1e-6));
    }

    #[test]
    fn certify_rate_limits() {
        let f = ExpPoly::decaying(1.0, 0.5);
        assert!((f.certify(Weight::Exp { rate: 0.5 }).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            f.certify(Weight::Exp { rate: 0.6 }),
            Err(Error::RateTooLarge { .. })
        ));
        let g = ExpPoly::term(c(1.0, 0.0), 1, c(-0.5, 0.0)).unwrap();
        assert!(g.certify(Weight::Exp { rate: 0.5 }).is_err());
    }
}
