//! Rational decay `sum c (t+1)^{-m}`, `m >= 1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::quad::{Majorant, QuadFn};
use super::sup::sup_interval;
use super::Weight;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalTerm {
    pub coeff: Complex64,
    pub order: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RationalTerm>", into = "Vec<RationalTerm>")]
pub struct RationalDecay {
    terms: Vec<RationalTerm>,
}

impl TryFrom<Vec<RationalTerm>> for RationalDecay {
    type Error = Error;
    fn try_from(terms: Vec<RationalTerm>) -> Result<Self> {
        RationalDecay::new(terms)
    }
}

impl From<RationalDecay> for Vec<RationalTerm> {
    fn from(r: RationalDecay) -> Self {
        r.terms
    }
}

impl RationalDecay {
    pub fn new(terms: Vec<RationalTerm>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.order == 0) {
            return Err(Error::InvalidTimeFn(format!(
                "rational term with order 0 (coefficient {})",
                t.coeff
            )));
        }
        Ok(Self::from_terms_unchecked(terms))
    }

    fn from_terms_unchecked(mut terms: Vec<RationalTerm>) -> Self {
        terms.sort_by_key(|t| t.order);
        let mut merged: Vec<RationalTerm> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(m) if m.order == t.order => m.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff != Complex64::new(0.0, 0.0));
        Self { terms: merged }
    }

    /// `c (t+1)^{-m}`.
    pub fn power(c: Complex64, order: u32) -> Result<Self> {
        Self::new(vec![RationalTerm { coeff: c, order }])
    }

    pub fn terms(&self) -> &[RationalTerm] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn min_order(&self) -> Option<u32> {
        self.terms.first().map(|t| t.order)
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        let v = 1.0 / (t + 1.0);
        self.terms
            .iter()
            .map(|term| term.coeff * v.powi(term.order as i32))
            .sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self::from_terms_unchecked(terms)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::from_terms_unchecked(
            self.terms
                .iter()
                .map(|t| RationalTerm {
                    coeff: t.coeff * c,
                    order: t.order,
                })
                .collect(),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(RationalTerm {
                    coeff: a.coeff * b.coeff,
                    order: a.order + b.order,
                });
            }
        }
        Self::from_terms_unchecked(terms)
    }

    pub fn conj(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| RationalTerm {
                    coeff: t.coeff.conj(),
                    order: t.order,
                })
                .collect(),
        }
    }

    pub fn derivative(&self) -> Self {
        Self::from_terms_unchecked(
            self.terms
                .iter()
                .map(|t| RationalTerm {
                    coeff: -t.coeff * t.order as f64,
                    order: t.order + 1,
                })
                .collect(),
        )
    }

    /// `sum |c| (t+1)^{-m_min}` as a single-power majorant.
    pub fn majorant(&self) -> Majorant {
        Majorant {
            amplitude: self.terms.iter().map(|t| t.coeff.norm()).sum(),
            weight: Weight::Power {
                power: self.min_order().unwrap_or(0),
            },
        }
    }

    /// Decaying solution of `c' + i lambda c = f`.
    ///
    /// Exact at `lambda = 0`; collocated on the compactified axis otherwise.
    pub fn oscillatory_tail(&self, lambda: f64) -> Result<OscTail> {
        if self.is_empty() {
            return Ok(OscTail::Rational(Self::default()));
        }
        if lambda == 0.0 {
            if self.min_order() == Some(1) {
                return Err(Error::TailDiverges(
                    "(t+1)^-1 is not integrable on [0, inf)".into(),
                ));
            }
            return Ok(OscTail::Rational(Self::from_terms_unchecked(
                self.terms
                    .iter()
                    .map(|t| RationalTerm {
                        coeff: -t.coeff / (t.order - 1) as f64,
                        order: t.order - 1,
                    })
                    .collect(),
            )));
        }
        let m = self.min_order().unwrap_or(1);
        let abs_sum: f64 = self.terms.iter().map(|t| t.coeff.norm()).sum();
        // |c| <= (|f(t)| + int_t^inf |f'|) / |lambda| <= 2 sum |c_m| (t+1)^{-m} / |lambda|
        let majorant = Majorant {
            amplitude: 2.0 * abs_sum / lambda.abs(),
            weight: Weight::Power { power: m },
        };
        let g = QuadFn::from_fn(|t| self.eval(t), Some(self.majorant()));
        let mut tail = g.oscillatory_tail(lambda)?;
        tail.set_majorant(Some(majorant));
        Ok(OscTail::Quad(tail))
    }

    /// Smallest `M` with `|f(t)| <= M / w(t)`.
    pub fn certify(&self, weight: Weight) -> Result<f64> {
        if self.is_empty() {
            return Ok(0.0);
        }
        let m = self.min_order().unwrap_or(0);
        let power = match weight {
            Weight::Exp { rate } if rate == 0.0 => 0,
            Weight::Exp { rate } => {
                return Err(Error::RateTooLarge {
                    requested: rate,
                    max: 0.0,
                })
            }
            Weight::Power { power } => power,
        };
        if power > m {
            return Err(Error::RateTooLarge {
                requested: power as f64,
                max: m as f64,
            });
        }
        // in v = 1/(t+1) the weighted function is a polynomial on (0, 1]
        let value = |v: f64| -> f64 {
            self.terms
                .iter()
                .map(|t| t.coeff * v.powi((t.order - power) as i32))
                .sum::<Complex64>()
                .norm()
        };
        Ok(sup_interval(&value, 0.0, 1.0, 4000))
    }

    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.norm()).sum()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.norm()).fold(0.0, f64::max)
    }
}

/// Result class of a rational tail.
#[derive(Clone, Debug)]
pub enum OscTail {
    Rational(RationalDecay),
    Quad(QuadFn),
}
