//! Time-dependent coefficient functions on `t in [0, inf)`.
//!
//! Four classes share one algebra: exact exponential polynomials, rational
//! decay, compactly supported piecewise functions, and a sampled fallback.

mod exppoly;
mod piecewise;
mod quad;
mod rational;
mod sup;

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use exppoly::{ExpPoly, ExpTerm, EXPONENT_TOL};
pub use piecewise::PiecewisePoly;
pub use quad::{Majorant, QuadFn, QUAD_DEGREE, QUAD_TOL, QUAD_T_MAX};
pub use rational::{OscTail, RationalDecay, RationalTerm};

use crate::error::Result;

/// Maximal number of exponential-polynomial terms before promotion.
pub const TERM_CAP: usize = 512;

static PROMOTIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of term-cap promotions to [`QuadFn`] since process start.
pub fn promotion_count() -> usize {
    PROMOTIONS.load(Ordering::Relaxed)
}

/// Weight `w(t)` in a bound `|f(t)| <= M / w(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    /// `w(t) = e^{rate t}`.
    Exp { rate: f64 },
    /// `w(t) = (t+1)^power`.
    Power { power: u32 },
}

impl Weight {
    pub fn factor(&self, t: f64) -> f64 {
        match *self {
            Weight::Exp { rate } => (rate * t).exp(),
            Weight::Power { power } => (t + 1.0).powi(power as i32),
        }
    }
}

/// The claim `|f(t)| <= m e^{-a t}` for all `t >= 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub m: f64,
    pub a: f64,
}

impl Envelope {
    pub fn new(m: f64, a: f64) -> Self {
        Self { m, a }
    }

    pub fn bound(&self, t: f64) -> f64 {
        self.m * (-self.a * t).exp()
    }

    /// Envelope of a sum, at the slower of the two rates.
    pub fn add(&self, other: &Self) -> Self {
        let a = if self.m == 0.0 {
            other.a
        } else if other.m == 0.0 {
            self.a
        } else {
            self.a.min(other.a)
        };
        Self { m: self.m + other.m, a }
    }
}

/// A time coefficient in one of the supported classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", content = "data", rename_all = "snake_case")]
pub enum TimeFn {
    Exp(ExpPoly),
    Rational(RationalDecay),
    Piecewise(PiecewisePoly),
    Quad(QuadFn),
}

impl Default for TimeFn {
    fn default() -> Self {
        Self::zero()
    }
}

impl From<ExpPoly> for TimeFn {
    fn from(p: ExpPoly) -> Self {
        TimeFn::Exp(p)
    }
}

impl From<RationalDecay> for TimeFn {
    fn from(r: RationalDecay) -> Self {
        TimeFn::Rational(r).canonical()
    }
}

impl From<PiecewisePoly> for TimeFn {
    fn from(p: PiecewisePoly) -> Self {
        TimeFn::Piecewise(p).canonical()
    }
}

impl From<QuadFn> for TimeFn {
    fn from(q: QuadFn) -> Self {
        TimeFn::Quad(q)
    }
}

impl TimeFn {
    pub fn zero() -> Self {
        TimeFn::Exp(ExpPoly::zero())
    }

    pub fn constant(c: Complex64) -> Self {
        TimeFn::Exp(ExpPoly::constant(c))
    }

    pub fn class_name(&self) -> &'static str {
        match self {
            TimeFn::Exp(_) => "exp_poly",
            TimeFn::Rational(_) => "rational",
            TimeFn::Piecewise(_) => "piecewise",
            TimeFn::Quad(_) => "quad",
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TimeFn::Exp(p) => p.is_empty(),
            TimeFn::Rational(r) => r.is_empty(),
            TimeFn::Piecewise(p) => p.is_zero(),
            TimeFn::Quad(q) => q.is_zero(),
        }
    }

    fn canonical(self) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        match self {
            TimeFn::Exp(p) if p.len() > TERM_CAP => {
                PROMOTIONS.fetch_add(1, Ordering::Relaxed);
                TimeFn::Quad(TimeFn::Exp(p).to_quad())
            }
            other => other,
        }
    }

    /// The constant value, when the function is a constant.
    pub fn as_constant(&self) -> Option<Complex64> {
        match self {
            TimeFn::Exp(p) => match p.terms() {
                [] => Some(Complex64::new(0.0, 0.0)),
                [t] if t.power == 0 && t.exponent == Complex64::new(0.0, 0.0) => Some(t.coeff),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        match self {
            TimeFn::Exp(p) => p.eval(t),
            TimeFn::Rational(r) => r.eval(t),
            TimeFn::Piecewise(p) => p.eval(t),
            TimeFn::Quad(q) => q.eval(t),
        }
    }

    /// Majorant valid for all `t`, if the class provides one.
    pub fn majorant(&self) -> Option<Majorant> {
        match self {
            TimeFn::Exp(p) => Some(p.majorant()),
            TimeFn::Rational(r) => Some(r.majorant()),
            TimeFn::Piecewise(_) => None,
            TimeFn::Quad(q) => q.majorant(),
        }
    }

    /// Sampled representation of any class.
    pub fn to_quad(&self) -> QuadFn {
        match self {
            TimeFn::Quad(q) => q.clone(),
            TimeFn::Exp(p) => QuadFn::from_fn_with_limit(
                |t| p.eval(t),
                p.limit_at_infinity().unwrap_or_default(),
                Some(p.majorant()),
            ),
            other => QuadFn::from_fn(|t| other.eval(t), other.majorant()),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        match (self, other) {
            (TimeFn::Exp(a), TimeFn::Exp(b)) => TimeFn::Exp(a.add(b)),
            (TimeFn::Rational(a), TimeFn::Rational(b)) => TimeFn::Rational(a.add(b)),
            (TimeFn::Piecewise(a), TimeFn::Piecewise(b)) => TimeFn::Piecewise(a.add(b)),
            (a, b) => TimeFn::Quad(a.to_quad().add(&b.to_quad())),
        }
        .canonical()
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        if c == Complex64::new(0.0, 0.0) {
            return Self::zero();
        }
        match self {
            TimeFn::Exp(p) => TimeFn::Exp(p.scale(c)),
            TimeFn::Rational(r) => TimeFn::Rational(r.scale(c)),
            TimeFn::Piecewise(p) => TimeFn::Piecewise(p.scale(c)),
            TimeFn::Quad(q) => TimeFn::Quad(q.scale(c)),
        }
        .canonical()
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        if let Some(c) = self.as_constant() {
            return other.scale(c);
        }
        if let Some(c) = other.as_constant() {
            return self.scale(c);
        }
        match (self, other) {
            (TimeFn::Exp(a), TimeFn::Exp(b)) => TimeFn::Exp(a.mul(b)),
            (TimeFn::Rational(a), TimeFn::Rational(b)) => TimeFn::Rational(a.mul(b)),
            (TimeFn::Piecewise(a), TimeFn::Piecewise(b)) => TimeFn::Piecewise(a.mul(b)),
            (TimeFn::Piecewise(a), TimeFn::Exp(b)) | (TimeFn::Exp(b), TimeFn::Piecewise(a)) => {
                TimeFn::Piecewise(a.mul_exp(b))
            }
            (a, b) => TimeFn::Quad(a.to_quad().mul(&b.to_quad())),
        }
        .canonical()
    }

    pub fn conj(&self) -> Self {
        match self {
            TimeFn::Exp(p) => TimeFn::Exp(p.conj()),
            TimeFn::Rational(r) => TimeFn::Rational(r.conj()),
            TimeFn::Piecewise(p) => TimeFn::Piecewise(p.conj()),
            TimeFn::Quad(q) => TimeFn::Quad(q.conj()),
        }
    }

    pub fn derivative(&self) -> Result<Self> {
        Ok(match self {
            TimeFn::Exp(p) => TimeFn::Exp(p.derivative()),
            TimeFn::Rational(r) => TimeFn::Rational(r.derivative()),
            TimeFn::Piecewise(p) => TimeFn::Piecewise(p.derivative()?),
            TimeFn::Quad(q) => TimeFn::Quad(q.derivative()),
        }
        .canonical())
    }

    /// `c(t) = -int_t^inf e^{i lambda (s - t)} f(s) ds`, so that `c' + i lambda c = f`.
    pub fn oscillatory_tail(&self, lambda: f64) -> Result<Self> {
        if self.is_zero() {
            return Ok(Self::zero());
        }
        Ok(match self {
            TimeFn::Exp(p) => TimeFn::Exp(p.oscillatory_tail(lambda)?),
            TimeFn::Rational(r) => match r.oscillatory_tail(lambda)? {
                OscTail::Rational(r) => TimeFn::Rational(r),
                OscTail::Quad(q) => TimeFn::Quad(q),
            },
            TimeFn::Piecewise(p) => TimeFn::Piecewise(p.oscillatory_tail(lambda)),
            TimeFn::Quad(q) => TimeFn::Quad(q.oscillatory_tail(lambda)?),
        }
        .canonical())
    }

    /// Smallest `M` with `|f(t)| <= M / w(t)` for all `t >= 0`.
    pub fn certify(&self, weight: Weight) -> Result<f64> {
        match self {
            TimeFn::Exp(p) => p.certify(weight),
            TimeFn::Rational(r) => r.certify(weight),
            TimeFn::Piecewise(p) => Ok(p.certify(weight)),
            TimeFn::Quad(q) => q.certify(weight),
        }
    }

    /// Minimal envelope `|f(t)| <= M e^{-a t}` at the requested rate.
    pub fn certify_envelope(&self, rate: f64) -> Result<Envelope> {
        Ok(Envelope::new(self.certify(Weight::Exp { rate })?, rate))
    }

    /// Cheap majorant of `sup_t |f(t)|`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            TimeFn::Exp(p) => p.sup_bound(),
            TimeFn::Rational(r) => r.sup_bound(),
            TimeFn::Piecewise(p) => p.sup_bound(),
            TimeFn::Quad(q) => q.sup_bound(),
        }
    }

    /// Cheap majorant of `sup_t |f(t)| w(t)`; infinite when unavailable.
    pub fn weighted_bound(&self, weight: Weight) -> f64 {
        match self {
            TimeFn::Exp(p) => {
                let shift = match weight {
                    Weight::Exp { rate } => rate,
                    Weight::Power { .. } => return self.certify(weight).unwrap_or(f64::INFINITY),
                };
                p.shift_exponents(Complex64::new(shift, 0.0)).sup_bound()
            }
            _ => self.certify(weight).unwrap_or(f64::INFINITY),
        }
    }

    /// Largest absolute coefficient (or sample) of the representation.
    pub fn max_abs_coeff(&self) -> f64 {
        match self {
            TimeFn::Exp(p) => p.max_abs_coeff(),
            TimeFn::Rational(r) => r.max_abs_coeff(),
            TimeFn::Piecewise(p) => p.max_abs_coeff(),
            TimeFn::Quad(q) => q.max_abs(),
        }
    }

    /// Drops exponential-polynomial terms below `threshold`; returns the
    /// dropped coefficient mass.
    pub fn prune(&mut self, threshold: f64) -> f64 {
        match self {
            TimeFn::Exp(p) => p.prune(threshold),
            _ => 0.0,
        }
    }

    /// Maximal pointwise difference at the given sample times.
    pub fn max_diff_at(&self, other: &Self, times: &[f64]) -> f64 {
        times
            .iter()
            .map(|&t| (self.eval(t) - other.eval(t)).norm())
            .fold(0.0, f64::max)
    }
}
