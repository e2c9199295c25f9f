//! Compactly supported piecewise functions.
//!
//! Each piece is an [`ExpPoly`] in the local variable `s = t - b_i`, which
//! keeps oscillatory tails of polynomial pieces in closed form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::exppoly::{ExpPoly, ExpTerm};
use super::sup::sup_interval;
use super::Weight;
use crate::error::{Error, Result};

const BREAK_TOL: f64 = 1e-13;
const CONTINUITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePoly {
    breaks: Vec<f64>,
    pieces: Vec<ExpPoly>,
}

impl PiecewisePoly {
    /// `breaks[0] = 0`, strictly increasing; the function vanishes past the last break.
    pub fn new(breaks: Vec<f64>, pieces: Vec<ExpPoly>) -> Result<Self> {
        if breaks.first() != Some(&0.0) {
            return Err(Error::InvalidTimeFn("first breakpoint must be 0".into()));
        }
        if pieces.len() + 1 != breaks.len() {
            return Err(Error::InvalidTimeFn(format!(
                "{} breakpoints need {} pieces, got {}",
                breaks.len(),
                breaks.len() - 1,
                pieces.len()
            )));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidTimeFn("breakpoints must increase".into()));
        }
        Ok(Self { breaks, pieces })
    }

    /// Sum of quartic bumps `(a_l/h^4)[(t - t_l + h)(t - t_l - h)]^2` on `[t_l - h, t_l + h]`.
    pub fn bumps(centers: &[f64], amplitudes: &[f64], h: f64) -> Result<Self> {
        if centers.len() != amplitudes.len() {
            return Err(Error::InvalidParameter(
                "bump centers and amplitudes differ in length".into(),
            ));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("bump width {h} must be positive")));
        }
        for (i, w) in centers.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if gap <= 2.0 * h {
                return Err(Error::OverlappingBumps {
                    index: i,
                    gap,
                    min_gap: 2.0 * h,
                });
            }
        }
        if let Some(&first) = centers.first() {
            if first - h < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "bump at {first} starts before t = 0"
                )));
            }
        }
        let mut breaks = vec![0.0];
        let mut pieces = Vec::new();
        for (&c, &a) in centers.iter().zip(amplitudes) {
            let start = c - h;
            if start > *breaks.last().unwrap() {
                breaks.push(start);
                pieces.push(ExpPoly::zero());
            }
            breaks.push(c + h);
            pieces.push(quartic_bump(a, h));
        }
        Self::new(breaks, pieces)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[ExpPoly] {
        &self.pieces
    }

    /// End of the support.
    pub fn support_end(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.iter().all(ExpPoly::is_empty)
    }

    fn locate(&self, t: f64) -> Option<usize> {
        if t < 0.0 || t >= self.support_end() {
            return None;
        }
        Some(self.breaks.partition_point(|&b| b <= t) - 1)
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        match self.locate(t) {
            Some(i) => self.pieces[i].eval(t - self.breaks[i]),
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// Re-expresses the function on a finer set of breakpoints.
    fn refine(&self, breaks: &[f64]) -> Vec<ExpPoly> {
        breaks
            .windows(2)
            .map(|w| match self.locate(w[0]) {
                Some(i) => self.pieces[i].translate(w[0] - self.breaks[i]),
                None => ExpPoly::zero(),
            })
            .collect()
    }

    fn merged_breaks(&self, other: &Self) -> Vec<f64> {
        let mut all: Vec<f64> = self.breaks.iter().chain(&other.breaks).cloned().collect();
        all.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::with_capacity(all.len());
        for b in all {
            match out.last() {
                Some(&last) if b - last <= BREAK_TOL * b.abs().max(1.0) => {}
                _ => out.push(b),
            }
        }
        out
    }

    fn combine(&self, other: &Self, op: impl Fn(&ExpPoly, &ExpPoly) -> ExpPoly) -> Self {
        let breaks = self.merged_breaks(other);
        let a = self.refine(&breaks);
        let b = other.refine(&breaks);
        let pieces = a.iter().zip(&b).map(|(x, y)| op(x, y)).collect();
        Self { breaks, pieces }.trimmed()
    }

    fn trimmed(mut self) -> Self {
        while self.pieces.last().is_some_and(ExpPoly::is_empty) {
            self.pieces.pop();
            self.breaks.pop();
        }
        self
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a.add(b))
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a.mul(b))
    }

    /// Product with a globally defined exponential polynomial.
    pub fn mul_exp(&self, g: &ExpPoly) -> Self {
        let pieces = self
            .pieces
            .iter()
            .zip(&self.breaks)
            .map(|(p, &b)| p.mul(&g.translate(b)))
            .collect();
        Self {
            breaks: self.breaks.clone(),
            pieces,
        }
        .trimmed()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(|p| p.scale(c)).collect(),
        }
        .trimmed()
    }

    pub fn conj(&self) -> Self {
        Self {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(ExpPoly::conj).collect(),
        }
    }

    /// Piecewise derivative; the function must be continuous at every break.
    pub fn derivative(&self) -> Result<Self> {
        let scale = self.sup_bound().max(1e-300);
        for i in 0..self.pieces.len() {
            let len = self.breaks[i + 1] - self.breaks[i];
            let left = self.pieces[i].eval(len);
            let right = self
                .pieces
                .get(i + 1)
                .map_or(Complex64::new(0.0, 0.0), |p| p.eval(0.0));
            if (left - right).norm() > CONTINUITY_TOL * scale {
                return Err(Error::NotDifferentiable(self.breaks[i + 1]));
            }
        }
        Ok(Self {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(ExpPoly::derivative).collect(),
        }
        .trimmed())
    }

    /// Decaying solution of `c' + i lambda c = f`, exact per piece.
    pub fn oscillatory_tail(&self, lambda: f64) -> Self {
        let shift = Complex64::new(0.0, lambda);
        let mut pieces = vec![ExpPoly::zero(); self.pieces.len()];
        let mut next = Complex64::new(0.0, 0.0);
        for i in (0..self.pieces.len()).rev() {
            let len = self.breaks[i + 1] - self.breaks[i];
            // c(s) = e^{-i lambda s} [P(s) - P(L) + e^{i lambda L} c(L)], P' = e^{i lambda s} f
            let anti = self.pieces[i].shift_exponents(shift).antiderivative();
            let k = -anti.eval(len) + (shift * len).exp() * next;
            let homogeneous = ExpPoly::from_terms_unchecked(vec![ExpTerm {
                coeff: k,
                power: 0,
                exponent: -shift,
            }]);
            let piece = anti.shift_exponents(-shift).add(&homogeneous);
            next = piece.eval(0.0);
            pieces[i] = piece;
        }
        Self {
            breaks: self.breaks.clone(),
            pieces,
        }
        .trimmed()
    }

    /// Smallest `M` with `|f(t)| <= M / w(t)`; any weight is admissible.
    pub fn certify(&self, weight: Weight) -> f64 {
        self.pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_empty())
            .map(|(i, p)| {
                let b = self.breaks[i];
                let len = self.breaks[i + 1] - b;
                let value = |s: f64| p.eval(s).norm() * weight.factor(b + s);
                sup_interval(&value, 0.0, len, 2000)
            })
            .fold(0.0, f64::max)
    }

    pub fn sup_bound(&self) -> f64 {
        self.pieces
            .iter()
            .zip(self.breaks.windows(2))
            .map(|(p, w)| {
                let len = (w[1] - w[0]).max(1.0);
                p.terms()
                    .iter()
                    .map(|t| t.coeff.norm() * len.powi(t.power as i32))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.pieces.iter().map(ExpPoly::max_abs_coeff).fold(0.0, f64::max)
    }
}

/// `(a/h^4) s^2 (s - 2h)^2` on `s in [0, 2h]`.
fn quartic_bump(a: f64, h: f64) -> ExpPoly {
    let c = a / h.powi(4);
    let zero = Complex64::new(0.0, 0.0);
    let term = |coeff: f64, power: u32| ExpTerm {
        coeff: Complex64::new(coeff, 0.0),
        power,
        exponent: zero,
    };
    ExpPoly::from_terms_unchecked(vec![
        term(c, 4),
        term(-4.0 * h * c, 3),
        term(4.0 * h * h * c, 2),
    ])
}
