//! Truncated Taylor expansion in `d = I - center` with time-function
//! coefficients.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Coeff;
use crate::error::Result;
use crate::poly::{Monomial, Poly};
use crate::timefn::{TimeFn, Weight};

/// Expansion point, degree cap and half-width of the action domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorCtx {
    pub center: Vec<f64>,
    pub degree: u32,
    /// `max_l (hi_l - lo_l) / 2`.
    pub radius: f64,
}

impl TaylorCtx {
    pub fn new(lo: &[f64], hi: &[f64], degree: u32) -> Self {
        let center = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let radius = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).fold(0.0, f64::max);
        Self {
            center,
            degree,
            radius,
        }
    }

    pub fn n(&self) -> usize {
        self.center.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaylorCoeff {
    #[serde(with = "crate::poly::pairs")]
    terms: BTreeMap<Monomial, TimeFn>,
}

fn weight_pow(m: &Monomial, r: f64) -> f64 {
    r.powi(m.iter().sum::<u32>() as i32)
}

fn cheap(f: &TimeFn, weight: Weight) -> f64 {
    match weight {
        Weight::Exp { rate } if rate == 0.0 => f.sup_bound(),
        w => f.weighted_bound(w),
    }
}

impl TaylorCoeff {
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &TimeFn)> {
        self.terms.iter()
    }

    fn insert(&mut self, m: Monomial, f: TimeFn) {
        if f.is_zero() {
            return;
        }
        let sum = match self.terms.remove(&m) {
            Some(old) => old.add(&f),
            None => f,
        };
        if !sum.is_zero() {
            self.terms.insert(m, sum);
        }
    }
}

impl Coeff for TaylorCoeff {
    type Ctx = TaylorCtx;

    fn zero(_: &TaylorCtx) -> Self {
        Self::default()
    }

    fn from_time(ctx: &TaylorCtx, f: TimeFn) -> Self {
        let mut c = Self::default();
        c.insert(vec![0; ctx.n()], f);
        c
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn is_action_independent(&self) -> bool {
        self.terms.keys().all(|m| m.iter().all(|&e| e == 0))
    }

    fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, f) in &other.terms {
            out.insert(m.clone(), f.clone());
        }
        out
    }

    fn add_assign(&mut self, other: &Self) {
        for (m, f) in &other.terms {
            self.insert(m.clone(), f.clone());
        }
    }

    fn scale(&self, c: Complex64) -> Self {
        let mut out = Self::default();
        for (m, f) in &self.terms {
            out.insert(m.clone(), f.scale(c));
        }
        out
    }

    fn conj(&self) -> Self {
        Self {
            terms: self.terms.iter().map(|(m, f)| (m.clone(), f.conj())).collect(),
        }
    }

    fn mul(&self, other: &Self, ctx: &TaylorCtx, rho: f64, ledger: &mut f64) -> Self {
        let r = ctx.radius + rho;
        let mut out = Self::default();
        for (m1, f1) in &self.terms {
            for (m2, f2) in &other.terms {
                let m: Monomial = m1.iter().zip(m2).map(|(a, b)| a + b).collect();
                if m.iter().sum::<u32>() > ctx.degree {
                    *ledger += f1.sup_bound() * f2.sup_bound() * weight_pow(&m, r);
                    continue;
                }
                out.insert(m, f1.mul(f2));
            }
        }
        out
    }

    fn mul_poly(&self, p: &Poly, ctx: &TaylorCtx, rho: f64, ledger: &mut f64) -> Self {
        let shifted = p.shift(&ctx.center);
        let mut q = Self::default();
        for (m, &c) in shifted.terms() {
            q.insert(m.clone(), TimeFn::constant(Complex64::new(c, 0.0)));
        }
        self.mul(&q, ctx, rho, ledger)
    }

    fn d_action(&self, l: usize, _: &TaylorCtx) -> Self {
        let mut out = Self::default();
        for (m, f) in &self.terms {
            if m[l] > 0 {
                let mut d = m.clone();
                d[l] -= 1;
                out.insert(d, f.scale_re(m[l] as f64));
            }
        }
        out
    }

    fn d_time(&self) -> Result<Self> {
        self.map_time(&|f| f.derivative())
    }

    fn map_time(&self, f: &dyn Fn(&TimeFn) -> Result<TimeFn>) -> Result<Self> {
        let mut out = Self::default();
        for (m, g) in &self.terms {
            out.insert(m.clone(), f(g)?);
        }
        Ok(out)
    }

    fn map_time_at(
        &self,
        ctx: &TaylorCtx,
        lambda: &dyn Fn(&[f64]) -> f64,
        solve: &dyn Fn(&TimeFn, f64, &[f64]) -> Result<TimeFn>,
    ) -> Result<Self> {
        let lam = lambda(&ctx.center);
        self.map_time(&|f| solve(f, lam, &ctx.center))
    }

    fn eval(&self, ctx: &TaylorCtx, actions: &[f64], t: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|(m, f)| {
                let mono: f64 = m
                    .iter()
                    .zip(actions.iter().zip(&ctx.center))
                    .map(|(&e, (&x, &c))| (x - c).powi(e as i32))
                    .product();
                f.eval(t) * mono
            })
            .sum()
    }

    fn sup_at(&self, ctx: &TaylorCtx, rho: f64, t: f64) -> f64 {
        let r = ctx.radius + rho;
        self.terms.iter().map(|(m, f)| f.eval(t).norm() * weight_pow(m, r)).sum()
    }

    fn sup_bound(&self, ctx: &TaylorCtx, rho: f64, weight: Weight) -> f64 {
        let r = ctx.radius + rho;
        self.terms.iter().map(|(m, f)| cheap(f, weight) * weight_pow(m, r)).sum()
    }

    fn certify(&self, ctx: &TaylorCtx, rho: f64, weight: Weight) -> Result<f64> {
        let r = ctx.radius + rho;
        let mut total = 0.0;
        for (m, f) in &self.terms {
            total += f.certify(weight)? * weight_pow(m, r);
        }
        Ok(total)
    }

    fn prune(&mut self, threshold: f64) -> f64 {
        let mut dropped = 0.0;
        for f in self.terms.values_mut() {
            dropped += f.prune(threshold);
        }
        self.terms.retain(|_, f| !f.is_zero());
        dropped
    }

    fn time_fns(&self) -> Vec<&TimeFn> {
        self.terms.values().collect()
    }
}
