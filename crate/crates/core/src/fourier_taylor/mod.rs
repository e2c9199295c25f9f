//! Truncated Fourier series in the angles with action- and time-dependent
//! coefficients, the extended Poisson bracket, norms, Lie series and Lie
//! transforms.

mod grid;
mod taylor;

use std::collections::BTreeMap;
use std::fmt::Debug;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use grid::{GridCoeff, GridCtx};
pub use taylor::{TaylorCoeff, TaylorCtx};

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::timefn::{Envelope, TimeFn, Weight};

/// Fourier harmonic `k in Z^n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Harmonic(pub Vec<i32>);

impl Harmonic {
    pub fn zero(n: usize) -> Self {
        Harmonic(vec![0; n])
    }

    /// `|k| = sum |k_l|`.
    pub fn norm(&self) -> u32 {
        self.0.iter().map(|k| k.unsigned_abs()).sum()
    }

    pub fn neg(&self) -> Self {
        Harmonic(self.0.iter().map(|k| -k).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Harmonic(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&k, &v)| k as f64 * v).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    /// Shell index `s` with `(s-1) N <= |k| < s N`.
    pub fn shell(&self, width: u32) -> usize {
        (self.norm() / width) as usize + 1
    }
}

/// Metadata shared by every coefficient of a series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta<X> {
    pub n: usize,
    pub k_max: u32,
    pub rho: f64,
    pub sigma: f64,
    pub ctx: X,
}

impl<X: PartialEq> Meta<X> {
    fn check(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.k_max != other.k_max || self.ctx != other.ctx {
            return Err(Error::MetadataMismatch(format!(
                "n {} vs {}, K_max {} vs {}, backend contexts {}",
                self.n,
                other.n,
                self.k_max,
                other.k_max,
                if self.ctx == other.ctx { "equal" } else { "differ" }
            )));
        }
        Ok(())
    }
}

/// Action-dependent coefficient field with time-function entries.
pub trait Coeff: Clone + Debug + PartialEq + Send + Sync + Sized {
    type Ctx: Clone + Debug + PartialEq + Send + Sync;

    fn zero(ctx: &Self::Ctx) -> Self;
    /// Action-independent coefficient.
    fn from_time(ctx: &Self::Ctx, f: TimeFn) -> Self;
    fn is_zero(&self) -> bool;
    fn is_action_independent(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn add_assign(&mut self, other: &Self) {
        *self = self.add(other);
    }
    fn scale(&self, c: Complex64) -> Self;
    fn conj(&self) -> Self;
    /// Product; dropped content is added to `ledger` as a sup-norm majorant.
    fn mul(&self, other: &Self, ctx: &Self::Ctx, rho: f64, ledger: &mut f64) -> Self;
    /// Product with a real polynomial in the actions.
    fn mul_poly(&self, p: &Poly, ctx: &Self::Ctx, rho: f64, ledger: &mut f64) -> Self;
    fn d_action(&self, l: usize, ctx: &Self::Ctx) -> Self;
    fn d_time(&self) -> Result<Self>;
    fn map_time(&self, f: &dyn Fn(&TimeFn) -> Result<TimeFn>) -> Result<Self>;
    /// Applies `solve(f, lambda(I))` to the time function at each action
    /// sample; the Taylor backend evaluates `lambda` at its center only.
    fn map_time_at(
        &self,
        ctx: &Self::Ctx,
        lambda: &dyn Fn(&[f64]) -> f64,
        solve: &dyn Fn(&TimeFn, f64, &[f64]) -> Result<TimeFn>,
    ) -> Result<Self>;
    fn eval(&self, ctx: &Self::Ctx, actions: &[f64], t: f64) -> Complex64;
    /// Majorant of `sup_I |c(I, t)|` at a fixed time.
    fn sup_at(&self, ctx: &Self::Ctx, rho: f64, t: f64) -> f64;
    /// Cheap majorant of `sup_{I,t} |c| w(t)`.
    fn sup_bound(&self, ctx: &Self::Ctx, rho: f64, weight: Weight) -> f64;
    /// Certified `sup_{I,t} |c| w(t)`.
    fn certify(&self, ctx: &Self::Ctx, rho: f64, weight: Weight) -> Result<f64>;
    /// Drops time-function terms below `threshold`; returns the dropped mass.
    fn prune(&mut self, threshold: f64) -> f64;
    fn time_fns(&self) -> Vec<&TimeFn>;
}

/// Truncated Fourier series `sum_k c_k(I, t) e^{i k . phi}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series<C: Coeff> {
    meta: Meta<C::Ctx>,
    coeffs: BTreeMap<Harmonic, C>,
    ledger: f64,
}

/// Serialization record: metadata block plus harmonic table.
#[derive(Serialize, Deserialize)]
struct SeriesRecord<C, X> {
    meta: Meta<X>,
    ledger: f64,
    harmonics: Vec<(Harmonic, C)>,
}

impl<C> Serialize for Series<C>
where
    C: Coeff + Serialize,
    C::Ctx: Serialize,
{
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SeriesRecord {
            meta: self.meta.clone(),
            ledger: self.ledger,
            harmonics: self.coeffs.iter().map(|(k, c)| (k.clone(), c.clone())).collect(),
        }
        .serialize(s)
    }
}

impl<'de, C> Deserialize<'de> for Series<C>
where
    C: Coeff + Deserialize<'de>,
    C::Ctx: Deserialize<'de>,
{
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = SeriesRecord::<C, C::Ctx>::deserialize(d)?;
        let mut s = Series::zero(rec.meta);
        s.ledger = rec.ledger;
        for (k, c) in rec.harmonics {
            s.insert(k, c);
        }
        Ok(s)
    }
}

impl<C: Coeff> Series<C> {
    pub fn zero(meta: Meta<C::Ctx>) -> Self {
        Self {
            meta,
            coeffs: BTreeMap::new(),
            ledger: 0.0,
        }
    }

    pub fn meta(&self) -> &Meta<C::Ctx> {
        &self.meta
    }

    pub fn ctx(&self) -> &C::Ctx {
        &self.meta.ctx
    }

    /// Same series with different nominal radii.
    pub fn with_radii(mut self, rho: f64, sigma: f64) -> Self {
        self.meta.rho = rho;
        self.meta.sigma = sigma;
        self
    }

    /// Accumulated truncation majorant.
    pub fn ledger(&self) -> f64 {
        self.ledger
    }

    pub fn add_ledger(&mut self, amount: f64) {
        self.ledger += amount;
    }

    /// Adds `c` to the coefficient of `k`; harmonics beyond `K_max` go to the ledger.
    pub fn insert(&mut self, k: Harmonic, c: C) {
        if c.is_zero() {
            return;
        }
        if k.norm() > self.meta.k_max {
            self.ledger += (k.norm() as f64 * self.meta.sigma).exp()
                * c.sup_bound(&self.meta.ctx, self.meta.rho, Weight::Exp { rate: 0.0 });
            return;
        }
        match self.coeffs.get_mut(&k) {
            Some(existing) => {
                existing.add_assign(&c);
                if existing.is_zero() {
                    self.coeffs.remove(&k);
                }
            }
            None => {
                self.coeffs.insert(k, c);
            }
        }
    }

    /// Single-harmonic series `f(t) e^{i k . phi}`.
    pub fn monomial(meta: Meta<C::Ctx>, k: Harmonic, f: TimeFn) -> Self {
        let c = C::from_time(&meta.ctx, f);
        let mut s = Self::zero(meta);
        s.insert(k, c);
        s
    }

    /// `f(t) cos(k . phi)` as the pair of harmonics `+-k` with weight 1/2.
    pub fn cosine(meta: Meta<C::Ctx>, k: Harmonic, f: TimeFn) -> Self {
        let mut s = Self::zero(meta);
        s.add_cosine(k, &f, None);
        s
    }

    /// Adds `f(t) p(I) cos(k . phi)`; `p` defaults to 1.
    pub fn add_cosine(&mut self, k: Harmonic, f: &TimeFn, p: Option<&Poly>) {
        self.add_trig(k, f, p, Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0));
    }

    /// Adds `f(t) p(I) sin(k . phi)`.
    pub fn add_sine(&mut self, k: Harmonic, f: &TimeFn, p: Option<&Poly>) {
        self.add_trig(k, f, p, Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5));
    }

    fn add_trig(&mut self, k: Harmonic, f: &TimeFn, p: Option<&Poly>, plus: Complex64, minus: Complex64) {
        let mut base = C::from_time(&self.meta.ctx, f.clone());
        if let Some(p) = p {
            let mut ledger = 0.0;
            base = base.mul_poly(p, &self.meta.ctx, self.meta.rho, &mut ledger);
            self.ledger += ledger;
        }
        if k.is_zero() {
            self.insert(k, base.scale(plus + minus));
        } else {
            self.insert(k.neg(), base.scale(minus));
            self.insert(k, base.scale(plus));
        }
    }

    pub fn get(&self, k: &Harmonic) -> Option<&C> {
        self.coeffs.get(k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Harmonic, &C)> {
        self.coeffs.iter()
    }

    pub fn harmonics(&self) -> impl Iterator<Item = &Harmonic> {
        self.coeffs.keys()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        self.meta.check(&other.meta)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (k, c) in &other.coeffs {
            out.insert(k.clone(), c.clone());
        }
        out.ledger += other.ledger;
        Ok(out)
    }

    /// In-place sum; panics on metadata mismatch, which callers rule out.
    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.check_compatible(other).is_ok());
        for (k, c) in &other.coeffs {
            self.insert(k.clone(), c.clone());
        }
        self.ledger += other.ledger;
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = Self::zero(self.meta.clone());
        out.ledger = self.ledger * c.norm();
        for (k, v) in &self.coeffs {
            out.insert(k.clone(), v.scale(c));
        }
        out
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    pub fn map_coeffs(&self, f: impl Fn(&Harmonic, &C) -> Result<C>) -> Result<Self> {
        let mut out = Self::zero(self.meta.clone());
        out.ledger = self.ledger;
        for (k, c) in &self.coeffs {
            out.insert(k.clone(), f(k, c)?);
        }
        Ok(out)
    }

    /// Keeps the harmonics selected by `keep`.
    pub fn filter(&self, keep: impl Fn(&Harmonic) -> bool) -> Self {
        let mut out = Self::zero(self.meta.clone());
        for (k, c) in &self.coeffs {
            if keep(k) {
                out.coeffs.insert(k.clone(), c.clone());
            }
        }
        out
    }

    /// `d/d phi_l`.
    pub fn d_angle(&self, l: usize) -> Self {
        let mut out = Self::zero(self.meta.clone());
        for (k, c) in &self.coeffs {
            out.insert(k.clone(), c.scale(Complex64::new(0.0, k.0[l] as f64)));
        }
        out
    }

    /// `d/d I_l`.
    pub fn d_action(&self, l: usize) -> Self {
        let mut out = Self::zero(self.meta.clone());
        for (k, c) in &self.coeffs {
            out.insert(k.clone(), c.d_action(l, &self.meta.ctx));
        }
        out
    }

    /// `d/dt`.
    pub fn d_time(&self) -> Result<Self> {
        self.map_coeffs(|_, c| c.d_time())
    }

    /// Product with a real action polynomial.
    pub fn mul_poly(&self, p: &Poly) -> Self {
        let mut out = Self::zero(self.meta.clone());
        let mut ledger = 0.0;
        for (k, c) in &self.coeffs {
            out.insert(k.clone(), c.mul_poly(p, &self.meta.ctx, self.meta.rho, &mut ledger));
        }
        out.ledger = self.ledger + ledger;
        out
    }

    /// Product of two series, truncated at `K_max`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = Self::zero(self.meta.clone());
        let mut ledger = 0.0;
        for (k1, c1) in &self.coeffs {
            for (k2, c2) in &other.coeffs {
                let k = k1.add(k2);
                let prod = c1.mul(c2, &self.meta.ctx, self.meta.rho, &mut ledger);
                out.insert(k, prod);
            }
        }
        out.ledger += ledger;
        Ok(out)
    }

    /// `{self, g} = self_phi . g_I - g_phi . self_I` for eta-free operands.
    pub fn bracket(&self, g: &Self) -> Result<Self> {
        self.check_compatible(g)?;
        let n = self.meta.n;
        let mut out = Self::zero(self.meta.clone());
        if self.is_zero() || g.is_zero() {
            return Ok(out);
        }
        let ctx = &self.meta.ctx;
        let dg: Vec<Vec<(Harmonic, C)>> = (0..n)
            .map(|l| {
                g.coeffs
                    .iter()
                    .map(|(k, c)| (k.clone(), c.d_action(l, ctx)))
                    .filter(|(_, c)| !c.is_zero())
                    .collect()
            })
            .collect();
        let df: Vec<Vec<(Harmonic, C)>> = (0..n)
            .map(|l| {
                self.coeffs
                    .iter()
                    .map(|(k, c)| (k.clone(), c.d_action(l, ctx)))
                    .filter(|(_, c)| !c.is_zero())
                    .collect()
            })
            .collect();
        let mut ledger = 0.0;
        for l in 0..n {
            // f_phi_l * g_I_l
            for (k1, c1) in &self.coeffs {
                if k1.0[l] == 0 {
                    continue;
                }
                let f_phi = c1.scale(Complex64::new(0.0, k1.0[l] as f64));
                for (k2, c2) in &dg[l] {
                    out.insert(k1.add(k2), f_phi.mul(c2, ctx, self.meta.rho, &mut ledger));
                }
            }
            // - g_phi_l * f_I_l
            for (k2, c2) in &g.coeffs {
                if k2.0[l] == 0 {
                    continue;
                }
                let g_phi = c2.scale(Complex64::new(0.0, -(k2.0[l] as f64)));
                for (k1, c1) in &df[l] {
                    out.insert(k1.add(k2), g_phi.mul(c1, ctx, self.meta.rho, &mut ledger));
                }
            }
        }
        out.ledger += ledger;
        Ok(out)
    }

    /// Pointwise value at `(I, phi, t)`.
    pub fn eval(&self, actions: &[f64], angles: &[f64], t: f64) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(k, c)| c.eval(&self.meta.ctx, actions, t) * Complex64::new(0.0, k.dot(angles)).exp())
            .sum()
    }

    /// `sum_k sup_I |c_k(I, t)| e^{|k| sigma}` at a fixed time.
    pub fn norm_at(&self, rho: f64, sigma: f64, t: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, c)| (k.norm() as f64 * sigma).exp() * c.sup_at(&self.meta.ctx, rho, t))
            .sum()
    }

    /// Cheap majorant of `sup_t e^{a t} ||self||_{rho, sigma}(t)`.
    pub fn norm_bound(&self, rho: f64, sigma: f64, rate: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, c)| {
                (k.norm() as f64 * sigma).exp()
                    * c.sup_bound(&self.meta.ctx, rho, Weight::Exp { rate })
            })
            .sum()
    }

    pub fn check_radii(&self, rho: f64, sigma: f64) -> Result<()> {
        let slack = 1.0 + 1e-12;
        if rho > self.meta.rho * slack || sigma > self.meta.sigma * slack || rho < 0.0 || sigma < 0.0 {
            return Err(Error::RadiiOutOfRange {
                rho,
                sigma,
                max_rho: self.meta.rho,
                max_sigma: self.meta.sigma,
            });
        }
        Ok(())
    }

    /// Certified Fourier-norm envelope `||self||_{rho,sigma}(t) <= M e^{-a t}`.
    pub fn fourier_norm(&self, rho: f64, sigma: f64, rate: f64) -> Result<Envelope> {
        self.weighted_norm(rho, sigma, Weight::Exp { rate })
            .map(|m| Envelope::new(m, rate))
    }

    /// Certified `sup_t w(t) ||self||_{rho,sigma}(t)` for a general weight.
    pub fn weighted_norm(&self, rho: f64, sigma: f64, weight: Weight) -> Result<f64> {
        self.check_radii(rho, sigma)?;
        let mut total = 0.0;
        for (k, c) in &self.coeffs {
            total += (k.norm() as f64 * sigma).exp() * c.certify(&self.meta.ctx, rho, weight)?;
        }
        Ok(total)
    }

    /// Splits into shells `Lambda_s`; index 0 holds shell 1.
    pub fn shell_split(&self, width: u32) -> Vec<Self> {
        assert!(width >= 1, "shell width must be positive");
        let mut shells: Vec<Self> = Vec::new();
        for (k, c) in &self.coeffs {
            let s = k.shell(width);
            while shells.len() < s {
                shells.push(Self::zero(self.meta.clone()));
            }
            shells[s - 1].coeffs.insert(k.clone(), c.clone());
        }
        shells
    }

    /// Largest deviation from `c_{-k} = conj(c_k)` at the given times.
    pub fn reality_defect(&self, actions: &[Vec<f64>], times: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, c) in &self.coeffs {
            let partner = self.coeffs.get(&k.neg());
            for a in actions {
                for &t in times {
                    let v = c.eval(&self.meta.ctx, a, t);
                    let w = partner.map_or(Complex64::new(0.0, 0.0), |p| p.eval(&self.meta.ctx, a, t));
                    worst = worst.max((v - w.conj()).norm());
                }
            }
        }
        worst
    }

    /// Prunes every coefficient at `rel` times the largest coefficient scale.
    pub fn prune(&mut self, rel: f64) {
        let scale = self
            .coeffs
            .values()
            .flat_map(|c| c.time_fns().into_iter().map(TimeFn::max_abs_coeff).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            return;
        }
        let threshold = rel * scale;
        let mut dropped = 0.0;
        for c in self.coeffs.values_mut() {
            dropped += c.prune(threshold);
        }
        self.coeffs.retain(|_, c| !c.is_zero());
        self.ledger += dropped;
    }

    /// Coefficient-level difference bound `max_k sup |a_k - b_k|`.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        match self.sub(other) {
            Ok(d) => d
                .coeffs
                .values()
                .map(|c| c.sup_bound(&self.meta.ctx, self.meta.rho, Weight::Exp { rate: 0.0 }))
                .fold(0.0, f64::max),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Series plus the linear coordinate slots `eta`, `phi_l`, `I_l` and an
/// optional integrable part `h(I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable<C: Coeff> {
    pub series: Series<C>,
    pub eta: f64,
    pub angle: Vec<f64>,
    pub action: Vec<f64>,
    pub h: Option<Poly>,
}

impl<C: Coeff> Observable<C> {
    pub fn from_series(series: Series<C>) -> Self {
        let n = series.meta.n;
        Self {
            series,
            eta: 0.0,
            angle: vec![0.0; n],
            action: vec![0.0; n],
            h: None,
        }
    }

    pub fn action_coordinate(meta: Meta<C::Ctx>, l: usize) -> Self {
        let mut o = Self::from_series(Series::zero(meta));
        o.action[l] = 1.0;
        o
    }

    pub fn angle_coordinate(meta: Meta<C::Ctx>, l: usize) -> Self {
        let mut o = Self::from_series(Series::zero(meta));
        o.angle[l] = 1.0;
        o
    }

    pub fn eta_coordinate(meta: Meta<C::Ctx>) -> Self {
        let mut o = Self::from_series(Series::zero(meta));
        o.eta = 1.0;
        o
    }

    /// `H_0 = h(I) + eta`.
    pub fn integrable(meta: Meta<C::Ctx>, h: Poly) -> Self {
        let mut o = Self::eta_coordinate(meta);
        o.h = Some(h);
        o
    }

    fn has_linear_part(&self) -> bool {
        self.eta != 0.0
            || self.angle.iter().any(|&v| v != 0.0)
            || self.action.iter().any(|&v| v != 0.0)
            || self.h.is_some()
    }

    /// `L_chi self = {self, chi}`; `chi` must not depend on `eta`.
    pub fn bracket(&self, chi: &Series<C>) -> Result<Series<C>> {
        let mut out = self.series.bracket(chi)?;
        if !self.has_linear_part() || chi.is_zero() {
            return Ok(out);
        }
        if self.eta != 0.0 {
            out.add_assign(&chi.d_time()?.scale_re(-self.eta));
        }
        for l in 0..self.angle.len() {
            if self.angle[l] != 0.0 {
                out.add_assign(&chi.d_action(l).scale_re(self.angle[l]));
            }
            if self.action[l] != 0.0 {
                out.add_assign(&chi.d_angle(l).scale_re(-self.action[l]));
            }
        }
        if let Some(h) = &self.h {
            for (l, w) in h.gradient().iter().enumerate() {
                if w.degree() == 0 {
                    let omega_l = w.eval(&vec![0.0; w.n()]);
                    if omega_l != 0.0 {
                        out.add_assign(&chi.d_angle(l).scale_re(-omega_l));
                    }
                } else {
                    out.add_assign(&chi.d_angle(l).mul_poly(w).scale_re(-1.0));
                }
            }
        }
        Ok(out)
    }

    pub fn eval(&self, actions: &[f64], angles: &[f64], eta: f64, t: f64) -> Complex64 {
        let mut v = self.series.eval(actions, angles, t) + self.eta * eta;
        for l in 0..self.angle.len() {
            v += self.angle[l] * angles[l] + self.action[l] * actions[l];
        }
        if let Some(h) = &self.h {
            v += h.eval(actions);
        }
        v
    }
}

/// Outcome of a summed Lie series.
#[derive(Clone, Debug)]
pub struct LieSum<C: Coeff> {
    /// `sum_{s>=1} w_s L^s F`.
    pub sum: Series<C>,
    /// Cheap norm of each computed term `L^s F / s!`.
    pub history: Vec<f64>,
    /// Geometric estimate of the neglected tail.
    pub tail: f64,
}

/// Computes `sum_{s=1}^{S*} weight(s) L_chi^s F` where `S*` is the first
/// order whose scaled term `L^s F / s!` has cheap norm below `tol`.
pub fn lie_series_weighted<C: Coeff>(
    chi: &Series<C>,
    f: &Observable<C>,
    weight: impl Fn(usize) -> f64,
    s_max: usize,
    tol: f64,
) -> Result<LieSum<C>> {
    let meta = chi.meta();
    let mut sum = Series::zero(meta.clone());
    let mut history = Vec::new();
    if chi.is_zero() {
        return Ok(LieSum {
            sum,
            history,
            tail: 0.0,
        });
    }
    let mut term = f.bracket(chi)?;
    let mut factorial = 1.0;
    for s in 1..=s_max {
        factorial *= s as f64;
        let norm = term.norm_bound(meta.rho, meta.sigma, 0.0) / factorial;
        history.push(norm);
        if term.is_zero() {
            return Ok(LieSum {
                sum,
                history,
                tail: 0.0,
            });
        }
        sum.add_assign(&term.scale_re(weight(s)));
        if norm <= tol {
            let q = if history.len() >= 2 && history[history.len() - 2] > 0.0 {
                norm / history[history.len() - 2]
            } else {
                0.0
            };
            let tail = if q < 1.0 { norm * q / (1.0 - q) } else { f64::INFINITY };
            return Ok(LieSum { sum, history, tail });
        }
        term = term.bracket(chi)?;
    }
    Err(Error::LieSeriesDiverged {
        max_order: s_max,
        history,
    })
}

/// `exp(L_chi) F`, returned as an observable with `F`'s linear slots.
pub fn lie_series_apply<C: Coeff>(
    chi: &Series<C>,
    f: &Observable<C>,
    s_max: usize,
    tol: f64,
) -> Result<Observable<C>> {
    let factorials: Vec<f64> = (0..=s_max)
        .scan(1.0, |acc, s| {
            if s > 0 {
                *acc *= s as f64;
            }
            Some(*acc)
        })
        .collect();
    let sum = lie_series_weighted(chi, f, |s| 1.0 / factorials[s], s_max, tol)?;
    let mut out = f.clone();
    out.series.add_assign(&sum.sum);
    Ok(out)
}

/// Levels `E_1 F, ..., E_{s_total} F` of the Lie transform generated by
/// `chis[0] = chi^{(1)}, chis[1] = chi^{(2)}, ...`.
pub fn lie_transform_levels<C: Coeff>(
    chis: &[Series<C>],
    f: &Observable<C>,
    s_total: usize,
) -> Result<Vec<Series<C>>> {
    let meta = f.series.meta().clone();
    let mut levels: Vec<Series<C>> = Vec::with_capacity(s_total);
    for s in 1..=s_total {
        let mut e = Series::zero(meta.clone());
        for j in 1..=s.min(chis.len()) {
            let chi = &chis[j - 1];
            if chi.is_zero() {
                continue;
            }
            let inner = if s == j {
                f.bracket(chi)?
            } else {
                levels[s - j - 1].bracket(chi)?
            };
            e.add_assign(&inner.scale_re(j as f64 / s as f64));
        }
        levels.push(e);
    }
    Ok(levels)
}

/// `T_chi F = F + sum_{s=1}^{s_total} E_s F`.
pub fn lie_transform_apply<C: Coeff>(
    chis: &[Series<C>],
    f: &Observable<C>,
    s_total: usize,
) -> Result<Observable<C>> {
    let levels = lie_transform_levels(chis, f, s_total)?;
    let mut out = f.clone();
    for e in &levels {
        out.series.add_assign(e);
    }
    Ok(out)
}
