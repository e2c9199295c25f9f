//! Coefficients sampled on a tensor Chebyshev–Lobatto grid over the action
//! box, one time function per node.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Coeff;
use crate::cheb;
use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::timefn::{TimeFn, Weight};

/// Tensor grid over `[lo, hi]` with `degree[l] + 1` nodes along axis `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCtx {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub degree: Vec<usize>,
    /// Factor applied to nodal maxima when bounding sup norms on the
    /// complex neighbourhood.
    pub inflation: f64,
    nodes: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    diff: Vec<Vec<Vec<f64>>>,
}

impl GridCtx {
    pub fn new(lo: &[f64], hi: &[f64], degree: &[usize], inflation: f64) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != degree.len() || lo.is_empty() {
            return Err(Error::InvalidParameter("grid bounds and degrees differ in length".into()));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a < b)) || degree.iter().any(|&d| d < 3) {
            return Err(Error::InvalidParameter(format!(
                "grid needs lo < hi and at least 4 nodes per axis, got {lo:?}, {hi:?}, {degree:?}"
            )));
        }
        let nodes = (0..lo.len())
            .map(|l| {
                cheb::lobatto_nodes(degree[l])
                    .into_iter()
                    .map(|x| cheb::to_interval(x, lo[l], hi[l]))
                    .collect()
            })
            .collect();
        let weights = degree.iter().map(|&d| cheb::barycentric_weights(d)).collect();
        let diff = (0..lo.len())
            .map(|l| {
                let s = 2.0 / (hi[l] - lo[l]);
                cheb::diff_matrix(degree[l])
                    .into_iter()
                    .map(|row| row.into_iter().map(|v| v * s).collect())
                    .collect()
            })
            .collect();
        Ok(Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            degree: degree.to_vec(),
            inflation,
            nodes,
            weights,
            diff,
        })
    }

    pub fn n(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.degree.iter().map(|d| d + 1).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of a flat node index, last axis fastest.
    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![0; self.n()];
        for l in (0..self.n()).rev() {
            let m = self.degree[l] + 1;
            out[l] = i % m;
            i /= m;
        }
        out
    }

    fn stride(&self, l: usize) -> usize {
        self.degree[l + 1..].iter().map(|d| d + 1).product()
    }

    /// Physical coordinates of node `i`.
    pub fn node(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(l, &j)| self.nodes[l][j])
            .collect()
    }

    pub fn contains(&self, actions: &[f64]) -> bool {
        actions
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&x, (&a, &b))| x >= a - 1e-12 && x <= b + 1e-12)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCoeff {
    values: Vec<TimeFn>,
}

fn cheap(f: &TimeFn, weight: Weight) -> f64 {
    match weight {
        Weight::Exp { rate } if rate == 0.0 => f.sup_bound(),
        w => f.weighted_bound(w),
    }
}

impl GridCoeff {
    pub fn values(&self) -> &[TimeFn] {
        &self.values
    }
}

impl Coeff for GridCoeff {
    type Ctx = GridCtx;

    fn zero(ctx: &GridCtx) -> Self {
        Self {
            values: vec![TimeFn::zero(); ctx.len()],
        }
    }

    fn from_time(ctx: &GridCtx, f: TimeFn) -> Self {
        Self {
            values: vec![f; ctx.len()],
        }
    }

    fn is_zero(&self) -> bool {
        self.values.iter().all(TimeFn::is_zero)
    }

    fn is_action_independent(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }

    fn add(&self, other: &Self) -> Self {
        Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a.add(b)).collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = a.add(b);
        }
    }

    fn scale(&self, c: Complex64) -> Self {
        Self {
            values: self.values.iter().map(|f| f.scale(c)).collect(),
        }
    }

    fn conj(&self) -> Self {
        Self {
            values: self.values.iter().map(TimeFn::conj).collect(),
        }
    }

    fn mul(&self, other: &Self, _: &GridCtx, _: f64, _: &mut f64) -> Self {
        if self.is_action_independent() && other.is_action_independent() {
            let p = self.values[0].mul(&other.values[0]);
            return Self {
                values: vec![p; self.values.len()],
            };
        }
        Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a.mul(b)).collect(),
        }
    }

    fn mul_poly(&self, p: &Poly, ctx: &GridCtx, _: f64, _: &mut f64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(i, f)| f.scale_re(p.eval(&ctx.node(i))))
                .collect(),
        }
    }

    fn d_action(&self, l: usize, ctx: &GridCtx) -> Self {
        if self.is_action_independent() {
            return Self::zero(ctx);
        }
        let stride = ctx.stride(l);
        let m = ctx.degree[l] + 1;
        let d = &ctx.diff[l];
        let values = (0..self.values.len())
            .map(|i| {
                let il = (i / stride) % m;
                let base = i - il * stride;
                let mut acc = TimeFn::zero();
                for (j, &dij) in d[il].iter().enumerate() {
                    if dij != 0.0 {
                        acc = acc.add(&self.values[base + j * stride].scale_re(dij));
                    }
                }
                acc
            })
            .collect();
        Self { values }
    }

    fn d_time(&self) -> Result<Self> {
        self.map_time(&|f| f.derivative())
    }

    fn map_time(&self, f: &dyn Fn(&TimeFn) -> Result<TimeFn>) -> Result<Self> {
        if self.is_action_independent() {
            let v = f(&self.values[0])?;
            return Ok(Self {
                values: vec![v; self.values.len()],
            });
        }
        Ok(Self {
            values: self.values.iter().map(f).collect::<Result<_>>()?,
        })
    }

    fn map_time_at(
        &self,
        ctx: &GridCtx,
        lambda: &dyn Fn(&[f64]) -> f64,
        solve: &dyn Fn(&TimeFn, f64, &[f64]) -> Result<TimeFn>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(self.values.len());
        for (i, f) in self.values.iter().enumerate() {
            let node = ctx.node(i);
            values.push(solve(f, lambda(&node), &node)?);
        }
        Ok(Self { values })
    }

    fn eval(&self, ctx: &GridCtx, actions: &[f64], t: f64) -> Complex64 {
        let rows: Vec<Vec<f64>> = (0..ctx.n())
            .map(|l| {
                let x = cheb::from_interval(actions[l], ctx.lo[l], ctx.hi[l]);
                let unit: Vec<f64> = cheb::lobatto_nodes(ctx.degree[l]);
                cheb::interpolation_row(&unit, &ctx.weights[l], x)
            })
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, f) in self.values.iter().enumerate() {
            let idx = ctx.multi_index(i);
            let w: f64 = idx.iter().enumerate().map(|(l, &j)| rows[l][j]).product();
            if w != 0.0 {
                acc += f.eval(t) * w;
            }
        }
        acc
    }

    fn sup_at(&self, ctx: &GridCtx, _: f64, t: f64) -> f64 {
        ctx.inflation * self.values.iter().map(|f| f.eval(t).norm()).fold(0.0, f64::max)
    }

    fn sup_bound(&self, ctx: &GridCtx, _: f64, weight: Weight) -> f64 {
        if self.is_action_independent() {
            return ctx.inflation * cheap(&self.values[0], weight);
        }
        ctx.inflation * self.values.iter().map(|f| cheap(f, weight)).fold(0.0, f64::max)
    }

    fn certify(&self, ctx: &GridCtx, _: f64, weight: Weight) -> Result<f64> {
        if self.is_action_independent() {
            return Ok(ctx.inflation * self.values[0].certify(weight)?);
        }
        let mut worst: f64 = 0.0;
        for f in &self.values {
            worst = worst.max(f.certify(weight)?);
        }
        Ok(ctx.inflation * worst)
    }

    fn prune(&mut self, threshold: f64) -> f64 {
        let mut dropped: f64 = 0.0;
        for f in &mut self.values {
            dropped = dropped.max(f.prune(threshold));
        }
        dropped
    }

    fn time_fns(&self) -> Vec<&TimeFn> {
        self.values.iter().collect()
    }
}
