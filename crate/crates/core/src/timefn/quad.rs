//! Sampled time functions on the compactified axis `u = t/(t+1)`.
//!
//! Values live on a Chebyshev–Lobatto grid in `u in [0, 1]`; node 0 is
//! `t = inf`. Tails are solved by collocation of `(1-u)^2 c_u + i lambda c = g`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::sup::golden_max;
use super::Weight;
use crate::cheb;
use crate::error::{Error, Result};

/// Polynomial degree of the interpolant in `u`.
pub const QUAD_DEGREE: usize = 128;
/// Target absolute accuracy of quadrature-backed functions.
pub const QUAD_TOL: f64 = 1e-10;
/// Sampled certification range for rate-free functions.
pub const QUAD_T_MAX: f64 = 1000.0;

struct Grid {
    x: Vec<f64>,
    u: Vec<f64>,
    t: Vec<f64>,
    weights: Vec<f64>,
    du: DMatrix<f64>,
}

fn grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| {
        let n = QUAD_DEGREE;
        let x = cheb::lobatto_nodes(n);
        let u: Vec<f64> = x.iter().map(|&xi| 0.5 * (xi + 1.0)).collect();
        let t = u
            .iter()
            .map(|&ui| if ui >= 1.0 { f64::INFINITY } else { ui / (1.0 - ui) })
            .collect();
        let d = cheb::diff_matrix(n);
        let du = DMatrix::from_fn(n + 1, n + 1, |i, j| 2.0 * d[i][j]);
        Grid {
            weights: cheb::barycentric_weights(n),
            x,
            u,
            t,
            du,
        }
    })
}

type ComplexLu = LU<Complex64, Dyn, Dyn>;

fn tail_operator(lambda: f64) -> Arc<ComplexLu> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<ComplexLu>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = lambda.to_bits();
    if let Some(lu) = cache.lock().expect("tail cache poisoned").get(&key) {
        return lu.clone();
    }
    let g = grid();
    let n = QUAD_DEGREE + 1;
    // at zero frequency the rows are divided by (1-u)^2 to keep them well scaled
    let mut a = DMatrix::from_fn(n, n, |i, j| {
        let s = if lambda == 0.0 { 1.0 } else { (1.0 - g.u[i]).powi(2) };
        let mut v = Complex64::new(s * g.du[(i, j)], 0.0);
        if i == j {
            v += Complex64::new(0.0, lambda);
        }
        v
    });
    if lambda == 0.0 {
        // pin c(inf) = 0; the equation row at u = 1 is vacuous
        for j in 0..n {
            a[(0, j)] = Complex64::new(if j == 0 { 1.0 } else { 0.0 }, 0.0);
        }
    }
    let lu = Arc::new(a.lu());
    let mut guard = cache.lock().expect("tail cache poisoned");
    if guard.len() > 4096 {
        guard.clear();
    }
    guard.insert(key, lu.clone());
    lu
}

/// `|f(t)| <= amplitude / weight.factor(t)` for all `t >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Majorant {
    pub amplitude: f64,
    pub weight: Weight,
}

/// `sup_{t >= t0} (t+1)^p e^{-a t}`.
fn power_exp_peak(p: u32, a: f64, t0: f64) -> Option<f64> {
    if p == 0 {
        return Some((-a * t0).exp());
    }
    if a <= 0.0 {
        return None;
    }
    let peak = p as f64 / a - 1.0;
    let t = peak.max(t0);
    Some((t + 1.0).powi(p as i32) * (-a * t).exp())
}

impl Majorant {
    pub fn bound(&self, t: f64) -> f64 {
        self.amplitude / self.weight.factor(t)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            amplitude: self.amplitude * s.abs(),
            weight: self.weight,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let amplitude = self.amplitude * other.amplitude;
        let weight = match (self.weight, other.weight) {
            (Weight::Exp { rate: a }, Weight::Exp { rate: b }) => Weight::Exp { rate: a + b },
            (Weight::Power { power: p }, Weight::Power { power: q }) => Weight::Power { power: p + q },
            (Weight::Exp { .. }, w @ Weight::Power { .. }) | (w @ Weight::Power { .. }, Weight::Exp { .. }) => w,
        };
        Self { amplitude, weight }
    }

    pub fn add(&self, other: &Self) -> Self {
        match (self.weight, other.weight) {
            (Weight::Exp { rate: a }, Weight::Exp { rate: b }) => Self {
                amplitude: self.amplitude + other.amplitude,
                weight: Weight::Exp { rate: a.min(b) },
            },
            (Weight::Power { power: p }, Weight::Power { power: q }) => Self {
                amplitude: self.amplitude + other.amplitude,
                weight: Weight::Power { power: p.min(q) },
            },
            (Weight::Exp { rate }, Weight::Power { power }) => {
                Self::mixed_sum(self.amplitude, rate, other.amplitude, power)
            }
            (Weight::Power { power }, Weight::Exp { rate }) => {
                Self::mixed_sum(other.amplitude, rate, self.amplitude, power)
            }
        }
    }

    fn mixed_sum(exp_amp: f64, rate: f64, pow_amp: f64, power: u32) -> Self {
        match power_exp_peak(power, rate, 0.0) {
            Some(peak) => Self {
                amplitude: exp_amp * peak + pow_amp,
                weight: Weight::Power { power },
            },
            None => Self {
                amplitude: exp_amp + pow_amp,
                weight: Weight::Power { power: 0 },
            },
        }
    }

    /// Majorant of `int_t^inf |f|`, when it converges.
    pub fn integral_tail(&self) -> Option<Self> {
        match self.weight {
            Weight::Exp { rate } if rate > 0.0 => Some(Self {
                amplitude: self.amplitude / rate,
                weight: self.weight,
            }),
            Weight::Power { power } if power >= 2 => Some(Self {
                amplitude: self.amplitude / (power - 1) as f64,
                weight: Weight::Power { power: power - 1 },
            }),
            _ => None,
        }
    }

    /// `sup_{t >= t0} w(t) * bound(t)`, or `None` when `w` outgrows the majorant.
    pub fn weighted_sup_beyond(&self, w: Weight, t0: f64) -> Option<f64> {
        let factor = match (w, self.weight) {
            (Weight::Exp { rate: r }, Weight::Exp { rate: a }) => {
                if r > a {
                    return None;
                }
                ((r - a) * t0).exp()
            }
            (Weight::Power { power: p }, Weight::Power { power: q }) => {
                if p > q {
                    return None;
                }
                (t0 + 1.0).powi(p as i32 - q as i32)
            }
            (Weight::Power { power: p }, Weight::Exp { rate: a }) => power_exp_peak(p, a, t0)?,
            (Weight::Exp { rate: r }, Weight::Power { power: q }) => {
                if r > 0.0 {
                    return None;
                }
                (t0 + 1.0).powi(-(q as i32))
            }
        };
        Some(self.amplitude * factor)
    }
}

/// Quadrature-backed time function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadFn {
    values: Vec<Complex64>,
    majorant: Option<Majorant>,
    error: f64,
}

/// Sum of the moduli of the last four Chebyshev coefficients.
fn coefficient_tail(values: &[Complex64]) -> f64 {
    static ROWS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    let n = values.len() - 1;
    let rows = ROWS.get_or_init(|| {
        (n - 3..=n)
            .map(|k| {
                let scale = if k == n { 1.0 } else { 2.0 } / n as f64;
                (0..=n)
                    .map(|j| {
                        let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                        scale * w * (PI * (k * j) as f64 / n as f64).cos()
                    })
                    .collect()
            })
            .collect()
    });
    rows.iter()
        .map(|row| {
            row.iter()
                .zip(values)
                .map(|(w, v)| v * *w)
                .sum::<Complex64>()
                .norm()
        })
        .sum()
}

impl QuadFn {
    /// Samples `f` at the grid; the value at `t = inf` is taken as `limit`.
    pub fn from_fn_with_limit(
        f: impl Fn(f64) -> Complex64,
        limit: Complex64,
        majorant: Option<Majorant>,
    ) -> Self {
        let g = grid();
        let values: Vec<Complex64> = g
            .t
            .iter()
            .map(|&t| if t.is_infinite() { limit } else { f(t) })
            .collect();
        let error = coefficient_tail(&values);
        Self {
            values,
            majorant,
            error,
        }
    }

    /// Samples a function that vanishes at infinity.
    pub fn from_fn(f: impl Fn(f64) -> Complex64, majorant: Option<Majorant>) -> Self {
        Self::from_fn_with_limit(f, Complex64::new(0.0, 0.0), majorant)
    }

    fn with_values(values: Vec<Complex64>, majorant: Option<Majorant>, propagated: f64) -> Self {
        let error = propagated.max(coefficient_tail(&values));
        Self {
            values,
            majorant,
            error,
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn majorant(&self) -> Option<Majorant> {
        self.majorant
    }

    pub fn set_majorant(&mut self, majorant: Option<Majorant>) {
        self.majorant = majorant;
    }

    /// Estimated absolute interpolation error.
    pub fn error_estimate(&self) -> f64 {
        self.error
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm() == 0.0)
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        let g = grid();
        if t.is_infinite() {
            return self.values[0];
        }
        let x = 2.0 * t / (t + 1.0) - 1.0;
        cheb::interpolate(&g.x, &g.weights, &self.values, x)
    }

    pub fn add(&self, other: &Self) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        let majorant = match (self.majorant, other.majorant) {
            (Some(a), Some(b)) => Some(a.add(&b)),
            _ => None,
        };
        Self::with_values(values, majorant, self.error + other.error)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            majorant: self.majorant.map(|m| m.scale(c.norm())),
            error: self.error * c.norm(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        let majorant = match (self.majorant, other.majorant) {
            (Some(a), Some(b)) => Some(a.mul(&b)),
            _ => None,
        };
        let propagated = self.error * other.max_abs() + other.error * self.max_abs();
        Self::with_values(values, majorant, propagated)
    }

    pub fn conj(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.conj()).collect(),
            majorant: self.majorant,
            error: self.error,
        }
    }

    /// Spectral derivative `dc/dt = (1-u)^2 dc/du`.
    pub fn derivative(&self) -> Self {
        let g = grid();
        let n = self.values.len();
        let values: Vec<Complex64> = (0..n)
            .map(|i| {
                let s = (1.0 - g.u[i]).powi(2);
                let d: Complex64 = (0..n).map(|j| self.values[j] * g.du[(i, j)]).sum();
                d * s
            })
            .collect();
        let amplification = (QUAD_DEGREE * QUAD_DEGREE) as f64;
        Self::with_values(values, None, self.error * amplification)
    }

    /// Decaying solution of `c' + i lambda c = g`.
    pub fn oscillatory_tail(&self, lambda: f64) -> Result<Self> {
        let scale = self.max_abs();
        if scale == 0.0 {
            return Ok(self.clone());
        }
        if self.values[0].norm() > QUAD_TOL * scale {
            return Err(Error::TailDiverges(format!(
                "function tends to {} at infinity",
                self.values[0]
            )));
        }
        let g = grid();
        if lambda == 0.0 {
            let worst = (1..self.values.len())
                .map(|j| self.values[j].norm() / (1.0 - g.u[j]).powi(2))
                .fold(0.0, f64::max);
            if worst > 1e3 * scale {
                return Err(Error::TailDiverges(
                    "decay slower than (t+1)^-2 at zero frequency".into(),
                ));
            }
        }
        let lu = tail_operator(lambda);
        let mut rhs = DVector::from_vec(self.values.clone());
        if lambda == 0.0 {
            for j in 1..rhs.len() {
                rhs[j] /= (1.0 - g.u[j]).powi(2);
            }
        }
        rhs[0] = Complex64::new(0.0, 0.0);
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::TailDiverges("singular collocation system".into()))?;
        let majorant = self.majorant.and_then(|m| m.integral_tail());
        let propagated = if lambda == 0.0 {
            self.error
        } else {
            self.error / lambda.abs()
        };
        Ok(Self::with_values(sol.iter().cloned().collect(), majorant, propagated))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn sup_bound(&self) -> f64 {
        self.max_abs() + self.error
    }

    /// Maximum of `value(u)` on `[0, u_max]` from an oversampled Chebyshev
    /// grid in `u` (the interpolant is a polynomial there), refined around
    /// the largest local maxima.
    fn sup_in_u(&self, value: &dyn Fn(f64) -> f64, u_max: f64) -> f64 {
        let m = 16 * QUAD_DEGREE;
        let mut u: Vec<f64> = (0..=m)
            .map(|i| 0.5 * (1.0 - (PI * i as f64 / m as f64).cos()) * u_max)
            .collect();
        u.dedup();
        let samples: Vec<f64> = u.iter().map(|&x| value(x)).collect();
        let mut best = samples.iter().cloned().fold(0.0, f64::max);
        let last = samples.len() - 1;
        let mut peaks: Vec<usize> = (0..=last)
            .filter(|&i| {
                (i == 0 || samples[i] >= samples[i - 1]) && (i == last || samples[i] >= samples[i + 1])
            })
            .collect();
        peaks.sort_by(|&a, &b| samples[b].total_cmp(&samples[a]));
        for &i in peaks.iter().take(16) {
            best = best.max(golden_max(value, u[i.saturating_sub(1)], u[(i + 1).min(last)]));
        }
        best
    }

    /// Smallest `M` with `|f(t)| <= M / w(t)`: sampled on `[0, T_max]`,
    /// majorant (or the interpolant in `u`) beyond.
    pub fn certify(&self, weight: Weight) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let rate = match (weight, self.majorant.map(|m| m.weight)) {
            (Weight::Exp { rate }, _) if rate > 0.0 => rate,
            (_, Some(Weight::Exp { rate })) if rate > 0.0 => rate,
            _ => 0.0,
        };
        let t_max = if rate > 0.0 { 40.0 / rate } else { QUAD_T_MAX };
        let value = |t: f64| self.eval(t).norm() * weight.factor(t);
        let sampled = self.sup_in_u(&|u: f64| value(u / (1.0 - u)), t_max / (t_max + 1.0));
        let beyond = match self.majorant {
            Some(m) => m.weighted_sup_beyond(weight, t_max).ok_or(Error::RateTooLarge {
                requested: match weight {
                    Weight::Exp { rate } => rate,
                    Weight::Power { power } => power as f64,
                },
                max: match m.weight {
                    Weight::Exp { rate } => rate,
                    Weight::Power { power } => power as f64,
                },
            })?,
            None => {
                let u0 = t_max / (t_max + 1.0);
                (0..=2000)
                    .map(|i| {
                        let gap = (1.0 - u0) * 10f64.powf(-10.0 * i as f64 / 2000.0);
                        let u = 1.0 - gap;
                        value(u / (1.0 - u))
                    })
                    .fold(0.0, f64::max)
            }
        };
        Ok(sampled.max(beyond))
    }
}
