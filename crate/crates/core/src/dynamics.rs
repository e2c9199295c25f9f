//! Integration of `H = h(I) + eta + eps f(I, phi, t)` and measurements of
//! action drift and normal-form conservation along trajectories.
//!
//! Actions are integrated in the scaled deviation `J` with `I = I_0 + eps J`,
//! so drifts far below the resolution of `I_0` keep full relative precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier_taylor::{Coeff, Series};
use crate::poly::Poly;
use crate::timefn::TimeFn;
use crate::transform::{CoordinateMap, PhasePoint};

/// `h(I) + eta + eps_hat * perturbation`.
#[derive(Clone, Debug)]
pub struct ExtendedHamiltonian<C: Coeff> {
    pub h: Poly,
    pub perturbation: Series<C>,
    pub eps_hat: f64,
}

impl<C: Coeff> ExtendedHamiltonian<C> {
    pub fn new(h: Poly, perturbation: Series<C>, eps_hat: f64) -> Result<Self> {
        if h.n() != perturbation.meta().n {
            return Err(Error::InvalidParameter(format!(
                "h has {} variables for n = {}",
                h.n(),
                perturbation.meta().n
            )));
        }
        if !(eps_hat >= 0.0 && eps_hat.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps_hat = {eps_hat} must be finite and >= 0")));
        }
        Ok(Self { h, perturbation, eps_hat })
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    pub fn omega(&self, actions: &[f64]) -> Vec<f64> {
        self.h.gradient().iter().map(|g| g.eval(actions)).collect()
    }

    /// `h(I) + eps_hat f(I, phi, t)`.
    /// Sorted interior breakpoints of piecewise time dependences, where the
    /// field is only piecewise smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .perturbation
            .iter()
            .flat_map(|(_, c)| c.time_fns())
            .filter_map(|f| match f {
                TimeFn::Piecewise(p) => Some(p.breaks().to_vec()),
                _ => None,
            })
            .flatten()
            .filter(|&t| t > 0.0)
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    pub fn energy(&self, actions: &[f64], angles: &[f64], t: f64) -> f64 {
        self.h.eval(actions) + self.eps_hat * self.perturbation.eval(actions, angles, t).re
    }
}

/// Vector field in the scaled state `y = (J, phi)`.
struct Field<'a, C: Coeff> {
    ham: &'a ExtendedHamiltonian<C>,
    i0: Vec<f64>,
    grad: Vec<Poly>,
    f_phi: Vec<Series<C>>,
    f_i: Vec<Series<C>>,
}

impl<'a, C: Coeff> Field<'a, C> {
    fn new(ham: &'a ExtendedHamiltonian<C>, i0: &[f64]) -> Self {
        let n = ham.n();
        Self {
            ham,
            i0: i0.to_vec(),
            grad: ham.h.gradient(),
            f_phi: (0..n).map(|l| ham.perturbation.d_angle(l)).collect(),
            f_i: (0..n).map(|l| ham.perturbation.d_action(l)).collect(),
        }
    }

    fn actions(&self, j: &[f64]) -> Vec<f64> {
        self.i0.iter().zip(j).map(|(i, j)| i + self.ham.eps_hat * j).collect()
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.i0.len();
        let (j, phi) = y.split_at(n);
        let actions = self.actions(j);
        let eps = self.ham.eps_hat;
        for l in 0..n {
            dy[l] = -self.f_phi[l].eval(&actions, phi, t).re;
            let drift = if eps == 0.0 { 0.0 } else { eps * self.f_i[l].eval(&actions, phi, t).re };
            dy[n + l] = self.grad[l].eval(&actions) + drift;
        }
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One Dormand-Prince step; returns the new state and the embedded error.
fn dopri_step(rhs: &dyn Fn(f64, &[f64], &mut [f64]), t: f64, y: &[f64], k1: &[f64], h: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = y.len();
    let mut k: Vec<Vec<f64>> = vec![k1.to_vec()];
    let mut stage = vec![0.0; m];
    for s in 1..7 {
        for i in 0..m {
            let mut acc = 0.0;
            for (r, kr) in k.iter().enumerate() {
                acc += A[s][r] * kr[i];
            }
            stage[i] = y[i] + h * acc;
        }
        let mut ks = vec![0.0; m];
        rhs(t + C[s] * h, &stage, &mut ks);
        k.push(ks);
    }
    // the seventh stage is evaluated at the new state (FSAL)
    let err = (0..m)
        .map(|i| h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>())
        .collect();
    (stage, err, k.pop().unwrap_or_default())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Mixed absolute/relative local error tolerance per step.
    pub tol: f64,
    pub max_steps: usize,
    /// Initial step; `None` picks one from the local derivative.
    pub h0: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_steps: 2_000_000,
            h0: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Largest accepted local error estimate, in units of the tolerance.
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub eps_hat: f64,
    pub initial_actions: Vec<f64>,
    pub times: Vec<f64>,
    /// `I(t) - I(0)`, kept at full relative precision.
    pub deviations: Vec<Vec<f64>>,
    /// Unwrapped angles.
    pub angles: Vec<Vec<f64>>,
    /// `h(I) + eps_hat f` at each sample.
    pub energy: Vec<f64>,
    pub stats: IntegratorStats,
    /// Final scaled state `(J, phi)`.
    scaled_end: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn actions(&self, i: usize) -> Vec<f64> {
        self.initial_actions
            .iter()
            .zip(&self.deviations[i])
            .map(|(a, d)| a + d)
            .collect()
    }

    pub fn point(&self, i: usize) -> PhasePoint {
        PhasePoint::new(self.actions(i), self.angles[i].clone(), 0.0, self.times[i])
    }

    /// `sup |I(t) - I(t*)|` over samples `t >= t*`, with `t*` the first
    /// sample at or after `t_freeze`.
    pub fn increment_after(&self, t_freeze: f64) -> f64 {
        let Some(start) = self.times.iter().position(|&t| t >= t_freeze) else {
            return 0.0;
        };
        let base = &self.deviations[start];
        self.deviations[start..]
            .iter()
            .flat_map(|d| d.iter().zip(base).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], tol: f64) -> f64 {
    y.iter()
        .zip(y_new)
        .zip(err)
        .map(|((a, b), e)| e.abs() / (tol * (1.0 + a.abs().max(b.abs()))))
        .fold(0.0, f64::max)
}

struct Span {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    stats: IntegratorStats,
}

/// Adaptive integration of `y' = rhs(t, y)` from `t0` to `t1` (either
/// direction), recording every accepted step.
/// Steps never cross an entry of `stops`; the derivative is re-evaluated on
/// landing there since it may jump.
fn integrate_span(
    rhs: &dyn Fn(f64, &[f64], &mut [f64]),
    t0: f64,
    y0: &[f64],
    t1: f64,
    stops: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Span> {
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {} must be positive", cfg.tol)));
    }
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let mut stats = IntegratorStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; y.len()];
    rhs(t, &y, &mut k1);
    stats.evaluations += 1;
    let mut h = match cfg.h0 {
        Some(h) => h.abs(),
        None => {
            let d0 = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let d1 = k1.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if d1 > 0.0 {
                (0.01 * (1.0 + d0) / d1).min(0.1)
            } else {
                0.1
            }
        }
    }
    .min(span.max(f64::MIN_POSITIVE));
    let mut times = vec![t];
    let mut states = vec![y.clone()];
    let end_tol = 1e-14 * (t0.abs() + t1.abs()).max(1.0);
    while (t1 - t).abs() > end_tol {
        if stats.steps + stats.rejected >= cfg.max_steps {
            return Err(Error::StepLimit { t, steps: cfg.max_steps });
        }
        let target = stops
            .iter()
            .copied()
            .filter(|&s| dir * (s - t) > end_tol && dir * (t1 - s) > end_tol)
            .min_by(|a, b| (dir * a).total_cmp(&(dir * b)))
            .unwrap_or(t1);
        let h_try = h.min((target - t).abs());
        if h_try < 1e-13 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h: h_try, state: y });
        }
        let (y_new, err, k7) = dopri_step(rhs, t, &y, &k1, dir * h_try);
        stats.evaluations += 6;
        let e = error_norm(&y, &y_new, &err, cfg.tol);
        let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        if e <= 1.0 {
            let at_stop = (target - t).abs() <= h_try * (1.0 + 1e-12);
            t = if at_stop { target } else { t + dir * h_try };
            y = y_new;
            if at_stop && target != t1 {
                rhs(t, &y, &mut k1);
                stats.evaluations += 1;
            } else {
                k1 = k7;
            }
            stats.steps += 1;
            stats.max_error = stats.max_error.max(e);
            times.push(t);
            states.push(y.clone());
            h = h_try * factor;
        } else {
            stats.rejected += 1;
            h = h_try * factor.min(1.0);
        }
    }
    Ok(Span { times, states, stats })
}

fn scaled_initial(n: usize, angles: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    y.extend_from_slice(angles);
    y
}

fn check_init<C: Coeff>(ham: &ExtendedHamiltonian<C>, actions: &[f64], angles: &[f64], t_end: f64) -> Result<()> {
    let n = ham.n();
    if actions.len() != n || angles.len() != n {
        return Err(Error::InvalidParameter(format!(
            "initial condition has {} actions and {} angles for n = {n}",
            actions.len(),
            angles.len()
        )));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!("horizon {t_end} must be positive and finite")));
    }
    Ok(())
}

/// Integrates from `(I_0, phi_0)` at `t = 0` to `t_end`.
pub fn integrate<C: Coeff>(
    ham: &ExtendedHamiltonian<C>,
    actions: &[f64],
    angles: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_init(ham, actions, angles, t_end)?;
    let n = ham.n();
    let field = Field::new(ham, actions);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| field.eval(t, y, dy);
    let span = integrate_span(&rhs, 0.0, &scaled_initial(n, angles), t_end, &ham.breakpoints(), cfg)?;
    let eps = ham.eps_hat;
    let mut deviations = Vec::with_capacity(span.states.len());
    let mut phis = Vec::with_capacity(span.states.len());
    let mut energy = Vec::with_capacity(span.states.len());
    for (t, y) in span.times.iter().zip(&span.states) {
        let (j, phi) = y.split_at(n);
        deviations.push(j.iter().map(|v| eps * v).collect());
        energy.push(ham.energy(&field.actions(j), phi, *t));
        phis.push(phi.to_vec());
    }
    Ok(Trajectory {
        eps_hat: eps,
        initial_actions: actions.to_vec(),
        times: span.times,
        deviations,
        angles: phis,
        energy,
        stats: span.stats,
        scaled_end: span.states.last().cloned().unwrap_or_default(),
    })
}

/// Re-integrates from the endpoint back to `t = 0` and returns the max-norm
/// distance to the initial scaled state `(0, phi_0)`.
pub fn time_reversal_error<C: Coeff>(ham: &ExtendedHamiltonian<C>, traj: &Trajectory, cfg: &IntegratorConfig) -> Result<f64> {
    let n = ham.n();
    let field = Field::new(ham, &traj.initial_actions);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| field.eval(t, y, dy);
    let span = integrate_span(&rhs, traj.horizon(), &traj.scaled_end, 0.0, &ham.breakpoints(), cfg)?;
    let back = span.states.last().cloned().unwrap_or_default();
    let start = scaled_initial(n, &traj.angles[0]);
    Ok(back.iter().zip(&start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Fifth-order solution with `steps` equal steps; returns `(I - I_0, phi)`
/// at `t_end`.
pub fn integrate_fixed<C: Coeff>(
    ham: &ExtendedHamiltonian<C>,
    actions: &[f64],
    angles: &[f64],
    t_end: f64,
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_init(ham, actions, angles, t_end)?;
    let n = ham.n();
    let field = Field::new(ham, actions);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| field.eval(t, y, dy);
    let h = t_end / steps.max(1) as f64;
    let mut y = scaled_initial(n, angles);
    let mut k1 = vec![0.0; 2 * n];
    for i in 0..steps.max(1) {
        let t = i as f64 * h;
        rhs(t, &y, &mut k1);
        y = dopri_step(&rhs, t, &y, &k1, h).0;
    }
    let (j, phi) = y.split_at(n);
    Ok((j.iter().map(|v| ham.eps_hat * v).collect(), phi.to_vec()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// `sup_t |I_l(t) - I_l(0)|` per component.
    pub per_component: Vec<f64>,
    pub euclidean: f64,
    pub bound: f64,
    /// `euclidean / bound`.
    pub margin: f64,
    pub violated: bool,
    pub horizon: f64,
    pub required_horizon: f64,
    pub horizon_short: bool,
}

/// Compares the sampled action drift with `bound`; a horizon shorter than
/// `required_horizon` is flagged, not rejected.
pub fn measure_drift(traj: &Trajectory, bound: f64, required_horizon: f64) -> DriftReport {
    let n = traj.initial_actions.len();
    let mut per_component = vec![0.0f64; n];
    let mut euclidean: f64 = 0.0;
    for d in &traj.deviations {
        for (p, v) in per_component.iter_mut().zip(d) {
            *p = p.max(v.abs());
        }
        euclidean = euclidean.max(d.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    let margin = if euclidean == 0.0 {
        0.0
    } else if bound > 0.0 {
        euclidean / bound
    } else {
        f64::INFINITY
    };
    DriftReport {
        per_component,
        euclidean,
        bound,
        margin,
        violated: margin > 1.0,
        horizon: traj.horizon(),
        required_horizon,
        horizon_short: traj.horizon() < required_horizon,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormCheck {
    /// `sup_t |I(t) - I(0)|` in the max norm.
    pub raw_variation: f64,
    /// Same for the transformed actions `I'(t) = I(t) + d_I(t)`.
    pub transformed_variation: f64,
    /// Action displacement `|d_I|` of the map at the first and last sample.
    pub displacement_start: f64,
    pub displacement_end: f64,
}

impl NormalFormCheck {
    /// `raw / transformed`; infinite when the transformed actions are constant.
    pub fn improvement(&self) -> f64 {
        if self.transformed_variation == 0.0 {
            if self.raw_variation == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            self.raw_variation / self.transformed_variation
        }
    }
}

/// Max-norm action displacement `|I' - I|` of the normalizing coordinates
/// at the original point `x`.
pub fn action_displacement(map: &dyn CoordinateMap, x: &PhasePoint) -> Result<f64> {
    Ok(map
        .inverse_displacement(x)?
        .actions
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max))
}

/// Pushes the trajectory through the inverse of `map` and measures the
/// variation of the normalized actions.
pub fn verify_normal_form(map: &dyn CoordinateMap, traj: &Trajectory) -> Result<NormalFormCheck> {
    let mut raw: f64 = 0.0;
    let mut transformed: f64 = 0.0;
    let mut d0: Option<Vec<f64>> = None;
    let (mut first, mut last) = (0.0, 0.0);
    for i in 0..traj.len() {
        let d = map.inverse_displacement(&traj.point(i))?.actions;
        let base = d0.get_or_insert_with(|| d.clone());
        for l in 0..d.len() {
            let dev = traj.deviations[i][l];
            raw = raw.max(dev.abs());
            transformed = transformed.max((dev + (d[l] - base[l])).abs());
        }
        let size = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if i == 0 {
            first = size;
        }
        last = size;
    }
    Ok(NormalFormCheck {
        raw_variation: raw,
        transformed_variation: transformed,
        displacement_start: first,
        displacement_end: last,
    })
}

#[cfg(test)]
mod tests;
