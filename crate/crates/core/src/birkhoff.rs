//! Strong Birkhoff normalization for isochronous systems `omega . I + eta + F`
//! with time-decaying `F`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{homological_bound, IsoSchedule};
use crate::error::{Error, Result};
use crate::fourier_taylor::{lie_series_weighted, Coeff, Observable, Series};
use crate::timefn::{ExpPoly, TimeFn, Weight};
use crate::transform::{ActionDomain, LieSeriesMap};

/// Choice of the free constant in each homological solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// `c_k(t) -> 0` as `t -> infinity`.
    #[default]
    Decaying,
    /// `c_k(0) = 0`; bounded but in general not decaying. Exponential
    /// polynomials only.
    Zero,
}

/// Solves `c' + i lambda c = f` for one mode.
pub fn solve_time_mode(f: &TimeFn, lambda: f64, ic: InitialCondition) -> Result<TimeFn> {
    let tail = f.oscillatory_tail(lambda)?;
    match ic {
        InitialCondition::Decaying => Ok(tail),
        InitialCondition::Zero => {
            if !matches!(tail, TimeFn::Exp(_)) {
                return Err(Error::InvalidParameter(format!(
                    "zero initial condition needs exponential-polynomial modes, got {}",
                    tail.class_name()
                )));
            }
            let c0 = tail.eval(0.0);
            if c0.norm() == 0.0 {
                return Ok(tail);
            }
            let free = ExpPoly::term(c0, 0, Complex64::new(0.0, -lambda))?;
            Ok(tail.sub(&TimeFn::Exp(free)))
        }
    }
}

/// Solves `chi_t + omega(I) . chi_phi = F` mode by mode, with `omega`
/// evaluated at the coefficient's expansion point or grid node.
pub fn solve_homological<C: Coeff>(
    f: &Series<C>,
    omega: &dyn Fn(&[f64]) -> Vec<f64>,
    ic: InitialCondition,
) -> Result<Series<C>> {
    let ctx = f.ctx();
    let mut chi = f.map_coeffs(|k, c| {
        c.map_time_at(ctx, &|x| k.dot(&omega(x)), &|g, lam, node| {
            solve_time_mode(g, lam, ic).map_err(|e| match e {
                Error::TailDiverges(reason) => Error::NonIntegrableMode {
                    harmonic: k.0.clone(),
                    node: format!(" at I = {node:?}"),
                    reason,
                },
                other => other,
            })
        })
    })?;
    chi.add_ledger(-f.ledger());
    Ok(chi)
}

/// Homological solve for constant frequencies.
pub fn solve_homological_iso<C: Coeff>(f: &Series<C>, omega: &[f64], ic: InitialCondition) -> Result<Series<C>> {
    solve_homological(f, &|_| omega.to_vec(), ic)
}

/// Sample point `(I, phi, t)`.
pub type Sample = (Vec<f64>, Vec<f64>, f64);

/// Deterministic quasi-random points in `[lo, hi] x T^n x [0, t_max]`.
pub fn sample_points(lo: &[f64], hi: &[f64], t_max: f64, count: usize) -> Vec<Sample> {
    let n = lo.len();
    // Kronecker sequence with square roots of primes as generators.
    const PRIMES: [f64; 9] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0];
    let alpha = |d: usize| PRIMES[d % PRIMES.len()].sqrt().fract();
    (1..=count)
        .map(|i| {
            let u = |d: usize| (i as f64 * alpha(d)).fract();
            let actions = (0..n).map(|l| lo[l] + (hi[l] - lo[l]) * u(l)).collect();
            let angles = (0..n).map(|l| std::f64::consts::TAU * u(n + l)).collect();
            (actions, angles, t_max * u(2 * n))
        })
        .collect()
}

/// `max |chi_t + omega(I) . chi_phi - F|` over the samples.
pub fn homological_residual<C: Coeff>(
    chi: &Series<C>,
    f: &Series<C>,
    omega: &dyn Fn(&[f64]) -> Vec<f64>,
    samples: &[Sample],
) -> Result<f64> {
    let chi_t = chi.d_time()?;
    let n = chi.meta().n;
    let grads: Vec<Series<C>> = (0..n).map(|l| chi.d_angle(l)).collect();
    let mut worst: f64 = 0.0;
    for (actions, angles, t) in samples {
        let w = omega(actions);
        let mut v = chi_t.eval(actions, angles, *t) - f.eval(actions, angles, *t);
        for l in 0..n {
            v += grads[l].eval(actions, angles, *t) * w[l];
        }
        worst = worst.max(v.norm());
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffConfig {
    pub j_max: usize,
    /// Stop once the measured `M_j` is at most this.
    pub stop_tol: f64,
    /// Maximal Lie-series order per step.
    pub s_max: usize,
    /// Lie-series terms are summed until `||L^s F / s!|| <= lie_tol ||F||`.
    pub lie_tol: f64,
    /// Weight for measured norms of `F^{(j)}`.
    pub weight: Weight,
    /// Weight for measured norms of `chi^{(j)}`.
    pub chi_weight: Weight,
    pub initial_condition: InitialCondition,
    /// Relative threshold for pruning time-function terms after each step.
    pub prune_rel: f64,
    /// Absolute tolerance for the coordinate Lie series of the map.
    pub map_tol: f64,
}

impl BirkhoffConfig {
    pub fn exponential(a: f64) -> Self {
        Self {
            j_max: 6,
            stop_tol: 0.0,
            s_max: 60,
            lie_tol: 1e-17,
            weight: Weight::Exp { rate: a },
            chi_weight: Weight::Exp { rate: a },
            initial_condition: InitialCondition::Decaying,
            prune_rel: 1e-15,
            map_tol: 1e-17,
        }
    }

    /// Weights for `(t+1)^{-p}` perturbations: `chi` loses one power.
    pub fn rational(power: u32) -> Self {
        Self {
            weight: Weight::Power { power },
            chi_weight: Weight::Power {
                power: power.saturating_sub(1),
            },
            ..Self::exponential(0.0)
        }
    }
}

/// Per-step report row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub j: usize,
    /// Measured `M_j` of `F^{(j)}` at `(rho_j, sigma_j)`.
    pub m: f64,
    /// Scheduled `eps_j`, when a schedule is attached.
    pub eps_sched: Option<f64>,
    pub rho: f64,
    pub sigma: f64,
    pub theta: Option<f64>,
    /// Accumulated truncation and pruning ledger of `F^{(j)}`.
    pub ledger: f64,
    /// Measured norm of `chi^{(j)}`, filled once the step runs.
    pub chi_m: Option<f64>,
    /// Bound `(M_j/a)(e/(d_j sigma_j))^{2n}` on `chi^{(j)}`.
    pub chi_bound: Option<f64>,
    /// Number of Lie-series orders summed for `F^{(j+1)}`.
    pub lie_orders: usize,
    pub lie_tail: f64,
}

#[derive(Clone, Debug)]
pub struct BirkhoffState<C: Coeff> {
    pub j: usize,
    pub omega: Vec<f64>,
    pub f: Series<C>,
    pub chis: Vec<Series<C>>,
    pub history: Vec<StepRecord>,
    pub schedule: Option<IsoSchedule>,
    pub outside_regime: bool,
}

impl<C: Coeff> BirkhoffState<C> {
    pub fn new(f: Series<C>, omega: Vec<f64>, cfg: &BirkhoffConfig, schedule: Option<IsoSchedule>) -> Result<Self> {
        if omega.len() != f.meta().n {
            return Err(Error::InvalidParameter(format!(
                "omega has {} components for n = {}",
                omega.len(),
                f.meta().n
            )));
        }
        let outside_regime = schedule.as_ref().is_some_and(|s| !s.in_regime);
        let mut state = Self {
            j: 0,
            omega,
            f,
            chis: vec![],
            history: vec![],
            schedule,
            outside_regime,
        };
        let rec = state.record(cfg)?;
        state.history.push(rec);
        Ok(state)
    }

    fn record(&self, cfg: &BirkhoffConfig) -> Result<StepRecord> {
        let meta = self.f.meta();
        Ok(StepRecord {
            j: self.j,
            m: self.f.weighted_norm(meta.rho, meta.sigma, cfg.weight)?,
            eps_sched: self.schedule.as_ref().map(|s| s.eps_j(self.j)),
            rho: meta.rho,
            sigma: meta.sigma,
            theta: self.schedule.as_ref().map(|s| s.theta(self.j)),
            ledger: self.f.ledger(),
            chi_m: None,
            chi_bound: None,
            lie_orders: 0,
            lie_tail: 0.0,
        })
    }

    /// Last measured `M_j`.
    pub fn m(&self) -> f64 {
        self.history.last().map_or(0.0, |r| r.m)
    }

    /// Measured `M_j` for every computed `j`.
    pub fn norms(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.m).collect()
    }

    /// `M_j <= eps_j` for every computed `j` (vacuous without a schedule).
    pub fn within_schedule(&self) -> bool {
        self.history.iter().all(|r| r.eps_sched.is_none_or(|e| r.m <= e))
    }
}

/// One step: `chi^{(j)}` from the homological equation, then
/// `F^{(j+1)} = sum_{s>=1} s/(s+1)! L_chi^s F^{(j)}` on shrunk radii.
pub fn birkhoff_step<C: Coeff>(mut state: BirkhoffState<C>, cfg: &BirkhoffConfig) -> Result<BirkhoffState<C>> {
    let j = state.j;
    let meta = state.f.meta().clone();
    let chi = solve_homological_iso(&state.f, &state.omega, cfg.initial_condition)?;

    let chi_m = chi.weighted_norm(meta.rho, meta.sigma, cfg.chi_weight)?;
    let chi_bound = match (&state.schedule, cfg.weight) {
        (Some(s), Weight::Exp { rate }) if rate > 0.0 => {
            Some(homological_bound(state.m(), rate, s.d_j(j), meta.sigma, meta.n))
        }
        _ => None,
    };

    let scale = state.f.norm_bound(meta.rho, meta.sigma, 0.0).max(f64::MIN_POSITIVE);
    let weights: Vec<f64> = (0..=cfg.s_max + 1)
        .scan(1.0, |fact, s| {
            if s > 0 {
                *fact *= s as f64;
            }
            Some(*fact)
        })
        .collect();
    let lie = lie_series_weighted(
        &chi,
        &Observable::from_series(state.f.clone()),
        |s| s as f64 / weights[s + 1],
        cfg.s_max,
        cfg.lie_tol * scale,
    )
    .map_err(|e| match e {
        Error::LieSeriesDiverged { history, .. } => Error::BirkhoffDiverged {
            step: j,
            theta: state.schedule.as_ref().map(|s| s.theta(j)),
            history,
        },
        other => other,
    })?;

    let (rho, sigma) = match &state.schedule {
        Some(s) => s.radii(j + 1),
        None => (meta.rho, meta.sigma),
    };
    let mut next = lie.sum.with_radii(rho, sigma);
    next.add_ledger(state.f.ledger() + lie.tail);
    next.prune(cfg.prune_rel);

    if let Some(rec) = state.history.last_mut() {
        rec.chi_m = Some(chi_m);
        rec.chi_bound = chi_bound;
        rec.lie_orders = lie.history.len();
        rec.lie_tail = lie.tail;
    }
    state.chis.push(chi);
    state.f = next;
    state.j += 1;
    let rec = state.record(cfg)?;
    state.history.push(rec);
    Ok(state)
}

/// Runs steps until `M_j <= stop_tol` or `j = j_max`, then builds the
/// composed map `B = Phi_0 o ... o Phi_J` on `domain`.
pub fn run_birkhoff<C: Coeff>(
    f: Series<C>,
    omega: Vec<f64>,
    cfg: &BirkhoffConfig,
    schedule: Option<IsoSchedule>,
    domain: ActionDomain,
) -> Result<(BirkhoffState<C>, LieSeriesMap<C>)> {
    let mut state = BirkhoffState::new(f, omega, cfg, schedule)?;
    while state.j < cfg.j_max && state.m() > cfg.stop_tol {
        state = birkhoff_step(state, cfg)?;
    }
    let chis: Vec<Series<C>> = state.chis.iter().filter(|c| !c.is_zero()).cloned().collect();
    let map = LieSeriesMap::new(&chis, domain, cfg.s_max, cfg.map_tol)?;
    Ok((state, map))
}

#[cfg(test)]
mod tests;
