//! Constants, normalization and dynamics stages for one scenario.

use anyhow::{bail, Result};
use apnf::birkhoff::{birkhoff_step, homological_residual, sample_points, BirkhoffConfig, BirkhoffState};
use apnf::constants::{
    eps_a_star, iso_schedule, iso_variant_constants, nekho_params_with_order, stability_bound, IsoSchedule, NekhoParams,
    StabilityBound, VariantClass,
};
use apnf::dynamics::{integrate, measure_drift, verify_normal_form, ExtendedHamiltonian, IntegratorConfig, Trajectory};
use apnf::fourier_taylor::{Coeff, GridCoeff, GridCtx, Harmonic, Meta, Series, TaylorCoeff, TaylorCtx};
use apnf::nekhoroshev::{build_shells, normalize_order_r, remainder_norm, NormalFormConfig};
use apnf::poly::Poly;
use apnf::transform::{ActionDomain, CoordinateMap, LieSeriesMap, PhasePoint};
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifacts::{num, Artifacts, Provenance, Table};
use crate::scenario::{self, Scenario, Scheme, SweepParam, TimeClass, Trig};

use Provenance::{Measured, PaperBound, Schedule};

/// Homological residual tolerance relative to the source norm.
const RESIDUAL_TOL: f64 = 1e-12;
/// Round-trip tolerance of the normalizing maps.
const ROUND_TRIP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum RunMode {
    Constants,
    Normalize,
    Verify,
    Sweep,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Constants => "constants",
            RunMode::Normalize => "normalize",
            RunMode::Verify => "verify",
            RunMode::Sweep => "sweep",
        }
    }
}

/// Result of a run; `hard_failures` drive the exit status, `regime_flags` do not.
#[derive(Debug, Default, Serialize)]
pub struct Outcome {
    pub hard_failures: Vec<String>,
    pub regime_flags: Vec<String>,
    pub summary: serde_json::Map<String, Value>,
}

impl Outcome {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.hard_failures.push(what());
        }
    }
}

pub fn run(sc: &Scenario, mode: RunMode, out: &mut Artifacts) -> Result<Outcome> {
    let mut o = Outcome::default();
    match (sc.algorithm.mode, mode) {
        (_, RunMode::Sweep) => sweep(sc, out, &mut o)?,
        (Scheme::Birkhoff, m) => birkhoff(sc, m, out, &mut o)?,
        (Scheme::Nekhoroshev, m) => nekhoroshev(sc, m, out, &mut o)?,
    }
    Ok(o)
}

// ------------------------------------------------------------------ helpers

fn harmonic(k: &[i32]) -> Harmonic {
    Harmonic(k.to_vec())
}

/// `sum_modes amplitude * poly * trig(k.phi) * g(t)`, all scaled by `eps`.
fn perturbation<C: Coeff>(sc: &Scenario, meta: Meta<C::Ctx>, eps: f64) -> Result<Series<C>> {
    let mut f = Series::zero(meta);
    let n = sc.system.n;
    for (i, m) in sc.perturbation.modes.iter().enumerate() {
        let field = format!("perturbation.modes[{i}]");
        let class = m.time.as_ref().unwrap_or(&sc.perturbation.time);
        let g = class.build(eps * m.amplitude, &format!("{field}.time"))?;
        let p = match &m.poly {
            Some(terms) => Some(scenario::poly(n, terms, &format!("{field}.poly"))?),
            None => None,
        };
        match m.trig {
            Trig::Cos => f.add_cosine(harmonic(&m.k), &g, p.as_ref()),
            Trig::Sin => f.add_sine(harmonic(&m.k), &g, p.as_ref()),
        }
    }
    Ok(f)
}

fn taylor_meta(sc: &Scenario, k_max: u32, rho: f64, sigma: f64) -> Meta<TaylorCtx> {
    Meta {
        n: sc.system.n,
        k_max,
        rho,
        sigma,
        ctx: TaylorCtx::new(&sc.system.lo, &sc.system.hi, sc.algorithm.taylor_degree),
    }
}

fn max_harmonic(sc: &Scenario) -> u32 {
    sc.perturbation
        .modes
        .iter()
        .map(|m| m.k.iter().map(|v| v.unsigned_abs()).sum::<u32>())
        .max()
        .unwrap_or(1)
}

fn domain(sc: &Scenario, pad: f64) -> ActionDomain {
    ActionDomain {
        lo: sc.system.lo.clone(),
        hi: sc.system.hi.clone(),
        pad,
    }
}

/// `G` shrunk by 10% of its width on every side.
fn inner_box(sc: &Scenario) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = (&sc.system.lo, &sc.system.hi);
    let lo_in = lo.iter().zip(hi).map(|(a, b)| a + 0.1 * (b - a)).collect();
    let hi_in = lo.iter().zip(hi).map(|(a, b)| b - 0.1 * (b - a)).collect();
    (lo_in, hi_in)
}

fn sup<C: Coeff>(s: &Series<C>) -> f64 {
    let m = s.meta();
    s.norm_bound(m.rho, m.sigma, 0.0)
}

fn omega_iso(h: &Poly, at: &[f64]) -> Vec<f64> {
    h.gradient().iter().map(|g| g.eval(at)).collect()
}

/// Largest `|forward(inverse(x)) - x|` over sampled points with `eta = 0.1`.
fn round_trip(map: &dyn CoordinateMap, sc: &Scenario, t_max: f64) -> Result<f64> {
    let (lo, hi) = inner_box(sc);
    let mut worst: f64 = 0.0;
    for (i, p, t) in sample_points(&lo, &hi, t_max, sc.verification.samples) {
        let x = PhasePoint::new(i, p, 0.1, t);
        worst = worst.max(map.forward(&map.inverse(&x)?)?.distance(&x));
    }
    Ok(worst)
}

fn trajectory_rows(table: &mut Table, ic: usize, traj: &Trajectory) {
    for i in 0..traj.len() {
        let mut row = vec![ic.to_string(), num(traj.times[i])];
        row.extend(traj.actions(i).into_iter().map(num));
        row.extend(traj.deviations[i].iter().copied().map(num));
        row.extend(traj.angles[i].iter().copied().map(num));
        row.push(num(traj.energy[i]));
        table.push(row, Measured);
    }
}

fn trajectory_table(n: usize) -> Table {
    let mut cols = vec!["ic".to_string(), "t".to_string()];
    for prefix in ["I", "dI", "phi"] {
        cols.extend((1..=n).map(|l| format!("{prefix}_{l}")));
    }
    cols.push("energy".into());
    let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    Table::new(&refs)
}

struct Dynamics {
    drift: Table,
    trajectory: Table,
    reports: Vec<Value>,
    worst_margin: f64,
    min_improvement: f64,
}

/// Integrates every initial condition of `sc` and compares with `map`.
fn run_dynamics(
    sc: &Scenario,
    h: Poly,
    eps: f64,
    horizon: f64,
    bound: Option<f64>,
    map: &dyn CoordinateMap,
) -> Result<(Dynamics, Vec<Trajectory>)> {
    let n = sc.system.n;
    let k_max = max_harmonic(sc).max(1);
    let f = perturbation::<TaylorCoeff>(sc, taylor_meta(sc, k_max, sc.system.rho, sc.system.sigma), 1.0)?;
    let ham = ExtendedHamiltonian::new(h, f, eps)?;
    let cfg = IntegratorConfig {
        tol: sc.verification.tol,
        ..IntegratorConfig::default()
    };
    let mut d = Dynamics {
        drift: Table::new(&["ic", "quantity", "value"]),
        trajectory: trajectory_table(n),
        reports: vec![],
        worst_margin: 0.0,
        min_improvement: f64::INFINITY,
    };
    let mut trajs = vec![];
    for (ic, (actions, angles)) in sc.initial_conditions().into_iter().enumerate() {
        let traj = integrate(&ham, &actions, &angles, horizon, &cfg)?;
        let drift = measure_drift(&traj, bound.unwrap_or(f64::INFINITY), horizon);
        let check = verify_normal_form(map, &traj)?;
        let id = ic.to_string();
        for (l, v) in drift.per_component.iter().enumerate() {
            d.drift.push(vec![id.clone(), format!("drift_{}", l + 1), num(*v)], Measured);
        }
        d.drift.push(vec![id.clone(), "drift".into(), num(drift.euclidean)], Measured);
        if let Some(b) = bound {
            d.drift.push(vec![id.clone(), "bound".into(), num(b)], PaperBound);
            d.drift.push(vec![id.clone(), "margin".into(), num(drift.margin)], Measured);
            d.worst_margin = d.worst_margin.max(drift.margin);
        }
        d.drift.push(vec![id.clone(), "raw_variation".into(), num(check.raw_variation)], Measured);
        d.drift.push(
            vec![id.clone(), "transformed_variation".into(), num(check.transformed_variation)],
            Measured,
        );
        d.drift.push(vec![id.clone(), "steps".into(), traj.stats.steps.to_string()], Measured);
        if check.raw_variation > 0.0 {
            d.min_improvement = d.min_improvement.min(check.improvement());
        }
        trajectory_rows(&mut d.trajectory, ic, &traj);
        d.reports.push(json!({
            "initial_actions": actions,
            "initial_angles": angles,
            "drift": drift,
            "normal_form": check,
            "stats": traj.stats,
        }));
        trajs.push(traj);
    }
    Ok((d, trajs))
}

// ---------------------------------------------------------------- iterated

struct IsoSetup {
    h: Poly,
    omega: Vec<f64>,
    c_omega: f64,
    rate: Option<f64>,
    eps: f64,
    schedule: Option<IsoSchedule>,
    variant: Option<VariantClass>,
    cfg: BirkhoffConfig,
    t_ref: f64,
}

fn iso_setup(sc: &Scenario) -> Result<IsoSetup> {
    let h = sc.h()?;
    let omega = omega_iso(&h, &sc.system.lo);
    let c_omega = 1.0 + omega.iter().map(|w| w.abs()).sum::<f64>();
    let time = &sc.perturbation.time;
    let rate = time.rate(sc.algorithm.rate);
    let (n, rho, sigma) = (sc.system.n, sc.system.rho, sc.system.sigma);
    let eps = match (sc.perturbation.eps, sc.perturbation.eps_fraction, rate) {
        (Some(e), _, _) => e,
        (None, Some(frac), Some(a)) => frac * iso_schedule(n, a, rho, sigma, c_omega, 0.0)?.eps_a,
        (None, _, None) => bail!("perturbation.eps_fraction: needs a decay class with an exponential rate"),
        (None, None, Some(_)) => unreachable!("validated"),
    };
    let schedule = match rate {
        Some(a) => Some(iso_schedule(n, a, rho, sigma, c_omega, eps)?),
        None => None,
    };
    let variant = match time {
        TimeClass::Exponential { .. } => Some(VariantClass::Exponential),
        TimeClass::Bumps {
            centers,
            amplitudes,
            width,
        } => Some(VariantClass::Bump {
            centers: centers.clone(),
            amplitudes: amplitudes.clone(),
            width: *width,
        }),
        TimeClass::Quadratic { .. } => None,
    };
    let base = match (time, rate) {
        (TimeClass::Quadratic { .. }, _) => {
            let order = sc
                .perturbation
                .modes
                .iter()
                .filter_map(|m| match m.time.as_ref().unwrap_or(time) {
                    TimeClass::Quadratic { order, .. } => Some(*order),
                    _ => None,
                })
                .min()
                .unwrap_or(2);
            BirkhoffConfig::rational(order)
        }
        (_, Some(a)) => BirkhoffConfig::exponential(a),
        (_, None) => unreachable!("only the quadratic class lacks a rate"),
    };
    let cfg = BirkhoffConfig {
        j_max: sc.algorithm.j_max,
        prune_rel: sc.algorithm.prune_rel,
        ..base
    };
    let t_ref = match time {
        TimeClass::Bumps { centers, width, .. } => centers.last().unwrap() + 2.0 * width,
        _ => rate.map_or(100.0, |a| 40.0 / a),
    };
    Ok(IsoSetup {
        h,
        omega,
        c_omega,
        rate,
        eps,
        schedule,
        variant,
        cfg,
        t_ref,
    })
}

fn iso_constants(sc: &Scenario, s: &IsoSetup, out: &mut Artifacts, o: &mut Outcome) -> Result<()> {
    let mut t = Table::new(&["quantity", "value"]);
    t.push(vec!["eps".into(), num(s.eps)], Schedule);
    t.push(vec!["C_omega".into(), num(s.c_omega)], Schedule);
    let k_variant = match &s.variant {
        Some(v) => Some(iso_variant_constants(v, sc.system.n, sc.system.rho, sc.system.sigma, s.c_omega)?),
        None => None,
    };
    if let Some(k) = k_variant {
        t.push(vec!["K".into(), num(k)], PaperBound);
    }
    let mut seq = Table::new(&["j", "quantity", "value"]);
    if let Some(sch) = &s.schedule {
        t.push(vec!["eps_a".into(), num(sch.eps_a)], PaperBound);
        t.push(vec!["in_regime".into(), sch.in_regime.to_string()], PaperBound);
        t.push(vec!["tau".into(), sch.tau.to_string()], PaperBound);
        t.push(vec!["d_sum".into(), num(sch.d_sum)], Schedule);
        t.push(vec!["rho_star".into(), num(sch.rho_star)], Schedule);
        t.push(vec!["sigma_star".into(), num(sch.sigma_star)], Schedule);
        for j in 0..=sc.algorithm.j_max {
            let (rho, sigma) = sch.radii(j);
            for (q, v) in [
                ("eps_j", sch.eps_j(j)),
                ("d_j", sch.d_j(j)),
                ("rho_j", rho),
                ("sigma_j", sigma),
                ("theta_j", sch.theta(j)),
            ] {
                seq.push(vec![j.to_string(), q.into(), num(v)], Schedule);
            }
        }
        if !sch.in_regime {
            o.regime_flags.push(format!("eps = {:e} above eps_a = {:e}: fallback d_j schedule", s.eps, sch.eps_a));
        }
    } else {
        o.regime_flags.push("no exponential rate: schedule not available for this decay class".into());
    }
    out.table("constants.csv", &t)?;
    out.table("schedule.csv", &seq)?;
    out.json(
        "schedule.json",
        &json!({ "eps": s.eps, "omega": s.omega, "c_omega": s.c_omega, "rate": s.rate,
                 "variant_constant": k_variant, "schedule": s.schedule }),
    )?;
    o.summary.insert("eps".into(), json!(s.eps));
    Ok(())
}

fn birkhoff(sc: &Scenario, mode: RunMode, out: &mut Artifacts, o: &mut Outcome) -> Result<()> {
    let s = iso_setup(sc)?;
    iso_constants(sc, &s, out, o)?;
    if mode == RunMode::Constants {
        return Ok(());
    }

    let k_max = sc.algorithm.k_max.unwrap_or(24).max(max_harmonic(sc));
    let f = perturbation::<TaylorCoeff>(sc, taylor_meta(sc, k_max, sc.system.rho, sc.system.sigma), s.eps)?;
    let mut state = BirkhoffState::new(f, s.omega.clone(), &s.cfg, s.schedule.clone())?;
    let mut sources = vec![];
    while state.j < s.cfg.j_max && state.m() > s.cfg.stop_tol {
        sources.push(state.f.clone());
        state = birkhoff_step(state, &s.cfg)?;
    }

    let pts = sample_points(&sc.system.lo, &sc.system.hi, s.t_ref, sc.verification.samples);
    let omega = s.omega.clone();
    let freq = move |_: &[f64]| omega.clone();
    let mut worst_residual: f64 = 0.0;
    for (chi, src) in state.chis.iter().zip(&sources) {
        let norm = sup(src);
        if norm > 0.0 {
            worst_residual = worst_residual.max(homological_residual(chi, src, &freq, &pts)? / norm);
        }
    }
    o.check(worst_residual <= RESIDUAL_TOL, || {
        format!("homological residual {worst_residual:e} above {RESIDUAL_TOL:e} of the source norm")
    });

    let mut steps = Table::new(&["j", "quantity", "value"]);
    for r in &state.history {
        let j = r.j.to_string();
        let mut push = |q: &str, v: String, p| steps.push(vec![j.clone(), q.into(), v], p);
        push("M", num(r.m), Measured);
        push("rho", num(r.rho), Schedule);
        push("sigma", num(r.sigma), Schedule);
        push("ledger", num(r.ledger), Measured);
        if let Some(e) = r.eps_sched {
            push("eps_sched", num(e), Schedule);
        }
        if let Some(th) = r.theta {
            push("theta", num(th), Schedule);
        }
        if let Some(c) = r.chi_m {
            push("chi", num(c), Measured);
        }
        if let Some(c) = r.chi_bound {
            push("chi_bound", num(c), PaperBound);
        }
        push("lie_orders", r.lie_orders.to_string(), Measured);
        push("lie_tail", num(r.lie_tail), Measured);
    }
    out.table("steps.csv", &steps)?;

    let norms = state.norms();
    let (m0, m_last) = (norms[0], *norms.last().unwrap());
    let converged = m_last == 0.0 || m_last <= 1e-8 * m0;
    let within = state.within_schedule();
    if !state.outside_regime && s.schedule.is_some() {
        o.check(within, || "measured M_j above the scheduled eps_j inside the proven regime".into());
    }
    let chis: Vec<Series<TaylorCoeff>> = state.chis.iter().filter(|c| !c.is_zero()).cloned().collect();
    let map = LieSeriesMap::new(&chis, domain(sc, 0.0), s.cfg.s_max, s.cfg.map_tol)?;
    let trip = round_trip(&map, sc, s.t_ref)?;
    o.check(trip <= ROUND_TRIP_TOL, || format!("map round trip {trip:e} above {ROUND_TRIP_TOL:e}"));

    let report = json!({
        "steps": state.j,
        "norms": norms,
        "converged": converged,
        "within_schedule": within,
        "outside_regime": state.outside_regime,
        "max_residual": worst_residual,
        "round_trip": trip,
        "history": state.history,
    });
    out.json("normalization.json", &report)?;
    for key in ["steps", "converged", "within_schedule", "max_residual", "round_trip"] {
        o.summary.insert(key.into(), report[key].clone());
    }
    if mode == RunMode::Normalize {
        return Ok(());
    }

    let horizon = sc.verification.horizon.unwrap_or(s.t_ref.max(1.0));
    let (dynamics, trajs) = run_dynamics(sc, s.h.clone(), s.eps, horizon, None, &map)?;
    if let TimeClass::Bumps { centers, width, .. } = &sc.perturbation.time {
        let t_off = centers.last().unwrap() + width;
        if sc.perturbation.modes.iter().all(|m| m.time.is_none()) {
            let frozen = trajs.iter().map(|t| t.increment_after(t_off)).fold(0.0, f64::max);
            o.check(frozen == 0.0, || format!("action increment {frozen:e} after the last bump"));
            o.summary.insert("increment_after_bumps".into(), json!(frozen));
        }
    }
    finish_dynamics(out, o, dynamics, horizon)
}

fn finish_dynamics(out: &mut Artifacts, o: &mut Outcome, d: Dynamics, horizon: f64) -> Result<()> {
    out.table("drift.csv", &d.drift)?;
    out.table("trajectory.csv", &d.trajectory)?;
    out.json("drift.json", &json!({ "horizon": horizon, "initial_conditions": d.reports }))?;
    o.summary.insert("horizon".into(), json!(horizon));
    o.summary.insert("max_drift_margin".into(), json!(d.worst_margin));
    if d.min_improvement.is_finite() {
        o.summary.insert("min_variation_improvement".into(), json!(d.min_improvement));
    }
    Ok(())
}

// ------------------------------------------------------------ finite order

fn nekho_eps(sc: &Scenario, a: f64) -> f64 {
    let sys = &sc.system;
    match sc.perturbation.eps {
        Some(e) => e,
        None => {
            sc.perturbation.eps_fraction.unwrap() * eps_a_star(sys.n, a, sys.rho, sys.sigma, sys.c_h, sc.algorithm.d)
        }
    }
}

fn nekho_rate(sc: &Scenario) -> f64 {
    match sc.perturbation.time {
        TimeClass::Exponential { a, .. } => a,
        _ => unreachable!("validated"),
    }
}

fn nekho_constants(sc: &Scenario, p: &NekhoParams, out: &mut Artifacts, o: &mut Outcome) -> Result<Option<StabilityBound>> {
    let mut t = Table::new(&["quantity", "value"]);
    t.push(vec!["eps".into(), num(p.eps)], Schedule);
    for (q, v) in [
        ("eps_a_star", p.eps_a_star),
        ("N", p.big_n as f64),
        ("r", p.r as f64),
        ("rho", p.rho),
        ("sigma", p.sigma),
        ("h", p.h),
        ("A", p.big_a),
        ("C_r", p.c_r),
        ("Gamma", p.big_gamma),
    ] {
        t.push(vec![q.into(), num(v)], PaperBound);
    }
    for s in 1..=p.r as usize + 1 {
        t.push(vec![format!("a_{s}"), num(p.a_s(s))], Schedule);
    }
    let failed = p.failed_flags();
    let bound = if failed.is_empty() {
        let b = stability_bound(p)?;
        t.push(vec!["drift_bound".into(), num(b.total)], PaperBound);
        Some(b)
    } else {
        o.regime_flags.extend(failed.iter().map(|f| format!("smallness condition fails: {f}")));
        None
    };
    let mut flags = Table::new(&["name", "lhs", "rhs", "pass"]);
    for f in &p.flags {
        flags.push(vec![f.name.clone(), num(f.lhs), num(f.rhs), f.pass.to_string()], PaperBound);
    }
    out.table("constants.csv", &t)?;
    out.table("flags.csv", &flags)?;
    out.json("params.json", &json!({ "params": p, "stability_bound": bound, "scenario": sc.name }))?;
    o.summary.insert("eps".into(), json!(p.eps));
    o.summary.insert("r".into(), json!(p.r));
    Ok(bound)
}

fn nekhoroshev(sc: &Scenario, mode: RunMode, out: &mut Artifacts, o: &mut Outcome) -> Result<()> {
    let sys = &sc.system;
    let a = nekho_rate(sc);
    let eps = nekho_eps(sc, a);
    let p = nekho_params_with_order(sys.n, a, sys.rho, sys.sigma, sys.c_h, sc.algorithm.d, eps, sc.algorithm.r)?;
    let bound = nekho_constants(sc, &p, out, o)?;
    if mode == RunMode::Constants {
        return Ok(());
    }

    let (r, big_n) = (p.r as usize, p.big_n);
    let k_max = sc.algorithm.k_max.unwrap_or(p.r * big_n + 2 * big_n);
    let nodes = vec![sc.algorithm.grid_nodes - 1; sys.n];
    let meta = Meta {
        n: sys.n,
        k_max,
        rho: p.rho,
        sigma: p.sigma,
        ctx: GridCtx::new(&sys.lo, &sys.hi, &nodes, 1.0)?,
    };
    let f = perturbation::<GridCoeff>(sc, meta, eps)?;
    let h = sc.h()?;
    let sh = build_shells(&f, h.clone(), big_n, r, a)?;
    let cfg = NormalFormConfig {
        s_total: sc.algorithm.s_total,
        prune_rel: sc.algorithm.prune_rel,
        ..NormalFormConfig::default()
    };
    let res = normalize_order_r(&sh, &cfg)?;

    let t_ref = 40.0 / a;
    let pts = sample_points(&sys.lo, &sys.hi, t_ref, sc.verification.samples);
    let freq = sh.omega();
    let mut worst_residual: f64 = 0.0;
    for (chi, psi) in res.chis.iter().zip(&res.psi) {
        let norm = sup(psi);
        if norm > 0.0 {
            worst_residual = worst_residual.max(homological_residual(chi, psi, &freq, &pts)? / norm);
        }
    }
    o.check(worst_residual <= RESIDUAL_TOL, || {
        format!("homological residual {worst_residual:e} above {RESIDUAL_TOL:e} of the source norm")
    });

    let mut levels = Table::new(&["s", "quantity", "value"]);
    for rep in &res.reports {
        let s = rep.s.to_string();
        if rep.s <= r {
            levels.push(vec![s.clone(), "psi".into(), num(rep.psi)], Measured);
            levels.push(vec![s.clone(), "chi".into(), num(rep.chi)], Measured);
            levels.push(vec![s.clone(), "chi_rate".into(), num(rep.chi_rate)], Measured);
            levels.push(vec![s.clone(), "a_s".into(), num(p.a_s(rep.s))], Schedule);
        }
        levels.push(vec![s, "level".into(), num(rep.level)], Measured);
    }
    out.table("levels.csv", &levels)?;

    let (rho1, sigma1) = ((1.0 - 2.0 * p.d) * p.rho, (1.0 - 2.0 * p.d) * p.sigma);
    let env = remainder_norm(&res, rho1, sigma1, p.a_s(r + 1))?;
    let mut rem = Table::new(&["t", "quantity", "value"]);
    let mut dominated = true;
    for t in [0.0, 10.0, 40.0] {
        let (m, b) = (env.bound(t), p.remainder_bound(t));
        dominated &= m <= b;
        rem.push(vec![num(t), "remainder".into(), num(m)], Measured);
        rem.push(vec![num(t), "remainder_bound".into(), num(b)], PaperBound);
    }
    out.table("remainder.csv", &rem)?;
    if bound.is_some() {
        o.check(dominated, || "measured remainder above its bound with all smallness conditions met".into());
    }

    let pad = 0.05 * sys.lo.iter().zip(&sys.hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
    let map = res.map(domain(sc, pad))?;
    let trip = round_trip(&map, sc, t_ref)?;
    o.check(trip <= ROUND_TRIP_TOL, || format!("map round trip {trip:e} above {ROUND_TRIP_TOL:e}"));
    let report = json!({
        "r": r,
        "s_total": res.s_total,
        "levels": res.reports,
        "tail": res.tail,
        "remainder": env,
        "remainder_dominated": dominated,
        "max_residual": worst_residual,
        "round_trip": trip,
    });
    out.json("normalization.json", &report)?;
    for key in ["remainder_dominated", "max_residual", "round_trip"] {
        o.summary.insert(key.into(), report[key].clone());
    }
    if mode == RunMode::Normalize {
        return Ok(());
    }

    let horizon = sc.verification.horizon.unwrap_or((40.0 / a).max(20.0 / p.a_s(r + 1)));
    let total = bound.map(|b| b.total);
    let (dynamics, _) = run_dynamics(sc, h, eps, horizon, total, &map)?;
    if total.is_some() {
        let m = dynamics.worst_margin;
        o.check(m < 1.0, || format!("action drift reaches {m:.3} of its bound with all smallness conditions met"));
    }
    finish_dynamics(out, o, dynamics, horizon)
}

// ------------------------------------------------------------------ sweep

fn default_values(center: f64) -> Vec<f64> {
    (-8..=8).map(|i| center * 10f64.powf(i as f64 / 2.0)).collect()
}

fn sweep(sc: &Scenario, out: &mut Artifacts, o: &mut Outcome) -> Result<()> {
    let sys = &sc.system;
    let mut rows = Table::new(&["param", "point", "quantity", "value"]);
    let mut regime = vec![];
    let (param, values) = match sc.algorithm.mode {
        Scheme::Birkhoff => {
            let s = iso_setup(sc)?;
            let Some(a0) = s.rate else {
                bail!("sweep: the quadratic class has no threshold to sweep against");
            };
            let p = sc.sweep.as_ref().map_or(SweepParam::Eps, |w| w.param);
            let values = match &sc.sweep {
                Some(w) => w.values.clone(),
                None => default_values(s.schedule.as_ref().unwrap().eps_a),
            };
            for v in &values {
                let (a, eps) = match p {
                    SweepParam::Eps => (a0, *v),
                    SweepParam::A => (*v, s.eps),
                };
                let sch = iso_schedule(sys.n, a, sys.rho, sys.sigma, s.c_omega, eps)?;
                let pt = num(*v);
                rows.push(vec![name(p), pt.clone(), "eps_a".into(), num(sch.eps_a)], PaperBound);
                rows.push(vec![name(p), pt.clone(), "in_regime".into(), sch.in_regime.to_string()], PaperBound);
                rows.push(vec![name(p), pt.clone(), "d_0".into(), num(sch.d_j(0))], Schedule);
                rows.push(vec![name(p), pt, "theta_0".into(), num(sch.theta(0))], Schedule);
                regime.push(sch.in_regime);
            }
            (p, values)
        }
        Scheme::Nekhoroshev => {
            let a0 = nekho_rate(sc);
            let eps0 = nekho_eps(sc, a0);
            let p = sc.sweep.as_ref().map_or(SweepParam::Eps, |w| w.param);
            let values = match &sc.sweep {
                Some(w) => w.values.clone(),
                None => default_values(eps_a_star(sys.n, a0, sys.rho, sys.sigma, sys.c_h, sc.algorithm.d)),
            };
            for v in &values {
                let (a, eps) = match p {
                    SweepParam::Eps => (a0, *v),
                    SweepParam::A => (*v, eps0),
                };
                let pt = num(*v);
                match nekho_params_with_order(sys.n, a, sys.rho, sys.sigma, sys.c_h, sc.algorithm.d, eps, sc.algorithm.r) {
                    Ok(q) => {
                        let ok = q.failed_flags().is_empty();
                        rows.push(vec![name(p), pt.clone(), "eps_a_star".into(), num(q.eps_a_star)], PaperBound);
                        rows.push(vec![name(p), pt.clone(), "r".into(), q.r.to_string()], PaperBound);
                        rows.push(vec![name(p), pt.clone(), "rho".into(), num(q.rho)], PaperBound);
                        rows.push(vec![name(p), pt, "in_regime".into(), ok.to_string()], PaperBound);
                        regime.push(ok);
                    }
                    Err(e) => {
                        rows.push(vec![name(p), pt, "in_regime".into(), "false".into()], PaperBound);
                        o.regime_flags.push(format!("{} = {v:e}: {e}", name(p)));
                        regime.push(false);
                    }
                }
            }
            (p, values)
        }
    };
    let mut crossings = Table::new(&["param", "below", "above", "in_regime_below", "in_regime_above"]);
    for i in 1..values.len() {
        if regime[i] != regime[i - 1] {
            crossings.push(
                vec![
                    name(param),
                    num(values[i - 1]),
                    num(values[i]),
                    regime[i - 1].to_string(),
                    regime[i].to_string(),
                ],
                PaperBound,
            );
        }
    }
    o.summary.insert("points".into(), json!(values.len()));
    o.summary.insert("crossings".into(), json!(crossings.len()));
    out.table("sweep.csv", &rows)?;
    out.table("crossings.csv", &crossings)?;
    Ok(())
}

fn name(p: SweepParam) -> String {
    match p {
        SweepParam::Eps => "eps".into(),
        SweepParam::A => "a".into(),
    }
}
