use super::*;
use crate::birkhoff::{run_birkhoff, BirkhoffConfig};
use crate::fourier_taylor::{Harmonic, Meta, TaylorCoeff, TaylorCtx};
use crate::timefn::{ExpPoly, PiecewisePoly, TimeFn};
use crate::transform::{ActionDomain, LieSeriesMap};
use num_complex::Complex64;

fn k(v: &[i32]) -> Harmonic {
    Harmonic(v.to_vec())
}

fn meta(n: usize, degree: u32) -> Meta<TaylorCtx> {
    Meta {
        n,
        k_max: 24,
        rho: 0.2,
        sigma: 0.3,
        ctx: TaylorCtx::new(&vec![0.5; n], &vec![1.5; n], degree),
    }
}

fn decay(coeff: f64, rate: f64) -> TimeFn {
    TimeFn::Exp(ExpPoly::decaying(coeff, rate))
}

fn domain(n: usize) -> ActionDomain {
    ActionDomain {
        lo: vec![0.5; n],
        hi: vec![1.5; n],
        pad: 0.0,
    }
}

/// `h = I^2/2`, `f = cos(phi) g(t)`.
fn pendulum_like(eps: f64, g: TimeFn) -> ExtendedHamiltonian<TaylorCoeff> {
    let mut f = Series::zero(meta(1, 4));
    f.add_cosine(k(&[1]), &g, None);
    ExtendedHamiltonian::new(Poly::half_square(1), f, eps).unwrap()
}

fn tight(tol: f64) -> IntegratorConfig {
    IntegratorConfig {
        tol,
        ..IntegratorConfig::default()
    }
}

#[test]
fn integrable_flow_is_linear() {
    let h = Poly::new(2, [(vec![1, 0], 0.7), (vec![0, 2], 0.5)]).unwrap();
    let mut f = Series::<TaylorCoeff>::zero(meta(2, 4));
    f.add_cosine(k(&[1, -1]), &decay(1.0, 0.2), None);
    let ham = ExtendedHamiltonian::new(h, f, 0.0).unwrap();
    let traj = integrate(&ham, &[1.1, 0.9], &[0.3, -1.0], 50.0, &IntegratorConfig::default()).unwrap();
    for i in 0..traj.len() {
        let t = traj.times[i];
        assert_eq!(traj.deviations[i], vec![0.0, 0.0]);
        assert!((traj.angles[i][0] - (0.3 + 0.7 * t)).abs() < 1e-9);
        assert!((traj.angles[i][1] - (-1.0 + 0.9 * t)).abs() < 1e-9);
    }
    assert_eq!(traj.horizon(), 50.0);
    let drift = measure_drift(&traj, 1e-3, 40.0);
    assert_eq!((drift.euclidean, drift.margin, drift.violated, drift.horizon_short), (0.0, 0.0, false, false));
}

#[test]
fn single_cosine_drift_stays_in_envelope() {
    let (eps, a) = (1e-2, 0.2);
    let ham = pendulum_like(eps, decay(1.0, a));
    for (i0, phi0) in [(1.0, 0.0), (0.7, 2.0), (1.3, -1.0)] {
        let traj = integrate(&ham, &[i0], &[phi0], 40.0 / a, &IntegratorConfig::default()).unwrap();
        let drift = measure_drift(&traj, eps / a, 20.0 / a);
        assert!(!drift.violated, "{drift:?}");
        assert!(drift.per_component[0] > 0.0);
        assert!(traj.stats.max_error <= 1.0);
    }
}

#[test]
fn tiny_eps_matches_linearized_drift() {
    // for eps -> 0, J(t) = Im[e^{i phi_0} (1 - e^{(i I_0 - a) t}) / (a - i I_0)]
    let (eps, a, i0, phi0) = (1e-24, 0.2, 1.1, 0.4);
    let ham = pendulum_like(eps, decay(1.0, a));
    let traj = integrate(&ham, &[i0], &[phi0], 30.0, &tight(1e-12)).unwrap();
    let mut worst: f64 = 0.0;
    for (t, d) in traj.times.iter().zip(&traj.deviations) {
        let z = Complex64::new(0.0, phi0).exp() * (1.0 - Complex64::new(-a, i0).scale(*t).exp()) / Complex64::new(a, -i0);
        worst = worst.max((d[0] / eps - z.im).abs());
    }
    assert!(worst < 1e-9, "{worst}");
    // the scaled deviation is resolved although I_0 + dI == I_0 in f64
    assert_eq!(traj.actions(traj.len() - 1)[0], i0);
}

#[test]
fn time_reversal_returns_to_start() {
    let ham = pendulum_like(0.05, decay(1.0, 0.3));
    let cfg = IntegratorConfig::default();
    let traj = integrate(&ham, &[1.0], &[0.5], 30.0, &cfg).unwrap();
    let err = time_reversal_error(&ham, &traj, &cfg).unwrap();
    assert!(err <= 10.0 * cfg.tol, "{err}");
}

#[test]
fn fixed_step_order_is_five() {
    let ham = pendulum_like(0.3, decay(1.0, 0.5));
    let reference = integrate(&ham, &[1.0], &[0.2], 8.0, &tight(1e-14)).unwrap();
    let last = reference.len() - 1;
    let exact = (reference.deviations[last][0], reference.angles[last][0]);
    let err = |steps| {
        let (d, p) = integrate_fixed(&ham, &[1.0], &[0.2], 8.0, steps).unwrap();
        (d[0] - exact.0).abs().max((p[0] - exact.1).abs())
    };
    let (e1, e2) = (err(40), err(80));
    let ratio = e1 / e2;
    assert!((20.0..48.0).contains(&ratio), "{e1} {e2} {ratio}");
}

#[test]
fn tightening_tolerance_reduces_error() {
    let ham = pendulum_like(0.3, decay(1.0, 0.5));
    let reference = integrate(&ham, &[1.0], &[0.2], 20.0, &tight(1e-14)).unwrap();
    let end = |t: &Trajectory| {
        let i = t.len() - 1;
        (t.deviations[i][0], t.angles[i][0])
    };
    let exact = end(&reference);
    let errs: Vec<f64> = [1e-6, 1e-8, 1e-10]
        .iter()
        .map(|&tol| {
            let e = end(&integrate(&ham, &[1.0], &[0.2], 20.0, &tight(tol)).unwrap());
            (e.0 - exact.0).abs().max((e.1 - exact.1).abs())
        })
        .collect();
    assert!(errs[1] < errs[0] / 5.0 && errs[2] < errs[1] / 5.0, "{errs:?}");
}

#[test]
fn drift_freezes_after_last_bump() {
    let (h, centers) = (0.5, [2.0, 4.0, 7.0]);
    let g = TimeFn::from(PiecewisePoly::bumps(&centers, &[1.0, -0.5, 0.8], h).unwrap());
    let ham = pendulum_like(1e-2, g);
    let traj = integrate(&ham, &[1.0], &[0.3], 30.0, &IntegratorConfig::default()).unwrap();
    assert!(traj.increment_after(0.0) > 0.0);
    assert_eq!(traj.increment_after(7.0 + h), 0.0);
}

#[test]
fn late_bump_is_not_stepped_over() {
    // zero forcing until t = 19.5 lets the step size grow past the bump
    let g = TimeFn::from(PiecewisePoly::bumps(&[20.0], &[1.0], 0.5).unwrap());
    let ham = pendulum_like(1e-2, g);
    let traj = integrate(&ham, &[1.0], &[0.3], 60.0, &IntegratorConfig::default()).unwrap();
    assert!(traj.increment_after(0.0) > 1e-3, "{}", traj.increment_after(0.0));
    assert_eq!(traj.increment_after(20.5), 0.0);
    assert!(traj.times.contains(&19.5) && traj.times.contains(&20.5));
}

#[test]
fn step_underflow_reports_state() {
    let ham = pendulum_like(0.1, decay(1.0, 0.2));
    let err = integrate(&ham, &[1.0], &[0.0], 10.0, &tight(1e-300)).unwrap_err();
    match err {
        Error::StepUnderflow { state, .. } => assert_eq!(state.len(), 2),
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn rejects_bad_input() {
    let ham = pendulum_like(0.1, decay(1.0, 0.2));
    let cfg = IntegratorConfig::default();
    assert!(integrate(&ham, &[1.0], &[0.0], 0.0, &cfg).is_err());
    assert!(integrate(&ham, &[1.0, 2.0], &[0.0], 1.0, &cfg).is_err());
    assert!(ExtendedHamiltonian::new(Poly::half_square(2), Series::<TaylorCoeff>::zero(meta(1, 2)), 0.1).is_err());
    assert!(ExtendedHamiltonian::new(Poly::half_square(1), Series::<TaylorCoeff>::zero(meta(1, 2)), -1.0).is_err());
}

#[test]
fn identity_map_keeps_variation() {
    let ham = pendulum_like(1e-2, decay(1.0, 0.2));
    let traj = integrate(&ham, &[1.0], &[0.3], 50.0, &IntegratorConfig::default()).unwrap();
    let map = LieSeriesMap::<TaylorCoeff>::identity(domain(1));
    let check = verify_normal_form(&map, &traj).unwrap();
    let drift = measure_drift(&traj, 1.0, 0.0);
    assert_eq!(check.raw_variation, drift.per_component[0]);
    assert_eq!(check.transformed_variation, check.raw_variation);
    assert_eq!((check.displacement_start, check.displacement_end), (0.0, 0.0));
}

#[test]
fn birkhoff_map_conserves_actions() {
    // isochronous h = I with f = eps (1 + I) cos(phi) e^{-a t}
    let (eps, a) = (1e-3, 0.2);
    let mut f = Series::<TaylorCoeff>::zero(meta(1, 12));
    let p = Poly::new(1, [(vec![0], 1.0), (vec![1], 1.0)]).unwrap();
    f.add_cosine(k(&[1]), &decay(eps, a), Some(&p));
    let ham = ExtendedHamiltonian::new(Poly::linear(&[1.0]), f.scale_re(1.0 / eps), eps).unwrap();
    let traj = integrate(&ham, &[1.0], &[0.3], 40.0 / a, &tight(1e-12)).unwrap();

    let cfg = BirkhoffConfig {
        j_max: 4,
        ..BirkhoffConfig::exponential(a)
    };
    let (state, map) = run_birkhoff(f, vec![1.0], &cfg, None, domain(1)).unwrap();
    let full = verify_normal_form(&map, &traj).unwrap();
    assert!(full.transformed_variation <= 1e-6, "{full:?}");
    assert!(full.improvement() > 100.0, "{full:?}");
    assert!(full.displacement_end < full.displacement_start * 1e-6);

    // conservation improves with the number of generators
    let mut previous = full.raw_variation;
    for j in 1..=state.chis.len() {
        let partial = LieSeriesMap::new(&state.chis[..j], domain(1), cfg.s_max, cfg.map_tol).unwrap();
        let v = verify_normal_form(&partial, &traj).unwrap().transformed_variation;
        assert!(v <= previous * 1.1, "j = {j}: {v} after {previous}");
        previous = v;
    }
}
