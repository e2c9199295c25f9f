use super::*;
use crate::constants::{iso_schedule, lie_bracket_bound};
use crate::fourier_taylor::{Harmonic, Meta, TaylorCoeff, TaylorCtx};
use crate::poly::Poly;
use crate::timefn::RationalDecay;
use crate::transform::{CoordinateMap, PhasePoint};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

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

/// `eps (1 + I_1) cos(phi_1) e^{-a t}` for `n = 1`.
fn one_plus_i(eps: f64, a: f64) -> Series<TaylorCoeff> {
    let mut f = Series::zero(meta(1, 12));
    let p = Poly::new(1, [(vec![0], 1.0), (vec![1], 1.0)]).unwrap();
    f.add_cosine(k(&[1]), &decay(eps, a), Some(&p));
    f
}

#[test]
fn homological_examples() {
    let a = 0.2;
    let m = meta(2, 4);
    let f = Series::<TaylorCoeff>::monomial(m.clone(), k(&[1, 0]), decay(1.0, a));
    for omega in [[1.0, 1.0], [0.7, -2.3], [0.0, 0.0]] {
        let chi = solve_homological_iso(&f, &omega, InitialCondition::Decaying).unwrap();
        let lam = omega[0];
        for &(phi, t) in &[(0.0, 0.0), (1.3, 2.0), (-0.4, 7.5)] {
            let expect = -(-a * t).exp() * c(0.0, phi).exp() / c(a, -lam);
            let got = chi.eval(&[1.0, 1.0], &[phi, 0.3], t);
            assert!((got - expect).norm() < 1e-15, "omega {omega:?}: {got} vs {expect}");
        }
    }
    let zero = Series::<TaylorCoeff>::zero(m);
    assert!(solve_homological_iso(&zero, &[1.0, 1.0], InitialCondition::Decaying)
        .unwrap()
        .is_zero());
}

/// Forward RK4 for `c' = f - i lambda c` from the solver's own `c(0)`.
fn ode_endpoint(f: &TimeFn, lambda: f64, c0: Complex64, t_end: f64, steps: usize) -> Complex64 {
    let rhs = |t: f64, y: Complex64| f.eval(t) - c(0.0, lambda) * y;
    let h = t_end / steps as f64;
    let mut y = c0;
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = rhs(t, y);
        let k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
        let k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
        let k4 = rhs(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

#[test]
fn mode_solutions_match_ode() {
    let exp_f = TimeFn::Exp(
        ExpPoly::term(c(1.0, 0.5), 1, c(-0.3, 0.0))
            .unwrap()
            .add(&ExpPoly::decaying(0.4, 0.7)),
    );
    let rat_f: TimeFn = RationalDecay::power(c(1.0, 0.0), 2).unwrap().into();
    for f in [&exp_f, &rat_f] {
        for lambda in [0.0, 1.0, -2.5] {
            for ic in [InitialCondition::Decaying, InitialCondition::Zero] {
                let sol = match solve_time_mode(f, lambda, ic) {
                    Err(Error::InvalidParameter(_)) if ic == InitialCondition::Zero => {
                        assert_eq!(f.class_name(), "rational");
                        continue;
                    }
                    r => r.unwrap(),
                };
                if ic == InitialCondition::Zero {
                    assert!(sol.eval(0.0).norm() < 1e-13);
                }
                let end = ode_endpoint(f, lambda, sol.eval(0.0), 6.0, 6000);
                assert!((end - sol.eval(6.0)).norm() < 1e-8, "{} {lambda} {ic:?}", f.class_name());
            }
        }
    }
}

#[test]
fn decaying_modes_never_exceed_rate_divisor() {
    // |chi_k| = |F_k| / |a - i lambda| <= |F_k| / a for every lambda
    let a = 0.2;
    for lambda in [0.0, 1e-9, 0.3, -5.0, 100.0] {
        let sol = solve_time_mode(&decay(1.0, a), lambda, InitialCondition::Decaying).unwrap();
        let ratio = sol.eval(0.0).norm();
        assert!(ratio <= 1.0 / a * (1.0 + 1e-15));
        assert!((ratio - 1.0 / c(a, -lambda).norm()).abs() < 1e-13);
    }
}

#[test]
fn non_integrable_mode_names_harmonic() {
    let f = Series::<TaylorCoeff>::monomial(meta(2, 4), k(&[1, -1]), TimeFn::constant(c(1.0, 0.0)));
    match solve_homological_iso(&f, &[1.0, 1.0], InitialCondition::Decaying) {
        Err(Error::NonIntegrableMode { harmonic, .. }) => assert_eq!(harmonic, vec![1, -1]),
        other => panic!("expected a non-integrable mode error, got {other:?}"),
    }
}

#[test]
fn step_is_exact_for_action_free_perturbation() {
    let m = meta(2, 4);
    let mut f = Series::<TaylorCoeff>::zero(m);
    f.add_cosine(k(&[1, -1]), &decay(1e-3, 0.2), None);
    f.add_sine(k(&[2, 1]), &decay(5e-4, 0.3), None);
    let cfg = BirkhoffConfig::exponential(0.2);
    let state = BirkhoffState::new(f, vec![1.0, 1.0], &cfg, None).unwrap();
    let next = birkhoff_step(state, &cfg).unwrap();
    assert!(next.f.is_zero());
    assert_eq!(next.m(), 0.0);
    assert_eq!(next.j, 1);
}

#[test]
fn step_on_zero_only_advances_index() {
    let cfg = BirkhoffConfig::exponential(0.2);
    let state = BirkhoffState::new(Series::<TaylorCoeff>::zero(meta(1, 4)), vec![1.0], &cfg, None).unwrap();
    let next = birkhoff_step(state, &cfg).unwrap();
    assert_eq!(next.j, 1);
    assert!(next.f.is_zero());
    assert!(next.chis[0].is_zero());
}

type Fun = std::rc::Rc<dyn Fn(f64, f64) -> f64>;

/// `{F, G} = F_phi G_I - G_phi F_I` by central differences, `n = 1`, fixed `t`.
fn fd_bracket(f: Fun, g: Fun, h: f64) -> Fun {
    std::rc::Rc::new(move |i, p| {
        let dp = |u: &Fun| (u(i, p + h) - u(i, p - h)) / (2.0 * h);
        let di = |u: &Fun| (u(i + h, p) - u(i - h, p)) / (2.0 * h);
        dp(&f) * di(&g) - dp(&g) * di(&f)
    })
}

#[test]
fn second_order_step_matches_finite_difference_brackets() {
    let (eps, a, t) = (1e-3, 0.2, 1.5);
    let f0 = one_plus_i(eps, a);
    let cfg = BirkhoffConfig::exponential(a);
    let state = BirkhoffState::new(f0.clone(), vec![1.0], &cfg, None).unwrap();
    let next = birkhoff_step(state, &cfg).unwrap();
    let chi = next.chis[0].clone();

    // s = 1, 2 terms of sum s/(s+1)! L^s F; the s = 3 term is O(eps) relative
    let fs: Fun = {
        let f0 = f0.clone();
        std::rc::Rc::new(move |i, p| f0.eval(&[i], &[p], t).re)
    };
    let gs: Fun = std::rc::Rc::new(move |i, p| chi.eval(&[i], &[p], t).re);
    let l1 = fd_bracket(fs, gs.clone(), 1e-4);
    let l2 = fd_bracket(l1.clone(), gs, 1e-3);
    let mut worst: f64 = 0.0;
    let mut size: f64 = 0.0;
    for &(i, p) in &[(0.8, 0.3), (1.0, 1.7), (1.3, -2.2), (0.6, 2.9)] {
        let oracle = 0.5 * l1(i, p) + l2(i, p) / 3.0;
        let got = next.f.eval(&[i], &[p], t).re;
        worst = worst.max((got - oracle).abs());
        size = size.max(got.abs());
    }
    assert!(size > 1e-8);
    assert!(worst < 1e-3 * size, "{worst} vs {size}");

    // measured ||F^(1)|| against the iterated-bracket estimate at half radii
    let (rho, sigma, dt) = (0.2, 0.3, 0.5);
    let nf = f0.weighted_norm(rho, sigma, Weight::Exp { rate: 0.0 }).unwrap();
    let nchi = next.chis[0].weighted_norm(rho, sigma, Weight::Exp { rate: 0.0 }).unwrap();
    let mut bound = 0.0;
    let mut fact = 1.0;
    for s in 1..=30u32 {
        fact *= (s + 1) as f64;
        bound += s as f64 / fact * lie_bracket_bound(nf, nchi, 0.0, 0.0, dt, rho, sigma, s).unwrap();
    }
    let measured = next
        .f
        .weighted_norm(rho * (1.0 - dt), sigma * (1.0 - dt), Weight::Exp { rate: 0.0 })
        .unwrap();
    assert!(measured <= bound, "{measured} > {bound}");
    assert!(measured / (eps * eps) <= bound / (eps * eps));
}

#[test]
fn zero_perturbation_gives_identity_map() {
    let cfg = BirkhoffConfig::exponential(0.2);
    let (state, map) =
        run_birkhoff(Series::<TaylorCoeff>::zero(meta(2, 4)), vec![1.0, 1.0], &cfg, None, domain(2)).unwrap();
    assert_eq!(state.j, 0);
    assert!(map.is_empty());
    let p = PhasePoint::new(vec![0.9, 1.2], vec![0.4, 5.0], 0.3, 2.0);
    assert_eq!(map.forward(&p).unwrap(), p);
    assert_eq!(map.inverse(&p).unwrap(), p);
}

#[test]
fn resonant_run_converges_quadratically() {
    let (eps, a) = (1e-3, 0.2);
    let m = meta(2, 12);
    let mut f = Series::<TaylorCoeff>::zero(m);
    // linear in the actions, so brackets never raise the Taylor degree
    let p = Poly::new(2, [(vec![0, 0], 1.0), (vec![1, 0], 1.0), (vec![0, 1], 1.0)]).unwrap();
    f.add_cosine(k(&[1, -1]), &decay(eps, a), Some(&p));
    f.add_cosine(k(&[1, 0]), &decay(eps, a), Some(&p));
    let cfg = BirkhoffConfig {
        j_max: 4,
        ..BirkhoffConfig::exponential(a)
    };
    let sched = iso_schedule(2, a, 0.2, 0.3, 3.0, eps).unwrap();
    let (state, _) = run_birkhoff(f, vec![1.0, 1.0], &cfg, Some(sched), domain(2)).unwrap();
    let norms = state.norms();
    assert_eq!(norms.len(), 5);
    assert!(norms[4] / norms[0] <= 1e-8, "{norms:?}");
    for w in norms.windows(2) {
        assert!(w[1] < w[0]);
    }
    assert!(state.outside_regime);
}

#[test]
fn map_of_single_generator_matches_flow() {
    // chi = c sin(phi) g(t) has flow I -> I - c cos(phi) g(t), phi fixed
    let (cc, rate) = (0.05, 0.3);
    let mut chi = Series::<TaylorCoeff>::zero(meta(1, 6));
    chi.add_sine(k(&[1]), &decay(cc, rate), None);
    let map = LieSeriesMap::new(&[chi], domain(1), 40, 1e-18).unwrap();
    for &(i, phi, t) in &[(1.0, 0.3, 0.0), (0.7, 2.0, 1.5), (1.4, -1.0, 6.0)] {
        let y = PhasePoint::new(vec![i], vec![phi], 0.0, t);
        let x = map.forward(&y).unwrap();
        let g = cc * (-rate * t as f64).exp();
        assert!((x.actions[0] - (i - g * f64::cos(phi))).abs() < 1e-15);
        assert!((x.angles[0] - phi).abs() < 1e-15);
        // eta picks up -chi_t
        assert!((x.eta - rate * g * f64::sin(phi)).abs() < 1e-15);
    }
}

#[test]
fn map_rejects_points_outside_domain() {
    let map = LieSeriesMap::<TaylorCoeff>::identity(domain(1));
    let p = PhasePoint::new(vec![3.0], vec![0.0], 0.0, 0.0);
    assert!(matches!(map.forward(&p), Err(Error::OutsideDomain(_))));
}

#[test]
fn composed_map_round_trip_and_decay() {
    let a = 0.2;
    let cfg = BirkhoffConfig {
        j_max: 3,
        ..BirkhoffConfig::exponential(a)
    };
    let (_, map) = run_birkhoff(one_plus_i(1e-2, a), vec![1.0], &cfg, None, domain(1)).unwrap();
    assert_eq!(map.len(), 3);
    let pts = sample_points(&[0.6], &[1.4], 20.0 / a, 100);
    for (i, p, t) in &pts {
        let x = PhasePoint::new(i.clone(), p.clone(), 0.1, *t);
        let back = map.forward(&map.inverse(&x).unwrap()).unwrap();
        assert!(back.distance(&x) <= 1e-9);
    }
    let disp = |t: f64| {
        pts.iter()
            .map(|(i, p, _)| {
                let y = PhasePoint::new(i.clone(), p.clone(), 0.0, t);
                map.forward(&y).unwrap().distance(&y)
            })
            .fold(0.0, f64::max)
    };
    let (d0, d5, d20) = (disp(0.0), disp(5.0 / a), disp(20.0 / a));
    assert!(d0 > 0.0);
    for (d, at) in [(d5, 5.0), (d20, 20.0)] {
        let ratio = d / d0 / (-at as f64).exp();
        assert!((1.0 / 3.0..=3.0).contains(&ratio), "ratio {ratio} at {at}/a");
    }
}

#[test]
fn zero_initial_condition_runs() {
    let cfg = BirkhoffConfig {
        j_max: 1,
        initial_condition: InitialCondition::Zero,
        chi_weight: Weight::Exp { rate: 0.0 },
        ..BirkhoffConfig::exponential(0.2)
    };
    let f = one_plus_i(1e-3, 0.2);
    let chi = solve_homological_iso(&f, &[1.0], InitialCondition::Zero).unwrap();
    assert!(chi.eval(&[1.1], &[0.7], 0.0).norm() < 1e-15);
    let r = run_birkhoff(f, vec![1.0], &cfg, None, domain(1));
    assert!(r.is_ok(), "{:?}", r.err());
}

fn arb_series() -> impl Strategy<Value = (Series<TaylorCoeff>, Vec<f64>)> {
    let term = (-3i32..=3, -3i32..=3, any::<bool>(), 0.1f64..1.0, 0.05f64..0.8, 0u32..3);
    (prop::collection::vec(term, 1..5), -2.0f64..2.0, -2.0f64..2.0).prop_map(|(terms, w1, w2)| {
        let m = meta(2, 6);
        let mut s = Series::zero(m);
        for (k1, k2, sine, amp, rate, e) in terms {
            let p = Poly::new(2, [(vec![e, 0], 1.0)]).unwrap();
            if sine {
                s.add_sine(k(&[k1, k2]), &decay(amp, rate), Some(&p));
            } else {
                s.add_cosine(k(&[k1, k2]), &decay(amp, rate), Some(&p));
            }
        }
        (s, vec![w1, w2])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn homological_residual_is_negligible((f, omega) in arb_series()) {
        let chi = solve_homological_iso(&f, &omega, InitialCondition::Decaying).unwrap();
        let samples = sample_points(&[0.5, 0.5], &[1.5, 1.5], 30.0, 100);
        let res = homological_residual(&chi, &f, &|_| omega.clone(), &samples).unwrap();
        let scale = f.norm_at(0.2, 0.3, 0.0);
        prop_assert!(res <= 1e-12 * scale, "{} vs {}", res, scale);
    }
}
