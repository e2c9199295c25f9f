//! Explicit constants, schedules and smallness conditions of both
//! normalization schemes, with recursion-versus-closed-form checks.

use std::f64::consts::{E, LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One audited inequality `lhs <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Flag {
    fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            pass: lhs <= rhs,
        }
    }
}

fn failed(flags: &[Flag]) -> Vec<String> {
    flags
        .iter()
        .filter(|f| !f.pass)
        .map(|f| format!("{}: {:.6e} > {:.6e}", f.name, f.lhs, f.rhs))
        .collect()
}

/// Number of `d_j` terms summed explicitly before the analytic tail bound.
pub const D_SUM_TERMS: usize = 10_000;

/// Schedule of the iterated (isochronous) scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoSchedule {
    pub n: usize,
    pub a: f64,
    pub rho0: f64,
    pub sigma0: f64,
    pub c_omega: f64,
    pub eps: f64,
    pub tau: u32,
    pub k: f64,
    pub eps_a: f64,
    /// `eps <= eps_a`; otherwise the fallback `d_j` schedule is used.
    pub in_regime: bool,
    pub rho_star: f64,
    pub sigma_star: f64,
    /// `sum_{j < D_SUM_TERMS} d_j` plus the analytic tail bound.
    pub d_sum: f64,
    pub d_max: f64,
}

impl IsoSchedule {
    /// `eps_j = eps_0 (j+1)^{-2 tau}`.
    pub fn eps_j(&self, j: usize) -> f64 {
        self.eps * ((j + 1) as f64).powi(-2 * self.tau as i32)
    }

    /// Domain-restriction parameter `d_j`.
    pub fn d_j(&self, j: usize) -> f64 {
        let jp = (j + 1) as f64;
        if self.in_regime {
            (self.eps * self.k / self.a).powf(1.0 / self.tau as f64) * (jp + 1.0).powi(2) / jp.powi(4)
        } else {
            1.0 / (PI * PI * jp * jp)
        }
    }

    /// `(rho_j, sigma_j)` after `j` shrink steps.
    pub fn radii(&self, j: usize) -> (f64, f64) {
        let f: f64 = (0..j).map(|i| 1.0 - 3.0 * self.d_j(i)).product();
        (self.rho0 * f, self.sigma0 * f)
    }

    /// Convergence indicator of step `j` at `t = 0`.
    pub fn theta(&self, j: usize) -> f64 {
        let n = self.n as i32;
        2.0 * self.eps_j(j)
            * self.n as f64
            * self.c_omega
            * (E / self.sigma_star).powi(self.tau as i32)
            / self.rho_star
            / self.a
            * self.d_j(j).powi(-2 * n - 2)
    }
}

/// Constants of the isochronous scheme; `c_omega = 1 + |omega|`.
pub fn iso_schedule(n: usize, a: f64, rho0: f64, sigma0: f64, c_omega: f64, eps: f64) -> Result<IsoSchedule> {
    for (name, v) in [("a", a), ("rho0", rho0), ("sigma0", sigma0), ("C_omega", c_omega)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
        }
    }
    if n == 0 || !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("n = {n}, eps = {eps}")));
    }
    let tau = 2 * n as u32 + 3;
    let k = 2f64.powi(tau as i32 + 1) * n as f64 * c_omega * (E / sigma0).powi(tau as i32) / rho0;
    let eps_a = a / k * (2.0 * PI).powi(-2 * tau as i32);
    let mut s = IsoSchedule {
        n,
        a,
        rho0,
        sigma0,
        c_omega,
        eps,
        tau,
        k,
        eps_a,
        in_regime: eps <= eps_a,
        rho_star: rho0 / 2.0,
        sigma_star: sigma0 / 2.0,
        d_sum: 0.0,
        d_max: 0.0,
    };
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for j in 0..D_SUM_TERMS {
        let d = s.d_j(j);
        sum += d;
        max = max.max(d);
    }
    // for j >= J: d_j <= coef / (j+1)^2 and sum_{m > J} m^{-2} <= 1/(J + 1/2)
    let jj = D_SUM_TERMS as f64;
    let coef = if s.in_regime {
        (eps * k / a).powf(1.0 / tau as f64) * (1.0 + 1.0 / (jj + 1.0)).powi(2)
    } else {
        1.0 / (PI * PI)
    };
    s.d_sum = sum + coef / (jj + 0.5);
    s.d_max = max;
    Ok(s)
}

/// Time dependence class of the isochronous variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum VariantClass {
    Exponential,
    Bump {
        centers: Vec<f64>,
        amplitudes: Vec<f64>,
        width: f64,
    },
}

/// Constant `K` of the iterative estimate for the given decay class.
pub fn iso_variant_constants(class: &VariantClass, n: usize, rho0: f64, sigma0: f64, c_omega: f64) -> Result<f64> {
    let tau = 2 * n as i32 + 3;
    match class {
        VariantClass::Exponential => Ok(2f64.powi(tau + 1) * n as f64 * c_omega * (E / sigma0).powi(tau) / rho0),
        VariantClass::Bump {
            centers,
            amplitudes,
            width,
        } => {
            if centers.len() != amplitudes.len() || centers.is_empty() || !(*width > 0.0) {
                return Err(Error::InvalidParameter(
                    "bumps need matching non-empty centers and amplitudes and a positive width".into(),
                ));
            }
            for (i, w) in centers.windows(2).enumerate() {
                let gap = w[1] - w[0];
                if gap <= 2.0 * width {
                    return Err(Error::OverlappingBumps {
                        index: i,
                        gap,
                        min_gap: 2.0 * width,
                    });
                }
            }
            let amp: f64 = amplitudes.iter().map(|v| v.abs()).sum();
            let (rho_s, sigma_s) = (rho0 / 2.0, sigma0 / 2.0);
            Ok(2.0 * n as f64 * c_omega * (E / sigma_s).powi(tau) * width * amp / rho_s)
        }
    }
}

/// Parameters of the finite-order scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NekhoParams {
    pub n: usize,
    pub a: f64,
    pub rho_h: f64,
    pub sigma_h: f64,
    pub c_h: f64,
    pub d: f64,
    pub eps: f64,
    pub sigma: f64,
    pub big_n: u32,
    pub h: f64,
    pub tau: f64,
    pub f_tilde: f64,
    /// `F = eps F~`.
    pub f_cal: f64,
    pub big_a: f64,
    pub eps_a_star: f64,
    pub gamma_exp: u32,
    pub r: u32,
    pub rho: f64,
    pub c_r: f64,
    pub big_gamma: f64,
    pub delta: f64,
    /// `a_1, ..., a_{r+1}`.
    pub rates: Vec<f64>,
    pub flags: Vec<Flag>,
}

impl NekhoParams {
    /// `a_s` for `1 <= s <= r+1`.
    pub fn a_s(&self, s: usize) -> f64 {
        self.rates[s - 1]
    }

    pub fn failed_flags(&self) -> Vec<String> {
        failed(&self.flags)
    }

    /// Shell envelope `F h^{m-1}`.
    pub fn shell_bound(&self, m: usize) -> f64 {
        self.f_cal * self.h.powi(m as i32 - 1)
    }

    /// Remainder bound `eps A e^{-(r + a_{r+1} t)}`.
    pub fn remainder_bound(&self, t: f64) -> f64 {
        self.eps * self.big_a * (-(self.r as f64) - self.a_s(self.r as usize + 1) * t).exp()
    }

    /// Generator bound `C_r M / (4a)` at rate `a_{s+1}`.
    pub fn chi_bound(&self, m: f64) -> f64 {
        self.c_r * m / (4.0 * self.a)
    }
}

/// `N = ceil(2 sigma^{-1} (1 + 3 ln 2))`.
pub fn shell_width(sigma: f64) -> u32 {
    (2.0 / sigma * (1.0 + 3.0 * LN_2)).ceil() as u32
}

/// Threshold `eps_a^*`.
pub fn eps_a_star(n: usize, a: f64, rho_h: f64, sigma_h: f64, c_h: f64, d: f64) -> f64 {
    let sigma = sigma_h / 2.0;
    let f_tilde = f_tilde(n, sigma);
    let root = a * a * d.powi(n as i32 + 2) * rho_h * sigma * sigma
        / (2f64.powi(2 * n as i32 + 19) * E * n as f64 * c_h * f_tilde);
    root * root
}

/// `[(1 + e^{-sigma/2}) / (1 - e^{-sigma/2})]^n`.
pub fn f_tilde(n: usize, sigma: f64) -> f64 {
    let q = (-sigma / 2.0).exp();
    ((1.0 + q) / (1.0 - q)).powi(n as i32)
}

/// Constants of the finite-order scheme with `r` from the threshold rule.
pub fn nekho_params(n: usize, a: f64, rho_h: f64, sigma_h: f64, c_h: f64, d: f64, eps: f64) -> Result<NekhoParams> {
    nekho_params_with_order(n, a, rho_h, sigma_h, c_h, d, eps, None)
}

/// As [`nekho_params`], optionally forcing the order `r`.
#[allow(clippy::too_many_arguments)]
pub fn nekho_params_with_order(
    n: usize,
    a: f64,
    rho_h: f64,
    sigma_h: f64,
    c_h: f64,
    d: f64,
    eps: f64,
    r_override: Option<u32>,
) -> Result<NekhoParams> {
    if !(d > 0.0 && d <= 0.25) {
        return Err(Error::InvalidParameter(format!("d = {d} must lie in (0, 1/4]")));
    }
    for (name, v) in [("a", a), ("rho_H", rho_h), ("sigma_H", sigma_h)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
        }
    }
    if n == 0 || !(c_h >= 1.0) || !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("n = {n}, C_h = {c_h}, eps = {eps}")));
    }
    let sigma = sigma_h / 2.0;
    let big_n = shell_width(sigma);
    let h = (-(big_n as f64) * sigma / 2.0).exp();
    let tau = E * h;
    let f_tilde = f_tilde(n, sigma);
    let eps_star = eps_a_star(n, a, rho_h, sigma_h, c_h, d);
    let gamma_exp = 5 + n as u32;
    let r = match r_override {
        Some(r) => r,
        None if eps == 0.0 => u32::MAX,
        None => {
            let v = (eps_star / eps).powf(1.0 / (2.0 * gamma_exp as f64)).floor();
            if v >= u32::MAX as f64 {
                u32::MAX
            } else {
                v as u32
            }
        }
    };
    if r == 0 || r == u32::MAX {
        return Err(Error::InvalidParameter(format!(
            "order r = {} from eps = {eps:e} and eps_a* = {eps_star:e}; pass an explicit order",
            if r == 0 { "0".to_string() } else { "unbounded".to_string() }
        )));
    }
    let rf = r as f64;
    let rho = rho_h.min(a / (4.0 * rf * big_n as f64 * c_h));
    let c_r = 2f64.powi(2 * n as i32 + 4) * (rf / d).powi(n as i32);
    let f_cal = eps * f_tilde;
    let big_gamma = 16.0 * n as f64 * rf * rf * c_r * f_cal / (a * d * d * rho * sigma);
    let delta = tau + big_gamma;
    let mut rates = vec![a];
    for s in 1..=r as usize {
        let prev = rates[s - 1];
        rates.push(prev * (2.0 * rf - s as f64) / (2.0 * rf));
    }
    let flags = vec![
        Flag::le("8eh <= 1", 8.0 * E * h, 1.0),
        Flag::le("1/(16e) <= h", 1.0 / (16.0 * E), h),
        Flag::le("2r^2 Gamma <= sqrt(eps) h", 2.0 * rf * rf * big_gamma, eps.sqrt() * h),
        Flag::le("Gamma <= h/(2r^2)", big_gamma, h / (2.0 * rf * rf)),
        Flag::le("4 Delta <= 1", 4.0 * delta, 1.0),
        Flag::le("4 r N C_h rho <= a", 4.0 * rf * big_n as f64 * c_h * rho, a * (1.0 + 1e-12)),
        Flag::le("eps <= eps_a*", eps, eps_star),
        Flag::le("a 2^{-r} < a_{r+1}", a * 2f64.powi(-(r as i32)), rates[r as usize]),
    ];
    Ok(NekhoParams {
        n,
        a,
        rho_h,
        sigma_h,
        c_h,
        d,
        eps,
        sigma,
        big_n,
        h,
        tau,
        f_tilde,
        f_cal,
        big_a: 10.0 * f_tilde,
        eps_a_star: eps_star,
        gamma_exp,
        r,
        rho,
        c_r,
        big_gamma,
        delta,
        rates,
        flags,
    })
}

/// Directly recursed and closed-form `kappa_s`, `gamma_l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaGamma {
    /// `kappa_1, ..., kappa_{s_max}`.
    pub kappa: Vec<f64>,
    pub kappa_closed: Vec<f64>,
    /// `gamma_0, ..., gamma_{s_max}`.
    pub gamma: Vec<f64>,
    pub gamma_closed: Vec<f64>,
    pub max_rel_err: f64,
}

pub fn kappa_gamma(big_a: f64, big_gamma: f64, tau: f64, kappa1: f64, gamma0: f64, s_max: usize) -> KappaGamma {
    let delta = tau + big_gamma;
    let mut kappa = vec![kappa1];
    for s in 2..=s_max {
        let mut v = big_a * tau.powi(s as i32 - 1);
        for j in 1..s {
            v += big_gamma * tau.powi(j as i32 - 1) * kappa[s - j - 1];
        }
        kappa.push(v);
    }
    let kappa_closed: Vec<f64> = (1..=s_max)
        .map(|s| {
            if s == 1 {
                kappa1
            } else {
                (big_gamma * kappa1 + tau * big_a) * delta.powi(s as i32 - 2)
            }
        })
        .collect();
    let mut gamma = vec![gamma0];
    for l in 1..=s_max {
        let v: f64 = (1..=l).map(|j| big_gamma * tau.powi(j as i32 - 1) * gamma[l - j]).sum();
        gamma.push(v);
    }
    let gamma_closed: Vec<f64> = (0..=s_max)
        .map(|l| if l == 0 { gamma0 } else { gamma0 * big_gamma * delta.powi(l as i32 - 1) })
        .collect();
    let rel = |x: f64, y: f64| if y == 0.0 { x.abs() } else { ((x - y) / y).abs() };
    let max_rel_err = kappa
        .iter()
        .zip(&kappa_closed)
        .chain(gamma.iter().zip(&gamma_closed))
        .map(|(&x, &y)| rel(x, y))
        .fold(0.0, f64::max);
    KappaGamma {
        kappa,
        kappa_closed,
        gamma,
        gamma_closed,
        max_rel_err,
    }
}

/// Coupled `beta_s`, `theta_l` sequences and their bound audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaTheta {
    /// `beta_1, ..., beta_r`.
    pub beta: Vec<f64>,
    /// `theta_0, ..., theta_{r-1}`.
    pub theta: Vec<f64>,
    /// `Gamma <= h / (2 r^2)`.
    pub choice_holds: bool,
    /// `beta_s <= (eh)^{s-1} / s` for all `s <= r`.
    pub bound_holds: bool,
}

pub fn beta_theta(h: f64, big_gamma: f64, r: usize) -> BetaTheta {
    let mut beta = vec![1.0];
    let mut theta = vec![1.0];
    for s in 2..=r {
        let l = s - 1;
        let th: f64 = big_gamma / l as f64 * (1..=l).map(|j| j as f64 * beta[j - 1] * theta[l - j]).sum::<f64>();
        theta.push(th);
        let b = h.powi(s as i32 - 1)
            + big_gamma / s as f64 * (1..s).map(|j| j as f64 * theta[s - j]).sum::<f64>();
        beta.push(b);
    }
    let tau = E * h;
    let bound_holds = beta
        .iter()
        .enumerate()
        .all(|(i, &b)| b <= tau.powi(i as i32) / (i + 1) as f64 * (1.0 + 1e-14));
    BetaTheta {
        beta,
        theta,
        choice_holds: big_gamma <= h / (2.0 * (r * r) as f64),
        bound_holds,
    }
}

/// `y(s) = s + (s-1)/(2r^2) (e + 1/(2r^2))^{s-1}`.
pub fn y_ineq(s: usize, r: usize) -> f64 {
    let q = 1.0 / (2.0 * (r * r) as f64);
    s as f64 + (s as f64 - 1.0) * q * (E + q).powi(s as i32 - 1)
}

/// Right side of the iterated Lie-derivative estimate; `dt` is the extra
/// restriction, `d1`, `d2` the restrictions of `F` and `G`.
#[allow(clippy::too_many_arguments)]
pub fn lie_bracket_bound(norm_f: f64, norm_g: f64, d1: f64, d2: f64, dt: f64, rho: f64, sigma: f64, s: u32) -> Result<f64> {
    let dhat = d1.max(d2);
    if !(0.0..1.0).contains(&d1) || !(0.0..1.0).contains(&d2) || !(dt > 0.0 && dt < 1.0 - dhat) {
        return Err(Error::InvalidParameter(format!(
            "restrictions d' = {d1}, d'' = {d2}, d~ = {dt} need d~ in (0, 1 - max(d', d''))"
        )));
    }
    if s == 0 {
        return Err(Error::InvalidParameter("order s must be positive".into()));
    }
    let delta = if s == 1 { (d1 - d2).abs() } else { 0.0 };
    let fact: f64 = (1..=s).map(|v| v as f64).product();
    let base = 2.0 * E / (dt * (dt + delta) * rho * sigma) * norm_g;
    Ok(fact / (E * E) * base.powi(s as i32) * norm_f)
}

/// Predicted action drift and its components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityBound {
    pub total: f64,
    /// Each of the two transform displacements.
    pub displacement: f64,
    pub drift: f64,
}

pub fn stability_bound(p: &NekhoParams) -> Result<StabilityBound> {
    let bad = p.failed_flags();
    if !bad.is_empty() {
        return Err(Error::FlagsFailed(bad));
    }
    let se = p.eps.sqrt();
    Ok(StabilityBound {
        total: se * p.d * p.rho / 2.0,
        displacement: se * p.d * p.rho / 8.0,
        drift: p.eps * p.big_a / (p.a * p.d * E * p.sigma) * (2.0 / E).powi(p.r as i32),
    })
}

/// Generator envelope bound `(M/a) (e / (delta sigma))^{2n}`.
pub fn homological_bound(m: f64, a: f64, delta: f64, sigma: f64, n: usize) -> f64 {
    m / a * (E / (delta * sigma)).powi(2 * n as i32)
}
