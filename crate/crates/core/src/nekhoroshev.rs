//! Finite-order normalization over harmonic shells for `h(I) + eta + F`
//! with action-dependent frequencies.

use serde::{Deserialize, Serialize};

use crate::birkhoff::{solve_homological, InitialCondition};
use crate::error::{Error, Result};
use crate::fourier_taylor::{lie_transform_levels, Coeff, Meta, Observable, Series};
use crate::poly::Poly;
use crate::timefn::{Envelope, TimeFn, Weight};
use crate::transform::{ActionDomain, LieTransformMap};

/// Level norms below this are flushed to the ledger to keep clear of
/// subnormal arithmetic.
const UNDERFLOW: f64 = 1e-250;

/// `H_0 = h(I) + eta` plus the shells `H_1, H_2, ...` of the perturbation.
#[derive(Clone, Debug)]
pub struct ShellHamiltonian<C: Coeff> {
    pub h: Poly,
    /// `shells[m - 1] = H_m`.
    pub shells: Vec<Series<C>>,
    pub width: u32,
    pub r: usize,
    /// Measured `||H_m||` envelope amplitude at `rate`.
    pub shell_norms: Vec<f64>,
    pub rate: f64,
    meta: Meta<C::Ctx>,
}

impl<C: Coeff> ShellHamiltonian<C> {
    pub fn meta(&self) -> &Meta<C::Ctx> {
        &self.meta
    }

    /// `H_m`, zero beyond the populated shells.
    pub fn shell(&self, m: usize) -> Series<C> {
        self.shells
            .get(m - 1)
            .cloned()
            .unwrap_or_else(|| Series::zero(self.meta.clone()))
    }

    /// Frequency map `omega(I) = grad h(I)`.
    pub fn omega(&self) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        let grad = self.h.gradient();
        move |x: &[f64]| grad.iter().map(|g| g.eval(x)).collect()
    }
}

/// Splits `f` into shells `(s-1)N <= |k| < sN`.
pub fn build_shells<C: Coeff>(f: &Series<C>, h: Poly, width: u32, r: usize, rate: f64) -> Result<ShellHamiltonian<C>> {
    if width == 0 || r == 0 {
        return Err(Error::InvalidParameter(format!("need N >= 1 and r >= 1, got N = {width}, r = {r}")));
    }
    let meta = f.meta().clone();
    if h.n() != meta.n {
        return Err(Error::InvalidParameter(format!("h has {} variables for n = {}", h.n(), meta.n)));
    }
    let needed = width * r as u32;
    if meta.k_max < needed {
        return Err(Error::HarmonicCutoffTooSmall {
            k_max: meta.k_max,
            needed,
        });
    }
    let shells = f.shell_split(width);
    let shell_norms = shells
        .iter()
        .map(|s| s.weighted_norm(meta.rho, meta.sigma, Weight::Exp { rate }))
        .collect::<Result<_>>()?;
    Ok(ShellHamiltonian {
        h,
        shells,
        width,
        r,
        shell_norms,
        rate,
        meta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormConfig {
    /// Highest level summed into the remainder; `None` means `2r + 4`.
    pub s_total: Option<usize>,
    /// Relative pruning threshold applied to every level.
    pub prune_rel: f64,
    pub initial_condition: InitialCondition,
}

impl Default for NormalFormConfig {
    fn default() -> Self {
        Self {
            s_total: None,
            prune_rel: 1e-14,
            initial_condition: InitialCondition::Decaying,
        }
    }
}

/// Per-level report row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub s: usize,
    /// `sup_t ||Psi_s||` (zero for `s > r`).
    pub psi: f64,
    /// `sup_t ||chi^{(s)}||` (zero for `s > r`).
    pub chi: f64,
    /// Largest exponential rate certified for `chi^{(s)}`.
    pub chi_rate: f64,
    /// `sup_t ||E_s||` of the assembled level.
    pub level: f64,
}

#[derive(Clone, Debug)]
pub struct NormalFormResult<C: Coeff> {
    pub h: Poly,
    pub r: usize,
    pub s_total: usize,
    /// `chi^{(1)}, ..., chi^{(r)}`.
    pub chis: Vec<Series<C>>,
    pub psi: Vec<Series<C>>,
    /// Assembled levels `E_1, ..., E_{s_total}`.
    pub levels: Vec<Series<C>>,
    /// `R^{(r+1)} = sum_{s>r} E_s` plus shells beyond `s_total`.
    pub remainder: Series<C>,
    pub reports: Vec<LevelReport>,
    /// Geometric estimate of the levels beyond `s_total`.
    pub tail: f64,
}

impl<C: Coeff> NormalFormResult<C> {
    /// Largest `sup_t ||E_s||` over the normalized levels `s <= r`.
    pub fn level_residual(&self) -> f64 {
        self.reports.iter().take(self.r).map(|l| l.level).fold(0.0, f64::max)
    }

    /// Normalizing map `x = T_chi(id)(y)`.
    pub fn map(&self, domain: ActionDomain) -> Result<LieTransformMap<C>> {
        LieTransformMap::new(&self.chis, domain, self.s_total)
    }
}

fn sup_norm<C: Coeff>(s: &Series<C>) -> f64 {
    let m = s.meta();
    s.norm_bound(m.rho, m.sigma, 0.0)
}

fn tidy<C: Coeff>(s: &mut Series<C>, prune_rel: f64) {
    let n = sup_norm(s);
    if n > 0.0 && n < UNDERFLOW {
        let mut z = Series::zero(s.meta().clone());
        z.add_ledger(s.ledger() + n);
        *s = z;
        return;
    }
    s.prune(prune_rel);
}

/// Largest `b` such that every time function of `s` is `O(e^{-b t})`.
pub fn certified_rate<C: Coeff>(s: &Series<C>) -> f64 {
    s.iter()
        .flat_map(|(_, c)| c.time_fns().into_iter().map(TimeFn::majorant).collect::<Vec<_>>())
        .map(|m| match m {
            Some(m) => match m.weight {
                Weight::Exp { rate } => rate,
                Weight::Power { .. } => 0.0,
            },
            None => f64::INFINITY,
        })
        .fold(f64::INFINITY, f64::min)
}

/// Computes `chi^{(1)}, ..., chi^{(r)}` with `L_{H_0} chi^{(s)} = Psi_s`,
/// `Psi_1 = H_1`, `Psi_s = H_s + sum_{j<s} (j/s) E_{s-j} H_j`, then assembles
/// the remainder from the levels `r < s <= s_total`.
pub fn normalize_order_r<C: Coeff>(sh: &ShellHamiltonian<C>, cfg: &NormalFormConfig) -> Result<NormalFormResult<C>> {
    let r = sh.r;
    let s_total = cfg.s_total.unwrap_or(2 * r + 4).max(r);
    let meta = sh.meta().clone();
    let omega = sh.omega();
    let obs: Vec<Observable<C>> = (1..=s_total)
        .map(|m| Observable::from_series(sh.shell(m)))
        .collect();

    let mut chis: Vec<Series<C>> = Vec::with_capacity(r);
    let mut psis = Vec::with_capacity(r);
    for s in 1..=r {
        let mut psi = sh.shell(s);
        for j in 1..s {
            let levels = lie_transform_levels(&chis, &obs[j - 1], s - j)?;
            psi.add_assign(&levels[s - j - 1].scale_re(j as f64 / s as f64));
        }
        tidy(&mut psi, cfg.prune_rel);
        let mut chi = solve_homological(&psi, &omega, cfg.initial_condition)?;
        tidy(&mut chi, cfg.prune_rel);
        psis.push(psi);
        chis.push(chi);
    }

    // E_s H_0 and E_l H_m for l + m <= s_total
    let h0 = Observable::integrable(meta.clone(), sh.h.clone());
    let e_h0 = lie_transform_levels(&chis, &h0, s_total)?;
    let e_h: Vec<Vec<Series<C>>> = (1..s_total)
        .map(|m| lie_transform_levels(&chis, &obs[m - 1], s_total - m))
        .collect::<Result<_>>()?;

    let mut levels = Vec::with_capacity(s_total);
    let mut reports = Vec::with_capacity(s_total);
    for s in 1..=s_total {
        let mut level = e_h0[s - 1].clone();
        for m in 1..s {
            level.add_assign(&e_h[m - 1][s - m - 1]);
        }
        level.add_assign(&obs[s - 1].series);
        tidy(&mut level, cfg.prune_rel);
        let (psi, chi, chi_rate) = if s <= r {
            (sup_norm(&psis[s - 1]), sup_norm(&chis[s - 1]), certified_rate(&chis[s - 1]))
        } else {
            (0.0, 0.0, f64::INFINITY)
        };
        reports.push(LevelReport {
            s,
            psi,
            chi,
            chi_rate,
            level: sup_norm(&level),
        });
        levels.push(level);
    }

    let mut remainder = Series::zero(meta.clone());
    for level in &levels[r..] {
        remainder.add_assign(level);
    }
    for m in s_total + 1..=sh.shells.len() {
        remainder.add_assign(&sh.shell(m));
    }
    let norms: Vec<f64> = reports[r..].iter().map(|l| l.level).collect();
    let tail = match norms.as_slice() {
        [.., p, q] if *p > 0.0 && q < p => q * (q / p) / (1.0 - q / p),
        [.., p, q] if *p > 0.0 || *q > 0.0 => f64::INFINITY,
        _ => 0.0,
    };
    remainder.add_ledger(tail);

    Ok(NormalFormResult {
        h: sh.h.clone(),
        r,
        s_total,
        chis,
        psi: psis,
        levels,
        remainder,
        reports,
        tail,
    })
}

/// Certified envelope of the remainder at radii `(rho', sigma')` and `rate`.
pub fn remainder_norm<C: Coeff>(res: &NormalFormResult<C>, rho: f64, sigma: f64, rate: f64) -> Result<Envelope> {
    if res.remainder.is_zero() {
        res.remainder.check_radii(rho, sigma)?;
        return Ok(Envelope::new(0.0, rate));
    }
    res.remainder.fourier_norm(rho, sigma, rate)
}
