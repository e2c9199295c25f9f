//! Near-identity coordinate maps built from generating functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier_taylor::{lie_series_apply, lie_transform_apply, Coeff, Meta, Observable, Series};

/// Point of the extended phase space at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub actions: Vec<f64>,
    pub angles: Vec<f64>,
    pub eta: f64,
    pub t: f64,
}

impl PhasePoint {
    pub fn new(actions: Vec<f64>, angles: Vec<f64>, eta: f64, t: f64) -> Self {
        Self {
            actions,
            angles,
            eta,
            t,
        }
    }

    /// Max-norm distance, with angle differences taken modulo `2 pi`.
    pub fn distance(&self, other: &Self) -> f64 {
        let tau = std::f64::consts::TAU;
        let da = self
            .actions
            .iter()
            .zip(&other.actions)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dp = self
            .angles
            .iter()
            .zip(&other.angles)
            .map(|(a, b)| {
                let d = (a - b).rem_euclid(tau);
                d.min(tau - d)
            })
            .fold(0.0, f64::max);
        da.max(dp).max((self.eta - other.eta).abs())
    }
}

/// Old coordinates as functions of new ones, and back.
pub trait CoordinateMap {
    /// `x = B(y)`: original coordinates of the normalized point `y`.
    fn forward(&self, y: &PhasePoint) -> Result<PhasePoint>;
    /// `y = B^{-1}(x)`.
    fn inverse(&self, x: &PhasePoint) -> Result<PhasePoint>;
    /// `y - x` for `y = B^{-1}(x)`, angles unwrapped.
    fn inverse_displacement(&self, x: &PhasePoint) -> Result<PhasePoint> {
        let y = self.inverse(x)?;
        Ok(PhasePoint {
            actions: y.actions.iter().zip(&x.actions).map(|(a, b)| a - b).collect(),
            angles: y.angles.iter().zip(&x.angles).map(|(a, b)| a - b).collect(),
            eta: y.eta - x.eta,
            t: x.t,
        })
    }
}

/// Coordinate functions after one transformation.
#[derive(Clone, Debug)]
struct CoordFns<C: Coeff> {
    actions: Vec<Observable<C>>,
    angles: Vec<Observable<C>>,
    eta: Observable<C>,
}

impl<C: Coeff> CoordFns<C> {
    fn build(meta: &Meta<C::Ctx>, apply: impl Fn(&Observable<C>) -> Result<Observable<C>>) -> Result<Self> {
        let n = meta.n;
        Ok(Self {
            actions: (0..n)
                .map(|l| apply(&Observable::action_coordinate(meta.clone(), l)))
                .collect::<Result<_>>()?,
            angles: (0..n)
                .map(|l| apply(&Observable::angle_coordinate(meta.clone(), l)))
                .collect::<Result<_>>()?,
            eta: apply(&Observable::eta_coordinate(meta.clone()))?,
        })
    }

    fn eval(&self, p: &PhasePoint) -> PhasePoint {
        let ev = |o: &Observable<C>| o.eval(&p.actions, &p.angles, p.eta, p.t).re;
        PhasePoint {
            actions: self.actions.iter().map(ev).collect(),
            angles: self.angles.iter().map(ev).collect(),
            eta: ev(&self.eta),
            t: p.t,
        }
    }

    /// Series parts only, i.e. the displacement `B(p) - p`.
    fn displacement(&self, p: &PhasePoint) -> PhasePoint {
        let ev = |o: &Observable<C>| o.series.eval(&p.actions, &p.angles, p.t).re;
        PhasePoint {
            actions: self.actions.iter().map(ev).collect(),
            angles: self.angles.iter().map(ev).collect(),
            eta: ev(&self.eta),
            t: p.t,
        }
    }
}

/// Action box on which maps may be evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub pad: f64,
}

impl ActionDomain {
    fn check(&self, p: &PhasePoint) -> Result<()> {
        let inside = p
            .actions
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&x, (&a, &b))| x >= a - self.pad && x <= b + self.pad);
        if !inside || p.actions.len() != self.lo.len() || !(p.t >= 0.0) {
            return Err(Error::OutsideDomain(format!(
                "I = {:?}, t = {} not in [{:?}, {:?}] padded by {}",
                p.actions, p.t, self.lo, self.hi, self.pad
            )));
        }
        Ok(())
    }
}

/// Composition `B = Phi_0 o Phi_1 o ... o Phi_J` of Lie-series maps
/// `Phi_j = exp(L_{chi_j})` acting on the coordinates.
#[derive(Clone, Debug)]
pub struct LieSeriesMap<C: Coeff> {
    forward: Vec<CoordFns<C>>,
    inverse: Vec<CoordFns<C>>,
    domain: ActionDomain,
}

impl<C: Coeff> LieSeriesMap<C> {
    pub fn new(generators: &[Series<C>], domain: ActionDomain, s_max: usize, tol: f64) -> Result<Self> {
        let mut forward = Vec::new();
        let mut inverse = Vec::new();
        for chi in generators {
            let meta = chi.meta();
            let neg = chi.scale_re(-1.0);
            forward.push(CoordFns::build(meta, |o| lie_series_apply(chi, o, s_max, tol))?);
            inverse.push(CoordFns::build(meta, |o| lie_series_apply(&neg, o, s_max, tol))?);
        }
        Ok(Self {
            forward,
            inverse,
            domain,
        })
    }

    pub fn identity(domain: ActionDomain) -> Self {
        Self {
            forward: vec![],
            inverse: vec![],
            domain,
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }
}

impl<C: Coeff> CoordinateMap for LieSeriesMap<C> {
    fn forward(&self, y: &PhasePoint) -> Result<PhasePoint> {
        self.domain.check(y)?;
        let mut p = y.clone();
        for f in self.forward.iter().rev() {
            p = f.eval(&p);
        }
        Ok(p)
    }

    fn inverse(&self, x: &PhasePoint) -> Result<PhasePoint> {
        self.domain.check(x)?;
        let mut p = x.clone();
        for f in &self.inverse {
            p = f.eval(&p);
        }
        Ok(p)
    }
}

/// Lie-transform map `x = T_chi(id)(y)` with a fixed-point inverse.
#[derive(Clone, Debug)]
pub struct LieTransformMap<C: Coeff> {
    coords: Option<CoordFns<C>>,
    domain: ActionDomain,
    pub inverse_tol: f64,
    pub inverse_max_iter: usize,
}

impl<C: Coeff> LieTransformMap<C> {
    pub fn new(generators: &[Series<C>], domain: ActionDomain, s_total: usize) -> Result<Self> {
        let coords = match generators.first() {
            Some(chi) => Some(CoordFns::build(chi.meta(), |o| lie_transform_apply(generators, o, s_total))?),
            None => None,
        };
        Ok(Self {
            coords,
            domain,
            inverse_tol: 1e-14,
            inverse_max_iter: 200,
        })
    }
}

impl<C: Coeff> CoordinateMap for LieTransformMap<C> {
    fn forward(&self, y: &PhasePoint) -> Result<PhasePoint> {
        self.domain.check(y)?;
        Ok(match &self.coords {
            Some(c) => c.eval(y),
            None => y.clone(),
        })
    }

    fn inverse(&self, x: &PhasePoint) -> Result<PhasePoint> {
        let d = self.inverse_displacement(x)?;
        Ok(PhasePoint {
            actions: x.actions.iter().zip(&d.actions).map(|(a, b)| a + b).collect(),
            angles: x.angles.iter().zip(&d.angles).map(|(a, b)| a + b).collect(),
            eta: x.eta + d.eta,
            t: x.t,
        })
    }

    /// Fixed point of `d = -D(x + d)` with `D = T_chi(id) - id`, which keeps
    /// full relative precision in `d` even when it is far below the
    /// resolution of `x`.
    fn inverse_displacement(&self, x: &PhasePoint) -> Result<PhasePoint> {
        self.domain.check(x)?;
        let zero = PhasePoint {
            actions: vec![0.0; x.actions.len()],
            angles: vec![0.0; x.angles.len()],
            eta: 0.0,
            t: x.t,
        };
        let Some(c) = &self.coords else {
            return Ok(zero);
        };
        let mut d = zero;
        for _ in 0..self.inverse_max_iter {
            let y = PhasePoint {
                actions: x.actions.iter().zip(&d.actions).map(|(a, b)| a + b).collect(),
                angles: x.angles.iter().zip(&d.angles).map(|(a, b)| a + b).collect(),
                eta: x.eta + d.eta,
                t: x.t,
            };
            let dy = c.displacement(&y);
            let mut change: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for l in 0..d.actions.len() {
                for (old, new) in [(&mut d.actions[l], -dy.actions[l]), (&mut d.angles[l], -dy.angles[l])] {
                    change = change.max((*old - new).abs());
                    scale = scale.max(new.abs());
                    *old = new;
                }
            }
            change = change.max((d.eta + dy.eta).abs());
            scale = scale.max(dy.eta.abs());
            d.eta = -dy.eta;
            if change <= self.inverse_tol * scale {
                return Ok(d);
            }
        }
        Err(Error::OutsideDomain(format!(
            "fixed-point inverse did not converge in {} iterations at {:?}",
            self.inverse_max_iter, x
        )))
    }
}
