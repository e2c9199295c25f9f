//! Scenario files: schema, built-ins, overrides and validation.

use std::path::Path;

use anyhow::{bail, Context, Result};
use apnf::poly::Poly;
use apnf::timefn::{ExpPoly, PiecewisePoly, RationalDecay, TimeFn, Weight};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub const BUILTINS: [(&str, &str); 5] = [
    ("iso_resonant", include_str!("../scenarios/iso_resonant.toml")),
    ("iso_quadratic", include_str!("../scenarios/iso_quadratic.toml")),
    ("iso_bumps", include_str!("../scenarios/iso_bumps.toml")),
    ("nekho_desk", include_str!("../scenarios/nekho_desk.toml")),
    ("empty", include_str!("../scenarios/empty.toml")),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub system: System,
    pub perturbation: Perturbation,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub verification: Verification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub exps: Vec<u32>,
    pub coeff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct System {
    pub n: usize,
    /// Integrable part `h(I)` as polynomial terms.
    pub h: Vec<Term>,
    /// Action box `G`.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub rho: f64,
    pub sigma: f64,
    #[serde(default = "one")]
    pub c_h: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeClass {
    /// `m_f e^{-a t}`.
    Exponential { m_f: f64, a: f64 },
    /// `m_f (t+1)^{-order}`.
    Quadratic {
        m_f: f64,
        #[serde(default = "two")]
        order: u32,
    },
    /// Sum of `amplitudes[l]` times a bump of half-width `width` at `centers[l]`.
    Bumps {
        centers: Vec<f64>,
        amplitudes: Vec<f64>,
        width: f64,
    },
}

fn two() -> u32 {
    2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Cos,
    Sin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub k: Vec<i32>,
    pub trig: Trig,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Action dependence; constant 1 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<Vec<Term>>,
    /// Overrides the perturbation-wide time class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeClass>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// Absolute size of the perturbation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Size as a fraction of the smallness threshold of the chosen scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_fraction: Option<f64>,
    pub time: TimeClass,
    #[serde(default)]
    pub modes: Vec<Mode>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Birkhoff,
    Nekhoroshev,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Algorithm {
    pub mode: Scheme,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
    #[serde(default = "default_degree")]
    pub taylor_degree: u32,
    /// Harmonic cap; the finite-order scheme defaults to `rN + 2N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<u32>,
    /// Weight rate for bump perturbations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default = "default_d")]
    pub d: f64,
    /// Normalization order; derived from the constants when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<u32>,
    #[serde(default = "default_nodes")]
    pub grid_nodes: usize,
    #[serde(default = "default_prune")]
    pub prune_rel: f64,
    /// Highest level kept in the finite-order remainder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_total: Option<usize>,
}

fn default_j_max() -> usize {
    4
}
fn default_degree() -> u32 {
    8
}
fn default_d() -> f64 {
    0.25
}
fn default_nodes() -> usize {
    24
}
fn default_prune() -> f64 {
    1e-15
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verification {
    /// Initial conditions spread across `G` when `actions` is empty.
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub actions: Vec<Vec<f64>>,
    #[serde(default)]
    pub angles: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Points for the residual and round-trip checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_count() -> usize {
    4
}
fn default_tol() -> f64 {
    1e-10
}
fn default_samples() -> usize {
    100
}

impl Default for Verification {
    fn default() -> Self {
        Self {
            count: default_count(),
            actions: vec![],
            angles: vec![],
            horizon: None,
            tol: default_tol(),
            samples: default_samples(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Eps,
    A,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// Reads `source` as a path, or as `builtin:<name>` / a bare built-in name.
pub fn load_text(source: &str) -> Result<String> {
    let name = source.strip_prefix("builtin:");
    let path = Path::new(source);
    if name.is_none() && path.exists() {
        return std::fs::read_to_string(path).with_context(|| format!("reading {source}"));
    }
    let name = name.unwrap_or(source);
    match BUILTINS.iter().find(|(n, _)| *n == name) {
        Some((_, text)) => Ok(text.to_string()),
        None => bail!(
            "no config file {source:?} and no built-in scenario of that name (built-ins: {})",
            BUILTINS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
        ),
    }
}

/// Parses, applies `key=value` overrides and validates.
pub fn parse(text: &str, overrides: &[String]) -> Result<Scenario> {
    let s: Scenario = if overrides.is_empty() {
        toml::from_str(text).map_err(|e| anyhow::anyhow!("config: {e}"))?
    } else {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| anyhow::anyhow!("config: {e}"))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        // re-parse the text so that errors point at the offending line
        let merged = toml::to_string(&doc)?;
        toml::from_str(&merged).map_err(|e| anyhow::anyhow!("config after overrides: {e}"))?
    };
    s.validate()?;
    Ok(s)
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!("override {spec:?} is not of the form key=value");
    };
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if last {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let next = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match next {
            toml::Value::Table(t) => t,
            toml::Value::Array(items) => {
                // `modes.1.amplitude` addresses array elements
                let idx: usize = parts[i + 1]
                    .parse()
                    .with_context(|| format!("override {key}: {part} is an array, expected an index"))?;
                let rest = parts[i + 2..].join(".");
                let len = items.len();
                let Some(item) = items.get_mut(idx) else {
                    bail!("override {key}: index {idx} out of range for {part} (length {len})");
                };
                if rest.is_empty() {
                    *item = value;
                    return Ok(());
                }
                let toml::Value::Table(t) = item else {
                    bail!("override {key}: {part}[{idx}] is not a table");
                };
                return apply_override(t, &format!("{rest}={raw}"));
            }
            _ => bail!("override {key}: {part} is not a table"),
        };
    }
    Ok(())
}

fn positive(field: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        bail!("{field}: must be positive and finite, got {v}");
    }
    Ok(())
}

impl TimeClass {
    fn validate(&self, field: &str) -> Result<()> {
        match self {
            TimeClass::Exponential { m_f, a } => {
                positive(&format!("{field}.m_f"), *m_f)?;
                positive(&format!("{field}.a"), *a)
            }
            TimeClass::Quadratic { m_f, order } => {
                positive(&format!("{field}.m_f"), *m_f)?;
                if *order < 2 {
                    bail!("{field}.order: must be at least 2 for a summable decay, got {order}");
                }
                Ok(())
            }
            TimeClass::Bumps {
                centers,
                amplitudes,
                width,
            } => {
                positive(&format!("{field}.width"), *width)?;
                if centers.is_empty() || centers.len() != amplitudes.len() {
                    bail!("{field}: centers and amplitudes must be non-empty and of equal length");
                }
                if centers[0] - width < 0.0 {
                    bail!("{field}.centers: first bump starts before t = 0");
                }
                for (l, w) in centers.windows(2).enumerate() {
                    if w[1] - w[0] <= 2.0 * width {
                        bail!(
                            "{field}.centers: bumps {l} and {} are {} apart, need more than 2 width = {}",
                            l + 1,
                            w[1] - w[0],
                            2.0 * width
                        );
                    }
                }
                Ok(())
            }
        }
    }

    /// Time function scaled by `c`, with the declared envelope checked.
    pub fn build(&self, c: f64, field: &str) -> Result<TimeFn> {
        Ok(match self {
            TimeClass::Exponential { m_f, a } => {
                let g = TimeFn::Exp(ExpPoly::decaying(c * m_f, *a));
                let env = g.certify_envelope(*a)?;
                if env.m > (c * m_f).abs() * (1.0 + 1e-12) {
                    bail!("{field}: envelope {} exceeds the declared {}", env.m, c * m_f);
                }
                g
            }
            TimeClass::Quadratic { m_f, order } => {
                let g: TimeFn = RationalDecay::power(Complex64::new(c * m_f, 0.0), *order)?.into();
                let m = g.certify(Weight::Power { power: *order })?;
                if m > (c * m_f).abs() * (1.0 + 1e-12) {
                    bail!("{field}: envelope {m} exceeds the declared {}", c * m_f);
                }
                g
            }
            TimeClass::Bumps {
                centers,
                amplitudes,
                width,
            } => {
                let amps: Vec<f64> = amplitudes.iter().map(|v| c * v).collect();
                PiecewisePoly::bumps(centers, &amps, *width)?.into()
            }
        })
    }

    /// Exponential weight rate used for norms.
    pub fn rate(&self, fallback: Option<f64>) -> Option<f64> {
        match self {
            TimeClass::Exponential { a, .. } => Some(*a),
            TimeClass::Quadratic { .. } => None,
            TimeClass::Bumps { .. } => Some(fallback.unwrap_or(0.2)),
        }
    }
}

pub fn poly(n: usize, terms: &[Term], field: &str) -> Result<Poly> {
    for (i, t) in terms.iter().enumerate() {
        if t.exps.len() != n {
            bail!("{field}[{i}].exps: expected {n} exponents, got {}", t.exps.len());
        }
    }
    Ok(Poly::new(n, terms.iter().map(|t| (t.exps.clone(), t.coeff)))?)
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            bail!("version: schema version {} is not supported (expected {SCHEMA_VERSION})", self.version);
        }
        let sys = &self.system;
        let n = sys.n;
        if n == 0 {
            bail!("system.n: must be at least 1");
        }
        if sys.lo.len() != n || sys.hi.len() != n {
            bail!("system.lo/hi: expected {n} components");
        }
        if sys.lo.iter().zip(&sys.hi).any(|(a, b)| !(a < b)) {
            bail!("system.lo/hi: need lo < hi componentwise");
        }
        positive("system.rho", sys.rho)?;
        positive("system.sigma", sys.sigma)?;
        positive("system.c_h", sys.c_h)?;
        poly(n, &sys.h, "system.h")?;

        let p = &self.perturbation;
        match (p.eps, p.eps_fraction) {
            (Some(e), None) if e >= 0.0 && e.is_finite() => {}
            (None, Some(f)) => positive("perturbation.eps_fraction", f)?,
            (Some(e), None) => bail!("perturbation.eps: must be non-negative, got {e}"),
            _ => bail!("perturbation: give exactly one of eps and eps_fraction"),
        }
        p.time.validate("perturbation.time")?;
        for (i, m) in p.modes.iter().enumerate() {
            let field = format!("perturbation.modes[{i}]");
            if m.k.len() != n {
                bail!("{field}.k: expected {n} components, got {}", m.k.len());
            }
            if m.k.iter().all(|&v| v == 0) {
                bail!("{field}.k: the zero harmonic is not a perturbation mode");
            }
            if let Some(terms) = &m.poly {
                poly(n, terms, &format!("{field}.poly"))?;
            }
            if let Some(t) = &m.time {
                t.validate(&format!("{field}.time"))?;
            }
        }

        let alg = &self.algorithm;
        match alg.mode {
            Scheme::Birkhoff => {
                if self.h()?.degree() > 1 {
                    bail!("system.h: the iterated scheme needs h linear in the actions");
                }
                if alg.j_max == 0 {
                    bail!("algorithm.j_max: must be at least 1");
                }
            }
            Scheme::Nekhoroshev => {
                if !(alg.d > 0.0 && alg.d < 0.5) {
                    bail!("algorithm.d: must lie in (0, 1/2), got {}", alg.d);
                }
                if alg.grid_nodes < 4 {
                    bail!("algorithm.grid_nodes: need at least 4 nodes");
                }
                let exponential = |t: &TimeClass| matches!(t, TimeClass::Exponential { .. });
                if !exponential(&p.time) || p.modes.iter().any(|m| m.time.as_ref().is_some_and(|t| !exponential(t))) {
                    bail!("perturbation.time.class: the finite-order scheme needs exponential decay");
                }
            }
        }
        if let Some(r) = alg.rate {
            positive("algorithm.rate", r)?;
        }

        let v = &self.verification;
        positive("verification.tol", v.tol)?;
        if let Some(h) = v.horizon {
            positive("verification.horizon", h)?;
        }
        if !v.actions.is_empty() {
            if v.actions.len() != v.angles.len() {
                bail!("verification.angles: need one angle vector per action vector");
            }
            for (i, (a, p)) in v.actions.iter().zip(&v.angles).enumerate() {
                if a.len() != n || p.len() != n {
                    bail!("verification.actions[{i}]: expected {n} components");
                }
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.values.iter().any(|v| !(*v > 0.0)) {
                bail!("sweep.values: need positive values");
            }
        }
        Ok(())
    }

    pub fn h(&self) -> Result<Poly> {
        poly(self.system.n, &self.system.h, "system.h")
    }

    /// Initial conditions: explicit, or spread across `G` with golden-ratio angles.
    pub fn initial_conditions(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let v = &self.verification;
        if !v.actions.is_empty() {
            return v.actions.iter().cloned().zip(v.angles.iter().cloned()).collect();
        }
        let (lo, hi) = (&self.system.lo, &self.system.hi);
        (0..v.count)
            .map(|i| {
                let frac = (i as f64 + 0.5) / v.count as f64;
                let actions = lo.iter().zip(hi).map(|(a, b)| a + frac * (b - a)).collect();
                let angles = (0..lo.len())
                    .map(|l| std::f64::consts::TAU * ((i + l) as f64 * 0.618_033_988_749_895).fract())
                    .collect();
                (actions, angles)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for (name, text) in BUILTINS {
            let s = parse(text, &[]).unwrap_or_else(|e| panic!("{name}: {e:#}"));
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn overrides_reach_nested_and_array_fields() {
        let text = load_text("builtin:iso_resonant").unwrap();
        let s = parse(
            &text,
            &[
                "perturbation.eps=2e-3".into(),
                "perturbation.modes.0.amplitude=0.5".into(),
                "verification.count=1".into(),
                "name=renamed".into(),
                "system.lo.0=0.4".into(),
            ],
        )
        .unwrap();
        assert_eq!(s.perturbation.eps, Some(2e-3));
        assert_eq!(s.perturbation.modes[0].amplitude, 0.5);
        assert_eq!(s.verification.count, 1);
        assert_eq!(s.name, "renamed");
        assert_eq!(s.system.lo[0], 0.4);
        assert!(parse(&text, &["system.lo.7=0.4".into()]).unwrap_err().to_string().contains("out of range"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = load_text("empty").unwrap();
        let err = parse(&text, &["system.mass=1.0".into()]).unwrap_err();
        assert!(format!("{err:#}").contains("mass"), "{err:#}");
        let err = parse(&text, &["perturbation.time.rate=1.0".into()]).unwrap_err();
        assert!(format!("{err:#}").contains("rate"), "{err:#}");
    }

    #[test]
    fn bad_time_tag_names_the_field() {
        let text = load_text("empty").unwrap().replace("\"exponential\"", "\"expo\"");
        let err = format!("{:#}", parse(&text, &[]).unwrap_err());
        assert!(err.contains("class") && err.contains("expo"), "{err}");
    }

    #[test]
    fn validation_names_fields() {
        let text = load_text("iso_bumps").unwrap();
        let err = format!("{:#}", parse(&text, &["perturbation.time.width=2.0".into()]).unwrap_err());
        assert!(err.starts_with("perturbation.time.centers"), "{err}");
        let err = format!("{:#}", parse(&text, &["perturbation.modes.1.k=[1]".into()]).unwrap_err());
        assert!(err.starts_with("perturbation.modes[1].k"), "{err}");
        let err = format!("{:#}", parse(&text, &["version=2".into()]).unwrap_err());
        assert!(err.starts_with("version"), "{err}");
    }

    #[test]
    fn spread_initial_conditions_stay_in_box() {
        let s = parse(&load_text("nekho_desk").unwrap(), &[]).unwrap();
        let ics = s.initial_conditions();
        assert_eq!(ics.len(), 10);
        assert!(ics.iter().all(|(a, _)| a[0] > 0.5 && a[0] < 1.5));
    }
}
