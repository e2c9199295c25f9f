//! Real multivariate polynomials for the integrable part `h(I)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent vector of a monomial.
pub type Monomial = Vec<u32>;

/// `sum c_m I^m` with real coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    n: usize,
    #[serde(with = "pairs")]
    terms: BTreeMap<Monomial, f64>,
}

impl Poly {
    pub fn new(n: usize, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Result<Self> {
        let mut p = Self::zero(n);
        for (m, c) in terms {
            if m.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "monomial {m:?} has {} exponents, expected {n}",
                    m.len()
                )));
            }
            if !c.is_finite() {
                return Err(Error::InvalidParameter(format!("coefficient {c} of {m:?}")));
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    /// `omega . I`.
    pub fn linear(omega: &[f64]) -> Self {
        let n = omega.len();
        let mut p = Self::zero(n);
        for (l, &w) in omega.iter().enumerate() {
            let mut m = vec![0; n];
            m[l] = 1;
            p.add_term(m, w);
        }
        p
    }

    /// `sum_l I_l^2 / 2`.
    pub fn half_square(n: usize) -> Self {
        let mut p = Self::zero(n);
        for l in 0..n {
            let mut m = vec![0; n];
            m[l] = 2;
            p.add_term(m, 0.5);
        }
        p
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        let entry = self.terms.entry(m).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &f64)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| c * m.iter().zip(x).map(|(&e, &xi)| xi.powi(e as i32)).product::<f64>())
            .sum()
    }

    pub fn derivative(&self, l: usize) -> Self {
        let mut p = Self::zero(self.n);
        for (m, &c) in &self.terms {
            if m[l] > 0 {
                let mut d = m.clone();
                d[l] -= 1;
                p.add_term(d, c * m[l] as f64);
            }
        }
        p
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.n).map(|l| self.derivative(l)).collect()
    }

    /// Constant frequency vector when `h` is affine in `I`.
    pub fn constant_gradient(&self) -> Option<Vec<f64>> {
        if self.degree() > 1 {
            return None;
        }
        Some(
            self.gradient()
                .iter()
                .map(|g| g.eval(&vec![0.0; self.n]))
                .collect(),
        )
    }

    /// Re-expands in `d = I - center`.
    pub fn shift(&self, center: &[f64]) -> Self {
        let mut p = Self::zero(self.n);
        for (m, &c) in &self.terms {
            // product over l of (d_l + c_l)^{m_l}
            let mut partial: Vec<(Monomial, f64)> = vec![(vec![0; self.n], c)];
            for l in 0..self.n {
                let mut next = Vec::new();
                for (mono, coef) in &partial {
                    for q in 0..=m[l] {
                        let mut mm = mono.clone();
                        mm[l] = q;
                        let binom = binomial(m[l], q);
                        next.push((mm, coef * binom * center[l].powi((m[l] - q) as i32)));
                    }
                }
                partial = next;
            }
            for (mono, coef) in partial {
                p.add_term(mono, coef);
            }
        }
        p
    }

    /// Sum of absolute second derivatives over the box `[lo - pad, hi + pad]`,
    /// maximised over vertices; at least 1.
    pub fn hessian_bound(&self, lo: &[f64], hi: &[f64], pad: f64) -> f64 {
        let radius: Vec<f64> = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| a.abs().max(b.abs()) + pad)
            .collect();
        let mut total: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let d = self.derivative(i).derivative(j);
                let bound: f64 = d
                    .terms
                    .iter()
                    .map(|(m, c)| {
                        c.abs()
                            * m.iter()
                                .zip(&radius)
                                .map(|(&e, &r)| r.powi(e as i32))
                                .product::<f64>()
                    })
                    .sum();
                total = total.max(bound);
            }
        }
        (total * self.n as f64).max(1.0)
    }
}

/// Serializes a map with non-string keys as a list of pairs.
pub(crate) mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K, V, S>(map: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error>
    where
        K: Serialize,
        V: Serialize,
        S: Serializer,
    {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
