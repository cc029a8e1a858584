//! Small dense-exponent polynomial type used to construct known-quantity
//! catalogs. Not part of the public surface; coefficient vectors are exported
//! through [`crate::systems::KnownQuantity`].

use std::collections::BTreeMap;

/// Polynomial as a map from exponent vectors to coefficients.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Poly {
    pub d: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl Poly {
    pub fn zero(d: usize) -> Self {
        Poly {
            d,
            terms: BTreeMap::new(),
        }
    }

    /// The single variable x_j.
    pub fn var(d: usize, j: usize) -> Self {
        let mut e = vec![0u32; d];
        e[j] = 1;
        let mut terms = BTreeMap::new();
        terms.insert(e, 1.0);
        Poly { d, terms }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        debug_assert_eq!(self.d, other.d);
        let mut terms = self.terms.clone();
        for (e, &c) in &other.terms {
            let entry = terms.entry(e.clone()).or_insert(0.0);
            *entry += c;
            if *entry == 0.0 {
                terms.remove(e);
            }
        }
        Poly { d: self.d, terms }
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        debug_assert_eq!(self.d, other.d);
        let mut terms: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb.iter()).map(|(&a, &b)| a + b).collect();
                let entry = terms.entry(e.clone()).or_insert(0.0);
                *entry += ca * cb;
                if *entry == 0.0 {
                    terms.remove(&e);
                }
            }
        }
        Poly { d: self.d, terms }
    }

    pub fn scale(&self, c: f64) -> Poly {
        if c == 0.0 {
            return Poly::zero(self.d);
        }
        Poly {
            d: self.d,
            terms: self.terms.iter().map(|(e, &v)| (e.clone(), v * c)).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        self.terms
            .iter()
            .map(|(e, &c)| {
                c * e
                    .iter()
                    .zip(x.iter())
                    .map(|(&p, &xi)| xi.powi(p as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Maximum total degree over the support.
    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Coefficient vector over a monomial basis, or None if some term with a
    /// non-negligible coefficient is outside the basis.
    pub fn theta(&self, basis: &crate::basis::MonomialBasis) -> Option<Vec<f64>> {
        let max_abs = self
            .terms
            .values()
            .fold(0.0f64, |acc, &c| acc.max(c.abs()));
        let mut theta = vec![0.0; basis.len()];
        for (e, &c) in &self.terms {
            match basis.index_of(e) {
                Some(i) => theta[i] += c,
                None => {
                    if c.abs() > 1e-13 * max_abs {
                        return None;
                    }
                }
            }
        }
        Some(theta)
    }
}

/// Sum a list of polynomials.
pub(crate) fn poly_sum(ps: &[Poly]) -> Poly {
    let d = ps.first().map_or(0, |p| p.d);
    ps.iter().fold(Poly::zero(d), |acc, p| acc.add(p))
}
