//! Multivariate monomial basis with analytic gradients.
//!
//! The basis spans all monomials of total degree 1..=max_degree over d
//! variables, excluding the constant term. Terms are ordered by total degree
//! and, within a degree, lexicographically with earlier variables dominating,
//! so the basis for degree n is a prefix of the basis for degree n+1.

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SidError};

/// Hard cap on the number of basis terms.
pub const BASIS_SIZE_CAP: usize = 50_000;

/// Sentinel parent index meaning "the constant monomial" (value 1).
const CONSTANT: usize = usize::MAX;

/// Enumerate exponent vectors of all monomials with total degree 1..=max_degree.
pub fn enumerate_monomials(d: usize, max_degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; d];
    for degree in 1..=max_degree {
        fill_degree(d, 0, degree, &mut current, &mut out);
    }
    out
}

fn fill_degree(d: usize, slot: usize, remaining: u32, current: &mut [u32], out: &mut Vec<Vec<u32>>) {
    if slot + 1 == d {
        current[slot] = remaining;
        out.push(current.to_vec());
        current[slot] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[slot] = e;
        fill_degree(d, slot + 1, remaining - e, current, out);
        current[slot] = 0;
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of monomials of total degree 1..=max_degree in d variables.
pub fn basis_size(d: usize, max_degree: u32) -> u128 {
    binomial(d as u64 + max_degree as u64, max_degree as u64) - 1
}

/// One gradient contribution of a monomial: d/dx_j m = coeff * parent(x) where
/// parent is the monomial with the j-th exponent lowered by one.
#[derive(Debug, Clone, Copy)]
struct GradTerm {
    var: usize,
    coeff: f64,
    parent: usize,
}

/// Monomial basis over d variables with precomputed evaluation tables.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    d: usize,
    max_degree: u32,
    exponents: Vec<Vec<u32>>,
    /// For each term: (variable, parent index) so that term = parent * x_var.
    eval_parent: Vec<(usize, usize)>,
    grad_terms: Vec<Vec<GradTerm>>,
    index: HashMap<Vec<u32>, usize>,
}

impl MonomialBasis {
    /// Build the basis, rejecting empty or oversized configurations.
    pub fn new(d: usize, max_degree: u32) -> Result<Self> {
        if d == 0 {
            return Err(SidError::Config("basis dimension must be positive".into()));
        }
        if max_degree == 0 {
            return Err(SidError::Config("basis degree must be at least 1".into()));
        }
        let size = basis_size(d, max_degree);
        if size > BASIS_SIZE_CAP as u128 {
            return Err(SidError::BasisTooLarge {
                d,
                degree: max_degree,
                size: size.min(usize::MAX as u128) as usize,
                cap: BASIS_SIZE_CAP,
            });
        }
        let exponents = enumerate_monomials(d, max_degree);
        debug_assert_eq!(exponents.len() as u128, size);

        let mut index = HashMap::with_capacity(exponents.len());
        for (i, e) in exponents.iter().enumerate() {
            index.insert(e.clone(), i);
        }

        let lookup = |e: &[u32], index: &HashMap<Vec<u32>, usize>| -> usize {
            if e.iter().all(|&v| v == 0) {
                CONSTANT
            } else {
                index[e]
            }
        };

        let mut eval_parent = Vec::with_capacity(exponents.len());
        let mut grad_terms = Vec::with_capacity(exponents.len());
        for e in &exponents {
            let mut parent = e.clone();
            let j = e.iter().rposition(|&v| v > 0).expect("no constant term");
            parent[j] -= 1;
            eval_parent.push((j, lookup(&parent, &index)));
            parent[j] += 1;

            let mut terms = Vec::new();
            for (var, &exp) in e.iter().enumerate() {
                if exp == 0 {
                    continue;
                }
                parent[var] -= 1;
                terms.push(GradTerm {
                    var,
                    coeff: exp as f64,
                    parent: lookup(&parent, &index),
                });
                parent[var] += 1;
            }
            grad_terms.push(terms);
        }

        Ok(MonomialBasis {
            d,
            max_degree,
            exponents,
            eval_parent,
            grad_terms,
            index,
        })
    }

    /// Number of variables.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Maximum total degree.
    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// Number of basis terms K.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Exponent vectors in basis order.
    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Index of an exponent vector, if the term is in the basis.
    pub fn index_of(&self, exponents: &[u32]) -> Option<usize> {
        self.index.get(exponents).copied()
    }

    /// Evaluate all K basis terms at a point.
    pub fn eval_basis(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.d, "point dimension mismatch");
        let mut vals = vec![0.0; self.exponents.len()];
        for (i, &(var, parent)) in self.eval_parent.iter().enumerate() {
            let pv = if parent == CONSTANT { 1.0 } else { vals[parent] };
            vals[i] = pv * x[var];
        }
        vals
    }

    /// Evaluate the K x d matrix of basis gradients at a point.
    pub fn eval_basis_gradient(&self, x: &[f64]) -> Array2<f64> {
        let vals = self.eval_basis(x);
        let mut grad = Array2::zeros((self.exponents.len(), self.d));
        for (i, terms) in self.grad_terms.iter().enumerate() {
            for t in terms {
                let pv = if t.parent == CONSTANT { 1.0 } else { vals[t.parent] };
                grad[[i, t.var]] = t.coeff * pv;
            }
        }
        grad
    }

    /// Evaluate the K-vector of gradient-field contractions (nabla b_i)(x) . f.
    pub fn grad_dot_field(&self, x: &[f64], field: &[f64]) -> Vec<f64> {
        assert_eq!(field.len(), self.d, "field dimension mismatch");
        let vals = self.eval_basis(x);
        let mut out = vec![0.0; self.exponents.len()];
        for (i, terms) in self.grad_terms.iter().enumerate() {
            let mut acc = 0.0;
            for t in terms {
                let pv = if t.parent == CONSTANT { 1.0 } else { vals[t.parent] };
                acc += t.coeff * pv * field[t.var];
            }
            out[i] = acc;
        }
        out
    }

    /// Gradient of the polynomial theta . b at a point, as a d-vector.
    pub fn theta_gradient(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.exponents.len(), "coefficient length mismatch");
        let vals = self.eval_basis(x);
        let mut out = vec![0.0; self.d];
        for (i, terms) in self.grad_terms.iter().enumerate() {
            let c = theta[i];
            if c == 0.0 {
                continue;
            }
            for t in terms {
                let pv = if t.parent == CONSTANT { 1.0 } else { vals[t.parent] };
                out[t.var] += c * t.coeff * pv;
            }
        }
        out
    }

    /// Human-readable label for basis term i, such as "xyz" or "x1^2*u2".
    pub fn term_label(&self, i: usize, names: &[String]) -> String {
        term_label(&self.exponents[i], names)
    }

    /// Serializable descriptor of the basis.
    pub fn descriptor(&self, names: &[String]) -> BasisDescriptor {
        BasisDescriptor {
            d: self.d,
            degree: self.max_degree,
            variables: names.to_vec(),
            terms: self.exponents.clone(),
        }
    }
}

/// Serialized basis shape: dimension, degree, and exponent vectors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BasisDescriptor {
    pub d: usize,
    pub degree: u32,
    pub variables: Vec<String>,
    pub terms: Vec<Vec<u32>>,
}

/// Render an exponent vector against variable names.
///
/// All-single-character names with unit exponents concatenate ("xyz"); any
/// other shape joins factors with "*" and renders powers with "^".
pub fn term_label(exponents: &[u32], names: &[String]) -> String {
    let factors: Vec<(usize, u32)> = exponents
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(j, &e)| (j, e))
        .collect();
    if factors.is_empty() {
        return "1".to_string();
    }
    let compact = factors
        .iter()
        .all(|&(j, e)| e == 1 && names[j].chars().count() == 1);
    if compact {
        factors.iter().map(|&(j, _)| names[j].as_str()).collect()
    } else {
        factors
            .iter()
            .map(|&(j, e)| {
                if e == 1 {
                    names[j].clone()
                } else {
                    format!("{}^{}", names[j], e)
                }
            })
            .collect::<Vec<_>>()
            .join("*")
    }
}
