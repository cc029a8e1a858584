//! One-dimensional harmonic oscillator, used as a small oracle case.

use crate::poly::Poly;

/// Field of the unit harmonic oscillator with state (x, p):
/// dx/dt = p, dp/dt = -x.
pub fn harmonic_oscillator_field(x: &[f64]) -> Vec<f64> {
    vec![x[1], -x[0]]
}

/// Known conserved quantity: the energy x^2 + p^2.
pub(crate) fn catalog() -> Vec<(&'static str, Poly)> {
    let x = Poly::var(2, 0);
    let p = Poly::var(2, 1);
    vec![("H", x.mul(&x).add(&p.mul(&p)))]
}
