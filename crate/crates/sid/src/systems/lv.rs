//! Three-species cyclic Lotka-Volterra system.

use crate::poly::Poly;

/// Field of the cyclic three-species Lotka-Volterra system:
/// dx/dt = x(y-z), dy/dt = y(z-x), dz/dt = z(x-y).
pub fn lotka_volterra_field(x: &[f64]) -> Vec<f64> {
    let (a, b, c) = (x[0], x[1], x[2]);
    vec![a * (b - c), b * (c - a), c * (a - b)]
}

/// Known conserved quantities: the total population and the product.
pub(crate) fn catalog() -> Vec<(&'static str, Poly)> {
    let x = Poly::var(3, 0);
    let y = Poly::var(3, 1);
    let z = Poly::var(3, 2);
    let sum = x.add(&y).add(&z);
    let product = x.mul(&y).mul(&z);
    vec![("H1", sum), ("H2", product)]
}
