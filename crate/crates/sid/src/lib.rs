//! Sparse invariant detection for polynomial ODE systems.
//!
//! Given a first-order system x' = f(x) and a monomial basis, the pipeline
//! finds coefficient vectors theta with (nabla theta.b)(x) . f(x) = 0 on
//! sampled states, rotates the recovered null space toward sparsity, counts
//! how many of the quantities are functionally independent, and validates
//! the survivors along simulated trajectories.

pub mod basis;
pub mod detector;
pub mod error;
pub mod report;
pub mod simulate;
pub mod systems;

mod poly;

pub use error::{Result, SidError};
