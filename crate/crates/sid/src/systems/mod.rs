//! Benchmark dynamical systems: vector fields, phase-space samplers, and
//! catalogs of known conserved quantities.

pub mod chemistry;
pub mod fluid;
pub mod lv;
pub mod oscillator;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::basis::MonomialBasis;
use crate::error::{Result, SidError};
use crate::poly::Poly;

/// A dynamical system the detector can run against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    /// Cyclic three-species Lotka-Volterra system.
    Lv3,
    /// 1D harmonic oscillator (small oracle case, not in the public registry).
    Ho1,
    /// Area-constrained triangle of unit masses.
    Fluid2d,
    /// Volume-constrained tetrahedron of unit masses.
    Fluid3d,
    /// 11-species photochemical ozone model, full mass-action field.
    Ozone11,
    /// 11-species model with the pseudo-steady-state field.
    Ozone11Pssa,
    /// 12-species variant tracking H2O for the hydrogen balance.
    Ozone12,
}

/// A named conserved quantity with an exact polynomial form.
#[derive(Debug, Clone)]
pub struct KnownQuantity {
    pub name: String,
    poly: Poly,
}

impl KnownQuantity {
    /// Coefficient vector over a basis, or None if the quantity needs terms
    /// the basis does not contain.
    pub fn theta(&self, basis: &MonomialBasis) -> Option<Vec<f64>> {
        self.poly.theta(basis)
    }

    /// Evaluate the quantity at a state.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.poly.eval(x)
    }

    /// Total polynomial degree.
    pub fn degree(&self) -> u32 {
        self.poly.degree()
    }
}

impl System {
    /// Publicly registered systems in presentation order.
    pub fn registry() -> [System; 6] {
        [
            System::Lv3,
            System::Fluid2d,
            System::Fluid3d,
            System::Ozone11,
            System::Ozone11Pssa,
            System::Ozone12,
        ]
    }

    /// Look up a registered system by name.
    pub fn by_name(name: &str) -> Option<System> {
        Self::registry().into_iter().find(|s| s.name() == name)
    }

    pub fn name(&self) -> &'static str {
        match self {
            System::Lv3 => "lv3",
            System::Ho1 => "ho1",
            System::Fluid2d => "fluid2d",
            System::Fluid3d => "fluid3d",
            System::Ozone11 => "ozone11",
            System::Ozone11Pssa => "ozone11-pssa",
            System::Ozone12 => "ozone12",
        }
    }

    /// Phase-space dimension.
    pub fn dim(&self) -> usize {
        match self {
            System::Lv3 => 3,
            System::Ho1 => 2,
            System::Fluid2d => fluid::DIM_2D,
            System::Fluid3d => fluid::DIM_3D,
            System::Ozone11 | System::Ozone11Pssa => 11,
            System::Ozone12 => 12,
        }
    }

    /// Variable names in state order.
    pub fn var_names(&self) -> Vec<String> {
        match self {
            System::Lv3 => vec!["x".into(), "y".into(), "z".into()],
            System::Ho1 => vec!["x".into(), "p".into()],
            System::Fluid2d => (1..=3)
                .flat_map(|i| ["x", "y", "u", "v"].map(|nm| format!("{nm}{i}")))
                .collect(),
            System::Fluid3d => (1..=4)
                .flat_map(|i| ["x", "y", "z", "u", "v", "w"].map(|nm| format!("{nm}{i}")))
                .collect(),
            System::Ozone11 | System::Ozone11Pssa => {
                chemistry::SPECIES.iter().map(|s| s.to_string()).collect()
            }
            System::Ozone12 => {
                let mut names: Vec<String> =
                    chemistry::SPECIES.iter().map(|s| s.to_string()).collect();
                names.push(chemistry::WATER.to_string());
                names
            }
        }
    }

    /// Evaluate the vector field at a state.
    pub fn eval_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(SidError::Config(format!(
                "state dimension {} does not match {} (d={})",
                x.len(),
                self.name(),
                self.dim()
            )));
        }
        match self {
            System::Lv3 => Ok(lv::lotka_volterra_field(x)),
            System::Ho1 => Ok(oscillator::harmonic_oscillator_field(x)),
            System::Fluid2d => fluid::fluid2d_field(x),
            System::Fluid3d => fluid::fluid3d_field(x),
            System::Ozone11 => Ok(chemistry::chemistry_field(x)),
            System::Ozone11Pssa => chemistry::chemistry_pssa_field(x),
            System::Ozone12 => Ok(chemistry::chemistry_field_12(x)),
        }
    }

    /// Field used for trajectory integration. Chemistry systems integrate the
    /// PSSA-reduced field; all other systems integrate their own field.
    pub fn eval_integration_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            System::Ozone11 => chemistry::chemistry_pssa_field(x),
            System::Ozone12 => chemistry::chemistry_pssa_field_12(x),
            _ => self.eval_field(x),
        }
    }

    /// Whether trajectory states must stay componentwise nonnegative.
    pub fn nonnegative_states(&self) -> bool {
        matches!(
            self,
            System::Ozone11 | System::Ozone11Pssa | System::Ozone12
        )
    }

    /// Draw P sample states for the regression.
    ///
    /// Distribution-sampled systems draw independent states (Gaussian, with
    /// fluid velocities projected onto the constraint surface); chemistry
    /// systems sample along PSSA trajectories from random initial conditions.
    pub fn sample_states(&self, p: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            System::Lv3 | System::Ho1 => {
                let d = self.dim();
                Ok((0..p)
                    .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
                    .collect())
            }
            System::Fluid2d | System::Fluid3d => {
                let mut out = Vec::with_capacity(p);
                let mut rejected = 0usize;
                let max_attempts = 2 * p + 100;
                let mut attempts = 0usize;
                while out.len() < p {
                    attempts += 1;
                    if attempts > max_attempts {
                        return Err(SidError::SamplerDegenerate { rejected, attempts });
                    }
                    let drawn = match self {
                        System::Fluid2d => fluid::sample2d(&mut rng),
                        _ => fluid::sample3d(&mut rng),
                    };
                    match drawn {
                        Some(x) => out.push(x),
                        None => rejected += 1,
                    }
                }
                Ok(out)
            }
            System::Ozone11 | System::Ozone11Pssa => {
                chemistry::sample_trajectory_states(false, p, &mut rng)
            }
            System::Ozone12 => chemistry::sample_trajectory_states(true, p, &mut rng),
        }
    }

    /// Default sample count for a basis of size k.
    pub fn default_sample_count(&self, k: usize) -> usize {
        match self {
            System::Ozone11 | System::Ozone11Pssa | System::Ozone12 => 2000,
            _ => (2 * k).max(100),
        }
    }

    /// Default trajectory horizon for validation runs.
    pub fn default_horizon(&self) -> f64 {
        match self {
            System::Fluid2d | System::Fluid3d => 5.0,
            _ => 20.0,
        }
    }

    /// Random initial condition for validation trajectories.
    pub fn random_initial_condition(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        match self {
            System::Lv3 | System::Ho1 => {
                Ok((0..self.dim()).map(|_| 0.5 + rng.gen::<f64>()).collect())
            }
            System::Fluid2d | System::Fluid3d => {
                let drawn = match self {
                    System::Fluid2d => fluid::sample2d(rng),
                    _ => fluid::sample3d(rng),
                };
                drawn.ok_or(SidError::SamplerDegenerate {
                    rejected: 1,
                    attempts: 1,
                })
            }
            System::Ozone11 | System::Ozone11Pssa => {
                Ok(chemistry::random_initial_condition(false, rng))
            }
            System::Ozone12 => Ok(chemistry::random_initial_condition(true, rng)),
        }
    }

    /// Catalog of known conserved quantities.
    pub fn known_cq_catalog(&self) -> Vec<KnownQuantity> {
        let named: Vec<(&'static str, Poly)> = match self {
            System::Lv3 => lv::catalog(),
            System::Ho1 => oscillator::catalog(),
            System::Fluid2d => fluid::catalog2d(),
            System::Fluid3d => fluid::quantities3d(),
            System::Ozone11 | System::Ozone11Pssa => chemistry::catalog(false),
            System::Ozone12 => chemistry::catalog(true),
        };
        named
            .into_iter()
            .map(|(name, poly)| KnownQuantity {
                name: name.to_string(),
                poly,
            })
            .collect()
    }
}
