//! Trajectory integration and conservation validation: fixed-step RK4, an
//! embedded Dormand-Prince RK45, coefficient-of-variation statistics, and
//! Monte Carlo validation over random initial conditions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::MonomialBasis;
use crate::error::{Result, SidError};
use crate::systems::System;

/// Tolerances for the adaptive RK45 integrator.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveSettings {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        AdaptiveSettings {
            rtol: 1e-8,
            atol: 1e-12,
        }
    }
}

/// Integration method selector.
#[derive(Debug, Clone, Copy)]
pub enum Method {
    /// Classical fixed-step fourth-order Runge-Kutta.
    Rk4 { dt: f64 },
    /// Embedded Dormand-Prince 4(5) pair with step-size control.
    Rk45(AdaptiveSettings),
}

/// Integration control: method plus the number of output intervals.
#[derive(Debug, Clone, Copy)]
pub struct IntegrationControl {
    pub method: Method,
    /// Number of uniformly spaced output intervals over [0, t_end].
    pub n_out: usize,
}

impl Default for IntegrationControl {
    fn default() -> Self {
        IntegrationControl {
            method: Method::Rk45(AdaptiveSettings::default()),
            n_out: 200,
        }
    }
}

/// A simulated trajectory on a uniform output grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Output times, strictly increasing, starting at 0.
    pub t: Vec<f64>,
    /// One state per output time.
    pub states: Vec<Vec<f64>>,
    /// Name of the integrated system, "field" for raw vector fields.
    pub system: String,
    /// "rk4" or "rk45".
    pub method: String,
    /// Fixed step size when method is "rk4".
    pub fixed_step: Option<f64>,
    /// (rtol, atol) when method is "rk45".
    pub tolerances: Option<(f64, f64)>,
}

const MAX_STEPS: usize = 50_000_000;

/// Slope of the negative excursion tolerated before a step is rejected, as a
/// multiple of the absolute tolerance.
const NEGATIVE_CLIP_FACTOR: f64 = 100.0;

fn check_finite(y: &[f64], t: f64) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SidError::Numerical(format!(
            "non-finite state encountered at t = {t:.6e}"
        )));
    }
    Ok(())
}

/// Dormand-Prince 4(5) integration of a raw vector field to a uniform output
/// grid. Steps are capped so every output time is hit exactly; there is no
/// dense interpolation. With `clip_nonnegative` a step whose result dips
/// below -100*atol is rejected and retried with a smaller step, and smaller
/// excursions are clipped to zero.
pub fn integrate_field<F>(
    f: F,
    x0: &[f64],
    t_end: f64,
    settings: &AdaptiveSettings,
    n_out: usize,
    clip_nonnegative: bool,
) -> Result<Trajectory>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if t_end <= 0.0 {
        return Err(SidError::Config("t_end must be positive".into()));
    }
    if n_out == 0 {
        return Err(SidError::Config("n_out must be positive".into()));
    }
    let d = x0.len();
    let rtol = settings.rtol;
    let atol = settings.atol;

    // Dormand-Prince tableau.
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let mut t = 0.0f64;
    let mut y = x0.to_vec();
    check_finite(&y, t)?;
    let mut k1 = f(&y)?;
    let mut h = (t_end / n_out as f64).min(1e-2 * t_end).max(1e-10 * t_end);

    let mut out_t = Vec::with_capacity(n_out + 1);
    let mut out_y = Vec::with_capacity(n_out + 1);
    out_t.push(0.0);
    out_y.push(y.clone());

    let mut steps = 0usize;
    for k in 1..=n_out {
        let t_next = t_end * k as f64 / n_out as f64;
        while t < t_next {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(SidError::Numerical(format!(
                    "step limit exceeded at t = {t:.6e}"
                )));
            }
            if h < f64::EPSILON * t_next.max(1.0) {
                return Err(SidError::StepUnderflow { t });
            }
            let h_try = h.min(t_next - t);

            let mut stage = vec![0.0; d];
            for i in 0..d {
                stage[i] = y[i] + h_try * A21 * k1[i];
            }
            let k2 = f(&stage)?;
            for i in 0..d {
                stage[i] = y[i] + h_try * (A31 * k1[i] + A32 * k2[i]);
            }
            let k3 = f(&stage)?;
            for i in 0..d {
                stage[i] = y[i] + h_try * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            let k4 = f(&stage)?;
            for i in 0..d {
                stage[i] =
                    y[i] + h_try * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            let k5 = f(&stage)?;
            for i in 0..d {
                stage[i] = y[i]
                    + h_try
                        * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let k6 = f(&stage)?;
            let mut y_new = vec![0.0; d];
            for i in 0..d {
                y_new[i] = y[i]
                    + h_try * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            let k7 = f(&y_new)?;

            let mut err_sq = 0.0f64;
            for i in 0..d {
                let e = h_try
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                let scale = atol + rtol * y[i].abs().max(y_new[i].abs());
                let r = e / scale;
                err_sq += r * r;
            }
            let err = (err_sq / d as f64).sqrt();

            let too_negative = clip_nonnegative
                && y_new
                    .iter()
                    .any(|&v| v < -NEGATIVE_CLIP_FACTOR * atol);

            if err <= 1.0 && !too_negative {
                t += h_try;
                if clip_nonnegative {
                    for v in y_new.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                    k1 = f(&y_new)?;
                } else {
                    k1 = k7;
                }
                y = y_new;
                check_finite(&y, t)?;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h = h_try * factor;
            } else {
                let factor = if too_negative {
                    0.5
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
                };
                h = h_try * factor;
            }
        }
        out_t.push(t_next);
        out_y.push(y.clone());
        t = t_next;
    }

    Ok(Trajectory {
        t: out_t,
        states: out_y,
        system: "field".into(),
        method: "rk45".into(),
        fixed_step: None,
        tolerances: Some((rtol, atol)),
    })
}

/// Fixed-step RK4 integration of a raw vector field to a uniform output grid.
/// The step within each output interval is shrunk to divide it exactly.
pub fn rk4_field<F>(
    f: F,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    n_out: usize,
    clip_nonnegative: bool,
) -> Result<Trajectory>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if t_end <= 0.0 || dt <= 0.0 {
        return Err(SidError::Config("t_end and dt must be positive".into()));
    }
    if n_out == 0 {
        return Err(SidError::Config("n_out must be positive".into()));
    }
    let d = x0.len();
    let interval = t_end / n_out as f64;
    let per_interval = (interval / dt).ceil().max(1.0) as usize;
    let h = interval / per_interval as f64;

    let mut y = x0.to_vec();
    let mut out_t = Vec::with_capacity(n_out + 1);
    let mut out_y = Vec::with_capacity(n_out + 1);
    out_t.push(0.0);
    out_y.push(y.clone());

    for k in 1..=n_out {
        for s in 0..per_interval {
            let t_here = interval * (k - 1) as f64 + h * s as f64;
            let k1 = f(&y)?;
            let mut stage = vec![0.0; d];
            for i in 0..d {
                stage[i] = y[i] + 0.5 * h * k1[i];
            }
            let k2 = f(&stage)?;
            for i in 0..d {
                stage[i] = y[i] + 0.5 * h * k2[i];
            }
            let k3 = f(&stage)?;
            for i in 0..d {
                stage[i] = y[i] + h * k3[i];
            }
            let k4 = f(&stage)?;
            for i in 0..d {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if clip_nonnegative {
                for v in y.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            check_finite(&y, t_here + h)?;
        }
        out_t.push(interval * k as f64);
        out_y.push(y.clone());
    }

    Ok(Trajectory {
        t: out_t,
        states: out_y,
        system: "field".into(),
        method: "rk4".into(),
        fixed_step: Some(h),
        tolerances: None,
    })
}

/// Integrate a registered system. Chemistry systems use their stiffness-
/// reduced field and nonnegative clipping; all other systems integrate their
/// own field directly.
pub fn integrate(
    system: &System,
    x0: &[f64],
    t_end: f64,
    control: &IntegrationControl,
) -> Result<Trajectory> {
    if x0.len() != system.dim() {
        return Err(SidError::Config(format!(
            "initial state has dimension {} but {} has dimension {}",
            x0.len(),
            system.name(),
            system.dim()
        )));
    }
    let clip = system.nonnegative_states();
    let field = |x: &[f64]| system.eval_integration_field(x);
    let mut traj = match control.method {
        Method::Rk45(settings) => {
            integrate_field(field, x0, t_end, &settings, control.n_out, clip)?
        }
        Method::Rk4 { dt } => rk4_field(field, x0, t_end, dt, control.n_out, clip)?,
    };
    traj.system = system.name().to_string();
    Ok(traj)
}

/// Conservation statistics of one quantity along one trajectory.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InvariantStats {
    pub label: String,
    pub mean: f64,
    pub std_dev: f64,
    /// Coefficient of variation sigma/|mean|, or the absolute sigma when the
    /// mean is too small to normalize against.
    pub cv: f64,
    /// Set when |mean| fell below the zero-mean guard and `cv` holds the
    /// absolute sigma.
    pub absolute_sigma: bool,
    pub pass: bool,
}

/// Conservation statistics for a set of quantities along one trajectory.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConservationStats {
    pub invariants: Vec<InvariantStats>,
    pub cv_threshold: f64,
    /// Fraction of quantities passing the threshold.
    pub pass_fraction: f64,
}

/// Evaluate H_m(x_t) = theta_m . b(x_t) along a trajectory and report the
/// coefficient of variation per quantity. Quantities whose mean is smaller
/// than max(1e-12, 1e-8 * scale), with scale = |theta|_2 * max_t |b(x_t)|_2,
/// are reported as absolute sigma with a flag and pass when
/// sigma < threshold * scale.
pub fn conservation_stats(
    trajectory: &Trajectory,
    thetas: &[(String, Vec<f64>)],
    basis: &MonomialBasis,
    cv_threshold: f64,
) -> Result<ConservationStats> {
    let n = trajectory.states.len();
    if n == 0 {
        return Err(SidError::Config("trajectory has no states".into()));
    }
    let mut basis_values = Vec::with_capacity(n);
    let mut max_basis_norm = 0.0f64;
    for x in &trajectory.states {
        let b = basis.eval_basis(x);
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        max_basis_norm = max_basis_norm.max(norm);
        basis_values.push(b);
    }

    let mut invariants = Vec::with_capacity(thetas.len());
    for (label, theta) in thetas {
        if theta.len() != basis.len() {
            return Err(SidError::Config(format!(
                "coefficient vector for {label} has length {} but the basis has {} terms",
                theta.len(),
                basis.len()
            )));
        }
        let values: Vec<f64> = basis_values
            .iter()
            .map(|b| b.iter().zip(theta.iter()).map(|(bv, tv)| bv * tv).sum())
            .collect();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std_dev = var.sqrt();
        let theta_norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = theta_norm * max_basis_norm;
        let guard = (1e-8 * scale).max(1e-12);
        let (cv, absolute_sigma, pass) = if mean.abs() < guard {
            (std_dev, true, std_dev < cv_threshold * scale.max(1e-300))
        } else {
            let cv = std_dev / mean.abs();
            (cv, false, cv < cv_threshold)
        };
        invariants.push(InvariantStats {
            label: label.clone(),
            mean,
            std_dev,
            cv,
            absolute_sigma,
            pass,
        });
    }
    let passes = invariants.iter().filter(|s| s.pass).count();
    let pass_fraction = if invariants.is_empty() {
        1.0
    } else {
        passes as f64 / invariants.len() as f64
    };
    Ok(ConservationStats {
        invariants,
        cv_threshold,
        pass_fraction,
    })
}

/// Aggregate of one quantity over the Monte Carlo cases.
#[derive(Debug, Clone, serde::Serialize)]
pub struct McInvariantSummary {
    pub label: String,
    /// Largest reported CV (or absolute sigma where flagged) over all cases.
    pub max_cv: f64,
    pub pass_count: usize,
    /// Passing fraction over cases that integrated successfully.
    pub pass_fraction: f64,
}

/// Monte Carlo validation result.
#[derive(Debug, Clone, serde::Serialize)]
pub struct McValidation {
    pub n_cases: usize,
    pub valid_cases: usize,
    pub failed_cases: usize,
    pub cv_threshold: f64,
    pub horizon: f64,
    pub per_invariant: Vec<McInvariantSummary>,
    /// Reported CV per case and quantity; None for failed cases.
    pub per_case_cv: Vec<Option<Vec<f64>>>,
}

const MC_OUTPUT_POINTS: usize = 200;

/// Validate candidate invariants over random initial conditions. Each case
/// draws an initial state from the system's initialization ranges, integrates
/// with RK45 defaults, and reports per-quantity coefficients of variation.
/// Cases run in parallel; the RNG stream is derived from (seed, case) so
/// results do not depend on thread count. Integration failures are excluded
/// from the aggregate and counted.
pub fn monte_carlo_validate(
    system: &System,
    thetas: &[(String, Vec<f64>)],
    basis: &MonomialBasis,
    n_cases: usize,
    seed: u64,
    cv_threshold: f64,
    horizon: Option<f64>,
) -> Result<McValidation> {
    if n_cases == 0 {
        return Err(SidError::Config("n_cases must be positive".into()));
    }
    let t_end = horizon.unwrap_or_else(|| system.default_horizon());
    let control = IntegrationControl {
        method: Method::Rk45(AdaptiveSettings::default()),
        n_out: MC_OUTPUT_POINTS,
    };

    let case_results: Vec<Result<ConservationStats>> = (0..n_cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(case as u64 + 1);
            let x0 = system.random_initial_condition(&mut rng)?;
            let traj = integrate(system, &x0, t_end, &control)?;
            conservation_stats(&traj, thetas, basis, cv_threshold)
        })
        .collect();

    let mut per_case_cv: Vec<Option<Vec<f64>>> = Vec::with_capacity(n_cases);
    let mut failed = 0usize;
    let mut max_cv = vec![0.0f64; thetas.len()];
    let mut pass_count = vec![0usize; thetas.len()];
    for result in case_results {
        match result {
            Ok(stats) => {
                let cvs: Vec<f64> = stats.invariants.iter().map(|s| s.cv).collect();
                for (i, s) in stats.invariants.iter().enumerate() {
                    max_cv[i] = max_cv[i].max(s.cv);
                    if s.pass {
                        pass_count[i] += 1;
                    }
                }
                per_case_cv.push(Some(cvs));
            }
            Err(_) => {
                failed += 1;
                per_case_cv.push(None);
            }
        }
    }
    let valid = n_cases - failed;
    let per_invariant = thetas
        .iter()
        .enumerate()
        .map(|(i, (label, _))| McInvariantSummary {
            label: label.clone(),
            max_cv: max_cv[i],
            pass_count: pass_count[i],
            pass_fraction: if valid == 0 {
                0.0
            } else {
                pass_count[i] as f64 / valid as f64
            },
        })
        .collect();

    Ok(McValidation {
        n_cases,
        valid_cases: valid,
        failed_cases: failed,
        cv_threshold,
        horizon: t_end,
        per_invariant,
        per_case_cv,
    })
}

/// Maximum relative residuals of the algebraic relations among the fluid
/// catalog quantities over random Gaussian states.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FluidIdentityResiduals {
    /// 2D relation I*K + E*A - L*omega - D*G over random 12-dim states.
    pub two_d: f64,
    /// 3D circulation sum C1 + C2 + C3 + C4 over random 24-dim states.
    pub circulation_sum: f64,
    /// 3D relation u_cm*Lcm_x + v_cm*Lcm_y + w_cm*Lcm_z.
    pub lcm_orthogonality: f64,
}

/// Evaluate the known algebraic relations among the fluid quantities on
/// `n_states` unconstrained Gaussian states per dimension. The relations are
/// polynomial identities, so they hold off the constraint manifold too; the
/// residual is normalized by the sum of the term magnitudes.
pub fn fluid_identity_check(n_states: usize, seed: u64) -> FluidIdentityResiduals {
    use crate::systems::fluid;
    use rand_distr::StandardNormal;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_2d = 0.0f64;
    let mut worst_circ = 0.0f64;
    let mut worst_lcm = 0.0f64;

    for _ in 0..n_states {
        let x2: Vec<f64> = (0..fluid::DIM_2D)
            .map(|_| rand::Rng::sample(&mut rng, StandardNormal))
            .collect();
        let q = fluid::quantities2d();
        let value = |name: &str| -> f64 {
            q.iter()
                .find(|(label, _)| *label == name)
                .expect("known 2D quantity")
                .1
                .eval(&x2)
        };
        let (i_q, k_q) = (value("I"), value("K"));
        let (e_q, a_q) = (value("E"), value("A"));
        let (l_q, om_q) = (value("L"), value("omega"));
        let (d_q, g_q) = (value("D"), value("G"));
        let terms = [i_q * k_q, e_q * a_q, l_q * om_q, d_q * g_q];
        let resid = (terms[0] + terms[1] - terms[2] - terms[3]).abs();
        let denom: f64 = terms.iter().map(|v| v.abs()).sum::<f64>() + 1e-300;
        worst_2d = worst_2d.max(resid / denom);
    }

    for _ in 0..n_states {
        let x3: Vec<f64> = (0..fluid::DIM_3D)
            .map(|_| rand::Rng::sample(&mut rng, StandardNormal))
            .collect();
        let q = fluid::quantities3d();
        let value = |name: &str| -> f64 {
            q.iter()
                .find(|(label, _)| *label == name)
                .expect("known 3D quantity")
                .1
                .eval(&x3)
        };
        let c = [value("C1"), value("C2"), value("C3"), value("C4")];
        let c_resid = (c[0] + c[1] + c[2] + c[3]).abs();
        let c_denom: f64 = c.iter().map(|v| v.abs()).sum::<f64>() + 1e-300;
        worst_circ = worst_circ.max(c_resid / c_denom);

        let terms = [
            value("u_cm") * value("Lcm_x"),
            value("v_cm") * value("Lcm_y"),
            value("w_cm") * value("Lcm_z"),
        ];
        let l_resid = (terms[0] + terms[1] + terms[2]).abs();
        let l_denom: f64 = terms.iter().map(|v| v.abs()).sum::<f64>() + 1e-300;
        worst_lcm = worst_lcm.max(l_resid / l_denom);
    }

    FluidIdentityResiduals {
        two_d: worst_2d,
        circulation_sum: worst_circ,
        lcm_orthogonality: worst_lcm,
    }
}

/// Write a trajectory as CSV with columns t, x1..xd.
pub fn write_trajectory_csv(trajectory: &Trajectory, path: &std::path::Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let d = trajectory.states.first().map_or(0, |s| s.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    writer.write_record(&header)?;
    for (t, state) in trajectory.t.iter().zip(trajectory.states.iter()) {
        let mut record = vec![format!("{t:.12e}")];
        record.extend(state.iter().map(|v| format!("{v:.17e}")));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| SidError::io(path, e))?;
    Ok(())
}
