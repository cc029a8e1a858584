//! Photochemical ozone box model: 11 species, 10 mass-action reactions, with
//! an optional pseudo-steady-state reduction for the fast radicals O and OH
//! and a 12th bookkeeping species (H2O) for the hydrogen-balance experiment.
//!
//! Rate constants are in ppm/min units.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SidError};
use crate::poly::Poly;
use crate::simulate;

/// Species order used everywhere in this module.
pub const SPECIES: [&str; 11] = [
    "O3", "NO", "NO2", "HCHO", "HO2", "HO2H", "OH", "O", "HNO3", "CO", "H2",
];

/// Bookkeeping species appended in the 12-species variant.
pub const WATER: &str = "H2O";

pub const N_REACTIONS: usize = 10;

/// Reaction rate constants k1..k10.
pub const RATE_CONSTANTS: [f64; N_REACTIONS] = [
    0.5, 22.179, 26.937, 0.015, 0.022, 13844.97, 12652.43, 15454.98, 0.0003, 2492.71,
];

pub const I_O3: usize = 0;
pub const I_NO: usize = 1;
pub const I_NO2: usize = 2;
pub const I_HCHO: usize = 3;
pub const I_HO2: usize = 4;
pub const I_HO2H: usize = 5;
pub const I_OH: usize = 6;
pub const I_O: usize = 7;
pub const I_HNO3: usize = 8;
pub const I_CO: usize = 9;
pub const I_H2: usize = 10;

/// Signed stoichiometric entries (species, reaction, multiplicity); negative
/// entries are consumed and drive the mass-action rate law.
const STOICHIOMETRY: [(usize, usize, f64); 30] = [
    (I_NO2, 0, -1.0),
    (I_NO, 0, 1.0),
    (I_O, 0, 1.0),
    (I_O, 1, -1.0),
    (I_O3, 1, 1.0),
    (I_O3, 2, -1.0),
    (I_NO, 2, -1.0),
    (I_NO2, 2, 1.0),
    (I_HCHO, 3, -1.0),
    (I_HO2, 3, 2.0),
    (I_CO, 3, 1.0),
    (I_HCHO, 4, -1.0),
    (I_CO, 4, 1.0),
    (I_H2, 4, 1.0),
    (I_HCHO, 5, -1.0),
    (I_OH, 5, -1.0),
    (I_HO2, 5, 1.0),
    (I_CO, 5, 1.0),
    (I_NO, 6, -1.0),
    (I_HO2, 6, -1.0),
    (I_NO2, 6, 1.0),
    (I_OH, 6, 1.0),
    (I_NO2, 7, -1.0),
    (I_OH, 7, -1.0),
    (I_HNO3, 7, 1.0),
    (I_HO2H, 8, -1.0),
    (I_OH, 8, 2.0),
    (I_HO2H, 9, -1.0),
    (I_OH, 9, -1.0),
    (I_HO2, 9, 1.0),
];

/// Reactions producing the bookkeeping H2O species (R6 and R10).
const WATER_PRODUCERS: [usize; 2] = [5, 9];

/// Dense 11 x 10 stoichiometric matrix.
pub fn stoichiometric_matrix() -> [[f64; N_REACTIONS]; 11] {
    let mut b = [[0.0; N_REACTIONS]; 11];
    for &(sp, rx, val) in &STOICHIOMETRY {
        b[sp][rx] = val;
    }
    b
}

/// Mass-action reaction rates: r_j = k_j * prod over consumed species of C^|B|.
pub fn mass_action_rates(c: &[f64]) -> [f64; N_REACTIONS] {
    let b = stoichiometric_matrix();
    let mut r = RATE_CONSTANTS;
    for (j, rate) in r.iter_mut().enumerate() {
        for (i, row) in b.iter().enumerate() {
            if row[j] < 0.0 {
                *rate *= c[i].powf(-row[j]);
            }
        }
    }
    r
}

/// Hand-written reaction rates, kept as an independent route for checking the
/// stoichiometric construction.
pub fn explicit_rates(c: &[f64]) -> [f64; N_REACTIONS] {
    let k = RATE_CONSTANTS;
    [
        k[0] * c[I_NO2],
        k[1] * c[I_O],
        k[2] * c[I_O3] * c[I_NO],
        k[3] * c[I_HCHO],
        k[4] * c[I_HCHO],
        k[5] * c[I_HCHO] * c[I_OH],
        k[6] * c[I_NO] * c[I_HO2],
        k[7] * c[I_NO2] * c[I_OH],
        k[8] * c[I_HO2H],
        k[9] * c[I_HO2H] * c[I_OH],
    ]
}

fn apply_stoichiometry(r: &[f64; N_REACTIONS]) -> Vec<f64> {
    let mut f = vec![0.0; 11];
    for &(sp, rx, val) in &STOICHIOMETRY {
        f[sp] += val * r[rx];
    }
    f
}

/// Full 11-species mass-action field B * r(C).
pub fn chemistry_field(c: &[f64]) -> Vec<f64> {
    apply_stoichiometry(&mass_action_rates(c))
}

/// Hand-written per-species balance, the second route of the field check.
pub fn explicit_field(c: &[f64]) -> Vec<f64> {
    let r = explicit_rates(c);
    vec![
        r[1] - r[2],
        r[0] - r[2] - r[6],
        -r[0] + r[2] + r[6] - r[7],
        -r[3] - r[4] - r[5],
        2.0 * r[3] + r[5] - r[6] + r[9],
        -r[8] - r[9],
        r[6] + 2.0 * r[8] - r[5] - r[7] - r[9],
        r[0] - r[1],
        r[7],
        r[3] + r[4] + r[5],
        r[4],
    ]
}

/// Algebraic pseudo-steady-state concentrations for O and OH.
pub fn pssa_concentrations(c: &[f64]) -> Result<(f64, f64)> {
    let k = RATE_CONSTANTS;
    let o = k[0] * c[I_NO2] / k[1];
    let den = k[5] * c[I_HCHO] + k[7] * c[I_NO2] + k[9] * c[I_HO2H];
    if den.abs() < 1e-300 {
        return Err(SidError::Numerical(
            "PSSA hydroxyl balance denominator vanished".into(),
        ));
    }
    let oh = (k[6] * c[I_NO] * c[I_HO2] + 2.0 * k[8] * c[I_HO2H]) / den;
    Ok((o, oh))
}

fn pssa_rates(c: &[f64]) -> Result<[f64; N_REACTIONS]> {
    let (o, oh) = pssa_concentrations(c)?;
    let mut cc = [0.0; 11];
    cc.copy_from_slice(&c[..11]);
    cc[I_O] = o;
    cc[I_OH] = oh;
    Ok(mass_action_rates(&cc))
}

/// PSSA-reduced field: mass action with algebraic O and OH, and the O and OH
/// derivative components pinned to zero.
pub fn chemistry_pssa_field(c: &[f64]) -> Result<Vec<f64>> {
    let r = pssa_rates(c)?;
    let mut f = apply_stoichiometry(&r);
    f[I_O] = 0.0;
    f[I_OH] = 0.0;
    Ok(f)
}

/// 12-species field: the 11-species field plus H2O production from R6 and R10.
pub fn chemistry_field_12(c: &[f64]) -> Vec<f64> {
    let r = mass_action_rates(&c[..11]);
    let mut f = apply_stoichiometry(&r);
    f.push(WATER_PRODUCERS.iter().map(|&j| r[j]).sum());
    f
}

/// 12-species PSSA field.
pub fn chemistry_pssa_field_12(c: &[f64]) -> Result<Vec<f64>> {
    let r = pssa_rates(&c[..11])?;
    let mut f = apply_stoichiometry(&r);
    f[I_O] = 0.0;
    f[I_OH] = 0.0;
    f.push(WATER_PRODUCERS.iter().map(|&j| r[j]).sum());
    Ok(f)
}

/// Uniform initial-condition ranges in ppm: ozone up to 100 ppb, formaldehyde
/// up to 50 ppb, every other species (including H2O) up to 10 ppb.
pub fn initial_ranges(twelve: bool) -> Vec<(f64, f64)> {
    let d = if twelve { 12 } else { 11 };
    let mut ranges = vec![(0.0, 0.01); d];
    ranges[I_O3] = (0.0, 0.1);
    ranges[I_HCHO] = (0.0, 0.05);
    ranges
}

pub fn random_initial_condition<R: Rng>(twelve: bool, rng: &mut R) -> Vec<f64> {
    initial_ranges(twelve)
        .iter()
        .map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
        .collect()
}

/// Points per sampled trajectory.
pub const TRAJECTORY_POINTS: usize = 40;

/// Horizon of sampled trajectories in minutes.
pub const TRAJECTORY_HORIZON: f64 = 20.0;

/// Sample phase-space points from PSSA trajectories: random initial
/// conditions integrated over the 20-minute horizon, emitting the trajectory
/// states (under the PSSA field the O and OH components stay at their initial
/// values).
pub(crate) fn sample_trajectory_states(
    twelve: bool,
    p: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let n_traj = p.div_ceil(TRAJECTORY_POINTS);
    let mut out = Vec::with_capacity(p);
    for _ in 0..n_traj {
        let c0 = random_initial_condition(twelve, rng);
        let field = |c: &[f64]| {
            if twelve {
                chemistry_pssa_field_12(c)
            } else {
                chemistry_pssa_field(c)
            }
        };
        let traj = simulate::integrate_field(
            &field,
            &c0,
            TRAJECTORY_HORIZON,
            &simulate::AdaptiveSettings::default(),
            TRAJECTORY_POINTS,
            true,
        )?;
        out.extend(traj.states);
        if out.len() >= p {
            break;
        }
    }
    out.truncate(p);
    Ok(out)
}

/// The exact H2 coefficient of the third conserved quantity at the table rate
/// constants: -(12 k4 / k5 - 6) = -24/11.
pub const CQ3_H2_COEFFICIENT: f64 = -24.0 / 11.0;

fn linear_poly(d: usize, coeffs: &[(usize, f64)]) -> Poly {
    coeffs
        .iter()
        .fold(Poly::zero(d), |acc, &(i, c)| acc.add(&Poly::var(d, i).scale(c)))
}

/// Known conserved quantities of the 11-species model: carbon and nitrogen
/// balances plus the rate-locked third quantity.
pub(crate) fn catalog(twelve: bool) -> Vec<(&'static str, Poly)> {
    let d = if twelve { 12 } else { 11 };
    let h_c = linear_poly(d, &[(I_HCHO, 1.0), (I_CO, 1.0)]);
    let h_n = linear_poly(d, &[(I_NO, 1.0), (I_NO2, 1.0), (I_HNO3, 1.0)]);
    let cq3 = linear_poly(
        d,
        &[
            (I_O3, 6.0),
            (I_NO, -5.0),
            (I_NO2, 1.0),
            (I_HCHO, 3.0),
            (I_HO2, 9.0),
            (I_HO2H, 6.0),
            (I_OH, 3.0),
            (I_O, 6.0),
            (I_HNO3, 4.0),
            (I_CO, -3.0),
            (I_H2, CQ3_H2_COEFFICIENT),
        ],
    );
    let mut out = vec![("H_C", h_c), ("H_N", h_n), ("CQ3", cq3)];
    if twelve {
        let h_h = linear_poly(
            12,
            &[
                (I_HCHO, 2.0),
                (I_HO2, 1.0),
                (I_HO2H, 2.0),
                (I_OH, 1.0),
                (I_HNO3, 1.0),
                (I_H2, 2.0),
                (11, 2.0),
            ],
        );
        out.push(("H_H", h_h));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn test_state() -> Vec<f64> {
        vec![
            0.05, 0.004, 0.007, 0.03, 0.002, 0.0008, 3e-6, 2e-6, 0.001, 0.006, 0.003,
        ]
    }

    #[test]
    fn stoichiometric_and_explicit_routes_agree() {
        let c = test_state();
        let via_matrix = chemistry_field(&c);
        let by_hand = explicit_field(&c);
        for (a, b) in via_matrix.iter().zip(by_hand.iter()) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
        let rm = mass_action_rates(&c);
        let re = explicit_rates(&c);
        for (a, b) in rm.iter().zip(re.iter()) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn pssa_zeroes_fast_species_balance() {
        let c = test_state();
        let (o, oh) = pssa_concentrations(&c).unwrap();
        let mut cc = c.clone();
        cc[I_O] = o;
        cc[I_OH] = oh;
        let f = chemistry_field(&cc);
        assert!(f[I_O].abs() < 1e-12, "O balance: {}", f[I_O]);
        assert!(f[I_OH].abs() < 1e-12, "OH balance: {}", f[I_OH]);
    }

    #[test]
    fn catalog_conserved_under_both_fields() {
        let c = test_state();
        let full = chemistry_field(&c);
        let pssa = chemistry_pssa_field(&c).unwrap();
        for (name, p) in catalog(false) {
            let theta: Vec<f64> = (0..11)
                .map(|i| {
                    let mut e = vec![0u32; 11];
                    e[i] = 1;
                    p.terms.get(&e).copied().unwrap_or(0.0)
                })
                .collect();
            let dot_full: f64 = theta.iter().zip(full.iter()).map(|(a, b)| a * b).sum();
            let dot_pssa: f64 = theta.iter().zip(pssa.iter()).map(|(a, b)| a * b).sum();
            assert!(dot_full.abs() < 1e-12, "{name} vs full field: {dot_full}");
            assert!(dot_pssa.abs() < 1e-12, "{name} vs pssa field: {dot_pssa}");
        }
    }

    #[test]
    fn hydrogen_balance_conserved_in_twelve_species_field() {
        let mut c = test_state();
        c.push(0.005);
        let f = chemistry_field_12(&c);
        let catalog = catalog(true);
        let (_, h_h) = catalog.iter().find(|(n, _)| *n == "H_H").unwrap();
        let h = 1e-9;
        let cp: Vec<f64> = c.iter().zip(f.iter()).map(|(&a, &b)| a + h * b).collect();
        let drift = (h_h.eval(&cp) - h_h.eval(&c)) / h;
        assert!(drift.abs() < 1e-7, "H_H drifts: {drift}");
    }

    #[test]
    fn trajectory_sampler_freezes_fast_species() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = sample_trajectory_states(false, 80, &mut rng).unwrap();
        assert_eq!(pts.len(), 80);
        let first = &pts[0];
        for state in &pts[1..TRAJECTORY_POINTS] {
            assert!((state[I_O] - first[I_O]).abs() < 1e-15);
            assert!((state[I_OH] - first[I_OH]).abs() < 1e-15);
        }
        assert!(pts.iter().all(|s| s.iter().all(|&v| v >= 0.0)));
    }
}
