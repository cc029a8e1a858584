//! Reporting: rational snapping of coefficient vectors, formula rendering,
//! null-space projection checks, and artifact export.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::basis::{term_label, BasisDescriptor, MonomialBasis};
use crate::detector::{self, Discovery};
use crate::error::{Result, SidError};
use crate::systems::System;

/// Snap tuning: denominator bound, per-entry tolerance on the ratio, and the
/// factor by which the conservation residual may grow before a snap reverts.
#[derive(Debug, Clone, Copy)]
pub struct SnapOptions {
    pub max_den: i64,
    pub entry_tol: f64,
    pub conservation_tol: f64,
}

impl Default for SnapOptions {
    fn default() -> Self {
        SnapOptions {
            max_den: 12,
            entry_tol: 0.02,
            conservation_tol: 10.0,
        }
    }
}

/// Outcome of rational snapping on one coefficient vector.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapResult {
    /// Input vector as given.
    pub original: Vec<f64>,
    /// Pivot-normalized vector with accepted entries replaced by rationals.
    pub snapped: Vec<f64>,
    /// Reduced (numerator, denominator) per accepted entry.
    pub rationals: Vec<Option<(i64, i64)>>,
    /// Whether each entry ended up rational.
    pub accepted: Vec<bool>,
    /// Distance of each normalized entry to its nearest admissible rational.
    pub per_entry_residual: Vec<f64>,
    pub pivot_index: usize,
    pub pivot_value: f64,
    /// Conservation residual of the normalized vector before snapping.
    pub conservation_before: f64,
    /// Conservation residual of the returned snapped vector.
    pub conservation_after: f64,
}

/// Entries this far below the largest magnitude are treated as exact zeros.
const ZERO_FLOOR_REL: f64 = 1e-9;

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// Best rational p/q with 1 <= q <= max_den, by exhaustive denominator scan.
/// Ties prefer the smaller denominator.
fn best_rational(r: f64, max_den: i64) -> (i64, i64) {
    let mut best = (r.round() as i64, 1i64);
    let mut best_err = (r - r.round()).abs();
    for q in 2..=max_den.max(1) {
        let p = (r * q as f64).round();
        if !p.is_finite() {
            continue;
        }
        let err = (r - p / q as f64).abs();
        if err < best_err {
            best = (p as i64, q);
            best_err = err;
        }
    }
    let g = gcd(best.0, best.1);
    (best.0 / g, best.1 / g)
}

/// Max-abs drift of the quantity theta . b along the field over the points.
pub fn conservation_residual(
    system: &System,
    basis: &MonomialBasis,
    points: &[Vec<f64>],
    theta: &[f64],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in points {
        let f = system.eval_field(x)?;
        let g = basis.grad_dot_field(x, &f);
        let dot: f64 = g.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        worst = worst.max(dot.abs());
    }
    Ok(worst)
}

/// Normalize by the smallest-magnitude nonzero entry and replace each ratio
/// by its best rational with denominator <= max_den when within entry_tol.
/// The fully snapped vector is then re-checked on the sample points with
/// leave-one-out blame: an entry reverts when the full residual exceeds
/// conservation_tol times the residual with only that entry restored, so a
/// single damaging snap is undone without discarding the clean ones.
pub fn snap_rational(
    theta: &[f64],
    opts: &SnapOptions,
    system: &System,
    basis: &MonomialBasis,
    points: &[Vec<f64>],
) -> Result<SnapResult> {
    let k = theta.len();
    if k != basis.len() {
        return Err(SidError::Config(format!(
            "coefficient vector has length {k} but the basis has {} terms",
            basis.len()
        )));
    }
    let max_abs = theta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max_abs == 0.0 {
        return Err(SidError::ZeroVector);
    }
    let floor = ZERO_FLOOR_REL * max_abs;
    let live: Vec<bool> = theta.iter().map(|v| v.abs() > floor).collect();

    let pivot_index = (0..k)
        .filter(|&i| live[i])
        .min_by(|&a, &b| theta[a].abs().partial_cmp(&theta[b].abs()).unwrap())
        .expect("at least one entry above the zero floor");
    let pivot_value = theta[pivot_index];

    let ratios: Vec<f64> = (0..k)
        .map(|i| if live[i] { theta[i] / pivot_value } else { 0.0 })
        .collect();

    let mut rationals: Vec<Option<(i64, i64)>> = vec![None; k];
    let mut accepted = vec![false; k];
    let mut per_entry_residual = vec![0.0f64; k];
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for i in 0..k {
        if !live[i] {
            rationals[i] = Some((0, 1));
            accepted[i] = true;
            continue;
        }
        let (p, q) = best_rational(ratios[i], opts.max_den);
        let value = p as f64 / q as f64;
        per_entry_residual[i] = (ratios[i] - value).abs();
        if per_entry_residual[i] < opts.entry_tol {
            rationals[i] = Some((p, q));
            accepted[i] = true;
            if value != ratios[i] {
                candidates.push((i, value));
            }
        }
    }

    // Conservation test on the fully snapped vector. Judging each snap in
    // isolation would misfire when the input deviates from the rational
    // direction by a mixture of other conserved directions: every partial
    // snap then looks damaging even though the complete snap is exact.
    // Instead, drift columns are accumulated so that restoring entry i is an
    // O(P) update, and entries revert one at a time while the full residual
    // exceeds conservation_tol times the best leave-one-out residual.
    let mut conservation_before = 0.0f64;
    if !points.is_empty() && !candidates.is_empty() {
        let snapped_all: Vec<f64> = (0..k)
            .map(|i| match rationals[i] {
                Some((p, q)) => p as f64 / q as f64,
                None => ratios[i],
            })
            .collect();
        let mut base = Vec::with_capacity(points.len());
        let mut columns: HashMap<usize, Vec<f64>> = HashMap::new();
        for (i, _) in &candidates {
            columns.insert(*i, Vec::with_capacity(points.len()));
        }
        for x in points {
            let f = system.eval_field(x)?;
            let g = basis.grad_dot_field(x, &f);
            let before: f64 = g.iter().zip(ratios.iter()).map(|(a, b)| a * b).sum();
            conservation_before = conservation_before.max(before.abs());
            let full: f64 = g.iter().zip(snapped_all.iter()).map(|(a, b)| a * b).sum();
            base.push(full);
            for (i, col) in columns.iter_mut() {
                col.push(g[*i]);
            }
        }
        let mut pending = candidates;
        loop {
            let res_full = base.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let mut blamed: Option<(usize, f64)> = None;
            for (pos, (i, value)) in pending.iter().enumerate() {
                let delta = value - ratios[*i];
                let col = &columns[i];
                let res_loo = base
                    .iter()
                    .zip(col.iter())
                    .fold(0.0f64, |acc, (b, c)| acc.max((b - delta * c).abs()));
                if res_full > opts.conservation_tol * res_loo {
                    match blamed {
                        Some((_, best)) if res_loo >= best => {}
                        _ => blamed = Some((pos, res_loo)),
                    }
                }
            }
            let Some((pos, _)) = blamed else { break };
            let (i, value) = pending.remove(pos);
            let delta = value - ratios[i];
            for (b, c) in base.iter_mut().zip(columns[&i].iter()) {
                *b -= delta * c;
            }
            rationals[i] = None;
            accepted[i] = false;
            if pending.is_empty() {
                break;
            }
        }
    } else if !points.is_empty() {
        conservation_before = conservation_residual(system, basis, points, &ratios)?;
    }

    let snapped: Vec<f64> = (0..k)
        .map(|i| match rationals[i] {
            Some((p, q)) => p as f64 / q as f64,
            None => ratios[i],
        })
        .collect();
    let conservation_after = if points.is_empty() {
        0.0
    } else {
        conservation_residual(system, basis, points, &snapped)?
    };

    Ok(SnapResult {
        original: theta.to_vec(),
        snapped,
        rationals,
        accepted,
        per_entry_residual,
        pivot_index,
        pivot_value,
        conservation_before,
        conservation_after,
    })
}

fn format_coefficient(value: f64, rational: Option<(i64, i64)>) -> (bool, String) {
    match rational {
        Some((p, q)) => {
            let negative = p < 0;
            let p = p.abs();
            let text = if q == 1 {
                format!("{p}")
            } else {
                format!("{p}/{q}")
            };
            (negative, text)
        }
        None => (value < 0.0, format!("{}", value.abs())),
    }
}

/// Render a coefficient vector as a formula such as "6*O3 - 5*NO + xyz".
/// Zero entries are omitted, terms follow basis order, unit coefficients are
/// dropped, and snapped entries print as reduced rationals.
pub fn format_formula(
    theta: &[f64],
    rationals: Option<&[Option<(i64, i64)>]>,
    basis: &MonomialBasis,
    names: &[String],
) -> String {
    let mut out = String::new();
    for i in 0..theta.len() {
        let rat = rationals.and_then(|r| r[i]);
        if theta[i] == 0.0 || rat == Some((0, 1)) {
            continue;
        }
        let (negative, coef) = format_coefficient(theta[i], rat);
        if out.is_empty() {
            if negative {
                out.push('-');
            }
        } else {
            out.push_str(if negative { " - " } else { " + " });
        }
        let label = basis.term_label(i, names);
        if coef == "1" {
            out.push_str(&label);
        } else {
            out.push_str(&coef);
            out.push('*');
            out.push_str(&label);
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

/// Parse a formula produced by `format_formula` back into coefficients.
pub fn parse_formula(text: &str, basis: &MonomialBasis, names: &[String]) -> Result<Vec<f64>> {
    let mut theta = vec![0.0f64; basis.len()];
    let text = text.trim();
    if text == "0" {
        return Ok(theta);
    }
    let index: HashMap<String, usize> = (0..basis.len())
        .map(|i| (basis.term_label(i, names), i))
        .collect();
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut sign = 1.0f64;
    let mut expect_term = true;
    for token in tokens {
        if !expect_term {
            sign = match token {
                "+" => 1.0,
                "-" => -1.0,
                other => {
                    return Err(SidError::Config(format!(
                        "expected + or - in formula, found {other:?}"
                    )))
                }
            };
            expect_term = true;
            continue;
        }
        let mut term = token;
        let mut local_sign = sign;
        if let Some(stripped) = term.strip_prefix('-') {
            local_sign = -local_sign;
            term = stripped;
        }
        let (coef, label) = match term.split_once('*') {
            Some((c, l)) => {
                let value = match c.split_once('/') {
                    Some((p, q)) => {
                        let p: i64 = p.parse().map_err(|_| {
                            SidError::Config(format!("bad rational numerator in {c:?}"))
                        })?;
                        let q: i64 = q.parse().map_err(|_| {
                            SidError::Config(format!("bad rational denominator in {c:?}"))
                        })?;
                        p as f64 / q as f64
                    }
                    None => c
                        .parse::<f64>()
                        .map_err(|_| SidError::Config(format!("bad coefficient {c:?}")))?,
                };
                (value, l)
            }
            None => (1.0, term),
        };
        let i = *index
            .get(label)
            .ok_or_else(|| SidError::Config(format!("unknown basis term {label:?}")))?;
        theta[i] = local_sign * coef;
        expect_term = false;
        sign = 1.0;
    }
    Ok(theta)
}

/// Relative L2 residual of a vector against the span of a column basis.
pub fn project_onto_nullspace(theta: &[f64], theta1: &Array2<f64>) -> f64 {
    detector::span_residual(theta1, theta)
}

/// Serializable record of one full discovery run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiscoveryReport {
    pub system: String,
    pub dim: usize,
    pub degree: u32,
    pub k: usize,
    pub p: usize,
    pub seed: u64,
    pub eps: f64,
    pub threshold_mode: String,
    pub m: usize,
    pub c: usize,
    pub residual_inf: f64,
    pub spectrum_g: Vec<f64>,
    pub spectrum_a: Vec<f64>,
    pub witness: Vec<f64>,
    pub entropies: Vec<f64>,
    pub selected: Vec<usize>,
    pub basis: BasisDescriptor,
    /// Stage matrices stored column-major: one inner vector per quantity.
    pub theta1: Vec<Vec<f64>>,
    pub theta2: Vec<Vec<f64>>,
    pub rotation: Vec<Vec<f64>>,
    pub theta3: Vec<Vec<f64>>,
    pub snapped: Vec<SnapResult>,
    pub formulas: Vec<String>,
    pub warnings: Vec<String>,
}

fn columns_of(matrix: &Array2<f64>) -> Vec<Vec<f64>> {
    (0..matrix.ncols()).map(|j| matrix.column(j).to_vec()).collect()
}

/// Build the serializable report from a discovery, snapping each stage-3
/// column on the discovery's own sample points.
pub fn build_report(discovery: &Discovery, snap: &SnapOptions) -> Result<DiscoveryReport> {
    let basis = MonomialBasis::new(discovery.system.dim(), discovery.degree)?;
    let names = discovery.system.var_names();
    let mut snapped = Vec::with_capacity(discovery.theta3.ncols());
    let mut formulas = Vec::with_capacity(discovery.theta3.ncols());
    for j in 0..discovery.theta3.ncols() {
        let column: Vec<f64> = discovery.theta3.column(j).to_vec();
        let result = snap_rational(&column, snap, &discovery.system, &basis, &discovery.samples)?;
        formulas.push(format_formula(
            &result.snapped,
            Some(&result.rationals),
            &basis,
            &names,
        ));
        snapped.push(result);
    }
    Ok(DiscoveryReport {
        system: discovery.system.name().to_string(),
        dim: discovery.system.dim(),
        degree: discovery.degree,
        k: discovery.k,
        p: discovery.p,
        seed: discovery.seed,
        eps: discovery.eps,
        threshold_mode: discovery.mode.label().to_string(),
        m: discovery.m,
        c: discovery.c,
        residual_inf: discovery.residual_inf,
        spectrum_g: discovery.spectrum_g.clone(),
        spectrum_a: discovery.spectrum_a.clone(),
        witness: discovery.witness.clone(),
        entropies: discovery.entropies.clone(),
        selected: discovery.selected.clone(),
        basis: basis.descriptor(&names),
        theta1: columns_of(&discovery.theta1),
        theta2: columns_of(&discovery.theta2),
        rotation: columns_of(&discovery.rotation),
        theta3: columns_of(&discovery.theta3),
        snapped,
        formulas,
        warnings: discovery.warnings.clone(),
    })
}

/// Export targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// report.json only.
    Json,
    /// Spectrum and stage-matrix CSV files only.
    Csv,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| SidError::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| SidError::io(path, e))?;
    Ok(())
}

fn write_spectrum_csv(path: &Path, spectrum: &[f64]) -> Result<()> {
    let mut text = String::from("index,sigma\n");
    for (i, s) in spectrum.iter().enumerate() {
        text.push_str(&format!("{i},{s}\n"));
    }
    write_text(path, &text)
}

fn write_theta_csv(path: &Path, report: &DiscoveryReport, columns: &[Vec<f64>]) -> Result<()> {
    let mut text = String::from("term");
    for j in 0..columns.len() {
        text.push_str(&format!(",c{}", j + 1));
    }
    text.push('\n');
    for (i, exps) in report.basis.terms.iter().enumerate() {
        text.push_str(&term_label(exps, &report.basis.variables));
        for col in columns {
            text.push_str(&format!(",{}", col[i]));
        }
        text.push('\n');
    }
    write_text(path, &text)
}

/// Write report artifacts into a directory: `report.json` for Json, the two
/// spectrum CSVs plus `theta_stage{1,2,3}.csv` for Csv.
pub fn export(report: &DiscoveryReport, dir: &Path, format: ExportFormat) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SidError::io(dir, e))?;
    match format {
        ExportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report)?;
            text.push('\n');
            write_text(&dir.join("report.json"), &text)?;
        }
        ExportFormat::Csv => {
            write_spectrum_csv(&dir.join("spectrum_g.csv"), &report.spectrum_g)?;
            write_spectrum_csv(&dir.join("spectrum_a.csv"), &report.spectrum_a)?;
            write_theta_csv(&dir.join("theta_stage1.csv"), report, &report.theta1)?;
            write_theta_csv(&dir.join("theta_stage2.csv"), report, &report.theta2)?;
            write_theta_csv(&dir.join("theta_stage3.csv"), report, &report.theta3)?;
        }
    }
    Ok(())
}

/// Write the snapped formulas, one per line, as `Q1 = ...`.
pub fn write_formulas(report: &DiscoveryReport, path: &Path) -> Result<()> {
    let mut text = String::new();
    for (j, formula) in report.formulas.iter().enumerate() {
        text.push_str(&format!("Q{} = {formula}\n", j + 1));
    }
    write_text(path, &text)
}

/// Read a report back from `report.json`.
pub fn read_report(path: &Path) -> Result<DiscoveryReport> {
    let text = std::fs::read_to_string(path).map_err(|e| SidError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reconstruct the stage-1 matrix of a report as an array, for projections.
pub fn theta1_matrix(report: &DiscoveryReport) -> Array2<f64> {
    let k = report.k;
    let m = report.theta1.len();
    let mut out = Array2::zeros((k, m));
    for (j, col) in report.theta1.iter().enumerate() {
        out.column_mut(j).assign(&Array1::from_vec(col.clone()));
    }
    out
}
