//! Detection pipeline: G-matrix assembly, null-space extraction, L1
//! sparsification over the orthogonal group, and functional-independence
//! counting and selection.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{JobSvd, SVDDC, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::basis::MonomialBasis;
use crate::error::{Result, SidError};
use crate::systems::System;

/// How singular values are classified as zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// sigma < eps.
    Absolute,
    /// sigma < eps * sigma_max.
    Relative,
    /// Split at the largest log-gap in the spectrum.
    LogGap,
}

impl ThresholdMode {
    pub fn parse(s: &str) -> Option<ThresholdMode> {
        match s {
            "abs" | "absolute" => Some(ThresholdMode::Absolute),
            "rel" | "relative" => Some(ThresholdMode::Relative),
            "gap" | "log_gap" => Some(ThresholdMode::LogGap),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ThresholdMode::Absolute => "abs",
            ThresholdMode::Relative => "rel",
            ThresholdMode::LogGap => "gap",
        }
    }
}

/// Tunable parameters of the pipeline.
#[derive(Debug, Clone)]
pub struct DetectorOptions {
    /// Null-space singular value threshold.
    pub eps: f64,
    pub mode: ThresholdMode,
    /// Random restarts of the sparsifier in addition to the identity start.
    pub restarts: usize,
    /// Restarts are skipped when the null space has more columns than this;
    /// they guard formula quality at small sizes, while for wide null spaces
    /// the count and span are rotation-invariant and the extra descents only
    /// multiply the runtime.
    pub restart_column_limit: usize,
    pub max_sweeps: usize,
    /// Relative L1 improvement below which a sweep pass stops.
    pub sweep_tol: f64,
    /// Fallback grid resolution when the breakpoint scan finds no improvement.
    pub fallback_grid: usize,
    /// Rank threshold for gradient matrices.
    pub rank_eps: f64,
    /// Number of sample points probed for the independence rank.
    pub probe_limit: usize,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        DetectorOptions {
            eps: 1e-8,
            mode: ThresholdMode::Absolute,
            restarts: 4,
            restart_column_limit: 64,
            max_sweeps: 100,
            sweep_tol: 1e-8,
            fallback_grid: 512,
            rank_eps: 1e-8,
            probe_limit: 64,
        }
    }
}

fn linalg_err(context: &str, e: ndarray_linalg::error::LinalgError) -> SidError {
    SidError::Numerical(format!("{context}: {e}"))
}

/// Assemble the P x K regression matrix G[p][i] = (nabla b_i(x_p)) . f(x_p).
pub fn build_g_matrix(
    system: &System,
    basis: &MonomialBasis,
    points: &[Vec<f64>],
) -> Result<Array2<f64>> {
    let k = basis.len();
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .enumerate()
        .map(|(index, x)| {
            let f = system.eval_field(x).map_err(|e| SidError::FieldEvaluation {
                index,
                reason: e.to_string(),
            })?;
            Ok(basis.grad_dot_field(x, &f))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut flat = Vec::with_capacity(points.len() * k);
    for row in rows {
        flat.extend(row);
    }
    Array2::from_shape_vec((points.len(), k), flat)
        .map_err(|e| SidError::Numerical(format!("G matrix shape: {e}")))
}

/// Null-space extraction result.
#[derive(Debug, Clone)]
pub struct Nullspace {
    /// Singular values of G, descending.
    pub spectrum: Vec<f64>,
    /// K x M orthonormal null basis.
    pub theta1: Array2<f64>,
    /// Max-abs entry of G * theta1.
    pub residual_inf: f64,
}

fn count_null(spectrum: &[f64], eps: f64, mode: ThresholdMode) -> usize {
    match mode {
        ThresholdMode::Absolute => spectrum.iter().filter(|&&s| s < eps).count(),
        ThresholdMode::Relative => {
            let smax = spectrum.first().copied().unwrap_or(0.0);
            spectrum.iter().filter(|&&s| s < eps * smax).count()
        }
        ThresholdMode::LogGap => {
            if spectrum.len() < 2 {
                return count_null(spectrum, eps, ThresholdMode::Absolute);
            }
            let mut best = 0usize;
            let mut best_gap = f64::NEG_INFINITY;
            for i in 0..spectrum.len() - 1 {
                let gap = if spectrum[i + 1] <= 0.0 {
                    if spectrum[i] <= 0.0 {
                        continue;
                    }
                    f64::INFINITY
                } else {
                    (spectrum[i] / spectrum[i + 1]).ln()
                };
                if gap > best_gap {
                    best_gap = gap;
                    best = i;
                }
            }
            spectrum.len() - (best + 1)
        }
    }
}

/// SVD of G and extraction of the M right singular vectors with small
/// singular values. When P < K the orthogonal complement of the row space is
/// included; those directions carry implicit zero singular values.
pub fn nullspace(g: &Array2<f64>, eps: f64, mode: ThresholdMode) -> Result<Nullspace> {
    let (p, k) = g.dim();
    let vt: Array2<f64>;
    let sigma: Array1<f64>;
    if p >= k {
        let (_, s, v) = g
            .svddc(JobSvd::Some)
            .map_err(|e| linalg_err("SVD of G", e))?;
        sigma = s;
        vt = v.ok_or_else(|| SidError::Numerical("SVD returned no right vectors".into()))?;
    } else {
        let (_, s, v) = g
            .svd(false, true)
            .map_err(|e| linalg_err("SVD of G", e))?;
        sigma = s;
        vt = v.ok_or_else(|| SidError::Numerical("SVD returned no right vectors".into()))?;
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(SidError::Numerical("non-finite singular values".into()));
    }
    let spectrum: Vec<f64> = sigma.to_vec();
    let extra = k.saturating_sub(p);
    let m = count_null(&spectrum, eps, mode) + extra;
    let theta1 = vt.slice(s![k - m.., ..]).t().to_owned();
    let residual_inf = g
        .dot(&theta1)
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(Nullspace {
        spectrum,
        theta1,
        residual_inf,
    })
}

/// Entropy complexity score S = -sum p_i ln p_i with p_i = |theta_i| / sum |theta_j|.
pub fn entropy_score(theta: &[f64]) -> Result<f64> {
    let total: f64 = theta.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return Err(SidError::ZeroVector);
    }
    let mut s = 0.0;
    for v in theta {
        let p = v.abs() / total;
        if p > 0.0 {
            s -= p * p.ln();
        }
    }
    Ok(s)
}

/// L1 objective over all matrix entries.
fn l1_norm(w: &Array2<f64>) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

const PAIR_ACCEPT_MARGIN: f64 = 1e-14;

/// Entries below this fraction of the pair's largest magnitude are left out
/// of the breakpoint scan. Winning angles are re-scored exactly afterwards,
/// so the floor only influences which angle gets proposed.
const ENTRY_FLOOR_REL: f64 = 1e-14;

/// Pair objective for the rotation (cos, sin): sum_k |a c + b s| + |b c - a s|.
fn pair_objective_cs(a: &[f64], b: &[f64], cos: f64, sin: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&ak, &bk)| (ak * cos + bk * sin).abs() + (bk * cos - ak * sin).abs())
        .sum()
}

/// Pair objective at angle phi.
fn pair_objective(a: &[f64], b: &[f64], phi: f64) -> f64 {
    let (sin, cos) = phi.sin_cos();
    pair_objective_cs(a, b, cos, sin)
}

/// Best rotation among the pair's breakpoint angles, as (cos, sin).
///
/// Between breakpoints beta_k = atan2(b_k, a_k) mod pi/2 the objective is a
/// single sinusoid P cos phi + Q sin phi; entry k contributes with phase
/// beta_k - pi/4 before its breakpoint and beta_k + pi/4 after. The objective
/// is positive, so each piece is monotone and the minimum over [0, pi/2)
/// falls on a breakpoint; a sorted sweep therefore scores every candidate in
/// constant time.
///
/// Entries fold into the first quadrant by quarter turns, after which no
/// trigonometry is needed: the sinusoid coefficients accumulate as x + y and
/// y - x, candidates are ranked by cross-multiplied squares, and the sort key
/// packs the top bits of tan(beta) with the entry index. Near-ties may order
/// either way, which only perturbs estimates between almost-identical angles;
/// the caller re-scores the winning angle exactly before accepting it.
fn best_breakpoint_angle(
    a: &[f64],
    b: &[f64],
    floor: f64,
    order: &mut Vec<u64>,
    dirs: &mut Vec<(f64, f64)>,
) -> Option<(f64, f64)> {
    order.clear();
    dirs.clear();
    let mut p = 0.0f64;
    let mut q = 0.0f64;
    for (&ak, &bk) in a.iter().zip(b.iter()) {
        if ak.abs() <= floor && bk.abs() <= floor {
            continue;
        }
        let (x, y) = if ak > 0.0 && bk >= 0.0 {
            (ak, bk)
        } else if bk > 0.0 {
            (bk, -ak)
        } else if ak < 0.0 {
            (-ak, -bk)
        } else if bk < 0.0 {
            (-bk, ak)
        } else {
            continue;
        };
        // sqrt(2) r cos(phi - (beta - pi/4)) expands to (x + y) cos + (y - x) sin.
        p += x + y;
        q += y - x;
        let idx = dirs.len() as u64;
        dirs.push((x, y));
        order.push(((y / x).to_bits() & !0xFF_FFFF) | idx);
    }
    if order.is_empty() {
        return None;
    }
    order.sort_unstable();

    // Track the minimum of val = (P x + Q y) / r without roots: for positive
    // values, val_a < val_b iff num_a^2 r2_b < num_b^2 r2_a.
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for &packed in order.iter() {
        let (x, y) = dirs[(packed & 0xFF_FFFF) as usize];
        // Crossing the breakpoint advances the entry's phase from beta - pi/4
        // to beta + pi/4, shifting (P, Q) by (-2 r sin beta, 2 r cos beta).
        p -= 2.0 * y;
        q += 2.0 * x;
        let num = p * x + q * y;
        let num2 = num * num;
        let r2 = x * x + y * y;
        let better = match best {
            None => true,
            Some((_, _, bn2, br2)) => num2 * br2 < bn2 * r2,
        };
        if better {
            best = Some((x, y, num2, r2));
        }
    }
    let (x, y, _, r2) = best?;
    let r = r2.sqrt();
    Some((x / r, y / r))
}

/// Apply the Givens rotation (cos, sin) to a pair of rows stored as slices.
fn rotate_rows_cs(a: &mut [f64], b: &mut [f64], cos: f64, sin: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let u = *x;
        let v = *y;
        *x = cos * u + sin * v;
        *y = -sin * u + cos * v;
    }
}

/// Sparsification result: rotated columns, the rotation, and column entropies.
#[derive(Debug, Clone)]
pub struct Sparsified {
    /// K x M rotated coefficient matrix, sign-normalized, entropy-ascending.
    pub theta2: Array2<f64>,
    /// M x M orthogonal rotation with theta2 = theta1 * rotation.
    pub rotation: Array2<f64>,
    /// Entropy score per column, ascending.
    pub entropies: Vec<f64>,
}

/// Minimize the total L1 norm over orthogonal rotations of the column span by
/// pairwise Givens coordinate descent with seeded random restarts.
pub fn sparsify(theta1: &Array2<f64>, opts: &DetectorOptions, seed: u64) -> Result<Sparsified> {
    let (_k, m) = theta1.dim();
    if m <= 1 {
        let mut w = theta1.to_owned();
        let mut rot = Array2::eye(m);
        sign_normalize(&mut w, &mut rot);
        let entropies = column_entropies(&w)?;
        return Ok(Sparsified {
            theta2: w,
            rotation: rot,
            entropies,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let restarts = if m > opts.restart_column_limit {
        0
    } else {
        opts.restarts
    };
    let mut best: Option<(f64, Array2<f64>, Array2<f64>)> = None;
    for trial in 0..=restarts {
        // The descent works on the transpose so each logical column is a
        // contiguous row: the scan and the rotation both stream over slices.
        // as_standard_layout keeps the slices below contiguous regardless of
        // how the inputs happen to be laid out.
        let (mut wt, mut rott) = if trial == 0 {
            (
                theta1.t().as_standard_layout().into_owned(),
                Array2::eye(m),
            )
        } else {
            let gauss = Array2::from_shape_fn((m, m), |_| rng.sample(StandardNormal));
            let (q, _r) = ndarray_linalg::QR::qr(&gauss)
                .map_err(|e| linalg_err("QR of restart matrix", e))?;
            (
                theta1.dot(&q).t().as_standard_layout().into_owned(),
                q.t().as_standard_layout().into_owned(),
            )
        };
        let mut cur = l1_norm(&wt);
        // The pair objective depends only on its two columns, so a pair whose
        // columns are unchanged since its last fruitless visit can be skipped
        // exactly. Versions count rotations applied to each column.
        let mut col_version = vec![0u64; m];
        let mut pair_seen: Vec<(u64, u64)> = vec![(u64::MAX, u64::MAX); m * m];
        let mut order: Vec<u64> = Vec::with_capacity(theta1.nrows());
        let mut dirs: Vec<(f64, f64)> = Vec::with_capacity(theta1.nrows());
        for _sweep in 0..opts.max_sweeps {
            let start = cur;
            for i in 0..m - 1 {
                for j in i + 1..m {
                    if pair_seen[i * m + j] == (col_version[i], col_version[j]) {
                        continue;
                    }
                    let (mut ra, mut rb) = wt.multi_slice_mut((s![i, ..], s![j, ..]));
                    let a = ra.as_slice_mut().expect("transposed rows are contiguous");
                    let b = rb.as_slice_mut().expect("transposed rows are contiguous");
                    let mut pair_before = 0.0f64;
                    let mut max_abs = 0.0f64;
                    for (&ak, &bk) in a.iter().zip(b.iter()) {
                        pair_before += ak.abs() + bk.abs();
                        max_abs = max_abs.max(ak.abs()).max(bk.abs());
                    }
                    let floor = ENTRY_FLOOR_REL * max_abs;
                    let mut chosen: Option<(f64, f64, f64)> = None;
                    match best_breakpoint_angle(a, b, floor, &mut order, &mut dirs) {
                        Some((cos, sin)) => {
                            let exact = pair_objective_cs(a, b, cos, sin);
                            if exact < pair_before - PAIR_ACCEPT_MARGIN {
                                chosen = Some((cos, sin, exact));
                            }
                        }
                        // Breakpoints exist whenever any entry is live, so
                        // the grid only handles fully degenerate pairs.
                        None if opts.fallback_grid > 0 => {
                            let mut grid_best = (1.0, 0.0, pair_before);
                            for t in 1..opts.fallback_grid {
                                let phi = std::f64::consts::FRAC_PI_2 * t as f64
                                    / opts.fallback_grid as f64;
                                let val = pair_objective(a, b, phi);
                                if val < grid_best.2 {
                                    let (sin, cos) = phi.sin_cos();
                                    grid_best = (cos, sin, val);
                                }
                            }
                            if grid_best.2 < pair_before - PAIR_ACCEPT_MARGIN {
                                chosen = Some(grid_best);
                            }
                        }
                        None => {}
                    }
                    if let Some((cos, sin, val)) = chosen {
                        rotate_rows_cs(a, b, cos, sin);
                        let (mut ri, mut rj) = rott.multi_slice_mut((s![i, ..], s![j, ..]));
                        rotate_rows_cs(
                            ri.as_slice_mut().expect("rotation rows are contiguous"),
                            rj.as_slice_mut().expect("rotation rows are contiguous"),
                            cos,
                            sin,
                        );
                        cur = cur - pair_before + val;
                        col_version[i] += 1;
                        col_version[j] += 1;
                    } else {
                        pair_seen[i * m + j] = (col_version[i], col_version[j]);
                    }
                }
            }
            if start - cur < opts.sweep_tol * start.max(1e-300) {
                break;
            }
        }
        let cur = l1_norm(&wt);
        if best.as_ref().map_or(true, |(b, _, _)| cur < *b) {
            best = Some((cur, wt, rott));
        }
    }

    let (_, wt, rott) = best.expect("at least the identity trial ran");
    let mut w = wt.t().to_owned();
    let mut rot = rott.t().to_owned();
    sign_normalize(&mut w, &mut rot);
    let mut entropies = column_entropies(&w)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| {
        entropies[x]
            .partial_cmp(&entropies[y])
            .unwrap()
            .then(x.cmp(&y))
    });
    let w_sorted = reorder_columns(&w, &order);
    let rot_sorted = reorder_columns(&rot, &order);
    entropies = order.iter().map(|&i| entropies[i]).collect();
    Ok(Sparsified {
        theta2: w_sorted,
        rotation: rot_sorted,
        entropies,
    })
}

fn reorder_columns(w: &Array2<f64>, order: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros(w.dim());
    for (new, &old) in order.iter().enumerate() {
        out.column_mut(new).assign(&w.column(old));
    }
    out
}

/// Flip column signs so the largest-magnitude entry of each column is positive.
fn sign_normalize(w: &mut Array2<f64>, rot: &mut Array2<f64>) {
    for m in 0..w.ncols() {
        let col = w.column(m);
        let mut arg = 0usize;
        let mut best = -1.0f64;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                arg = i;
            }
        }
        if w[[arg, m]] < 0.0 {
            w.column_mut(m).mapv_inplace(|v| -v);
            if rot.ncols() == w.ncols() {
                rot.column_mut(m).mapv_inplace(|v| -v);
            }
        }
    }
}

fn column_entropies(w: &Array2<f64>) -> Result<Vec<f64>> {
    (0..w.ncols())
        .map(|m| entropy_score(&w.column(m).to_vec()))
        .collect()
}

/// Singular values of a dense matrix, descending.
fn singular_values(a: &Array2<f64>) -> Result<Vec<f64>> {
    let (_, s, _) = a
        .svddc(JobSvd::None)
        .map_err(|e| linalg_err("SVD of gradient matrix", e))?;
    Ok(s.to_vec())
}

/// Gradient matrix with columns nabla H_m(x), shape d x M.
pub fn gradient_matrix_at(basis: &MonomialBasis, theta: &Array2<f64>, x: &[f64]) -> Array2<f64> {
    let grad = basis.eval_basis_gradient(x);
    grad.t().dot(theta)
}

/// Functional-independence count via the maximal pointwise gradient rank.
#[derive(Debug, Clone)]
pub struct IndependenceCount {
    pub c: usize,
    /// Index into the probed points of the rank-attaining witness.
    pub witness_index: usize,
    /// Singular values of the gradient matrix at the witness, descending.
    pub spectrum: Vec<f64>,
}

/// Count functionally independent columns: the maximum over probe points of
/// the rank of the pointwise d x M gradient matrix. Gradients of functionally
/// dependent quantities are pointwise linearly dependent, so the maximum over
/// points never exceeds the true count and attains it at generic points.
pub fn count_independent(
    basis: &MonomialBasis,
    theta: &Array2<f64>,
    points: &[Vec<f64>],
    opts: &DetectorOptions,
) -> Result<IndependenceCount> {
    if theta.ncols() == 0 || points.is_empty() {
        return Ok(IndependenceCount {
            c: 0,
            witness_index: 0,
            spectrum: Vec::new(),
        });
    }
    let mut best = IndependenceCount {
        c: 0,
        witness_index: 0,
        spectrum: Vec::new(),
    };
    for (idx, x) in points.iter().take(opts.probe_limit).enumerate() {
        let a = gradient_matrix_at(basis, theta, x);
        let sv = singular_values(&a)?;
        let rank = sv.iter().filter(|&&s| s > opts.rank_eps).count();
        if rank > best.c {
            best = IndependenceCount {
                c: rank,
                witness_index: idx,
                spectrum: sv,
            };
        }
    }
    Ok(best)
}

/// Greedy selection of c functionally independent columns, in entropy order,
/// admitting a column iff it raises the gradient rank at the witness point.
pub fn select_independent(
    basis: &MonomialBasis,
    theta2: &Array2<f64>,
    c: usize,
    witness: &[f64],
    opts: &DetectorOptions,
) -> Result<Vec<usize>> {
    let full = gradient_matrix_at(basis, theta2, witness);
    let d = full.nrows();
    let m = full.ncols();
    let mut selected: Vec<usize> = Vec::with_capacity(c);
    let mut accum = Array2::<f64>::zeros((d, 0));
    for cand in 0..m {
        if selected.len() == c {
            break;
        }
        let mut trial = Array2::<f64>::zeros((d, selected.len() + 1));
        trial.slice_mut(s![.., ..selected.len()]).assign(&accum);
        trial
            .column_mut(selected.len())
            .assign(&full.column(cand));
        let sv = singular_values(&trial)?;
        let rank = sv.iter().filter(|&&s| s > opts.rank_eps).count();
        if rank == selected.len() + 1 {
            selected.push(cand);
            accum = trial;
        }
    }
    if selected.len() != c {
        return Err(SidError::Numerical(format!(
            "selected only {} of {} independent columns; rank threshold miscalibrated",
            selected.len(),
            c
        )));
    }
    Ok(selected)
}

/// Full pipeline output.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub system: System,
    pub degree: u32,
    pub k: usize,
    pub p: usize,
    pub seed: u64,
    pub eps: f64,
    pub mode: ThresholdMode,
    /// Singular values of G, descending.
    pub spectrum_g: Vec<f64>,
    pub m: usize,
    pub residual_inf: f64,
    pub theta1: Array2<f64>,
    pub theta2: Array2<f64>,
    pub rotation: Array2<f64>,
    pub entropies: Vec<f64>,
    pub c: usize,
    /// Rank-attaining sample point.
    pub witness: Vec<f64>,
    /// Singular values of the gradient matrix at the witness, descending.
    pub spectrum_a: Vec<f64>,
    /// Stage-2 column indices retained in stage 3.
    pub selected: Vec<usize>,
    pub theta3: Array2<f64>,
    pub warnings: Vec<String>,
    /// Sample points used for the regression.
    pub samples: Vec<Vec<f64>>,
}

/// Run the full pipeline: sample, assemble G, extract and sparsify the null
/// space, count independent invariants, and select stage 3.
pub fn discover(
    system: &System,
    degree: u32,
    sample_count: Option<usize>,
    seed: u64,
    opts: &DetectorOptions,
) -> Result<Discovery> {
    let basis = MonomialBasis::new(system.dim(), degree)?;
    let k = basis.len();
    let p = sample_count.unwrap_or_else(|| system.default_sample_count(k));
    if p == 0 {
        return Err(SidError::Config("sample count must be positive".into()));
    }
    let samples = system.sample_states(p, seed)?;
    let mut warnings = Vec::new();
    if p < k {
        warnings.push(format!(
            "P = {p} < K = {k}: the null space is inflated by {} unconstrained directions",
            k - p
        ));
    }
    let g = build_g_matrix(system, &basis, &samples)?;
    let ns = nullspace(&g, opts.eps, opts.mode)?;
    let m = ns.theta1.ncols();

    if m == 0 {
        return Ok(Discovery {
            system: *system,
            degree,
            k,
            p,
            seed,
            eps: opts.eps,
            mode: opts.mode,
            spectrum_g: ns.spectrum,
            m: 0,
            residual_inf: ns.residual_inf,
            theta1: ns.theta1.clone(),
            theta2: ns.theta1.clone(),
            rotation: Array2::eye(0),
            entropies: Vec::new(),
            c: 0,
            witness: samples[0].clone(),
            spectrum_a: Vec::new(),
            selected: Vec::new(),
            theta3: Array2::zeros((k, 0)),
            warnings,
            samples,
        });
    }

    let sp = sparsify(&ns.theta1, opts, seed)?;
    let count = count_independent(&basis, &sp.theta2, &samples, opts)?;
    let witness = samples[count.witness_index].clone();
    let selected = select_independent(&basis, &sp.theta2, count.c, &witness, opts)?;
    let mut theta3 = Array2::zeros((k, selected.len()));
    for (new, &old) in selected.iter().enumerate() {
        theta3.column_mut(new).assign(&sp.theta2.column(old));
    }

    Ok(Discovery {
        system: *system,
        degree,
        k,
        p,
        seed,
        eps: opts.eps,
        mode: opts.mode,
        spectrum_g: ns.spectrum,
        m,
        residual_inf: ns.residual_inf,
        theta1: ns.theta1,
        theta2: sp.theta2,
        rotation: sp.rotation,
        entropies: sp.entropies,
        c: count.c,
        witness,
        spectrum_a: count.spectrum,
        selected,
        theta3,
        warnings,
        samples,
    })
}

impl Discovery {
    /// Column of a stage matrix as a plain vector.
    pub fn column(matrix: &Array2<f64>, j: usize) -> Vec<f64> {
        matrix.column(j).to_vec()
    }

    /// Orthonormality defect of a stage matrix, max-abs of Theta^T Theta - I.
    pub fn orthonormality_defect(matrix: &Array2<f64>) -> f64 {
        let m = matrix.ncols();
        let gram = matrix.t().dot(matrix);
        let mut defect = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((gram[[i, j]] - target).abs());
            }
        }
        defect
    }
}

/// Projection residual ||v - Theta Theta^T v||_2 / ||v||_2 of a vector onto a
/// column span (used for null-space completeness checks).
pub fn span_residual(theta: &Array2<f64>, v: &[f64]) -> f64 {
    let v = Array1::from_vec(v.to_vec());
    let norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    let coeffs = theta.t().dot(&v);
    let recon = theta.dot(&coeffs);
    let diff = &v - &recon;
    diff.dot(&diff).sqrt() / norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lv_basis() -> MonomialBasis {
        MonomialBasis::new(3, 3).unwrap()
    }

    #[test]
    fn g_matrix_columns_match_field_components() {
        let system = System::Lv3;
        let basis = lv_basis();
        let pts = vec![vec![1.0, 2.0, 3.0]];
        let g = build_g_matrix(&system, &basis, &pts).unwrap();
        let x_col = basis.index_of(&[1, 0, 0]).unwrap();
        assert_abs_diff_eq!(g[[0, x_col]], -1.0, epsilon = 1e-14);
        let xyz_col = basis.index_of(&[1, 1, 1]).unwrap();
        assert_abs_diff_eq!(g[[0, xyz_col]], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn g_matrix_sum_of_linear_columns_vanishes_for_lv() {
        let system = System::Lv3;
        let basis = lv_basis();
        let pts = system.sample_states(20, 1).unwrap();
        let g = build_g_matrix(&system, &basis, &pts).unwrap();
        let cols: Vec<usize> = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
            .iter()
            .map(|e| basis.index_of(e).unwrap())
            .collect();
        for r in 0..20 {
            let s: f64 = cols.iter().map(|&c| g[[r, c]]).sum();
            assert!(s.abs() < 1e-12, "row {r}: {s}");
        }
    }

    #[test]
    fn nullspace_handles_underdetermined_g() {
        let g = Array2::from_shape_vec((1, 3), vec![1.0, 0.0, 0.0]).unwrap();
        let ns = nullspace(&g, 1e-8, ThresholdMode::Absolute).unwrap();
        assert_eq!(ns.theta1.ncols(), 2);
        assert!(ns.residual_inf < 1e-12);
    }

    #[test]
    fn log_gap_mode_splits_at_largest_gap() {
        let sp = vec![10.0, 1.0, 1e-12, 1e-14];
        assert_eq!(count_null(&sp, 1e-8, ThresholdMode::LogGap), 2);
        assert_eq!(count_null(&sp, 1e-8, ThresholdMode::Absolute), 2);
        assert_eq!(count_null(&sp, 1e-10, ThresholdMode::Relative), 2);
    }

    #[test]
    fn entropy_scores_match_closed_forms() {
        assert_abs_diff_eq!(
            entropy_score(&[0.0, 2.0, 0.0]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            entropy_score(&[1.0, -1.0, 1.0, 1.0]).unwrap(),
            (4.0f64).ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            entropy_score(&[0.5, 0.5, 0.0]).unwrap(),
            (2.0f64).ln(),
            epsilon = 1e-12
        );
        assert!(matches!(
            entropy_score(&[0.0, 0.0]),
            Err(SidError::ZeroVector)
        ));
    }

    #[test]
    fn sparsify_recovers_identity_from_rotated_pair() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let theta1 = Array2::from_shape_vec((2, 2), vec![r, r, r, -r]).unwrap();
        let opts = DetectorOptions::default();
        let sp = sparsify(&theta1, &opts, 0).unwrap();
        let l1 = l1_norm(&sp.theta2);
        assert_abs_diff_eq!(l1, 2.0, epsilon = 1e-10);
        for col in 0..2 {
            let v = sp.theta2.column(col);
            let mx = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            assert_abs_diff_eq!(mx, 1.0, epsilon = 1e-10);
        }
        assert!(Discovery::orthonormality_defect(&sp.rotation) < 1e-10);
    }

    #[test]
    fn sparsify_keeps_one_hot_columns() {
        let mut theta1 = Array2::zeros((4, 2));
        theta1[[1, 0]] = -1.0;
        theta1[[3, 1]] = 1.0;
        let sp = sparsify(&theta1, &DetectorOptions::default(), 1).unwrap();
        let l1 = l1_norm(&sp.theta2);
        assert_abs_diff_eq!(l1, 2.0, epsilon = 1e-12);
        for col in 0..2 {
            let v: Vec<f64> = sp.theta2.column(col).to_vec();
            let nonzero = v.iter().filter(|&&x| x.abs() > 1e-10).count();
            assert_eq!(nonzero, 1);
            assert!(v.iter().cloned().fold(f64::MIN, f64::max) > 0.0);
        }
    }

    #[test]
    fn breakpoint_scan_matches_dense_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut order = Vec::new();
        let mut dirs = Vec::new();
        for _ in 0..20 {
            let a: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let (cos, sin) = best_breakpoint_angle(&a, &b, 0.0, &mut order, &mut dirs).unwrap();
            assert!((cos * cos + sin * sin - 1.0).abs() < 1e-12);
            let scan_val = pair_objective_cs(&a, &b, cos, sin);
            let mut dense_best = f64::INFINITY;
            for t in 0..20000 {
                let phi = std::f64::consts::FRAC_PI_2 * t as f64 / 20000.0;
                dense_best = dense_best.min(pair_objective(&a, &b, phi));
            }
            assert!(
                scan_val <= dense_best + 1e-9,
                "scan {scan_val} vs dense {dense_best}"
            );
        }
    }

    #[test]
    fn duplicate_column_is_never_selected_twice() {
        let basis = MonomialBasis::new(3, 1).unwrap();
        let mut theta = Array2::zeros((3, 3));
        theta[[0, 0]] = 1.0;
        theta[[0, 1]] = 1.0;
        theta[[1, 2]] = 1.0;
        let opts = DetectorOptions::default();
        let witness = vec![0.3, 0.7, -0.2];
        let count = count_independent(&basis, &theta, &[witness.clone()], &opts).unwrap();
        assert_eq!(count.c, 2);
        let sel = select_independent(&basis, &theta, 2, &witness, &opts).unwrap();
        assert_eq!(sel, vec![0, 2]);
    }

    #[test]
    fn harmonic_oscillator_oracle_m2_c1() {
        let opts = DetectorOptions::default();
        let disc = discover(&System::Ho1, 4, None, 3, &opts).unwrap();
        assert_eq!(disc.m, 2);
        assert_eq!(disc.c, 1);
        assert_eq!(disc.theta3.ncols(), 1);
        assert!(disc.spectrum_a[0] > opts.rank_eps);
        assert!(disc.spectrum_a[1] < opts.rank_eps);
        assert!(disc.residual_inf < 1e-10);
    }
}
