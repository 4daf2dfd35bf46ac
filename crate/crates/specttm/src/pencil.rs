//! Matrix-pencil recovery of poles and amplitudes from signal series,
//! SPAM cancellation from the single/double measurement pair, and
//! eigenvalue branch tracking across operational time.
//!
//! A signal row g(1..K) = Σ_j A_j λ_j^k is processed by forming the two
//! shifted Hankel matrices Y₀, Y₁, truncating Y₀ to the signal subspace
//! by SVD, and solving the reduced pencil for the poles; amplitudes
//! follow from a Vandermonde least-squares fit. Combining pole estimates
//! from the single- and double-measurement campaigns as λ = p²/q removes
//! the measurement-channel eigenvalues exactly for Pauli channels.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::ttm::SpectrumSeries;
use crate::{Error, Result};

/// How many singular values of Y₀ count as signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankRule {
    /// Keep exactly the expected pole count (numerically nonzero ones).
    FixedExpected,
    /// Keep singular values above `rel` times the largest.
    Threshold(f64),
}

/// Pencil shape parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PencilConfig {
    /// Hankel width L; defaults to ⌊K/2⌋, clamped to [N, K−N].
    pub pencil_length: Option<usize>,
    pub rank_rule: RankRule,
}

impl Default for PencilConfig {
    fn default() -> Self {
        Self { pencil_length: None, rank_rule: RankRule::FixedExpected }
    }
}

impl PencilConfig {
    pub fn threshold(rel: f64) -> Self {
        Self { pencil_length: None, rank_rule: RankRule::Threshold(rel) }
    }
}

/// Recovered poles with their amplitudes and the worst reconstruction
/// error over the input samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleEstimate {
    pub poles: Vec<Complex64>,
    pub amplitudes: Vec<Complex64>,
    pub residual: f64,
    /// Fewer poles than requested survived the rank truncation.
    pub rank_deficient: bool,
}

/// Relative singular-value floor below which directions are treated as
/// numerically zero even under the fixed-rank rule.
const SIGMA_FLOOR: f64 = 1e-14;

/// One-sided Jacobi SVD: A = U Σ Vᵀ with singular values sorted in
/// decreasing order. Chosen over the QR-based factorization because it
/// keeps high relative accuracy on the tiny trailing singular values the
/// pencil relies on, and it stays exact on rank-deficient Hankel
/// matrices with repeated columns.
fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (rows, cols) = (a.nrows(), a.ncols());
    let mut w = a.clone();
    let mut v = DMatrix::identity(cols, cols);
    let eps = f64::EPSILON;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..rows {
                    alpha += w[(i, p)] * w[(i, p)];
                    beta += w[(i, q)] * w[(i, q)];
                    gamma += w[(i, p)] * w[(i, q)];
                }
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..cols {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));
    let mut u = DMatrix::zeros(rows, cols);
    let mut sigma = Vec::with_capacity(cols);
    let mut v_sorted = DMatrix::zeros(cols, cols);
    for (dst, &src) in order.iter().enumerate() {
        let n = norms[src];
        sigma.push(n);
        if n > 0.0 {
            for i in 0..rows {
                u[(i, dst)] = w[(i, src)] / n;
            }
        }
        for i in 0..cols {
            v_sorted[(i, dst)] = v[(i, src)];
        }
    }
    (u, sigma, v_sorted)
}

/// Extracts up to `expected` poles from one signal row g(1..K).
pub fn estimate_poles(
    series: &[f64],
    expected: usize,
    cfg: &PencilConfig,
) -> Result<PoleEstimate> {
    let k_depth = series.len();
    if expected == 0 {
        return Err(Error::InvalidParameter("expected pole count must be positive".into()));
    }
    if k_depth < (2 * expected).saturating_sub(2).max(2) {
        return Err(Error::SeriesTooShort {
            found: k_depth,
            needed: (2 * expected).saturating_sub(2).max(2),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("signal series contains non-finite values".into()));
    }
    let lo = expected.min(k_depth - 1);
    let hi = k_depth.saturating_sub(expected).max(1);
    if lo > hi {
        return Err(Error::SeriesTooShort { found: k_depth, needed: 2 * expected });
    }
    let length = cfg.pencil_length.unwrap_or(k_depth / 2).clamp(lo, hi);
    let rows = k_depth - length;

    let y0 = DMatrix::from_fn(rows, length, |i, j| series[i + j]);
    let y1 = DMatrix::from_fn(rows, length, |i, j| series[i + j + 1]);

    let (u, sigma, v) = jacobi_svd(&y0);
    let sigma_max = sigma.iter().cloned().fold(0.0f64, f64::max);
    if sigma_max == 0.0 {
        return Ok(PoleEstimate {
            poles: Vec::new(),
            amplitudes: Vec::new(),
            residual: series.iter().fold(0.0f64, |a, &b| a.max(b.abs())),
            rank_deficient: true,
        });
    }
    let keep = |i: usize| -> bool {
        let s = sigma[i];
        match cfg.rank_rule {
            RankRule::FixedExpected => i < expected && s > SIGMA_FLOOR * sigma_max,
            RankRule::Threshold(rel) => s >= rel * sigma_max,
        }
    };
    let rank = (0..sigma.len()).take_while(|&i| keep(i)).count();
    let rank = rank.min(expected);
    if rank == 0 {
        return Ok(PoleEstimate {
            poles: Vec::new(),
            amplitudes: Vec::new(),
            residual: series.iter().fold(0.0f64, |a, &b| a.max(b.abs())),
            rank_deficient: true,
        });
    }

    // reduced pencil: A = U_rᵀ Y₁ V_r Σ_r⁻¹, poles = eig(A)
    let u_r = u.columns(0, rank);
    let v_r = v.columns(0, rank);
    let mut reduced = u_r.transpose() * &y1 * v_r;
    for c in 0..rank {
        reduced.column_mut(c).scale_mut(1.0 / sigma[c]);
    }
    let mut poles: Vec<Complex64> = reduced.complex_eigenvalues().iter().copied().collect();

    // descending magnitude, ties broken by ascending phase
    poles.sort_by(|a, b| {
        let (na, nb) = (a.norm(), b.norm());
        if (na - nb).abs() > 1e-12 {
            nb.partial_cmp(&na).expect("finite norms")
        } else {
            a.arg().partial_cmp(&b.arg()).expect("finite phases")
        }
    });

    // amplitudes by least squares on the Vandermonde system
    let vander = DMatrix::from_fn(k_depth, rank, |k, j| poles[j].powu(k as u32 + 1));
    let rhs = DVector::from_fn(k_depth, |k, _| Complex64::new(series[k], 0.0));
    let amplitudes: Vec<Complex64> = vander
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map(|sol| sol.iter().copied().collect())
        .unwrap_or_else(|_| vec![Complex64::new(0.0, 0.0); rank]);

    let mut residual = 0.0f64;
    for (k, &g) in series.iter().enumerate() {
        let recon: Complex64 = poles
            .iter()
            .zip(&amplitudes)
            .map(|(p, a)| a * p.powu(k as u32 + 1))
            .sum();
        residual = residual.max((recon - g).norm());
    }

    Ok(PoleEstimate {
        poles,
        amplitudes,
        residual,
        rank_deficient: rank < expected,
    })
}

/// Expands a rank-deficient estimate to `expected` poles by amplitude
/// multiplicity: a pole whose amplitude is near an integer m stands for m
/// coincident poles of unit weight. Extra or missing multiplicity lands
/// on the largest-amplitude pole.
pub fn expand_degenerate(estimate: &PoleEstimate, expected: usize) -> Vec<Complex64> {
    if estimate.poles.len() >= expected {
        return estimate.poles.clone();
    }
    if estimate.poles.is_empty() {
        return Vec::new();
    }
    let mut mult: Vec<usize> = estimate
        .amplitudes
        .iter()
        .map(|a| (a.re.round().max(1.0)) as usize)
        .collect();
    let mut total: usize = mult.iter().sum();
    let dominant = estimate
        .amplitudes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).expect("finite amplitudes"))
        .map(|(i, _)| i)
        .unwrap_or(0);
    while total < expected {
        mult[dominant] += 1;
        total += 1;
    }
    while total > expected {
        let i = if mult[dominant] > 1 {
            dominant
        } else {
            mult.iter().position(|&m| m > 1).unwrap_or(dominant)
        };
        if mult[i] == 1 {
            break;
        }
        mult[i] -= 1;
        total -= 1;
    }
    let mut out = Vec::with_capacity(expected);
    for (pole, m) in estimate.poles.iter().zip(&mult) {
        for _ in 0..*m {
            out.push(*pole);
        }
    }
    out.truncate(expected);
    out
}

/// SPAM-free eigenvalues with drop diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CancelOutcome {
    pub lambdas: Vec<Complex64>,
    pub dropped: Vec<String>,
}

/// Pairs the single-campaign poles p = mλ with the double-campaign poles
/// q = m²λ by minimum-cost assignment on |p²/q − p| and returns p²/q per
/// pair. Poles whose double partner underflows are dropped.
pub fn cancel_spam(single: &PoleEstimate, double: &PoleEstimate) -> Result<CancelOutcome> {
    cancel_spam_poles(&single.poles, &double.poles)
}

/// Same as [`cancel_spam`] on raw pole lists (useful after degeneracy
/// expansion).
pub fn cancel_spam_poles(single: &[Complex64], double: &[Complex64]) -> Result<CancelOutcome> {
    let n = single.len();
    if n != double.len() {
        return Err(Error::InvalidParameter(format!(
            "pole counts differ: single has {n}, double has {}",
            double.len()
        )));
    }
    if n == 0 {
        return Ok(CancelOutcome { lambdas: Vec::new(), dropped: Vec::new() });
    }
    if n > 8 {
        return Err(Error::InvalidParameter(format!(
            "assignment supports at most 8 poles, got {n}"
        )));
    }
    const BLOWUP: f64 = 1e-10;
    let cost = |p: Complex64, q: Complex64| -> f64 {
        if q.norm() < BLOWUP {
            1e18
        } else {
            (p * p / q - p).norm()
        }
    };

    // brute-force assignment over permutations (n <= 8)
    let mut indices: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    permute(&mut indices, 0, &mut |perm| {
        let total: f64 = (0..n).map(|i| cost(single[i], double[perm[i]])).sum();
        match &best {
            Some((b, _)) if *b <= total => {}
            _ => best = Some((total, perm.to_vec())),
        }
    });
    let (_, assignment) = best.expect("at least one permutation");

    let mut lambdas = Vec::with_capacity(n);
    let mut dropped = Vec::new();
    for i in 0..n {
        let p = single[i];
        let q = double[assignment[i]];
        if q.norm() < BLOWUP {
            dropped.push(format!(
                "pole {p} dropped: double-campaign partner {q} below {BLOWUP:e}"
            ));
        } else {
            lambdas.push(p * p / q);
        }
    }
    Ok(CancelOutcome { lambdas, dropped })
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Branch-tracked spectra with axis labels x, y, z.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedSpectra {
    pub series: SpectrumSeries,
    pub diagnostics: Vec<String>,
}

const MATCH_TOL: f64 = 1e-9;

/// Assigns axis labels to per-step pole triples by nearest-neighbor
/// continuation in the complex plane.
///
/// Seeding at the first step: a conjugate pair maps to (x, y) with the
/// positive-phase pole on x and the real pole on z; three real poles with
/// a coincident pair map that pair to (x, y); three distinct real poles
/// are labeled (x, y, z) in descending magnitude (amplitude-damping-like
/// ordering), which is recorded as a diagnostic because the summed signal
/// alone cannot distinguish the axes in that case.
pub fn track_branches(
    per_step: &[Vec<Complex64>],
    dt: f64,
    omega_hint: Option<f64>,
) -> Result<TrackedSpectra> {
    if per_step.is_empty() {
        return Err(Error::InvalidParameter("no spectra to track".into()));
    }
    if per_step.iter().any(|p| p.len() != 3) {
        return Err(Error::InvalidParameter(
            "branch tracking expects one-qubit pole triples".into(),
        ));
    }
    if let Some(omega) = omega_hint {
        if 2.0 * omega.abs() * dt >= std::f64::consts::PI {
            return Err(Error::InvalidParameter(format!(
                "phase step 2·ω·dt = {} exceeds π; branches cannot be tracked",
                2.0 * omega.abs() * dt
            )));
        }
    }

    let mut diagnostics = Vec::new();
    let first = &per_step[0];
    let mut current = seed_labels(first, &mut diagnostics);
    let mut axes: [Vec<Complex64>; 3] = Default::default();
    for (axis, &idx) in current.iter().enumerate() {
        axes[axis].push(first[idx]);
    }

    let mut prev: [Complex64; 3] = std::array::from_fn(|a| first[current[a]]);
    for (step, poles) in per_step.iter().enumerate().skip(1) {
        let mut best_perm = [0usize, 1, 2];
        let mut best_cost = f64::INFINITY;
        let mut tie = false;
        for perm in PERMS3 {
            let cost: f64 = (0..3).map(|a| (poles[perm[a]] - prev[a]).norm()).sum();
            if cost + MATCH_TOL < best_cost {
                best_cost = cost;
                best_perm = perm;
                tie = false;
            } else if (cost - best_cost).abs() <= MATCH_TOL && perm != best_perm {
                tie = true;
            }
        }
        if tie {
            // phase continuity settles coincident-magnitude candidates
            let mut best_phase = f64::INFINITY;
            for perm in PERMS3 {
                let cost: f64 = (0..3).map(|a| (poles[perm[a]] - prev[a]).norm()).sum();
                if (cost - best_cost).abs() <= MATCH_TOL {
                    let phase_cost: f64 = (0..3)
                        .map(|a| phase_distance(poles[perm[a]].arg(), prev[a].arg()))
                        .sum();
                    if phase_cost < best_phase {
                        best_phase = phase_cost;
                        best_perm = perm;
                    }
                }
            }
            diagnostics.push(format!(
                "step {}: ambiguous continuation resolved by phase", step + 1
            ));
        }
        current = best_perm;
        for axis in 0..3 {
            axes[axis].push(poles[current[axis]]);
            prev[axis] = poles[current[axis]];
        }
    }

    Ok(TrackedSpectra { series: SpectrumSeries::new(axes, dt), diagnostics })
}

const PERMS3: [[usize; 3]; 6] =
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn phase_distance(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    if d > std::f64::consts::PI {
        d = 2.0 * std::f64::consts::PI - d;
    }
    d
}

/// Label assignment at the first step; returns indices for (x, y, z).
fn seed_labels(poles: &[Complex64], diagnostics: &mut Vec<String>) -> [usize; 3] {
    const IM_TOL: f64 = 1e-9;
    // SPAM cancellation reunites degenerate pairs only to within its own
    // numerical accuracy, so coincidence is judged at 1e-6 relative
    const COINCIDENT_TOL: f64 = 1e-6;
    // conjugate pair present?
    for i in 0..3 {
        for j in (i + 1)..3 {
            let scale = poles[i].norm().max(1.0);
            if poles[i].im.abs() > IM_TOL && (poles[i] - poles[j].conj()).norm() < 1e-7 * scale {
                let k = 3 - i - j;
                let (x, y) = if poles[i].im > 0.0 { (i, j) } else { (j, i) };
                return [x, y, k];
            }
        }
    }
    // coincident real pair?
    for i in 0..3 {
        for j in (i + 1)..3 {
            let scale = poles[i].norm().max(1.0);
            if (poles[i] - poles[j]).norm() < COINCIDENT_TOL * scale {
                let k = 3 - i - j;
                return [i, j, k];
            }
        }
    }
    // three distinct reals: descending magnitude
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| poles[b].norm().partial_cmp(&poles[a].norm()).expect("finite"));
    diagnostics.push(
        "seed: three distinct real poles; axes assigned by descending magnitude".to_string(),
    );
    order
}
