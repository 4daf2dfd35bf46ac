//! Pauli twirling approximation of general channels and the search for
//! the twirling basis that maximizes the RHP non-Markovianity measure.
//!
//! Twirling a channel over the Pauli frame of a rotated basis keeps the
//! diagonal of its transfer matrix in that basis and discards the rest.
//! A non-Pauli channel whose principal decay axes are misaligned with
//! the computational frame therefore loses most of its non-Markovian
//! structure under a θ = 0 twirl; rotating the twirl frame onto those
//! axes recovers it, and the RHP measure serves as the search objective.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;

use crate::pauli::PauliTransferMatrix;
use crate::ttm::{rhp_from_spectra, SpectrumSeries};
use crate::{Error, Result};

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Twirling frame given by U = R_z(θ1) R_y(θ2) R_z(θ3); the frame's
/// Pauli operators are P'_α = U P_α U†.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwirlBasis {
    angles: [f64; 3],
}

impl TwirlBasis {
    /// Angles are reduced to [0, 2π).
    pub fn new(angles: [f64; 3]) -> Self {
        Self { angles: angles.map(|a| a.rem_euclid(TAU)) }
    }

    pub fn computational() -> Self {
        Self { angles: [0.0; 3] }
    }

    pub fn angles(&self) -> [f64; 3] {
        self.angles
    }

    /// Bloch-vector rotation O = Rot_z(θ1) Rot_y(θ2) Rot_z(θ3), so that
    /// P'_α = Σ_β O_{βα} P_β.
    pub fn rotation(&self) -> Matrix3<f64> {
        let rz = |t: f64| {
            Matrix3::new(t.cos(), -t.sin(), 0.0, t.sin(), t.cos(), 0.0, 0.0, 0.0, 1.0)
        };
        let ry = |t: f64| {
            Matrix3::new(t.cos(), 0.0, t.sin(), 0.0, 1.0, 0.0, -t.sin(), 0.0, t.cos())
        };
        rz(self.angles[0]) * ry(self.angles[1]) * rz(self.angles[2])
    }

    /// Full 4×4 transfer matrix of conjugation by U: blkdiag(1, O).
    pub fn frame_ptm(&self) -> PauliTransferMatrix {
        let o = self.rotation();
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = 1.0;
        for i in 0..3 {
            for j in 0..3 {
                m[(i + 1, j + 1)] = o[(i, j)];
            }
        }
        PauliTransferMatrix::from_matrix(m, 1).expect("4x4 by construction")
    }

    /// The channel as seen in the rotated frame: S' = Bᵀ S B.
    pub fn conjugate_into_frame(&self, s: &PauliTransferMatrix) -> PauliTransferMatrix {
        let b = self.frame_ptm();
        let m = b.matrix().transpose() * s.matrix() * b.matrix();
        PauliTransferMatrix::from_matrix(m, s.qubit_count()).expect("shape preserved")
    }
}

/// Pauli twirl of a one-qubit channel in the given basis: rotate into the
/// frame, keep the diagonal, rotate back. The affine column is projected
/// away along with the other off-diagonal entries.
pub fn twirl_channel(s: &PauliTransferMatrix, basis: &TwirlBasis) -> PauliTransferMatrix {
    let b = basis.frame_ptm();
    let in_frame = b.matrix().transpose() * s.matrix() * b.matrix();
    let mut diag = DMatrix::zeros(4, 4);
    for i in 0..4 {
        diag[(i, i)] = in_frame[(i, i)];
    }
    let back = b.matrix() * diag * b.matrix().transpose();
    PauliTransferMatrix::from_matrix(back, s.qubit_count()).expect("shape preserved")
}

/// Eigenvalue trajectories of the twirled maps: the frame-diagonal
/// entries per axis and step.
pub fn twirled_spectra(
    maps: &[PauliTransferMatrix],
    basis: &TwirlBasis,
    dt: f64,
) -> SpectrumSeries {
    let b = basis.frame_ptm();
    let mut axes: [Vec<Complex64>; 3] = Default::default();
    for m in maps {
        let in_frame = b.matrix().transpose() * m.matrix() * b.matrix();
        for axis in 0..3 {
            axes[axis].push(Complex64::new(in_frame[(axis + 1, axis + 1)], 0.0));
        }
    }
    SpectrumSeries::new(axes, dt)
}

/// Outcome of the twirl-basis optimization.
#[derive(Debug, Clone)]
pub struct TwirlSearchResult {
    pub best: TwirlBasis,
    pub best_rhp: f64,
    /// Every (angles, RHP) evaluation on the grid, in scan order, plus
    /// the refined optimum at the end.
    pub evaluations: Vec<([f64; 3], f64)>,
    /// Set when the whole landscape is numerically zero.
    pub flat: bool,
}

fn rhp_objective(maps: &[PauliTransferMatrix], dt: f64, angles: [f64; 3]) -> f64 {
    let basis = TwirlBasis::new(angles);
    let spectra = twirled_spectra(maps, &basis, dt);
    match rhp_from_spectra(&spectra) {
        Ok(r) => r.total,
        // vanishing twirled eigenvalue: treat as an invalid basis
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Maximizes the RHP measure of the twirled maps over the basis angles:
/// a uniform grid over [0, π)³ (the Pauli frame makes angles π-periodic
/// up to axis signs) followed by Nelder-Mead refinement from the best
/// grid point. Deterministic; grid ties resolve to the lexicographically
/// smallest angles.
pub fn optimal_basis_search(
    maps: &[PauliTransferMatrix],
    dt: f64,
    grid_density: usize,
    refine: bool,
) -> Result<TwirlSearchResult> {
    if grid_density == 0 {
        return Err(Error::InvalidParameter("grid density must be positive".into()));
    }
    if maps.is_empty() {
        return Err(Error::InvalidParameter("need at least one map".into()));
    }
    let step = std::f64::consts::PI / grid_density as f64;
    let mut evaluations = Vec::with_capacity(grid_density.pow(3));
    let mut best_angles = [0.0; 3];
    let mut best = f64::NEG_INFINITY;
    for i in 0..grid_density {
        for j in 0..grid_density {
            for k in 0..grid_density {
                let angles = [i as f64 * step, j as f64 * step, k as f64 * step];
                let value = rhp_objective(maps, dt, angles);
                evaluations.push((angles, value));
                if value > best {
                    best = value;
                    best_angles = angles;
                }
            }
        }
    }

    if best < 1e-12 {
        return Ok(TwirlSearchResult {
            best: TwirlBasis::computational(),
            best_rhp: 0.0,
            evaluations,
            flat: true,
        });
    }

    if refine {
        let (refined, value) = nelder_mead_max(
            |a| rhp_objective(maps, dt, *a),
            best_angles,
            step / 2.0,
            1e-4,
            300,
        );
        if value >= best {
            best = value;
            best_angles = refined;
        }
        evaluations.push((best_angles, best));
    }

    Ok(TwirlSearchResult {
        best: TwirlBasis::new(best_angles),
        best_rhp: best,
        evaluations,
        flat: false,
    })
}

/// Plain Nelder-Mead ascent on three angles; terminates when the simplex
/// has shrunk below `tol` in every coordinate or after `max_iter` steps.
fn nelder_mead_max(
    f: impl Fn(&[f64; 3]) -> f64,
    start: [f64; 3],
    scale: f64,
    tol: f64,
    max_iter: usize,
) -> ([f64; 3], f64) {
    let cost = |x: &[f64; 3]| -f(x);
    let mut simplex: Vec<[f64; 3]> = vec![start];
    for d in 0..3 {
        let mut v = start;
        v[d] += scale;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(&cost).collect();

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite costs"));
        let sorted: Vec<[f64; 3]> = order.iter().map(|&i| simplex[i]).collect();
        let sorted_vals: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = sorted;
        values = sorted_vals;

        let spread = (0..3)
            .map(|d| {
                simplex[1..]
                    .iter()
                    .map(|v| (v[d] - simplex[0][d]).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        if spread < tol {
            break;
        }

        let centroid: [f64; 3] =
            std::array::from_fn(|d| (simplex[0][d] + simplex[1][d] + simplex[2][d]) / 3.0);
        let worst = simplex[3];
        let reflect: [f64; 3] = std::array::from_fn(|d| centroid[d] + (centroid[d] - worst[d]));
        let f_reflect = cost(&reflect);

        if f_reflect < values[0] {
            let expand: [f64; 3] =
                std::array::from_fn(|d| centroid[d] + 2.0 * (centroid[d] - worst[d]));
            let f_expand = cost(&expand);
            if f_expand < f_reflect {
                simplex[3] = expand;
                values[3] = f_expand;
            } else {
                simplex[3] = reflect;
                values[3] = f_reflect;
            }
        } else if f_reflect < values[2] {
            simplex[3] = reflect;
            values[3] = f_reflect;
        } else {
            let contract: [f64; 3] =
                std::array::from_fn(|d| centroid[d] + 0.5 * (worst[d] - centroid[d]));
            let f_contract = cost(&contract);
            if f_contract < values[3] {
                simplex[3] = contract;
                values[3] = f_contract;
            } else {
                // shrink toward the best vertex
                for i in 1..4 {
                    simplex[i] =
                        std::array::from_fn(|d| simplex[0][d] + 0.5 * (simplex[i][d] - simplex[0][d]));
                    values[i] = cost(&simplex[i]);
                }
            }
        }
    }

    let mut best_idx = 0;
    for i in 1..4 {
        if values[i] < values[best_idx] {
            best_idx = i;
        }
    }
    (simplex[best_idx], -values[best_idx])
}
