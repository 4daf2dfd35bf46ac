//! Pauli-string algebra, Pauli transfer matrices, and Pauli-channel
//! representations.
//!
//! A channel Λ on an n-qubit system is represented by its Pauli transfer
//! matrix S with entries S_{μν} = Tr[P_μ Λ(P_ν)] / d, normalized so the
//! identity channel maps to the identity matrix. Pauli channels are
//! diagonal in this basis; their eigenvalues λ_α and Kraus weights f_α
//! are related by the commutation-sign transform implemented here, and
//! complete positivity is equivalent to the Fujiwara-Algoet inequalities.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

/// Boundary tolerance for the Fujiwara-Algoet inequalities.
const FA_TOLERANCE: f64 = 1e-12;

/// Single-qubit Pauli matrix by digit: 0 = I, 1 = X, 2 = Y, 3 = Z.
fn single_qubit_pauli(digit: usize) -> DMatrix<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match digit {
        0 => DMatrix::from_row_slice(2, 2, &[one, zero, zero, one]),
        1 => DMatrix::from_row_slice(2, 2, &[zero, one, one, zero]),
        2 => DMatrix::from_row_slice(2, 2, &[zero, -i, i, zero]),
        3 => DMatrix::from_row_slice(2, 2, &[one, zero, zero, -one]),
        _ => unreachable!("pauli digit must be in 0..4"),
    }
}

/// An n-qubit Pauli string identified by its index μ ∈ [0, 4^n).
///
/// Index ordering is tensor-lexicographic with the last qubit varying
/// fastest: μ = 0 is the identity, μ = 1 is I⊗…⊗X, and μ = 4^n − 1 is
/// the all-Z string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauliString {
    index: usize,
    qubit_count: usize,
}

impl PauliString {
    pub fn new(index: usize, qubit_count: usize) -> Result<Self> {
        if qubit_count == 0 {
            return Err(Error::InvalidParameter("qubit_count must be positive".into()));
        }
        let d2 = 4usize.pow(qubit_count as u32);
        if index >= d2 {
            return Err(Error::InvalidParameter(format!(
                "pauli index {index} out of range for {qubit_count} qubit(s) (max {})",
                d2 - 1
            )));
        }
        Ok(Self { index, qubit_count })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn qubit_count(&self) -> usize {
        self.qubit_count
    }

    /// Hilbert-space dimension d = 2^n.
    pub fn dim(&self) -> usize {
        1 << self.qubit_count
    }

    pub fn is_identity(&self) -> bool {
        self.index == 0
    }

    /// Per-qubit Pauli digit, qubit 0 first.
    fn digit(&self, qubit: usize) -> usize {
        (self.index >> (2 * (self.qubit_count - 1 - qubit))) & 3
    }

    /// Dense matrix representation, d × d.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        for q in 0..self.qubit_count {
            m = m.kronecker(&single_qubit_pauli(self.digit(q)));
        }
        m
    }

    /// True when the two strings commute.
    pub fn commutes_with(&self, other: &Self) -> bool {
        debug_assert_eq!(self.qubit_count, other.qubit_count);
        let mut anti = 0usize;
        for q in 0..self.qubit_count {
            let (a, b) = (self.digit(q), other.digit(q));
            if a != 0 && b != 0 && a != b {
                anti += 1;
            }
        }
        anti.is_multiple_of(2)
    }
}

/// Sign (−1)^{s([P_μ, P_ν])}: +1 when the strings commute, −1 otherwise.
pub fn commutation_sign(mu: usize, nu: usize, qubit_count: usize) -> f64 {
    let a = PauliString { index: mu, qubit_count };
    let b = PauliString { index: nu, qubit_count };
    if a.commutes_with(&b) {
        1.0
    } else {
        -1.0
    }
}

/// Real d² × d² transfer-matrix representation of a channel in the Pauli
/// basis, normalized so the identity channel is the identity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTransferMatrix {
    s: DMatrix<f64>,
    qubit_count: usize,
}

impl PauliTransferMatrix {
    pub fn identity(qubit_count: usize) -> Self {
        let d2 = 4usize.pow(qubit_count as u32);
        Self {
            s: DMatrix::identity(d2, d2),
            qubit_count,
        }
    }

    /// Wraps an existing matrix, checking its shape.
    pub fn from_matrix(s: DMatrix<f64>, qubit_count: usize) -> Result<Self> {
        let d2 = 4usize.pow(qubit_count as u32);
        if s.nrows() != d2 || s.ncols() != d2 {
            return Err(Error::DimensionMismatch {
                expected: d2,
                found: s.nrows().max(s.ncols()),
                context: "pauli transfer matrix",
            });
        }
        Ok(Self { s, qubit_count })
    }

    /// Diagonal PTM from per-axis eigenvalues (λ_0 = 1 implicit).
    pub fn from_eigenvalues(lambdas: &[f64], qubit_count: usize) -> Result<Self> {
        let d2 = 4usize.pow(qubit_count as u32);
        if lambdas.len() != d2 - 1 {
            return Err(Error::DimensionMismatch {
                expected: d2 - 1,
                found: lambdas.len(),
                context: "channel eigenvalues",
            });
        }
        let mut s = DMatrix::zeros(d2, d2);
        s[(0, 0)] = 1.0;
        for (a, &l) in lambdas.iter().enumerate() {
            s[(a + 1, a + 1)] = l;
        }
        Ok(Self { s, qubit_count })
    }

    pub fn qubit_count(&self) -> usize {
        self.qubit_count
    }

    /// Number of Pauli components d².
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn entry(&self, mu: usize, nu: usize) -> f64 {
        self.s[(mu, nu)]
    }

    /// The traceless block R (rows/columns 1..d²).
    pub fn r_block(&self) -> DMatrix<f64> {
        let n = self.dim() - 1;
        self.s.view((1, 1), (n, n)).into_owned()
    }

    /// Diagonal of the R block.
    pub fn r_diagonal(&self) -> Vec<f64> {
        (1..self.dim()).map(|a| self.s[(a, a)]).collect()
    }

    /// First row equals (1, 0, …, 0) up to `tol`.
    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        if (self.s[(0, 0)] - 1.0).abs() > tol {
            return false;
        }
        (1..self.dim()).all(|nu| self.s[(0, nu)].abs() <= tol)
    }

    /// First column equals (1, 0, …, 0) up to `tol`.
    pub fn is_unital(&self, tol: f64) -> bool {
        if (self.s[(0, 0)] - 1.0).abs() > tol {
            return false;
        }
        (1..self.dim()).all(|mu| self.s[(mu, 0)].abs() <= tol)
    }

    /// Applies the channel to a Pauli-basis state vector.
    pub fn apply(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: state.len(),
                context: "pauli state vector",
            });
        }
        let v = nalgebra::DVector::from_column_slice(state);
        Ok((&self.s * v).iter().copied().collect())
    }

    /// Composition self ∘ other: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.qubit_count != other.qubit_count {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
                context: "ptm composition",
            });
        }
        Ok(Self {
            s: &self.s * &other.s,
            qubit_count: self.qubit_count,
        })
    }
}

/// Builds the PTM of an arbitrary linear channel action on d × d matrices,
/// with entries S_{μν} = Tr[P_μ Λ(P_ν)] / d.
pub fn ptm_from_superoperator<F>(qubit_count: usize, channel: F) -> Result<PauliTransferMatrix>
where
    F: Fn(&DMatrix<Complex64>) -> DMatrix<Complex64>,
{
    let d = 1usize << qubit_count;
    let d2 = d * d;
    let mut s = DMatrix::zeros(d2, d2);
    for nu in 0..d2 {
        let p_nu = PauliString::new(nu, qubit_count)?.matrix();
        let out = channel(&p_nu);
        if out.nrows() != d || out.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: out.nrows().max(out.ncols()),
                context: "channel action output",
            });
        }
        for mu in 0..d2 {
            let p_mu = PauliString::new(mu, qubit_count)?.matrix();
            // Tr[P_mu out] without forming the product
            let mut tr = Complex64::new(0.0, 0.0);
            for i in 0..d {
                for j in 0..d {
                    tr += p_mu[(i, j)] * out[(j, i)];
                }
            }
            s[(mu, nu)] = tr.re / d as f64;
        }
    }
    PauliTransferMatrix::from_matrix(s, qubit_count)
}

/// Kraus weights of a Pauli channel: Λ[ρ] = Σ_α f_α P_α ρ P_α.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliChannelSpec {
    f: Vec<f64>,
}

impl PauliChannelSpec {
    /// Validates Σ f_α = 1 (within 1e−12). Negative entries are allowed
    /// here; use [`PauliChannelSpec::is_physical`] to test CP.
    pub fn new(f: Vec<f64>) -> Result<Self> {
        let d2 = f.len();
        let n = (d2 as f64).log(4.0).round() as usize;
        if d2 == 0 || 4usize.pow(n as u32) != d2 {
            return Err(Error::InvalidParameter(format!(
                "pauli channel needs 4^n coefficients, got {d2}"
            )));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "pauli channel weights must sum to 1, got {sum:.15}"
            )));
        }
        Ok(Self { f })
    }

    pub fn identity(qubit_count: usize) -> Self {
        let d2 = 4usize.pow(qubit_count as u32);
        let mut f = vec![0.0; d2];
        f[0] = 1.0;
        Self { f }
    }

    pub fn weights(&self) -> &[f64] {
        &self.f
    }

    pub fn qubit_count(&self) -> usize {
        (self.f.len() as f64).log(4.0).round() as usize
    }

    /// All weights nonnegative.
    pub fn is_physical(&self) -> bool {
        self.f.iter().all(|&x| x >= -1e-15)
    }

    /// Diagonal PTM of the channel.
    pub fn ptm(&self) -> PauliTransferMatrix {
        let spec = eigenvalues_from_f(self);
        let lambdas: Vec<f64> = spec.lambdas.iter().map(|l| l.re).collect();
        PauliTransferMatrix::from_eigenvalues(&lambdas, self.qubit_count())
            .expect("eigenvalue count matches by construction")
    }
}

/// Channel eigenvalues λ_α (α = 1..d²−1; λ_0 = 1 is implicit) at one
/// operational time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpectrum {
    pub lambdas: Vec<Complex64>,
    pub time_index: usize,
    pub dt: f64,
}

impl ChannelSpectrum {
    pub fn new(lambdas: Vec<Complex64>, time_index: usize, dt: f64) -> Self {
        Self { lambdas, time_index, dt }
    }

    pub fn from_real(lambdas: &[f64]) -> Self {
        Self {
            lambdas: lambdas.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            time_index: 0,
            dt: 0.0,
        }
    }

    /// All eigenvalue magnitudes within the unit disk (up to `tol`).
    pub fn is_contractive(&self, tol: f64) -> bool {
        self.lambdas.iter().all(|l| l.norm() <= 1.0 + tol)
    }
}

/// Eigenvalues from Kraus weights: λ_α = Σ_β (−1)^{s([P_β, P_α])} f_β.
pub fn eigenvalues_from_f(spec: &PauliChannelSpec) -> ChannelSpectrum {
    let n = spec.qubit_count();
    let d2 = spec.f.len();
    let lambdas = (1..d2)
        .map(|alpha| {
            let v: f64 = (0..d2)
                .map(|beta| commutation_sign(beta, alpha, n) * spec.f[beta])
                .sum();
            Complex64::new(v, 0.0)
        })
        .collect();
    ChannelSpectrum::new(lambdas, 0, 0.0)
}

/// Inverse of [`eigenvalues_from_f`]. Imaginary parts of the input are
/// discarded; the sign matrix is an involution up to d², so
/// f = W(1, λ) / d².
pub fn f_from_eigenvalues(spectrum: &ChannelSpectrum) -> Result<PauliChannelSpec> {
    let n_axes = spectrum.lambdas.len();
    let d2 = n_axes + 1;
    let n = (d2 as f64).log(4.0).round() as usize;
    if 4usize.pow(n as u32) != d2 {
        return Err(Error::InvalidParameter(format!(
            "spectrum must carry 4^n − 1 eigenvalues, got {n_axes}"
        )));
    }
    let mut full = vec![1.0; d2];
    for (a, l) in spectrum.lambdas.iter().enumerate() {
        full[a + 1] = l.re;
    }
    let f: Vec<f64> = (0..d2)
        .map(|alpha| {
            let v: f64 = (0..d2)
                .map(|beta| commutation_sign(beta, alpha, n) * full[beta])
                .sum();
            v / d2 as f64
        })
        .collect();
    PauliChannelSpec::new(f)
}

/// Fujiwara-Algoet complete-positivity conditions for a one-qubit Pauli
/// channel: |1 ± λ_z| ≥ |λ_x ± λ_y|.
pub fn check_fujiwara_algoet(spectrum: &ChannelSpectrum) -> Result<bool> {
    if spectrum.lambdas.len() != 3 {
        return Err(Error::InvalidParameter(format!(
            "Fujiwara-Algoet test is defined for one qubit (3 eigenvalues), got {}",
            spectrum.lambdas.len()
        )));
    }
    let lx = spectrum.lambdas[0].re;
    let ly = spectrum.lambdas[1].re;
    let lz = spectrum.lambdas[2].re;
    let plus = (1.0 + lz).abs() + FA_TOLERANCE >= (lx + ly).abs();
    let minus = (1.0 - lz).abs() + FA_TOLERANCE >= (lx - ly).abs();
    Ok(plus && minus)
}
