//! Ground-truth noise models: analytic dephasing and amplitude-damping
//! maps, stochastic-Hamiltonian Monte-Carlo maps for correlated Gaussian
//! noise, and exact decoherence rates extracted from map sequences.
//!
//! All correlation functions have the form C(t) = λ e^{−a|t|} cos(ω_c t).
//! The pure-dephasing decoherence exponent is computed from the
//! time-domain cumulant Υ(t) = 4 ∫₀ᵗ (t−s) C(s) ds, which equals the
//! frequency-domain form (4/π) ∫ dω S(ω)/ω² [1 − cos ωt] for the
//! Lorentzian spectrum of this C (checked in the test suite).

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::pauli::PauliTransferMatrix;
use crate::{Error, Result};

/// Stationary Gaussian correlation C(t) = amplitude · e^{−decay_rate·|t|} · cos(cutoff·t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCorrelation {
    /// C(0).
    pub amplitude: f64,
    /// Exponential envelope rate (1 in all reference models).
    pub decay_rate: f64,
    /// Modulation frequency ω_c in radians per unit time.
    pub cutoff: f64,
}

impl GaussianCorrelation {
    pub fn new(amplitude: f64, decay_rate: f64, cutoff: f64) -> Result<Self> {
        if amplitude < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "correlation amplitude must be >= 0, got {amplitude}"
            )));
        }
        if decay_rate <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "correlation decay rate must be > 0, got {decay_rate}"
            )));
        }
        if cutoff < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "cutoff frequency must be >= 0, got {cutoff}"
            )));
        }
        Ok(Self { amplitude, decay_rate, cutoff })
    }

    pub fn zero() -> Self {
        Self { amplitude: 0.0, decay_rate: 1.0, cutoff: 0.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (-self.decay_rate * t.abs()).exp() * (self.cutoff * t).cos()
    }
}

/// Which reference model generates the dynamical maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    PureDephasing,
    AmplitudeDamping,
    CorrelatedXy,
}

/// Noise axes that can carry a stochastic field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseAxis {
    X,
    Y,
    Z,
}

/// Cross-correlations between noise axes. Absent entries are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Couplings {
    pub xx: Option<GaussianCorrelation>,
    pub yy: Option<GaussianCorrelation>,
    pub zz: Option<GaussianCorrelation>,
    pub xy: Option<GaussianCorrelation>,
}

impl Couplings {
    fn get(&self, a: NoiseAxis, b: NoiseAxis) -> f64 {
        self.corr(a, b).map_or(0.0, |c| c.amplitude)
    }

    fn corr(&self, a: NoiseAxis, b: NoiseAxis) -> Option<GaussianCorrelation> {
        use NoiseAxis::*;
        match (a, b) {
            (X, X) => self.xx,
            (Y, Y) => self.yy,
            (Z, Z) => self.zz,
            (X, Y) | (Y, X) => self.xy,
            _ => None,
        }
    }
}

/// Complete ground-truth model: system Hamiltonian ω_s σ_z plus Gaussian
/// noise fields coupled to Pauli axes.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModelSpec {
    pub kind: ModelKind,
    /// Coefficient of σ_z in the system Hamiltonian.
    pub system_frequency: f64,
    pub couplings: Couplings,
    /// Damping probability per step, used by [`ModelKind::AmplitudeDamping`].
    pub damping_p: f64,
}

impl NoiseModelSpec {
    pub fn pure_dephasing(omega_s: f64, czz: GaussianCorrelation) -> Self {
        Self {
            kind: ModelKind::PureDephasing,
            system_frequency: omega_s,
            couplings: Couplings { zz: Some(czz), ..Default::default() },
            damping_p: 0.0,
        }
    }

    pub fn amplitude_damping(p: f64) -> Self {
        Self {
            kind: ModelKind::AmplitudeDamping,
            system_frequency: 0.0,
            couplings: Couplings::default(),
            damping_p: p,
        }
    }

    pub fn correlated_xy(
        cxx: GaussianCorrelation,
        cyy: GaussianCorrelation,
        cxy: GaussianCorrelation,
    ) -> Self {
        Self {
            kind: ModelKind::CorrelatedXy,
            system_frequency: 0.0,
            couplings: Couplings { xx: Some(cxx), yy: Some(cyy), xy: Some(cxy), ..Default::default() },
            damping_p: 0.0,
        }
    }

    /// Axes carrying stochastic fields for this model.
    pub fn noise_axes(&self) -> Vec<NoiseAxis> {
        match self.kind {
            ModelKind::PureDephasing => vec![NoiseAxis::Z],
            ModelKind::AmplitudeDamping => vec![],
            ModelKind::CorrelatedXy => vec![NoiseAxis::X, NoiseAxis::Y],
        }
    }

    /// Equal-time correlation matrix over the model's noise axes.
    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        let axes = self.noise_axes();
        DMatrix::from_fn(axes.len(), axes.len(), |i, j| self.couplings.get(axes[i], axes[j]))
    }

    /// Structural validation: PSD equal-time correlations, damping
    /// probability in range.
    pub fn validate(&self) -> Result<()> {
        if self.kind == ModelKind::AmplitudeDamping && !(0.0..=1.0).contains(&self.damping_p) {
            return Err(Error::InvalidParameter(format!(
                "damping probability must lie in [0, 1], got {}",
                self.damping_p
            )));
        }
        let c0 = self.correlation_matrix();
        if c0.nrows() > 0 {
            let eig = SymmetricEigen::new(c0);
            if let Some(&min) = eig
                .eigenvalues
                .iter()
                .min_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"))
            {
                if min < -1e-12 {
                    return Err(Error::NonPositiveSemidefinite { eigenvalue: min });
                }
            }
        }
        Ok(())
    }
}

/// Pure-dephasing decoherence exponent Υ(t) = 4 ∫₀ᵗ (t−s) C(s) ds,
/// evaluated by composite Simpson quadrature on a fine grid.
pub fn dephasing_upsilon(corr: &GaussianCorrelation, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    if t == 0.0 || corr.amplitude == 0.0 {
        return Ok(0.0);
    }
    // step <= 0.002 keeps the Simpson error below 1e-10 for the reference models
    let mut n = ((500.0 * t).ceil() as usize).max(200);
    if n % 2 == 1 {
        n += 1;
    }
    let h = t / n as f64;
    let f = |s: f64| (t - s) * corr.eval(s);
    let mut acc = f(0.0) + f(t);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(j as f64 * h);
    }
    Ok(4.0 * acc * h / 3.0)
}

/// Pure-dephasing map at operational time t_n = n·dt: the x–y block is a
/// rotation by 2 ω_s t_n scaled by e^{−Υ(t_n)}, the z entry is 1.
pub fn dephasing_map(spec: &NoiseModelSpec, n: usize, dt: f64) -> Result<PauliTransferMatrix> {
    if spec.kind != ModelKind::PureDephasing {
        return Err(Error::InvalidParameter(
            "dephasing_map requires a pure_dephasing model".into(),
        ));
    }
    let czz = spec
        .couplings
        .zz
        .ok_or_else(|| Error::InvalidParameter("pure_dephasing model needs a zz coupling".into()))?;
    let t = n as f64 * dt;
    let damp = (-dephasing_upsilon(&czz, t)?).exp();
    let phi = 2.0 * spec.system_frequency * t;
    let (c, s) = (phi.cos(), phi.sin());
    let mut m = DMatrix::zeros(4, 4);
    m[(0, 0)] = 1.0;
    m[(1, 1)] = damp * c;
    m[(1, 2)] = damp * s;
    m[(2, 1)] = -damp * s;
    m[(2, 2)] = damp * c;
    m[(3, 3)] = 1.0;
    PauliTransferMatrix::from_matrix(m, 1)
}

/// Amplitude-damping map: R = diag(√(1−p), √(1−p), 1−p) with affine
/// z-shift p.
pub fn amplitude_damping_map(p: f64) -> Result<PauliTransferMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "damping probability must lie in [0, 1], got {p}"
        )));
    }
    let root = (1.0 - p).sqrt();
    let mut m = DMatrix::zeros(4, 4);
    m[(0, 0)] = 1.0;
    m[(1, 1)] = root;
    m[(2, 2)] = root;
    m[(3, 3)] = 1.0 - p;
    m[(3, 0)] = p;
    PauliTransferMatrix::from_matrix(m, 1)
}

/// Midpoint grid for trajectory sampling: steps points at (j + ½)·h.
pub fn midpoint_grid(steps: usize, h: f64) -> Vec<f64> {
    (0..steps).map(|j| (j as f64 + 0.5) * h).collect()
}

/// Sampled noise paths on a fixed grid, one realization per trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    pub axes: Vec<NoiseAxis>,
    pub grid: Vec<f64>,
    pub count: usize,
    pub seed: u64,
    /// Flat layout: data[traj * axes * grid + axis * grid + point].
    data: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn path(&self, traj: usize, axis: usize) -> &[f64] {
        let g = self.grid.len();
        let base = (traj * self.axes.len() + axis) * g;
        &self.data[base..base + g]
    }
}

/// Draws `count` multivariate-normal noise paths with the model's
/// cross-covariance on the given grid, by dense eigenfactorization of the
/// full (axes × grid) covariance. Deterministic given `seed`, independent
/// of evaluation order (one RNG substream per trajectory).
pub fn sample_trajectories(
    spec: &NoiseModelSpec,
    grid: &[f64],
    count: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    let axes = spec.noise_axes();
    let na = axes.len();
    let g = grid.len();
    let dim = na * g;
    if dim == 0 || count == 0 {
        return Ok(TrajectoryBatch {
            axes,
            grid: grid.to_vec(),
            count,
            seed,
            data: vec![0.0; count * na * g],
        });
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for (ai, &a) in axes.iter().enumerate() {
        for (bi, &b) in axes.iter().enumerate() {
            if let Some(c) = spec.couplings.corr(a, b) {
                for i in 0..g {
                    for j in 0..g {
                        cov[(ai * g + i, bi * g + j)] = c.eval(grid[i] - grid[j]);
                    }
                }
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let floor = -1e-9 * max_eig.max(1.0);
    for &v in eig.eigenvalues.iter() {
        if v < floor {
            return Err(Error::NonPositiveSemidefinite { eigenvalue: v });
        }
    }
    // factor = V sqrt(max(eig, 0)); tiny negative eigenvalues are clamped
    let mut factor = eig.eigenvectors.clone();
    for (c, &v) in eig.eigenvalues.iter().enumerate() {
        let scale = v.max(0.0).sqrt();
        factor.column_mut(c).scale_mut(scale);
    }

    let data: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|traj| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(traj as u64 + 1);
            let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let path = &factor * z;
            path.iter().copied().collect()
        })
        .collect();
    Ok(TrajectoryBatch {
        axes,
        grid: grid.to_vec(),
        count,
        seed,
        data: data.concat(),
    })
}

/// Monte-Carlo dynamical maps plus any diagnostics raised during the run.
#[derive(Debug, Clone)]
pub struct MonteCarloMaps {
    pub maps: Vec<PauliTransferMatrix>,
    pub warnings: Vec<String>,
}

fn pauli2() -> [Matrix2<Complex64>; 4] {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    [
        Matrix2::new(one, zero, zero, one),
        Matrix2::new(zero, one, one, zero),
        Matrix2::new(zero, -i, i, zero),
        Matrix2::new(one, zero, zero, -one),
    ]
}

/// exp(−i θ n̂·σ) for a real Bloch-axis vector b = θ n̂.
fn su2_step(bx: f64, by: f64, bz: f64, h: f64) -> Matrix2<Complex64> {
    let norm = (bx * bx + by * by + bz * bz).sqrt();
    if norm < 1e-300 {
        return Matrix2::identity();
    }
    let theta = h * norm;
    let (c, s) = (theta.cos(), theta.sin());
    let (nx, ny, nz) = (bx / norm, by / norm, bz / norm);
    Matrix2::new(
        Complex64::new(c, -s * nz),
        Complex64::new(-s * ny, -s * nx),
        Complex64::new(s * ny, -s * nx),
        Complex64::new(c, s * nz),
    )
}

/// Trajectory-averaged maps emitted every `stride` substeps of width `h`.
/// The batch must carry at least `total_steps` grid points per axis.
pub fn monte_carlo_maps_grid(
    spec: &NoiseModelSpec,
    total_steps: usize,
    h: f64,
    stride: usize,
    batch: &TrajectoryBatch,
) -> Result<MonteCarloMaps> {
    if batch.grid.len() < total_steps {
        return Err(Error::InvalidParameter(format!(
            "trajectory batch has {} grid points, need {}",
            batch.grid.len(),
            total_steps
        )));
    }
    if stride == 0 || !total_steps.is_multiple_of(stride) {
        return Err(Error::InvalidParameter(format!(
            "stride {stride} must divide the step count {total_steps}"
        )));
    }
    let mut warnings = Vec::new();
    if batch.count < 100 {
        warnings.push(format!(
            "only {} trajectories; Monte-Carlo error will be large",
            batch.count
        ));
    }
    let n_emit = total_steps / stride;
    let omega_s = spec.system_frequency;
    let axes = &batch.axes;
    let paulis = pauli2();

    // one accumulation pass per fixed-size chunk, chunks summed in index
    // order so the result does not depend on the rayon schedule
    let chunk = 256usize;
    let n_chunks = batch.count.div_ceil(chunk);
    let partials: Vec<Vec<[f64; 16]>> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            let hi = ((ci + 1) * chunk).min(batch.count);
            let mut acc = vec![[0.0f64; 16]; n_emit];
            for traj in lo..hi {
                let mut w: Matrix2<Complex64> = Matrix2::identity();
                for step in 0..total_steps {
                    let (mut bx, mut by, mut bz) = (0.0, 0.0, omega_s);
                    for (ai, axis) in axes.iter().enumerate() {
                        let v = batch.path(traj, ai)[step];
                        match axis {
                            NoiseAxis::X => bx += v,
                            NoiseAxis::Y => by += v,
                            NoiseAxis::Z => bz += v,
                        }
                    }
                    w = su2_step(bx, by, bz, h) * w;
                    if (step + 1) % stride == 0 {
                        let n = (step + 1) / stride - 1;
                        let wd = w.adjoint();
                        for b in 0..4 {
                            let conj = w * paulis[b] * wd;
                            for a in 0..4 {
                                let tr = (paulis[a] * conj).trace();
                                acc[n][a * 4 + b] += tr.re / 2.0;
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let scale = 1.0 / batch.count as f64;
    let maps = (0..n_emit)
        .map(|n| {
            let mut m = DMatrix::zeros(4, 4);
            for p in &partials {
                for a in 0..4 {
                    for b in 0..4 {
                        m[(a, b)] += p[n][a * 4 + b];
                    }
                }
            }
            m.scale_mut(scale);
            PauliTransferMatrix::from_matrix(m, 1).expect("4x4 by construction")
        })
        .collect();
    Ok(MonteCarloMaps { maps, warnings })
}

/// Dynamical maps Λ_1..Λ_M as trajectory averages of time-ordered unitary
/// propagation with midpoint substeps of width dt/substeps.
pub fn monte_carlo_maps(
    spec: &NoiseModelSpec,
    m_steps: usize,
    dt: f64,
    substeps: usize,
    batch: &TrajectoryBatch,
) -> Result<MonteCarloMaps> {
    monte_carlo_maps_grid(spec, m_steps * substeps, dt / substeps as f64, substeps, batch)
}

/// Canonical decoherence rates over time, labeled by their dominant axis
/// at the first step and tracked by eigenvector continuity afterwards.
#[derive(Debug, Clone)]
pub struct DecoherenceRates {
    /// γ_i(t_n) for n = 0..M−1 (rates sit at the left end of each step).
    pub gammas: Vec<[f64; 3]>,
    /// Integrated rates Γ_i(t_n) for n = 1..M.
    pub integrated: Vec<[f64; 3]>,
    pub dt: f64,
}

impl DecoherenceRates {
    /// Axis-summed integrated rate ΣΓ_i(t_n); branch-tracking free, so it
    /// stays stable for noisy Monte-Carlo inputs.
    pub fn total_integrated(&self) -> Vec<f64> {
        self.integrated.iter().map(|g| g.iter().sum()).collect()
    }
}

/// Pauli-product trace table Tr[P_a P_m P_b P_n]/2 used to convert a PTM
/// into its chi (process) representation.
fn chi_basis_matrix() -> DMatrix<Complex64> {
    let paulis = pauli2();
    DMatrix::from_fn(16, 16, |row, col| {
        let (a, b) = (row / 4, row % 4);
        let (m, n) = (col / 4, col % 4);
        (paulis[a] * paulis[m] * paulis[b] * paulis[n]).trace() / Complex64::new(2.0, 0.0)
    })
}

/// Extracts canonical decoherence rates from a map sequence via the
/// time-local generator L_{t_n} ≈ (Λ_{n+1} − Λ_n)/dt · Λ_n^{−1} and the
/// eigenvalues of its Kossakowski matrix (×2, matching the ½-normalized
/// generator convention used by the Γ log-ratio formula).
pub fn exact_decoherence_rates(maps: &[PauliTransferMatrix], dt: f64) -> Result<DecoherenceRates> {
    let m_steps = maps.len();
    if m_steps == 0 {
        return Err(Error::InvalidParameter("need at least one map".into()));
    }
    let chi_lu = chi_basis_matrix().lu();
    let identity = PauliTransferMatrix::identity(1);
    let mut gammas: Vec<[f64; 3]> = Vec::with_capacity(m_steps);
    let mut prev_vecs: Option<nalgebra::DMatrix<Complex64>> = None;

    for n in 0..m_steps {
        let current = if n == 0 { identity.matrix() } else { maps[n - 1].matrix() };
        let next = maps[n].matrix();
        let inv = current
            .clone()
            .try_inverse()
            .ok_or(Error::SingularMap { step: n })?;
        let gen = (next - current).scale(1.0 / dt) * inv;
        let rhs = DVector::from_fn(16, |k, _| Complex64::new(gen[(k / 4, k % 4)], 0.0));
        let q = chi_lu.solve(&rhs).ok_or(Error::SingularMap { step: n })?;
        // Kossakowski block: hermitian part of q over the traceless axes
        let mut c = DMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let qij = q[(i + 1) * 4 + (j + 1)];
                let qji = q[(j + 1) * 4 + (i + 1)];
                c[(i, j)] = (qij + qji.conj()) / 2.0;
            }
        }
        let eig = SymmetricEigen::new(c);
        let vals: Vec<f64> = eig.eigenvalues.iter().map(|v| 2.0 * v).collect();
        let vecs = eig.eigenvectors;

        // assign branches: dominant cardinal axis at the first step,
        // eigenvector overlap continuity afterwards
        let order: [usize; 3] = match &prev_vecs {
            None => {
                let mut order = [usize::MAX; 3];
                let mut used = [false; 3];
                let mut cands: Vec<(f64, usize, usize)> = Vec::new();
                for axis in 0..3 {
                    for k in 0..3 {
                        cands.push((vecs[(axis, k)].norm(), axis, k));
                    }
                }
                cands.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite overlaps"));
                for (_, axis, k) in cands {
                    if order[axis] == usize::MAX && !used[k] {
                        order[axis] = k;
                        used[k] = true;
                    }
                }
                order
            }
            Some(prev) => {
                let mut order = [usize::MAX; 3];
                let mut used = [false; 3];
                for slot in 0..3 {
                    let mut best = (f64::MIN, usize::MAX);
                    for k in 0..3 {
                        if used[k] {
                            continue;
                        }
                        let overlap: Complex64 =
                            (0..3).map(|r| prev[(r, slot)].conj() * vecs[(r, k)]).sum();
                        if overlap.norm() > best.0 {
                            best = (overlap.norm(), k);
                        }
                    }
                    order[slot] = best.1;
                    used[best.1] = true;
                }
                order
            }
        };
        let mut tracked_vecs = DMatrix::zeros(3, 3);
        let mut g = [0.0; 3];
        for slot in 0..3 {
            g[slot] = vals[order[slot]];
            tracked_vecs.set_column(slot, &vecs.column(order[slot]));
        }
        prev_vecs = Some(tracked_vecs);
        gammas.push(g);
    }

    // each forward-difference sample is the mean rate over [t_n, t_{n+1}],
    // so the cumulative sum integrates at second order
    let mut integrated = Vec::with_capacity(m_steps);
    let mut acc = [0.0f64; 3];
    for g in &gammas {
        for a in 0..3 {
            acc[a] += g[a] * dt;
        }
        integrated.push(acc);
    }
    Ok(DecoherenceRates { gammas, integrated, dt })
}

/// Analytic dephasing PTMs Λ_1..Λ_M (convenience for pipelines and tests).
pub fn dephasing_maps(spec: &NoiseModelSpec, m_steps: usize, dt: f64) -> Result<Vec<PauliTransferMatrix>> {
    (1..=m_steps).map(|n| dephasing_map(spec, n, dt)).collect()
}

/// Markovian amplitude-damping sequence Λ_n = AD(p)ⁿ = AD(1 − (1−p)ⁿ).
pub fn amplitude_damping_maps(p: f64, m_steps: usize) -> Result<Vec<PauliTransferMatrix>> {
    (1..=m_steps)
        .map(|n| amplitude_damping_map(1.0 - (1.0 - p).powi(n as i32)))
        .collect()
}

/// Verifies the batch's sample cross-covariance against the model at a
/// few grid points; returns the largest deviation in units of the
/// standard error. Used by statistical tests and diagnostics.
pub fn covariance_check(spec: &NoiseModelSpec, batch: &TrajectoryBatch) -> f64 {
    let axes = &batch.axes;
    let g = batch.grid.len();
    let count = batch.count;
    let mut worst: f64 = 0.0;
    let probes = [(0usize, 0usize), (0, g / 2), (g / 3, g / 2)];
    for (ai, &a) in axes.iter().enumerate() {
        for (bi, &b) in axes.iter().enumerate() {
            for &(i, j) in &probes {
                let want = spec
                    .couplings
                    .corr(a, b)
                    .map_or(0.0, |c| c.eval(batch.grid[i] - batch.grid[j]));
                let mut acc = 0.0;
                for traj in 0..count {
                    acc += batch.path(traj, ai)[i] * batch.path(traj, bi)[j];
                }
                let got = acc / count as f64;
                let var_a = spec.couplings.get(a, a);
                let var_b = spec.couplings.get(b, b);
                let se = ((var_a * var_b + want * want) / count as f64).sqrt().max(1e-12);
                worst = worst.max((got - want).abs() / se);
            }
        }
    }
    worst
}

pub use crate::pauli::ptm_from_superoperator;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Closed form of the cumulant for C(t) = λ e^{−a t} cos(ω_c t):
    /// Υ(t) = 4λ Re[(z t − 1 + e^{−z t}) / z²] with z = a − i ω_c.
    fn upsilon_closed(lam: f64, a: f64, wc: f64, t: f64) -> f64 {
        let z = Complex64::new(a, -wc);
        let num = z * t - 1.0 + (-z * t).exp();
        4.0 * lam * (num / (z * z)).re
    }

    fn czz(lam: f64, wc: f64) -> GaussianCorrelation {
        GaussianCorrelation::new(lam, 1.0, wc).unwrap()
    }

    #[test]
    fn upsilon_zero_at_origin() {
        assert_eq!(dephasing_upsilon(&czz(4.0, 2.0), 0.0).unwrap(), 0.0);
        assert!(dephasing_upsilon(&czz(4.0, 2.0), -0.1).is_err());
    }

    #[test]
    fn upsilon_matches_closed_form() {
        for &(lam, wc, t) in &[
            (4.0, 2.0, 0.4),
            (4.0, 2.0, 1.6),
            (1.0, 0.0, 1.0),
            (0.04, 2.0, 3.0),
            (4.0, 6.0, 0.8),
        ] {
            let got = dephasing_upsilon(&czz(lam, wc), t).unwrap();
            let want = upsilon_closed(lam, 1.0, wc, t);
            assert_abs_diff_eq!(got, want, epsilon = 1e-9);
        }
        // frozen reference points
        assert_abs_diff_eq!(
            dephasing_upsilon(&czz(4.0, 2.0), 0.4).unwrap(),
            1.0723314612,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            dephasing_upsilon(&czz(4.0, 2.0), 1.6).unwrap(),
            7.4571512721,
            epsilon = 1e-8
        );
    }

    #[test]
    fn upsilon_flat_spectrum_closed_form() {
        // omega_c = 0: Upsilon = 4 lam (t - 1 + e^{-t})
        for &t in &[0.3, 1.0, 2.5] {
            let got = dephasing_upsilon(&czz(4.0, 0.0), t).unwrap();
            assert_abs_diff_eq!(got, 16.0 * (t - 1.0 + (-t).exp()), epsilon = 1e-8);
        }
    }

    #[test]
    fn upsilon_short_time_quadratic() {
        // next term in the series is (2/3) C'(0) t^3
        let lam = 3.0;
        for &t in &[1e-3, 3e-3] {
            let got = dephasing_upsilon(&czz(lam, 2.0), t).unwrap();
            assert_abs_diff_eq!(got, 2.0 * lam * t * t, epsilon = 4.0 * lam * t * t * t);
        }
    }

    #[test]
    fn upsilon_matches_frequency_domain_form() {
        // S(w) = lam [ 1/(1+(w-wc)^2) + 1/(1+(w+wc)^2) ] for decay rate 1;
        // quadrature of (4/pi) S(w)/w^2 (1 - cos wt) over w
        let (lam, wc, t) = (4.0, 2.0, 0.8);
        let n = 2_000_000usize;
        let wmax = 2000.0;
        let h = wmax / n as f64;
        // integrand at w -> 0 tends to S(0) t^2 / 2
        let s0 = lam * 2.0 / (1.0 + wc * wc);
        let mut acc = 0.5 * s0 * t * t / 2.0;
        for j in 1..=n {
            let w = j as f64 * h;
            let s = lam * (1.0 / (1.0 + (w - wc).powi(2)) + 1.0 / (1.0 + (w + wc).powi(2)));
            let weight = if j == n { 0.5 } else { 1.0 };
            acc += weight * s / (w * w) * (1.0 - (w * t).cos());
        }
        let freq_form = 4.0 / std::f64::consts::PI * acc * h;
        let time_form = dephasing_upsilon(&czz(lam, wc), t).unwrap();
        assert_abs_diff_eq!(time_form, freq_form, epsilon = 2e-4);
    }

    #[test]
    fn dephasing_map_cases() {
        let spec = NoiseModelSpec::pure_dephasing(0.0, czz(4.0, 2.0));
        let m0 = dephasing_map(&spec, 0, 0.2).unwrap();
        assert_eq!(m0, PauliTransferMatrix::identity(1));

        let m2 = dephasing_map(&spec, 2, 0.2).unwrap();
        let damp = (-dephasing_upsilon(&czz(4.0, 2.0), 0.4).unwrap()).exp();
        assert_abs_diff_eq!(m2.entry(1, 1), damp, epsilon = 1e-12);
        assert_abs_diff_eq!(m2.entry(2, 2), damp, epsilon = 1e-12);
        assert_abs_diff_eq!(m2.entry(1, 2), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m2.entry(3, 3), 1.0, epsilon = 1e-15);

        let bad = NoiseModelSpec::amplitude_damping(0.1);
        assert!(dephasing_map(&bad, 1, 0.2).is_err());
    }

    #[test]
    fn dephasing_maps_violate_divisibility() {
        // lam = 4, dt = 0.2, n = m = 2
        let spec = NoiseModelSpec::pure_dephasing(0.0, czz(4.0, 2.0));
        let m2 = dephasing_map(&spec, 2, 0.2).unwrap();
        let m4 = dephasing_map(&spec, 4, 0.2).unwrap();
        let product = m2.compose(&m2).unwrap();
        let defect: f64 = (0..4)
            .map(|a| (m4.entry(a, a) - product.entry(a, a)).abs())
            .fold(0.0, f64::max);
        assert!(defect > 0.05, "divisibility defect {defect} unexpectedly small");
    }

    #[test]
    fn amplitude_damping_examples() {
        assert_eq!(amplitude_damping_map(0.0).unwrap(), PauliTransferMatrix::identity(1));
        let full = amplitude_damping_map(1.0).unwrap();
        assert_eq!(full.r_diagonal(), vec![0.0, 0.0, 0.0]);
        assert_eq!(full.entry(3, 0), 1.0);
        let m = amplitude_damping_map(0.19).unwrap();
        assert_abs_diff_eq!(m.entry(1, 1), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(m.entry(2, 2), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(m.entry(3, 3), 0.81, epsilon = 1e-15);
        assert!(amplitude_damping_map(1.2).is_err());
        assert!(amplitude_damping_map(-0.2).is_err());
    }

    fn xy_model(l1: f64, l2: f64, l3: f64, wc: f64) -> NoiseModelSpec {
        NoiseModelSpec::correlated_xy(
            GaussianCorrelation::new(l1, 1.0, wc).unwrap(),
            GaussianCorrelation::new(l2, 1.0, wc).unwrap(),
            GaussianCorrelation::new(l3, 1.0, wc).unwrap(),
        )
    }

    #[test]
    fn zero_amplitude_noise_gives_zero_paths() {
        let spec = xy_model(0.0, 0.0, 0.0, 2.0);
        let grid = midpoint_grid(8, 0.05);
        let batch = sample_trajectories(&spec, &grid, 16, 3).unwrap();
        for traj in 0..16 {
            for axis in 0..2 {
                assert!(batch.path(traj, axis).iter().all(|&v| v.abs() < 1e-9));
            }
        }
    }

    #[test]
    fn sample_covariance_matches_spec_within_5_sigma() {
        let spec = xy_model(5.0, 5.0, 3.0, 2.0);
        let grid = midpoint_grid(10, 0.05);
        let batch = sample_trajectories(&spec, &grid, 20_000, 42).unwrap();
        assert!(covariance_check(&spec, &batch) < 5.0);
    }

    #[test]
    fn non_psd_covariance_is_rejected() {
        let spec = xy_model(5.0, 5.0, 6.0, 2.0);
        assert!(matches!(spec.validate(), Err(Error::NonPositiveSemidefinite { .. })));
        let grid = midpoint_grid(4, 0.05);
        match sample_trajectories(&spec, &grid, 8, 1) {
            Err(Error::NonPositiveSemidefinite { eigenvalue }) => assert!(eigenvalue < 0.0),
            other => panic!("expected PSD rejection, got {other:?}"),
        }
    }

    #[test]
    fn monte_carlo_identity_for_zero_noise() {
        let spec = xy_model(0.0, 0.0, 0.0, 2.0);
        let grid = midpoint_grid(20, 0.02);
        let batch = sample_trajectories(&spec, &grid, 120, 5).unwrap();
        let mc = monte_carlo_maps(&spec, 2, 0.2, 10, &batch).unwrap();
        assert!(mc.warnings.is_empty());
        for map in &mc.maps {
            for a in 0..4 {
                for b in 0..4 {
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(map.entry(a, b), want, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn monte_carlo_warns_on_few_trajectories() {
        let spec = xy_model(1.0, 1.0, 0.0, 2.0);
        let grid = midpoint_grid(10, 0.02);
        let batch = sample_trajectories(&spec, &grid, 10, 5).unwrap();
        let mc = monte_carlo_maps(&spec, 1, 0.2, 10, &batch).unwrap();
        assert_eq!(mc.warnings.len(), 1);
    }

    /// x-only noise with omega_s = 0 dephases the y and z axes exactly like
    /// the z-noise model dephases x and y.
    #[test]
    fn monte_carlo_matches_relabeled_dephasing_oracle() {
        let lam = 1.5;
        let spec = NoiseModelSpec {
            kind: ModelKind::CorrelatedXy,
            system_frequency: 0.0,
            couplings: Couplings {
                xx: Some(czz(lam, 2.0)),
                yy: Some(GaussianCorrelation::zero()),
                xy: Some(GaussianCorrelation::zero()),
                ..Default::default()
            },
            damping_p: 0.0,
        };
        let (m_steps, dt, substeps) = (4, 0.2, 20);
        let grid = midpoint_grid(m_steps * substeps, dt / substeps as f64);
        let batch = sample_trajectories(&spec, &grid, 20_000, 11).unwrap();
        let mc = monte_carlo_maps(&spec, m_steps, dt, substeps, &batch).unwrap();
        for (i, map) in mc.maps.iter().enumerate() {
            let t = (i + 1) as f64 * dt;
            let damp = (-dephasing_upsilon(&czz(lam, 2.0), t).unwrap()).exp();
            assert!(map.is_trace_preserving(1e-12));
            assert_abs_diff_eq!(map.entry(1, 1), 1.0, epsilon = 0.05);
            assert_abs_diff_eq!(map.entry(2, 2), damp, epsilon = 0.05);
            assert_abs_diff_eq!(map.entry(3, 3), damp, epsilon = 0.05);
        }
    }

    #[test]
    fn monte_carlo_error_scales_as_inverse_sqrt_count() {
        let lam = 1.0;
        let spec = NoiseModelSpec {
            kind: ModelKind::CorrelatedXy,
            system_frequency: 0.0,
            couplings: Couplings {
                xx: Some(czz(lam, 2.0)),
                yy: Some(GaussianCorrelation::zero()),
                xy: Some(GaussianCorrelation::zero()),
                ..Default::default()
            },
            damping_p: 0.0,
        };
        let (m_steps, dt, substeps) = (2, 0.2, 10);
        let grid = midpoint_grid(m_steps * substeps, dt / substeps as f64);
        let counts = [1_000usize, 10_000, 100_000];
        let mut errs = Vec::new();
        for &count in &counts {
            let batch = sample_trajectories(&spec, &grid, count, 9).unwrap();
            let mc = monte_carlo_maps(&spec, m_steps, dt, substeps, &batch).unwrap();
            let mut worst: f64 = 0.0;
            for (i, map) in mc.maps.iter().enumerate() {
                let t = (i + 1) as f64 * dt;
                let damp = (-dephasing_upsilon(&czz(lam, 2.0), t).unwrap()).exp();
                worst = worst.max((map.entry(2, 2) - damp).abs());
                worst = worst.max((map.entry(3, 3) - damp).abs());
            }
            errs.push(worst);
        }
        // log-log slope of error vs count should sit near -1/2
        let slope = (errs[2].ln() - errs[0].ln()) / ((counts[2] as f64).ln() - (counts[0] as f64).ln());
        assert!(
            (-0.8..=-0.25).contains(&slope),
            "Monte-Carlo convergence slope {slope} outside [-0.8, -0.25]; errors {errs:?}"
        );
    }

    #[test]
    fn decoherence_rates_vanish_for_identity_maps() {
        let maps = vec![PauliTransferMatrix::identity(1); 5];
        let rates = exact_decoherence_rates(&maps, 0.1).unwrap();
        for g in &rates.gammas {
            for v in g {
                assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn decoherence_rates_recover_dephasing_exponent() {
        // fine dt keeps the forward-difference error small
        let (lam, wc, dt, m_steps) = (1.0, 2.0, 0.02, 50);
        let spec = NoiseModelSpec::pure_dephasing(0.0, czz(lam, wc));
        let maps = dephasing_maps(&spec, m_steps, dt).unwrap();
        let rates = exact_decoherence_rates(&maps, dt).unwrap();
        // gamma_z should approximate Upsilon'(t) = 4 int_0^t C; x and y stay 0
        for n in [10usize, 25, 40] {
            let t_n = (n + 1) as f64 * dt;
            let want = dephasing_upsilon(&czz(lam, wc), t_n).unwrap();
            let got = rates.integrated[n][2];
            assert_abs_diff_eq!(got, want, epsilon = 0.05 * want.max(0.05));
            assert_abs_diff_eq!(rates.integrated[n][0], 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(rates.integrated[n][1], 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn singular_map_is_reported_with_step() {
        let mut maps = vec![PauliTransferMatrix::identity(1); 3];
        maps[1] = PauliTransferMatrix::from_eigenvalues(&[0.0, 0.0, 0.0], 1).unwrap();
        match exact_decoherence_rates(&maps, 0.1) {
            Err(Error::SingularMap { step }) => assert_eq!(step, 2),
            other => panic!("expected singular-map error, got {other:?}"),
        }
    }

}
