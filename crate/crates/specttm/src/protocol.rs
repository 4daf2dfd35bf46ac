//! Simulated measurement campaigns: signal functions built from channel
//! maps with injected SPAM errors, projective-measurement interleaving,
//! optional Pauli twirling, and optional shot noise.
//!
//! The operative circuit for one signal entry prepares a ±1 eigenstate of
//! P_μ through a noisy preparation channel, then alternates the channel
//! under test with one (single variant) or two (double variant) noisy
//! projective measurements in the P_μ basis, and finally reads out P_μ.
//! Because every measurement projects the state back onto the μ axis,
//! the per-axis signal is exactly geometric,
//!
//!   E_μ(k) = A_μ · (m_μ^r · R_μμ)^k,      r = 1 or 2,
//!
//! where m_μ is the measurement-channel eigenvalue and R_μμ the diagonal
//! entry of the channel's transfer matrix in the measurement basis. For
//! Pauli channels R_μμ are the channel eigenvalues, so combining the two
//! variants cancels SPAM exactly. Signals are summed over the N = d²−1
//! axes after taking the ± preparation difference, which removes affine
//! (non-unital) contributions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::pauli::{eigenvalues_from_f, PauliChannelSpec, PauliString, PauliTransferMatrix};
use crate::pta::TwirlBasis;
use crate::{Error, Result};

/// State preparation and measurement error model: both are Pauli channels
/// acting in whatever frame the protocol runs in.
#[derive(Debug, Clone, PartialEq)]
pub struct SpamModel {
    pub prep: PauliChannelSpec,
    pub meas: PauliChannelSpec,
    pub seed: u64,
}

impl SpamModel {
    pub fn identity(qubit_count: usize) -> Self {
        Self {
            prep: PauliChannelSpec::identity(qubit_count),
            meas: PauliChannelSpec::identity(qubit_count),
            seed: 0,
        }
    }

    /// Random one-qubit SPAM channels with f_{x,y,z} drawn uniformly from
    /// [0, strength/3] for preparation and measurement independently.
    pub fn random(strength: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&strength) {
            return Err(Error::InvalidParameter(format!(
                "SPAM strength must lie in [0, 1), got {strength}"
            )));
        }
        let draw = |stream: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let fx = rng.random::<f64>() * strength / 3.0;
            let fy = rng.random::<f64>() * strength / 3.0;
            let fz = rng.random::<f64>() * strength / 3.0;
            PauliChannelSpec::new(vec![1.0 - fx - fy - fz, fx, fy, fz])
        };
        Ok(Self { prep: draw(1)?, meas: draw(2)?, seed })
    }

    /// Measurement-channel eigenvalues m_j (diagonal of R_meas).
    pub fn meas_eigenvalues(&self) -> Vec<f64> {
        eigenvalues_from_f(&self.meas).lambdas.iter().map(|l| l.re).collect()
    }

    pub fn is_identity(&self) -> bool {
        let id = PauliChannelSpec::identity(self.prep.qubit_count());
        self.prep == id && self.meas == id
    }
}

/// Per-entry statistics mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shots {
    Exact,
    Finite(u64),
}

impl std::fmt::Display for Shots {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shots::Exact => write!(f, "exact"),
            Shots::Finite(n) => write!(f, "{n}"),
        }
    }
}

/// Pauli-twirling mode for non-Pauli channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwirlMode {
    Off,
    Exact,
    Sampled(u32),
}

impl std::fmt::Display for TwirlMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TwirlMode::Off => write!(f, "off"),
            TwirlMode::Exact => write!(f, "exact"),
            TwirlMode::Sampled(c) => write!(f, "sampled({c})"),
        }
    }
}

/// Campaign shape: memory horizon M, logical depth K, and statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub memory_steps: usize,
    pub logical_depth: usize,
    pub dt: f64,
    pub shots: Shots,
    pub twirl: TwirlMode,
    pub twirl_angles: [f64; 3],
}

impl ExperimentConfig {
    pub fn exact(memory_steps: usize, logical_depth: usize, dt: f64) -> Self {
        Self {
            memory_steps,
            logical_depth,
            dt,
            shots: Shots::Exact,
            twirl: TwirlMode::Off,
            twirl_angles: [0.0; 3],
        }
    }

    /// K must reach the matrix-pencil bound K ≥ 2N − 2 with N = d² − 1.
    pub fn validate(&self, qubit_count: usize) -> Result<()> {
        let n_axes = 4usize.pow(qubit_count as u32) - 1;
        let needed = 2 * n_axes - 2;
        if self.logical_depth < needed {
            return Err(Error::InvalidParameter(format!(
                "logical depth K = {} is below 2N-2 = {needed} for {qubit_count} qubit(s)",
                self.logical_depth
            )));
        }
        if self.memory_steps == 0 {
            return Err(Error::InvalidParameter("memory horizon M must be >= 1".into()));
        }
        if self.dt <= 0.0 {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if let TwirlMode::Sampled(0) = self.twirl {
            return Err(Error::InvalidParameter("sampled twirl needs at least one sample".into()));
        }
        Ok(())
    }
}

/// Which measurement variant produced a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Single,
    Double,
}

impl Variant {
    fn repeats(self) -> usize {
        match self {
            Variant::Single => 1,
            Variant::Double => 2,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Single => write!(f, "single"),
            Variant::Double => write!(f, "double"),
        }
    }
}

/// Reproducibility and provenance attached to every series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMeta {
    pub dt: f64,
    pub memory_steps: usize,
    pub logical_depth: usize,
    pub shots: Shots,
    pub twirl: TwirlMode,
    pub twirl_angles: [f64; 3],
    pub spam_seed: u64,
    pub shot_seed: Option<u64>,
    /// False when a map had off-diagonal R entries while twirling was off;
    /// the per-axis signals then follow diag(R) rather than eigenvalues.
    pub pauli_valid: bool,
}

/// Simulated signal values g(k) for every operational time, plus the
/// per-circuit expectation values they were assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSeries {
    pub variant: Variant,
    /// values[n-1][k-1] = g_{t_n}(k).
    pub values: Vec<Vec<f64>>,
    /// Exact per-circuit expectations, indexed by [`SignalSeries::circuit_index`].
    pub expectations: Vec<f64>,
    pub meta: SeriesMeta,
}

impl SignalSeries {
    /// g_{t_n}(k) with 1-based n and k.
    pub fn value(&self, n: usize, k: usize) -> f64 {
        self.values[n - 1][k - 1]
    }

    /// Row g_{t_n}(1..K) for one operational time (1-based n).
    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n - 1]
    }

    /// Flat index of the (n, k, axis, ±preparation) circuit; n and k are
    /// 1-based, `axis` runs over the N traceless Paulis from 0.
    pub fn circuit_index(&self, n: usize, k: usize, axis: usize, plus: bool) -> usize {
        let k_depth = self.meta.logical_depth;
        let n_axes = self.expectations.len() / (self.meta.memory_steps * k_depth * 2);
        ((((n - 1) * k_depth) + (k - 1)) * n_axes + axis) * 2 + usize::from(plus)
    }
}

/// Transfer matrix of the non-selective projective measurement in the
/// P_μ eigenbasis: keeps the Pauli components commuting with P_μ.
pub fn projective_superoperator(mu: &PauliString) -> Result<PauliTransferMatrix> {
    if mu.is_identity() {
        return Err(Error::InvalidParameter(
            "projective measurement axis must be a non-identity Pauli".into(),
        ));
    }
    let n = mu.qubit_count();
    let d2 = 4usize.pow(n as u32);
    let mut diag = Vec::with_capacity(d2 - 1);
    for nu in 1..d2 {
        let p_nu = PauliString::new(nu, n)?;
        diag.push(if p_nu.commutes_with(mu) { 1.0 } else { 0.0 });
    }
    PauliTransferMatrix::from_eigenvalues(&diag, n)
}

/// One campaign circuit family: fixed (n, axis); evaluates E(k) for all
/// k up to K in a single sweep of the chain.
struct CircuitEvaluator {
    meas_ptm: PauliTransferMatrix,
    proj: PauliTransferMatrix,
    repeats: usize,
}

impl CircuitEvaluator {
    fn sweep(
        &self,
        map: &PauliTransferMatrix,
        start: &[f64],
        axis_component: usize,
        k_depth: usize,
        mut frame: impl FnMut(&mut Vec<f64>),
    ) -> Result<Vec<f64>> {
        let d = (map.dim() as f64).sqrt();
        let mut v = start.to_vec();
        let mut out = Vec::with_capacity(k_depth);
        for _ in 0..k_depth {
            frame(&mut v);
            v = map.apply(&v)?;
            frame(&mut v);
            for _ in 0..self.repeats {
                v = self.meas_ptm.apply(&v)?;
                v = self.proj.apply(&v)?;
            }
            out.push(d * v[axis_component]);
        }
        Ok(out)
    }
}

fn check_pauli_validity(maps: &[PauliTransferMatrix]) -> bool {
    maps.iter().all(|m| {
        let dim = m.dim();
        (1..dim).all(|a| (1..dim).all(|b| a == b || m.entry(a, b).abs() < 1e-10))
    })
}

fn simulate_variant(
    maps: &[PauliTransferMatrix],
    spam: &SpamModel,
    cfg: &ExperimentConfig,
    variant: Variant,
    frame_plan: Option<&FramePlan>,
) -> Result<SignalSeries> {
    let qubit_count = maps.first().map_or(1, |m| m.qubit_count());
    cfg.validate(qubit_count)?;
    if maps.len() < cfg.memory_steps {
        return Err(Error::InvalidParameter(format!(
            "need {} maps for the requested horizon, got {}",
            cfg.memory_steps,
            maps.len()
        )));
    }
    let d2 = 4usize.pow(qubit_count as u32);
    let n_axes = d2 - 1;
    let prep_ptm = spam.prep.ptm();
    let meas_ptm = spam.meas.ptm();
    let pauli_valid = frame_plan.is_some() || check_pauli_validity(&maps[..cfg.memory_steps]);

    let mut values = vec![vec![0.0; cfg.logical_depth]; cfg.memory_steps];
    let mut expectations = vec![0.0; cfg.memory_steps * cfg.logical_depth * n_axes * 2];

    for n in 1..=cfg.memory_steps {
        let map = &maps[n - 1];
        for axis in 0..n_axes {
            let mu = PauliString::new(axis + 1, qubit_count)?;
            let eval = CircuitEvaluator {
                meas_ptm: meas_ptm.clone(),
                proj: projective_superoperator(&mu)?,
                repeats: variant.repeats(),
            };
            // prepared states (I ± P_mu)/d through the noisy preparation
            let mut base = vec![0.0; d2];
            base[0] = 1.0 / (1 << qubit_count) as f64;
            let mut axis_vec = vec![0.0; d2];
            axis_vec[axis + 1] = 1.0 / (1 << qubit_count) as f64;
            let axis_prepped = prep_ptm.apply(&axis_vec)?;

            for (pi, plus) in [false, true].into_iter().enumerate() {
                let sign = if plus { 1.0 } else { -1.0 };
                let start: Vec<f64> =
                    base.iter().zip(&axis_prepped).map(|(b, a)| b + sign * a).collect();
                let expect = match frame_plan {
                    None => eval.sweep(map, &start, axis + 1, cfg.logical_depth, |_| {})?,
                    Some(plan) => {
                        plan.averaged_sweep(&eval, map, &start, axis + 1, cfg, n, axis, plus)?
                    }
                };
                for k in 1..=cfg.logical_depth {
                    let idx = ((((n - 1) * cfg.logical_depth) + (k - 1)) * n_axes + axis) * 2 + pi;
                    expectations[idx] = expect[k - 1];
                    values[n - 1][k - 1] += sign * expect[k - 1] / 2.0;
                }
            }
        }
    }

    Ok(SignalSeries {
        variant,
        values,
        expectations,
        meta: SeriesMeta {
            dt: cfg.dt,
            memory_steps: cfg.memory_steps,
            logical_depth: cfg.logical_depth,
            shots: Shots::Exact,
            twirl: frame_plan.map_or(TwirlMode::Off, |p| p.mode),
            twirl_angles: cfg.twirl_angles,
            spam_seed: spam.seed,
            shot_seed: None,
            pauli_valid,
        },
    })
}

/// Single-measurement campaign; the per-axis poles are m_j · R_jj.
pub fn simulate_signal_single(
    maps: &[PauliTransferMatrix],
    spam: &SpamModel,
    cfg: &ExperimentConfig,
) -> Result<SignalSeries> {
    require_untwirled(cfg)?;
    simulate_variant(maps, spam, cfg, Variant::Single, None)
}

/// Double-measurement campaign; the per-axis poles are m_j² · R_jj.
pub fn simulate_signal_double(
    maps: &[PauliTransferMatrix],
    spam: &SpamModel,
    cfg: &ExperimentConfig,
) -> Result<SignalSeries> {
    require_untwirled(cfg)?;
    simulate_variant(maps, spam, cfg, Variant::Double, None)
}

fn require_untwirled(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.twirl != TwirlMode::Off {
        return Err(Error::InvalidParameter(
            "use simulate_signal_twirled when a twirl mode is configured".into(),
        ));
    }
    Ok(())
}

/// Sampled-twirl bookkeeping: how frames are inserted and averaged.
struct FramePlan {
    mode: TwirlMode,
    samples: u32,
    seed: u64,
}

impl FramePlan {
    /// Average of `samples` random Pauli-frame insertions around every
    /// channel application; each (n, axis, ±) circuit draws from its own
    /// RNG substream so evaluation order cannot matter.
    #[allow(clippy::too_many_arguments)]
    fn averaged_sweep(
        &self,
        eval: &CircuitEvaluator,
        map: &PauliTransferMatrix,
        start: &[f64],
        axis_component: usize,
        cfg: &ExperimentConfig,
        n: usize,
        axis: usize,
        plus: bool,
    ) -> Result<Vec<f64>> {
        let stream = ((n as u64) << 20) | ((axis as u64) << 4) | u64::from(plus);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let mut acc = vec![0.0; cfg.logical_depth];
        for _ in 0..self.samples {
            // one frame per channel slot, the same frame on both sides
            let frames: Vec<usize> =
                (0..cfg.logical_depth).map(|_| rng.random_range(0..4usize)).collect();
            let mut slot = 0usize;
            let mut pending: Option<usize> = None;
            let sweep = eval.sweep(map, start, axis_component, cfg.logical_depth, |v| {
                let frame = match pending.take() {
                    Some(f) => f,
                    None => {
                        let f = frames[slot];
                        slot += 1;
                        pending = Some(f);
                        f
                    }
                };
                apply_frame_signs(v, frame);
            })?;
            for (a, s) in acc.iter_mut().zip(&sweep) {
                *a += s;
            }
        }
        Ok(acc.iter().map(|a| a / f64::from(self.samples)).collect())
    }
}

/// Sign action of conjugation by P_v on one-qubit Pauli components.
fn apply_frame_signs(v: &mut [f64], frame: usize) {
    debug_assert_eq!(v.len(), 4);
    if frame == 0 {
        return;
    }
    for axis in 1..4 {
        if axis != frame {
            v[axis] = -v[axis];
        }
    }
}

/// Twirled campaign: both measurement variants with every channel
/// application replaced by its Pauli twirl in the basis given by
/// `cfg.twirl_angles`. Preparation, measurement, and SPAM channels act in
/// that same rotated frame.
pub fn simulate_signal_twirled(
    maps: &[PauliTransferMatrix],
    spam: &SpamModel,
    cfg: &ExperimentConfig,
) -> Result<(SignalSeries, SignalSeries)> {
    let basis = TwirlBasis::new(cfg.twirl_angles);
    match cfg.twirl {
        TwirlMode::Off => Err(Error::InvalidParameter(
            "twirl mode is off; use simulate_signal_single/double".into(),
        )),
        TwirlMode::Exact => {
            // analytic diagonal extraction in the rotated frame
            let twirled: Vec<PauliTransferMatrix> = maps
                .iter()
                .map(|m| basis.conjugate_into_frame(&crate::pta::twirl_channel(m, &basis)))
                .collect();
            let single = simulate_variant(&twirled, spam, cfg, Variant::Single, None)?;
            let double = simulate_variant(&twirled, spam, cfg, Variant::Double, None)?;
            Ok((single, double))
        }
        TwirlMode::Sampled(count) => {
            if count == 0 {
                return Err(Error::InvalidParameter(
                    "sampled twirl needs at least one sample".into(),
                ));
            }
            let in_frame: Vec<PauliTransferMatrix> =
                maps.iter().map(|m| basis.conjugate_into_frame(m)).collect();
            let plan = FramePlan { mode: cfg.twirl, samples: count, seed: spam.seed ^ 0x7431 };
            let single = simulate_variant(&in_frame, spam, cfg, Variant::Single, Some(&plan))?;
            let double = simulate_variant(&in_frame, spam, cfg, Variant::Double, Some(&plan))?;
            Ok((single, double))
        }
    }
}

/// Per-axis diagnostic signals R_μμ(k) without SPAM: one row per axis
/// instead of the summed g. Makes axis identification unambiguous.
pub fn per_axis_signals(
    maps: &[PauliTransferMatrix],
    k_depth: usize,
    variant: Variant,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let qubit_count = maps.first().map_or(1, |m| m.qubit_count());
    let d2 = 4usize.pow(qubit_count as u32);
    let spam = SpamModel::identity(qubit_count);
    let meas_ptm = spam.meas.ptm();
    let mut out = Vec::with_capacity(maps.len());
    for map in maps {
        let mut per_axis = Vec::with_capacity(d2 - 1);
        for axis in 0..d2 - 1 {
            let mu = PauliString::new(axis + 1, qubit_count)?;
            let eval = CircuitEvaluator {
                meas_ptm: meas_ptm.clone(),
                proj: projective_superoperator(&mu)?,
                repeats: variant.repeats(),
            };
            // traceless start = difference of the two preparations
            let mut start = vec![0.0; d2];
            start[axis + 1] = 1.0;
            let sweep = eval.sweep(map, &start, axis + 1, k_depth, |_| {})?;
            let d = (1 << qubit_count) as f64;
            per_axis.push(sweep.iter().map(|e| e / d).collect());
        }
        out.push(per_axis);
    }
    Ok(out)
}

/// Replaces exact expectations by empirical means of `shots` binomial
/// outcomes per constituent circuit. The exact expectations stay attached
/// to the series for reference.
pub fn apply_shot_noise(series: &SignalSeries, shots: Shots, seed: u64) -> SignalSeries {
    let Shots::Finite(count) = shots else {
        return series.clone();
    };
    let m_steps = series.meta.memory_steps;
    let k_depth = series.meta.logical_depth;
    let n_axes = series.expectations.len() / (m_steps * k_depth * 2);
    let mut noisy = series.clone();
    noisy.meta.shots = shots;
    noisy.meta.shot_seed = Some(seed);
    for row in &mut noisy.values {
        row.iter_mut().for_each(|v| *v = 0.0);
    }
    for n in 1..=m_steps {
        for k in 1..=k_depth {
            for axis in 0..n_axes {
                for plus in [false, true] {
                    let idx = series.circuit_index(n, k, axis, plus);
                    let expect = series.expectations[idx].clamp(-1.0, 1.0);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(idx as u64 + 1);
                    let p_up = (1.0 + expect) / 2.0;
                    let ups = Binomial::new(count, p_up)
                        .expect("probability clamped to [0, 1]")
                        .sample(&mut rng) as f64;
                    let mean = 2.0 * ups / count as f64 - 1.0;
                    let sign = if plus { 1.0 } else { -1.0 };
                    noisy.values[n - 1][k - 1] += sign * mean / 2.0;
                }
            }
        }
    }
    noisy
}

/// Number of distinct circuits in a full campaign: d(d²−1)(K+1)M.
pub fn resource_estimate(n_qubits: u32, k_depth: u64, m_steps: u64) -> u64 {
    let d = 1u64 << n_qubits;
    let d2 = d * d;
    d * (d2 - 1) * (k_depth + 1) * m_steps
}

/// Circuit count of the gate-set-tomography route, d²(d²−1)M, for
/// comparison.
pub fn gate_set_tomography_estimate(n_qubits: u32, m_steps: u64) -> u64 {
    let d = 1u64 << n_qubits;
    let d2 = d * d;
    d2 * (d2 - 1) * m_steps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{
        amplitude_damping_map, dephasing_maps, dephasing_upsilon, GaussianCorrelation,
        NoiseModelSpec,
    };
    use approx::assert_abs_diff_eq;

    fn czz(lam: f64, wc: f64) -> GaussianCorrelation {
        GaussianCorrelation::new(lam, 1.0, wc).unwrap()
    }

    #[test]
    fn projective_measurement_examples() {
        let z = PauliString::new(3, 1).unwrap();
        let mz = projective_superoperator(&z).unwrap();
        assert_eq!(mz.apply(&[1.0, 0.4, -0.3, 0.7]).unwrap(), vec![1.0, 0.0, 0.0, 0.7]);

        let x = PauliString::new(1, 1).unwrap();
        let mx = projective_superoperator(&x).unwrap();
        assert_eq!(mx.apply(&[1.0, 0.4, -0.3, 0.7]).unwrap(), vec![1.0, 0.4, 0.0, 0.0]);

        for mu in 1..4 {
            let p = PauliString::new(mu, 1).unwrap();
            let m = projective_superoperator(&p).unwrap();
            assert_eq!(m.compose(&m).unwrap(), m);
        }

        let id = PauliString::new(0, 1).unwrap();
        assert!(projective_superoperator(&id).is_err());
    }

    #[test]
    fn identity_channel_without_spam_gives_n() {
        let maps = vec![PauliTransferMatrix::identity(1); 3];
        let cfg = ExperimentConfig::exact(3, 6, 0.2);
        let spam = SpamModel::identity(1);
        for series in [
            simulate_signal_single(&maps, &spam, &cfg).unwrap(),
            simulate_signal_double(&maps, &spam, &cfg).unwrap(),
        ] {
            for n in 1..=3 {
                for k in 1..=6 {
                    assert_abs_diff_eq!(series.value(n, k), 3.0, epsilon = 1e-13);
                }
            }
            assert!(series.meta.pauli_valid);
        }
    }

    #[test]
    fn dephasing_signals_follow_pole_sum() {
        let spec = NoiseModelSpec::pure_dephasing(0.0, czz(1.0, 2.0));
        let (m_steps, dt, k_depth) = (4, 0.2, 8);
        let maps = dephasing_maps(&spec, m_steps, dt).unwrap();
        let cfg = ExperimentConfig::exact(m_steps, k_depth, dt);
        let series = simulate_signal_single(&maps, &SpamModel::identity(1), &cfg).unwrap();
        for n in 1..=m_steps {
            let ups = dephasing_upsilon(&czz(1.0, 2.0), n as f64 * dt).unwrap();
            for k in 1..=k_depth {
                let want = 1.0 + 2.0 * (-(k as f64) * ups).exp();
                assert_abs_diff_eq!(series.value(n, k), want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn measurement_errors_scale_poles_per_axis() {
        // meas eigenvalues (0.95, 0.95, 0.98)
        let meas = crate::pauli::f_from_eigenvalues(&crate::pauli::ChannelSpectrum::from_real(
            &[0.95, 0.95, 0.98],
        ))
        .unwrap();
        let m = eigenvalues_from_f(&meas);
        assert_abs_diff_eq!(m.lambdas[0].re, 0.95, epsilon = 1e-15);
        assert_abs_diff_eq!(m.lambdas[2].re, 0.98, epsilon = 1e-15);
        let spam = SpamModel { prep: PauliChannelSpec::identity(1), meas, seed: 0 };

        let spec = NoiseModelSpec::pure_dephasing(0.0, czz(1.0, 2.0));
        let (m_steps, dt, k_depth) = (2, 0.2, 8);
        let maps = dephasing_maps(&spec, m_steps, dt).unwrap();
        let cfg = ExperimentConfig::exact(m_steps, k_depth, dt);
        let series = simulate_signal_single(&maps, &spam, &cfg).unwrap();
        for n in 1..=m_steps {
            let damp = (-dephasing_upsilon(&czz(1.0, 2.0), n as f64 * dt).unwrap()).exp();
            for k in 1..=k_depth {
                let want = (0.98f64).powi(k as i32) + 2.0 * (0.95 * damp).powi(k as i32);
                assert_abs_diff_eq!(series.value(n, k), want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn double_variant_squares_measurement_eigenvalues() {
        // toy: lambda = 0.5 on every axis with m = 0.9 -> double pole 0.405
        let meas = crate::pauli::f_from_eigenvalues(&crate::pauli::ChannelSpectrum::from_real(&[
            0.9, 0.9, 0.9,
        ]))
        .unwrap();
        let spam = SpamModel { prep: PauliChannelSpec::identity(1), meas, seed: 0 };
        let map = PauliTransferMatrix::from_eigenvalues(&[0.5, 0.5, 0.5], 1).unwrap();
        let cfg = ExperimentConfig::exact(1, 6, 0.2);
        let series = simulate_signal_double(&[map], &spam, &cfg).unwrap();
        for k in 1..=6 {
            assert_abs_diff_eq!(series.value(1, k), 3.0 * 0.405f64.powi(k as i32), epsilon = 1e-12);
        }

        // without SPAM the two variants coincide
        let map = PauliTransferMatrix::from_eigenvalues(&[0.7, 0.6, 0.9], 1).unwrap();
        let clean = SpamModel::identity(1);
        let s = simulate_signal_single(std::slice::from_ref(&map), &clean, &cfg).unwrap();
        let d = simulate_signal_double(&[map], &clean, &cfg).unwrap();
        assert_eq!(s.values, d.values);
    }

    #[test]
    fn per_axis_signals_obey_power_identity() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..25 {
            let mut f: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let total: f64 = f.iter().sum();
            f.iter_mut().for_each(|x| *x /= total);
            let s: f64 = f.iter().sum();
            f[0] += 1.0 - s;
            let chan = PauliChannelSpec::new(f).unwrap();
            let map = chan.ptm();
            let rows = per_axis_signals(&[map], 8, Variant::Single).unwrap();
            for axis in 0..3 {
                let r1 = rows[0][axis][0];
                for k in 1..=8 {
                    assert_abs_diff_eq!(rows[0][axis][k - 1], r1.powi(k as i32), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn unital_channels_balance_opposite_preparations() {
        let map = PauliTransferMatrix::from_eigenvalues(&[0.8, -0.5, 0.65], 1).unwrap();
        let cfg = ExperimentConfig::exact(1, 5, 0.1);
        let series = simulate_signal_single(&[map], &SpamModel::identity(1), &cfg).unwrap();
        for k in 1..=5 {
            for axis in 0..3 {
                let e_plus = series.expectations[series.circuit_index(1, k, axis, true)];
                let e_minus = series.expectations[series.circuit_index(1, k, axis, false)];
                assert_abs_diff_eq!(e_plus + e_minus, 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn affine_shift_cancels_in_preparation_difference() {
        let map = amplitude_damping_map(0.3).unwrap();
        let cfg = ExperimentConfig::exact(1, 8, 0.1);
        let series = simulate_signal_single(&[map], &SpamModel::identity(1), &cfg).unwrap();
        let root = 0.7f64.sqrt();
        for k in 1..=8 {
            let want = 2.0 * root.powi(k as i32) + 0.7f64.powi(k as i32);
            assert_abs_diff_eq!(series.value(1, k), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn shot_noise_modes() {
        let maps = vec![PauliTransferMatrix::identity(1); 2];
        let cfg = ExperimentConfig::exact(2, 6, 0.2);
        let series = simulate_signal_single(&maps, &SpamModel::identity(1), &cfg).unwrap();

        let unchanged = apply_shot_noise(&series, Shots::Exact, 7);
        assert_eq!(unchanged.values, series.values);

        let noisy = apply_shot_noise(&series, Shots::Finite(1_000_000), 7);
        for n in 1..=2 {
            for k in 1..=6 {
                assert!((noisy.value(n, k) - 3.0).abs() < 0.01);
            }
        }
        // reproducible
        let again = apply_shot_noise(&series, Shots::Finite(1_000_000), 7);
        assert_eq!(noisy.values, again.values);
        // exact expectations stay attached
        assert_eq!(noisy.expectations, series.expectations);
    }

    #[test]
    fn shot_noise_variance_shrinks_with_shots() {
        let map = PauliTransferMatrix::from_eigenvalues(&[0.6, 0.6, 0.8], 1).unwrap();
        let cfg = ExperimentConfig::exact(1, 4, 0.2);
        let series = simulate_signal_single(&[map], &SpamModel::identity(1), &cfg).unwrap();
        let spread = |shots: u64| -> f64 {
            let mut acc = 0.0;
            let reps = 60;
            for seed in 0..reps {
                let noisy = apply_shot_noise(&series, Shots::Finite(shots), seed);
                acc += (noisy.value(1, 1) - series.value(1, 1)).powi(2);
            }
            acc / reps as f64
        };
        let v_small = spread(100);
        let v_large = spread(10_000);
        let ratio = v_small / v_large;
        assert!(
            (20.0..500.0).contains(&ratio),
            "variance ratio {ratio} not consistent with 1/shots scaling"
        );
    }

    #[test]
    fn resource_counting_examples() {
        assert_eq!(resource_estimate(1, 10, 8), 528);
        assert_eq!(resource_estimate(1, 4, 1), 30);
        assert_eq!(gate_set_tomography_estimate(1, 8), 96);
    }

    #[test]
    fn twirl_exact_fixes_pauli_channels_at_zero_angles() {
        let map = PauliTransferMatrix::from_eigenvalues(&[0.7, 0.5, 0.9], 1).unwrap();
        let mut cfg = ExperimentConfig::exact(1, 6, 0.2);
        let plain = simulate_signal_single(std::slice::from_ref(&map), &SpamModel::identity(1), &cfg).unwrap();
        cfg.twirl = TwirlMode::Exact;
        let (single, _) = simulate_signal_twirled(&[map], &SpamModel::identity(1), &cfg).unwrap();
        for (a, b) in plain.values.iter().flatten().zip(single.values.iter().flatten()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn twirled_signal_poles_equal_r_diagonal() {
        // map with off-diagonal R: rotation-damping block in x-y
        let phi: f64 = 0.5;
        let damp = 0.8;
        let mut m = nalgebra::DMatrix::zeros(4, 4);
        m[(0, 0)] = 1.0;
        m[(3, 3)] = 0.9;
        m[(1, 1)] = damp * phi.cos();
        m[(1, 2)] = damp * phi.sin();
        m[(2, 1)] = -damp * phi.sin();
        m[(2, 2)] = damp * phi.cos();
        let map = PauliTransferMatrix::from_matrix(m, 1).unwrap();
        let mut cfg = ExperimentConfig::exact(1, 6, 0.2);
        cfg.twirl = TwirlMode::Exact;
        let (single, _) =
            simulate_signal_twirled(std::slice::from_ref(&map), &SpamModel::identity(1), &cfg).unwrap();
        let want: f64 = (damp * phi.cos()).powi(2) * 2.0 + 0.9f64.powi(2);
        assert_abs_diff_eq!(single.value(1, 2), want, epsilon = 1e-12);
    }

    #[test]
    fn sampled_twirl_is_self_averaging_for_unital_maps() {
        // projective interleaving already pins the state to the measured
        // axis, so correlated frame signs square away for unital channels
        let phi: f64 = 0.4;
        let mut m = nalgebra::DMatrix::zeros(4, 4);
        m[(0, 0)] = 1.0;
        m[(3, 3)] = 0.85;
        m[(1, 1)] = 0.9 * phi.cos();
        m[(1, 2)] = 0.9 * phi.sin();
        m[(2, 1)] = -0.9 * phi.sin();
        m[(2, 2)] = 0.9 * phi.cos();
        let map = PauliTransferMatrix::from_matrix(m, 1).unwrap();
        let mut cfg = ExperimentConfig::exact(1, 5, 0.2);
        cfg.twirl = TwirlMode::Exact;
        let (exact, _) =
            simulate_signal_twirled(std::slice::from_ref(&map), &SpamModel::identity(1), &cfg).unwrap();
        cfg.twirl = TwirlMode::Sampled(3);
        let (sampled, _) =
            simulate_signal_twirled(&[map], &SpamModel::identity(1), &cfg).unwrap();
        for (a, b) in exact.values.iter().flatten().zip(sampled.values.iter().flatten()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sampled_twirl_converges_for_non_unital_maps() {
        let map = amplitude_damping_map(0.4).unwrap();
        let mut cfg = ExperimentConfig::exact(1, 5, 0.2);
        cfg.twirl = TwirlMode::Exact;
        let (exact, _) =
            simulate_signal_twirled(std::slice::from_ref(&map), &SpamModel::identity(1), &cfg).unwrap();

        let deviation = |samples: u32| -> f64 {
            let mut c = cfg.clone();
            c.twirl = TwirlMode::Sampled(samples);
            let (s, _) =
                simulate_signal_twirled(std::slice::from_ref(&map), &SpamModel::identity(1), &c).unwrap();
            s.values
                .iter()
                .flatten()
                .zip(exact.values.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let coarse = deviation(8);
        let fine = deviation(2048);
        assert!(coarse > 1e-6, "non-unital sampled twirl should fluctuate, got {coarse}");
        assert!(fine < coarse, "sampled twirl should converge: {fine} !< {coarse}");
    }

    #[test]
    fn series_are_reproducible() {
        let spec = NoiseModelSpec::pure_dephasing(0.1, czz(4.0, 2.0));
        let maps = dephasing_maps(&spec, 3, 0.2).unwrap();
        let spam = SpamModel::random(0.05, 17).unwrap();
        let cfg = ExperimentConfig::exact(3, 8, 0.2);
        let a = simulate_signal_single(&maps, &spam, &cfg).unwrap();
        let b = simulate_signal_single(&maps, &spam, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation_catches_small_k() {
        let cfg = ExperimentConfig::exact(3, 2, 0.2);
        assert!(cfg.validate(1).is_err());
        let cfg = ExperimentConfig::exact(0, 8, 0.2);
        assert!(cfg.validate(1).is_err());
    }
}
