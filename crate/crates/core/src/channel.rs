//! Uplink multiple-access fading channel with analog over-the-air
//! aggregation: payload packing, Rayleigh fading with distance-based path
//! loss, channel-inversion precoding, superposition with AWGN, denoising and
//! server-side positive-definite post-processing.
//!
//! Everything here is a pure function of (config, inputs, rng); concurrent
//! trials just use independent streams.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bandit::SyncState;
use crate::error::{Error, Result};

/// Physical-layer configuration. Powers are in watts; distances in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// Per-slot transmit power budget P0.
    pub transmit_power: f64,
    /// AWGN variance sigma_n^2; zero means a noiseless (error-free) channel.
    pub noise_variance: f64,
    /// Reference channel power gain G0 at the reference distance.
    pub path_loss_ref_gain: f64,
    /// Path-loss exponent applied to the amplitude gain.
    pub path_loss_exponent: f64,
    /// Reference distance k0.
    pub reference_distance: f64,
    /// Cell radius R; device distances must lie in (0, R].
    pub cell_radius: f64,
}

impl ChannelConfig {
    /// Builds a config from a transmit power in dBm and an SNR in dB, deriving
    /// the noise variance as `P0 / SNR`.
    pub fn from_db(
        p0_dbm: f64,
        snr_db: f64,
        ref_gain: f64,
        exponent: f64,
        reference_distance: f64,
        cell_radius: f64,
    ) -> Result<Self> {
        let transmit_power = dbm_to_watts(p0_dbm);
        let snr = 10f64.powf(snr_db / 10.0);
        let cfg = ChannelConfig {
            transmit_power,
            noise_variance: transmit_power / snr,
            path_loss_ref_gain: ref_gain,
            path_loss_exponent: exponent,
            reference_distance,
            cell_radius,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Noiseless configuration: identical channel pipeline, zero AWGN.
    pub fn error_free(
        p0_dbm: f64,
        ref_gain: f64,
        exponent: f64,
        reference_distance: f64,
        cell_radius: f64,
    ) -> Result<Self> {
        let cfg = ChannelConfig {
            transmit_power: dbm_to_watts(p0_dbm),
            noise_variance: 0.0,
            path_loss_ref_gain: ref_gain,
            path_loss_exponent: exponent,
            reference_distance,
            cell_radius,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.transmit_power <= 0.0
            || self.noise_variance < 0.0
            || self.path_loss_ref_gain <= 0.0
            || self.path_loss_exponent <= 0.0
            || self.reference_distance <= 0.0
            || self.cell_radius <= 0.0
        {
            return Err(Error::InvalidArgument(
                "channel config fields must be positive (noise variance may be zero)".into(),
            ));
        }
        Ok(())
    }

    /// Realized SNR in dB, `None` for the noiseless configuration.
    pub fn snr_db(&self) -> Option<f64> {
        if self.noise_variance == 0.0 {
            None
        } else {
            Some(10.0 * (self.transmit_power / self.noise_variance).log10())
        }
    }

    /// Large-scale amplitude gain `sqrt(G0) * (k/k0)^-zeta` at distance `k`.
    pub fn path_amplitude(&self, distance: f64) -> Result<f64> {
        if distance <= 0.0 || distance > self.cell_radius {
            return Err(Error::InvalidArgument(format!(
                "distance {distance} outside (0, {}]",
                self.cell_radius
            )));
        }
        Ok(self.path_loss_ref_gain.sqrt()
            * (distance / self.reference_distance).powf(-self.path_loss_exponent))
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Number of transmission slots for dimension `d`: the Gram upper triangle
/// plus the reward vector, `(d^2 + 3d) / 2`.
pub fn payload_len(dimension: usize) -> usize {
    (dimension * dimension + 3 * dimension) / 2
}

/// One device's analog transmission block: the upper triangle of its local
/// Gram matrix (row-major, diagonal included) followed by its reward vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    slots: Vec<f64>,
}

impl Payload {
    pub fn from_slots(slots: Vec<f64>) -> Self {
        Payload { slots }
    }

    pub fn slots(&self) -> &[f64] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.slots.iter().map(|s| s * s).sum()
    }
}

/// Packs a symmetric matrix and a vector into one payload.
pub fn pack(gram: &DMatrix<f64>, vec: &DVector<f64>) -> Result<Payload> {
    let d = gram.nrows();
    if gram.ncols() != d || vec.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: vec.len().max(gram.ncols()),
        });
    }
    let mut max_delta = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            max_delta = max_delta.max((gram[(i, j)] - gram[(j, i)]).abs());
        }
    }
    if max_delta > 1e-12 {
        return Err(Error::NotSymmetric { max_delta });
    }
    let mut slots = Vec::with_capacity(payload_len(d));
    for i in 0..d {
        for j in i..d {
            slots.push(gram[(i, j)]);
        }
    }
    slots.extend(vec.iter().copied());
    Ok(Payload { slots })
}

/// Inverse of [`pack`]: mirrors the upper triangle back into a symmetric
/// matrix. Off-diagonal noise therefore appears symmetrically, not
/// independently per side.
pub fn unpack(payload: &Payload, dimension: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let expected = payload_len(dimension);
    if payload.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: payload.len(),
        });
    }
    let mut gram = DMatrix::zeros(dimension, dimension);
    let mut k = 0;
    for i in 0..dimension {
        for j in i..dimension {
            gram[(i, j)] = payload.slots[k];
            gram[(j, i)] = payload.slots[k];
            k += 1;
        }
    }
    let vec = DVector::from_row_slice(&payload.slots[k..]);
    Ok((gram, vec))
}

/// Draws block flat-fading coefficients `h_i = L(k_i) * h'_i` with `h'_i`
/// standard circularly-symmetric complex Gaussian.
pub fn draw_channel<R: Rng>(
    cfg: &ChannelConfig,
    distances: &[f64],
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(distances.len());
    for &k in distances {
        let amp = cfg.path_amplitude(k)?;
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        // CN(0,1): each component has variance 1/2.
        out.push(Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2 * amp);
    }
    Ok(out)
}

/// Denoising factor: the minimum feasible power ratio across devices,
/// `min_i |h_i|^2 * slots * P0 / ||payload_i||^2`. Devices with zero payload
/// are excluded; if every payload is zero the factor is 1 (the content is
/// noiseless anyway).
pub fn denoising_factor(
    cfg: &ChannelConfig,
    coefficients: &[Complex64],
    payloads: &[Payload],
) -> Result<f64> {
    Ok(denoising_argmin(cfg, coefficients, payloads)?.0)
}

fn denoising_argmin(
    cfg: &ChannelConfig,
    coefficients: &[Complex64],
    payloads: &[Payload],
) -> Result<(f64, Option<usize>)> {
    if coefficients.len() != payloads.len() || payloads.is_empty() {
        return Err(Error::InvalidArgument(
            "coefficients and payloads must be nonempty and equal-length".into(),
        ));
    }
    let slots = payloads[0].len();
    if payloads.iter().any(|p| p.len() != slots) {
        return Err(Error::InvalidArgument("payload lengths differ".into()));
    }
    let budget = slots as f64 * cfg.transmit_power;
    let mut best: Option<(f64, usize)> = None;
    for (i, (h, p)) in coefficients.iter().zip(payloads).enumerate() {
        let gain = h.norm_sqr();
        if gain == 0.0 {
            return Err(Error::DeepFadeSingularity { device: i });
        }
        let norm = p.norm_sqr();
        if norm == 0.0 {
            continue;
        }
        let ratio = gain * budget / norm;
        if best.is_none_or(|(b, _)| ratio < b) {
            best = Some((ratio, i));
        }
    }
    Ok(match best {
        Some((rho, i)) => (rho, Some(i)),
        None => (1.0, None),
    })
}

/// Per-synchronization channel realization: fading coefficients, the common
/// denoising factor, and the channel-inversion precoders
/// `alpha_i = sqrt(rho) * conj(h_i) / |h_i|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBlock {
    pub coefficients: Vec<Complex64>,
    pub denoising_factor: f64,
    pub precoders: Vec<Complex64>,
    /// Device index attaining the minimum in the denoising factor, if any
    /// payload was nonzero.
    pub argmin_device: Option<usize>,
    /// Coefficients whose power fell below the deep-fade floor. Channel
    /// inversion is still applied (no truncation); this is observability only.
    pub deep_fade_events: usize,
}

impl ChannelBlock {
    pub fn new(
        cfg: &ChannelConfig,
        coefficients: Vec<Complex64>,
        payloads: &[Payload],
        deep_fade_floor: f64,
    ) -> Result<Self> {
        let (rho, argmin_device) = denoising_argmin(cfg, &coefficients, payloads)?;
        let sqrt_rho = rho.sqrt();
        let precoders: Vec<Complex64> = coefficients
            .iter()
            .map(|h| h.conj() / h.norm_sqr() * sqrt_rho)
            .collect();
        let deep_fade_events = coefficients
            .iter()
            .filter(|h| h.norm_sqr() < deep_fade_floor)
            .count();
        Ok(ChannelBlock {
            coefficients,
            denoising_factor: rho,
            precoders,
            argmin_device,
            deep_fade_events,
        })
    }

    /// Ratio of each device's transmit energy to its budget:
    /// `||alpha_i * payload_i||^2 / (slots * P0)`. At most 1 by construction,
    /// with equality for the argmin device.
    pub fn power_ratios(&self, cfg: &ChannelConfig, payloads: &[Payload]) -> Vec<f64> {
        let budget = payloads.first().map_or(0.0, |p| p.len() as f64) * cfg.transmit_power;
        self.precoders
            .iter()
            .zip(payloads)
            .map(|(a, p)| a.norm_sqr() * p.norm_sqr() / budget)
            .collect()
    }
}

/// Superposition over the air: every device transmits simultaneously, the
/// server receives the faded sum plus AWGN, divides by `sqrt(rho)` and keeps
/// the real part. With channel inversion the result is `sum_i payload_i`
/// plus i.i.d. real noise of variance `sigma_n^2 / rho`.
pub fn aircomp_aggregate<R: Rng>(
    cfg: &ChannelConfig,
    block: &ChannelBlock,
    payloads: &[Payload],
    rng: &mut R,
) -> Result<Payload> {
    if payloads.len() != block.precoders.len() || payloads.is_empty() {
        return Err(Error::InvalidArgument(
            "payloads inconsistent with channel block".into(),
        ));
    }
    let slots = payloads[0].len();
    let sqrt_rho = block.denoising_factor.sqrt();
    // Effective per-device gain h_i * alpha_i (= sqrt(rho) under inversion).
    let gains: Vec<Complex64> = block
        .coefficients
        .iter()
        .zip(&block.precoders)
        .map(|(h, a)| h * a)
        .collect();
    let sigma_n = cfg.noise_variance.sqrt();
    let mut out = Vec::with_capacity(slots);
    for k in 0..slots {
        let mut acc = Complex64::new(0.0, 0.0);
        for (gain, p) in gains.iter().zip(payloads) {
            acc += gain * p.slots[k];
        }
        if sigma_n > 0.0 {
            // Complex AWGN with per-component variance sigma_n^2, so the
            // retained real part has variance sigma_n^2 / rho after division.
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            acc += Complex64::new(re * sigma_n, im * sigma_n);
        }
        out.push((acc / sqrt_rho).re);
    }
    Ok(Payload { slots: out })
}

/// Server-side policy for turning the received (possibly indefinite) Gram
/// estimate into a positive-definite matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShiftPolicy {
    /// Minimal perturbation: raise the minimum eigenvalue to `epsilon` by
    /// adding `(epsilon - lambda_min) * I` when needed.
    EigenFloor { epsilon: f64 },
    /// Fixed additive shift `shift * I` (a spectral-norm estimate of the
    /// noise), followed by the epsilon floor as a safety net.
    FixedShift { shift: f64, epsilon: f64 },
}

impl Default for ShiftPolicy {
    fn default() -> Self {
        ShiftPolicy::EigenFloor { epsilon: 1e-6 }
    }
}

/// Post-processes the aggregated Gram matrix and reward vector into a
/// broadcastable state with a positive-definite Gram.
///
/// The configured epsilon is widened to `1e-12 * spectral norm` when the
/// received matrix is huge (deep fades can blow the effective noise up by
/// many orders of magnitude); otherwise the result, while mathematically
/// positive definite, is too ill-conditioned for downstream f64 Cholesky
/// factorizations.
pub fn server_postprocess(
    raw_gram: DMatrix<f64>,
    raw_vec: DVector<f64>,
    policy: ShiftPolicy,
) -> SyncState {
    let mut gram = raw_gram;
    let epsilon = match policy {
        ShiftPolicy::EigenFloor { epsilon } => epsilon,
        ShiftPolicy::FixedShift { shift, epsilon } => {
            for i in 0..gram.nrows() {
                gram[(i, i)] += shift;
            }
            epsilon
        }
    };
    let eigs = gram.symmetric_eigenvalues();
    let mut min_eig = f64::INFINITY;
    let mut spectral = 0.0f64;
    for &l in eigs.iter() {
        min_eig = min_eig.min(l);
        spectral = spectral.max(l.abs());
    }
    let epsilon = epsilon.max(1e-12 * spectral);
    if min_eig < epsilon {
        let shift = epsilon - min_eig;
        for i in 0..gram.nrows() {
            gram[(i, i)] += shift;
        }
    }
    SyncState {
        gram,
        reward_vec: raw_vec,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn test_cfg(noise_variance: f64) -> ChannelConfig {
        ChannelConfig {
            transmit_power: 0.2,
            noise_variance,
            path_loss_ref_gain: 10f64.powf(-3.35),
            path_loss_exponent: 2.0,
            reference_distance: 1.0,
            cell_radius: 500.0,
        }
    }

    #[test]
    fn snr_consistency_from_db() {
        let cfg = ChannelConfig::from_db(23.0, 30.0, 1e-3, 2.0, 1.0, 500.0).unwrap();
        assert!((cfg.snr_db().unwrap() - 30.0).abs() < 1e-12);
        assert!((cfg.transmit_power - 0.199_526_231_496_887_9).abs() < 1e-12);
        assert_eq!(test_cfg(0.0).snr_db(), None);
    }

    #[test]
    fn pack_hand_example() {
        let gram = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        let vec = DVector::from_vec(vec![4.0, 5.0]);
        let p = pack(&gram, &vec).unwrap();
        assert_eq!(p.slots(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn payload_length_formula() {
        assert_eq!(payload_len(10), 65);
        assert_eq!(payload_len(2), 5);
        let gram = DMatrix::<f64>::identity(10, 10);
        let vec = DVector::zeros(10);
        assert_eq!(pack(&gram, &vec).unwrap().len(), 65);
    }

    #[test]
    fn pack_rejects_asymmetric() {
        let gram = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 3.0]);
        let vec = DVector::zeros(2);
        assert!(matches!(
            pack(&gram, &vec),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn unpack_hand_example_and_zero() {
        let p = Payload::from_slots(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let (gram, vec) = unpack(&p, 2).unwrap();
        assert_eq!(gram, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
        assert_eq!(vec, DVector::from_vec(vec![4.0, 5.0]));

        let zero = Payload::from_slots(vec![0.0; 5]);
        let (gram, vec) = unpack(&zero, 2).unwrap();
        assert_eq!(gram.norm(), 0.0);
        assert_eq!(vec.norm(), 0.0);

        assert!(unpack(&Payload::from_slots(vec![0.0; 4]), 2).is_err());
    }

    #[test]
    fn unpack_mirrors_noise_symmetrically() {
        let p = Payload::from_slots(vec![0.1, 0.7, -0.3, 0.0, 0.0]);
        let (gram, _) = unpack(&p, 2).unwrap();
        assert_eq!(gram[(0, 1)], gram[(1, 0)]);
    }

    #[test]
    fn path_amplitude_reference_and_exponent_law() {
        let cfg = test_cfg(0.0);
        // At the reference distance the amplitude is sqrt(G0) = 10^-1.675.
        let amp = cfg.path_amplitude(1.0).unwrap();
        assert!((amp - 0.021_134_890_398_366_465).abs() < 1e-15);
        // zeta = 2: ten times the distance scales the amplitude by 10^-2.
        let far = cfg.path_amplitude(10.0).unwrap();
        assert!((far / amp - 1e-2).abs() < 1e-12);
        assert!(cfg.path_amplitude(0.0).is_err());
        assert!(cfg.path_amplitude(501.0).is_err());
    }

    // chi^2 concentration oracle: E|h'|^2 = 1, Var(|h'|^2) = 1, so the sample
    // mean over n draws lies within 3/sqrt(n) of 1.
    #[test]
    fn small_scale_fading_is_unit_power() {
        let cfg = test_cfg(0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let n = 100_000;
        let distances = vec![cfg.reference_distance; n];
        let coeffs = draw_channel(&cfg, &distances, &mut rng).unwrap();
        let amp = cfg.path_amplitude(cfg.reference_distance).unwrap();
        let mean: f64 =
            coeffs.iter().map(|h| h.norm_sqr() / (amp * amp)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn denoising_balanced_and_min_law() {
        let cfg = test_cfg(0.0);
        // Balanced: |h|^2 = 1 and budget = ||p||^2 -> rho = 1.
        let p = Payload::from_slots(vec![cfg.transmit_power.sqrt(); 1]);
        let h = vec![Complex64::new(1.0, 0.0)];
        let rho = denoising_factor(&cfg, &h, std::slice::from_ref(&p)).unwrap();
        assert!((rho - 1.0).abs() < 1e-12);

        // Two devices with ratios 4 and 9 -> min picks 4.
        let budget = 1.0 * cfg.transmit_power;
        let p1 = Payload::from_slots(vec![(budget / 4.0).sqrt()]);
        let p2 = Payload::from_slots(vec![(budget / 9.0).sqrt()]);
        let hs = vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)];
        let rho = denoising_factor(&cfg, &hs, &[p1, p2]).unwrap();
        assert!((rho - 4.0).abs() < 1e-9);

        // All-zero payloads fall back to the sentinel.
        let z = Payload::from_slots(vec![0.0]);
        assert_eq!(
            denoising_factor(&cfg, &hs, &[z.clone(), z]).unwrap(),
            1.0
        );

        // Exactly zero coefficient is a singularity.
        let hz = vec![Complex64::new(0.0, 0.0)];
        let p = Payload::from_slots(vec![1.0]);
        assert!(matches!(
            denoising_factor(&cfg, &hz, &[p]),
            Err(Error::DeepFadeSingularity { device: 0 })
        ));
    }

    #[test]
    fn power_constraint_tight_at_argmin() {
        let cfg = test_cfg(1e-4);
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let distances = [5.0, 120.0, 430.0];
        let coeffs = draw_channel(&cfg, &distances, &mut rng).unwrap();
        let payloads: Vec<Payload> = (0..3)
            .map(|i| {
                Payload::from_slots(
                    (0..6)
                        .map(|k| ((i + 1) as f64) * 0.3 + 0.1 * k as f64)
                        .collect(),
                )
            })
            .collect();
        let block = ChannelBlock::new(&cfg, coeffs, &payloads, 0.0).unwrap();
        let ratios = block.power_ratios(&cfg, &payloads);
        for &r in &ratios {
            assert!(r <= 1.0 + 1e-9, "ratio {r}");
        }
        let argmin = block.argmin_device.unwrap();
        assert!((ratios[argmin] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn aggregate_noiseless_superposition() {
        let cfg = test_cfg(0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let distances = [10.0, 200.0];
        let coeffs = draw_channel(&cfg, &distances, &mut rng).unwrap();
        let p = Payload::from_slots(vec![0.4, -0.2, 1.5]);
        let payloads = vec![p.clone(), p.clone()];
        let block = ChannelBlock::new(&cfg, coeffs, &payloads, 0.0).unwrap();
        let out = aircomp_aggregate(&cfg, &block, &payloads, &mut rng).unwrap();
        for (got, want) in out.slots().iter().zip(p.slots()) {
            assert!((got - 2.0 * want).abs() <= 1e-10 * want.abs().max(1.0));
        }
    }

    // Unbiasedness oracle: with fixed payloads and fading, the mean over
    // noise draws approaches the true sum at rate sigma_t / sqrt(n).
    #[test]
    fn aggregate_unbiased_under_noise() {
        let cfg = test_cfg(1e-3);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let distances = [50.0, 300.0];
        let coeffs = draw_channel(&cfg, &distances, &mut rng).unwrap();
        let p1 = Payload::from_slots(vec![0.5, 1.0, -0.7, 0.0]);
        let p2 = Payload::from_slots(vec![-0.1, 0.4, 0.2, 0.9]);
        let payloads = vec![p1.clone(), p2.clone()];
        let block = ChannelBlock::new(&cfg, coeffs, &payloads, 0.0).unwrap();
        let sigma_t = (cfg.noise_variance / block.denoising_factor).sqrt();
        let n = 10_000;
        let mut sums = [0.0; 4];
        for _ in 0..n {
            let out = aircomp_aggregate(&cfg, &block, &payloads, &mut rng).unwrap();
            for (s, v) in sums.iter_mut().zip(out.slots()) {
                *s += v;
            }
        }
        for (k, s) in sums.iter().enumerate() {
            let mean = s / n as f64;
            let want = p1.slots()[k] + p2.slots()[k];
            let band = 3.0 * sigma_t / (n as f64).sqrt();
            assert!((mean - want).abs() <= band, "slot {k}: {mean} vs {want}");
        }
    }

    #[test]
    fn postprocess_keeps_pd_input() {
        let gram = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let vec = DVector::from_vec(vec![1.0, 1.0]);
        let out = server_postprocess(gram.clone(), vec.clone(), ShiftPolicy::default());
        assert_eq!(out.gram, gram);
        assert_eq!(out.reward_vec, vec);
    }

    #[test]
    fn postprocess_floors_minimum_eigenvalue() {
        let gram = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        let out = server_postprocess(
            gram,
            DVector::zeros(2),
            ShiftPolicy::EigenFloor { epsilon: 1e-6 },
        );
        let eigs = out.gram.symmetric_eigenvalues();
        let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min - 1e-6).abs() < 1e-12, "min eig {min}");
        // Shift is a multiple of I: off-diagonals untouched.
        assert_eq!(out.gram[(0, 1)], 0.0);
        assert!((out.gram[(0, 0)] - (1.0 + 0.5 + 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn postprocess_fixed_shift_variant() {
        let gram = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        let out = server_postprocess(
            gram,
            DVector::zeros(2),
            ShiftPolicy::FixedShift {
                shift: 2.0,
                epsilon: 1e-6,
            },
        );
        assert!((out.gram[(1, 1)] - 1.5).abs() < 1e-12);
    }

    proptest! {
        // Round trip: unpack . pack = identity on symmetric inputs.
        #[test]
        fn pack_unpack_round_trip(seed in any::<u64>(), d in 1usize..8) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-5.0..5.0));
            let gram = &a + a.transpose();
            let vec = DVector::from_fn(d, |_, _| rng.random_range(-5.0..5.0));
            let p = pack(&gram, &vec).unwrap();
            prop_assert_eq!(p.len(), payload_len(d));
            let (g2, v2) = unpack(&p, d).unwrap();
            prop_assert_eq!(g2, gram);
            prop_assert_eq!(v2, vec);
        }

        // Post-processing only ever adds a nonnegative multiple of I.
        #[test]
        fn postprocess_shift_structure(seed in any::<u64>(), d in 1usize..6) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0));
            let gram = &a + a.transpose();
            let out = server_postprocess(gram.clone(), DVector::zeros(d), ShiftPolicy::default());
            let diff = &out.gram - &gram;
            let shift = diff[(0, 0)];
            prop_assert!(shift >= 0.0);
            for i in 0..d {
                for j in 0..d {
                    let want = if i == j { shift } else { 0.0 };
                    prop_assert!((diff[(i, j)] - want).abs() < 1e-12);
                }
            }
        }
    }
}
