//! Channel-noise spectral bounds, the exploration radius, the sync-trigger
//! threshold, and the theoretical regret bound.
//!
//! These quantities feed the algorithm (radius and threshold) and the
//! acceptance oracle (bound dominance). All logarithms are natural unless a
//! branching base `nu` is given explicitly.

use crate::error::{Error, Result};

/// Spectral bounds on the effective channel noise, derived from its per-entry
/// standard deviation `sigma_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBounds {
    /// High-probability upper bound on the noise-matrix spectral norm.
    pub gamma_max: f64,
    /// High-probability lower bound on the noise-matrix smallest singular value.
    pub gamma_min: f64,
    /// High-probability upper bound on the noise-vector norm.
    pub gamma_n: f64,
    /// Bound on the noise-vector norm in the inverse-noise-matrix metric.
    pub kappa: f64,
    /// Per-entry effective noise standard deviation the bounds were built from.
    pub sigma_t: f64,
    /// Failure probability alpha; each bound is (alpha/2nM)-accurate.
    pub failure_prob_alpha: f64,
    /// Concentration constant C (upper bounds).
    pub const_upper: f64,
    /// Concentration constant c (lower bound).
    pub const_lower: f64,
    pub dimension: usize,
    /// Number of synchronization rounds the accuracy bookkeeping assumes.
    pub horizon_n: usize,
    /// True when the closed-form gamma_min was nonpositive and got clamped.
    pub gamma_min_clamped: bool,
}

impl NoiseBounds {
    /// Noise-free instantiation: both spectral constants collapse to a plain
    /// ridge regularizer and the inverse-metric term vanishes.
    pub fn error_free(lambda_reg: f64, dimension: usize, alpha: f64) -> Self {
        NoiseBounds {
            gamma_max: lambda_reg,
            gamma_min: lambda_reg,
            gamma_n: 0.0,
            kappa: 0.0,
            sigma_t: 0.0,
            failure_prob_alpha: alpha,
            const_upper: 1.0,
            const_lower: 1.0,
            dimension,
            horizon_n: 0,
            gamma_min_clamped: false,
        }
    }
}

/// Derived algorithm constants for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    /// Branching constant nu > 1 (e for the natural-log form).
    pub nu: f64,
    pub threshold_d: f64,
    pub beta_bar: f64,
    pub regret_bound: f64,
}

/// Evaluates the closed-form noise bounds for per-entry std `sigma_t`.
///
/// `sigma_t == 0` degenerates every bound to zero; callers then switch to the
/// error-free instantiation instead. A nonpositive closed-form `gamma_min`
/// (small `d` or `alpha`) is clamped to `gamma_floor` and flagged.
#[allow(clippy::too_many_arguments)]
pub fn compute_noise_bounds(
    sigma_t: f64,
    dimension: usize,
    alpha: f64,
    horizon_n: usize,
    num_devices: usize,
    const_upper: f64,
    const_lower: f64,
    gamma_floor: f64,
) -> Result<NoiseBounds> {
    if sigma_t < 0.0 {
        return Err(Error::InvalidArgument(format!("sigma_t {sigma_t} < 0")));
    }
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::InvalidArgument(format!("alpha {alpha} not in (0,1)")));
    }
    if dimension == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    if num_devices == 0 {
        return Err(Error::InvalidArgument("num_devices must be >= 1".into()));
    }
    if sigma_t == 0.0 {
        return Ok(NoiseBounds {
            gamma_max: 0.0,
            gamma_min: 0.0,
            gamma_n: 0.0,
            kappa: 0.0,
            sigma_t: 0.0,
            failure_prob_alpha: alpha,
            const_upper,
            const_lower,
            dimension,
            horizon_n,
            gamma_min_clamped: false,
        });
    }
    let d = dimension as f64;
    let gamma_max = const_upper * sigma_t * d.sqrt() * (1.0 / alpha).ln();
    let raw_min = (alpha - 2.0 * (-const_upper * d).exp()) / (2.0 * const_lower)
        * sigma_t
        * (d.sqrt() - (d - 1.0).sqrt());
    let (gamma_min, gamma_min_clamped) = if raw_min > 0.0 {
        (raw_min, false)
    } else {
        (gamma_floor, true)
    };
    let gamma_n = sigma_t * (d.sqrt() + (2.0 * (2.0 / alpha).ln()).sqrt());
    let kappa = (2.0 * const_upper * (1.0 / gamma_min) * gamma_n * gamma_n).sqrt();
    Ok(NoiseBounds {
        gamma_max,
        gamma_min,
        gamma_n,
        kappa,
        sigma_t,
        failure_prob_alpha: alpha,
        const_upper,
        const_lower,
        dimension,
        horizon_n,
        gamma_min_clamped,
    })
}

/// Uniform exploration radius at round `t`:
/// `sigma*sqrt(2 ln(2/alpha) + d ln(gmax/gmin + t L^2/(d gmin))) + S sqrt(gmax) + kappa`.
pub fn beta_bar(
    round: usize,
    nb: &NoiseBounds,
    sigma_reward: f64,
    param_bound: f64,
    action_bound: f64,
) -> f64 {
    debug_assert!(nb.gamma_min > 0.0, "beta_bar needs gamma_min > 0");
    let d = nb.dimension as f64;
    let growth = nb.gamma_max / nb.gamma_min
        + (round as f64) * action_bound * action_bound / (d * nb.gamma_min);
    sigma_reward * (2.0 * (2.0 / nb.failure_prob_alpha).ln() + d * growth.ln()).sqrt()
        + param_bound * nb.gamma_max.sqrt()
        + nb.kappa
}

/// Event-trigger threshold `D = 2 T d / (log_nu(gmax/gmin + T L^2/(d gmin)) + 1)`.
pub fn threshold_d(
    horizon_t: usize,
    dimension: usize,
    nb: &NoiseBounds,
    action_bound: f64,
    nu: f64,
) -> f64 {
    debug_assert!(nb.gamma_min > 0.0 && nu > 1.0);
    let d = dimension as f64;
    let t = horizon_t as f64;
    let x = nb.gamma_max / nb.gamma_min + t * action_bound * action_bound / (d * nb.gamma_min);
    2.0 * t * d / (x.ln() / nu.ln() + 1.0)
}

/// High-probability pseudo-regret bound
/// `4 nu beta_T sqrt(2 M T d log_nu(gmax/gmin + T L^2/(d gmin)) + 1)`.
pub fn regret_bound(
    horizon_t: usize,
    num_devices: usize,
    dimension: usize,
    nb: &NoiseBounds,
    beta_horizon: f64,
    action_bound: f64,
    nu: f64,
) -> f64 {
    debug_assert!(nb.gamma_min > 0.0 && nu > 1.0);
    let d = dimension as f64;
    let t = horizon_t as f64;
    let m = num_devices as f64;
    let x = nb.gamma_max / nb.gamma_min + t * action_bound * action_bound / (d * nb.gamma_min);
    4.0 * nu * beta_horizon * (2.0 * m * t * d * (x.ln() / nu.ln()) + 1.0).sqrt()
}

/// A-priori estimate of the effective noise std before any block is realized:
/// `rho_hat = mean_path_power_gain * slots * P0 / payload_norm_proxy`,
/// `sigma_hat = sigma_n / sqrt(rho_hat)`.
pub fn estimate_nominal_sigma(
    sigma_n: f64,
    mean_path_power_gain: f64,
    payload_slots: usize,
    transmit_power: f64,
    payload_norm_proxy: f64,
) -> Result<f64> {
    if sigma_n == 0.0 {
        return Ok(0.0);
    }
    if mean_path_power_gain <= 0.0 || transmit_power <= 0.0 || payload_norm_proxy <= 0.0 {
        return Err(Error::InvalidArgument(
            "nominal sigma estimate needs positive gain, power and payload proxy".into(),
        ));
    }
    let rho_hat =
        mean_path_power_gain * payload_slots as f64 * transmit_power / payload_norm_proxy;
    Ok(sigma_n / rho_hat.sqrt())
}
