//! Trial orchestration: wires the environment, device protocol, channel and
//! bound calculators into the full training loop, manages seed streams, and
//! aggregates sweeps into machine-readable results.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bandit::{
    ridge_estimate, select_action, ConfidenceEllipsoid, DeviceState, SyncState,
};
use crate::bounds::{
    beta_bar, compute_noise_bounds, estimate_nominal_sigma, regret_bound, threshold_d,
    NoiseBounds,
};
use crate::channel::{
    aircomp_aggregate, draw_channel, pack, payload_len, unpack, ChannelBlock, ChannelConfig,
    Payload,
};
use crate::config::SimConfig;
use crate::env::Environment;
use crate::error::{Error, Result};

/// Norm bound on actions (all generated actions satisfy it exactly).
pub const ACTION_BOUND: f64 = 1.0;
/// Norm bound on the hidden parameter.
pub const PARAM_BOUND: f64 = 1.0;

/// Per-trial observability counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TrialDiagnostics {
    /// Fading coefficients that fell below the deep-fade floor (channel
    /// inversion is still applied; this only counts them).
    pub deep_fade_events: usize,
    /// Max over transmissions of `||alpha_i payload_i||^2 / (slots * P0)`.
    pub max_power_ratio: f64,
    /// Max over syncs of the argmin device's deviation from power equality.
    pub max_argmin_power_gap: f64,
    /// Largest realized effective-noise std across sync rounds.
    pub max_realized_sigma_t: f64,
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    /// Running pseudo-regret summed over devices, one entry per round.
    pub cumulative_regret: Vec<f64>,
    /// Rounds (1-based) in which a global synchronization happened.
    pub sync_rounds: Vec<usize>,
    /// Realized effective-noise std per sync round.
    pub sigma_t_log: Vec<f64>,
    /// Seed identifying this trial's streams.
    pub trial_seed: u64,
    pub diagnostics: TrialDiagnostics,
}

/// Derives an independent, documented stream: the ChaCha key is
/// `SHA-256("airbandit.v1" || base_seed || trial_index || label)`.
/// Environment, placement, fading, channel noise and per-device rewards each
/// get their own label so sweeps perturb only the intended factor.
pub fn derive_stream(base_seed: u64, trial_index: u64, label: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"airbandit.v1");
    hasher.update(base_seed.to_le_bytes());
    hasher.update(trial_index.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(key)
}

/// First eight digest bytes as a plain seed (for components that take `u64`).
pub fn derive_seed(base_seed: u64, trial_index: u64, label: &str) -> u64 {
    let mut rng = derive_stream(base_seed, trial_index, label);
    rng.random()
}

/// Constants resolved once per trial: noise bounds, exploration schedule
/// input, and the trigger threshold.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub noise_bounds: NoiseBounds,
    pub threshold: f64,
    pub channel: ChannelConfig,
    pub distances: Vec<f64>,
    pub deep_fade_floor: f64,
}

/// Resolves the per-trial constants. Device distances are drawn uniformly
/// over the disc (area-uniform radius) and stay fixed for the whole trial.
pub fn trial_setup(cfg: &SimConfig, trial_index: u64) -> Result<TrialSetup> {
    let channel = cfg.channel_config()?;
    let mut placement = derive_stream(cfg.base_seed, trial_index, "placement");
    let distances: Vec<f64> = (0..cfg.num_devices)
        .map(|_| loop {
            let u: f64 = placement.random();
            if u > 0.0 {
                break channel.cell_radius * u.sqrt();
            }
        })
        .collect();

    let d = cfg.dimension;
    let horizon = cfg.horizon;
    let b = &cfg.bounds;
    let noise_bounds = if channel.noise_variance == 0.0 {
        NoiseBounds::error_free(b.lambda_reg, d, b.alpha)
    } else {
        // A-priori sync-count scale; only used to size the nominal payload
        // proxy and the accuracy bookkeeping.
        let n_hat = ((d as f64)
            * (1.0 + horizon as f64 * ACTION_BOUND * ACTION_BOUND / (d as f64 * b.lambda_reg))
                .ln()
            + 1.0)
            .ceil()
            .max(1.0) as usize;
        let mean_power_gain = distances
            .iter()
            .map(|&k| channel.path_amplitude(k).map(|a| a * a))
            .sum::<Result<f64>>()?
            / cfg.num_devices as f64;
        let proxy = ACTION_BOUND * ACTION_BOUND * horizon as f64 / n_hat as f64;
        let sigma_hat = estimate_nominal_sigma(
            channel.noise_variance.sqrt(),
            mean_power_gain,
            payload_len(d),
            channel.transmit_power,
            proxy,
        )?;
        compute_noise_bounds(
            sigma_hat,
            d,
            b.alpha,
            n_hat,
            cfg.num_devices,
            b.const_upper,
            b.const_lower,
            b.gamma_floor,
        )?
    };
    let threshold = cfg
        .bounds
        .threshold_override
        .unwrap_or_else(|| threshold_d(horizon, d, &noise_bounds, ACTION_BOUND, b.nu));

    let mean_amp = distances
        .iter()
        .map(|&k| channel.path_amplitude(k))
        .sum::<Result<f64>>()?
        / cfg.num_devices as f64;
    let deep_fade_floor = 1e-12 * mean_amp * mean_amp;

    Ok(TrialSetup {
        noise_bounds,
        threshold,
        channel,
        distances,
        deep_fade_floor,
    })
}

/// Executes one full trial of the training loop, deterministically in
/// `(cfg.base_seed, trial_index)`.
pub fn run_trial(cfg: &SimConfig, trial_index: u64) -> Result<RegretTrace> {
    let setup = trial_setup(cfg, trial_index)?;
    let d = cfg.dimension;
    let m = cfg.num_devices;
    let nb = &setup.noise_bounds;

    let env = Environment::generate(
        d,
        cfg.num_actions_effective(),
        derive_seed(cfg.base_seed, trial_index, "environment"),
    )?;
    let mut fading_rng = derive_stream(cfg.base_seed, trial_index, "fading");
    let mut noise_rng = derive_stream(cfg.base_seed, trial_index, "noise");
    let mut reward_rngs: Vec<ChaCha12Rng> = (0..m)
        .map(|i| derive_stream(cfg.base_seed, trial_index, &format!("reward.{i}")))
        .collect();

    let initial = SyncState::initial(d, nb.gamma_min);
    let mut server_state = initial.clone();
    let mut devices: Vec<DeviceState> = (0..m).map(|_| DeviceState::new(initial.clone())).collect();

    let mut cumulative = Vec::with_capacity(cfg.horizon);
    let mut total_regret = 0.0;
    let mut sync_rounds = Vec::new();
    let mut sigma_t_log = Vec::new();
    let mut diagnostics = TrialDiagnostics::default();

    for round in 1..=cfg.horizon {
        let radius = beta_bar(round, nb, cfg.reward_sigma, PARAM_BOUND, ACTION_BOUND);
        let mut any_trigger = false;
        for i in 0..m {
            let (idx, fired) = device_step(
                &mut devices[i],
                &env,
                radius,
                nb,
                setup.threshold,
                i,
                round,
                &mut reward_rngs[i],
            )
            .map_err(|e| e.in_round(round, i))?;
            any_trigger = any_trigger || fired;
            total_regret += env.instantaneous_regret(idx);
        }

        if any_trigger {
            let payloads: Vec<Payload> = devices
                .iter()
                .map(|dev| pack(dev.local_gram(), dev.local_reward_vec()))
                .collect::<Result<_>>()
                .map_err(|e| e.in_round(round, 0))?;
            let coefficients = draw_channel(&setup.channel, &setup.distances, &mut fading_rng)?;
            let block =
                ChannelBlock::new(&setup.channel, coefficients, &payloads, setup.deep_fade_floor)
                    .map_err(|e| e.in_round(round, 0))?;

            let ratios = block.power_ratios(&setup.channel, &payloads);
            for &r in &ratios {
                diagnostics.max_power_ratio = diagnostics.max_power_ratio.max(r);
            }
            if let Some(i) = block.argmin_device {
                diagnostics.max_argmin_power_gap =
                    diagnostics.max_argmin_power_gap.max((ratios[i] - 1.0).abs());
            }
            diagnostics.deep_fade_events += block.deep_fade_events;

            let received = aircomp_aggregate(&setup.channel, &block, &payloads, &mut noise_rng)
                .map_err(|e| e.in_round(round, 0))?;
            let (sum_gram, sum_vec) = unpack(&received, d).map_err(|e| e.in_round(round, 0))?;

            let raw_gram = &server_state.gram + sum_gram;
            let raw_vec = &server_state.reward_vec + sum_vec;
            let new_sync = crate::channel::server_postprocess(
                raw_gram,
                raw_vec,
                cfg.shift_policy(nb.gamma_max),
            );
            server_state = new_sync.clone();
            for dev in &mut devices {
                dev.apply_sync(new_sync.clone());
            }

            let sigma_t = if setup.channel.noise_variance > 0.0 {
                (setup.channel.noise_variance / block.denoising_factor).sqrt()
            } else {
                0.0
            };
            diagnostics.max_realized_sigma_t = diagnostics.max_realized_sigma_t.max(sigma_t);
            sigma_t_log.push(sigma_t);
            sync_rounds.push(round);
        } else {
            for dev in &mut devices {
                dev.advance_round();
            }
        }

        cumulative.push(total_regret);
    }

    Ok(RegretTrace {
        cumulative_regret: cumulative,
        sync_rounds,
        sigma_t_log,
        trial_seed: derive_seed(cfg.base_seed, trial_index, "trial"),
        diagnostics,
    })
}

/// One device's round: form the design, estimate, select by UCB, check the
/// trigger (against the pre-update design), observe and accumulate. Returns
/// the chosen action index and whether the trigger fired.
#[allow(clippy::too_many_arguments)]
fn device_step(
    dev: &mut DeviceState,
    env: &Environment,
    radius: f64,
    nb: &NoiseBounds,
    threshold: f64,
    device: usize,
    round: usize,
    reward_rng: &mut ChaCha12Rng,
) -> Result<(usize, bool)> {
    let (design, target) = dev.effective_design();
    let center = ridge_estimate(&design, &target)?;
    let ell = ConfidenceEllipsoid {
        center,
        shape: design,
        radius,
    };
    let (idx, action) = select_action(&ell, env.actions())?;
    let action = action.clone();
    let fired = dev.sync_trigger(&action, nb.gamma_max, nb.gamma_min, threshold)?;
    let reward = env.sample_reward(&action, device, round, reward_rng)?;
    dev.record_observation(&action, reward.value);
    Ok((idx, fired))
}

/// Aggregated statistics for one sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPointSummary {
    pub param: String,
    pub value: String,
    /// Mean cumulative regret per round, over trials.
    pub mean_cumulative_regret: Vec<f64>,
    /// Standard error of the mean per round.
    pub stderr_cumulative_regret: Vec<f64>,
    /// Mean number of syncs that happened up to each round.
    pub mean_sync_count: Vec<f64>,
    pub final_mean_regret: f64,
    pub final_stderr_regret: f64,
    pub mean_total_syncs: f64,
    pub max_realized_sigma_t: f64,
    pub deep_fade_events: usize,
    /// Theoretical pseudo-regret bound evaluated with noise constants from
    /// the realized max effective-noise std.
    pub theoretical_regret_bound: f64,
    pub max_power_ratio: f64,
    pub max_argmin_power_gap: f64,
}

/// Full experiment output: one summary per sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResults {
    pub config: SimConfig,
    pub points: Vec<SweepPointSummary>,
}

/// Runs all sweep points with trial-level parallelism.
pub fn run_experiment(cfg: &SimConfig) -> Result<ExperimentResults> {
    run_experiment_impl(cfg, true)
}

/// Serial twin of [`run_experiment`]; produces identical results.
pub fn run_experiment_serial(cfg: &SimConfig) -> Result<ExperimentResults> {
    run_experiment_impl(cfg, false)
}

fn run_experiment_impl(cfg: &SimConfig, parallel: bool) -> Result<ExperimentResults> {
    cfg.validate()?;
    let mut points = Vec::new();
    for (param, value, point_cfg) in cfg.sweep_points()? {
        let traces: Vec<RegretTrace> = if parallel {
            (0..point_cfg.trials as u64)
                .into_par_iter()
                .map(|i| run_trial(&point_cfg, i))
                .collect::<Result<_>>()?
        } else {
            (0..point_cfg.trials as u64)
                .map(|i| run_trial(&point_cfg, i))
                .collect::<Result<_>>()?
        };
        points.push(summarize_point(&point_cfg, param, value, &traces));
    }
    Ok(ExperimentResults {
        config: cfg.clone(),
        points,
    })
}

fn summarize_point(
    cfg: &SimConfig,
    param: String,
    value: String,
    traces: &[RegretTrace],
) -> SweepPointSummary {
    let horizon = cfg.horizon;
    let trials = traces.len();
    let mut mean = vec![0.0; horizon];
    let mut stderr = vec![0.0; horizon];
    let mut mean_sync = vec![0.0; horizon];
    for t in 0..horizon {
        let mut acc = 0.0;
        for tr in traces {
            acc += tr.cumulative_regret[t];
        }
        mean[t] = acc / trials as f64;
        if trials > 1 {
            let var = traces
                .iter()
                .map(|tr| {
                    let dlt = tr.cumulative_regret[t] - mean[t];
                    dlt * dlt
                })
                .sum::<f64>()
                / (trials - 1) as f64;
            stderr[t] = (var / trials as f64).sqrt();
        }
        let syncs: usize = traces
            .iter()
            .map(|tr| tr.sync_rounds.iter().filter(|&&r| r <= t + 1).count())
            .sum();
        mean_sync[t] = syncs as f64 / trials as f64;
    }

    let max_sigma = traces
        .iter()
        .map(|tr| tr.diagnostics.max_realized_sigma_t)
        .fold(0.0f64, f64::max);
    let mean_total_syncs =
        traces.iter().map(|tr| tr.sync_rounds.len()).sum::<usize>() as f64 / trials as f64;

    // Bound under matched assumptions: noise constants from the realized max
    // effective-noise std, radius at the horizon, sync count as realized.
    let b = &cfg.bounds;
    let nb = if max_sigma > 0.0 {
        compute_noise_bounds(
            max_sigma,
            cfg.dimension,
            b.alpha,
            (mean_total_syncs.ceil() as usize).max(1),
            cfg.num_devices,
            b.const_upper,
            b.const_lower,
            b.gamma_floor,
        )
        .expect("bounds from realized sigma")
    } else {
        NoiseBounds::error_free(b.lambda_reg, cfg.dimension, b.alpha)
    };
    let beta_horizon = beta_bar(horizon, &nb, cfg.reward_sigma, PARAM_BOUND, ACTION_BOUND);
    let bound = regret_bound(
        horizon,
        cfg.num_devices,
        cfg.dimension,
        &nb,
        beta_horizon,
        ACTION_BOUND,
        b.nu,
    );

    SweepPointSummary {
        param,
        value,
        final_mean_regret: mean[horizon - 1],
        final_stderr_regret: stderr[horizon - 1],
        mean_cumulative_regret: mean,
        stderr_cumulative_regret: stderr,
        mean_sync_count: mean_sync,
        mean_total_syncs,
        max_realized_sigma_t: max_sigma,
        deep_fade_events: traces.iter().map(|tr| tr.diagnostics.deep_fade_events).sum(),
        theoretical_regret_bound: bound,
        max_power_ratio: traces
            .iter()
            .map(|tr| tr.diagnostics.max_power_ratio)
            .fold(0.0f64, f64::max),
        max_argmin_power_gap: traces
            .iter()
            .map(|tr| tr.diagnostics.max_argmin_power_gap)
            .fold(0.0f64, f64::max),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    seed_rule: &'static str,
    notes: [&'static str; 1],
    config: &'a SimConfig,
    points: Vec<ManifestPoint<'a>>,
}

#[derive(Serialize)]
struct ManifestPoint<'a> {
    param: &'a str,
    value: &'a str,
    final_mean_regret: f64,
    final_stderr_regret: f64,
    theoretical_regret_bound: f64,
    max_realized_sigma_t: f64,
    mean_total_syncs: f64,
    deep_fade_events: usize,
    max_power_ratio: f64,
    max_argmin_power_gap: f64,
}

/// Writes `results.csv` and `manifest.json` under `out_dir`. Re-running the
/// same configuration reproduces both files byte for byte.
pub fn emit_results(results: &ExperimentResults, out_dir: &Path) -> Result<()> {
    if results.points.is_empty() {
        return Err(Error::InvalidArgument("no sweep points to emit".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let csv_path = out_dir.join("results.csv");
    let io_err = |source| Error::Io {
        path: csv_path.clone(),
        source,
    };
    let mut csv = Vec::new();
    writeln!(
        csv,
        "sweep_param,sweep_value,round,mean_cum_regret,stderr_cum_regret,mean_sync_count"
    )
    .map_err(io_err)?;
    for p in &results.points {
        for t in 0..p.mean_cumulative_regret.len() {
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                p.param,
                p.value,
                t + 1,
                p.mean_cumulative_regret[t],
                p.stderr_cumulative_regret[t],
                p.mean_sync_count[t]
            )
            .map_err(io_err)?;
        }
    }
    std::fs::write(&csv_path, csv).map_err(|source| Error::Io {
        path: csv_path.clone(),
        source,
    })?;

    let manifest = Manifest {
        version: concat!("airbandit-", env!("CARGO_PKG_VERSION")),
        seed_rule: "ChaCha12 keyed by SHA-256(\"airbandit.v1\" || base_seed_le || trial_index_le || label); labels: environment, placement, fading, noise, reward.<device>",
        notes: ["snr_db is treated as the primary sweep variable; the noise variance is derived as P0/SNR even though the transmit power is configured independently"],
        config: &results.config,
        points: results
            .points
            .iter()
            .map(|p| ManifestPoint {
                param: &p.param,
                value: &p.value,
                final_mean_regret: p.final_mean_regret,
                final_stderr_regret: p.final_stderr_regret,
                theoretical_regret_bound: p.theoretical_regret_bound,
                max_realized_sigma_t: p.max_realized_sigma_t,
                mean_total_syncs: p.mean_total_syncs,
                deep_fade_events: p.deep_fade_events,
                max_power_ratio: p.max_power_ratio,
                max_argmin_power_gap: p.max_argmin_power_gap,
            })
            .collect(),
    };
    let manifest_path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidArgument(format!("manifest serialization: {e}")))?;
    std::fs::write(&manifest_path, json).map_err(|source| Error::Io {
        path: manifest_path.clone(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{SnrSetting, SweepSpec};

    fn tiny_cfg() -> SimConfig {
        SimConfig {
            num_devices: 3,
            horizon: 40,
            dimension: 4,
            trials: 2,
            base_seed: 7,
            snr_db: SnrSetting::Db(60.0),
            ..SimConfig::default()
        }
    }

    #[test]
    fn trial_is_deterministic() {
        let cfg = tiny_cfg();
        let a = run_trial(&cfg, 1).unwrap();
        let b = run_trial(&cfg, 1).unwrap();
        assert_eq!(a, b);
        let c = run_trial(&cfg, 2).unwrap();
        assert_ne!(a.cumulative_regret, c.cumulative_regret);
    }

    #[test]
    fn regret_trace_is_nondecreasing_and_syncs_increasing() {
        let cfg = tiny_cfg();
        let tr = run_trial(&cfg, 0).unwrap();
        assert_eq!(tr.cumulative_regret.len(), cfg.horizon);
        for w in tr.cumulative_regret.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in tr.sync_rounds.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert_eq!(tr.sync_rounds.len(), tr.sigma_t_log.len());
    }

    #[test]
    fn infinite_threshold_means_no_syncs() {
        let mut cfg = tiny_cfg();
        cfg.bounds.threshold_override = Some(f64::INFINITY);
        let tr = run_trial(&cfg, 0).unwrap();
        assert!(tr.sync_rounds.is_empty());
    }

    #[test]
    fn error_free_uses_plain_regularizer() {
        let mut cfg = tiny_cfg();
        cfg.snr_db = SnrSetting::ErrorFree;
        let setup = trial_setup(&cfg, 0).unwrap();
        assert_eq!(setup.noise_bounds.gamma_min, cfg.bounds.lambda_reg);
        assert_eq!(setup.noise_bounds.gamma_max, cfg.bounds.lambda_reg);
        assert_eq!(setup.noise_bounds.kappa, 0.0);
        let tr = run_trial(&cfg, 0).unwrap();
        assert!(tr.sigma_t_log.iter().all(|&s| s == 0.0));
        assert_eq!(tr.diagnostics.max_realized_sigma_t, 0.0);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let mut cfg = tiny_cfg();
        cfg.trials = 4;
        let par = run_experiment(&cfg).unwrap();
        let ser = run_experiment_serial(&cfg).unwrap();
        assert_eq!(par.points.len(), ser.points.len());
        for (a, b) in par.points.iter().zip(&ser.points) {
            assert_eq!(a.mean_cumulative_regret, b.mean_cumulative_regret);
            assert_eq!(a.stderr_cumulative_regret, b.stderr_cumulative_regret);
            assert_eq!(a.mean_sync_count, b.mean_sync_count);
        }
    }

    #[test]
    fn emit_results_row_count_and_reproducibility() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg();
        cfg.horizon = 25;
        cfg.sweep = Some(SweepSpec {
            param: crate::config::SweepParam::Snr,
            values: vec![
                crate::config::SweepValue::Num(40.0),
                crate::config::SweepValue::Text("error-free".into()),
            ],
        });
        let results = run_experiment(&cfg).unwrap();
        emit_results(&results, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 25);
        assert_eq!(
            lines[0],
            "sweep_param,sweep_value,round,mean_cum_regret,stderr_cum_regret,mean_sync_count"
        );
        assert!(lines[1].starts_with("snr,40,1,"));

        // byte-identical rerun
        let again = run_experiment(&cfg).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        emit_results(&again, dir2.path()).unwrap();
        let csv2 = std::fs::read(dir2.path().join("results.csv")).unwrap();
        assert_eq!(std::fs::read(dir.path().join("results.csv")).unwrap(), csv2);
        let m1 = std::fs::read(dir.path().join("manifest.json")).unwrap();
        let m2 = std::fs::read(dir2.path().join("manifest.json")).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn manifest_bound_dominates_small_run() {
        let mut cfg = tiny_cfg();
        cfg.trials = 3;
        let results = run_experiment(&cfg).unwrap();
        let p = &results.points[0];
        assert!(p.theoretical_regret_bound >= p.final_mean_regret);
    }
}
