//! Declarative simulation configuration, its TOML form, and sweep expansion.
//!
//! Every field has a default matching the standard experiment setup
//! (50 devices, horizon 1000, dimension 10, 100 trials, 23 dBm transmit
//! power, 500 m cell), so a config file only has to state overrides.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, ShiftPolicy};
use crate::error::{Error, Result};

/// Signal-to-noise setting: a finite value in dB or the noiseless channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrSetting {
    Db(f64),
    ErrorFree,
}

impl SnrSetting {
    pub fn is_error_free(&self) -> bool {
        matches!(self, SnrSetting::ErrorFree)
    }

    /// Parses `"25"`, `"inf"`, `"error-free"` (CLI and sweep-value syntax).
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "error-free" | "error_free" | "errorfree" => Ok(SnrSetting::ErrorFree),
            _ => t
                .parse::<f64>()
                .map(SnrSetting::Db)
                .map_err(|_| Error::Config(format!("invalid SNR value: {s:?}"))),
        }
    }
}

impl fmt::Display for SnrSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnrSetting::Db(v) => write!(f, "{v}"),
            SnrSetting::ErrorFree => write!(f, "error-free"),
        }
    }
}

impl Serialize for SnrSetting {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SnrSetting::Db(v) => ser.serialize_f64(*v),
            SnrSetting::ErrorFree => ser.serialize_str("error-free"),
        }
    }
}

impl<'de> Deserialize<'de> for SnrSetting {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(SnrSetting::Db(v)),
            Raw::Text(s) => SnrSetting::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

/// Physical-layer parameters in configuration units (power in dBm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub p0_dbm: f64,
    pub ref_gain: f64,
    pub path_loss_exponent: f64,
    pub reference_distance: f64,
    pub cell_radius: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            p0_dbm: 23.0,
            ref_gain: 10f64.powf(-3.35),
            path_loss_exponent: 2.0,
            reference_distance: 1.0,
            cell_radius: 500.0,
        }
    }
}

/// Server policy selector for positive-definite post-processing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftPolicyKind {
    #[default]
    EigenFloor,
    /// Adds a spectral-norm estimate of the noise times I before flooring.
    FixedShift,
}

/// Constants for the noise bounds, exploration radius and trigger threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    /// Failure probability alpha.
    pub alpha: f64,
    /// Concentration constant C.
    pub const_upper: f64,
    /// Concentration constant c.
    pub const_lower: f64,
    /// Branching constant nu (> 1).
    pub nu: f64,
    /// Floor applied when the closed-form gamma_min is nonpositive.
    pub gamma_floor: f64,
    /// Ridge regularizer replacing gamma_min in the error-free mode.
    pub lambda_reg: f64,
    /// Minimum eigenvalue enforced by server post-processing.
    pub epsilon_pd: f64,
    pub shift_policy: ShiftPolicyKind,
    /// Diagnostic override of the trigger threshold; `inf` disables syncs.
    pub threshold_override: Option<f64>,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams {
            alpha: 0.05,
            const_upper: 1.0,
            const_lower: 1.0,
            nu: std::f64::consts::E,
            gamma_floor: 1e-3,
            lambda_reg: 1.0,
            epsilon_pd: 1e-6,
            shift_policy: ShiftPolicyKind::EigenFloor,
            threshold_override: None,
        }
    }
}

/// Parameter swept across experiment points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Snr,
    D,
    M,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Snr => "snr",
            SweepParam::D => "d",
            SweepParam::M => "m",
        }
    }
}

/// One sweep value as written in a config file (number or `"error-free"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Num(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<SweepValue>,
}

/// Full simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub num_devices: usize,
    pub horizon: usize,
    pub dimension: usize,
    /// Decision-set size; defaults to `2 * dimension` when omitted.
    pub num_actions: Option<usize>,
    pub snr_db: SnrSetting,
    pub trials: usize,
    pub base_seed: u64,
    /// Sub-Gaussian scale of the reward noise (1/2 for Bernoulli rewards).
    pub reward_sigma: f64,
    pub channel: ChannelParams,
    pub bounds: BoundParams,
    pub sweep: Option<SweepSpec>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_devices: 50,
            horizon: 1000,
            dimension: 10,
            num_actions: None,
            snr_db: SnrSetting::Db(80.0),
            trials: 100,
            base_seed: 0,
            reward_sigma: 0.5,
            channel: ChannelParams::default(),
            bounds: BoundParams::default(),
            sweep: None,
        }
    }
}

impl SimConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("TOML parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn num_actions_effective(&self) -> usize {
        self.num_actions.unwrap_or(2 * self.dimension)
    }

    pub fn validate(&self) -> Result<()> {
        fn ensure(cond: bool, msg: &str) -> Result<()> {
            if cond {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        }
        ensure(self.num_devices >= 1, "num_devices must be >= 1")?;
        ensure(self.horizon >= 1, "horizon must be >= 1")?;
        ensure(self.dimension >= 2, "dimension must be >= 2")?;
        ensure(self.trials >= 1, "trials must be >= 1")?;
        let k = self.num_actions_effective();
        ensure(
            k >= 1 && k <= self.dimension * self.dimension,
            "num_actions must lie in 1..=dimension^2",
        )?;
        ensure(self.reward_sigma > 0.0, "reward_sigma must be positive")?;
        if let SnrSetting::Db(v) = self.snr_db {
            ensure(v.is_finite(), "snr_db must be finite (or \"error-free\")")?;
        }
        let ch = &self.channel;
        ensure(
            ch.p0_dbm.is_finite()
                && ch.ref_gain > 0.0
                && ch.path_loss_exponent > 0.0
                && ch.reference_distance > 0.0
                && ch.cell_radius > 0.0,
            "channel parameters must be positive",
        )?;
        let b = &self.bounds;
        ensure(
            b.alpha > 0.0 && b.alpha < 1.0,
            "bounds.alpha must lie in (0, 1)",
        )?;
        ensure(b.const_upper > 0.0 && b.const_lower > 0.0, "bounds constants must be positive")?;
        ensure(b.nu > 1.0, "bounds.nu must exceed 1")?;
        ensure(b.gamma_floor > 0.0, "bounds.gamma_floor must be positive")?;
        ensure(b.lambda_reg > 0.0, "bounds.lambda_reg must be positive")?;
        ensure(b.epsilon_pd > 0.0, "bounds.epsilon_pd must be positive")?;
        if let Some(d) = b.threshold_override {
            ensure(d > 0.0, "bounds.threshold_override must be positive")?;
        }
        if let Some(sweep) = &self.sweep {
            ensure(!sweep.values.is_empty(), "sweep.values must be nonempty")?;
            // Validate each point by expanding it.
            for v in &sweep.values {
                self.point_config(sweep.param, v)?;
            }
        }
        Ok(())
    }

    /// Resolves the physical channel configuration for this config's SNR.
    pub fn channel_config(&self) -> Result<ChannelConfig> {
        let ch = &self.channel;
        match self.snr_db {
            SnrSetting::Db(snr) => ChannelConfig::from_db(
                ch.p0_dbm,
                snr,
                ch.ref_gain,
                ch.path_loss_exponent,
                ch.reference_distance,
                ch.cell_radius,
            ),
            SnrSetting::ErrorFree => ChannelConfig::error_free(
                ch.p0_dbm,
                ch.ref_gain,
                ch.path_loss_exponent,
                ch.reference_distance,
                ch.cell_radius,
            ),
        }
    }

    /// Maps the configured shift-policy selector onto the channel policy,
    /// given a spectral-norm estimate of the aggregated noise.
    pub fn shift_policy(&self, noise_norm_estimate: f64) -> ShiftPolicy {
        match self.bounds.shift_policy {
            ShiftPolicyKind::EigenFloor => ShiftPolicy::EigenFloor {
                epsilon: self.bounds.epsilon_pd,
            },
            ShiftPolicyKind::FixedShift => ShiftPolicy::FixedShift {
                shift: noise_norm_estimate,
                epsilon: self.bounds.epsilon_pd,
            },
        }
    }

    /// Derives the per-point config for one sweep value.
    pub fn point_config(&self, param: SweepParam, value: &SweepValue) -> Result<SimConfig> {
        let mut cfg = self.clone();
        cfg.sweep = None;
        match (param, value) {
            (SweepParam::Snr, SweepValue::Num(v)) => cfg.snr_db = SnrSetting::Db(*v),
            (SweepParam::Snr, SweepValue::Text(s)) => cfg.snr_db = SnrSetting::parse(s)?,
            (SweepParam::D, SweepValue::Num(v)) => {
                let d = as_positive_int(*v, "dimension")?;
                cfg.dimension = d;
                // K tracks the dimension unless pinned explicitly.
                if self.num_actions.is_none() {
                    cfg.num_actions = None;
                }
            }
            (SweepParam::M, SweepValue::Num(v)) => {
                cfg.num_devices = as_positive_int(*v, "num_devices")?;
            }
            (_, SweepValue::Text(s)) => {
                return Err(Error::Config(format!(
                    "sweep value {s:?} is not valid for parameter {}",
                    param.name()
                )));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Expands the sweep into `(param name, value label, config)` points.
    /// Without a sweep the experiment is a single point labeled `default`.
    pub fn sweep_points(&self) -> Result<Vec<(String, String, SimConfig)>> {
        match &self.sweep {
            None => {
                let mut cfg = self.clone();
                cfg.sweep = None;
                Ok(vec![("none".into(), "default".into(), cfg)])
            }
            Some(sweep) => sweep
                .values
                .iter()
                .map(|v| {
                    let cfg = self.point_config(sweep.param, v)?;
                    let label = match v {
                        SweepValue::Num(x) => format!("{x}"),
                        SweepValue::Text(_) => match sweep.param {
                            SweepParam::Snr => cfg.snr_db.to_string(),
                            _ => unreachable!("validated in point_config"),
                        },
                    };
                    Ok((sweep.param.name().to_string(), label, cfg))
                })
                .collect(),
        }
    }
}

fn as_positive_int(v: f64, what: &str) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 || v > usize::MAX as f64 {
        return Err(Error::Config(format!(
            "{what} sweep value {v} is not a positive integer"
        )));
    }
    Ok(v as usize)
}

/// Parses the CLI sweep syntax `snr=25,35,50,inf | d=5,10 | m=10,20`.
pub fn parse_sweep_arg(arg: &str) -> Result<SweepSpec> {
    let (name, values) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("sweep must look like param=v1,v2,...: {arg:?}")))?;
    let param = match name.trim().to_ascii_lowercase().as_str() {
        "snr" => SweepParam::Snr,
        "d" => SweepParam::D,
        "m" => SweepParam::M,
        other => return Err(Error::Config(format!("unknown sweep parameter {other:?}"))),
    };
    let values: Vec<SweepValue> = values
        .split(',')
        .map(|v| {
            let t = v.trim();
            match t.parse::<f64>() {
                Ok(n) if n.is_finite() => SweepValue::Num(n),
                _ => SweepValue::Text(t.to_string()),
            }
        })
        .collect();
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    Ok(SweepSpec { param, values })
}
