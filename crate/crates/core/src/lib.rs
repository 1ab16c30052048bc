//! Deterministic simulator for federated contextual linear bandit learning
//! over a noisy fading multiple-access channel with analog over-the-air
//! aggregation.
//!
//! Devices run ridge-regression UCB on a shared decision set and accumulate
//! local sufficient statistics; an event trigger (log-det information gain
//! vs. time since last sync) fires global aggregation, which travels over a
//! Rayleigh-fading uplink via simultaneous analog transmission with
//! channel-inversion power control. The crate also evaluates the matching
//! spectral noise bounds, exploration radius, trigger threshold, and
//! theoretical regret bound, and ships an experiment harness that sweeps
//! SNR, dimension, and device count into CSV/JSON results.

pub mod bandit;
pub mod bounds;
pub mod channel;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;

pub use config::{SimConfig, SnrSetting};
pub use error::{Error, Result};
