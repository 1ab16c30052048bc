//! Device-side protocol: ridge estimation, UCB action selection, local Gram
//! accumulation, and the event-triggered synchronization test.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Globally shared state broadcast after each synchronization: the aggregated
/// Gram matrix and reward vector (noise-distorted, post-processed to PD).
#[derive(Debug, Clone, PartialEq)]
pub struct SyncState {
    pub gram: DMatrix<f64>,
    pub reward_vec: DVector<f64>,
}

impl SyncState {
    /// Initial state: `regularizer * I` and a zero reward vector.
    pub fn initial(dimension: usize, regularizer: f64) -> Self {
        SyncState {
            gram: DMatrix::identity(dimension, dimension) * regularizer,
            reward_vec: DVector::zeros(dimension),
        }
    }

    pub fn dimension(&self) -> usize {
        self.reward_vec.len()
    }
}

/// Per-device mutable state: local deltas since the last synchronization plus
/// the device's copy of the shared state.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    local_gram: DMatrix<f64>,
    local_reward_vec: DVector<f64>,
    sync: SyncState,
    rounds_since_sync: usize,
}

/// Optimistic action-selection region: ridge center, design matrix and radius.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceEllipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub radius: f64,
}

impl DeviceState {
    pub fn new(sync: SyncState) -> Self {
        let d = sync.dimension();
        DeviceState {
            local_gram: DMatrix::zeros(d, d),
            local_reward_vec: DVector::zeros(d),
            sync,
            rounds_since_sync: 0,
        }
    }

    pub fn local_gram(&self) -> &DMatrix<f64> {
        &self.local_gram
    }

    pub fn local_reward_vec(&self) -> &DVector<f64> {
        &self.local_reward_vec
    }

    pub fn sync_state(&self) -> &SyncState {
        &self.sync
    }

    pub fn rounds_since_sync(&self) -> usize {
        self.rounds_since_sync
    }

    /// Effective design pair: shared state plus local deltas.
    pub fn effective_design(&self) -> (DMatrix<f64>, DVector<f64>) {
        (
            &self.sync.gram + &self.local_gram,
            &self.sync.reward_vec + &self.local_reward_vec,
        )
    }

    /// Accumulates one observation into the local deltas.
    pub fn record_observation(&mut self, action: &DVector<f64>, reward: f64) {
        self.local_gram.ger(1.0, action, action, 1.0);
        self.local_reward_vec.axpy(reward, action, 1.0);
    }

    /// Event trigger: fires when the log-det ratio of the would-be design to
    /// the shared state exceeds `threshold / rounds_since_sync`. Never fires
    /// in the round right after a sync (`rounds_since_sync == 0`).
    pub fn sync_trigger(
        &self,
        action: &DVector<f64>,
        gamma_max: f64,
        gamma_min: f64,
        threshold: f64,
    ) -> Result<bool> {
        if self.rounds_since_sync == 0 {
            return Ok(false);
        }
        let log_det_sync = log_det_pd(&self.sync.gram)?;
        let (mut design, _) = self.effective_design();
        design.ger(1.0, action, action, 1.0);
        let shift = gamma_max - gamma_min;
        for i in 0..design.nrows() {
            design[(i, i)] += shift;
        }
        let log_det_candidate = log_det_pd(&design)?;
        Ok(log_det_candidate - log_det_sync >= threshold / self.rounds_since_sync as f64)
    }

    /// Adopts a broadcast state: local deltas zeroed, sync counter reset.
    pub fn apply_sync(&mut self, new_sync: SyncState) {
        let d = new_sync.dimension();
        self.sync = new_sync;
        self.local_gram = DMatrix::zeros(d, d);
        self.local_reward_vec = DVector::zeros(d);
        self.rounds_since_sync = 0;
    }

    /// Marks the end of a round without synchronization.
    pub fn advance_round(&mut self) {
        self.rounds_since_sync += 1;
    }
}

/// Solves `design * theta = target` through a symmetric positive-definite
/// factorization (no explicit inverse).
pub fn ridge_estimate(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = Cholesky::new(design.clone()).ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(target))
}

/// UCB action selection: maximizes `<center, x> + radius * ||x||_{shape^-1}`.
/// Ties break toward the lowest index.
pub fn select_action<'a>(
    ell: &ConfidenceEllipsoid,
    actions: &'a [DVector<f64>],
) -> Result<(usize, &'a DVector<f64>)> {
    if actions.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    let chol = Cholesky::new(ell.shape.clone()).ok_or(Error::NotPositiveDefinite)?;
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (i, x) in actions.iter().enumerate() {
        let q = x.dot(&chol.solve(x)).max(0.0);
        let score = ell.center.dot(x) + ell.radius * q.sqrt();
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    Ok((best, &actions[best]))
}

/// Log-determinant of a symmetric positive-definite matrix via Cholesky.
pub fn log_det_pd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        acc += l[(i, i)].ln();
    }
    Ok(2.0 * acc)
}
