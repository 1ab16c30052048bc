//! Bandit environment: hidden parameter, decision set, Bernoulli rewards and
//! per-round pseudo-regret.
//!
//! One environment is generated per trial and shared by every device; it is
//! immutable after construction, so concurrent trials may hold references
//! freely. Reward sampling takes a caller-supplied stream — there is no
//! hidden global RNG.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Norm bound on the hidden parameter.
pub const PARAM_NORM_BOUND: f64 = 1.0;
/// Norm bound on every action.
pub const ACTION_NORM_BOUND: f64 = 1.0;
/// Mean-reward window for the single optimal action.
pub const OPTIMAL_WINDOW: (f64, f64) = (0.7, 0.8);
/// Mean-reward window for every other action.
pub const SUBOPTIMAL_WINDOW: (f64, f64) = (0.5, 0.6);
/// Rejection-sampling budget per action.
pub const DEFAULT_ATTEMPT_BUDGET: usize = 10_000;

/// A fixed bandit instance: hidden parameter and finite decision set.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    theta_star: DVector<f64>,
    actions: Vec<DVector<f64>>,
    optimal_index: usize,
    dimension: usize,
}

/// One observed reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSample {
    /// Observed value, 0.0 or 1.0.
    pub value: f64,
    pub device: usize,
    pub round: usize,
}

impl Environment {
    /// Generates an environment with `num_actions` actions of dimension
    /// `dimension`, deterministically from `seed`.
    ///
    /// One action has mean reward in [0.7, 0.8]; the remaining
    /// `num_actions - 1` land in [0.5, 0.6]. Candidates are rejection-sampled:
    /// a uniform direction orthogonalized against the hidden parameter, with
    /// the parallel component scaled to hit a uniform target inner product
    /// inside the window. Fails if any action exhausts the attempt budget.
    pub fn generate(dimension: usize, num_actions: usize, seed: u64) -> Result<Self> {
        Self::generate_with_budget(dimension, num_actions, seed, DEFAULT_ATTEMPT_BUDGET)
    }

    pub fn generate_with_budget(
        dimension: usize,
        num_actions: usize,
        seed: u64,
        attempt_budget: usize,
    ) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidArgument(format!(
                "dimension must be >= 2, got {dimension}"
            )));
        }
        if num_actions == 0 || num_actions > dimension * dimension {
            return Err(Error::InvalidArgument(format!(
                "num_actions must be in 1..=d^2 = {}, got {num_actions}",
                dimension * dimension
            )));
        }
        let mut rng = <ChaCha12Rng as rand::SeedableRng>::seed_from_u64(seed);

        // Keep the parameter close to the unit sphere so both windows stay
        // reachable with unit-norm actions (0.8 upper edge needs norm >= 0.8).
        let direction = random_unit_vector(dimension, &mut rng);
        let norm = rng.random_range(0.85..1.0);
        let theta_star = direction * norm;

        let optimal = sample_action(&theta_star, OPTIMAL_WINDOW, attempt_budget, &mut rng)
            .map_err(|e| budget_err(e, 0))?;
        let mut actions = Vec::with_capacity(num_actions);
        for i in 1..num_actions {
            let a = sample_action(&theta_star, SUBOPTIMAL_WINDOW, attempt_budget, &mut rng)
                .map_err(|e| budget_err(e, i))?;
            actions.push(a);
        }
        let optimal_index = rng.random_range(0..num_actions);
        actions.insert(optimal_index, optimal);

        Ok(Self {
            theta_star,
            actions,
            optimal_index,
            dimension,
        })
    }

    /// Builds an environment from explicit parts, validating the invariants.
    /// Intended for tests and synthetic setups.
    pub fn from_parts(
        theta_star: DVector<f64>,
        actions: Vec<DVector<f64>>,
        optimal_index: usize,
    ) -> Result<Self> {
        let dimension = theta_star.len();
        if dimension == 0 || actions.is_empty() {
            return Err(Error::InvalidArgument(
                "empty parameter or action set".into(),
            ));
        }
        if optimal_index >= actions.len() {
            return Err(Error::InvalidArgument(format!(
                "optimal_index {optimal_index} out of range"
            )));
        }
        if theta_star.norm() > PARAM_NORM_BOUND + 1e-12 {
            return Err(Error::InvalidArgument("parameter norm exceeds bound".into()));
        }
        for a in &actions {
            if a.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: a.len(),
                });
            }
            if a.norm() > ACTION_NORM_BOUND + 1e-12 {
                return Err(Error::InvalidArgument("action norm exceeds bound".into()));
            }
        }
        Ok(Self {
            theta_star,
            actions,
            optimal_index,
            dimension,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn actions(&self) -> &[DVector<f64>] {
        &self.actions
    }

    pub fn optimal_index(&self) -> usize {
        self.optimal_index
    }

    /// Mean reward of an action: its inner product with the hidden parameter.
    pub fn mean_reward(&self, action: &DVector<f64>) -> f64 {
        action.dot(&self.theta_star)
    }

    /// Draws a Bernoulli reward with mean `<action, theta*>`.
    ///
    /// Consumes exactly one uniform draw from `rng` per call, so callers can
    /// replay reward streams independently of everything else.
    pub fn sample_reward<R: Rng>(
        &self,
        action: &DVector<f64>,
        device: usize,
        round: usize,
        rng: &mut R,
    ) -> Result<RewardSample> {
        let mean = self.mean_reward(action);
        if !(-1e-12..=1.0 + 1e-12).contains(&mean) {
            return Err(Error::RewardMeanOutOfRange { mean });
        }
        let u: f64 = rng.random();
        let value = if u < mean.clamp(0.0, 1.0) { 1.0 } else { 0.0 };
        Ok(RewardSample {
            value,
            device,
            round,
        })
    }

    /// Pseudo-regret of choosing the action at `index`:
    /// `<x_opt - x_index, theta*>`. Zero for the optimal action.
    pub fn instantaneous_regret(&self, index: usize) -> f64 {
        let best = self.mean_reward(&self.actions[self.optimal_index]);
        best - self.mean_reward(&self.actions[index])
    }
}

fn budget_err(e: Error, index: usize) -> Error {
    match e {
        Error::GenerationBudget { attempts, .. } => Error::GenerationBudget { index, attempts },
        other => other,
    }
}

fn random_unit_vector<R: Rng>(dimension: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(dimension, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Draws one action whose inner product with `theta_star` lands inside
/// `window` and whose norm stays within the unit ball.
fn sample_action<R: Rng>(
    theta_star: &DVector<f64>,
    window: (f64, f64),
    attempt_budget: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let theta_norm = theta_star.norm();
    let theta_hat = theta_star / theta_norm;
    for _ in 0..attempt_budget {
        let target = rng.random_range(window.0..window.1);
        let parallel = target / theta_norm;
        if parallel >= 1.0 {
            continue; // window unreachable inside the unit ball for this draw
        }
        let g = random_unit_vector(theta_star.len(), rng);
        let mut perp = &g - &theta_hat * g.dot(&theta_hat);
        let pn = perp.norm();
        if pn < 1e-9 {
            continue;
        }
        perp /= pn;
        let ortho = rng.random_range(0.0..1.0) * (1.0 - parallel * parallel).sqrt();
        let mut x = &theta_hat * parallel + perp * ortho;
        if x.norm() > ACTION_NORM_BOUND {
            x /= x.norm();
        }
        let ip = x.dot(theta_star);
        if ip >= window.0 && ip <= window.1 && x.norm() <= ACTION_NORM_BOUND {
            return Ok(x);
        }
    }
    Err(Error::GenerationBudget {
        index: 0,
        attempts: attempt_budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn generated_environment_satisfies_windows() {
        let env = Environment::generate(10, 20, 7).unwrap();
        assert_eq!(env.actions().len(), 20);
        assert!(env.theta_star().norm() <= 1.0 + 1e-12);
        let mut optimal_count = 0;
        for (i, a) in env.actions().iter().enumerate() {
            assert!(a.norm() <= 1.0 + 1e-12, "action {i} norm {}", a.norm());
            let ip = env.mean_reward(a);
            if i == env.optimal_index() {
                optimal_count += 1;
                assert!((0.7..=0.8).contains(&ip), "optimal ip {ip}");
            } else {
                assert!((0.5..=0.6).contains(&ip), "action {i} ip {ip}");
            }
        }
        assert_eq!(optimal_count, 1);
    }

    #[test]
    fn single_action_environment_is_optimal() {
        let env = Environment::generate(2, 1, 1).unwrap();
        assert_eq!(env.actions().len(), 1);
        assert_eq!(env.optimal_index(), 0);
        let ip = env.mean_reward(&env.actions()[0]);
        assert!((0.7..=0.8).contains(&ip));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = Environment::generate(10, 20, 7).unwrap();
        let b = Environment::generate(10, 20, 7).unwrap();
        assert_eq!(a.theta_star(), b.theta_star());
        assert_eq!(a.actions(), b.actions());
        assert_eq!(a.optimal_index(), b.optimal_index());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(Environment::generate(1, 1, 0).is_err());
        assert!(Environment::generate(3, 10, 0).is_err()); // K > d^2
        assert!(Environment::generate(3, 0, 0).is_err());
    }

    #[test]
    fn reward_degenerate_means() {
        let theta = DVector::from_vec(vec![1.0, 0.0]);
        let sure = DVector::from_vec(vec![1.0, 0.0]);
        let never = DVector::from_vec(vec![0.0, 1.0]);
        let env = Environment::from_parts(theta, vec![sure.clone(), never.clone()], 0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert_eq!(env.sample_reward(&sure, 0, 0, &mut rng).unwrap().value, 1.0);
            assert_eq!(env.sample_reward(&never, 0, 0, &mut rng).unwrap().value, 0.0);
        }
    }

    #[test]
    fn reward_mean_out_of_range_rejected() {
        let theta = DVector::from_vec(vec![1.0, 0.0]);
        let ok = DVector::from_vec(vec![1.0, 0.0]);
        let env = Environment::from_parts(theta, vec![ok], 0).unwrap();
        let bad = DVector::from_vec(vec![-0.5, 0.0]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(matches!(
            env.sample_reward(&bad, 0, 0, &mut rng),
            Err(Error::RewardMeanOutOfRange { .. })
        ));
    }

    // Monte-Carlo oracle: sample mean within 3*sqrt(p(1-p)/n) of p = 0.55.
    #[test]
    fn reward_mean_converges() {
        let env = Environment::generate(10, 20, 7).unwrap();
        // Pick a suboptimal action and use its true mean as the target.
        let idx = if env.optimal_index() == 0 { 1 } else { 0 };
        let action = env.actions()[idx].clone();
        let p = env.mean_reward(&action);
        let n = 100_000usize;
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += env.sample_reward(&action, 0, 0, &mut rng).unwrap().value;
        }
        let mean = sum / n as f64;
        let band = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (mean - p).abs() <= band,
            "mean {mean} target {p} band {band}"
        );
    }

    #[test]
    fn regret_is_nonnegative_and_zero_at_optimum() {
        let env = Environment::generate(10, 20, 7).unwrap();
        assert_eq!(env.instantaneous_regret(env.optimal_index()), 0.0);
        for i in 0..env.actions().len() {
            assert!(env.instantaneous_regret(i) >= 0.0);
        }
    }

    #[test]
    fn regret_hand_example() {
        // <x*, theta> = 0.75, <x, theta> = 0.55 -> regret 0.20
        let theta = DVector::from_vec(vec![1.0, 0.0]);
        let best = DVector::from_vec(vec![0.75, 0.1]);
        let other = DVector::from_vec(vec![0.55, 0.2]);
        let env = Environment::from_parts(theta, vec![best, other], 0).unwrap();
        assert!((env.instantaneous_regret(1) - 0.20).abs() < 1e-15);
    }
}
