//! Desk-scale environments, normalization wrappers and the stdio bridge.

mod bridge;
mod builtin;
mod moments;
mod wrappers;

pub use bridge::{BridgeEnv, DEFAULT_TIMEOUT};
pub use builtin::{Catch, ChainMDP, GridWorld, RandomMDP};
pub use moments::RunningMoments;
pub use wrappers::{
    normalize_observation, scale_reward, NormalizeObservation, RewardScaleState, ScaleReward, TimeLimit,
};

use crate::error::Result;
use crate::oracle::TabularMDP;

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub action_count: usize,
    pub max_episode_steps: usize,
    /// Informational only.
    pub reward_range: (f64, f64),
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    /// Reward as seen by the learner (possibly scaled by wrappers).
    pub reward: f64,
    /// Reward emitted by the underlying environment, untouched by wrappers.
    pub raw_reward: f64,
    /// The episode is over, either naturally or by the time limit.
    pub terminal: bool,
    /// The episode was cut by the time limit rather than ending naturally.
    pub truncated: bool,
}

pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a fresh episode; deterministic in `seed`.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;

    fn step(&mut self, action: usize) -> Result<StepOutcome>;

    /// Wrappers only update their running statistics while training.
    fn set_training(&mut self, _training: bool) {}

    fn name(&self) -> String;
}

impl Env for Box<dyn Env> {
    fn spec(&self) -> &EnvSpec {
        (**self).spec()
    }
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        (**self).reset(seed)
    }
    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        (**self).step(action)
    }
    fn set_training(&mut self, training: bool) {
        (**self).set_training(training)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

/// Environments with a known finite state space, so value iteration can
/// provide the optimal policy.
pub trait TabularEnv {
    fn tabular(&self, gamma: f64) -> TabularMDP;

    /// Raw observation emitted in state `s`.
    fn observation_of(&self, s: usize) -> Vec<f64>;

    /// Non-terminal states reachable from the start state.
    fn decision_states(&self) -> Vec<usize>;
}
