use super::{Env, EnvSpec, RunningMoments, StepOutcome};
use crate::error::{Error, Result};

const VAR_EPS: f64 = 1e-8;
const MIN_REWARD_SCALE: f64 = 1e-4;

/// Pushes `obs` into `stats`, then standardizes it with the updated moments.
/// Observations pass through unchanged until two samples have been seen.
pub fn normalize_observation(stats: &mut RunningMoments, obs: &[f64]) -> Vec<f64> {
    stats.push(obs);
    standardize(stats, obs)
}

fn standardize(stats: &RunningMoments, obs: &[f64]) -> Vec<f64> {
    if stats.count < 2 {
        return obs.to_vec();
    }
    obs.iter()
        .zip(stats.mean.iter().zip(stats.variance()))
        .map(|(x, (m, v))| (x - m) / (v + VAR_EPS).sqrt())
        .collect()
}

/// Discounted reward accumulator `u` and its running variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardScaleState {
    pub u: f64,
    pub moments: RunningMoments,
}

impl Default for RewardScaleState {
    fn default() -> Self {
        RewardScaleState {
            u: 0.0,
            moments: RunningMoments::new(1),
        }
    }
}

impl RewardScaleState {
    fn divisor(&self) -> f64 {
        if self.moments.count < 2 {
            return 1.0;
        }
        (self.moments.variance()[0] + VAR_EPS).sqrt().max(MIN_REWARD_SCALE)
    }
}

/// `u <- (terminal ? 0 : discount * u) + reward`, then divides the reward by the
/// standard deviation of `u`.
pub fn scale_reward(state: &mut RewardScaleState, reward: f64, discount: f64, terminal: bool) -> f64 {
    state.u = if terminal { 0.0 } else { discount * state.u } + reward;
    state.moments.push(&[state.u]);
    reward / state.divisor()
}

/// Ends episodes after `max_episode_steps`, flagging them as truncated.
pub struct TimeLimit<E> {
    inner: E,
    spec: EnvSpec,
    elapsed: usize,
    /// Set once an episode ended here, so a truncated inner env is not stepped on.
    ended: bool,
}

impl<E: Env> TimeLimit<E> {
    pub fn new(inner: E, max_episode_steps: usize) -> Self {
        let mut spec = inner.spec().clone();
        spec.max_episode_steps = max_episode_steps;
        TimeLimit {
            inner,
            spec,
            elapsed: 0,
            ended: false,
        }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Env> Env for TimeLimit<E> {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.elapsed = 0;
        self.ended = false;
        self.inner.reset(seed)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.ended {
            return Err(Error::Usage("step after the episode ended; call reset first".into()));
        }
        let mut out = self.inner.step(action)?;
        self.elapsed += 1;
        if !out.terminal && self.elapsed >= self.spec.max_episode_steps {
            out.terminal = true;
            out.truncated = true;
        }
        self.ended = out.terminal;
        Ok(out)
    }

    fn set_training(&mut self, training: bool) {
        self.inner.set_training(training)
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}

/// Reward scaling wrapper; statistics only move while training.
pub struct ScaleReward<E> {
    inner: E,
    state: RewardScaleState,
    gamma: f64,
    enabled: bool,
    training: bool,
}

impl<E: Env> ScaleReward<E> {
    pub fn new(inner: E, gamma: f64, enabled: bool) -> Self {
        ScaleReward {
            inner,
            state: RewardScaleState::default(),
            gamma,
            enabled,
            training: true,
        }
    }

    pub fn state(&self) -> &RewardScaleState {
        &self.state
    }
}

impl<E: Env> Env for ScaleReward<E> {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.inner.reset(seed)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let mut out = self.inner.step(action)?;
        if self.enabled {
            out.reward = if self.training {
                scale_reward(&mut self.state, out.reward, self.gamma, out.terminal)
            } else {
                out.reward / self.state.divisor()
            };
        }
        Ok(out)
    }

    fn set_training(&mut self, training: bool) {
        self.training = training;
        self.inner.set_training(training)
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}

/// Observation standardization wrapper; statistics are global across episodes
/// and only move while training.
pub struct NormalizeObservation<E> {
    inner: E,
    moments: RunningMoments,
    enabled: bool,
    training: bool,
}

impl<E: Env> NormalizeObservation<E> {
    pub fn new(inner: E, enabled: bool) -> Self {
        let dim = inner.spec().observation_dim;
        NormalizeObservation {
            inner,
            moments: RunningMoments::new(dim),
            enabled,
            training: true,
        }
    }

    /// Wraps `inner` with fixed statistics that are never updated.
    pub fn frozen(inner: E, moments: RunningMoments, enabled: bool) -> Result<Self> {
        if moments.dim() != inner.spec().observation_dim {
            return Err(Error::Usage(format!(
                "moments of dimension {} for observations of dimension {}",
                moments.dim(),
                inner.spec().observation_dim
            )));
        }
        Ok(NormalizeObservation {
            inner,
            moments,
            enabled,
            training: false,
        })
    }

    pub fn moments(&self) -> &RunningMoments {
        &self.moments
    }

    /// Replaces the statistics, e.g. to sync an evaluation copy with training.
    pub fn set_moments(&mut self, moments: RunningMoments) -> Result<()> {
        if moments.dim() != self.moments.dim() {
            return Err(Error::Usage(format!(
                "moments of dimension {} for observations of dimension {}",
                moments.dim(),
                self.moments.dim()
            )));
        }
        self.moments = moments;
        Ok(())
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    /// Applies the current statistics without updating them.
    pub fn transform(&self, obs: &[f64]) -> Vec<f64> {
        if self.enabled {
            standardize(&self.moments, obs)
        } else {
            obs.to_vec()
        }
    }

    fn process(&mut self, obs: Vec<f64>) -> Result<Vec<f64>> {
        if obs.len() != self.moments.dim() {
            return Err(Error::Env(format!(
                "observation of length {} from an environment declaring {}",
                obs.len(),
                self.moments.dim()
            )));
        }
        Ok(match (self.enabled, self.training) {
            (false, _) => obs,
            (true, true) => normalize_observation(&mut self.moments, &obs),
            (true, false) => standardize(&self.moments, &obs),
        })
    }
}

impl<E: Env> Env for NormalizeObservation<E> {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let obs = self.inner.reset(seed)?;
        self.process(obs)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let mut out = self.inner.step(action)?;
        out.obs = self.process(std::mem::take(&mut out.obs))?;
        Ok(out)
    }

    fn set_training(&mut self, training: bool) {
        self.training = training;
        self.inner.set_training(training)
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_observations_go_to_zero() {
        let mut m = RunningMoments::new(2);
        assert_eq!(normalize_observation(&mut m, &[3.0, -1.0]), vec![3.0, -1.0]);
        for _ in 0..5 {
            assert_eq!(normalize_observation(&mut m, &[3.0, -1.0]), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn zero_rewards_stay_zero() {
        let mut s = RewardScaleState::default();
        for i in 0..50 {
            assert_eq!(scale_reward(&mut s, 0.0, 0.99, i % 7 == 0), 0.0);
        }
    }

    #[test]
    fn constant_reward_hits_the_guard() {
        let mut s = RewardScaleState::default();
        assert_eq!(scale_reward(&mut s, 1.0, 0.0, false), 1.0);
        for _ in 0..10 {
            let r = scale_reward(&mut s, 1.0, 0.0, false);
            assert!((r - 1e4).abs() < 1e-6, "{r}");
        }
    }

    #[test]
    fn scaling_preserves_sign() {
        let mut s = RewardScaleState::default();
        let rewards = [0.3, -2.0, 5.0, 0.0, -0.1, 1.0, 1.0, -7.5];
        for (i, &r) in rewards.iter().cycle().take(200).enumerate() {
            let out = scale_reward(&mut s, r, 0.9, i % 13 == 12);
            assert_eq!(out.signum() * r.abs().signum(), r.signum() * r.abs().signum());
            if r == 0.0 {
                assert_eq!(out, 0.0);
            }
        }
    }
}
