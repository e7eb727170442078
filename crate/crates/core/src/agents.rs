//! Streaming control agents. Each agent learns from exactly one transition per
//! call to [`Agent::observe`]: no replay buffer, no target network.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::approximator::{NetworkSpec, ParamVector};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::objectives::{
    c51_cross_entropy, c51_project, mse, quantile_huber, smooth_l1, softmax, td_error_control, CategoricalDistribution,
    LossGrad, Support,
};
use crate::optim::{
    adam_step, aq_lambda_step, obgd_step, reset_trace, trace_accumulate, AdamConfig, AdamState, TraceState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Dqn,
    C51,
    StreamQ,
    AqLambda,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Dqn, Algorithm::C51, Algorithm::StreamQ, Algorithm::AqLambda];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::C51 => "c51",
            Algorithm::StreamQ => "streamq",
            Algorithm::AqLambda => "aqlambda",
        }
    }

    pub fn default_objective(self) -> ObjectiveKind {
        match self {
            Algorithm::Dqn => ObjectiveKind::SmoothL1,
            Algorithm::C51 => ObjectiveKind::Categorical,
            Algorithm::StreamQ => ObjectiveKind::Mse,
            Algorithm::AqLambda => ObjectiveKind::SmoothL1,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dqn" => Ok(Algorithm::Dqn),
            "c51" => Ok(Algorithm::C51),
            "streamq" | "stream_q" => Ok(Algorithm::StreamQ),
            "aqlambda" | "aq_lambda" | "aql" => Ok(Algorithm::AqLambda),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Mse,
    SmoothL1,
    Categorical,
    Quantile,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Mse => "mse",
            ObjectiveKind::SmoothL1 => "smooth_l1",
            ObjectiveKind::Categorical => "categorical",
            ObjectiveKind::Quantile => "quantile",
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "mse" => Ok(ObjectiveKind::Mse),
            "smooth_l1" | "smoothl1" | "huber" => Ok(ObjectiveKind::SmoothL1),
            "categorical" => Ok(ObjectiveKind::Categorical),
            "quantile" => Ok(ObjectiveKind::Quantile),
            other => Err(Error::Config(format!("unknown objective '{other}'"))),
        }
    }
}

/// Linear decay of the exploration rate, constant after `decay_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationSchedule {
    pub eps_start: f64,
    pub eps_end: f64,
    pub decay_steps: u64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        ExplorationSchedule {
            eps_start: 1.0,
            eps_end: 0.01,
            decay_steps: 2_500_000,
        }
    }
}

impl ExplorationSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 1.0) {
            return Err(Error::Config(format!(
                "exploration needs 0 <= eps_end <= eps_start <= 1, got {} -> {}",
                self.eps_start, self.eps_end
            )));
        }
        if self.decay_steps == 0 {
            return Err(Error::Config("exploration decay_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.eps_end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.eps_start + frac * (self.eps_end - self.eps_start)
    }
}

/// Everything needed to build an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub objective: ObjectiveKind,
    pub gamma: f64,
    pub lr: f64,
    /// Adam settings (DQN, C51). `adam.epsilon` doubles as the AQ(lambda) epsilon.
    pub adam: AdamConfig,
    pub lambda: f64,
    /// ObGD overshoot factor.
    pub kappa: f64,
    /// Threshold of SmoothL1 and quantile Huber losses.
    pub huber_kappa: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub network: NetworkSpec,
    pub schedule: ExplorationSchedule,
    pub seed: u64,
}

impl AgentConfig {
    /// Defaults for `algorithm` on an environment with the given observation
    /// and action counts. Optimizer values follow the published ALE settings.
    pub fn new(algorithm: Algorithm, input_dim: usize, actions: usize) -> Self {
        let (lr, epsilon, atoms) = match algorithm {
            Algorithm::Dqn => (2.2e-6, 0.01, 1),
            Algorithm::C51 => (4.6e-5, 0.01, 200),
            Algorithm::StreamQ => (1.0, 0.01, 1),
            Algorithm::AqLambda => (4.6e-4, 0.1, 1),
        };
        AgentConfig {
            algorithm,
            objective: algorithm.default_objective(),
            gamma: 0.99,
            lr,
            adam: AdamConfig {
                beta0: 0.999,
                beta1: 0.999,
                epsilon,
                bias_correction: false,
            },
            lambda: 0.8,
            kappa: 2.0,
            huber_kappa: 1.0,
            v_min: -10.0,
            v_max: 10.0,
            network: NetworkSpec::new(input_dim, vec![32, 32], actions, atoms),
            schedule: ExplorationSchedule::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        use Algorithm::*;
        use ObjectiveKind::*;
        let ok = matches!(
            (self.algorithm, self.objective),
            (Dqn, Mse) | (Dqn, SmoothL1) | (Dqn, Quantile) | (C51, Categorical) | (StreamQ, Mse) | (AqLambda, SmoothL1)
        );
        if !ok {
            return Err(Error::Config(format!(
                "objective {} is not available for {}",
                self.objective, self.algorithm
            )));
        }
        self.network.validate()?;
        let k = self.network.atoms_per_action;
        match self.objective {
            Categorical if k < 2 => return Err(Error::Config("categorical head needs at least 2 atoms".into())),
            Mse | SmoothL1 if k != 1 => {
                return Err(Error::Config(format!(
                    "scalar objective {} needs 1 atom per action, got {k}",
                    self.objective
                )))
            }
            _ => {}
        }
        if self.objective == Categorical {
            Support::new(self.v_min, self.v_max, k)?;
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("discount {} outside [0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.kappa > 0.0) || !(self.huber_kappa > 0.0) {
            return Err(Error::Config("kappa values must be positive".into()));
        }
        self.adam.validate()?;
        self.schedule.validate()
    }

    /// The network shape with the last hidden layer widened so a scalar head has about
    /// as many parameters as the same trunk with `atoms`-wide heads.
    pub fn capacity_matched(&self, atoms: usize) -> Result<NetworkSpec> {
        let mut reference = self.network.clone();
        reference.atoms_per_action = atoms;
        self.network.matched_hidden_width(reference.param_count())
    }
}

/// One interaction, as consumed by [`Agent::observe`].
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Episode over (naturally or by time limit).
    pub terminal: bool,
    /// Ended by the time limit: still bootstraps from `next_obs`.
    pub truncated: bool,
    /// The action came from the greedy branch of the policy.
    pub greedy: bool,
}

/// Logged per learning step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub delta: f64,
    pub update_norm: f64,
    pub loss: f64,
    /// TD error after clipping (AQ(lambda) only).
    pub clipped_delta: Option<f64>,
    /// `eta_eff * kappa * max(|delta|, 1) * ||z||_1` (StreamQ only).
    pub obgd_certificate: Option<f64>,
    /// Objective gradient sup-norm with respect to the network outputs.
    pub output_grad_sup: f64,
}

#[derive(Debug, Clone)]
enum Learner {
    Adam(AdamState),
    Trace(TraceState),
}

/// A streaming agent: parameters plus optimizer state, nothing else.
#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    params: ParamVector,
    learner: Learner,
    support: Option<Support>,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl Agent {
    pub fn new(config: AgentConfig) -> Result<Self> {
        config.validate()?;
        let params = config.network.init_sparse(config.seed)?;
        let len = params.len();
        let decay = config.gamma * config.lambda;
        let learner = match config.algorithm {
            Algorithm::Dqn | Algorithm::C51 => Learner::Adam(AdamState::new(len, config.adam)?),
            Algorithm::StreamQ => Learner::Trace(TraceState::new(len, decay)?),
            Algorithm::AqLambda => Learner::Trace(TraceState::with_second_moment(len, decay)?),
        };
        let support = match config.objective {
            ObjectiveKind::Categorical => Some(Support::new(
                config.v_min,
                config.v_max,
                config.network.atoms_per_action,
            )?),
            _ => None,
        };
        Ok(Agent {
            config,
            params,
            learner,
            support,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn trace(&self) -> Option<&TraceState> {
        match &self.learner {
            Learner::Trace(t) => Some(t),
            Learner::Adam(_) => None,
        }
    }

    pub fn adam(&self) -> Option<&AdamState> {
        match &self.learner {
            Learner::Adam(a) => Some(a),
            Learner::Trace(_) => None,
        }
    }

    /// Number of reals held by the agent (parameters plus optimizer state).
    pub fn state_len(&self) -> usize {
        let opt = match &self.learner {
            Learner::Adam(a) => a.m.len() + a.v.len(),
            Learner::Trace(t) => t.z.len() + t.v.as_ref().map_or(0, |v| v.len()),
        };
        self.params.len() + opt
    }

    fn actions(&self) -> usize {
        self.config.network.heads
    }

    fn head<'a>(&self, outputs: &'a [f64], action: usize) -> &'a [f64] {
        let k = self.config.network.atoms_per_action;
        &outputs[action * k..(action + 1) * k]
    }

    fn q_from_outputs(&self, outputs: &[f64]) -> Vec<f64> {
        (0..self.actions())
            .map(|a| {
                let head = self.head(outputs, a);
                match (self.config.objective, self.support) {
                    (ObjectiveKind::Categorical, Some(s)) => {
                        softmax(head).iter().enumerate().map(|(i, p)| p * s.atom(i)).sum()
                    }
                    (ObjectiveKind::Quantile, _) => head.iter().sum::<f64>() / head.len() as f64,
                    _ => head[0],
                }
            })
            .collect()
    }

    /// Action values `q(s, .)`; for C51 the mean of each return distribution.
    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let out = self.config.network.evaluate(&self.params, obs)?;
        Ok(self.q_from_outputs(&out))
    }

    pub fn greedy_action(&self, obs: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(obs)?))
    }

    /// Epsilon-greedy action at `global_step`; the flag is false whenever the
    /// exploration branch was taken, even if it picked the greedy action.
    pub fn act<R: Rng>(&self, obs: &[f64], global_step: u64, rng: &mut R) -> Result<(usize, bool)> {
        self.act_with_epsilon(obs, self.config.schedule.epsilon(global_step), rng)
    }

    pub fn act_with_epsilon<R: Rng>(&self, obs: &[f64], epsilon: f64, rng: &mut R) -> Result<(usize, bool)> {
        if rng.gen::<f64>() < epsilon {
            Ok((rng.gen_range(0..self.actions()), false))
        } else {
            Ok((self.greedy_action(obs)?, true))
        }
    }

    /// One learning step on `t` alone.
    pub fn observe(&mut self, t: &Transition) -> Result<StepReport> {
        if t.action >= self.actions() {
            return Err(Error::Usage(format!(
                "action {} out of range for {} actions",
                t.action,
                self.actions()
            )));
        }
        if !t.reward.is_finite() {
            return Err(Error::numeric("reward", 0));
        }
        let bootstrap_off = t.terminal && !t.truncated;
        let report = match self.config.algorithm {
            Algorithm::Dqn | Algorithm::C51 => self.adam_update(t, bootstrap_off)?,
            Algorithm::StreamQ | Algorithm::AqLambda => self.trace_update(t, bootstrap_off)?,
        };
        if let Some(i) = self.params.first_non_finite() {
            return Err(Error::numeric("parameter after update", i));
        }
        Ok(report)
    }

    fn adam_update(&mut self, t: &Transition, bootstrap_off: bool) -> Result<StepReport> {
        let net = &self.config.network;
        let gamma = self.config.gamma;
        let next_out = net.evaluate(&self.params, &t.next_obs)?;
        let next_q = self.q_from_outputs(&next_out);
        let best_next = argmax(&next_q);
        let (out, cache) = net.forward(&self.params, &t.obs)?;
        let k = net.atoms_per_action;
        let head = self.head(&out, t.action).to_vec();
        let q_now = self.q_from_outputs(&out)[t.action];

        let (delta, lg) = match self.config.objective {
            ObjectiveKind::Mse | ObjectiveKind::SmoothL1 => {
                let delta = td_error_control(q_now, next_q[best_next], t.reward, gamma, bootstrap_off);
                let target = q_now + delta;
                let lg = if self.config.objective == ObjectiveKind::Mse {
                    mse(q_now, target)?
                } else {
                    smooth_l1(q_now, target, self.config.huber_kappa)?
                };
                (delta, lg)
            }
            ObjectiveKind::Categorical => {
                let support = self.support.expect("categorical agents carry a support");
                let source = CategoricalDistribution::from_logits(support, self.head(&next_out, best_next))?;
                let target = c51_project(&source, t.reward, gamma, bootstrap_off)?;
                let lg = c51_cross_entropy(&head, &target)?;
                (target.mean() - q_now, lg)
            }
            ObjectiveKind::Quantile => {
                let targets: Vec<f64> = if bootstrap_off {
                    vec![t.reward]
                } else {
                    self.head(&next_out, best_next)
                        .iter()
                        .map(|q| t.reward + gamma * q)
                        .collect()
                };
                let lg = quantile_huber(&head, &targets, self.config.huber_kappa)?;
                let target_mean = targets.iter().sum::<f64>() / targets.len() as f64;
                (target_mean - q_now, lg)
            }
        };
        let LossGrad { loss, grad } = lg;
        let mut output_grad = vec![0.0; out.len()];
        output_grad[t.action * k..(t.action + 1) * k].copy_from_slice(&grad);
        let output_grad_sup = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let param_grad = net.backward(&self.params, &cache, &output_grad)?;
        let Learner::Adam(state) = &mut self.learner else {
            unreachable!("adam agents hold an Adam state")
        };
        let update_norm = adam_step(state, &mut self.params, &param_grad, self.config.lr)?;
        Ok(StepReport {
            delta,
            update_norm,
            loss,
            clipped_delta: None,
            obgd_certificate: None,
            output_grad_sup,
        })
    }

    fn trace_update(&mut self, t: &Transition, bootstrap_off: bool) -> Result<StepReport> {
        let net = &self.config.network;
        let next_q = self.q_values(&t.next_obs)?;
        let q_next_max = next_q[argmax(&next_q)];
        let (out, cache) = net.forward(&self.params, &t.obs)?;
        let q_now = out[t.action];
        let delta = td_error_control(q_now, q_next_max, t.reward, self.config.gamma, bootstrap_off);
        let mut one_hot = vec![0.0; out.len()];
        one_hot[t.action] = 1.0;
        let grad_q = net.backward(&self.params, &cache, &one_hot)?;
        let Learner::Trace(state) = &mut self.learner else {
            unreachable!("trace agents hold a trace state")
        };
        trace_accumulate(state, &grad_q)?;
        let mut report = StepReport {
            delta,
            update_norm: 0.0,
            loss: 0.0,
            clipped_delta: None,
            obgd_certificate: None,
            output_grad_sup: 0.0,
        };
        match self.config.algorithm {
            Algorithm::StreamQ => {
                let r = obgd_step(state, &mut self.params, delta, self.config.lr, self.config.kappa)?;
                report.update_norm = r.update_norm;
                report.obgd_certificate = Some(r.certificate);
                report.loss = delta * delta;
                report.output_grad_sup = 2.0 * delta.abs();
            }
            _ => {
                let r = aq_lambda_step(state, &mut self.params, delta, self.config.lr, self.config.adam.epsilon)?;
                report.update_norm = r.update_norm;
                report.clipped_delta = Some(r.clipped_delta);
                let lg = smooth_l1(q_now, q_now + delta, 1.0)?;
                report.loss = lg.loss;
                report.output_grad_sup = lg.grad[0].abs();
            }
        }
        if t.terminal || !t.greedy {
            reset_trace(state, false);
        }
        Ok(report)
    }
}

/// How an episode is driven.
#[derive(Debug)]
pub enum EpisodeMode<'a> {
    /// Learn from every transition; epsilon follows the schedule at `global_step`,
    /// which is advanced once per step.
    Train { global_step: &'a mut u64 },
    /// No learning, fixed exploration rate.
    Evaluate { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// Undiscounted sum of raw (unscaled) rewards.
    pub episode_return: f64,
    pub steps: usize,
    pub reports: Vec<StepReport>,
}

/// Runs from `obs` (the observation returned by the caller's reset) until the
/// episode ends or `step_budget` steps were taken.
pub fn run_episode<E: Env + ?Sized, R: Rng>(
    agent: &mut Agent,
    env: &mut E,
    mut obs: Vec<f64>,
    rng: &mut R,
    step_budget: usize,
    mut mode: EpisodeMode<'_>,
) -> Result<EpisodeResult> {
    let mut result = EpisodeResult {
        episode_return: 0.0,
        steps: 0,
        reports: Vec::new(),
    };
    while result.steps < step_budget {
        let (action, greedy) = match &mode {
            EpisodeMode::Train { global_step } => agent.act(&obs, **global_step, rng)?,
            EpisodeMode::Evaluate { epsilon } => agent.act_with_epsilon(&obs, *epsilon, rng)?,
        };
        let out = env.step(action)?;
        result.episode_return += out.raw_reward;
        result.steps += 1;
        if let EpisodeMode::Train { global_step } = &mut mode {
            let t = Transition {
                obs: std::mem::take(&mut obs),
                action,
                reward: out.reward,
                next_obs: out.obs.clone(),
                terminal: out.terminal,
                truncated: out.truncated,
                greedy,
            };
            result.reports.push(agent.observe(&t)?);
            **global_step += 1;
        }
        obs = out.obs;
        if out.terminal {
            break;
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ChainMDP, EnvSpec, StepOutcome};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(algorithm: Algorithm) -> AgentConfig {
        let mut c = AgentConfig::new(algorithm, 3, 2);
        c.network.hidden_dims = vec![8];
        c.network.layer_norm = vec![true];
        if algorithm == Algorithm::C51 {
            c.network.atoms_per_action = 11;
        }
        c
    }

    fn transition(reward: f64, terminal: bool, greedy: bool) -> Transition {
        Transition {
            obs: vec![1.0, 0.0, -1.0],
            action: 1,
            reward,
            next_obs: vec![0.0, 1.0, 0.5],
            terminal,
            truncated: false,
            greedy,
        }
    }

    #[test]
    fn schedule_points() {
        let s = ExplorationSchedule::default();
        assert_eq!(s.epsilon(0), 1.0);
        assert_eq!(s.epsilon(2_500_000), 0.01);
        assert_eq!(s.epsilon(10_000_000), 0.01);
        assert!((s.epsilon(1_250_000) - 0.505).abs() < 1e-15);
    }

    #[test]
    fn incompatible_objective_rejected() {
        let mut c = config(Algorithm::C51);
        c.objective = ObjectiveKind::Mse;
        assert!(matches!(Agent::new(c), Err(Error::Config(_))));
        let mut c = config(Algorithm::Dqn);
        c.objective = ObjectiveKind::Categorical;
        assert!(Agent::new(c).is_err());
    }

    #[test]
    fn zero_error_means_no_update() {
        for alg in [Algorithm::Dqn, Algorithm::AqLambda, Algorithm::StreamQ] {
            let mut agent = Agent::new(config(alg)).unwrap();
            agent.params_mut().fill_zero();
            let before = agent.params().clone();
            let r = agent.observe(&transition(0.0, false, true)).unwrap();
            assert_eq!(r.delta, 0.0, "{alg}");
            assert_eq!(r.update_norm, 0.0, "{alg}");
            assert_eq!(agent.params(), &before);
        }
    }

    #[test]
    fn non_greedy_and_terminal_reset_trace() {
        for alg in [Algorithm::AqLambda, Algorithm::StreamQ] {
            let mut agent = Agent::new(config(alg)).unwrap();
            agent.observe(&transition(1.0, false, true)).unwrap();
            assert!(agent.trace().unwrap().z.norm_inf() > 0.0);
            agent.observe(&transition(1.0, false, false)).unwrap();
            assert_eq!(agent.trace().unwrap().z.norm_inf(), 0.0);
            agent.observe(&transition(1.0, false, true)).unwrap();
            agent.observe(&transition(1.0, true, true)).unwrap();
            assert_eq!(agent.trace().unwrap().z.norm_inf(), 0.0);
            if alg == Algorithm::AqLambda {
                assert!(agent.trace().unwrap().v.as_ref().unwrap().norm_inf() > 0.0);
            }
        }
    }

    #[test]
    fn aq_lambda_reports_clipped_delta() {
        let mut agent = Agent::new(config(Algorithm::AqLambda)).unwrap();
        let r = agent.observe(&transition(50.0, true, true)).unwrap();
        assert!(r.delta > 1.0);
        assert_eq!(r.clipped_delta, Some(1.0));
    }

    #[test]
    fn nan_reward_is_numeric_fault() {
        let mut agent = Agent::new(config(Algorithm::Dqn)).unwrap();
        let err = agent.observe(&transition(f64::NAN, false, true)).unwrap_err();
        assert!(err.is_numeric());
    }

    #[test]
    fn greedy_action_invariant_to_positive_scaling() {
        let mut agent = Agent::new(config(Algorithm::Dqn)).unwrap();
        let obs = [0.3, -0.2, 0.9];
        let a = agent.greedy_action(&obs).unwrap();
        // scaling the output layer scales every q-value
        let net = agent.config().network.clone();
        let out_layer = net.param_count() - (8 * 2 + 2);
        for w in agent.params_mut()[out_layer..].iter_mut() {
            *w *= 3.7;
        }
        assert_eq!(agent.greedy_action(&obs).unwrap(), a);
    }

    #[test]
    fn state_size_is_constant() {
        let mut agent = Agent::new(config(Algorithm::C51)).unwrap();
        let size = agent.state_len();
        for i in 0..200 {
            agent
                .observe(&transition((i % 3) as f64, i % 7 == 0, i % 2 == 0))
                .unwrap();
        }
        assert_eq!(agent.state_len(), size);
    }

    struct OneStep {
        spec: EnvSpec,
    }

    impl Env for OneStep {
        fn spec(&self) -> &EnvSpec {
            &self.spec
        }
        fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
            Ok(vec![0.0; 3])
        }
        fn step(&mut self, _action: usize) -> Result<StepOutcome> {
            Ok(StepOutcome {
                obs: vec![1.0; 3],
                reward: 1.0,
                raw_reward: 1.0,
                terminal: true,
                truncated: false,
            })
        }
        fn name(&self) -> String {
            "one_step".into()
        }
    }

    #[test]
    fn episode_edge_cases() {
        let mut env = OneStep {
            spec: EnvSpec {
                observation_dim: 3,
                action_count: 2,
                max_episode_steps: 10,
                reward_range: (0.0, 1.0),
            },
        };
        let mut agent = Agent::new(config(Algorithm::Dqn)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut step = 0;
        let obs = env.reset(0).unwrap();
        let r = run_episode(
            &mut agent,
            &mut env,
            obs.clone(),
            &mut rng,
            100,
            EpisodeMode::Train { global_step: &mut step },
        )
        .unwrap();
        assert_eq!((r.episode_return, r.steps, step), (1.0, 1, 1));
        let r = run_episode(
            &mut agent,
            &mut env,
            obs,
            &mut rng,
            0,
            EpisodeMode::Train { global_step: &mut step },
        )
        .unwrap();
        assert_eq!((r.episode_return, r.steps, step), (0.0, 0, 1));
    }

    #[test]
    fn episodes_are_reproducible() {
        let go = || {
            let mut cfg = AgentConfig::new(Algorithm::AqLambda, 6, 2);
            cfg.seed = 9;
            let mut agent = Agent::new(cfg).unwrap();
            let mut env = ChainMDP::new(6).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut step = 0;
            let mut out = Vec::new();
            for ep in 0..5 {
                let obs = env.reset(ep).unwrap();
                let r = run_episode(
                    &mut agent,
                    &mut env,
                    obs,
                    &mut rng,
                    500,
                    EpisodeMode::Train { global_step: &mut step },
                )
                .unwrap();
                out.push((r.steps, r.reports.iter().map(|r| r.delta.to_bits()).collect::<Vec<_>>()));
            }
            (out, agent.params().clone())
        };
        assert_eq!(go(), go());
    }
}
