//! Flat `key = value` configuration with dotted section names.
//!
//! ```text
//! # comment
//! algorithm = aqlambda
//! envs = chain7, grid5x5
//! optim.beta0 = 0.999
//! run.seeds = 0, 1, 2
//! ```
//!
//! Unknown keys are errors. Values may be overridden from the environment
//! (`STREAMRL_OPTIM__BETA0=0.9`) and from the command line (`optim.beta0=0.9`),
//! in that order of increasing precedence.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use crate::agents::{AgentConfig, Algorithm, ExplorationSchedule, ObjectiveKind};
use crate::approximator::Activation;
use crate::error::{Error, Result};
use crate::evalstats::format_real;
use crate::optim::AdamConfig;

pub const ENV_PREFIX: &str = "STREAMRL_";

/// Parsed `key = value` lines, in file order.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got {raw:?}", n + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// `key=value` command-line overrides.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    args.iter()
        .map(|a| {
            a.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Usage(format!("override {a:?} is not of the form key=value")))
        })
        .collect()
}

/// Environment variable consulted for `key`.
pub fn env_var_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_ascii_uppercase().replace('.', "__"))
}

/// Values for `keys` found among the given environment variables.
pub fn env_overrides<I>(keys: &[&str], vars: I) -> Vec<(String, String)>
where
    I: IntoIterator<Item = (String, String)>,
{
    let vars: BTreeMap<String, String> = vars.into_iter().collect();
    keys.iter()
        .filter_map(|k| vars.get(&env_var_name(k)).map(|v| (k.to_string(), v.clone())))
        .collect()
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_real(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse(key, value)?;
    if v.is_nan() {
        return Err(Error::Config(format!("{key}: NaN is not a valid value")));
    }
    Ok(v)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected a boolean, got {other:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v)).collect()
}

fn parse_opt<T>(key: &str, value: &str, f: impl Fn(&str, &str) -> Result<T>) -> Result<Option<T>> {
    match value.trim() {
        "" | "auto" | "default" => Ok(None),
        v => f(key, v).map(Some),
    }
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn unknown(key: &str) -> Error {
    Error::Config(format!("unknown configuration key '{key}'"))
}

/// Settings of a training grid: algorithm, environments, seeds, budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    /// `None` picks the algorithm's default objective.
    pub objective: Option<ObjectiveKind>,
    /// Environment names, e.g. `chain7`, `grid5x5`, `catch`, `random10x3`, `bridge`.
    pub envs: Vec<String>,
    pub env_max_steps: usize,
    pub env_mdp_seed: u64,
    pub bridge_command: Vec<String>,
    pub bridge_obs_dim: usize,
    pub bridge_actions: usize,
    pub bridge_timeout_ms: u64,
    pub normalize_obs: bool,
    pub scale_reward: bool,
    pub gamma: f64,
    /// `None` picks the algorithm's default step size.
    pub lr: Option<f64>,
    pub beta0: f64,
    pub beta1: f64,
    /// Adam epsilon, or the AQ(lambda) epsilon; `None` picks the algorithm default.
    pub epsilon: Option<f64>,
    pub bias_correction: bool,
    pub lambda: f64,
    pub kappa: f64,
    pub huber_kappa: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Atoms (C51) or quantiles per action; `None` picks the default.
    pub atoms: Option<usize>,
    pub hidden: Vec<usize>,
    pub layer_norm: bool,
    pub sparsity: f64,
    pub activation: Activation,
    /// Widen scalar-head networks to the parameter count of the categorical head.
    pub match_capacity: bool,
    pub schedule: ExplorationSchedule,
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// `None` evaluates with the final exploration rate.
    pub eval_epsilon: Option<f64>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub log_every: u64,
    /// Debug hook: feed a NaN reward at this global step.
    pub inject_nan_at: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: Algorithm::AqLambda,
            objective: None,
            envs: vec!["chain7".into()],
            env_max_steps: 1000,
            env_mdp_seed: 0,
            bridge_command: Vec::new(),
            bridge_obs_dim: 0,
            bridge_actions: 0,
            bridge_timeout_ms: 10_000,
            normalize_obs: true,
            scale_reward: true,
            gamma: 0.99,
            lr: None,
            beta0: 0.999,
            beta1: 0.999,
            epsilon: None,
            bias_correction: false,
            lambda: 0.8,
            kappa: 2.0,
            huber_kappa: 1.0,
            v_min: -10.0,
            v_max: 10.0,
            atoms: None,
            hidden: vec![32, 32],
            layer_norm: true,
            sparsity: 0.9,
            activation: Activation::LeakyRelu,
            match_capacity: false,
            schedule: ExplorationSchedule::default(),
            total_steps: 100_000,
            eval_every: 10_000,
            eval_episodes: 5,
            eval_epsilon: None,
            seeds: vec![0],
            out_dir: PathBuf::from("out"),
            log_every: 100,
            inject_nan_at: None,
        }
    }
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "algorithm",
        "objective",
        "envs",
        "env.max_steps",
        "env.mdp_seed",
        "env.bridge.command",
        "env.bridge.obs_dim",
        "env.bridge.actions",
        "env.bridge.timeout_ms",
        "wrappers.normalize_obs",
        "wrappers.scale_reward",
        "agent.gamma",
        "agent.lambda",
        "agent.kappa",
        "agent.huber_kappa",
        "optim.lr",
        "optim.beta0",
        "optim.beta1",
        "optim.eps",
        "optim.bias_correction",
        "dist.v_min",
        "dist.v_max",
        "dist.atoms",
        "net.hidden",
        "net.layer_norm",
        "net.sparsity",
        "net.activation",
        "net.match_capacity",
        "explore.eps_start",
        "explore.eps_end",
        "explore.decay_steps",
        "run.total_steps",
        "run.eval_every",
        "run.eval_episodes",
        "run.eval_epsilon",
        "run.seeds",
        "run.out_dir",
        "run.log_every",
        "run.inject_nan_at",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "algorithm" => self.algorithm = value.parse()?,
            "objective" => self.objective = parse_opt(key, value, |_, v| v.parse())?,
            "envs" => {
                self.envs = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "env.max_steps" => self.env_max_steps = parse(key, value)?,
            "env.mdp_seed" => self.env_mdp_seed = parse(key, value)?,
            "env.bridge.command" => self.bridge_command = value.split_whitespace().map(String::from).collect(),
            "env.bridge.obs_dim" => self.bridge_obs_dim = parse(key, value)?,
            "env.bridge.actions" => self.bridge_actions = parse(key, value)?,
            "env.bridge.timeout_ms" => self.bridge_timeout_ms = parse(key, value)?,
            "wrappers.normalize_obs" => self.normalize_obs = parse_bool(key, value)?,
            "wrappers.scale_reward" => self.scale_reward = parse_bool(key, value)?,
            "agent.gamma" => self.gamma = parse_real(key, value)?,
            "agent.lambda" => self.lambda = parse_real(key, value)?,
            "agent.kappa" => self.kappa = parse_real(key, value)?,
            "agent.huber_kappa" => self.huber_kappa = parse_real(key, value)?,
            "optim.lr" => self.lr = parse_opt(key, value, parse_real)?,
            "optim.beta0" => self.beta0 = parse_real(key, value)?,
            "optim.beta1" => self.beta1 = parse_real(key, value)?,
            "optim.eps" => self.epsilon = parse_opt(key, value, parse_real)?,
            "optim.bias_correction" => self.bias_correction = parse_bool(key, value)?,
            "dist.v_min" => self.v_min = parse_real(key, value)?,
            "dist.v_max" => self.v_max = parse_real(key, value)?,
            "dist.atoms" => self.atoms = parse_opt(key, value, parse)?,
            "net.hidden" => self.hidden = parse_list(key, value)?,
            "net.layer_norm" => self.layer_norm = parse_bool(key, value)?,
            "net.sparsity" => self.sparsity = parse_real(key, value)?,
            "net.activation" => self.activation = Activation::parse(value)?,
            "net.match_capacity" => self.match_capacity = parse_bool(key, value)?,
            "explore.eps_start" => self.schedule.eps_start = parse_real(key, value)?,
            "explore.eps_end" => self.schedule.eps_end = parse_real(key, value)?,
            "explore.decay_steps" => self.schedule.decay_steps = parse(key, value)?,
            "run.total_steps" => self.total_steps = parse(key, value)?,
            "run.eval_every" => self.eval_every = parse(key, value)?,
            "run.eval_episodes" => self.eval_episodes = parse(key, value)?,
            "run.eval_epsilon" => self.eval_epsilon = parse_opt(key, value, parse_real)?,
            "run.seeds" => self.seeds = parse_list(key, value)?,
            "run.out_dir" => self.out_dir = PathBuf::from(value),
            "run.log_every" => self.log_every = parse(key, value)?,
            "run.inject_nan_at" => self.inject_nan_at = parse_opt(key, value, parse)?,
            _ => return Err(unknown(key)),
        }
        Ok(())
    }

    /// Current value of `key` in the syntax accepted by [`ExperimentConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        let real = |x: f64| format_real(x);
        let opt_real = |x: Option<f64>| x.map(format_real).unwrap_or_else(|| "auto".into());
        Some(match key {
            "algorithm" => self.algorithm.to_string(),
            "objective" => self.objective.map(|o| o.to_string()).unwrap_or_else(|| "auto".into()),
            "envs" => self.envs.join(", "),
            "env.max_steps" => self.env_max_steps.to_string(),
            "env.mdp_seed" => self.env_mdp_seed.to_string(),
            "env.bridge.command" => self.bridge_command.join(" "),
            "env.bridge.obs_dim" => self.bridge_obs_dim.to_string(),
            "env.bridge.actions" => self.bridge_actions.to_string(),
            "env.bridge.timeout_ms" => self.bridge_timeout_ms.to_string(),
            "wrappers.normalize_obs" => self.normalize_obs.to_string(),
            "wrappers.scale_reward" => self.scale_reward.to_string(),
            "agent.gamma" => real(self.gamma),
            "agent.lambda" => real(self.lambda),
            "agent.kappa" => real(self.kappa),
            "agent.huber_kappa" => real(self.huber_kappa),
            "optim.lr" => opt_real(self.lr),
            "optim.beta0" => real(self.beta0),
            "optim.beta1" => real(self.beta1),
            "optim.eps" => opt_real(self.epsilon),
            "optim.bias_correction" => self.bias_correction.to_string(),
            "dist.v_min" => real(self.v_min),
            "dist.v_max" => real(self.v_max),
            "dist.atoms" => self.atoms.map(|a| a.to_string()).unwrap_or_else(|| "auto".into()),
            "net.hidden" => join(&self.hidden),
            "net.layer_norm" => self.layer_norm.to_string(),
            "net.sparsity" => real(self.sparsity),
            "net.activation" => self.activation.name().to_string(),
            "net.match_capacity" => self.match_capacity.to_string(),
            "explore.eps_start" => real(self.schedule.eps_start),
            "explore.eps_end" => real(self.schedule.eps_end),
            "explore.decay_steps" => self.schedule.decay_steps.to_string(),
            "run.total_steps" => self.total_steps.to_string(),
            "run.eval_every" => self.eval_every.to_string(),
            "run.eval_episodes" => self.eval_episodes.to_string(),
            "run.eval_epsilon" => opt_real(self.eval_epsilon),
            "run.seeds" => join(&self.seeds),
            "run.out_dir" => self.out_dir.display().to_string(),
            "run.log_every" => self.log_every.to_string(),
            "run.inject_nan_at" => self
                .inject_nan_at
                .map(|s| s.to_string())
                .unwrap_or_else(|| "auto".into()),
            _ => return None,
        })
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        c.apply(&parse_pairs(text)?)?;
        Ok(c)
    }

    /// Every key, one `key = value` line each.
    pub fn print(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed keys are known")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::Config("run.total_steps must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("run.seeds must not be empty".into()));
        }
        if self.envs.is_empty() {
            return Err(Error::Config("envs must not be empty".into()));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::Config(
                "run.eval_every and run.eval_episodes must be positive".into(),
            ));
        }
        if self.log_every == 0 {
            return Err(Error::Config("run.log_every must be positive".into()));
        }
        if self.env_max_steps == 0 {
            return Err(Error::Config("env.max_steps must be positive".into()));
        }
        if let Some(e) = self.eval_epsilon {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("run.eval_epsilon {e} outside [0, 1]")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                return Err(Error::Config(format!("seed {s} listed twice")));
            }
        }
        Ok(())
    }

    pub fn eval_epsilon(&self) -> f64 {
        self.eval_epsilon.unwrap_or(self.schedule.eps_end)
    }

    /// Agent settings for an environment with the given dimensions.
    pub fn agent_config(&self, input_dim: usize, actions: usize, seed: u64) -> Result<AgentConfig> {
        let mut c = AgentConfig::new(self.algorithm, input_dim, actions);
        if let Some(o) = self.objective {
            c.objective = o;
        }
        if let Some(lr) = self.lr {
            c.lr = lr;
        }
        c.adam = AdamConfig {
            beta0: self.beta0,
            beta1: self.beta1,
            epsilon: self.epsilon.unwrap_or(c.adam.epsilon),
            bias_correction: self.bias_correction,
        };
        c.gamma = self.gamma;
        c.lambda = self.lambda;
        c.kappa = self.kappa;
        c.huber_kappa = self.huber_kappa;
        c.v_min = self.v_min;
        c.v_max = self.v_max;
        c.schedule = self.schedule;
        c.seed = seed;
        let default_atoms = AgentConfig::new(Algorithm::C51, input_dim, actions)
            .network
            .atoms_per_action;
        let atoms = match c.objective {
            ObjectiveKind::Categorical | ObjectiveKind::Quantile => self.atoms.unwrap_or(default_atoms),
            ObjectiveKind::Mse | ObjectiveKind::SmoothL1 => 1,
        };
        c.network.hidden_dims = self.hidden.clone();
        c.network.layer_norm = vec![self.layer_norm; self.hidden.len()];
        c.network.sparsity = self.sparsity;
        c.network.activation = self.activation;
        c.network.atoms_per_action = atoms;
        if self.match_capacity && atoms == 1 {
            c.network = c.capacity_matched(self.atoms.unwrap_or(default_atoms))?;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Two-parameter optimization problem whose x-gradient is unreliable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    /// `g_x = +-0.1 w_x` with a fresh random sign every step.
    Noisy,
    /// `g_x = 0.1 w_x` with probability 0.05, else 0.
    Sparse,
}

impl FromStr for ToyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "noisy" => Ok(ToyKind::Noisy),
            "sparse" => Ok(ToyKind::Sparse),
            other => Err(Error::Config(format!("unknown toy problem '{other}'"))),
        }
    }
}

impl std::fmt::Display for ToyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ToyKind::Noisy => "noisy",
            ToyKind::Sparse => "sparse",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyProblemConfig {
    pub kind: ToyKind,
    pub w0: (f64, f64),
    pub steps: u64,
    pub adam: AdamConfig,
    pub lr: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ToyProblemConfig {
    fn default() -> Self {
        ToyProblemConfig {
            kind: ToyKind::Noisy,
            w0: (1.5, 1.5),
            steps: 20_000,
            adam: AdamConfig {
                beta0: 0.9,
                beta1: 0.999,
                epsilon: 0.1,
                bias_correction: false,
            },
            lr: 0.3,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ToyProblemConfig {
    pub const KEYS: &'static [&'static str] = &[
        "toy.kind",
        "toy.w0",
        "toy.steps",
        "toy.seed",
        "optim.lr",
        "optim.beta0",
        "optim.beta1",
        "optim.eps",
        "optim.bias_correction",
        "run.out_dir",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "toy.kind" => self.kind = value.parse()?,
            "toy.w0" => {
                let v: Vec<f64> = parse_list(key, value)?;
                if v.len() != 2 {
                    return Err(Error::Config(format!("toy.w0 needs two values, got {}", v.len())));
                }
                self.w0 = (v[0], v[1]);
            }
            "toy.steps" => self.steps = parse(key, value)?,
            "toy.seed" => self.seed = parse(key, value)?,
            "optim.lr" => self.lr = parse_real(key, value)?,
            "optim.beta0" => self.adam.beta0 = parse_real(key, value)?,
            "optim.beta1" => self.adam.beta1 = parse_real(key, value)?,
            "optim.eps" => self.adam.epsilon = parse_real(key, value)?,
            "optim.bias_correction" => self.adam.bias_correction = parse_bool(key, value)?,
            "run.out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(unknown(key)),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "toy.kind" => self.kind.to_string(),
            "toy.w0" => format!("{}, {}", format_real(self.w0.0), format_real(self.w0.1)),
            "toy.steps" => self.steps.to_string(),
            "toy.seed" => self.seed.to_string(),
            "optim.lr" => format_real(self.lr),
            "optim.beta0" => format_real(self.adam.beta0),
            "optim.beta1" => format_real(self.adam.beta1),
            "optim.eps" => format_real(self.adam.epsilon),
            "optim.bias_correction" => self.adam.bias_correction.to_string(),
            "run.out_dir" => self.out_dir.display().to_string(),
            _ => return None,
        })
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ToyProblemConfig::default();
        c.apply(&parse_pairs(text)?)?;
        Ok(c)
    }

    pub fn print(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed keys are known")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("toy.steps must be positive".into()));
        }
        if !(self.w0.0.is_finite() && self.w0.1.is_finite()) {
            return Err(Error::Config("toy.w0 must be finite".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("optim.lr must be finite and non-negative".into()));
        }
        self.adam.validate()
    }
}

/// Aggregation settings shared by `sweep` and `report`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    /// Number of trailing evaluations averaged into a run's score.
    pub window: usize,
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
    pub baselines: Option<PathBuf>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            window: 10,
            resamples: 2000,
            level: 0.95,
            seed: 0,
            baselines: None,
        }
    }
}

impl ReportConfig {
    pub const KEYS: &'static [&'static str] = &[
        "report.window",
        "report.resamples",
        "report.level",
        "report.seed",
        "report.baselines",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "report.window" => self.window = parse(key, value)?,
            "report.resamples" => self.resamples = parse(key, value)?,
            "report.level" => self.level = parse_real(key, value)?,
            "report.seed" => self.seed = parse(key, value)?,
            "report.baselines" => {
                self.baselines = match value.trim() {
                    "" | "none" => None,
                    v => Some(PathBuf::from(v)),
                }
            }
            _ => return Err(unknown(key)),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "report.window" => self.window.to_string(),
            "report.resamples" => self.resamples.to_string(),
            "report.level" => format_real(self.level),
            "report.seed" => self.seed.to_string(),
            "report.baselines" => self
                .baselines
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "none".into()),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("report.window must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("report.level {} outside (0, 1)", self.level)));
        }
        if self.resamples == 0 {
            return Err(Error::Config("report.resamples must be positive".into()));
        }
        Ok(())
    }
}

/// A base experiment plus named value lists to take the Cartesian product of.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    /// `(experiment key, values)` in declaration order.
    pub axes: Vec<(String, Vec<String>)>,
    pub report: ReportConfig,
}

impl SweepConfig {
    /// Axes are written `sweep.<experiment key> = v1; v2; v3`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(target) = key.strip_prefix("sweep.") {
            if ExperimentConfig::default().get(target).is_none() {
                return Err(Error::Config(format!("sweep axis '{target}' is not an experiment key")));
            }
            let values: Vec<String> = value
                .split(';')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            match self.axes.iter_mut().find(|(k, _)| k == target) {
                Some(axis) => axis.1 = values,
                None => self.axes.push((target.to_string(), values)),
            }
            Ok(())
        } else if key.starts_with("report.") {
            self.report.set(key, value)
        } else {
            self.base.set(key, value)
        }
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = SweepConfig::default();
        c.apply(&parse_pairs(text)?)?;
        Ok(c)
    }

    pub fn print(&self) -> String {
        let mut s = self.base.print();
        for k in ReportConfig::KEYS {
            s += &format!("{k} = {}\n", self.report.get(k).expect("listed keys are known"));
        }
        for (k, vs) in &self.axes {
            s += &format!("sweep.{k} = {}\n", vs.join("; "));
        }
        s
    }

    /// Keys that may be set for a sweep, including axis prefixes.
    pub fn known_keys() -> Vec<&'static str> {
        ExperimentConfig::KEYS
            .iter()
            .chain(ReportConfig::KEYS)
            .copied()
            .collect()
    }
}
