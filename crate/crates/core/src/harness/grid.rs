use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::output::{write_atomic, CsvTable};
use crate::agents::{run_episode, Agent, EpisodeMode, Transition};
use crate::envs::{
    BridgeEnv, Catch, ChainMDP, Env, EnvSpec, GridWorld, NormalizeObservation, RandomMDP, ScaleReward, TimeLimit,
};
use crate::error::{Error, Result};
use crate::evalstats::format_real;

/// Environment selected by name: `chain<N>`, `grid<W>x<H>`, `catch` or
/// `catch<R>x<C>`, `random<S>x<A>`, `bridge`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvName {
    Chain(usize),
    Grid(usize, usize),
    Catch(usize, usize),
    Random(usize, usize),
    Bridge,
}

fn dims(name: &str, s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("environment '{name}': expected <a>x<b> after the prefix"));
    let (a, b) = s.split_once('x').ok_or_else(bad)?;
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

impl std::str::FromStr for EnvName {
    type Err = Error;
    fn from_str(name: &str) -> Result<Self> {
        let name = name.trim();
        if name == "bridge" {
            return Ok(EnvName::Bridge);
        }
        if name == "catch" {
            return Ok(EnvName::Catch(10, 5));
        }
        if let Some(rest) = name.strip_prefix("chain") {
            return rest
                .parse()
                .map(EnvName::Chain)
                .map_err(|_| Error::Config(format!("environment '{name}': expected chain<N>")));
        }
        if let Some(rest) = name.strip_prefix("grid") {
            let (w, h) = dims(name, rest)?;
            return Ok(EnvName::Grid(w, h));
        }
        if let Some(rest) = name.strip_prefix("catch") {
            let (r, c) = dims(name, rest)?;
            return Ok(EnvName::Catch(r, c));
        }
        if let Some(rest) = name.strip_prefix("random") {
            let (s, a) = dims(name, rest)?;
            return Ok(EnvName::Random(s, a));
        }
        Err(Error::Config(format!("unknown environment '{name}'")))
    }
}

/// The bare environment named `name`, without wrappers.
pub fn build_raw_env(name: &str, config: &ExperimentConfig) -> Result<Box<dyn Env>> {
    Ok(match name.parse::<EnvName>()? {
        EnvName::Chain(n) => Box::new(ChainMDP::new(n)?),
        EnvName::Grid(w, h) => Box::new(GridWorld::new(w, h)?),
        EnvName::Catch(r, c) => Box::new(Catch::new(r, c)?),
        EnvName::Random(s, a) => Box::new(RandomMDP::new(s, a, config.env_mdp_seed)?),
        EnvName::Bridge => {
            if config.bridge_command.is_empty() || config.bridge_obs_dim == 0 || config.bridge_actions == 0 {
                return Err(Error::Config(
                    "bridge needs env.bridge.command, env.bridge.obs_dim and env.bridge.actions".into(),
                ));
            }
            let spec = EnvSpec {
                observation_dim: config.bridge_obs_dim,
                action_count: config.bridge_actions,
                max_episode_steps: config.env_max_steps,
                reward_range: (f64::NEG_INFINITY, f64::INFINITY),
            };
            let timeout = Duration::from_millis(config.bridge_timeout_ms);
            Box::new(BridgeEnv::spawn(&config.bridge_command, spec, timeout)?)
        }
    })
}

/// Observation normalization over reward scaling over the time limit.
pub type TrainEnv = NormalizeObservation<ScaleReward<TimeLimit<Box<dyn Env>>>>;
/// Evaluation copy: frozen observation statistics, raw rewards.
pub type EvalEnv = NormalizeObservation<TimeLimit<Box<dyn Env>>>;

pub fn build_train_env(name: &str, config: &ExperimentConfig) -> Result<TrainEnv> {
    let raw = build_raw_env(name, config)?;
    let limited = TimeLimit::new(raw, config.env_max_steps);
    Ok(NormalizeObservation::new(
        ScaleReward::new(limited, config.gamma, config.scale_reward),
        config.normalize_obs,
    ))
}

pub fn build_eval_env(name: &str, config: &ExperimentConfig) -> Result<EvalEnv> {
    let raw = build_raw_env(name, config)?;
    let dim = raw.spec().observation_dim;
    let mut env = NormalizeObservation::frozen(
        TimeLimit::new(raw, config.env_max_steps),
        crate::envs::RunningMoments::new(dim),
        config.normalize_obs,
    )?;
    env.set_training(false);
    Ok(env)
}

/// Independent random stream `stream` of a run seed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const ENV_STREAM: u64 = 1;
const EXPLORE_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRow {
    pub step: u64,
    pub delta: f64,
    pub loss: f64,
    pub update_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok,
    /// Aborted at `step` (1-based count of the transition that failed).
    Failed {
        step: u64,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub algorithm: String,
    pub env: String,
    pub seed: u64,
    pub steps: u64,
    pub status: RunStatus,
    pub evals: Vec<(u64, f64)>,
    pub train: Vec<TrainRow>,
}

impl RunOutcome {
    pub fn failed(&self) -> bool {
        matches!(self.status, RunStatus::Failed { .. })
    }
}

struct Run<'a> {
    config: &'a ExperimentConfig,
    agent: Agent,
    env: TrainEnv,
    eval_env: EvalEnv,
    outcome: RunOutcome,
}

impl Run<'_> {
    fn evaluate(&mut self, step: u64, rng: &mut ChaCha8Rng) -> Result<()> {
        self.eval_env.set_moments(self.env.moments().clone())?;
        let epsilon = self.config.eval_epsilon();
        let mut total = 0.0;
        for _ in 0..self.config.eval_episodes {
            let obs = self.eval_env.reset(rng.gen())?;
            let r = run_episode(
                &mut self.agent,
                &mut self.eval_env,
                obs,
                rng,
                self.config.env_max_steps,
                EpisodeMode::Evaluate { epsilon },
            )?;
            total += r.episode_return;
        }
        self.outcome
            .evals
            .push((step, total / self.config.eval_episodes as f64));
        Ok(())
    }

    fn train(&mut self) -> Result<()> {
        let seed = self.outcome.seed;
        let mut env_rng = rng_stream(seed, ENV_STREAM);
        let mut explore_rng = rng_stream(seed, EXPLORE_STREAM);
        let mut eval_rng = rng_stream(seed, EVAL_STREAM);
        let total = self.config.total_steps;
        let mut obs = self.env.reset(env_rng.gen())?;
        let mut step = 0u64;
        while step < total {
            let (action, greedy) = self.agent.act(&obs, step, &mut explore_rng)?;
            let out = self.env.step(action)?;
            let reward = if self.config.inject_nan_at == Some(step) {
                f64::NAN
            } else {
                out.reward
            };
            let t = Transition {
                obs: std::mem::take(&mut obs),
                action,
                reward,
                next_obs: out.obs.clone(),
                terminal: out.terminal,
                truncated: out.truncated,
                greedy,
            };
            self.outcome.steps = step + 1;
            let report = self.agent.observe(&t)?;
            step += 1;
            if step.is_multiple_of(self.config.log_every) {
                self.outcome.train.push(TrainRow {
                    step,
                    delta: report.delta,
                    loss: report.loss,
                    update_norm: report.update_norm,
                });
            }
            obs = if out.terminal {
                self.env.reset(env_rng.gen())?
            } else {
                out.obs
            };
            if step.is_multiple_of(self.config.eval_every) || step == total {
                self.evaluate(step, &mut eval_rng)?;
            }
        }
        Ok(())
    }
}

/// Trains one (env, seed) run. Configuration problems are returned as errors;
/// faults during training end up in the outcome's status.
pub fn train_run(config: &ExperimentConfig, env_name: &str, seed: u64) -> Result<RunOutcome> {
    let env = build_train_env(env_name, config)?;
    let eval_env = build_eval_env(env_name, config)?;
    let spec = env.spec().clone();
    let agent = Agent::new(config.agent_config(spec.observation_dim, spec.action_count, seed)?)?;
    let mut run = Run {
        config,
        agent,
        env,
        eval_env,
        outcome: RunOutcome {
            algorithm: config.algorithm.to_string(),
            env: env_name.to_string(),
            seed,
            steps: 0,
            status: RunStatus::Ok,
            evals: Vec::new(),
            train: Vec::new(),
        },
    };
    if let Err(e) = run.train() {
        run.outcome.status = RunStatus::Failed {
            step: run.outcome.steps,
            message: e.to_string(),
        };
    }
    Ok(run.outcome)
}

/// Checks everything that can be checked without training.
pub fn preflight(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    for name in &config.envs {
        let parsed: super::grid::EnvName = name.parse()?;
        if parsed == EnvName::Bridge {
            // do not spawn the process twice; just check the settings
            if config.bridge_command.is_empty() || config.bridge_obs_dim == 0 || config.bridge_actions == 0 {
                return Err(Error::Config(
                    "bridge needs env.bridge.command, env.bridge.obs_dim and env.bridge.actions".into(),
                ));
            }
            config.agent_config(config.bridge_obs_dim, config.bridge_actions, 0)?;
        } else {
            let env = build_raw_env(name, config)?;
            let spec = env.spec();
            config.agent_config(spec.observation_dim, spec.action_count, 0)?;
        }
    }
    Ok(())
}

pub const EVAL_HEADER: [&str; 5] = ["algorithm", "env", "seed", "step", "eval_return"];
pub const TRAIN_HEADER: [&str; 7] = ["algorithm", "env", "seed", "step", "delta", "loss", "update_norm"];
pub const RUNS_HEADER: [&str; 6] = ["algorithm", "env", "seed", "status", "steps", "message"];

fn eval_table(runs: &[&RunOutcome]) -> CsvTable {
    let mut t = CsvTable::new(&EVAL_HEADER);
    for r in runs {
        for (step, ret) in &r.evals {
            t.push(vec![
                r.algorithm.clone(),
                r.env.clone(),
                r.seed.to_string(),
                step.to_string(),
                format_real(*ret),
            ]);
        }
    }
    t
}

fn train_table(runs: &[&RunOutcome]) -> CsvTable {
    let mut t = CsvTable::new(&TRAIN_HEADER);
    for r in runs {
        for row in &r.train {
            t.push(vec![
                r.algorithm.clone(),
                r.env.clone(),
                r.seed.to_string(),
                row.step.to_string(),
                format_real(row.delta),
                format_real(row.loss),
                format_real(row.update_norm),
            ]);
        }
    }
    t
}

fn runs_table(runs: &[&RunOutcome]) -> CsvTable {
    let mut t = CsvTable::new(&RUNS_HEADER);
    for r in runs {
        let (status, message) = match &r.status {
            RunStatus::Ok => ("ok", String::new()),
            RunStatus::Failed { message, .. } => ("failed", message.clone()),
        };
        let steps = match &r.status {
            RunStatus::Ok => r.steps,
            RunStatus::Failed { step, .. } => *step,
        };
        t.push(vec![
            r.algorithm.clone(),
            r.env.clone(),
            r.seed.to_string(),
            status.into(),
            steps.to_string(),
            message,
        ]);
    }
    t
}

#[derive(Debug, Clone)]
pub struct GridSummary {
    pub out_dir: PathBuf,
    pub runs: Vec<RunOutcome>,
}

impl GridSummary {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.failed()).count()
    }
}

fn run_dir(out: &Path, r: &RunOutcome) -> PathBuf {
    out.join("runs")
        .join(format!("{}-{}-seed{}", r.algorithm, r.env, r.seed))
}

/// Trains every (env, seed) pair, in parallel, and writes
/// `eval.csv`, `train.csv`, `runs.csv` and `config.txt` under `run.out_dir`,
/// plus a per-run copy of the logs under `runs/`.
pub fn run_grid(config: &ExperimentConfig) -> Result<GridSummary> {
    preflight(config)?;
    let out = config.out_dir.clone();
    std::fs::create_dir_all(&out)?;
    let jobs: Vec<(&String, u64)> = config
        .envs
        .iter()
        .flat_map(|e| config.seeds.iter().map(move |s| (e, *s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|(env, seed)| {
            let outcome = train_run(config, env, *seed)?;
            let dir = run_dir(&out, &outcome);
            std::fs::create_dir_all(&dir)?;
            write_atomic(&dir.join("eval.csv"), eval_table(&[&outcome]).to_bytes()?.as_slice())?;
            write_atomic(&dir.join("train.csv"), train_table(&[&outcome]).to_bytes()?.as_slice())?;
            Ok(outcome)
        })
        .collect::<Result<Vec<RunOutcome>>>()?;
    let refs: Vec<&RunOutcome> = runs.iter().collect();
    write_atomic(&out.join("eval.csv"), &eval_table(&refs).to_bytes()?)?;
    write_atomic(&out.join("train.csv"), &train_table(&refs).to_bytes()?)?;
    write_atomic(&out.join("runs.csv"), &runs_table(&refs).to_bytes()?)?;
    write_atomic(&out.join("config.txt"), config.print().as_bytes())?;
    Ok(GridSummary { out_dir: out, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_names() {
        assert_eq!("chain7".parse::<EnvName>().unwrap(), EnvName::Chain(7));
        assert_eq!("grid5x4".parse::<EnvName>().unwrap(), EnvName::Grid(5, 4));
        assert_eq!("catch".parse::<EnvName>().unwrap(), EnvName::Catch(10, 5));
        assert_eq!("random8x3".parse::<EnvName>().unwrap(), EnvName::Random(8, 3));
        for bad in ["chain", "gridx", "grid5", "pong", "random3"] {
            assert!(bad.parse::<EnvName>().is_err(), "{bad}");
        }
    }

    #[test]
    fn streams_differ() {
        let a: u64 = rng_stream(5, 1).gen();
        let b: u64 = rng_stream(5, 2).gen();
        assert_ne!(a, b);
        assert_eq!(a, rng_stream(5, 1).gen::<u64>());
    }

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            algorithm: crate::agents::Algorithm::StreamQ,
            hidden: vec![8],
            total_steps: 300,
            eval_every: 100,
            eval_episodes: 2,
            env_max_steps: 50,
            ..Default::default()
        }
    }

    #[test]
    fn eval_schedule() {
        let c = small();
        let r = train_run(&c, "chain5", 1).unwrap();
        assert_eq!(r.status, RunStatus::Ok);
        assert_eq!(r.evals.iter().map(|e| e.0).collect::<Vec<_>>(), vec![100, 200, 300]);
        assert_eq!(r.train.len(), 3);
        let mut c = small();
        c.eval_every = 1000;
        let r = train_run(&c, "chain5", 1).unwrap();
        assert_eq!(r.evals.iter().map(|e| e.0).collect::<Vec<_>>(), vec![300]);
    }

    #[test]
    fn injected_nan_fails_the_run() {
        let mut c = small();
        c.inject_nan_at = Some(42);
        let r = train_run(&c, "chain5", 0).unwrap();
        match r.status {
            RunStatus::Failed { step, message } => {
                assert_eq!(step, 43);
                assert!(message.contains("numeric fault"), "{message}");
            }
            RunStatus::Ok => panic!("expected a failure"),
        }
    }
}
