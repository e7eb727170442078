use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Env, EnvSpec, StepOutcome, TabularEnv};
use crate::error::{Error, Result};
use crate::oracle::TabularMDP;

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn check_action(spec: &EnvSpec, action: usize) -> Result<()> {
    if action >= spec.action_count {
        return Err(Error::Usage(format!(
            "action {action} out of range for {} actions",
            spec.action_count
        )));
    }
    Ok(())
}

fn outcome(obs: Vec<f64>, reward: f64, terminal: bool) -> StepOutcome {
    StepOutcome {
        obs,
        reward,
        raw_reward: reward,
        terminal,
        truncated: false,
    }
}

/// Episode bookkeeping shared by the built-in environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    NeedsReset,
    Running,
}

fn ensure_running(phase: Phase) -> Result<()> {
    match phase {
        Phase::Running => Ok(()),
        Phase::NeedsReset => Err(Error::Usage(
            "step called without an active episode; reset first".into(),
        )),
    }
}

/// Linear chain of `n` states. Action 0 moves left (staying put at the left
/// end), action 1 moves right. Entering the rightmost state pays 1 and ends
/// the episode; every other transition pays 0.
#[derive(Debug, Clone)]
pub struct ChainMDP {
    n: usize,
    state: usize,
    phase: Phase,
    spec: EnvSpec,
}

impl ChainMDP {
    pub const LEFT: usize = 0;
    pub const RIGHT: usize = 1;

    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("chain needs at least 2 states, got {n}")));
        }
        Ok(ChainMDP {
            n,
            state: 0,
            phase: Phase::NeedsReset,
            spec: EnvSpec {
                observation_dim: n,
                action_count: 2,
                max_episode_steps: usize::MAX,
                reward_range: (0.0, 1.0),
            },
        })
    }

    fn next(&self, s: usize, action: usize) -> (usize, f64, bool) {
        let next = if action == Self::RIGHT {
            s + 1
        } else {
            s.saturating_sub(1)
        };
        if next == self.n - 1 {
            (next, 1.0, true)
        } else {
            (next, 0.0, false)
        }
    }
}

impl Env for ChainMDP {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        self.state = 0;
        self.phase = Phase::Running;
        Ok(one_hot(self.n, 0))
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        check_action(&self.spec, action)?;
        ensure_running(self.phase)?;
        let (next, reward, terminal) = self.next(self.state, action);
        self.state = next;
        if terminal {
            self.phase = Phase::NeedsReset;
        }
        Ok(outcome(one_hot(self.n, next), reward, terminal))
    }

    fn name(&self) -> String {
        format!("chain{}", self.n)
    }
}

impl TabularEnv for ChainMDP {
    fn tabular(&self, gamma: f64) -> TabularMDP {
        let mut transitions = vec![vec![vec![0.0; self.n]; 2]; self.n];
        let mut rewards = vec![vec![0.0; 2]; self.n];
        let mut terminal = vec![false; self.n];
        terminal[self.n - 1] = true;
        for s in 0..self.n {
            for a in 0..2 {
                if terminal[s] {
                    transitions[s][a][s] = 1.0;
                    continue;
                }
                let (next, r, _) = self.next(s, a);
                transitions[s][a][next] = 1.0;
                rewards[s][a] = r;
            }
        }
        TabularMDP {
            transitions,
            rewards,
            terminal,
            gamma,
        }
    }

    fn observation_of(&self, s: usize) -> Vec<f64> {
        one_hot(self.n, s)
    }

    fn decision_states(&self) -> Vec<usize> {
        (0..self.n - 1).collect()
    }
}

/// Rectangular grid starting in the top-left corner. Actions are
/// up/right/down/left; bumping into a wall or the border leaves the agent in
/// place. The goal pays 1 and pits pay -1, both ending the episode.
#[derive(Debug, Clone)]
pub struct GridWorld {
    width: usize,
    height: usize,
    walls: Vec<(usize, usize)>,
    pits: Vec<(usize, usize)>,
    goal: (usize, usize),
    pos: (usize, usize),
    phase: Phase,
    spec: EnvSpec,
}

impl GridWorld {
    pub const UP: usize = 0;
    pub const RIGHT: usize = 1;
    pub const DOWN: usize = 2;
    pub const LEFT: usize = 3;

    /// Open grid with the goal in the bottom-right corner.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::with_layout(
            width,
            height,
            Vec::new(),
            Vec::new(),
            (width.saturating_sub(1), height.saturating_sub(1)),
        )
    }

    pub fn with_layout(
        width: usize,
        height: usize,
        walls: Vec<(usize, usize)>,
        pits: Vec<(usize, usize)>,
        goal: (usize, usize),
    ) -> Result<Self> {
        if width == 0 || height == 0 || width * height < 2 {
            return Err(Error::Config(format!("grid {width}x{height} is too small")));
        }
        let inside = |&(x, y): &(usize, usize)| x < width && y < height;
        if !inside(&goal) || !walls.iter().all(inside) || !pits.iter().all(inside) {
            return Err(Error::Config("grid cells must lie inside the grid".into()));
        }
        if goal == (0, 0) || walls.contains(&(0, 0)) || pits.contains(&(0, 0)) || walls.contains(&goal) {
            return Err(Error::Config("start cell and goal must be free and distinct".into()));
        }
        let grid = GridWorld {
            width,
            height,
            walls,
            pits,
            goal,
            pos: (0, 0),
            phase: Phase::NeedsReset,
            spec: EnvSpec {
                observation_dim: width * height,
                action_count: 4,
                max_episode_steps: usize::MAX,
                reward_range: (-1.0, 1.0),
            },
        };
        if !grid.reachable().contains(&grid.index(goal)) {
            return Err(Error::Config("goal is not reachable from the start cell".into()));
        }
        Ok(grid)
    }

    fn index(&self, (x, y): (usize, usize)) -> usize {
        y * self.width + x
    }

    fn cell(&self, s: usize) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    fn is_terminal_cell(&self, c: (usize, usize)) -> bool {
        c == self.goal || self.pits.contains(&c)
    }

    fn next(&self, (x, y): (usize, usize), action: usize) -> ((usize, usize), f64, bool) {
        let target = match action {
            Self::UP => (x, y.wrapping_sub(1)),
            Self::RIGHT => (x + 1, y),
            Self::DOWN => (x, y + 1),
            _ => (x.wrapping_sub(1), y),
        };
        let blocked = target.0 >= self.width || target.1 >= self.height || self.walls.contains(&target);
        let to = if blocked { (x, y) } else { target };
        if to == self.goal {
            (to, 1.0, true)
        } else if self.pits.contains(&to) {
            (to, -1.0, true)
        } else {
            (to, 0.0, false)
        }
    }

    fn reachable(&self) -> Vec<usize> {
        let mut seen = vec![false; self.width * self.height];
        let mut queue = VecDeque::from([(0usize, 0usize)]);
        seen[0] = true;
        let mut out = Vec::new();
        while let Some(c) = queue.pop_front() {
            out.push(self.index(c));
            if self.is_terminal_cell(c) {
                continue;
            }
            for a in 0..4 {
                let (n, _, _) = self.next(c, a);
                let i = self.index(n);
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(n);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

impl Env for GridWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        self.pos = (0, 0);
        self.phase = Phase::Running;
        Ok(one_hot(self.width * self.height, 0))
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        check_action(&self.spec, action)?;
        ensure_running(self.phase)?;
        let (to, reward, terminal) = self.next(self.pos, action);
        self.pos = to;
        if terminal {
            self.phase = Phase::NeedsReset;
        }
        Ok(outcome(
            one_hot(self.width * self.height, self.index(to)),
            reward,
            terminal,
        ))
    }

    fn name(&self) -> String {
        format!("grid{}x{}", self.width, self.height)
    }
}

impl TabularEnv for GridWorld {
    fn tabular(&self, gamma: f64) -> TabularMDP {
        let n = self.width * self.height;
        let mut transitions = vec![vec![vec![0.0; n]; 4]; n];
        let mut rewards = vec![vec![0.0; 4]; n];
        let mut terminal = vec![false; n];
        for s in 0..n {
            let c = self.cell(s);
            terminal[s] = self.is_terminal_cell(c) || self.walls.contains(&c);
            for a in 0..4 {
                if terminal[s] {
                    transitions[s][a][s] = 1.0;
                    continue;
                }
                let (to, r, _) = self.next(c, a);
                transitions[s][a][self.index(to)] = 1.0;
                rewards[s][a] = r;
            }
        }
        TabularMDP {
            transitions,
            rewards,
            terminal,
            gamma,
        }
    }

    fn observation_of(&self, s: usize) -> Vec<f64> {
        one_hot(self.width * self.height, s)
    }

    fn decision_states(&self) -> Vec<usize> {
        self.reachable()
            .into_iter()
            .filter(|&s| !self.is_terminal_cell(self.cell(s)))
            .collect()
    }
}

/// Ball falls one row per step down a `rows x cols` board; the paddle on the
/// bottom row moves left, stays or moves right. Catching the ball pays +1,
/// missing it -1. Observation: ball plane (`rows * cols`) followed by the
/// paddle column one-hot (`cols`).
#[derive(Debug, Clone)]
pub struct Catch {
    rows: usize,
    cols: usize,
    ball: (usize, usize),
    paddle: usize,
    phase: Phase,
    spec: EnvSpec,
}

impl Catch {
    pub const LEFT: usize = 0;
    pub const STAY: usize = 1;
    pub const RIGHT: usize = 2;

    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols == 0 {
            return Err(Error::Config(format!("catch board {rows}x{cols} is too small")));
        }
        Ok(Catch {
            rows,
            cols,
            ball: (0, 0),
            paddle: cols / 2,
            phase: Phase::NeedsReset,
            spec: EnvSpec {
                observation_dim: rows * cols + cols,
                action_count: 3,
                max_episode_steps: usize::MAX,
                reward_range: (-1.0, 1.0),
            },
        })
    }

    pub fn ball_column(&self) -> usize {
        self.ball.1
    }

    pub fn paddle_column(&self) -> usize {
        self.paddle
    }

    fn observe(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.spec.observation_dim];
        obs[self.ball.0 * self.cols + self.ball.1] = 1.0;
        obs[self.rows * self.cols + self.paddle] = 1.0;
        obs
    }
}

impl Default for Catch {
    fn default() -> Self {
        Catch::new(10, 5).expect("10x5 catch board is valid")
    }
}

impl Env for Catch {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.ball = (0, rng.gen_range(0..self.cols));
        self.paddle = self.cols / 2;
        self.phase = Phase::Running;
        Ok(self.observe())
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        check_action(&self.spec, action)?;
        ensure_running(self.phase)?;
        self.paddle = match action {
            Self::LEFT => self.paddle.saturating_sub(1),
            Self::RIGHT => (self.paddle + 1).min(self.cols - 1),
            _ => self.paddle,
        };
        self.ball.0 += 1;
        let (reward, terminal) = if self.ball.0 == self.rows - 1 {
            self.phase = Phase::NeedsReset;
            (if self.paddle == self.ball.1 { 1.0 } else { -1.0 }, true)
        } else {
            (0.0, false)
        };
        Ok(outcome(self.observe(), reward, terminal))
    }

    fn name(&self) -> String {
        "catch".into()
    }
}

/// Random dense MDP with a seeded kernel and rewards in `[-1, 1]`. It never
/// terminates on its own; wrap it in a time limit.
#[derive(Debug, Clone)]
pub struct RandomMDP {
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    state: usize,
    rng: ChaCha8Rng,
    phase: Phase,
    spec: EnvSpec,
}

impl RandomMDP {
    pub fn new(n_states: usize, n_actions: usize, seed: u64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Config("random MDP needs states and actions".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let transitions = (0..n_states)
            .map(|_| {
                (0..n_actions)
                    .map(|_| {
                        let w: Vec<f64> = (0..n_states).map(|_| rng.gen_range(0.0..1.0) + 1e-3).collect();
                        let total: f64 = w.iter().sum();
                        w.into_iter().map(|x| x / total).collect()
                    })
                    .collect()
            })
            .collect();
        let rewards = (0..n_states)
            .map(|_| (0..n_actions).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        Ok(RandomMDP {
            transitions,
            rewards,
            state: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
            phase: Phase::NeedsReset,
            spec: EnvSpec {
                observation_dim: n_states,
                action_count: n_actions,
                max_episode_steps: usize::MAX,
                reward_range: (-1.0, 1.0),
            },
        })
    }

    fn n_states(&self) -> usize {
        self.rewards.len()
    }
}

impl Env for RandomMDP {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = self.rng.gen_range(0..self.n_states());
        self.phase = Phase::Running;
        Ok(one_hot(self.n_states(), self.state))
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        check_action(&self.spec, action)?;
        ensure_running(self.phase)?;
        let reward = self.rewards[self.state][action];
        let row = &self.transitions[self.state][action];
        let u: f64 = self.rng.gen_range(0.0..1.0);
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (s, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = s;
                break;
            }
        }
        self.state = next;
        Ok(outcome(one_hot(self.n_states(), next), reward, false))
    }

    fn name(&self) -> String {
        format!("random_mdp{}x{}", self.n_states(), self.spec.action_count)
    }
}

impl TabularEnv for RandomMDP {
    fn tabular(&self, gamma: f64) -> TabularMDP {
        TabularMDP {
            transitions: self.transitions.clone(),
            rewards: self.rewards.clone(),
            terminal: vec![false; self.n_states()],
            gamma,
        }
    }

    fn observation_of(&self, s: usize) -> Vec<f64> {
        one_hot(self.n_states(), s)
    }

    fn decision_states(&self) -> Vec<usize> {
        (0..self.n_states()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{discounted_return, value_iteration};

    #[test]
    fn chain_always_right() {
        let mut env = ChainMDP::new(5).unwrap();
        assert_eq!(env.reset(123).unwrap(), one_hot(5, 0));
        let mut rewards = Vec::new();
        loop {
            let out = env.step(ChainMDP::RIGHT).unwrap();
            rewards.push(out.reward);
            if out.terminal {
                break;
            }
        }
        assert_eq!(rewards.len(), 4);
        assert_eq!(discounted_return(&rewards, 1.0), 1.0);
        assert!(matches!(env.step(ChainMDP::RIGHT), Err(Error::Usage(_))));
        assert!(matches!(env.step(2), Err(Error::Usage(_))));
    }

    #[test]
    fn chain_value_iteration_closed_form() {
        let env = ChainMDP::new(5).unwrap();
        let res = value_iteration(&env.tabular(0.9), 1e-12).unwrap();
        for s in 0..4 {
            let distance = 4 - s;
            let expected = 0.9f64.powi(distance as i32 - 1);
            assert!((res.q_star[s][ChainMDP::RIGHT] - expected).abs() < 1e-10);
            assert_eq!(res.policy[s], ChainMDP::RIGHT);
        }
    }

    #[test]
    fn grid_walls_and_goal() {
        let mut g = GridWorld::with_layout(3, 3, vec![(1, 0)], vec![(1, 1)], (2, 2)).unwrap();
        let first = g.reset(5).unwrap();
        assert_eq!(first, g.reset(5).unwrap());
        let out = g.step(GridWorld::RIGHT).unwrap();
        assert_eq!((out.obs, out.reward, out.terminal), (one_hot(9, 0), 0.0, false));
        let out = g.step(GridWorld::UP).unwrap();
        assert_eq!(out.obs, one_hot(9, 0));
        g.step(GridWorld::DOWN).unwrap();
        let pit = g.step(GridWorld::RIGHT).unwrap();
        assert_eq!((pit.reward, pit.terminal), (-1.0, true));
        assert_eq!(g.decision_states(), vec![0, 3, 6, 7]);
        assert!(GridWorld::with_layout(3, 3, vec![(1, 0), (0, 1)], vec![], (2, 2)).is_err());
    }

    #[test]
    fn catch_tracking_policy_scores() {
        for seed in 0..10 {
            let mut env = Catch::default();
            env.reset(seed).unwrap();
            let column = env.ball_column();
            let mut same = Catch::default();
            same.reset(seed).unwrap();
            assert_eq!(same.ball_column(), column);
            loop {
                let a = match env.paddle_column().cmp(&env.ball_column()) {
                    std::cmp::Ordering::Less => Catch::RIGHT,
                    std::cmp::Ordering::Greater => Catch::LEFT,
                    std::cmp::Ordering::Equal => Catch::STAY,
                };
                let out = env.step(a).unwrap();
                if out.terminal {
                    assert_eq!(out.reward, 1.0);
                    break;
                }
                assert_eq!(out.reward, 0.0);
            }
        }
    }

    #[test]
    fn catch_missing_costs_one() {
        let mut env = Catch::default();
        env.reset(0).unwrap();
        let target = env.ball_column();
        let mut last = None;
        for _ in 0..9 {
            let a = if target >= 2 { Catch::LEFT } else { Catch::RIGHT };
            last = Some(env.step(a).unwrap());
        }
        let last = last.unwrap();
        assert!(last.terminal);
        assert_eq!(last.reward, -1.0);
    }

    #[test]
    fn random_mdp_rows_are_stochastic() {
        let env = RandomMDP::new(12, 3, 99).unwrap();
        let mdp = env.tabular(0.9);
        for rows in &mdp.transitions {
            for row in rows {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert!(value_iteration(&mdp, 1e-9).is_ok());
    }

    #[test]
    fn random_mdp_deterministic_in_seed() {
        let run = |seed| {
            let mut env = RandomMDP::new(6, 2, 1).unwrap();
            let mut obs = vec![env.reset(seed).unwrap()];
            for i in 0..30 {
                obs.push(env.step(i % 2).unwrap().obs);
            }
            obs
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }
}
