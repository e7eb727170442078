//! Brute-force ground truth for tests and acceptance runs: value iteration on
//! dense tabular MDPs and forward-view returns computed straight from their
//! definitions. Nothing here depends on the optimizers or agents.

use crate::error::{Error, Result};

/// Dense tabular MDP. `transitions[s][a][s']` is a probability row;
/// `rewards[s][a]` is the expected reward of taking `a` in `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMDP {
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
    pub terminal: Vec<bool>,
    pub gamma: f64,
}

impl TabularMDP {
    pub fn n_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_actions(&self) -> usize {
        self.rewards.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states(), self.n_actions());
        if ns == 0 || na == 0 {
            return Err(Error::Config("MDP needs at least one state and action".into()));
        }
        if self.transitions.len() != ns || self.terminal.len() != ns {
            return Err(Error::Config("MDP tables disagree on the state count".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("discount {} outside [0, 1]", self.gamma)));
        }
        for (s, rows) in self.transitions.iter().enumerate() {
            if rows.len() != na || self.rewards[s].len() != na {
                return Err(Error::Config(format!("state {s} has the wrong action count")));
            }
            for (a, row) in rows.iter().enumerate() {
                let total: f64 = row.iter().sum();
                if row.len() != ns || row.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "transition row ({s}, {a}) is not a distribution (sum {total})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// One synchronous Bellman optimality backup of `q`.
    pub fn backup(&self, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let v: Vec<f64> = q
            .iter()
            .zip(&self.terminal)
            .map(|(row, &t)| {
                if t {
                    0.0
                } else {
                    row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        (0..self.n_states())
            .map(|s| {
                (0..self.n_actions())
                    .map(|a| {
                        if self.terminal[s] {
                            return 0.0;
                        }
                        let next: f64 = self.transitions[s][a].iter().zip(&v).map(|(p, v)| p * v).sum();
                        self.rewards[s][a] + self.gamma * next
                    })
                    .collect()
            })
            .collect()
    }
}

/// Optimal action values and the greedy policy (lowest index on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueIterationResult {
    pub q_star: Vec<Vec<f64>>,
    pub policy: Vec<usize>,
    pub sweeps: usize,
}

impl ValueIterationResult {
    /// Actions within `tol` of the optimal value in state `s`.
    pub fn optimal_actions(&self, s: usize, tol: f64) -> Vec<usize> {
        let row = &self.q_star[s];
        let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (0..row.len()).filter(|&a| row[a] >= best - tol).collect()
    }
}

pub const MAX_SWEEPS: usize = 1_000_000;

/// Iterates Bellman backups until the sup-norm residual drops below `tol`.
pub fn value_iteration(mdp: &TabularMDP, tol: f64) -> Result<ValueIterationResult> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    mdp.validate()?;
    let mut q = vec![vec![0.0; mdp.n_actions()]; mdp.n_states()];
    for sweep in 1..=MAX_SWEEPS {
        let next = mdp.backup(&q);
        let residual = next
            .iter()
            .flatten()
            .zip(q.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if residual < tol {
            let policy = q
                .iter()
                .map(|row| {
                    let mut best = 0;
                    for a in 1..row.len() {
                        if row[a] > row[best] {
                            best = a;
                        }
                    }
                    best
                })
                .collect();
            return Ok(ValueIterationResult {
                q_star: q,
                policy,
                sweeps: sweep,
            });
        }
    }
    Err(Error::Config(format!(
        "value iteration did not converge within {MAX_SWEEPS} sweeps"
    )))
}

/// `sum_k gamma^k r_k`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// A finished episode: `rewards[k]` is `R_{k+1}`, received after leaving state `k`.
/// States are referred to by time index; state `T = rewards.len()` is terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub rewards: Vec<f64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// `G_{t:t+n}`: n rewards then a bootstrap from `value(t + n)`; falls back to
/// the Monte-Carlo return when `t + n` reaches the end of the episode.
pub fn n_step_return(episode: &Episode, t: usize, n: usize, value: &dyn Fn(usize) -> f64, gamma: f64) -> f64 {
    let end = episode.len();
    let horizon = (t + n).min(end);
    let mut g = 0.0;
    for k in t..horizon {
        g += gamma.powi((k - t) as i32) * episode.rewards[k];
    }
    if t + n < end {
        g += gamma.powi(n as i32) * value(t + n);
    }
    g
}

/// Weights of the n-step returns in the lambda-return, `n = 1..T-t-1`, followed by the tail weight.
pub fn lambda_weights(t: usize, horizon: usize, lambda: f64) -> Vec<f64> {
    let steps = horizon - t;
    let mut w: Vec<f64> = (1..steps).map(|n| (1.0 - lambda) * lambda.powi(n as i32 - 1)).collect();
    w.push(lambda.powi(steps as i32 - 1));
    w
}

/// Episodic lambda-return, by direct weighted summation of every n-step return.
pub fn lambda_return(episode: &Episode, t: usize, lambda: f64, value: &dyn Fn(usize) -> f64, gamma: f64) -> f64 {
    let end = episode.len();
    let weights = lambda_weights(t, end, lambda);
    let steps = end - t;
    let mut g = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let n = if i + 1 == weights.len() { steps } else { i + 1 };
        if *w != 0.0 {
            g += w * n_step_return(episode, t, n, value, gamma);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(reward: f64, gamma: f64) -> TabularMDP {
        TabularMDP {
            transitions: vec![vec![vec![1.0]]],
            rewards: vec![vec![reward]],
            terminal: vec![false],
            gamma,
        }
    }

    #[test]
    fn geometric_series_fixed_point() {
        let res = value_iteration(&single_state(1.0, 0.5), 1e-12).unwrap();
        assert!((res.q_star[0][0] - 2.0).abs() < 1e-11);
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let res = value_iteration(&single_state(0.0, 0.9), 1e-10).unwrap();
        assert_eq!(res.q_star, vec![vec![0.0]]);
    }

    #[test]
    fn undiscounted_loop_does_not_converge() {
        let mdp = single_state(1.0, 1.0);
        let err = value_iteration(&mdp, 1e-6).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn invalid_rows_rejected() {
        let mut mdp = single_state(1.0, 0.5);
        mdp.transitions[0][0][0] = 0.9;
        assert!(value_iteration(&mdp, 1e-6).is_err());
    }

    #[test]
    fn returns_basic() {
        assert_eq!(discounted_return(&[1.0], 0.3), 1.0);
        assert_eq!(discounted_return(&[1.0, 1.0], 0.5), 1.5);
        assert_eq!(discounted_return(&[], 0.5), 0.0);
    }

    #[test]
    fn n_step_hand_expansion() {
        let ep = Episode {
            rewards: vec![1.0, -2.0, 3.0],
        };
        let v = |k: usize| [0.5, 0.25, -1.0, 99.0][k];
        let g = 0.9;
        assert_eq!(n_step_return(&ep, 0, 1, &v, g), 1.0 + g * 0.25);
        assert!((n_step_return(&ep, 0, 2, &v, g) - (1.0 - 2.0 * g + -(g * g))).abs() < 1e-15);
        let mc = 1.0 - 2.0 * g + 3.0 * g * g;
        assert!((n_step_return(&ep, 0, 3, &v, g) - mc).abs() < 1e-15);
        assert!((n_step_return(&ep, 0, 10, &v, g) - mc).abs() < 1e-15);
        assert_eq!(n_step_return(&ep, 2, 1, &v, g), 3.0);
    }

    #[test]
    fn lambda_return_endpoints_and_enumeration() {
        let ep = Episode {
            rewards: vec![1.0, -2.0, 3.0],
        };
        let v = |k: usize| [0.5, 0.25, -1.0, 0.0][k];
        let g = 0.9;
        assert_eq!(lambda_return(&ep, 0, 0.0, &v, g), n_step_return(&ep, 0, 1, &v, g));
        assert!((lambda_return(&ep, 0, 1.0, &v, g) - discounted_return(&ep.rewards, g)).abs() < 1e-15);
        let g1 = n_step_return(&ep, 0, 1, &v, g);
        let g2 = n_step_return(&ep, 0, 2, &v, g);
        let g0 = discounted_return(&ep.rewards, g);
        let expected = 0.5 * g1 + 0.25 * g2 + 0.25 * g0;
        assert!((lambda_return(&ep, 0, 0.5, &v, g) - expected).abs() < 1e-15);
    }

    #[test]
    fn lambda_weights_sum_to_one() {
        for horizon in 1..12 {
            for t in 0..horizon {
                for lambda in [0.0, 0.1, 0.5, 0.8, 0.99, 1.0] {
                    let s: f64 = lambda_weights(t, horizon, lambda).iter().sum();
                    assert!((s - 1.0).abs() < 1e-12, "t={t} T={horizon} lambda={lambda}");
                }
            }
        }
    }
}
