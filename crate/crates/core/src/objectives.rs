//! Losses and their gradients with respect to network outputs.
//!
//! Every loss treats its target as a constant (semi-gradient convention), so
//! the returned gradient is the derivative with respect to the prediction only.

use crate::error::{Error, Result};

/// A loss value together with its gradient with respect to the head outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::numeric(what, i)),
        None => Ok(()),
    }
}

/// Squared TD error `(target - prediction)^2`.
pub fn mse(prediction: f64, target: f64) -> Result<LossGrad> {
    ensure_finite(&[prediction, target], "mse input")?;
    let delta = target - prediction;
    Ok(LossGrad {
        loss: delta * delta,
        grad: vec![-2.0 * delta],
    })
}

/// Huber-style loss: quadratic for `|delta| < kappa`, linear beyond.
pub fn smooth_l1(prediction: f64, target: f64, kappa: f64) -> Result<LossGrad> {
    if !(kappa > 0.0) {
        return Err(Error::Config(format!("smooth_l1 kappa must be positive, got {kappa}")));
    }
    ensure_finite(&[prediction, target], "smooth_l1 input")?;
    let delta = target - prediction;
    let (loss, grad) = if delta.abs() < kappa {
        (0.5 * delta * delta / kappa, -delta / kappa)
    } else {
        (delta.abs() - 0.5 * kappa, -delta.signum())
    };
    Ok(LossGrad { loss, grad: vec![grad] })
}

/// Control TD error `r + gamma * max_a q(s', a) - q(s, a)`; no bootstrap on terminal.
pub fn td_error_control(q_now: f64, q_next_max: f64, reward: f64, discount: f64, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { discount * q_next_max };
    reward + bootstrap - q_now
}

/// Evenly spaced return atoms `v_min = z_0 < ... < z_{K-1} = v_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub v_min: f64,
    pub v_max: f64,
    pub atoms: usize,
}

impl Support {
    pub fn new(v_min: f64, v_max: f64, atoms: usize) -> Result<Self> {
        if atoms < 2 || !(v_max > v_min) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(Error::Config(format!(
                "invalid support [{v_min}, {v_max}] with {atoms} atoms"
            )));
        }
        Ok(Support { v_min, v_max, atoms })
    }

    pub fn delta_z(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atoms - 1) as f64
    }

    pub fn atom(&self, i: usize) -> f64 {
        if i + 1 == self.atoms {
            self.v_max
        } else {
            self.v_min + i as f64 * self.delta_z()
        }
    }

    pub fn atoms(&self) -> Vec<f64> {
        (0..self.atoms).map(|i| self.atom(i)).collect()
    }
}

/// Probability masses over a fixed [`Support`].
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDistribution {
    pub support: Support,
    pub probs: Vec<f64>,
}

impl CategoricalDistribution {
    pub fn new(support: Support, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != support.atoms {
            return Err(Error::Usage(format!(
                "{} probabilities for {} atoms",
                probs.len(),
                support.atoms
            )));
        }
        ensure_finite(&probs, "categorical probabilities")?;
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Usage(format!(
                "probabilities must be non-negative and sum to 1 (sum = {total})"
            )));
        }
        Ok(CategoricalDistribution { support, probs })
    }

    pub fn from_logits(support: Support, logits: &[f64]) -> Result<Self> {
        if logits.len() != support.atoms {
            return Err(Error::Usage(format!(
                "{} logits for {} atoms",
                logits.len(),
                support.atoms
            )));
        }
        ensure_finite(logits, "categorical logits")?;
        Ok(CategoricalDistribution {
            support,
            probs: softmax(logits),
        })
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| p * self.support.atom(i))
            .sum()
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Projects `reward + discount * Z` back onto the source's atom grid.
///
/// Each shifted atom is clipped to `[v_min, v_max]` and its mass is split
/// linearly between the two neighbouring atoms.
pub fn c51_project(
    source: &CategoricalDistribution,
    reward: f64,
    discount: f64,
    terminal: bool,
) -> Result<CategoricalDistribution> {
    ensure_finite(&[reward, discount], "c51 projection input")?;
    let support = source.support;
    let k = support.atoms;
    if source.probs.len() != k {
        return Err(Error::Usage(format!(
            "distribution has {} masses on a {k}-atom grid",
            source.probs.len()
        )));
    }
    let dz = support.delta_z();
    let mut out = vec![0.0; k];
    for (j, &p) in source.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        // Grid coordinate of r + discount * z_j, written so that the identity
        // map (r = 0, discount = 1) lands exactly on j.
        let b = if terminal {
            (reward - support.v_min) / dz
        } else {
            (reward + (discount - 1.0) * support.v_min) / dz + discount * j as f64
        };
        let b = b.clamp(0.0, (k - 1) as f64);
        let lower = b.floor() as usize;
        let upper = b.ceil() as usize;
        if lower == upper {
            out[lower] += p;
        } else {
            let frac = b - lower as f64;
            out[lower] += p * (1.0 - frac);
            out[upper] += p * frac;
        }
    }
    Ok(CategoricalDistribution { support, probs: out })
}

/// Cross-entropy between a projected target and `softmax(logits)`.
pub fn c51_cross_entropy(logits: &[f64], target: &CategoricalDistribution) -> Result<LossGrad> {
    if logits.len() != target.probs.len() {
        return Err(Error::Usage(format!(
            "{} logits for a {}-atom target",
            logits.len(),
            target.probs.len()
        )));
    }
    ensure_finite(logits, "c51 logits")?;
    let log_p = log_softmax(logits);
    let loss = -target
        .probs
        .iter()
        .zip(&log_p)
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, lp)| m * lp)
        .sum::<f64>();
    let grad = log_p.iter().zip(&target.probs).map(|(lp, m)| lp.exp() - m).collect();
    Ok(LossGrad { loss, grad })
}

/// Midpoint quantile fractions `(2i + 1) / (2N)`.
pub fn quantile_midpoints(n: usize) -> Vec<f64> {
    (0..n).map(|i| (2 * i + 1) as f64 / (2 * n) as f64).collect()
}

/// Quantile Huber loss: summed over estimated quantiles, averaged over target samples.
pub fn quantile_huber(estimates: &[f64], targets: &[f64], kappa: f64) -> Result<LossGrad> {
    if !(kappa > 0.0) {
        return Err(Error::Config(format!(
            "quantile_huber kappa must be positive, got {kappa}"
        )));
    }
    if estimates.is_empty() || targets.is_empty() {
        return Err(Error::Usage(
            "quantile_huber needs at least one estimate and target".into(),
        ));
    }
    ensure_finite(estimates, "quantile estimates")?;
    ensure_finite(targets, "quantile targets")?;
    let taus = quantile_midpoints(estimates.len());
    let m = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; estimates.len()];
    for (i, (&theta, &tau)) in estimates.iter().zip(&taus).enumerate() {
        for &t in targets {
            let u = t - theta;
            let weight = if u < 0.0 { 1.0 - tau } else { tau };
            let (huber, d_huber) = if u.abs() <= kappa {
                (0.5 * u * u, u)
            } else {
                (kappa * (u.abs() - 0.5 * kappa), kappa * u.signum())
            };
            loss += weight * huber / kappa / m;
            // du/dtheta = -1
            grad[i] -= weight * d_huber / kappa / m;
        }
    }
    Ok(LossGrad { loss, grad })
}
