//! Per-step update rules over index-aligned parameter vectors.
//!
//! * [`adam_step`]: Adam on the gradient of an objective, `w <- w - eta * m / (sqrt(v) + eps)`.
//! * [`trace_accumulate`] + [`q_lambda_step`]: accumulating traces, `w <- w + eta * delta * z`.
//! * [`trace_accumulate`] + [`aq_lambda_step`]: traces normalised by a running second
//!   moment of the value gradient, with the TD error clipped to `[-1, 1]`.
//! * [`obgd_step`]: trace update with an overshoot-bounded step size.
//! * [`sgdm_step`]: heavy-ball momentum baseline.
//!
//! Every rule validates its inputs before touching state, so a rejected call
//! leaves weights and statistics exactly as they were.

use crate::approximator::{first_non_finite, ParamVector};
use crate::error::{Error, Result};

fn check_aligned(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!(
            "{what}: vectors of length {} and {} are not aligned",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match first_non_finite(values) {
        Some(i) => Err(Error::numeric(what, i)),
        None => Ok(()),
    }
}

fn check_scalar(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(what, 0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta0: f64,
    pub beta1: f64,
    pub epsilon: f64,
    pub bias_correction: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta0: 0.999,
            beta1: 0.999,
            epsilon: 0.01,
            bias_correction: false,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta0) || !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::Config(format!(
                "Adam betas must lie in [0, 1), got ({}, {})",
                self.beta0, self.beta1
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "Adam epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParamVector,
    pub v: ParamVector,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(AdamState {
            m: ParamVector::zeros(len),
            v: ParamVector::zeros(len),
            step_count: 0,
            config,
        })
    }
}

/// One Adam step; returns the L2 norm of the applied weight change.
pub fn adam_step(state: &mut AdamState, weights: &mut ParamVector, grad: &ParamVector, eta: f64) -> Result<f64> {
    check_aligned(weights, grad, "adam_step")?;
    check_aligned(weights, &state.m, "adam_step state")?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be finite and non-negative, got {eta}"
        )));
    }
    check_finite(grad, "adam gradient")?;
    let AdamConfig {
        beta0,
        beta1,
        epsilon,
        bias_correction,
    } = state.config;
    state.step_count += 1;
    let (c0, c1) = if bias_correction {
        let t = state.step_count as i32;
        (1.0 - beta0.powi(t), 1.0 - beta1.powi(t))
    } else {
        (1.0, 1.0)
    };
    let mut sq = 0.0;
    let moments = state.m.iter_mut().zip(state.v.iter_mut());
    for ((w, g), (m, v)) in weights.iter_mut().zip(grad.iter()).zip(moments) {
        *m = beta0 * *m + (1.0 - beta0) * g;
        *v = beta1 * *v + (1.0 - beta1) * g * g;
        let step = eta * (*m / c0) / ((*v / c1).sqrt() + epsilon);
        *w -= step;
        sq += step * step;
    }
    Ok(sq.sqrt())
}

/// Eligibility trace `z`, plus the second-moment estimate `v` used by AQ(lambda).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    pub z: ParamVector,
    pub v: Option<ParamVector>,
    /// Product `gamma * lambda`.
    pub decay: f64,
}

impl TraceState {
    /// Plain accumulating trace (Q(lambda), ObGD).
    pub fn new(len: usize, decay: f64) -> Result<Self> {
        Self::check_decay(decay)?;
        Ok(TraceState {
            z: ParamVector::zeros(len),
            v: None,
            decay,
        })
    }

    /// Trace with a second-moment estimate (AQ(lambda)).
    pub fn with_second_moment(len: usize, decay: f64) -> Result<Self> {
        Self::check_decay(decay)?;
        Ok(TraceState {
            z: ParamVector::zeros(len),
            v: Some(ParamVector::zeros(len)),
            decay,
        })
    }

    fn check_decay(decay: f64) -> Result<()> {
        // decay = 1 (gamma = lambda = 1) is allowed for offline Monte-Carlo checks
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::Config(format!(
                "trace decay gamma*lambda must lie in [0, 1], got {decay}"
            )));
        }
        Ok(())
    }
}

/// `z <- decay * z + g`, and `v <- decay * v + (1 - decay) * g^2` when tracked.
pub fn trace_accumulate(state: &mut TraceState, grad_q: &ParamVector) -> Result<()> {
    check_aligned(&state.z, grad_q, "trace_accumulate")?;
    check_finite(grad_q, "value gradient")?;
    let decay = state.decay;
    for (z, g) in state.z.iter_mut().zip(grad_q.iter()) {
        *z = decay * *z + g;
    }
    if let Some(v) = state.v.as_mut() {
        for (v, g) in v.iter_mut().zip(grad_q.iter()) {
            *v = decay * *v + (1.0 - decay) * g * g;
        }
    }
    Ok(())
}

/// `w <- w + eta * delta * z`; returns the L2 norm of the change.
pub fn q_lambda_step(state: &TraceState, weights: &mut ParamVector, delta: f64, eta: f64) -> Result<f64> {
    check_aligned(&state.z, weights, "q_lambda_step")?;
    check_scalar(delta, "td error")?;
    check_scalar(eta, "learning rate")?;
    let scale = eta * delta;
    let mut sq = 0.0;
    for (w, z) in weights.iter_mut().zip(state.z.iter()) {
        let step = scale * z;
        *w += step;
        sq += step * step;
    }
    Ok(sq.sqrt())
}

/// Outcome of an AQ(lambda) step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AqLambdaReport {
    pub clipped_delta: f64,
    pub update_norm: f64,
}

/// `w <- w + eta * clip(delta, -1, 1) * z / (sqrt(v) + eps)`.
pub fn aq_lambda_step(
    state: &TraceState,
    weights: &mut ParamVector,
    delta: f64,
    eta: f64,
    epsilon: f64,
) -> Result<AqLambdaReport> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!(
            "AQ(lambda) epsilon must be positive, got {epsilon}"
        )));
    }
    let v = state
        .v
        .as_ref()
        .ok_or_else(|| Error::Usage("AQ(lambda) needs a trace with a second moment".into()))?;
    check_aligned(&state.z, weights, "aq_lambda_step")?;
    check_scalar(delta, "td error")?;
    check_scalar(eta, "learning rate")?;
    let clipped_delta = delta.clamp(-1.0, 1.0);
    let scale = eta * clipped_delta;
    let mut sq = 0.0;
    for ((w, z), v) in weights.iter_mut().zip(state.z.iter()).zip(v.iter()) {
        let step = scale * z / (v.sqrt() + epsilon);
        *w += step;
        sq += step * step;
    }
    Ok(AqLambdaReport {
        clipped_delta,
        update_norm: sq.sqrt(),
    })
}

/// Outcome of an ObGD step; `certificate = eta_eff * kappa * max(|delta|, 1) * ||z||_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObgdReport {
    pub effective_step: f64,
    pub certificate: f64,
    pub update_norm: f64,
}

/// Overshoot-bounded step: `eta_eff = min(eta, 1 / (kappa * max(|delta|, 1) * ||z||_1))`,
/// then `w <- w + eta_eff * delta * z`.
pub fn obgd_step(
    state: &TraceState,
    weights: &mut ParamVector,
    delta: f64,
    eta: f64,
    kappa: f64,
) -> Result<ObgdReport> {
    if !(kappa > 0.0) {
        return Err(Error::Config(format!("ObGD kappa must be positive, got {kappa}")));
    }
    check_aligned(&state.z, weights, "obgd_step")?;
    check_scalar(delta, "td error")?;
    check_scalar(eta, "learning rate")?;
    let delta_bar = delta.abs().max(1.0);
    let bound = kappa * delta_bar * state.z.norm_l1();
    let effective_step = if eta * bound > 1.0 {
        // 1 / bound can round so that step * bound lands one ulp above 1
        let s = 1.0 / bound;
        if s * bound > 1.0 {
            f64::from_bits(s.to_bits() - 1)
        } else {
            s
        }
    } else {
        eta
    };
    let scale = effective_step * delta;
    let mut sq = 0.0;
    for (w, z) in weights.iter_mut().zip(state.z.iter()) {
        let step = scale * z;
        *w += step;
        sq += step * step;
    }
    Ok(ObgdReport {
        effective_step,
        certificate: effective_step * bound,
        update_norm: sq.sqrt(),
    })
}

/// Zeroes the trace; the second moment is kept unless `reset_v` is set.
pub fn reset_trace(state: &mut TraceState, reset_v: bool) {
    state.z.fill_zero();
    if reset_v {
        if let Some(v) = state.v.as_mut() {
            v.fill_zero();
        }
    }
}

/// Heavy-ball momentum: `m <- mu * m + g`, `w <- w - eta * m`.
pub fn sgdm_step(
    momentum: &mut ParamVector,
    weights: &mut ParamVector,
    grad: &ParamVector,
    eta: f64,
    mu: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::Config(format!("momentum must lie in [0, 1), got {mu}")));
    }
    check_aligned(momentum, weights, "sgdm_step")?;
    check_aligned(grad, weights, "sgdm_step")?;
    check_finite(grad, "sgdm gradient")?;
    let mut sq = 0.0;
    for ((m, w), g) in momentum.iter_mut().zip(weights.iter_mut()).zip(grad.iter()) {
        *m = mu * *m + g;
        let step = eta * *m;
        *w -= step;
        sq += step * step;
    }
    Ok(sq.sqrt())
}
