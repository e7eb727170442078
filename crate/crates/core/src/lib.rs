//! Streaming deep reinforcement learning: one transition per update, no replay
//! buffer, no target network.

// `!(x > 0.0)` is used on purpose so that NaN fails validation too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod approximator;
pub mod envs;
pub mod error;
pub mod evalstats;
pub mod harness;
pub mod objectives;
pub mod optim;
pub mod oracle;

pub use error::{Error, Result};
