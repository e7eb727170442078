//! Environment living in a child process, driven over newline-delimited JSON.
//!
//! Requests (one object per line, LF-terminated):
//!
//! ```text
//! {"op":"reset","seed":7}
//! {"op":"step","action":1}
//! ```
//!
//! Responses: `{"obs":[...],"reward":0.0,"terminal":false}`. `reward` and
//! `terminal` may be omitted in reset responses.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Env, EnvSpec, StepOutcome};
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Request {
    Reset { seed: u64 },
    Step { action: usize },
}

#[derive(Deserialize)]
struct Response {
    obs: Vec<f64>,
    #[serde(default)]
    reward: f64,
    #[serde(default)]
    terminal: bool,
}

pub struct BridgeEnv {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    spec: EnvSpec,
    timeout: Duration,
    label: String,
}

impl BridgeEnv {
    /// Spawns `command[0]` with the remaining elements as arguments.
    pub fn spawn(command: &[String], spec: EnvSpec, timeout: Duration) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("bridge command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Env(format!("failed to spawn '{program}': {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(BridgeEnv {
            child,
            stdin,
            lines: rx,
            spec,
            timeout,
            label: command.join(" "),
        })
    }

    fn exchange(&mut self, request: &Request) -> Result<Response> {
        let mut line = serde_json::to_string(request).expect("requests always serialize");
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Env(format!("writing to '{}': {e}", self.label)))?;
        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(Error::Env(format!("reading from '{}': {e}", self.label))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Env(format!(
                    "'{}' did not answer within {:?}",
                    self.label, self.timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => return Err(Error::Env(format!("'{}' exited", self.label))),
        };
        let response: Response = serde_json::from_str(&reply)
            .map_err(|e| Error::Env(format!("malformed line from '{}': {reply:?} ({e})", self.label)))?;
        if response.obs.len() != self.spec.observation_dim {
            return Err(Error::Env(format!(
                "'{}' sent an observation of length {}, expected {}: {reply:?}",
                self.label,
                response.obs.len(),
                self.spec.observation_dim
            )));
        }
        Ok(response)
    }
}

impl Env for BridgeEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        Ok(self.exchange(&Request::Reset { seed })?.obs)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if action >= self.spec.action_count {
            return Err(Error::Usage(format!(
                "action {action} out of range for {} actions",
                self.spec.action_count
            )));
        }
        let r = self.exchange(&Request::Step { action })?;
        Ok(StepOutcome {
            obs: r.obs,
            reward: r.reward,
            raw_reward: r.reward,
            terminal: r.terminal,
            truncated: false,
        })
    }

    fn name(&self) -> String {
        "bridge".into()
    }
}

impl Drop for BridgeEnv {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requests_are_single_line_json() {
        assert_eq!(
            serde_json::to_string(&Request::Reset { seed: 3 }).unwrap(),
            r#"{"op":"reset","seed":3}"#
        );
        assert_eq!(
            serde_json::to_string(&Request::Step { action: 1 }).unwrap(),
            r#"{"op":"step","action":1}"#
        );
    }
}
