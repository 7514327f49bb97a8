//! Line-protocol adapter for simulator experts running as child processes.
//!
//! The child writes one decimal value in `[0, 1]` per line to stdout. Each
//! refresh reads exactly `n_sim` lines, bounded by a timeout. A nonzero exit,
//! early EOF, malformed or out-of-range line, or timeout is a failure.

use std::io::{BufRead, BufReader};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub const DEFAULT_TIMEOUT_SECS: f64 = 30.0;

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECS
}

/// How to launch an external simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalCommand {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub n_sim: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub env: Vec<(String, String)>,
}

impl ExternalCommand {
    pub fn new(command: Vec<String>, n_sim: usize) -> Self {
        Self {
            command,
            n_sim,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            env: Vec::new(),
        }
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }
}

/// A long-lived child process plus the thread draining its stdout.
pub struct ExternalSampler {
    cmd: ExternalCommand,
    child: Option<Child>,
    lines: Option<Receiver<std::io::Result<String>>>,
}

impl std::fmt::Debug for ExternalSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalSampler")
            .field("cmd", &self.cmd)
            .field("running", &self.child.is_some())
            .finish()
    }
}

impl ExternalSampler {
    pub fn new(cmd: ExternalCommand) -> Self {
        Self {
            cmd,
            child: None,
            lines: None,
        }
    }

    pub fn command(&self) -> &ExternalCommand {
        &self.cmd
    }

    fn spawn(&mut self) -> Result<(), String> {
        let (program, args) = self
            .cmd
            .command
            .split_first()
            .ok_or_else(|| "empty command".to_string())?;
        let mut child = Command::new(program)
            .args(args)
            .envs(self.cmd.env.iter().map(|(k, v)| (k, v)))
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("failed to spawn `{program}`: {e}"))?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        self.child = Some(child);
        self.lines = Some(rx);
        Ok(())
    }

    /// Reads the next `n_sim` samples.
    pub fn fetch(&mut self) -> Result<Vec<f64>, String> {
        if self.child.is_none() {
            self.spawn()?;
        }
        let n = self.cmd.n_sim;
        let deadline = Instant::now() + self.cmd.timeout();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let rx = self.lines.as_ref().expect("spawned");
            match rx.recv_timeout(remaining) {
                Ok(Ok(line)) => out.push(parse_sample(&line)?),
                Ok(Err(e)) => return Err(format!("reading stdout: {e}")),
                Err(RecvTimeoutError::Timeout) => {
                    self.shutdown();
                    return Err(format!(
                        "timed out after {}s with {} of {n} samples",
                        self.cmd.timeout_secs,
                        out.len()
                    ));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    let status = self.child.as_mut().and_then(|c| c.wait().ok());
                    self.child = None;
                    return Err(match status {
                        Some(s) if !s.success() => format!("process exited with {s}"),
                        _ => format!("output ended after {} of {n} samples", out.len()),
                    });
                }
            }
        }
        Ok(out)
    }

    fn shutdown(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
        self.lines = None;
    }
}

impl Drop for ExternalSampler {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Strict parse: digits with at most one '.', value in `[0, 1]`.
pub fn parse_sample(line: &str) -> Result<f64, String> {
    let s = line.strip_suffix('\r').unwrap_or(line);
    let digits = s.chars().filter(char::is_ascii_digit).count();
    let dots = s.chars().filter(|c| *c == '.').count();
    if digits == 0 || dots > 1 || digits + dots != s.len() {
        return Err(format!("malformed sample line {line:?}"));
    }
    let v: f64 = s
        .parse()
        .map_err(|_| format!("malformed sample line {line:?}"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("sample {v} outside [0, 1]"));
    }
    Ok(v)
}
