//! Line-delimited JSON protocol for explaining models that live in another process.
//!
//! The client writes one [`Request`] per image to the child's stdin and reads
//! one [`Response`] per line from its stdout. Ids increase strictly on each
//! connection and responses are matched back to requests by id.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{check_distribution, PredictError, Predictor};
use crate::representation::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    /// `[height, width, channels]`
    pub shape: [usize; 3],
    pub pixels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub probs: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("failed to launch '{command}': {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },

    #[error("i/o with predictor process: {0}")]
    Io(#[from] io::Error),

    #[error("malformed response ({reason}): {payload}")]
    Malformed { reason: String, payload: String },

    #[error("response id {got} does not match any pending request: {payload}")]
    UnexpectedId { got: u64, payload: String },

    #[error("response {id} violates the probability contract ({reason}): {payload}")]
    Contract {
        id: u64,
        reason: String,
        payload: String,
    },

    #[error("no complete response within {timeout:?}; {pending} request(s) outstanding")]
    Timeout { timeout: Duration, pending: usize },

    #[error("predictor process closed its output with {pending} request(s) outstanding")]
    Closed { pending: usize },

    #[error("worker is unusable after an earlier protocol failure")]
    Poisoned,
}

#[derive(Debug, Clone)]
pub struct ExternalConfig {
    pub timeout: Duration,
    pub workers: usize,
    /// Number of classes; discovered from the probe response when `None`.
    pub num_classes: Option<usize>,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        ExternalConfig {
            timeout: Duration::from_secs(30),
            workers: 1,
            num_classes: None,
        }
    }
}

struct Worker {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<io::Result<String>>,
    next_id: u64,
    poisoned: bool,
}

impl Worker {
    fn spawn(command: &str) -> Result<Self, ProtocolError> {
        let mut child = shell(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ProtocolError::Spawn {
                command: command.to_string(),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
            next_id: 0,
            poisoned: false,
        })
    }

    fn roundtrip(
        &mut self,
        batch: &[Image],
        num_classes: Option<usize>,
        timeout: Duration,
    ) -> Result<Vec<Vec<f64>>, ProtocolError> {
        if self.poisoned {
            return Err(ProtocolError::Poisoned);
        }
        let result = self.exchange(batch, num_classes, timeout);
        if result.is_err() {
            self.poisoned = true;
        }
        result
    }

    fn exchange(
        &mut self,
        batch: &[Image],
        num_classes: Option<usize>,
        timeout: Duration,
    ) -> Result<Vec<Vec<f64>>, ProtocolError> {
        let first_id = self.next_id;
        {
            let stdin = self.stdin.as_mut().ok_or(ProtocolError::Closed {
                pending: batch.len(),
            })?;
            let mut out = io::BufWriter::new(stdin);
            for image in batch {
                let request = Request {
                    id: self.next_id,
                    shape: [image.height(), image.width(), image.channels()],
                    pixels: image.data().to_vec(),
                };
                self.next_id += 1;
                serde_json::to_writer(&mut out, &request).map_err(io::Error::from)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }

        let deadline = Instant::now() + timeout;
        let mut results: Vec<Option<Vec<f64>>> = vec![None; batch.len()];
        let mut pending = batch.len();
        while pending > 0 {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(remaining) {
                Ok(line) => line?,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(ProtocolError::Timeout { timeout, pending })
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ProtocolError::Closed { pending })
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let response: Response =
                serde_json::from_str(&line).map_err(|e| ProtocolError::Malformed {
                    reason: e.to_string(),
                    payload: line.clone(),
                })?;
            let slot = response
                .id
                .checked_sub(first_id)
                .map(|i| i as usize)
                .filter(|&i| i < batch.len() && results[i].is_none())
                .ok_or_else(|| ProtocolError::UnexpectedId {
                    got: response.id,
                    payload: line.clone(),
                })?;
            let k = num_classes.unwrap_or(response.probs.len());
            check_distribution(&response.probs, k).map_err(|reason| ProtocolError::Contract {
                id: response.id,
                reason,
                payload: line.clone(),
            })?;
            results[slot] = Some(response.probs);
            pending -= 1;
        }
        Ok(results
            .into_iter()
            .map(|r| r.expect("all slots filled"))
            .collect())
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(unix)]
fn shell(command: &str) -> Command {
    let mut c = Command::new("sh");
    c.arg("-c").arg(command);
    c
}

#[cfg(windows)]
fn shell(command: &str) -> Command {
    let mut c = Command::new("cmd");
    c.arg("/C").arg(command);
    c
}

/// A [`Predictor`] backed by a pool of subprocesses speaking the wire protocol.
pub struct ExternalPredictor {
    command: String,
    workers: Vec<Mutex<Worker>>,
    num_classes: usize,
    timeout: Duration,
    next_worker: AtomicUsize,
}

impl ExternalPredictor {
    /// Launches the workers. `probe` is sent once to the first worker to
    /// discover the class count when the configuration does not fix it.
    pub fn spawn(
        command: &str,
        config: &ExternalConfig,
        probe: &Image,
    ) -> Result<Self, ProtocolError> {
        let workers = (0..config.workers.max(1))
            .map(|_| Worker::spawn(command).map(Mutex::new))
            .collect::<Result<Vec<_>, _>>()?;
        let num_classes = {
            let mut w = workers[0].lock().expect("fresh worker lock");
            let out = w.roundtrip(
                std::slice::from_ref(probe),
                config.num_classes,
                config.timeout,
            )?;
            out[0].len()
        };
        if num_classes == 0 {
            return Err(ProtocolError::Malformed {
                reason: "probe response has no classes".into(),
                payload: "[]".into(),
            });
        }
        Ok(ExternalPredictor {
            command: command.to_string(),
            workers,
            num_classes,
            timeout: config.timeout,
            next_worker: AtomicUsize::new(0),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

impl Predictor for ExternalPredictor {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict_proba(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>, PredictError> {
        let start = self.next_worker.fetch_add(1, Ordering::Relaxed);
        let n = self.workers.len();
        let mut guard = (0..n)
            .find_map(|k| self.workers[(start + k) % n].try_lock().ok())
            .unwrap_or_else(|| {
                self.workers[start % n]
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
            });
        Ok(guard.roundtrip(batch, Some(self.num_classes), self.timeout)?)
    }
}

/// Serves `predictor` over the wire protocol until `input` reaches end of file.
pub fn serve_predictor<P, R, W>(predictor: &P, input: R, mut output: W) -> Result<(), PredictError>
where
    P: Predictor + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in input.lines() {
        let line = line.map_err(ProtocolError::from)?;
        if line.trim().is_empty() {
            continue;
        }
        let request: Request =
            serde_json::from_str(&line).map_err(|e| ProtocolError::Malformed {
                reason: e.to_string(),
                payload: truncate(&line),
            })?;
        let [h, w, c] = request.shape;
        let image = Image::new(w, h, c, request.pixels).map_err(|e| ProtocolError::Malformed {
            reason: e.to_string(),
            payload: format!("request {}", request.id),
        })?;
        let probs = predictor
            .predict_proba(std::slice::from_ref(&image))?
            .remove(0);
        serde_json::to_writer(
            &mut output,
            &Response {
                id: request.id,
                probs,
            },
        )
        .map_err(io::Error::from)
        .map_err(ProtocolError::from)?;
        output.write_all(b"\n").map_err(ProtocolError::from)?;
        output.flush().map_err(ProtocolError::from)?;
    }
    Ok(())
}

fn truncate(s: &str) -> String {
    const MAX: usize = 200;
    if s.len() <= MAX {
        s.to_string()
    } else {
        let cut = (0..=MAX)
            .rev()
            .find(|&i| s.is_char_boundary(i))
            .unwrap_or(0);
        format!("{}...", &s[..cut])
    }
}
