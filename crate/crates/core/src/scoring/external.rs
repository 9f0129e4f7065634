//! Client for scorer processes speaking newline-delimited JSON over stdio.
//!
//! Request, one line per image:
//!
//! ```text
//! {"id": 7, "shape": [224, 224], "dtype": "f32le", "data": "<base64>"}
//! ```
//!
//! Response, one line per request, in any order:
//!
//! ```text
//! {"id": 7, "probs": [p0, p1, p2, p3, p4, p5]}
//! {"id": 7, "error": "message"}
//! ```
//!
//! A batch of requests is written before any response is read; responses are
//! matched back to requests by id. The batch timeout covers both writing the
//! requests and collecting the responses.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{ClassProbabilities, ScoreError, ScorerKind, ScorerSpec};
use crate::ion_image::{PreprocessedImage, MODEL_SIZE};

/// Responses may deviate from Σp = 1 by this much (float32 model outputs);
/// accepted vectors are renormalized.
pub const RESPONSE_SUM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Serialize)]
pub struct ScoreRequest<'a> {
    pub id: u64,
    pub shape: [usize; 2],
    pub dtype: &'a str,
    pub data: String,
}

impl ScoreRequest<'_> {
    pub fn for_image(id: u64, img: &PreprocessedImage) -> Self {
        ScoreRequest {
            id,
            shape: [MODEL_SIZE, MODEL_SIZE],
            dtype: "f32le",
            data: BASE64.encode(img.to_f32_le_bytes()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreResponse {
    id: u64,
    #[serde(default)]
    probs: Option<Vec<f64>>,
    #[serde(default)]
    error: Option<String>,
}

enum Line {
    Text(String),
    Closed,
    Failed(String),
}

pub struct ExternalScorer {
    child: Child,
    requests: Option<Sender<Vec<u8>>>,
    lines: Receiver<Line>,
    timeout: Duration,
    next_id: u64,
}

impl ExternalScorer {
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self, ScoreError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ScoreError::InvalidSpec("external scorer command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScoreError::ScorerCrashed(format!("cannot start {program:?}: {e}")))?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let (req_tx, req_rx) = mpsc::channel::<Vec<u8>>();
        // the I/O threads are detached: a killed scorer's own children may
        // keep the pipes open for a while
        std::thread::spawn(move || {
            for payload in req_rx {
                if let Err(e) = stdin.write_all(&payload).and_then(|_| stdin.flush()) {
                    log::debug!("scorer stdin closed: {e}");
                    break;
                }
            }
        });
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut stdout = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                let msg = match stdout.read_line(&mut line) {
                    Ok(0) => Line::Closed,
                    Ok(_) => Line::Text(line),
                    Err(e) => Line::Failed(e.to_string()),
                };
                let done = !matches!(msg, Line::Text(_));
                if tx.send(msg).is_err() || done {
                    break;
                }
            }
        });
        Ok(ExternalScorer {
            child,
            requests: Some(req_tx),
            lines: rx,
            timeout,
            next_id: 0,
        })
    }

    pub fn from_spec(spec: &ScorerSpec) -> Result<Self, ScoreError> {
        match &spec.kind {
            ScorerKind::ExternalProcess { command, timeout, .. } => Self::spawn(command, *timeout),
            other => Err(ScoreError::InvalidSpec(format!("{other:?} is not an external scorer"))),
        }
    }

    fn crashed(&mut self, context: &str) -> ScoreError {
        let status = match self.child.try_wait() {
            Ok(Some(status)) => format!(" ({status})"),
            _ => String::new(),
        };
        ScoreError::ScorerCrashed(format!("{context}{status}"))
    }

    /// Scores a batch; the whole batch shares one timeout.
    pub fn score_batch(&mut self, images: &[PreprocessedImage]) -> Result<Vec<ClassProbabilities>, ScoreError> {
        let first_id = self.next_id;
        self.next_id += images.len() as u64;
        let mut payload = Vec::new();
        for (k, img) in images.iter().enumerate() {
            serde_json::to_writer(&mut payload, &ScoreRequest::for_image(first_id + k as u64, img))
                .expect("requests serialize");
            payload.push(b'\n');
        }
        let sent = self.requests.as_ref().is_some_and(|tx| tx.send(payload).is_ok());
        if !sent {
            return Err(self.crashed("scorer stopped accepting requests"));
        }

        let deadline = Instant::now() + self.timeout;
        let mut pending: HashMap<u64, usize> = (0..images.len()).map(|k| (first_id + k as u64, k)).collect();
        let mut out: Vec<Option<ClassProbabilities>> = vec![None; images.len()];
        while !pending.is_empty() {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(remaining) {
                Ok(Line::Text(line)) => line,
                Ok(Line::Closed) | Err(RecvTimeoutError::Disconnected) => {
                    return Err(self.crashed(&format!(
                        "stdout closed with {} responses outstanding",
                        pending.len()
                    )))
                }
                Ok(Line::Failed(e)) => return Err(self.crashed(&format!("reading stdout failed: {e}"))),
                Err(RecvTimeoutError::Timeout) => {
                    let _ = self.child.kill();
                    return Err(ScoreError::Timeout(self.timeout));
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let (id, probs) = parse_response(&line)?;
            let slot = pending
                .remove(&id)
                .ok_or_else(|| ScoreError::ProtocolViolation(format!("unexpected response id {id}")))?;
            out[slot] = Some(probs);
        }
        Ok(out.into_iter().map(|p| p.expect("all ids answered")).collect())
    }

    pub fn score(&mut self, image: &PreprocessedImage) -> Result<ClassProbabilities, ScoreError> {
        Ok(self.score_batch(std::slice::from_ref(image))?.remove(0))
    }
}

fn parse_response(line: &str) -> Result<(u64, ClassProbabilities), ScoreError> {
    let resp: ScoreResponse = serde_json::from_str(line.trim())
        .map_err(|e| ScoreError::ProtocolViolation(format!("bad response line {:?}: {e}", line.trim())))?;
    match (resp.probs, resp.error) {
        (_, Some(message)) => Err(ScoreError::ScorerReported { id: resp.id, message }),
        (Some(p), None) => {
            let p: [f64; 6] = p.try_into().map_err(|p: Vec<f64>| {
                ScoreError::ProtocolViolation(format!("response {} has {} probabilities", resp.id, p.len()))
            })?;
            let mut probs = ClassProbabilities::with_tolerance(p, RESPONSE_SUM_TOLERANCE)
                .map_err(|e| ScoreError::ProtocolViolation(format!("response {}: {e}", resp.id)))?;
            let sum: f64 = probs.0.iter().sum();
            probs.0.iter_mut().for_each(|v| *v /= sum);
            Ok((resp.id, probs))
        }
        (None, None) => Err(ScoreError::ProtocolViolation(format!(
            "response {} has neither probs nor error",
            resp.id
        ))),
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        // closing stdin asks a well-behaved scorer to exit
        drop(self.requests.take());
        let deadline = Instant::now() + Duration::from_millis(500);
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(5)),
                _ => {
                    let _ = self.child.kill();
                    let _ = self.child.wait();
                    break;
                }
            }
        }
    }
}

/// Starts the scorer described by `spec`, scores one image and shuts it down.
pub fn score_external(img: &PreprocessedImage, spec: &ScorerSpec) -> Result<ClassProbabilities, ScoreError> {
    ExternalScorer::from_spec(spec)?.score(img)
}
