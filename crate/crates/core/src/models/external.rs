use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ConfVector;

const RENORM_TOLERANCE: f64 = 1e-6;

/// How requests reach the oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "lowercase")]
pub enum Transport {
    /// One text per line on stdin, one reply per line on stdout.
    Subprocess { program: String, args: Vec<String> },
    /// POST `{"text": ...}` to `url`; the reply is JSON with a `probs`
    /// array or a plain line of probabilities.
    Http { url: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleLimits {
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_in_flight: 8,
            timeout: Duration::from_secs(10),
        }
    }
}

/// Parses a whitespace-separated probability line for `classes` classes.
pub fn parse_reply(raw: &str, classes: usize) -> Result<ConfVector> {
    let fail = |message: String| Error::Oracle {
        message,
        raw: raw.to_string(),
    };
    let probs = raw
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| fail(format!("`{t}` is not a number"))))
        .collect::<Result<Vec<_>>>()?;
    from_probs(probs, classes).map_err(fail)
}

fn from_probs(mut probs: Vec<f64>, classes: usize) -> Result<ConfVector, String> {
    if probs.len() != classes {
        return Err(format!("expected {classes} probabilities, got {}", probs.len()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err("probabilities must be finite and nonnegative".into());
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > RENORM_TOLERANCE {
        return Err(format!("probabilities sum to {sum}"));
    }
    probs.iter_mut().for_each(|p| *p /= sum);
    Ok(ConfVector::new(probs))
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Worker {
    fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Oracle {
                message: format!("cannot start `{program}`: {e}"),
                raw: String::new(),
            })?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, lines })
    }

    fn ask(&mut self, text: &str, timeout: Duration) -> Result<String> {
        let line = text.replace(['\n', '\r'], " ");
        let io_fail = |e: std::io::Error| Error::Oracle {
            message: format!("oracle pipe closed: {e}"),
            raw: String::new(),
        };
        writeln!(self.stdin, "{line}").map_err(io_fail)?;
        self.stdin.flush().map_err(io_fail)?;
        match self.lines.recv_timeout(timeout) {
            Ok(reply) => Ok(reply),
            Err(RecvTimeoutError::Timeout) => Err(Error::Oracle {
                message: format!("no reply within {timeout:?}"),
                raw: String::new(),
            }),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Oracle {
                message: "oracle exited".into(),
                raw: String::new(),
            }),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct Inner {
    transport: Transport,
    limits: OracleLimits,
    sem: Semaphore,
    idle: Mutex<Vec<Worker>>,
    agent: Option<ureq::Agent>,
    calls: AtomicU64,
}

/// A classifier reachable only through its text-in, probabilities-out
/// protocol. Cloning shares the connection pool and call counter.
#[derive(Clone)]
pub struct ExternalOracle {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for ExternalOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalOracle")
            .field("transport", &self.inner.transport)
            .field("limits", &self.inner.limits)
            .finish()
    }
}

impl ExternalOracle {
    pub fn new(transport: Transport, limits: OracleLimits) -> Result<Self> {
        if limits.max_in_flight == 0 || limits.timeout.is_zero() {
            return Err(Error::InvalidArgument(
                "oracle limits need a positive in-flight cap and timeout".into(),
            ));
        }
        let agent = match &transport {
            Transport::Http { .. } => Some(
                ureq::Agent::config_builder()
                    .timeout_global(Some(limits.timeout))
                    .http_status_as_error(false)
                    .build()
                    .into(),
            ),
            Transport::Subprocess { .. } => None,
        };
        Ok(Self {
            inner: Arc::new(Inner {
                transport,
                limits,
                sem: Semaphore {
                    free: Mutex::new(limits.max_in_flight),
                    cv: Condvar::new(),
                },
                idle: Mutex::new(Vec::new()),
                agent,
                calls: AtomicU64::new(0),
            }),
        })
    }

    pub fn transport(&self) -> &Transport {
        &self.inner.transport
    }

    pub fn limits(&self) -> OracleLimits {
        self.inner.limits
    }

    /// Total classification requests issued so far.
    pub fn calls(&self) -> u64 {
        self.inner.calls.load(Ordering::Relaxed)
    }

    pub fn classify(&self, text: &str, classes: usize) -> Result<ConfVector> {
        let _permit = self.inner.sem.acquire();
        self.inner.calls.fetch_add(1, Ordering::Relaxed);
        match &self.inner.transport {
            Transport::Subprocess { program, args } => {
                let worker = self.inner.idle.lock().unwrap().pop();
                let mut worker = match worker {
                    Some(w) => w,
                    None => Worker::spawn(program, args)?,
                };
                // a failed worker is dropped (killed) and respawned next call
                let reply = worker.ask(text, self.inner.limits.timeout)?;
                self.inner.idle.lock().unwrap().push(worker);
                parse_reply(&reply, classes)
            }
            Transport::Http { url } => self.post(url, text, classes),
        }
    }

    fn post(&self, url: &str, text: &str, classes: usize) -> Result<ConfVector> {
        let agent = self.inner.agent.as_ref().expect("http agent");
        let body = serde_json::json!({ "text": text }).to_string();
        let fail = |message: String, raw: String| Error::Oracle { message, raw };
        let mut resp = agent
            .post(url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| fail(format!("request to {url} failed: {e}"), String::new()))?;
        let status = resp.status();
        let raw = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| fail(format!("reading reply from {url}: {e}"), String::new()))?;
        if !status.is_success() {
            return Err(fail(format!("{url} answered {status}"), raw));
        }
        match serde_json::from_str::<serde_json::Value>(&raw) {
            Ok(serde_json::Value::Object(obj)) => {
                let probs = obj
                    .get("probs")
                    .and_then(|p| serde_json::from_value::<Vec<f64>>(p.clone()).ok())
                    .ok_or_else(|| fail("reply has no `probs` array".into(), raw.clone()))?;
                from_probs(probs, classes).map_err(|m| fail(m, raw))
            }
            _ => parse_reply(raw.trim(), classes),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_within_tolerance_is_renormalized() {
        let c = parse_reply("0.2500005 0.75", 2).unwrap();
        assert!((c.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(c.get(0) > 0.25);
    }

    #[test]
    fn reply_outside_tolerance_is_rejected_with_raw_text() {
        let err = parse_reply("0.3 0.6", 2).unwrap_err();
        match err {
            Error::Oracle { raw, .. } => assert_eq!(raw, "0.3 0.6"),
            other => panic!("unexpected {other}"),
        }
        assert!(parse_reply("0.5 0.5 0.0", 2).is_err());
        assert!(parse_reply("half half", 2).is_err());
        assert!(parse_reply("-0.5 1.5", 2).is_err());
    }

    #[test]
    fn zero_limits_are_rejected() {
        let t = Transport::Http {
            url: "http://127.0.0.1:1/".into(),
        };
        let limits = OracleLimits {
            max_in_flight: 0,
            ..Default::default()
        };
        assert!(ExternalOracle::new(t, limits).is_err());
    }

    #[test]
    fn unreachable_http_oracle_is_an_oracle_error() {
        let t = Transport::Http {
            url: "http://127.0.0.1:9/classify".into(),
        };
        let o = ExternalOracle::new(
            t,
            OracleLimits {
                max_in_flight: 1,
                timeout: Duration::from_secs(2),
            },
        )
        .unwrap();
        assert!(matches!(o.classify("x", 2), Err(Error::Oracle { .. })));
        assert_eq!(o.calls(), 1);
    }

    #[cfg(unix)]
    #[test]
    fn subprocess_oracle_roundtrip_and_timeout() {
        let script = "while read line; do if [ \"$line\" = slow ]; then sleep 5; fi; echo 0.25 0.75; done";
        let t = Transport::Subprocess {
            program: "sh".into(),
            args: vec!["-c".into(), script.into()],
        };
        let o = ExternalOracle::new(
            t,
            OracleLimits {
                max_in_flight: 2,
                timeout: Duration::from_millis(500),
            },
        )
        .unwrap();
        assert_eq!(o.classify("hello\nworld", 2).unwrap().probs(), &[0.25, 0.75]);
        assert!(matches!(o.classify("slow", 2), Err(Error::Oracle { .. })));
        // the stuck worker was discarded; a fresh one answers
        assert_eq!(o.classify("again", 2).unwrap().argmax(), 1);
    }
}
