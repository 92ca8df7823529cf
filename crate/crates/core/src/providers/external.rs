//! A child process speaking provider protocol v1 over stdin/stdout.
//!
//! A reader thread forwards stdout lines over a channel so each request can
//! wait with a deadline; a second thread keeps the last lines of stderr for
//! error reports. One request is in flight at a time.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use super::protocol::{decode_reply, encode_request};
use super::{check_k, CandidateProvider, ProviderError, ProviderReply, ProviderRequest};
use crate::types::ActVocabulary;

const STDERR_TAIL_LINES: usize = 20;

pub struct ExternalProvider {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    stderr_tail: Arc<Mutex<VecDeque<String>>>,
    vocab: ActVocabulary,
    timeout: Duration,
    next_id: u64,
    dead: bool,
}

impl ExternalProvider {
    pub fn spawn(argv: &[String], timeout: Duration, vocab: ActVocabulary) -> Result<Self, ProviderError> {
        let (program, args) = argv.split_first().ok_or_else(|| ProviderError::Spawn {
            message: "empty provider command".into(),
            stderr_tail: String::new(),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ProviderError::Spawn {
                message: format!("cannot start `{program}`: {e}"),
                stderr_tail: String::new(),
            })?;

        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        let stderr = child.stderr.take().expect("stderr is piped");
        let tail = Arc::new(Mutex::new(VecDeque::new()));
        let tail_w = Arc::clone(&tail);
        thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(|l| l.ok()) {
                let mut t = tail_w.lock().unwrap_or_else(|p| p.into_inner());
                if t.len() == STDERR_TAIL_LINES {
                    t.pop_front();
                }
                t.push_back(line);
            }
        });

        Ok(Self {
            stdin: child.stdin.take(),
            child,
            lines: rx,
            stderr_tail: tail,
            vocab,
            timeout,
            next_id: 0,
            dead: false,
        })
    }

    fn tail(&self) -> String {
        // give the stderr thread a moment to drain after the child exits
        thread::sleep(Duration::from_millis(50));
        let t = self.stderr_tail.lock().unwrap_or_else(|p| p.into_inner());
        t.iter().cloned().collect::<Vec<_>>().join("\n")
    }

    fn exited(&mut self, message: &str) -> ProviderError {
        self.dead = true;
        let status = self
            .child
            .wait()
            .map(|s| s.to_string())
            .unwrap_or_else(|e| e.to_string());
        ProviderError::Spawn {
            message: format!("{message} ({status})"),
            stderr_tail: self.tail(),
        }
    }

    fn kill(&mut self) {
        self.dead = true;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl CandidateProvider for ExternalProvider {
    fn candidates(&mut self, request: &ProviderRequest) -> Result<ProviderReply, ProviderError> {
        check_k(request)?;
        if self.dead {
            return Err(ProviderError::Spawn {
                message: "provider process is no longer running".into(),
                stderr_tail: self.tail(),
            });
        }
        let id = self.next_id;
        self.next_id += 1;
        let mut line = encode_request(id, request, &self.vocab);
        line.push('\n');
        let stdin = self.stdin.as_mut().expect("stdin open while alive");
        if stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()).is_err() {
            return Err(self.exited("provider closed its input"));
        }
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => decode_reply(&reply, id, request.k, &self.vocab),
            Ok(Err(e)) => Err(self.exited(&format!("cannot read provider output: {e}"))),
            Err(RecvTimeoutError::Disconnected) => Err(self.exited("provider exited before replying")),
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                Err(ProviderError::Timeout(self.timeout))
            }
        }
    }
}

impl Drop for ExternalProvider {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved provider exit on EOF
        self.stdin.take();
        if !self.dead {
            match self.child.try_wait() {
                Ok(Some(_)) => {}
                _ => {
                    thread::sleep(Duration::from_millis(20));
                    if !matches!(self.child.try_wait(), Ok(Some(_))) {
                        let _ = self.child.kill();
                    }
                    let _ = self.child.wait();
                }
            }
        }
    }
}
