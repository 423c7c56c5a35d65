//! A reward oracle backed by a long-running child process.
//!
//! Protocol, one LF-terminated line each: when `p > 0` the child first
//! writes the round's features as `p` space-separated decimals; then for
//! every query it reads the decision (`m` space-separated decimals) and
//! answers with one decimal reward. A child that exits after answering is
//! restarted for the next query, so one-shot commands like `echo 0` work.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use pbr_core::learners::RewardOracle;
use pbr_core::{Error, Result};

struct Proc {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    answered: bool,
}

impl Drop for Proc {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct ChildOracle {
    command: String,
    p: usize,
    timeout: Duration,
    proc: Option<Proc>,
    /// Lines read from all children so far, for error messages.
    line_no: u64,
    queries: u64,
    pending: Option<Error>,
}

enum Line {
    Text(String),
    Eof,
}

impl ChildOracle {
    pub fn new(command: &str, p: usize, timeout: Duration) -> Self {
        Self {
            command: command.to_string(),
            p,
            timeout,
            proc: None,
            line_no: 0,
            queries: 0,
            pending: None,
        }
    }

    fn spawn(&mut self) -> Result<()> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Io(format!("cannot start reward command: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    return;
                }
            }
        });
        self.proc = Some(Proc {
            child,
            stdin,
            lines: rx,
            answered: false,
        });
        Ok(())
    }

    fn ensure(&mut self) -> Result<()> {
        if self.proc.is_none() {
            self.spawn()?;
        }
        Ok(())
    }

    fn write_line(&mut self, text: &str) {
        if let Some(stdin) = self.proc.as_mut().and_then(|p| p.stdin.as_mut()) {
            // a child that does not read its input may already have exited
            if writeln!(stdin, "{text}")
                .and_then(|_| stdin.flush())
                .is_err()
            {
                self.proc.as_mut().expect("running").stdin = None;
            }
        }
    }

    fn read_line(&mut self) -> Result<Line> {
        let proc = self.proc.as_mut().expect("running");
        match proc.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => {
                self.line_no += 1;
                proc.answered = true;
                Ok(Line::Text(line))
            }
            Ok(Err(e)) => Err(Error::Io(format!("reading reward command output: {e}"))),
            Err(RecvTimeoutError::Disconnected) => Ok(Line::Eof),
            Err(RecvTimeoutError::Timeout) => Err(Error::InvalidArgument(format!(
                "reward command did not answer within {:?}",
                self.timeout
            ))),
        }
    }

    /// Reads the next line, restarting a child that exited normally after
    /// having answered before.
    fn next_line(&mut self, resend: Option<&str>) -> Result<String> {
        self.ensure()?;
        match self.read_line()? {
            Line::Text(t) => return Ok(t),
            Line::Eof if !self.proc.as_ref().expect("running").answered => {
                return Err(Error::InvalidArgument(format!(
                    "reward command exited without output after line {}",
                    self.line_no
                )))
            }
            Line::Eof => {}
        }
        self.proc = None;
        self.spawn()?;
        if let Some(text) = resend {
            self.write_line(text);
        }
        match self.read_line()? {
            Line::Text(t) => Ok(t),
            Line::Eof => Err(Error::InvalidArgument(format!(
                "reward command exited without output after line {}",
                self.line_no
            ))),
        }
    }

    fn parse_numbers(&self, line: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
        let values: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        match values {
            Ok(v) if v.len() == expected => Ok(v),
            _ => Err(Error::InvalidArgument(format!(
                "malformed {what} on line {}: {line:?}",
                self.line_no
            ))),
        }
    }

    fn features(&mut self) -> Result<Vec<f64>> {
        let line = self.next_line(None)?;
        self.parse_numbers(&line, self.p, "feature line")
    }
}

fn format_decision(a: &[f64]) -> String {
    a.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

impl RewardOracle for ChildOracle {
    fn observe(&mut self) -> Vec<f64> {
        if self.p == 0 || self.pending.is_some() {
            return vec![0.0; self.p];
        }
        match self.features() {
            Ok(x) => x,
            Err(e) => {
                self.pending = Some(e);
                vec![0.0; self.p]
            }
        }
    }

    fn query(&mut self, decision: &[f64]) -> Result<f64> {
        if let Some(e) = self.pending.take() {
            return Err(e);
        }
        self.queries += 1;
        self.ensure()?;
        let text = format_decision(decision);
        self.write_line(&text);
        // features are re-sent by a restarted child, so only resend for p = 0
        let resend = (self.p == 0).then_some(text.as_str());
        let line = self.next_line(resend)?;
        Ok(self.parse_numbers(&line, 1, "reward")?[0])
    }

    fn query_count(&self) -> u64 {
        self.queries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle(cmd: &str, p: usize) -> ChildOracle {
        ChildOracle::new(cmd, p, Duration::from_secs(10))
    }

    #[test]
    fn decisions_are_space_separated() {
        assert_eq!(format_decision(&[1.5, -2.0, 0.25]), "1.5 -2 0.25");
    }

    #[test]
    fn one_shot_commands_are_restarted() {
        let mut o = oracle("echo 0.5", 0);
        for _ in 0..3 {
            assert_eq!(o.query(&[1.0]).unwrap(), 0.5);
        }
        assert_eq!(o.query_count(), 3);
    }

    #[test]
    fn echoes_the_decision_back() {
        let mut o = oracle("while IFS= read -r a; do echo \"$a\"; done", 0);
        assert_eq!(o.query(&[-3.5]).unwrap(), -3.5);
        assert_eq!(o.query(&[7.0]).unwrap(), 7.0);
    }

    #[test]
    fn feature_lines_must_have_p_values() {
        let mut o = oracle("echo 1 2 3; cat > /dev/null", 2);
        assert_eq!(o.observe(), vec![0.0, 0.0]);
        let err = o.query(&[0.0]).unwrap_err();
        assert!(
            err.to_string().contains("malformed feature line on line 1"),
            "{err}"
        );
    }

    #[test]
    fn two_decisions_per_line() {
        let mut o = oracle("read a; set -- $a; echo $(( $1 + $2 ))", 0);
        assert_eq!(o.query(&[2.0, 3.0]).unwrap(), 5.0);
    }
}
