//! Reporting helpers for the acceptance run.
//!
//! The checks themselves live in `tests/acceptance.rs`; run them with
//! `cargo test -p sqfn-validation --test acceptance`.

use std::fmt;
use std::time::Instant;

/// Result of one acceptance criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

/// One measured quantity inside a criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "criterion {} [{}] {}: {:.1}s", self.id, self.name, verdict, self.seconds)?;
        for c in &self.checks {
            let mark = if c.pass { "ok  " } else { "FAIL" };
            write!(f, "\n    {mark} {}: {}", c.label, c.detail)?;
        }
        Ok(())
    }
}

/// Collects checks for one criterion and times it.
pub struct Recorder {
    id: u32,
    name: String,
    checks: Vec<Check>,
    start: Instant,
}

impl Recorder {
    pub fn new(id: u32, name: &str) -> Self {
        Self {
            id,
            name: name.to_string(),
            checks: Vec::new(),
            start: Instant::now(),
        }
    }

    pub fn check(&mut self, label: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            label: label.into(),
            pass,
            detail: detail.into(),
        });
    }

    /// Records an error from the library as a failed check.
    pub fn error(&mut self, label: impl Into<String>, err: impl fmt::Display) {
        self.check(label, false, format!("error: {err}"));
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn finish(self) -> Outcome {
        let seconds = self.elapsed();
        Outcome {
            id: self.id,
            pass: !self.checks.is_empty() && self.checks.iter().all(|c| c.pass),
            name: self.name,
            checks: self.checks,
            seconds,
        }
    }
}
