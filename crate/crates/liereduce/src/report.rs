//! Deterministic report assembly and rendering for the command-line front
//! end. A report is an ordered list of check lines, named blocks, and notes
//! under a fixed header. The structured format is a versioned line schema
//! whose bytes depend only on the inputs and the seed; the text format adds
//! wall-clock timing.

use crate::expr::{Verdict, Witness};

pub const SCHEMA: &str = "liereduce report v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Structured,
}

/// One verification outcome. A failed probabilistic check carries the
/// witness point and the two values observed there.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub witness: Option<String>,
}

#[derive(Debug, Clone)]
pub enum Item {
    Check(Check),
    Block { title: String, lines: Vec<String> },
    Note(String),
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub items: Vec<Item>,
    /// True while every recorded check has passed.
    pub ok: bool,
    /// Milliseconds of wall time; rendered only in the text format.
    pub elapsed_ms: Option<u128>,
}

impl Report {
    pub fn new(command: impl Into<String>, seed: u64) -> Report {
        Report {
            command: command.into(),
            seed,
            items: Vec::new(),
            ok: true,
            elapsed_ms: None,
        }
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.check_with_witness(name, passed, detail, None);
    }

    pub fn check_with_witness(
        &mut self,
        name: impl Into<String>,
        passed: bool,
        detail: impl Into<String>,
        witness: Option<String>,
    ) {
        self.ok &= passed;
        self.items.push(Item::Check(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
            witness,
        }));
    }

    /// Records a probabilistic verdict, keeping the counterexample point of
    /// an unequal outcome.
    pub fn check_verdict(&mut self, name: impl Into<String>, detail: impl Into<String>, v: &Verdict) {
        match v {
            Verdict::Equal => self.check_with_witness(name, true, detail, None),
            Verdict::Unequal(w) => {
                self.check_with_witness(name, false, detail, Some(witness_string(w)))
            }
        }
    }

    pub fn block(&mut self, title: impl Into<String>, lines: Vec<String>) {
        self.items.push(Item::Block {
            title: title.into(),
            lines,
        });
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.items.push(Item::Note(line.into()));
    }

    /// First failed check, if any; names the earliest divergence.
    pub fn first_failure(&self) -> Option<&Check> {
        self.items.iter().find_map(|i| match i {
            Item::Check(c) if !c.passed => Some(c),
            _ => None,
        })
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        line(SCHEMA.to_string());
        line(format!("tool liereduce {}", env!("CARGO_PKG_VERSION")));
        line(format!("command {}", self.command));
        line(format!("seed {}", self.seed));
        for item in &self.items {
            match item {
                Item::Check(c) => {
                    let mut s = format!("check {}: ", c.name);
                    s.push_str(if c.passed { "pass" } else { "FAIL" });
                    if !c.detail.is_empty() {
                        s.push_str(&format!(" ({})", c.detail));
                    }
                    if let Some(w) = &c.witness {
                        s.push_str(&format!(" [witness {w}]"));
                    }
                    line(s);
                }
                Item::Block { title, lines } => {
                    line(format!("begin {title}"));
                    for l in lines {
                        line(format!("  {l}"));
                    }
                    line(format!("end {title}"));
                }
                Item::Note(n) => line(format!("note {n}")),
            }
        }
        if format == Format::Text {
            if let Some(ms) = self.elapsed_ms {
                line(format!("time {ms} ms"));
            }
        }
        line(format!(
            "result {}",
            if self.ok { "ok" } else { "failed" }
        ));
        out
    }
}

/// Renders a counterexample as `var = value, ...; lhs ...; rhs ...`. The
/// point iterates in variable name order, so the rendering is stable.
pub fn witness_string(w: &Witness) -> String {
    let point: Vec<String> = w.point.iter().map(|(v, x)| format!("{v} = {x}")).collect();
    format!("{}; lhs {}; rhs {}", point.join(", "), w.lhs, w.rhs)
}
