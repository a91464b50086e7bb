//! Error and diagnostic types shared across the pipeline.
//!
//! Each pipeline module owns one error variant so the CLI can map failures to
//! distinct exit codes. Parse failures carry located diagnostics instead of a
//! bare message.

use std::fmt;

use crate::budget::BudgetSolution;

pub type Result<T> = std::result::Result<T, Error>;

/// Severity of a parse diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// A located message produced while parsing an input circuit.
///
/// For text formats `line`/`column` are 1-based; for the native JSON format
/// the location is carried as a document path in the message and both are 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub severity: Severity,
}

impl Diagnostic {
    pub fn error(line: usize, column: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            line,
            column,
            message: message.into(),
            severity: Severity::Error,
        }
    }

    /// Diagnostic for a schema violation at a JSON document path such as
    /// `$.ops[3].angle`.
    pub fn at_path(path: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            line: 0,
            column: 0,
            message: format!("{path}: {}", message.into()),
            severity: Severity::Error,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        if self.line > 0 {
            write!(f, "{}:{}: {tag}: {}", self.line, self.column, self.message)
        } else {
            write!(f, "{tag}: {}", self.message)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The input circuit could not be parsed.
    #[error("ingest failed:\n{}", format_diagnostics(.0))]
    Ingest(Vec<Diagnostic>),

    /// Stage-1 lowering (to Clifford + Rz) failed.
    #[error("stage-1 compilation error: {0}")]
    Stage1(String),

    /// Rz synthesis count model rejected its input.
    #[error("synthesis error: {0}")]
    Synthesis(String),

    /// No budget point satisfies the fidelity target. Carries the closest
    /// (highest-fidelity) point examined so callers can report it.
    #[error("infeasible error budget: {message} (best infeasible point: {best})")]
    Infeasible {
        message: String,
        best: Box<BudgetSolution>,
    },

    /// Error-budget domain error (bad distance, unattainable fidelity, ...).
    #[error("error-budget error: {0}")]
    Budget(String),

    /// Architecture configuration is malformed or inconsistent.
    #[error("architecture error: {0}")]
    Arch(String),

    /// Layout generation or validation failed.
    #[error("layout error: {0}")]
    Layout(String),

    /// Stage-2 primitive compilation failed.
    #[error("compile error: {0}")]
    Compile(String),

    /// Report assembly or serialization failed.
    #[error("report error: {0}")]
    Report(String),

    /// A circuit violated a structural invariant (bad arity, level, operand).
    #[error("invalid circuit: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    let mut out = String::new();
    for (i, d) in diags.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&d.to_string());
    }
    out
}
