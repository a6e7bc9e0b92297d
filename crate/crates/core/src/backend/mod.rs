//! Solver contract used by the engine, with a built-in branch-and-bound
//! backend and an adapter for an external MIP program.

mod builtin;
mod external;
pub(crate) mod simplex;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

pub use builtin::BuiltinBackend;
pub use external::{ExternalBackend, EXTERNAL_SOLVER_ENV};

use crate::error::Result;
use crate::model::{Assignment, IndexedRow, MipModel};

/// A point in time after which work should stop; `never()` means unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deadline(Option<Instant>);

impl Deadline {
    pub fn never() -> Self {
        Deadline(None)
    }

    pub fn after(d: Duration) -> Self {
        Deadline(Instant::now().checked_add(d))
    }

    pub fn at(t: Instant) -> Self {
        Deadline(Some(t))
    }

    pub fn instant(&self) -> Option<Instant> {
        self.0
    }

    pub fn expired(&self) -> bool {
        self.0.is_some_and(|t| Instant::now() >= t)
    }

    pub fn remaining(&self) -> Option<Duration> {
        self.0.map(|t| t.saturating_duration_since(Instant::now()))
    }

    /// The earlier of the two deadlines.
    pub fn min(self, other: Deadline) -> Deadline {
        match (self.0, other.0) {
            (Some(a), Some(b)) => Deadline(Some(a.min(b))),
            (Some(a), None) | (None, Some(a)) => Deadline(Some(a)),
            (None, None) => Deadline(None),
        }
    }

    /// This deadline capped at `d` from now.
    pub fn within(self, d: Duration) -> Deadline {
        self.min(Deadline::after(d))
    }
}

/// Result of one solve call. Objectives are maximized.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub upper_bound: f64,
    pub incumbent: Option<Assignment>,
    pub incumbent_value: Option<f64>,
    pub proved_optimal: bool,
    pub nodes: u64,
}

pub trait SolverBackend: Send {
    fn name(&self) -> &'static str;

    /// Replaces the current model; previously added rows and bounds are dropped.
    fn load(&mut self, model: &MipModel) -> Result<()>;

    /// Offers a starting incumbent; ignored when it violates a row.
    fn warm_start(&mut self, assignment: &Assignment);

    fn add_rows(&mut self, rows: &[IndexedRow]) -> Result<()>;

    fn solve(&mut self, deadline: Deadline) -> Result<SolveOutcome>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackendKind {
    #[default]
    Builtin,
    External,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Builtin => "builtin",
            BackendKind::External => "external",
        })
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "builtin" => Ok(BackendKind::Builtin),
            "external" => Ok(BackendKind::External),
            _ => Err(format!("unknown backend `{s}` (expected builtin or external)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Command for the external backend; falls back to [`EXTERNAL_SOLVER_ENV`].
    pub external_command: Option<String>,
}

impl BackendConfig {
    pub fn create(&self) -> Result<Box<dyn SolverBackend>> {
        match self.kind {
            BackendKind::Builtin => Ok(Box::new(BuiltinBackend::new())),
            BackendKind::External => Ok(Box::new(ExternalBackend::from_config(
                self.external_command.as_deref(),
            )?)),
        }
    }
}

pub(crate) fn is_integral_objective(c: &[f64]) -> bool {
    c.iter().all(|v| v.fract() == 0.0)
}
