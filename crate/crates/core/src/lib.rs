//! Exact cutting-plane solver for the Team Orienteering Problem.

pub mod backend;
pub mod engine;
pub mod error;
pub mod incompat;
pub mod instance;
pub mod model;
pub mod oracle;
pub mod primal;
pub mod report;
pub mod separation;

pub use backend::{BackendConfig, BackendKind, Deadline, SolveOutcome, SolverBackend};
pub use error::{Error, ParseError, Result};
pub use instance::{accessibility, AccessibilityMask, Instance, Vertex};
pub use model::{Assignment, CutKind, IndexedRow, LinearRow, MipModel, Sense, Var};
pub use engine::{solve, Component, EngineConfig, SolveReport};
pub use primal::Solution;
pub use report::RunRecord;
