//! Adapter for an out-of-process MIP solver.
//!
//! The model is written as JSON to a scratch file and the configured command
//! is run as `<command...> <problem.json> <result.json>`. The command must
//! write a result file of the form
//! `{"status": "optimal"|"feasible"|"infeasible"|"timeout", "upper_bound": f, "solution": [0|1, ...]}`.
//! `scripts/milp_adapter.py` implements the protocol on top of SciPy.

use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use log::debug;
use serde::{Deserialize, Serialize};

use super::{is_integral_objective, Deadline, SolveOutcome, SolverBackend};
use crate::error::{Error, Result};
use crate::model::{Assignment, IndexedRow, MipModel};

/// Environment variable naming the external solver command.
pub const EXTERNAL_SOLVER_ENV: &str = "TOPCUT_EXTERNAL_SOLVER";

const KILL_GRACE: Duration = Duration::from_secs(5);

static SCRATCH_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug)]
pub struct ExternalBackend {
    command: Vec<String>,
    objective: Vec<f64>,
    rows: Vec<IndexedRow>,
    warm: Option<Vec<bool>>,
    prev_ub: f64,
    loaded: bool,
}

#[derive(Serialize)]
struct ProblemFile<'a> {
    num_vars: usize,
    objective: &'a [f64],
    rows: Vec<RowJson<'a>>,
    warm_start: Option<Vec<u8>>,
    time_limit: Option<f64>,
}

#[derive(Serialize)]
struct RowJson<'a> {
    idx: &'a [usize],
    coef: &'a [f64],
    sense: &'static str,
    rhs: f64,
}

#[derive(Deserialize)]
struct ResultFile {
    status: String,
    upper_bound: Option<f64>,
    solution: Option<Vec<f64>>,
}

impl ExternalBackend {
    /// Uses `command` when given, otherwise the value of [`EXTERNAL_SOLVER_ENV`].
    pub fn from_config(command: Option<&str>) -> Result<Self> {
        let raw = match command {
            Some(c) => c.to_string(),
            None => std::env::var(EXTERNAL_SOLVER_ENV).unwrap_or_default(),
        };
        let command: Vec<String> = raw.split_whitespace().map(String::from).collect();
        if command.is_empty() {
            return Err(Error::BackendUnavailable(format!(
                "no external solver configured; set {EXTERNAL_SOLVER_ENV} \
                 (e.g. `python3 scripts/milp_adapter.py`) or pass a command, \
                 or use the builtin backend"
            )));
        }
        Ok(Self {
            command,
            objective: Vec::new(),
            rows: Vec::new(),
            warm: None,
            prev_ub: f64::INFINITY,
            loaded: false,
        })
    }

    fn trivial_bound(&self) -> f64 {
        self.objective.iter().filter(|c| **c > 0.0).sum()
    }

    fn feasible(&self, x: &[bool]) -> bool {
        let xf: Vec<f64> = x.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        self.rows.iter().all(|r| r.violation(&xf) <= 1e-6)
    }

    fn value(&self, x: &[bool]) -> f64 {
        self.objective.iter().zip(x).filter(|(_, &b)| b).map(|(c, _)| c).sum()
    }

    fn fallback(&self) -> SolveOutcome {
        let ub = self.trivial_bound().min(self.prev_ub);
        let warm = self.warm.clone().filter(|w| self.feasible(w));
        SolveOutcome {
            upper_bound: ub,
            incumbent_value: warm.as_ref().map(|w| self.value(w)),
            incumbent: warm.map(Assignment),
            proved_optimal: false,
            nodes: 0,
        }
    }

    fn scratch(tag: &str) -> PathBuf {
        let k = SCRATCH_COUNTER.fetch_add(1, Ordering::Relaxed);
        std::env::temp_dir().join(format!("topcut-{}-{k}-{tag}.json", std::process::id()))
    }
}

impl SolverBackend for ExternalBackend {
    fn name(&self) -> &'static str {
        "external"
    }

    fn load(&mut self, model: &MipModel) -> Result<()> {
        self.objective = model.objective().to_vec();
        self.rows = model
            .rows()
            .iter()
            .map(|r| model.index_row(r))
            .collect::<Result<Vec<_>>>()?;
        self.warm = None;
        self.prev_ub = f64::INFINITY;
        self.loaded = true;
        Ok(())
    }

    fn warm_start(&mut self, assignment: &Assignment) {
        if assignment.0.len() == self.objective.len() && self.feasible(&assignment.0) {
            self.warm = Some(assignment.0.clone());
        }
    }

    fn add_rows(&mut self, rows: &[IndexedRow]) -> Result<()> {
        self.rows.extend_from_slice(rows);
        if self.warm.as_ref().is_some_and(|w| !self.feasible(w)) {
            self.warm = None;
        }
        Ok(())
    }

    fn solve(&mut self, deadline: Deadline) -> Result<SolveOutcome> {
        if !self.loaded {
            return Err(Error::Contract("backend used before load".into()));
        }
        if deadline.expired() {
            return Ok(self.fallback());
        }
        let problem = ProblemFile {
            num_vars: self.objective.len(),
            objective: &self.objective,
            rows: self
                .rows
                .iter()
                .map(|r| RowJson {
                    idx: &r.idx,
                    coef: &r.coef,
                    sense: r.sense.as_str(),
                    rhs: r.rhs,
                })
                .collect(),
            warm_start: self
                .warm
                .as_ref()
                .map(|w| w.iter().map(|&b| b as u8).collect()),
            time_limit: deadline.remaining().map(|d| d.as_secs_f64()),
        };
        let input = Self::scratch("problem");
        let output = Self::scratch("result");
        let json = serde_json::to_vec(&problem)
            .map_err(|e| Error::Backend(format!("cannot encode problem: {e}")))?;
        std::fs::write(&input, json)?;

        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(&input)
            .arg(&output)
            .spawn()
            .map_err(|e| {
                Error::BackendUnavailable(format!("cannot start `{}`: {e}", self.command.join(" ")))
            })?;
        let kill_at = deadline.instant().map(|t| t + KILL_GRACE);
        let status = loop {
            if let Some(st) = child.try_wait()? {
                break Some(st);
            }
            if kill_at.is_some_and(|t| std::time::Instant::now() >= t) {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let _ = std::fs::remove_file(&input);
        let Some(status) = status else {
            let _ = std::fs::remove_file(&output);
            debug!("external solver killed after the deadline");
            return Ok(self.fallback());
        };
        if !status.success() {
            let _ = std::fs::remove_file(&output);
            return Err(Error::Backend(format!("external solver exited with {status}")));
        }
        let text = std::fs::read_to_string(&output)?;
        let _ = std::fs::remove_file(&output);
        let res: ResultFile = serde_json::from_str(&text)
            .map_err(|e| Error::Backend(format!("bad result file: {e}")))?;

        if res.status == "infeasible" {
            return Err(Error::Infeasible("external solver reports infeasible".into()));
        }
        let mut incumbent = res
            .solution
            .map(|s| s.iter().map(|&v| v > 0.5).collect::<Vec<bool>>())
            .filter(|x| x.len() == self.objective.len() && self.feasible(x));
        if let Some(w) = self.warm.as_ref() {
            let better = incumbent.as_ref().is_none_or(|x| self.value(w) > self.value(x));
            if better {
                incumbent = Some(w.clone());
            }
        }
        let inc_val = incumbent.as_ref().map(|x| self.value(x));
        let proved = res.status == "optimal" && inc_val.is_some();
        let mut ub = res.upper_bound.unwrap_or(f64::INFINITY);
        if is_integral_objective(&self.objective) && ub.is_finite() {
            ub = (ub + 1e-6).floor();
        }
        ub = ub.min(self.prev_ub).min(self.trivial_bound());
        if let (true, Some(v)) = (proved, inc_val) {
            ub = v;
        }
        self.prev_ub = ub;
        if let Some(x) = &incumbent {
            self.warm = Some(x.clone());
        }
        Ok(SolveOutcome {
            upper_bound: ub,
            incumbent_value: inc_val,
            incumbent: incumbent.map(Assignment),
            proved_optimal: proved,
            nodes: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_command_is_unavailable() {
        let err = ExternalBackend::from_config(Some("   ")).unwrap_err();
        match err {
            Error::BackendUnavailable(msg) => assert!(msg.contains(EXTERNAL_SOLVER_ENV)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
