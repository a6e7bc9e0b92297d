//! Best-bound branch-and-bound over binary variables with LP bounds from the
//! dense dual simplex. Rows other than the base formulation are held in a
//! lazy pool and enter the LP only once an LP solution violates them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use log::{debug, trace};

use super::simplex::{DualSimplex, LpStatus};
use super::{is_integral_objective, Deadline, SolveOutcome, SolverBackend};
use crate::error::{Error, Result};
use crate::model::{Assignment, CutKind, IndexedRow, MipModel};

const INT_TOL: f64 = 1e-6;
const ROW_TOL: f64 = 1e-6;
const MAX_ROWS_PER_ROUND: usize = 64;

#[derive(Debug, Default)]
pub struct BuiltinBackend {
    state: Option<State>,
}

#[derive(Debug)]
struct State {
    n: usize,
    objective: Vec<f64>,
    priority: Vec<u8>,
    integral: bool,
    /// Every objective value is a multiple of this when `integral`.
    step: f64,
    rows: Vec<IndexedRow>,
    active: Vec<bool>,
    lp: DualSimplex,
    fixed: Vec<i8>,
    incumbent: Option<(Vec<bool>, f64)>,
    prev_ub: f64,
    infeasible_row: Option<usize>,
}

#[derive(Debug)]
struct Node {
    bound: f64,
    /// Bound rounded down to an attainable objective value; nodes with equal
    /// keys are explored deepest first.
    key: f64,
    depth: usize,
    fixings: Vec<(u32, bool)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then(self.depth.cmp(&other.depth))
            .then(self.bound.total_cmp(&other.bound))
    }
}

enum NodeLp {
    Optimal(f64),
    Infeasible,
    Failed,
    Timeout,
}

impl BuiltinBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a raw binary program: maximize `objective` subject to `rows`.
    /// Base rows are active from the start; the rest are lazy.
    pub(crate) fn load_raw(&mut self, objective: Vec<f64>, priority: Vec<u8>, rows: Vec<IndexedRow>) {
        let n = objective.len();
        let lp = DualSimplex::new(objective.clone(), vec![0.0; n], vec![1.0; n]);
        let mut state = State {
            n,
            integral: is_integral_objective(&objective),
            step: objective_step(&objective),
            objective,
            priority,
            rows: Vec::new(),
            active: Vec::new(),
            lp,
            fixed: vec![-1; n],
            incumbent: None,
            prev_ub: f64::INFINITY,
            infeasible_row: None,
        };
        state.push_rows(rows);
        self.state = Some(state);
    }

    fn state(&mut self) -> Result<&mut State> {
        self.state
            .as_mut()
            .ok_or_else(|| Error::Contract("backend used before load".into()))
    }
}

impl State {
    fn push_rows(&mut self, rows: Vec<IndexedRow>) {
        for row in rows {
            let k = self.rows.len();
            if row.idx.is_empty() {
                if row.violation(&[]) > ROW_TOL && self.infeasible_row.is_none() {
                    self.infeasible_row = Some(k);
                }
                self.rows.push(row);
                self.active.push(true);
                continue;
            }
            let eager = row.kind == CutKind::Base;
            if eager {
                self.lp.add_row(&row.idx, &row.coef, row.sense, row.rhs);
            }
            self.rows.push(row);
            self.active.push(eager);
        }
        if let Some((x, _)) = &self.incumbent {
            let xf: Vec<f64> = x.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            if self.rows.iter().any(|r| r.violation(&xf) > ROW_TOL) {
                self.incumbent = None;
            }
        }
    }

    fn feasible(&self, x: &[f64]) -> bool {
        self.rows.iter().all(|r| r.violation(x) <= ROW_TOL)
    }

    fn value(&self, x: &[bool]) -> f64 {
        self.objective
            .iter()
            .zip(x)
            .filter(|(_, &b)| b)
            .map(|(c, _)| c)
            .sum()
    }

    fn incumbent_value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::NEG_INFINITY, |(_, v)| *v)
    }

    fn prunable(&self, bound: f64) -> bool {
        let inc = self.incumbent_value();
        if inc == f64::NEG_INFINITY {
            return false;
        }
        if self.integral {
            self.round_down(bound) <= inc
        } else {
            bound <= inc + 1e-9
        }
    }

    /// Largest attainable objective value not above `bound`.
    fn round_down(&self, bound: f64) -> f64 {
        ((bound + INT_TOL) / self.step).floor() * self.step
    }

    /// Variables whose move off their current bound would drop the LP bound
    /// of the node below the next improving value.
    fn reduced_cost_fixings(&self, z: f64) -> Vec<(u32, bool)> {
        let inc = self.incumbent_value();
        if !self.integral || inc == f64::NEG_INFINITY {
            return Vec::new();
        }
        let target = inc + self.step - INT_TOL;
        let x = self.lp.values();
        (0..self.n)
            .filter(|&j| self.fixed[j] < 0)
            .filter_map(|j| {
                let d = self.lp.reduced_cost(j)?;
                if x[j] <= INT_TOL && z + d < target {
                    Some((j as u32, false))
                } else if x[j] >= 1.0 - INT_TOL && z - d < target {
                    Some((j as u32, true))
                } else {
                    None
                }
            })
            .collect()
    }

    fn apply_fixings(&mut self, fixings: &[(u32, bool)]) {
        let mut want = vec![-1i8; self.n];
        for &(j, v) in fixings {
            want[j as usize] = v as i8;
        }
        for j in 0..self.n {
            if want[j] != self.fixed[j] {
                match want[j] {
                    -1 => self.lp.set_bounds(j, 0.0, 1.0),
                    0 => self.lp.set_bounds(j, 0.0, 0.0),
                    _ => self.lp.set_bounds(j, 1.0, 1.0),
                }
                self.fixed[j] = want[j];
            }
        }
    }

    /// Fresh LP over the active rows with every variable free in [0, 1].
    fn rebuild_lp(&mut self) {
        let mut lp = DualSimplex::new(self.objective.clone(), vec![0.0; self.n], vec![1.0; self.n]);
        for (r, _) in self.rows.iter().zip(&self.active).filter(|(r, &a)| a && !r.idx.is_empty()) {
            lp.add_row(&r.idx, &r.coef, r.sense, r.rhs);
        }
        self.lp = lp;
        self.fixed = vec![-1; self.n];
    }

    fn solve_node_lp(&mut self, deadline: Deadline) -> NodeLp {
        loop {
            match self.lp.solve(deadline) {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => return NodeLp::Infeasible,
                LpStatus::TimeLimit => return NodeLp::Timeout,
                LpStatus::IterationLimit => return NodeLp::Failed,
            }
            let z = self.lp.bound();
            if self.prunable(z) {
                return NodeLp::Optimal(z);
            }
            let x = self.lp.values();
            let mut violated: Vec<(f64, usize)> = self
                .rows
                .iter()
                .enumerate()
                .filter(|(k, _)| !self.active[*k])
                .filter_map(|(k, r)| {
                    let v = r.violation(x);
                    (v > ROW_TOL).then_some((v, k))
                })
                .collect();
            if violated.is_empty() {
                return NodeLp::Optimal(z);
            }
            violated.sort_by(|a, b| b.0.total_cmp(&a.0));
            for &(_, k) in violated.iter().take(MAX_ROWS_PER_ROUND) {
                let r = &self.rows[k];
                self.lp.add_row(&r.idx, &r.coef, r.sense, r.rhs);
                self.active[k] = true;
            }
            trace!("activated {} lazy rows", violated.len().min(MAX_ROWS_PER_ROUND));
            if deadline.expired() {
                return NodeLp::Timeout;
            }
        }
    }

    fn branching_var(&self, x: &[f64]) -> Option<usize> {
        let mut best: Option<(u8, f64, usize)> = None;
        for (j, &v) in x.iter().enumerate() {
            let frac = (v - v.round()).abs();
            if frac <= INT_TOL {
                continue;
            }
            let score = 0.5 - (v - 0.5).abs();
            let class = self.priority[j];
            let better = match best {
                None => true,
                Some((c, s, _)) => class < c || (class == c && score > s + 1e-12),
            };
            if better {
                best = Some((class, score, j));
            }
        }
        best.map(|(_, _, j)| j)
    }

    fn run(&mut self, deadline: Deadline) -> Result<SolveOutcome> {
        if let Some(k) = self.infeasible_row {
            return Err(Error::Infeasible(format!(
                "row {k} ({}) has no terms and cannot hold",
                self.rows[k].kind
            )));
        }
        let mut heap: BinaryHeap<Node> = BinaryHeap::new();
        let mut current = Some(Node {
            bound: f64::INFINITY,
            key: f64::INFINITY,
            depth: 0,
            fixings: Vec::new(),
        });
        let mut timed_out = false;
        let mut unresolved = f64::NEG_INFINITY;
        let mut nodes = 0u64;

        loop {
            let node = match current.take() {
                Some(n) => n,
                None => match heap.pop() {
                    Some(n) => n,
                    None => break,
                },
            };
            if self.prunable(node.bound) {
                continue;
            }
            if deadline.expired() {
                heap.push(node);
                timed_out = true;
                break;
            }
            nodes += 1;
            self.apply_fixings(&node.fixings);
            let mut lp = self.solve_node_lp(deadline);
            if matches!(lp, NodeLp::Failed) {
                debug!("LP failed at depth {}; retrying from a fresh factorization", node.depth);
                self.rebuild_lp();
                self.apply_fixings(&node.fixings);
                lp = self.solve_node_lp(deadline);
            }
            let z = match lp {
                NodeLp::Optimal(z) => z.min(node.bound),
                NodeLp::Infeasible => continue,
                NodeLp::Timeout => {
                    heap.push(node);
                    timed_out = true;
                    break;
                }
                NodeLp::Failed => {
                    debug!("LP failed at depth {}; node left unresolved", node.depth);
                    unresolved = unresolved.max(node.bound);
                    continue;
                }
            };
            if self.prunable(z) {
                continue;
            }
            let x = self.lp.values().to_vec();
            match self.branching_var(&x) {
                None => {
                    let rounded: Vec<bool> = x.iter().map(|&v| v > 0.5).collect();
                    let xf: Vec<f64> = rounded.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                    if self.feasible(&xf) {
                        let val = self.value(&rounded);
                        if val > self.incumbent_value() {
                            trace!("incumbent {val} at depth {}", node.depth);
                            self.incumbent = Some((rounded, val));
                        }
                    } else {
                        debug!("integral LP point fails a row after rounding");
                        unresolved = unresolved.max(z);
                    }
                }
                Some(j) => {
                    let up_first = x[j] >= 0.5;
                    let mut inherited = node.fixings.clone();
                    inherited.extend(self.reduced_cost_fixings(self.lp.bound()));
                    let key = if self.integral { self.round_down(z) } else { z };
                    let child = |v: bool| {
                        let mut f = inherited.clone();
                        f.push((j as u32, v));
                        Node {
                            bound: z,
                            key,
                            depth: node.depth + 1,
                            fixings: f,
                        }
                    };
                    heap.push(child(!up_first));
                    current = Some(child(up_first));
                }
            }
        }

        let inc = self.incumbent_value();
        let mut ub = inc.max(unresolved);
        if timed_out {
            let open = heap
                .iter()
                .map(|n| n.bound)
                .chain(current.iter().map(|n| n.bound))
                .fold(f64::NEG_INFINITY, f64::max);
            ub = ub.max(open);
        }
        if !timed_out && unresolved == f64::NEG_INFINITY && self.incumbent.is_none() {
            return Err(Error::Infeasible("no integer point satisfies the rows".into()));
        }
        if ub.is_finite() && self.integral {
            ub = self.round_down(ub);
        }
        ub = ub.min(self.prev_ub);
        self.prev_ub = ub;
        let proved = !timed_out && unresolved == f64::NEG_INFINITY && self.incumbent.is_some();
        if proved {
            ub = inc;
        }
        debug!(
            "bnb: {nodes} nodes, ub {ub}, incumbent {inc}, optimal {proved}, {} of {} rows active",
            self.active.iter().filter(|&&a| a).count(),
            self.rows.len()
        );
        Ok(SolveOutcome {
            upper_bound: ub,
            incumbent: self.incumbent.as_ref().map(|(x, _)| Assignment(x.clone())),
            incumbent_value: self.incumbent.as_ref().map(|(_, v)| *v),
            proved_optimal: proved,
            nodes,
        })
    }
}

/// Greatest common divisor of the integral objective coefficients.
fn objective_step(objective: &[f64]) -> f64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let g = objective
        .iter()
        .map(|c| c.round().abs() as u64)
        .fold(0, gcd);
    if g == 0 { 1.0 } else { g as f64 }
}

impl SolverBackend for BuiltinBackend {
    fn name(&self) -> &'static str {
        "builtin"
    }

    fn load(&mut self, model: &MipModel) -> Result<()> {
        let rows = model
            .rows()
            .iter()
            .map(|r| model.index_row(r))
            .collect::<Result<Vec<_>>>()?;
        let priority = model.vars().iter().map(|v| v.priority_class()).collect();
        self.load_raw(model.objective().to_vec(), priority, rows);
        Ok(())
    }

    fn warm_start(&mut self, assignment: &Assignment) {
        let Some(state) = self.state.as_mut() else {
            return;
        };
        if assignment.0.len() != state.n {
            debug!("warm start ignored: wrong length");
            return;
        }
        let xf: Vec<f64> = assignment.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        if !state.feasible(&xf) {
            debug!("warm start ignored: violates a row");
            return;
        }
        let val = state.value(&assignment.0);
        if val > state.incumbent_value() {
            state.incumbent = Some((assignment.0.clone(), val));
        }
    }

    fn add_rows(&mut self, rows: &[IndexedRow]) -> Result<()> {
        let state = self.state()?;
        if let Some(bad) = rows.iter().flat_map(|r| &r.idx).find(|&&j| j >= state.n) {
            return Err(Error::Contract(format!("row references column {bad} of {}", state.n)));
        }
        state.push_rows(rows.to_vec());
        Ok(())
    }

    fn solve(&mut self, deadline: Deadline) -> Result<SolveOutcome> {
        let state = self.state()?;
        let out = state.run(deadline)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sense;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row(idx: &[usize], coef: &[f64], sense: Sense, rhs: f64) -> IndexedRow {
        IndexedRow {
            idx: idx.to_vec(),
            coef: coef.to_vec(),
            sense,
            rhs,
            kind: CutKind::Gsec,
        }
    }

    fn brute(obj: &[f64], rows: &[IndexedRow]) -> Option<f64> {
        let n = obj.len();
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << n) {
            let x: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
            if rows.iter().all(|r| r.violation(&x) <= 1e-9) {
                let v: f64 = obj.iter().zip(&x).map(|(c, x)| c * x).sum();
                if best.is_none_or(|b| v > b) {
                    best = Some(v);
                }
            }
        }
        best
    }

    #[test]
    fn random_binary_programs_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..300 {
            let n = rng.gen_range(1..=10);
            let obj: Vec<f64> = (0..n).map(|_| rng.gen_range(-5..=10) as f64).collect();
            let mut rows = Vec::new();
            for _ in 0..rng.gen_range(0..=6) {
                let idx: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.6)).collect();
                let coef: Vec<f64> = idx.iter().map(|_| rng.gen_range(-4..=6) as f64).collect();
                let sense = match rng.gen_range(0..3) {
                    0 => Sense::Le,
                    1 => Sense::Ge,
                    _ => Sense::Eq,
                };
                let mut r = row(&idx, &coef, sense, rng.gen_range(-3..=8) as f64);
                if case % 2 == 0 {
                    r.kind = CutKind::Base;
                }
                rows.push(r);
            }
            let mut b = BuiltinBackend::new();
            b.load_raw(obj.clone(), vec![0; n], rows.clone());
            let expected = brute(&obj, &rows);
            match (b.state.as_mut().unwrap().run(Deadline::never()), expected) {
                (Ok(out), Some(v)) => {
                    assert!(out.proved_optimal, "case {case}");
                    assert_eq!(out.upper_bound, v, "case {case}");
                    assert_eq!(out.incumbent_value, Some(v), "case {case}");
                }
                (Err(Error::Infeasible(_)), None) => {}
                (got, want) => panic!("case {case}: got {got:?}, want {want:?}"),
            }
        }
    }

    #[test]
    fn added_rows_tighten_and_drop_stale_incumbent() {
        let mut b = BuiltinBackend::new();
        b.load_raw(
            vec![3.0, 2.0, 2.0],
            vec![0; 3],
            vec![row(&[0, 1, 2], &[1.0, 1.0, 1.0], Sense::Le, 2.0)],
        );
        let first = b.solve(Deadline::never()).unwrap();
        assert_eq!(first.upper_bound, 5.0);
        b.add_rows(&[row(&[0], &[1.0], Sense::Le, 0.0)]).unwrap();
        let second = b.solve(Deadline::never()).unwrap();
        assert_eq!(second.upper_bound, 4.0);
        assert!(second.proved_optimal);
        assert!(!second.incumbent.unwrap().0[0]);
    }

    #[test]
    fn expired_deadline_returns_unproved() {
        let mut b = BuiltinBackend::new();
        b.load_raw(vec![1.0, 1.0], vec![0; 2], vec![]);
        let out = b.solve(Deadline::after(std::time::Duration::ZERO)).unwrap();
        assert!(!out.proved_optimal);
        assert!(out.upper_bound >= 2.0);
    }

    #[test]
    fn warm_start_respects_rows() {
        let mut b = BuiltinBackend::new();
        b.load_raw(
            vec![1.0, 1.0],
            vec![0; 2],
            vec![row(&[0, 1], &[1.0, 1.0], Sense::Le, 1.0)],
        );
        b.warm_start(&Assignment(vec![true, true]));
        assert!(b.state.as_ref().unwrap().incumbent.is_none());
        b.warm_start(&Assignment(vec![false, true]));
        assert_eq!(b.state.as_ref().unwrap().incumbent_value(), 1.0);
    }
}
