//! Dense-tableau dual simplex for bounded LPs.
//!
//! `max c.x  s.t.  A x + s = b,  lo <= x <= hi` where each row carries a
//! slack whose bounds encode the row sense. Structural variables are always
//! boxed, so any basis becomes dual feasible after flipping nonbasic
//! structurals to the bound matching the sign of their reduced cost. That
//! makes the dual simplex the only phase needed, including after bound
//! changes (branching) and row additions (cuts).
//!
//! Costs are perturbed downward by tiny amounts to break the massive dual
//! degeneracy of zero-cost columns; [`DualSimplex::bound`] adds back the
//! most the perturbation can hide.

use super::Deadline;
use crate::model::Sense;

const FEAS_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-13;
const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    TimeLimit,
    IterationLimit,
}

#[derive(Debug, Clone)]
struct SparseRow {
    idx: Vec<usize>,
    coef: Vec<f64>,
    rhs: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct DualSimplex {
    n: usize,
    true_cost: Vec<f64>,
    /// Perturbed costs the pivoting works with.
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    rows: Vec<SparseRow>,
    tab: Vec<Vec<f64>>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    x: Vec<f64>,
    d: Vec<f64>,
    pivots_since_refactor: usize,
    pub(crate) total_pivots: u64,
}

impl DualSimplex {
    pub(crate) fn new(true_cost: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let n = true_cost.len();
        assert_eq!(lo.len(), n);
        assert_eq!(hi.len(), n);
        let cost: Vec<f64> = true_cost
            .iter()
            .enumerate()
            .map(|(j, &c)| c - perturbation(j, c))
            .collect();
        let x = (0..n)
            .map(|j| if cost[j] > 0.0 { hi[j] } else { lo[j] })
            .collect();
        Self {
            n,
            d: cost.clone(),
            true_cost,
            cost,
            lo,
            hi,
            rows: Vec::new(),
            tab: Vec::new(),
            basis: Vec::new(),
            row_of: vec![NONE; n],
            x,
            pivots_since_refactor: 0,
            total_pivots: 0,
        }
    }

    fn num_cols(&self) -> usize {
        self.n + self.rows.len()
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    /// Objective of the current point under the true costs.
    #[cfg(test)]
    pub(crate) fn objective(&self) -> f64 {
        self.true_cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    fn perturbed_objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    /// Upper bound on the true LP optimum once [`solve`] reported optimal.
    pub(crate) fn bound(&self) -> f64 {
        let slack: f64 = (0..self.n)
            .map(|j| (self.true_cost[j] - self.cost[j]) * self.lo[j].abs().max(self.hi[j].abs()))
            .sum();
        self.perturbed_objective() + slack
    }

    /// Reduced cost of a nonbasic structural variable.
    pub(crate) fn reduced_cost(&self, j: usize) -> Option<f64> {
        (self.row_of[j] == NONE).then(|| self.d[j])
    }

    /// Changes the bounds of a structural variable. Call [`solve`] afterwards.
    pub(crate) fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        debug_assert!(j < self.n);
        self.lo[j] = lo;
        self.hi[j] = hi;
        if self.row_of[j] == NONE {
            self.x[j] = if self.x[j] == self.hi[j] || (lo != hi && self.d[j] > 0.0) {
                hi
            } else {
                lo
            };
        }
    }

    /// Appends a row; its slack enters the basis.
    pub(crate) fn add_row(&mut self, idx: &[usize], coef: &[f64], sense: Sense, rhs: f64) {
        let k = self.rows.len();
        let col = self.n + k;
        for row in &mut self.tab {
            row.push(0.0);
        }
        let (lo, hi) = match sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        self.lo.push(lo);
        self.hi.push(hi);
        self.d.push(0.0);
        self.row_of.push(k);

        let mut t = vec![0.0; col + 1];
        for (&j, &c) in idx.iter().zip(coef) {
            t[j] += c;
        }
        t[col] = 1.0;
        for &j in idx {
            let i = self.row_of[j];
            let c = t[j];
            if i != NONE && c != 0.0 {
                for (tv, &rv) in t.iter_mut().zip(&self.tab[i]) {
                    *tv -= c * rv;
                }
                t[j] = 0.0;
            }
        }
        let activity: f64 = idx.iter().zip(coef).map(|(&j, &c)| c * self.x[j]).sum();
        self.x.push(rhs - activity);
        self.tab.push(t);
        self.basis.push(col);
        self.rows.push(SparseRow {
            idx: idx.to_vec(),
            coef: coef.to_vec(),
            rhs,
        });
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.hi[j] - self.lo[j] <= 1e-12
    }

    /// Puts every nonbasic structural at the bound its reduced cost prefers
    /// and recomputes basic values.
    fn restore_dual_feasibility(&mut self) {
        for j in 0..self.n {
            if self.row_of[j] != NONE {
                continue;
            }
            let (lo, hi) = (self.lo[j], self.hi[j]);
            self.x[j] = if hi - lo <= 1e-12 {
                lo
            } else if self.d[j] > DUAL_TOL {
                hi
            } else if self.d[j] < -DUAL_TOL {
                lo
            } else if self.x[j] == hi {
                hi
            } else {
                lo
            };
        }
        for s in self.n..self.num_cols() {
            if self.row_of[s] == NONE {
                self.x[s] = if self.lo[s].is_finite() { self.lo[s] } else { self.hi[s] };
            }
        }
        self.recompute_basic_values();
    }

    fn recompute_basic_values(&mut self) {
        let m = self.rows.len();
        let mut resid: Vec<f64> = self.rows.iter().map(|r| r.rhs).collect();
        for (k, row) in self.rows.iter().enumerate() {
            for (&j, &c) in row.idx.iter().zip(&row.coef) {
                if self.row_of[j] == NONE {
                    resid[k] -= c * self.x[j];
                }
            }
            let s = self.n + k;
            if self.row_of[s] == NONE {
                resid[k] -= self.x[s];
            }
        }
        for i in 0..m {
            let binv = &self.tab[i][self.n..];
            let v: f64 = binv.iter().zip(&resid).map(|(b, r)| b * r).sum();
            self.x[self.basis[i]] = v;
        }
    }

    fn recompute_reduced_costs(&mut self) {
        let cols = self.num_cols();
        let mut d: Vec<f64> = (0..cols)
            .map(|j| if j < self.n { self.cost[j] } else { 0.0 })
            .collect();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = if b < self.n { self.cost[b] } else { 0.0 };
            if cb != 0.0 {
                for (dj, &t) in d.iter_mut().zip(&self.tab[i]) {
                    *dj -= cb * t;
                }
            }
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        self.d = d;
    }

    /// Rebuilds the tableau from the original rows for the current basis.
    /// A numerically singular basis falls back to the slack basis.
    fn refactor(&mut self) {
        let m = self.rows.len();
        let cols = self.num_cols();
        let mut tab = vec![vec![0.0; cols]; m];
        for (k, row) in self.rows.iter().enumerate() {
            for (&j, &c) in row.idx.iter().zip(&row.coef) {
                tab[k][j] += c;
            }
            tab[k][self.n + k] = 1.0;
        }
        self.tab = tab;
        let wanted = std::mem::take(&mut self.basis);
        self.basis = (0..m).map(|k| self.n + k).collect();
        self.row_of = vec![NONE; cols];
        for k in 0..m {
            self.row_of[self.n + k] = k;
        }
        let mut ok = true;
        let n = self.n;
        // Rows whose slack leaves the basis take the wanted structurals.
        let mut free_row = vec![true; m];
        for &col in wanted.iter().filter(|&&c| c >= n) {
            free_row[col - n] = false;
        }
        for &col in wanted.iter().filter(|&&c| c < n) {
            let mut best = NONE;
            let mut best_val = 1e-9;
            for i in 0..m {
                if free_row[i] && self.basis[i] >= self.n {
                    let v = self.tab[i][col].abs();
                    if v > best_val {
                        best_val = v;
                        best = i;
                    }
                }
            }
            if best == NONE {
                ok = false;
                break;
            }
            free_row[best] = false;
            self.pivot(best, col);
        }
        if !ok {
            log::debug!("singular basis on refactor, restarting from slack basis");
            let m = self.rows.len();
            let mut tab = vec![vec![0.0; cols]; m];
            for (k, row) in self.rows.iter().enumerate() {
                for (&j, &c) in row.idx.iter().zip(&row.coef) {
                    tab[k][j] += c;
                }
                tab[k][self.n + k] = 1.0;
            }
            self.tab = tab;
            self.basis = (0..m).map(|k| self.n + k).collect();
            self.row_of = vec![NONE; cols];
            for k in 0..m {
                self.row_of[self.n + k] = k;
            }
        }
        self.pivots_since_refactor = 0;
        self.recompute_reduced_costs();
        self.restore_dual_feasibility();
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let mut prow = std::mem::take(&mut self.tab[r]);
        let p = prow[q];
        let inv = 1.0 / p;
        let mut nz = Vec::with_capacity(prow.len() / 4 + 1);
        for (j, v) in prow.iter_mut().enumerate() {
            if *v != 0.0 {
                *v *= inv;
                if v.abs() < DROP_TOL {
                    *v = 0.0;
                } else {
                    nz.push(j);
                }
            }
        }
        prow[q] = 1.0;
        for (i, row) in self.tab.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[q];
            if f == 0.0 {
                continue;
            }
            for &j in &nz {
                let v = row[j] - f * prow[j];
                row[j] = if v.abs() < DROP_TOL { 0.0 } else { v };
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for &j in &nz {
                self.d[j] -= f * prow[j];
            }
        }
        self.d[q] = 0.0;
        self.tab[r] = prow;
        let leaving = self.basis[r];
        self.row_of[leaving] = NONE;
        self.row_of[q] = r;
        self.basis[r] = q;
        self.pivots_since_refactor += 1;
        self.total_pivots += 1;
    }

    /// Moves nonbasic boxed structurals whose reduced cost drifted to the
    /// wrong sign over to their other bound.
    fn flip_dual_infeasible(&mut self) {
        for j in 0..self.n {
            if self.row_of[j] != NONE || self.is_fixed(j) {
                continue;
            }
            let at_lo = self.x[j] == self.lo[j];
            let target = if at_lo && self.d[j] > DUAL_TOL {
                self.hi[j]
            } else if !at_lo && self.d[j] < -DUAL_TOL {
                self.lo[j]
            } else {
                continue;
            };
            let delta = target - self.x[j];
            self.x[j] = target;
            for i in 0..self.rows.len() {
                let t = self.tab[i][j];
                if t != 0.0 {
                    self.x[self.basis[i]] -= t * delta;
                }
            }
        }
    }

    fn primal_infeasibility(&self, i: usize) -> f64 {
        let b = self.basis[i];
        let v = self.x[b];
        if v < self.lo[b] - FEAS_TOL {
            self.lo[b] - v
        } else if v > self.hi[b] + FEAS_TOL {
            v - self.hi[b]
        } else {
            0.0
        }
    }

    /// Checks the current point against the original rows and recomputes
    /// reduced costs from the row duals, so that accumulated round-off in
    /// the tableau cannot certify a wrong optimum.
    fn verified_optimal(&self) -> bool {
        const TOL: f64 = 1e-6;
        let m = self.rows.len();
        for (k, row) in self.rows.iter().enumerate() {
            let act: f64 = row.idx.iter().zip(&row.coef).map(|(&j, &c)| c * self.x[j]).sum::<f64>()
                + self.x[self.n + k];
            if (act - row.rhs).abs() > TOL * (1.0 + row.rhs.abs()) {
                return false;
            }
        }
        for j in 0..self.num_cols() {
            if self.x[j] < self.lo[j] - TOL || self.x[j] > self.hi[j] + TOL {
                return false;
            }
        }
        let mut y = vec![0.0; m];
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = if b < self.n { self.cost[b] } else { 0.0 };
            if cb != 0.0 {
                for (yk, &t) in y.iter_mut().zip(&self.tab[i][self.n..]) {
                    *yk += cb * t;
                }
            }
        }
        let mut d: Vec<f64> = self.cost.clone();
        d.extend(y.iter().map(|&yk| -yk));
        for (k, row) in self.rows.iter().enumerate() {
            if y[k] != 0.0 {
                for (&j, &c) in row.idx.iter().zip(&row.coef) {
                    d[j] -= y[k] * c;
                }
            }
        }
        (0..self.num_cols()).all(|j| {
            if self.row_of[j] != NONE {
                return d[j].abs() <= TOL;
            }
            if self.is_fixed(j) {
                return true;
            }
            let at_lo = self.x[j] <= self.lo[j] + TOL;
            let at_hi = self.x[j] >= self.hi[j] - TOL;
            (!at_lo || d[j] <= TOL) && (!at_hi || d[j] >= -TOL) && (at_lo || at_hi || d[j].abs() <= TOL)
        })
    }

    /// Whether the combination of original rows held in tableau row `i`
    /// cannot be satisfied by any point within the bounds.
    fn row_is_infeasible(&self, i: usize) -> bool {
        let y = &self.tab[i][self.n..];
        let mut c = vec![0.0; self.n];
        let mut rhs = 0.0;
        for (row, &yk) in self.rows.iter().zip(y) {
            if yk != 0.0 {
                rhs += yk * row.rhs;
                for (&j, &a) in row.idx.iter().zip(&row.coef) {
                    c[j] += yk * a;
                }
            }
        }
        let (mut lo, mut hi) = (0.0, 0.0);
        let terms = c.iter().enumerate().chain(y.iter().enumerate().map(|(k, v)| (self.n + k, v)));
        for (j, &cj) in terms {
            if cj.abs() <= 1e-11 {
                continue;
            }
            let (a, b) = (cj * self.lo[j], cj * self.hi[j]);
            let (a, b) = if cj > 0.0 { (a, b) } else { (b, a) };
            lo += a;
            hi += b;
        }
        let tol = 1e-6 * (1.0 + rhs.abs());
        rhs < lo - tol || rhs > hi + tol
    }

    pub(crate) fn solve(&mut self, deadline: Deadline) -> LpStatus {
        self.restore_dual_feasibility();
        let m = self.rows.len();
        let refactor_every = (2 * m).max(150);
        let max_iter = 4 * self.num_cols() + 2_000;
        let mut stall = 0usize;
        let mut best_obj = f64::INFINITY;
        let mut bland = false;
        let mut confirmations = 0;
        let mut iter = 0usize;
        loop {
            iter += 1;
            if iter % 64 == 0 && deadline.expired() {
                return LpStatus::TimeLimit;
            }
            if iter > max_iter {
                return LpStatus::IterationLimit;
            }
            if self.pivots_since_refactor >= refactor_every {
                self.refactor();
            }

            let mut r = NONE;
            let mut worst = 0.0;
            for i in 0..m {
                let inf = self.primal_infeasibility(i);
                if inf <= 0.0 {
                    continue;
                }
                if bland {
                    if r == NONE || self.basis[i] < self.basis[r] {
                        r = i;
                    }
                } else if inf > worst {
                    worst = inf;
                    r = i;
                }
            }
            if r == NONE {
                if self.pivots_since_refactor > 0 && confirmations < 2 && !self.verified_optimal() {
                    // Re-derive values from a fresh factorization before trusting them.
                    confirmations += 1;
                    self.refactor();
                    continue;
                }
                return LpStatus::Optimal;
            }

            let leaving = self.basis[r];
            let (dir, target) = if self.x[leaving] < self.lo[leaving] {
                (1.0, self.lo[leaving])
            } else {
                (-1.0, self.hi[leaving])
            };
            let row = &self.tab[r];
            let mut theta_max = f64::INFINITY;
            for (j, &t) in row.iter().enumerate() {
                if t == 0.0 || self.row_of[j] != NONE || self.is_fixed(j) {
                    continue;
                }
                let s = if self.x[j] == self.lo[j] { 1.0 } else { -1.0 };
                let alpha = -t * s * dir;
                if alpha > PIVOT_TOL {
                    let slack = (-self.d[j] * s).max(0.0);
                    theta_max = theta_max.min((slack + DUAL_TOL) / alpha);
                }
            }
            if theta_max.is_infinite() {
                if self.row_is_infeasible(r) {
                    return LpStatus::Infeasible;
                }
                if self.pivots_since_refactor > 0 && confirmations < 2 {
                    confirmations += 1;
                    self.refactor();
                    continue;
                }
                return LpStatus::Infeasible;
            }
            let mut q = NONE;
            let mut best_alpha = 0.0;
            let mut best_ratio = f64::INFINITY;
            for (j, &t) in row.iter().enumerate() {
                if t == 0.0 || self.row_of[j] != NONE || self.is_fixed(j) {
                    continue;
                }
                let s = if self.x[j] == self.lo[j] { 1.0 } else { -1.0 };
                let alpha = -t * s * dir;
                if alpha <= PIVOT_TOL {
                    continue;
                }
                let ratio = (-self.d[j] * s).max(0.0) / alpha;
                if ratio > theta_max {
                    continue;
                }
                if bland {
                    if ratio < best_ratio - 1e-12 {
                        best_ratio = ratio;
                        q = j;
                    }
                } else if alpha > best_alpha {
                    best_alpha = alpha;
                    q = j;
                }
            }
            debug_assert!(q != NONE);

            let step = (target - self.x[leaving]) / (-self.tab[r][q]);
            for i in 0..m {
                let t = self.tab[i][q];
                if t != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= t * step;
                }
            }
            self.x[q] += step;
            self.x[leaving] = target;
            self.pivot(r, q);

            self.flip_dual_infeasible();
            let obj = self.perturbed_objective();
            if obj < best_obj - 1e-9 {
                best_obj = obj;
                stall = 0;
                bland = false;
            } else {
                stall += 1;
                if stall > 200 {
                    bland = true;
                }
            }
        }
    }
}

/// Deterministic cost perturbation of column `j`, between 1e-6 and 2e-6
/// relative to the cost.
fn perturbation(j: usize, c: f64) -> f64 {
    let spread = ((j as u64).wrapping_mul(2_654_435_761) % 1000) as f64 / 1000.0;
    1e-6 * (1.0 + spread) * (1.0 + c.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(cost: &[f64], rows: &[(&[f64], Sense, f64)], hi: f64) -> (LpStatus, DualSimplex) {
        let n = cost.len();
        let mut s = DualSimplex::new(cost.to_vec(), vec![0.0; n], vec![hi; n]);
        for (coef, sense, rhs) in rows {
            let idx: Vec<usize> = (0..n).collect();
            s.add_row(&idx, coef, *sense, *rhs);
        }
        (s.solve(Deadline::never()), s)
    }

    #[test]
    fn knapsack_relaxation() {
        // max 5a + 4b + 3c, 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8
        let (st, s) = lp(
            &[5.0, 4.0, 3.0],
            &[
                (&[2.0, 3.0, 1.0], Sense::Le, 5.0),
                (&[4.0, 1.0, 2.0], Sense::Le, 11.0),
                (&[3.0, 4.0, 2.0], Sense::Le, 8.0),
            ],
            1e6,
        );
        assert_eq!(st, LpStatus::Optimal);
        assert!((s.objective() - 13.0).abs() < 1e-5);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x + y, x + y = 1.5, x >= 0.8 (as row), bounds [0,1]
        let (st, s) = lp(
            &[1.0, 1.0],
            &[(&[1.0, 1.0], Sense::Eq, 1.5), (&[1.0, 0.0], Sense::Ge, 0.8)],
            1.0,
        );
        assert_eq!(st, LpStatus::Optimal);
        assert!((s.objective() - 1.5).abs() < 1e-5);
        assert!(s.values()[0] >= 0.8 - 1e-9);
    }

    #[test]
    fn detects_infeasibility() {
        let (st, _) = lp(&[1.0, 1.0], &[(&[1.0, 1.0], Sense::Ge, 3.0)], 1.0);
        assert_eq!(st, LpStatus::Infeasible);
    }

    #[test]
    fn warm_start_after_bound_change_and_cut() {
        let (st, mut s) = lp(
            &[3.0, 2.0, 4.0],
            &[(&[1.0, 1.0, 2.0], Sense::Le, 2.0)],
            1.0,
        );
        assert_eq!(st, LpStatus::Optimal);
        assert!((s.objective() - 5.0).abs() < 1e-5);
        s.set_bounds(2, 0.0, 0.0);
        assert_eq!(s.solve(Deadline::never()), LpStatus::Optimal);
        assert!((s.objective() - 5.0).abs() < 1e-5);
        s.add_row(&[0, 1], &[1.0, 1.0], Sense::Le, 1.0);
        assert_eq!(s.solve(Deadline::never()), LpStatus::Optimal);
        assert!((s.objective() - 3.0).abs() < 1e-5);
        s.set_bounds(2, 0.0, 1.0);
        assert_eq!(s.solve(Deadline::never()), LpStatus::Optimal);
        // x0 + x1 <= 1, x0 + x1 + 2 x2 <= 2: x0 = 1, x2 = 0.5 -> 5
        assert!((s.objective() - 5.0).abs() < 1e-5);
    }
}

