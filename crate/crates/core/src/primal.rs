//! Feasible solutions: greedy insertion, local search, validation and the
//! text format used for results.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::Deadline;
use crate::error::{Error, Result};
use crate::instance::{AccessibilityMask, Instance, COST_TOL};
use crate::model::Var;

/// One tour per vehicle, each a full path `d ... a`, ordered by
/// non-increasing collected profit.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub tours: Vec<Vec<usize>>,
    pub profit: i64,
    pub lengths: Vec<f64>,
}

impl Solution {
    /// Builds a solution from full paths, padding missing vehicles with
    /// empty tours and sorting tours by profit.
    pub fn new(inst: &Instance, mut tours: Vec<Vec<usize>>) -> Self {
        let (d, a) = (inst.depart(), inst.arrive());
        while tours.len() < inst.fleet_size() {
            tours.push(vec![d, a]);
        }
        let tour_profit = |t: &Vec<usize>| -> i64 { t.iter().map(|&v| inst.profit(v)).sum() };
        tours.sort_by_key(|t| std::cmp::Reverse(tour_profit(t)));
        let profit = tours.iter().map(tour_profit).sum();
        let lengths = tours.iter().map(|t| inst.path_length(t)).collect();
        Self {
            tours,
            profit,
            lengths,
        }
    }

    /// Like [`Solution::new`] but keeps the given vehicle order.
    pub fn from_ordered(inst: &Instance, tours: Vec<Vec<usize>>) -> Self {
        let profit = tours.iter().flatten().map(|&v| inst.profit(v)).sum();
        let lengths = tours.iter().map(|t| inst.path_length(t)).collect();
        Self {
            tours,
            profit,
            lengths,
        }
    }

    pub fn empty(inst: &Instance) -> Self {
        Self::new(inst, Vec::new())
    }

    /// Customer sequences without depots.
    pub fn routes(&self) -> Vec<Vec<usize>> {
        self.tours
            .iter()
            .map(|t| t[1..t.len().saturating_sub(1)].to_vec())
            .collect()
    }

    pub fn num_served(&self) -> usize {
        self.tours.iter().map(|t| t.len().saturating_sub(2)).sum()
    }

    pub fn served(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.routes().into_iter().flatten().collect();
        v.sort_unstable();
        v
    }

    /// Tour profits in vehicle order.
    pub fn tour_profits(&self, inst: &Instance) -> Vec<i64> {
        self.tours
            .iter()
            .map(|t| t.iter().map(|&v| inst.profit(v)).sum())
            .collect()
    }

    /// Value of a model variable under this solution, vehicles taken in
    /// tour order.
    pub fn var_value(&self, v: Var) -> f64 {
        let hit = match v {
            Var::Serve { customer, vehicle } => self
                .tours
                .get(vehicle)
                .is_some_and(|t| t[1..t.len() - 1].contains(&customer)),
            Var::Arc { from, to, vehicle } => self
                .tours
                .get(vehicle)
                .is_some_and(|t| t.windows(2).any(|w| w[0] == from && w[1] == to)),
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }

    /// Reads one tour per line, blank lines and `#` comments ignored.
    pub fn from_text(inst: &Instance, text: &str) -> Result<Self> {
        let mut tours = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tour = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>().map_err(|_| {
                        Error::InvalidInstance(format!("line {}: bad vertex id `{t}`", k + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if tour.iter().any(|&v| v >= inst.num_vertices()) {
                return Err(Error::InvalidInstance(format!("line {}: vertex out of range", k + 1)));
            }
            tours.push(tour);
        }
        Ok(Self::new(inst, tours))
    }
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tours {
            let line: Vec<String> = t.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Checks every feasibility condition; the error names the first failure.
pub fn validate(inst: &Instance, sol: &Solution) -> std::result::Result<(), String> {
    let (d, a) = (inst.depart(), inst.arrive());
    if sol.tours.len() != inst.fleet_size() {
        return Err(format!(
            "{} tours for a fleet of {}",
            sol.tours.len(),
            inst.fleet_size()
        ));
    }
    let mut seen = vec![false; inst.num_vertices()];
    for (r, t) in sol.tours.iter().enumerate() {
        if t.len() < 2 || t[0] != d || t[t.len() - 1] != a {
            return Err(format!("tour {r} does not run from depot to depot"));
        }
        for &v in &t[1..t.len() - 1] {
            if v >= inst.num_vertices() || inst.is_depot(v) {
                return Err(format!("tour {r} visits invalid vertex {v}"));
            }
            if seen[v] {
                return Err(format!("customer {v} visited twice"));
            }
            seen[v] = true;
        }
        let len = inst.path_length(t);
        if len > inst.length_limit() + COST_TOL {
            return Err(format!(
                "tour {r} has length {len:.6} above the limit {}",
                inst.length_limit()
            ));
        }
        if (len - sol.lengths.get(r).copied().unwrap_or(f64::NAN)).abs() > 1e-9 {
            return Err(format!("stored length of tour {r} is wrong"));
        }
    }
    let profit: i64 = seen
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(v, _)| inst.profit(v))
        .sum();
    if profit != sol.profit {
        return Err(format!("stored profit {} but tours collect {profit}", sol.profit));
    }
    let tp = sol.tour_profits(inst);
    if tp.windows(2).any(|w| w[0] < w[1]) {
        return Err(format!("tour profits {tp:?} are not in non-increasing order"));
    }
    Ok(())
}

/// Working state for the heuristics: customer sequences and lengths.
struct Routes<'a> {
    inst: &'a Instance,
    weight: &'a [i64],
    seqs: Vec<Vec<usize>>,
    lens: Vec<f64>,
    used: Vec<bool>,
    limit: f64,
}

impl<'a> Routes<'a> {
    fn new(inst: &'a Instance, weight: &'a [i64], seqs: Vec<Vec<usize>>) -> Self {
        let mut used = vec![false; inst.num_vertices()];
        for &c in seqs.iter().flatten() {
            used[c] = true;
        }
        let lens = seqs.iter().map(|s| inst.route_length(s)).collect();
        Self {
            inst,
            weight,
            seqs,
            lens,
            used,
            limit: inst.length_limit() + COST_TOL,
        }
    }

    fn at(&self, r: usize, pos: usize) -> usize {
        let s = &self.seqs[r];
        if pos == 0 {
            self.inst.depart()
        } else if pos > s.len() {
            self.inst.arrive()
        } else {
            s[pos - 1]
        }
    }

    /// Cheapest feasible insertion of `c` into route `r`: (delta, index).
    fn best_insertion(&self, r: usize, c: usize) -> Option<(f64, usize)> {
        let n = self.seqs[r].len();
        let mut best: Option<(f64, usize)> = None;
        for pos in 0..=n {
            let (u, v) = (self.at(r, pos), self.at(r, pos + 1));
            let delta = self.inst.cost(u, c) + self.inst.cost(c, v) - self.inst.cost(u, v);
            if self.lens[r] + delta <= self.limit && best.is_none_or(|(b, _)| delta < b) {
                best = Some((delta, pos));
            }
        }
        best
    }

    fn insert(&mut self, r: usize, c: usize, pos: usize) {
        self.seqs[r].insert(pos, c);
        self.lens[r] = self.inst.route_length(&self.seqs[r]);
        self.used[c] = true;
    }

    fn remove(&mut self, r: usize, idx: usize) -> usize {
        let c = self.seqs[r].remove(idx);
        self.used[c] = false;
        self.lens[r] = self.inst.route_length(&self.seqs[r]);
        c
    }

    fn two_opt(&mut self, r: usize) -> bool {
        let mut any = false;
        loop {
            let mut full = Vec::with_capacity(self.seqs[r].len() + 2);
            full.push(self.inst.depart());
            full.extend_from_slice(&self.seqs[r]);
            full.push(self.inst.arrive());
            let n = full.len();
            let mut improved = false;
            'outer: for i in 0..n.saturating_sub(3) {
                for j in i + 2..n - 1 {
                    let c = |p: usize, q: usize| self.inst.cost(full[p], full[q]);
                    let delta = c(i, j) + c(i + 1, j + 1) - c(i, i + 1) - c(j, j + 1);
                    if delta < -1e-9 {
                        full[i + 1..=j].reverse();
                        improved = true;
                        break 'outer;
                    }
                }
            }
            if !improved {
                break;
            }
            any = true;
            self.seqs[r] = full[1..full.len() - 1].to_vec();
            self.lens[r] = self.inst.route_length(&self.seqs[r]);
        }
        any
    }

    /// Inserts free customers, richest first, wherever they fit.
    fn fill(&mut self, candidates: &[usize]) -> bool {
        let mut any = false;
        let mut order: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&c| !self.used[c] && self.weight[c] > 0)
            .collect();
        order.sort_by_key(|&c| std::cmp::Reverse(self.weight[c]));
        for c in order {
            let best = (0..self.seqs.len())
                .filter_map(|r| self.best_insertion(r, c).map(|(d, p)| (d, r, p)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((_, r, pos)) = best {
                self.insert(r, c, pos);
                any = true;
            }
        }
        any
    }

    /// Inserts free customers that only fit after re-sequencing a route.
    fn fill_tight(&mut self, candidates: &[usize]) -> bool {
        let mut order: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&c| !self.used[c] && self.weight[c] > 0)
            .collect();
        order.sort_by_key(|&c| std::cmp::Reverse(self.weight[c]));
        for c in order {
            for r in 0..self.seqs.len() {
                let n = self.seqs[r].len();
                let Some(pos) = (0..=n).min_by(|&a, &b| {
                    let d = |p: usize| {
                        let (u, v) = (self.at(r, p), self.at(r, p + 1));
                        self.inst.cost(u, c) + self.inst.cost(c, v) - self.inst.cost(u, v)
                    };
                    d(a).total_cmp(&d(b))
                }) else {
                    continue;
                };
                let mut trial = self.seqs[r].clone();
                trial.insert(pos, c);
                let (seq, len) = tighten(self.inst, trial);
                if len <= self.limit {
                    self.seqs[r] = seq;
                    self.lens[r] = len;
                    self.used[c] = true;
                    return true;
                }
            }
        }
        false
    }

    /// Replaces a served customer by a richer free one when it fits.
    fn swap_in(&mut self, candidates: &[usize]) -> bool {
        for r in 0..self.seqs.len() {
            for idx in 0..self.seqs[r].len() {
                let out = self.seqs[r][idx];
                for &c in candidates {
                    if self.used[c] || self.weight[c] <= self.weight[out] {
                        continue;
                    }
                    let removed = self.remove(r, idx);
                    if let Some((_, pos)) = self.best_insertion(r, c) {
                        self.insert(r, c, pos);
                        return true;
                    }
                    self.seqs[r].insert(idx, removed);
                    self.used[removed] = true;
                    self.lens[r] = self.inst.route_length(&self.seqs[r]);
                }
            }
        }
        false
    }

    /// Moves one customer to another route when that shortens the total.
    fn relocate(&mut self) -> bool {
        let m = self.seqs.len();
        for r in 0..m {
            for idx in 0..self.seqs[r].len() {
                let before = self.lens[r];
                let c = self.seqs[r][idx];
                let mut trial = self.seqs[r].clone();
                trial.remove(idx);
                let saved = before - self.inst.route_length(&trial);
                for t in (0..m).filter(|&t| t != r) {
                    if let Some((delta, pos)) = self.best_insertion(t, c) {
                        if delta < saved - 1e-9 {
                            self.remove(r, idx);
                            self.insert(t, c, pos);
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    fn local_search(&mut self, candidates: &[usize], deadline: Deadline) {
        for _ in 0..10_000 {
            if deadline.expired() {
                break;
            }
            let mut changed = false;
            for r in 0..self.seqs.len() {
                changed |= self.two_opt(r);
            }
            changed |= self.fill(candidates);
            if !changed {
                changed = self.swap_in(candidates) || self.relocate() || self.fill_tight(candidates);
            }
            if !changed {
                break;
            }
        }
    }

    fn into_solution(self) -> Solution {
        let (d, a) = (self.inst.depart(), self.inst.arrive());
        let tours = self
            .seqs
            .into_iter()
            .map(|s| {
                let mut t = vec![d];
                t.extend(s);
                t.push(a);
                t
            })
            .collect();
        Solution::new(self.inst, tours)
    }
}

/// 2-opt and or-opt on a customer sequence between the depots. Returns the
/// sequence and its route length.
fn tighten(inst: &Instance, seq: Vec<usize>) -> (Vec<usize>, f64) {
    let mut full = Vec::with_capacity(seq.len() + 2);
    full.push(inst.depart());
    full.extend(seq);
    full.push(inst.arrive());
    let n = full.len();
    let c = |f: &[usize], p: usize, q: usize| inst.cost(f[p], f[q]);
    loop {
        let mut improved = false;
        for i in 0..n.saturating_sub(3) {
            for j in i + 2..n - 1 {
                if c(&full, i, j) + c(&full, i + 1, j + 1) - c(&full, i, i + 1) - c(&full, j, j + 1) < -1e-9 {
                    full[i + 1..=j].reverse();
                    improved = true;
                }
            }
        }
        for len in 1..=3 {
            for i in 1..n.saturating_sub(len) {
                let j = i + len - 1;
                if j >= n - 1 {
                    break;
                }
                let removed = c(&full, i - 1, i) + c(&full, j, j + 1) - c(&full, i - 1, j + 1);
                let mut rest: Vec<usize> = full[..i].to_vec();
                rest.extend_from_slice(&full[j + 1..]);
                let seg = full[i..=j].to_vec();
                let mut best: Option<(f64, usize)> = None;
                for p in 0..rest.len() - 1 {
                    if p == i - 1 {
                        continue;
                    }
                    let add = inst.cost(rest[p], seg[0]) + inst.cost(seg[len - 1], rest[p + 1])
                        - inst.cost(rest[p], rest[p + 1]);
                    if add < removed - 1e-9 && best.is_none_or(|(b, _)| add < b) {
                        best = Some((add, p));
                    }
                }
                if let Some((_, p)) = best {
                    rest.splice(p + 1..p + 1, seg);
                    full = rest;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    let len = inst.route_length(&full[1..n - 1]);
    (full[1..n - 1].to_vec(), len)
}

fn check_depots(inst: &Instance) -> Result<()> {
    let (d, a) = (inst.depart(), inst.arrive());
    if inst.cost(d, a) > inst.length_limit() + COST_TOL {
        return Err(Error::Infeasible(format!(
            "depot distance {:.4} exceeds the length limit {}",
            inst.cost(d, a),
            inst.length_limit()
        )));
    }
    Ok(())
}

/// Instance profits, one entry per vertex.
pub fn instance_profits(inst: &Instance) -> Vec<i64> {
    (0..inst.num_vertices()).map(|v| inst.profit(v)).collect()
}

/// Greedy best insertion by profit per unit of added length. With a nonzero
/// seed the ratios are perturbed, giving diverse starts for restarts.
pub fn construct_with(
    inst: &Instance,
    mask: &AccessibilityMask,
    weight: &[i64],
    seed: u64,
) -> Result<Solution> {
    check_depots(inst)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if seed == 0 { 0.0 } else { 0.35 };
    let candidates = mask.customers();
    let mut routes = Routes::new(inst, weight, vec![Vec::new(); inst.fleet_size()]);
    loop {
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for &c in candidates.iter().filter(|&&c| !routes.used[c] && weight[c] > 0) {
            let jitter = 1.0 + noise * rng.gen_range(-1.0..1.0);
            for r in 0..routes.seqs.len() {
                if let Some((delta, pos)) = routes.best_insertion(r, c) {
                    let score = weight[c] as f64 * jitter / (delta + 1e-3);
                    if best.is_none_or(|b| score > b.0) {
                        best = Some((score, c, r, pos));
                    }
                }
            }
        }
        let Some((_, c, r, pos)) = best else {
            break;
        };
        routes.insert(r, c, pos);
    }
    Ok(routes.into_solution())
}

pub fn construct(inst: &Instance, mask: &AccessibilityMask) -> Result<Solution> {
    construct_with(inst, mask, &instance_profits(inst), 0)
}

/// Local search: 2-opt, relocation between tours, insertion of free
/// customers and swaps for richer ones, until no move applies or the
/// deadline passes. Never lowers the weighted profit.
pub fn improve_with(
    inst: &Instance,
    mask: &AccessibilityMask,
    weight: &[i64],
    sol: &Solution,
    deadline: Deadline,
) -> Solution {
    let candidates: Vec<usize> = mask.customers();
    let mut routes = Routes::new(inst, weight, sol.routes());
    routes.local_search(&candidates, deadline);
    let out = routes.into_solution();
    if score(weight, &out) >= score(weight, sol) {
        out
    } else {
        sol.clone()
    }
}

fn score(weight: &[i64], s: &Solution) -> i64 {
    s.served().iter().map(|&c| weight[c]).sum()
}

pub fn improve(inst: &Instance, mask: &AccessibilityMask, sol: &Solution, deadline: Deadline) -> Solution {
    improve_with(inst, mask, &instance_profits(inst), sol, deadline)
}

/// Best of `restarts` constructions followed by local search, then `kicks`
/// rounds of removing a few random customers from the best solution and
/// repairing it.
pub fn heuristic(
    inst: &Instance,
    mask: &AccessibilityMask,
    weight: &[i64],
    seed: u64,
    restarts: usize,
    kicks: usize,
    deadline: Deadline,
) -> Result<Solution> {
    let first = construct_with(inst, mask, weight, seed)?;
    let mut best = improve_with(inst, mask, weight, &first, deadline);
    for k in 1..restarts.max(1) {
        if deadline.expired() {
            break;
        }
        let s = construct_with(inst, mask, weight, seed.wrapping_mul(31).wrapping_add(k as u64))?;
        let s = improve_with(inst, mask, weight, &s, deadline);
        if score(weight, &s) > score(weight, &best) {
            best = s;
        }
    }
    let candidates = mask.customers();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut current = best.clone();
    for _ in 0..kicks {
        if deadline.expired() {
            break;
        }
        let mut routes = Routes::new(inst, weight, current.routes());
        let served: Vec<(usize, usize)> = (0..routes.seqs.len())
            .flat_map(|r| (0..routes.seqs[r].len()).map(move |i| (r, i)))
            .collect();
        if served.is_empty() {
            break;
        }
        let k = rng.gen_range(1..=served.len().min(6));
        let mut picked: Vec<(usize, usize)> = served.choose_multiple(&mut rng, k).copied().collect();
        picked.sort_by(|a, b| b.cmp(a));
        let mut removed: Vec<(usize, usize)> = picked.into_iter().map(|(r, i)| (r, routes.remove(r, i))).collect();
        removed.shuffle(&mut rng);
        // Removed customers first try a route other than their own.
        for (from, c) in removed {
            let options: Vec<(usize, usize)> = (0..routes.seqs.len())
                .filter(|&r| r != from)
                .filter_map(|r| routes.best_insertion(r, c).map(|(_, pos)| (r, pos)))
                .collect();
            if let Some(&(r, pos)) = options.choose(&mut rng) {
                routes.insert(r, c, pos);
            }
        }
        routes.local_search(&candidates, deadline);
        let s = routes.into_solution();
        let (sv, cv) = (score(weight, &s), score(weight, &current));
        if sv > score(weight, &best) {
            best = s.clone();
        }
        if sv >= cv || rng.gen_bool(0.05) {
            current = s;
        } else if rng.gen_bool(0.05) {
            current = best.clone();
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::accessibility;

    fn line(m: usize, l: f64) -> Instance {
        Instance::new(
            &[(0.0, 0.0, 0), (1.0, 0.0, 4), (2.0, 0.0, 6), (3.0, 0.0, 5), (0.0, 0.0, 0)],
            m,
            l,
        )
        .unwrap()
    }

    #[test]
    fn empty_instance_gives_empty_tours() {
        let inst = Instance::new(&[(0.0, 0.0, 0), (1.0, 0.0, 0)], 2, 5.0).unwrap();
        let s = construct(&inst, &accessibility(&inst)).unwrap();
        assert_eq!(s.tours, vec![vec![0, 1], vec![0, 1]]);
        assert_eq!(s.profit, 0);
        validate(&inst, &s).unwrap();
    }

    #[test]
    fn single_customer() {
        let inst = Instance::new(&[(0.0, 0.0, 0), (1.0, 0.0, 7), (2.0, 0.0, 0)], 1, 5.0).unwrap();
        let s = construct(&inst, &accessibility(&inst)).unwrap();
        assert_eq!(s.profit, 7);
    }

    #[test]
    fn depot_too_far_is_infeasible() {
        let inst = Instance::new(&[(0.0, 0.0, 0), (9.0, 0.0, 0)], 1, 5.0).unwrap();
        assert!(matches!(construct(&inst, &accessibility(&inst)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn improve_inserts_free_customer() {
        let inst = line(1, 6.0);
        let mask = accessibility(&inst);
        let start = Solution::new(&inst, vec![vec![0, 1, 4]]);
        let better = improve(&inst, &mask, &start, Deadline::never());
        assert!(better.profit > start.profit);
        assert_eq!(better.profit, 15);
        validate(&inst, &better).unwrap();
    }

    #[test]
    fn improve_keeps_optimal_solution() {
        let inst = line(1, 6.0);
        let mask = accessibility(&inst);
        let opt = Solution::new(&inst, vec![vec![0, 1, 2, 3, 4]]);
        assert_eq!(improve(&inst, &mask, &opt, Deadline::never()).profit, 15);
    }

    #[test]
    fn tours_sorted_and_text_round_trip() {
        let inst = line(2, 6.0);
        let s = Solution::new(&inst, vec![vec![0, 1, 4], vec![0, 2, 4]]);
        assert_eq!(s.tours[0], vec![0, 2, 4]);
        validate(&inst, &s).unwrap();
        let back = Solution::from_text(&inst, &s.to_text()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn validator_catches_errors() {
        let inst = line(1, 3.0);
        let long = Solution::new(&inst, vec![vec![0, 3, 4]]);
        assert!(validate(&inst, &long).unwrap_err().contains("length"));
        let inst = line(2, 10.0);
        let twice = Solution::new(&inst, vec![vec![0, 1, 4], vec![0, 1, 2, 4]]);
        assert!(validate(&inst, &twice).unwrap_err().contains("twice"));
        let mut bad = Solution::new(&inst, vec![vec![0, 1, 4]]);
        bad.profit += 1;
        assert!(validate(&inst, &bad).is_err());
    }
}
