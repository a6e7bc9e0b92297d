//! Exhaustive reference solver for tiny instances.
//!
//! Shortest `d -> a` paths over every customer subset come from a
//! Held-Karp table; the best collection of at most `m` disjoint feasible
//! subsets is then found by a DP over submasks.

use crate::error::{Error, Result};
use crate::instance::{accessibility, AccessibilityMask, Instance, COST_TOL};
use crate::primal::{instance_profits, Solution};

pub const MAX_CUSTOMERS: usize = 12;
pub const MAX_FLEET: usize = 3;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub optimum: i64,
    /// Every optimal assignment of customers to tours, one solution per
    /// distinct collection of customer sets, each tour routed along a
    /// shortest path and the tours ordered by profit.
    pub optimal_solutions: Vec<Solution>,
}

impl OracleResult {
    /// Customers present in every optimal solution.
    pub fn always_served(&self) -> Vec<usize> {
        let mut common: Option<Vec<usize>> = None;
        for s in &self.optimal_solutions {
            let served = s.served();
            common = Some(match common {
                None => served,
                Some(c) => c.into_iter().filter(|v| served.contains(v)).collect(),
            });
        }
        common.unwrap_or_default()
    }
}

struct Table {
    customers: Vec<usize>,
    /// Shortest route length per subset (infinite when none fits).
    length: Vec<f64>,
    /// Predecessor table for route reconstruction.
    last: Vec<Vec<f64>>,
}

fn held_karp(inst: &Instance, customers: Vec<usize>) -> Table {
    let k = customers.len();
    let full = 1usize << k;
    let (d, a) = (inst.depart(), inst.arrive());
    let mut dp = vec![vec![f64::INFINITY; k]; full];
    for (t, &c) in customers.iter().enumerate() {
        dp[1 << t][t] = inst.cost(d, c);
    }
    for mask in 1..full {
        for t in 0..k {
            let cur = dp[mask][t];
            if mask & (1 << t) == 0 || !cur.is_finite() {
                continue;
            }
            for u in 0..k {
                if mask & (1 << u) != 0 {
                    continue;
                }
                let next = cur + inst.cost(customers[t], customers[u]);
                let slot = &mut dp[mask | (1 << u)][u];
                if next < *slot {
                    *slot = next;
                }
            }
        }
    }
    let mut length = vec![f64::INFINITY; full];
    length[0] = inst.cost(d, a);
    for mask in 1..full {
        for t in 0..k {
            if mask & (1 << t) != 0 {
                length[mask] = length[mask].min(dp[mask][t] + inst.cost(customers[t], a));
            }
        }
    }
    Table {
        customers,
        length,
        last: dp,
    }
}

impl Table {
    fn route(&self, inst: &Instance, mask: usize) -> Vec<usize> {
        let (d, a) = (inst.depart(), inst.arrive());
        let k = self.customers.len();
        let mut rev = Vec::new();
        let mut rest = mask;
        let mut target = self.length[mask];
        let mut next = a;
        while rest != 0 {
            let t = (0..k)
                .filter(|&t| rest & (1 << t) != 0)
                .min_by(|&x, &y| {
                    let ex = (self.last[rest][x] + inst.cost(self.customers[x], next) - target).abs();
                    let ey = (self.last[rest][y] + inst.cost(self.customers[y], next) - target).abs();
                    ex.total_cmp(&ey)
                })
                .expect("nonempty subset");
            target = self.last[rest][t];
            next = self.customers[t];
            rev.push(next);
            rest &= !(1 << t);
        }
        let mut path = vec![d];
        path.extend(rev.into_iter().rev());
        path.push(a);
        path
    }
}

fn guard(inst: &Instance, mask: &AccessibilityMask) -> Result<()> {
    if mask.num_customers() > MAX_CUSTOMERS || inst.fleet_size() > MAX_FLEET {
        return Err(Error::OracleGuard(format!(
            "oracle handles at most {MAX_CUSTOMERS} accessible customers and {MAX_FLEET} vehicles, got {} and {}",
            mask.num_customers(),
            inst.fleet_size()
        )));
    }
    Ok(())
}

pub fn solve_exact(inst: &Instance) -> Result<OracleResult> {
    solve_exact_with(inst, &accessibility(inst), &instance_profits(inst))
}

/// Exact optimum over the customers accepted by `mask`, scoring customers
/// by `weight` (one entry per vertex). Solutions always carry the
/// instance's own profits.
pub fn solve_exact_with(inst: &Instance, mask: &AccessibilityMask, weight: &[i64]) -> Result<OracleResult> {
    guard(inst, mask)?;
    let (d, a) = (inst.depart(), inst.arrive());
    if inst.cost(d, a) > inst.length_limit() + COST_TOL {
        return Err(Error::Infeasible("depots too far apart".into()));
    }
    let table = held_karp(inst, mask.customers());
    let k = table.customers.len();
    let full = 1usize << k;
    let limit = inst.length_limit() + COST_TOL;
    let fits: Vec<bool> = table.length.iter().map(|&l| l <= limit).collect();
    let score: Vec<i64> = (0..full)
        .map(|s| {
            (0..k)
                .filter(|&t| s & (1 << t) != 0)
                .map(|t| weight[table.customers[t]])
                .sum()
        })
        .collect();

    // best[j][s]: best score with j tours using customers inside s.
    let m = inst.fleet_size();
    let mut best = vec![vec![0i64; full]; m + 1];
    for j in 1..=m {
        for s in 0..full {
            let mut v = best[j - 1][s];
            let mut sub = s;
            while sub > 0 {
                if fits[sub] {
                    v = v.max(score[sub] + best[j - 1][s & !sub]);
                }
                sub = (sub - 1) & s;
            }
            best[j][s] = v;
        }
    }
    let optimum = best[m][full - 1];

    // Collections are listed as decreasing sequences of subset ids so each
    // appears once. Zero-weight customers never join a listed tour.
    let positive = (0..k)
        .filter(|&t| weight[table.customers[t]] > 0)
        .fold(0usize, |acc, t| acc | (1 << t));
    let mut collections: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    enumerate(&best, &fits, &score, positive, m, optimum, usize::MAX, &mut stack, &mut collections);

    let optimal_solutions = collections
        .into_iter()
        .map(|sets| {
            let tours = sets.iter().map(|&s| table.route(inst, s)).collect();
            Solution::new(inst, tours)
        })
        .collect();
    Ok(OracleResult {
        optimum,
        optimal_solutions,
    })
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    best: &[Vec<i64>],
    fits: &[bool],
    score: &[i64],
    avail: usize,
    tours_left: usize,
    need: i64,
    max_id: usize,
    stack: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if need == 0 {
        out.push(stack.clone());
        return;
    }
    if tours_left == 0 || best[tours_left][avail] < need {
        return;
    }
    let mut sub = avail;
    while sub > 0 {
        if sub < max_id && fits[sub] && score[sub] > 0 {
            let rest_need = need - score[sub];
            if rest_need >= 0 && best[tours_left - 1][avail & !sub] >= rest_need {
                stack.push(sub);
                enumerate(best, fits, score, avail & !sub, tours_left - 1, rest_need, sub, stack, out);
                stack.pop();
            }
        }
        sub = (sub - 1) & avail;
    }
}

/// Every feasible solution with vehicles in every order and every feasible
/// routing of each tour. Fails once more than `limit` solutions exist.
pub fn enumerate_feasible(inst: &Instance, mask: &AccessibilityMask, limit: usize) -> Result<Vec<Solution>> {
    guard(inst, mask)?;
    let (d, a) = (inst.depart(), inst.arrive());
    let bound = inst.length_limit() + COST_TOL;
    if inst.cost(d, a) > bound {
        return Ok(Vec::new());
    }
    let customers = mask.customers();
    // All simple feasible paths, grown depth first.
    let mut routes: Vec<(u32, Vec<usize>)> = vec![(0, vec![d, a])];
    let mut path = vec![d];
    grow(inst, &customers, bound, 0.0, 0, &mut path, &mut routes, limit)?;

    let m = inst.fleet_size();
    let mut out = Vec::new();
    let mut pick: Vec<usize> = Vec::new();
    assign(&routes, m, 0, &mut pick, &mut out, inst, limit)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    inst: &Instance,
    customers: &[usize],
    bound: f64,
    len: f64,
    used: u32,
    path: &mut Vec<usize>,
    routes: &mut Vec<(u32, Vec<usize>)>,
    limit: usize,
) -> Result<()> {
    let last = *path.last().expect("path starts at the depot");
    let a = inst.arrive();
    for (t, &c) in customers.iter().enumerate() {
        if used & (1 << t) != 0 {
            continue;
        }
        let l = len + inst.cost(last, c);
        if l + inst.cost(c, a) > bound {
            continue;
        }
        path.push(c);
        let mut full = path.clone();
        full.push(a);
        routes.push((used | (1 << t), full));
        if routes.len() > limit {
            return Err(Error::OracleGuard(format!("more than {limit} feasible routes")));
        }
        grow(inst, customers, bound, l, used | (1 << t), path, routes, limit)?;
        path.pop();
    }
    Ok(())
}

fn assign(
    routes: &[(u32, Vec<usize>)],
    m: usize,
    used: u32,
    pick: &mut Vec<usize>,
    out: &mut Vec<Solution>,
    inst: &Instance,
    limit: usize,
) -> Result<()> {
    if pick.len() == m {
        let tours = pick.iter().map(|&k| routes[k].1.clone()).collect();
        out.push(Solution::from_ordered(inst, tours));
        if out.len() > limit {
            return Err(Error::OracleGuard(format!("more than {limit} feasible solutions")));
        }
        return Ok(());
    }
    for (k, (set, _)) in routes.iter().enumerate() {
        if set & used == 0 {
            pick.push(k);
            assign(routes, m, used | set, pick, out, inst, limit)?;
            pick.pop();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primal::validate;

    #[test]
    fn no_customers() {
        let inst = Instance::new(&[(0.0, 0.0, 0), (1.0, 0.0, 0)], 2, 3.0).unwrap();
        let r = solve_exact(&inst).unwrap();
        assert_eq!(r.optimum, 0);
        assert_eq!(r.optimal_solutions.len(), 1);
    }

    #[test]
    fn single_customer() {
        let inst = Instance::new(&[(0.0, 0.0, 0), (1.0, 1.0, 7), (2.0, 0.0, 0)], 1, 5.0).unwrap();
        let r = solve_exact(&inst).unwrap();
        assert_eq!(r.optimum, 7);
        assert_eq!(r.optimal_solutions.len(), 1);
        assert_eq!(r.optimal_solutions[0].tours, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn line_admitting_two_of_three() {
        // d and a at the origin; customers at 1, 2, 3 on a line with
        // profits 4, 6, 5. A route to x and back costs 2x, so L = 4.5
        // admits {1, 2} (length 4) but no route reaching x = 3.
        let inst = Instance::new(
            &[(0.0, 0.0, 0), (1.0, 0.0, 4), (2.0, 0.0, 6), (3.0, 0.0, 5), (0.0, 0.0, 0)],
            1,
            4.5,
        )
        .unwrap();
        let r = solve_exact(&inst).unwrap();
        assert_eq!(r.optimum, 10);
        // By hand: {1}:4, {2}:6, {1,2}:10; customer 3 needs length 6.
        assert_eq!(r.optimal_solutions.len(), 1);
        assert_eq!(r.optimal_solutions[0].served(), vec![1, 2]);
        validate(&inst, &r.optimal_solutions[0]).unwrap();
    }

    #[test]
    fn all_optima_are_listed() {
        // Two customers of equal profit, only one fits per tour.
        let inst = Instance::new(
            &[(0.0, 0.0, 0), (0.0, 2.0, 5), (0.0, -2.0, 5), (0.0, 0.0, 0)],
            1,
            4.0,
        )
        .unwrap();
        let r = solve_exact(&inst).unwrap();
        assert_eq!(r.optimum, 5);
        assert_eq!(r.optimal_solutions.len(), 2);
        assert!(r.always_served().is_empty());
        let two = inst.with_fleet(2);
        let r2 = solve_exact(&two).unwrap();
        assert_eq!(r2.optimum, 10);
        assert_eq!(r2.optimal_solutions.len(), 1);
        assert_eq!(r2.always_served(), vec![1, 2]);
    }

    #[test]
    fn guard_rejects_large_inputs() {
        let mut pts = vec![(0.0, 0.0, 0)];
        pts.extend((0..13).map(|k| (k as f64 * 0.1, 0.0, 1)));
        pts.push((0.0, 0.0, 0));
        let inst = Instance::new(&pts, 1, 100.0).unwrap();
        assert!(matches!(solve_exact(&inst), Err(Error::OracleGuard(_))));
        let small = Instance::new(&[(0.0, 0.0, 0), (0.0, 0.0, 0)], 4, 1.0).unwrap();
        assert!(matches!(solve_exact(&small), Err(Error::OracleGuard(_))));
    }

    #[test]
    fn feasible_enumeration_counts() {
        // Two customers, both reachable together; m = 1: routes are
        // empty, {1}, {2}, 1-2, 2-1.
        let inst = Instance::new(
            &[(0.0, 0.0, 0), (1.0, 0.0, 1), (2.0, 0.0, 1), (3.0, 0.0, 0)],
            1,
            10.0,
        )
        .unwrap();
        let all = enumerate_feasible(&inst, &accessibility(&inst), 1000).unwrap();
        assert_eq!(all.len(), 5);
        let two = inst.with_fleet(2);
        let all = enumerate_feasible(&two, &accessibility(&two), 1000).unwrap();
        // (empty, x) for 5 x; ({1}, empty|{2}); ({2}, empty|{1}); (1-2|2-1, empty).
        assert_eq!(all.len(), 5 + 2 + 2 + 2);
    }
}
