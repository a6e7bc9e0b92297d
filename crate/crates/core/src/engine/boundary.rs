//! Rows bounding the profit or the number of customers collected by a
//! subset of the tours.

use crate::instance::Instance;
use crate::model::{CutKind, LinearRow, Sense, Var};

/// Which bound a family of subset rows expresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetBound {
    /// Profit of the tours in `H` is at most the value.
    ProfitUpper,
    /// Profit of the tours in `H` plus the value reaches the lower bound.
    ProfitLower { lower_bound: i64 },
    /// Customers served by the tours in `H` are at most the value.
    CountUpper,
    /// Customers served by the tours in `H` are at least the value.
    CountLower,
}

/// Vehicle subsets of size `h` out of `fleet`: the contiguous windows of
/// the profit order, or every subset when `all` is set.
pub fn vehicle_subsets(fleet: usize, h: usize, all: bool) -> Vec<Vec<usize>> {
    if h == 0 || h > fleet {
        return Vec::new();
    }
    if !all {
        return (0..=fleet - h).map(|s| (s..s + h).collect()).collect();
    }
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(h);
    fn rec(start: usize, fleet: usize, h: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == h {
            out.push(cur.clone());
            return;
        }
        for r in start..fleet {
            cur.push(r);
            rec(r + 1, fleet, h, cur, out);
            cur.pop();
        }
    }
    rec(0, fleet, h, &mut cur, &mut out);
    out
}

/// One row per vehicle subset of size `h`. Upper-bound rows on the whole
/// fleet only restate the objective bound and are not produced; rows that
/// cannot bind are dropped.
pub fn subset_rows(
    inst: &Instance,
    customers: &[usize],
    fleet: usize,
    h: usize,
    bound: SubsetBound,
    value: i64,
    all: bool,
) -> Vec<LinearRow> {
    let upper = matches!(bound, SubsetBound::ProfitUpper | SubsetBound::CountUpper);
    if upper && h >= fleet {
        return Vec::new();
    }
    let profit_sum: i64 = customers.iter().map(|&i| inst.profit(i)).sum();
    let (kind, sense, rhs, by_profit) = match bound {
        SubsetBound::ProfitUpper => (CutKind::ProfitUB, Sense::Le, value, true),
        SubsetBound::ProfitLower { lower_bound } => (CutKind::ProfitLB, Sense::Ge, lower_bound - value, true),
        SubsetBound::CountUpper => (CutKind::CountUB, Sense::Le, value, false),
        SubsetBound::CountLower => (CutKind::CountLB, Sense::Ge, value, false),
    };
    let ceiling = if by_profit { profit_sum } else { customers.len() as i64 };
    let binds = match sense {
        Sense::Le => rhs < ceiling,
        _ => rhs > 0,
    };
    if !binds {
        return Vec::new();
    }
    vehicle_subsets(fleet, h, all)
        .into_iter()
        .map(|set| {
            LinearRow::new(
                kind,
                set.iter().flat_map(|&r| {
                    customers.iter().map(move |&i| {
                        let c = if by_profit { inst.profit(i) as f64 } else { 1.0 };
                        (Var::serve(i, r), c)
                    })
                }),
                sense,
                rhs as f64,
            )
        })
        .collect()
}
