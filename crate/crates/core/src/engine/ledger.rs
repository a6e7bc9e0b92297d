//! Derived instances and the store of bounds, mandatory customers and
//! pooled rows shared by every solve of one instance.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::incompat::IncompatGraph;
use crate::instance::{AccessibilityMask, Instance};
use crate::model::{LinearRow, MipModel};

/// A pair forced into the same tour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForcedPair {
    Customers(usize, usize),
    Arcs((usize, usize), (usize, usize)),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DerivedKey {
    pub fleet: usize,
    pub unit_profits: bool,
    pub min_count: bool,
    pub removed: Option<usize>,
    pub forced: Option<ForcedPair>,
}

/// The instance itself or one of the restricted variants solved while
/// generating cuts.
#[derive(Debug, Clone)]
pub struct DerivedInstance {
    base: Arc<Instance>,
    key: DerivedKey,
}

impl DerivedInstance {
    pub fn original(base: Arc<Instance>) -> Self {
        let key = DerivedKey {
            fleet: base.fleet_size(),
            unit_profits: false,
            min_count: false,
            removed: None,
            forced: None,
        };
        Self { base, key }
    }

    pub fn with_fleet(&self, g: usize) -> Self {
        assert!(g >= 1 && g <= self.base.fleet_size(), "fleet override out of range");
        let mut out = self.clone();
        out.key.fleet = g;
        out
    }

    pub fn unit_profits(&self) -> Self {
        let mut out = self.clone();
        out.key.unit_profits = true;
        out
    }

    /// One tour serving as few customers as possible.
    pub fn min_count(&self) -> Self {
        let mut out = self.with_fleet(1).unit_profits();
        out.key.min_count = true;
        out
    }

    pub fn without(&self, customer: usize) -> Self {
        let mut out = self.clone();
        out.key.removed = Some(customer);
        out
    }

    pub fn forcing(&self, pair: ForcedPair) -> Self {
        let mut out = self.clone();
        out.key.forced = Some(pair);
        out
    }

    pub fn key(&self) -> DerivedKey {
        self.key
    }

    pub fn base(&self) -> &Arc<Instance> {
        &self.base
    }

    pub fn is_original(&self) -> bool {
        self.key == DerivedInstance::original(Arc::clone(&self.base)).key
    }

    /// Solutions of removal and forced-pair variants are only of interest
    /// when they could beat the current lower bound, so rows valid for such
    /// solutions of the instance may be used there.
    pub fn admits_optimality_rows(&self) -> bool {
        self.key.fleet == self.base.fleet_size()
            && !self.key.unit_profits
            && !self.key.min_count
    }

    /// The instance with the variant's fleet size.
    pub fn instance(&self) -> Arc<Instance> {
        if self.key.fleet == self.base.fleet_size() {
            Arc::clone(&self.base)
        } else {
            Arc::new(self.base.with_fleet(self.key.fleet))
        }
    }

    /// Objective weight per vertex.
    pub fn weights(&self) -> Vec<i64> {
        (0..self.base.num_vertices())
            .map(|v| {
                if self.base.is_depot(v) || Some(v) == self.key.removed {
                    0
                } else if self.key.unit_profits {
                    1
                } else {
                    self.base.profit(v)
                }
            })
            .collect()
    }

    pub fn mask(&self, base: &AccessibilityMask) -> AccessibilityMask {
        match self.key.removed {
            Some(i) => base.without_customer(i),
            None => base.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BoundEntry {
    pub upper_bound: Option<i64>,
    pub proved: bool,
    pub lower_bound: Option<i64>,
    /// The variant has no feasible solution.
    pub infeasible: bool,
}

/// What a pooled row is valid for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    /// Every feasible solution of every variant.
    Feasible,
    /// Every solution of the instance whose profit reaches the lower bound
    /// known when the row was made.
    Optimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScopedRow {
    pub row: LinearRow,
    pub scope: Scope,
}

#[derive(Debug, Clone)]
pub struct BoundsLedger {
    entries: HashMap<DerivedKey, BoundEntry>,
    mandatory: BTreeSet<usize>,
    pool: Vec<ScopedRow>,
    pool_keys: std::collections::HashSet<String>,
    min_customers_per_tour: Option<i64>,
    pub(crate) init_customer_graph: IncompatGraph,
    pub(crate) init_arc_graph: IncompatGraph,
    pub(crate) customer_graph: IncompatGraph,
    pub(crate) arc_graph: IncompatGraph,
}

impl BoundsLedger {
    pub fn new(customer_graph: IncompatGraph, arc_graph: IncompatGraph) -> Self {
        Self {
            entries: HashMap::new(),
            mandatory: BTreeSet::new(),
            pool: Vec::new(),
            pool_keys: Default::default(),
            min_customers_per_tour: None,
            init_customer_graph: customer_graph.clone(),
            init_arc_graph: arc_graph.clone(),
            customer_graph,
            arc_graph,
        }
    }

    pub fn entry(&self, key: &DerivedKey) -> BoundEntry {
        self.entries.get(key).copied().unwrap_or_default()
    }

    /// Records an upper bound; the stored value only ever decreases and a
    /// proved bound is never replaced by an unproved one of equal value.
    pub fn record_upper(&mut self, key: DerivedKey, ub: i64, proved: bool) {
        let e = self.entries.entry(key).or_default();
        match e.upper_bound {
            Some(old) if old < ub => {}
            Some(old) if old == ub => e.proved |= proved,
            _ => {
                e.upper_bound = Some(ub);
                e.proved = proved;
            }
        }
    }

    pub fn record_lower(&mut self, key: DerivedKey, lb: i64) {
        let e = self.entries.entry(key).or_default();
        if e.lower_bound.is_none_or(|old| lb > old) {
            e.lower_bound = Some(lb);
        }
    }

    pub fn record_infeasible(&mut self, key: DerivedKey) {
        self.entries.entry(key).or_default().infeasible = true;
    }

    pub fn mandatory(&self) -> &BTreeSet<usize> {
        &self.mandatory
    }

    pub fn add_mandatory(&mut self, customer: usize) -> bool {
        self.mandatory.insert(customer)
    }

    pub fn min_customers_per_tour(&self) -> Option<i64> {
        self.min_customers_per_tour
    }

    pub fn set_min_customers_per_tour(&mut self, v: i64) {
        if self.min_customers_per_tour.is_none_or(|old| v > old) {
            self.min_customers_per_tour = Some(v);
        }
    }

    /// Adds a row to the pool; returns false for a repeat.
    pub fn push(&mut self, row: LinearRow, scope: Scope) -> bool {
        if row.is_vacuous() {
            return false;
        }
        let mut terms: Vec<String> = row.terms.iter().map(|(v, c)| format!("{c}:{v}")).collect();
        terms.sort();
        let key = format!("{} {} {} {}", row.kind, row.sense.as_str(), row.rhs, terms.join(" "));
        if !self.pool_keys.insert(key) {
            return false;
        }
        self.pool.push(ScopedRow { row, scope });
        true
    }

    pub fn pool(&self) -> &[ScopedRow] {
        &self.pool
    }

    pub fn customer_graph(&self) -> &IncompatGraph {
        &self.customer_graph
    }

    pub fn arc_graph(&self) -> &IncompatGraph {
        &self.arc_graph
    }

    pub fn initial_customer_graph(&self) -> &IncompatGraph {
        &self.init_customer_graph
    }

    pub fn initial_arc_graph(&self) -> &IncompatGraph {
        &self.init_arc_graph
    }

    /// Pool rows usable by `variant`, restricted to the variables of `model`.
    pub fn rows_for(&self, variant: &DerivedInstance, model: &MipModel) -> Vec<LinearRow> {
        let optimal_ok = variant.admits_optimality_rows();
        self.pool
            .iter()
            .filter(|s| s.scope == Scope::Feasible || optimal_ok)
            .map(|s| s.row.project(|v| model.has_var(v)))
            .filter(|r| !r.is_vacuous())
            .collect()
    }
}
