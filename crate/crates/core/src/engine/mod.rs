//! The cutting-plane loop and the staged cut generation that feeds it.
//!
//! [`Engine::solve`] runs the loop on the instance itself. Each round
//! solves the current integer model, separates subtours, and, while stages
//! remain, runs one stage of cut generation: subset bounds from smaller
//! fleets, then mandatory customers, then incompatibility enhancement.
//! Those stages solve restricted variants of the instance with the same
//! loop (without further stages) under a short per-variant timer.

mod boundary;
mod ledger;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{debug, info, warn};

pub use boundary::{subset_rows, vehicle_subsets, SubsetBound};
pub use ledger::{BoundEntry, BoundsLedger, DerivedInstance, DerivedKey, ForcedPair, Scope, ScopedRow};

use crate::backend::{BackendConfig, Deadline, SolverBackend};
use crate::error::{Error, Result};
use crate::incompat::{
    alpha_bounds, emit_clique_cuts, emit_indepset_cuts, find_cliques, init_graphs_cached, IncompatGraph, Node,
};
use crate::instance::{accessibility, min_len_customers, AccessibilityMask, Instance};
use crate::model::{Assignment, CutKind, LinearRow, MipModel, Sense, Var};
use crate::primal::{heuristic, validate, Solution};
use crate::separation::{emit_classic_secs, emit_gsecs, extract_tours, find_subtours};

/// Model components that can be switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    /// Generalized subtour rows; plain subtour elimination is used instead.
    Gsec,
    Symmetry,
    /// Removal of inaccessible customers and arcs.
    Inaccessible,
    /// Profit and customer-count bounds on tour subsets.
    Boundary,
    Mandatory,
    Clique,
    IndepSet,
    /// Incompatibility search by solving forced-pair variants.
    Enhance,
}

impl Component {
    pub const ALL: [Component; 8] = [
        Component::Gsec,
        Component::Symmetry,
        Component::Inaccessible,
        Component::Boundary,
        Component::Mandatory,
        Component::Clique,
        Component::IndepSet,
        Component::Enhance,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Component::Gsec => "gsec",
            Component::Symmetry => "symmetry",
            Component::Inaccessible => "inaccessible",
            Component::Boundary => "boundary",
            Component::Mandatory => "mandatory",
            Component::Clique => "clique",
            Component::IndepSet => "indepset",
            Component::Enhance => "enhance",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Component::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Component::ALL.iter().map(|c| c.as_str()).collect();
                format!("unknown component `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Overall limit; `None` runs to completion.
    pub time_limit: Option<Duration>,
    /// Total budget of the cut-generation stages.
    pub cut_time_limit: Duration,
    /// Limit for each variant solved during cut generation.
    pub probe_time_limit: Duration,
    /// Shares of `cut_time_limit` for the subset-bound, mandatory and
    /// incompatibility stages.
    pub budget_split: [f64; 3],
    pub backend: BackendConfig,
    pub seed: u64,
    pub heuristic_restarts: usize,
    /// Perturbation rounds of the primal heuristic after its restarts.
    pub heuristic_kicks: usize,
    pub heuristic_time: Duration,
    pub disabled: BTreeSet<Component>,
    /// Emit subset bounds for every vehicle subset instead of the
    /// contiguous windows of the profit order (fleets of at most 4).
    pub all_subsets: bool,
    /// Most forced-pair variants solved by the incompatibility stage.
    pub enhance_pair_cap: usize,
    /// The stage gives up after this many probes in a row end on their timer.
    pub enhance_timeout_streak: usize,
    /// Keep inaccessible components in the model and fix them to zero
    /// with explicit rows instead of leaving them out.
    pub pin_inaccessible: bool,
    pub cache_dir: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            time_limit: Some(Duration::from_secs(7200)),
            cut_time_limit: Duration::from_secs(3600),
            probe_time_limit: Duration::from_secs(5),
            budget_split: [1.0 / 3.0; 3],
            backend: BackendConfig::default(),
            seed: 0,
            heuristic_restarts: 4,
            heuristic_kicks: 300,
            heuristic_time: Duration::from_secs(1),
            disabled: BTreeSet::new(),
            all_subsets: false,
            enhance_pair_cap: 60,
            enhance_timeout_streak: 4,
            pin_inaccessible: false,
            cache_dir: None,
        }
    }
}

impl EngineConfig {
    pub fn enabled(&self, c: Component) -> bool {
        !self.disabled.contains(&c)
    }

    pub fn disable(mut self, c: Component) -> Self {
        self.disabled.insert(c);
        self
    }
}

/// One round of the cutting-plane loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub upper_bound: i64,
    pub lower_bound: i64,
    pub subtours: usize,
    pub rows_added: usize,
}

/// Result of the loop on one variant.
#[derive(Debug, Clone)]
pub struct CpaOutcome {
    /// `None` when the variant's model has no solution.
    pub upper_bound: Option<i64>,
    pub lower_bound: Option<i64>,
    pub solution: Option<Solution>,
    pub optimal: bool,
    pub iterations: Vec<IterationLog>,
    /// Rows added to the model beyond the base rows, by kind.
    pub cuts: BTreeMap<CutKind, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Probe {
    Incompatible,
    Compatible,
    Inconclusive,
}

impl CpaOutcome {
    /// Whether the variant provably cannot reach `target`.
    pub fn below(&self, target: i64) -> bool {
        self.upper_bound.is_none_or(|ub| ub < target)
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub upper_bound: i64,
    pub lower_bound: i64,
    pub solution: Solution,
    pub optimal: bool,
    pub iterations: Vec<IterationLog>,
    pub cuts: BTreeMap<CutKind, usize>,
    pub mandatory: Vec<usize>,
    pub elapsed: Duration,
    pub ledger: BoundsLedger,
}

pub struct Engine {
    config: EngineConfig,
    base: Arc<Instance>,
    /// Components the models are built over.
    model_mask: AccessibilityMask,
    /// Full-fleet model over `model_mask`; rows are generated against it so
    /// that pooled rows mention every variable they should.
    reference: MipModel,
    ledger: BoundsLedger,
    deadline: Deadline,
    phase_deadlines: [Option<Deadline>; 3],
    /// Arcs used by the latest iterates of the main loop.
    recent_arcs: Vec<Vec<(usize, usize)>>,
}

fn floor_bound(ub: f64) -> i64 {
    if ub.is_finite() {
        (ub + 1e-6).floor() as i64
    } else {
        i64::MAX
    }
}

impl Engine {
    pub fn new(inst: impl Into<Arc<Instance>>, config: EngineConfig) -> Result<Self> {
        let base: Arc<Instance> = inst.into();
        let accessible = accessibility(&base);
        let unrestricted = AccessibilityMask::unrestricted(&base);
        let model_mask = if config.enabled(Component::Inaccessible) && !config.pin_inaccessible {
            accessible.clone()
        } else {
            unrestricted
        };
        let reference = MipModel::build_base(Arc::clone(&base), &model_mask)?;
        let (gc, ga) = init_graphs_cached(&base, &model_mask, config.cache_dir.as_deref());
        let mut ledger = BoundsLedger::new(gc, ga);
        if config.enabled(Component::Inaccessible) && config.pin_inaccessible {
            let mut pinned = reference.clone();
            let ids = pinned.pin_inaccessible(&accessible);
            for id in ids {
                ledger.push(pinned.rows()[id].clone(), Scope::Feasible);
            }
        }
        Ok(Self {
            config,
            base,
            model_mask,
            reference,
            ledger,
            deadline: Deadline::never(),
            phase_deadlines: [None; 3],
            recent_arcs: Vec::new(),
        })
    }

    pub fn ledger(&self) -> &BoundsLedger {
        &self.ledger
    }

    pub fn instance(&self) -> &Arc<Instance> {
        &self.base
    }

    pub fn solve(mut self) -> Result<SolveReport> {
        let started = Instant::now();
        self.deadline = self
            .config
            .time_limit
            .map(Deadline::after)
            .unwrap_or_else(Deadline::never);
        let original = DerivedInstance::original(Arc::clone(&self.base));
        let out = self.cpa(&original, self.deadline, true, None)?;
        let solution = out.solution.clone().unwrap_or_else(|| Solution::empty(&self.base));
        Ok(SolveReport {
            upper_bound: out.upper_bound.unwrap_or(0),
            lower_bound: out.lower_bound.unwrap_or(0),
            solution,
            optimal: out.optimal,
            iterations: out.iterations,
            cuts: out.cuts,
            mandatory: self.ledger.mandatory().iter().copied().collect(),
            elapsed: started.elapsed(),
            ledger: self.ledger,
        })
    }

    fn build_model(&self, variant: &DerivedInstance) -> Result<MipModel> {
        let inst = variant.instance();
        let weights = variant.weights();
        let mask = variant.mask(&self.model_mask);
        let mut model = MipModel::build_base(inst, &mask)?;
        if variant.key().min_count {
            model.set_objective(|v| match v {
                Var::Serve { .. } => -1.0,
                Var::Arc { .. } => 0.0,
            });
        } else {
            model.set_objective(|v| match *v {
                Var::Serve { customer, .. } => weights[customer] as f64,
                Var::Arc { .. } => 0.0,
            });
        }
        if self.config.enabled(Component::Symmetry) && !variant.key().min_count {
            model.add_symmetry_rows();
        }
        if let Some(pair) = variant.key().forced {
            for row in forced_rows(pair, model.fleet()) {
                model.add_row(row)?;
            }
        }
        for row in self.ledger.rows_for(variant, &model) {
            model.add_row(row)?;
        }
        Ok(model)
    }

    /// Adds `rows` (generated for the full fleet) to a live model and its
    /// backend. Returns how many were new.
    fn install(
        model: &mut MipModel,
        backend: &mut dyn SolverBackend,
        rows: &[LinearRow],
        cuts: &mut BTreeMap<CutKind, usize>,
    ) -> Result<usize> {
        let mut fresh = Vec::new();
        for row in rows {
            let row = row.project(|v| model.has_var(v));
            if row.is_vacuous() {
                continue;
            }
            let before = model.num_rows();
            let id = model.add_row(row)?;
            if id == before {
                let r = &model.rows()[id];
                *cuts.entry(r.kind).or_default() += 1;
                fresh.push(model.index_row(r)?);
            }
        }
        backend.add_rows(&fresh)?;
        Ok(fresh.len())
    }

    /// Weighted value of `sol` when it is a valid incumbent for `model`.
    fn admissible(&self, variant: &DerivedInstance, model: &MipModel, sol: &Solution) -> Option<(i64, Assignment)> {
        let inst = model.instance();
        if validate(inst, sol).is_err() {
            return None;
        }
        let assign = model.assignment_from_tours(&sol.tours).ok()?;
        if !variant.is_original() && !model.violated_rows(&assign).is_empty() {
            return None;
        }
        Some((model.objective_value(&assign).round() as i64, assign))
    }

    /// The cutting-plane loop on `variant`. Cut-generation stages run only
    /// when `original` is set. With a `cutoff`, the loop stops as soon as
    /// it is known whether the variant can reach that value.
    pub fn cpa(
        &mut self,
        variant: &DerivedInstance,
        deadline: Deadline,
        original: bool,
        cutoff: Option<i64>,
    ) -> Result<CpaOutcome> {
        let inst = variant.instance();
        let weights = variant.weights();
        let mut model = self.build_model(variant)?;
        let fleet = self.base.fleet_size();
        let mut ub: i64 = inst.customers().map(|i| weights[i].max(0)).sum();
        if let Some(stored) = self.ledger.entry(&variant.key()).upper_bound {
            ub = ub.min(stored);
        }
        let mut lb: Option<i64> = None;
        let mut best: Option<Solution> = None;
        let mut cuts: BTreeMap<CutKind, usize> = BTreeMap::new();
        for r in model.rows().iter().filter(|r| r.kind != CutKind::Base) {
            *cuts.entry(r.kind).or_default() += 1;
        }

        let heur_mask = variant.mask(&self.model_mask);
        let start = heuristic(
            &inst,
            &heur_mask,
            &weights,
            self.config.seed,
            self.config.heuristic_restarts,
            self.config.heuristic_kicks,
            deadline.within(self.config.heuristic_time),
        )?;
        let mut backend = self.config.backend.create()?;
        backend.load(&model)?;
        if let Some((v, assign)) = self.admissible(variant, &model, &start) {
            lb = Some(v);
            best = Some(start);
            backend.warm_start(&assign);
        }

        let mut iterations = Vec::new();
        let mut optimal = false;
        let mut infeasible = false;
        let mut step = 1;
        loop {
            if lb.is_some_and(|l| l >= ub) {
                ub = lb.expect("checked above");
                optimal = true;
                break;
            }
            if let Some(c) = cutoff {
                if ub < c || lb.is_some_and(|l| l >= c) {
                    break;
                }
            }
            if deadline.expired() {
                break;
            }
            let out = match backend.solve(deadline) {
                Ok(out) => out,
                Err(Error::Infeasible(_)) => {
                    infeasible = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            ub = ub.min(floor_bound(out.upper_bound));
            let proved = out.proved_optimal;
            let assign = match out.incumbent {
                Some(a) => a,
                None if proved => return Err(Error::Contract("optimal outcome without incumbent".into())),
                None => {
                    debug!("solve stopped before optimality, bound {ub}");
                    break;
                }
            };
            let subtours = find_subtours(&model, &assign);
            if !proved && (subtours.is_empty() || deadline.expired()) {
                debug!("solve stopped before optimality, bound {ub}");
                if subtours.is_empty() {
                    let candidate = Solution::new(&inst, extract_tours(&model, &assign));
                    if let Some((v, _)) = self.admissible(variant, &model, &candidate) {
                        if lb.is_none_or(|l| v > l) {
                            lb = Some(v);
                            best = Some(candidate);
                        }
                    }
                }
                if lb.is_some_and(|l| l >= ub) {
                    continue;
                }
                break;
            }
            let paths = extract_tours(&model, &assign);
            if original {
                self.recent_arcs = paths.iter().map(|p| p.windows(2).map(|w| (w[0], w[1])).collect()).collect();
            }
            let candidate = Solution::new(&inst, paths);
            if let Some((v, a)) = self.admissible(variant, &model, &candidate) {
                if lb.is_none_or(|l| v > l) {
                    lb = Some(v);
                    best = Some(candidate);
                    backend.warm_start(&a);
                }
            }
            if !subtours.is_empty() && lb.is_some_and(|l| l >= ub) {
                iterations.push(IterationLog {
                    iteration: iterations.len() + 1,
                    upper_bound: ub,
                    lower_bound: lb.unwrap_or(0),
                    subtours: subtours.len(),
                    rows_added: 0,
                });
                continue;
            }
            if subtours.is_empty() {
                // The incumbent is itself an optimal solution of the variant.
                let v = floor_bound(out.incumbent_value.unwrap_or(out.upper_bound));
                if lb != Some(v) {
                    return Err(Error::Contract(format!(
                        "subtour-free incumbent of value {v} was not accepted as a solution"
                    )));
                }
                ub = v;
                optimal = true;
                iterations.push(IterationLog {
                    iteration: iterations.len() + 1,
                    upper_bound: ub,
                    lower_bound: v,
                    subtours: 0,
                    rows_added: 0,
                });
                break;
            }

            let mut new_rows = Vec::new();
            for sub in &subtours {
                let rows = if self.config.enabled(Component::Gsec) {
                    emit_gsecs(sub, &self.reference)?
                } else {
                    emit_classic_secs(sub, &self.reference)?
                };
                for row in rows {
                    self.ledger.push(row.clone(), Scope::Feasible);
                    new_rows.push(row);
                }
            }
            if self.config.enabled(Component::Clique) {
                new_rows.extend(self.loop_cliques(variant, &model, &assign));
            }
            let mut added = Self::install(&mut model, backend.as_mut(), &new_rows, &mut cuts)?;
            if added == 0 {
                return Err(Error::Contract("separation produced no new row".into()));
            }
            if original && step <= fleet + 1 {
                let stage_rows = self.cea(step, lb.unwrap_or(0), best.as_ref())?;
                added += Self::install(&mut model, backend.as_mut(), &stage_rows, &mut cuts)?;
                step += 1;
            }
            let log = IterationLog {
                iteration: iterations.len() + 1,
                upper_bound: ub,
                lower_bound: lb.unwrap_or(0),
                subtours: subtours.len(),
                rows_added: added,
            };
            if original {
                info!(
                    "iteration={} ub={} lb={} subtours={} rows={}",
                    log.iteration, log.upper_bound, log.lower_bound, log.subtours, log.rows_added
                );
            }
            iterations.push(log);
        }

        let key = variant.key();
        if infeasible {
            self.ledger.record_infeasible(key);
        } else {
            self.ledger.record_upper(key, ub, optimal);
        }
        if let Some(l) = lb {
            self.ledger.record_lower(key, l);
        }
        Ok(CpaOutcome {
            upper_bound: if infeasible { None } else { Some(ub) },
            lower_bound: lb,
            solution: best,
            optimal: optimal && !infeasible,
            iterations,
            cuts,
        })
    }

    /// Clique rows through the customers and arcs of an iterate.
    fn loop_cliques(&mut self, variant: &DerivedInstance, model: &MipModel, assign: &Assignment) -> Vec<LinearRow> {
        let enhanced = variant.admits_optimality_rows();
        let mut found = Vec::new();
        let graphs = [
            (&self.ledger.customer_graph, &self.ledger.init_customer_graph),
            (&self.ledger.arc_graph, &self.ledger.init_arc_graph),
        ];
        for (current, init) in graphs {
            let g = if enhanced { current } else { init };
            let mut seeds = BTreeSet::new();
            for (k, v) in model.vars().iter().enumerate() {
                if !assign.get(k) {
                    continue;
                }
                let node = match *v {
                    Var::Serve { customer, .. } => Node::Customer(customer),
                    Var::Arc { from, to, .. } => Node::Arc(from, to),
                };
                if let Some(idx) = g.index_of(&node) {
                    if g.degree(idx) > 0 {
                        seeds.insert(idx);
                    }
                }
            }
            let seeds: Vec<usize> = seeds.into_iter().collect();
            for c in find_cliques(g, Some(&seeds)) {
                let scope = if init.is_clique(&c) { Scope::Feasible } else { Scope::Optimal };
                for row in emit_clique_cuts(g, std::slice::from_ref(&c), self.base.fleet_size()) {
                    found.push((row, scope));
                }
            }
        }
        found
            .into_iter()
            .map(|(row, scope)| {
                self.ledger.push(row.clone(), scope);
                row
            })
            .collect()
    }

    fn phase_deadline(&mut self, phase: usize) -> Deadline {
        let share = self.config.budget_split[phase].max(0.0);
        let budget = self.config.cut_time_limit.mul_f64(share);
        *self.phase_deadlines[phase].get_or_insert_with(|| Deadline::after(budget).min(self.deadline))
    }

    /// One stage of cut generation. Stages `1..m` bound tour subsets,
    /// stage `m` looks for mandatory customers and stage `m + 1` enlarges
    /// the incompatibility graphs.
    fn cea(&mut self, step: usize, lb: i64, incumbent: Option<&Solution>) -> Result<Vec<LinearRow>> {
        let m = self.base.fleet_size();
        let rows = if step < m {
            self.boundary_stage(step, lb)?
        } else if step == m {
            self.mandatory_stage(lb)?
        } else {
            self.incompat_stage(lb, incumbent)?
        };
        let mut out = Vec::new();
        for (row, scope) in rows {
            self.ledger.push(row.clone(), scope);
            out.push(row);
        }
        Ok(out)
    }

    fn boundary_stage(&mut self, g: usize, lb: i64) -> Result<Vec<(LinearRow, Scope)>> {
        if !self.config.enabled(Component::Boundary) {
            return Ok(Vec::new());
        }
        let m = self.base.fleet_size();
        let phase = self.phase_deadline(0);
        let all = self.config.all_subsets && m <= 4;
        let customers = self.reference.customers().to_vec();
        let base = Arc::clone(&self.base);
        let original = DerivedInstance::original(Arc::clone(&base));
        let mut rows = Vec::new();
        let emit = |h: usize, bound: SubsetBound, value: i64, scope: Scope, rows: &mut Vec<(LinearRow, Scope)>| {
            for r in subset_rows(&base, &customers, m, h, bound, value, all) {
                rows.push((r, scope));
            }
        };

        if g == 1 {
            emit(m, SubsetBound::ProfitLower { lower_bound: lb }, 0, Scope::Optimal, &mut rows);
        }
        let xg = original.with_fleet(g);
        let out = self.cpa(&xg, phase.within(self.config.probe_time_limit), false, None)?;
        let ub_g = out.upper_bound;
        if let Some(u) = ub_g {
            emit(g, SubsetBound::ProfitUpper, u, Scope::Feasible, &mut rows);
            emit(m - g, SubsetBound::ProfitLower { lower_bound: lb }, u, Scope::Optimal, &mut rows);
        }
        let xgi = xg.unit_profits();
        let out = self.cpa(&xgi, phase.within(self.config.probe_time_limit), false, None)?;
        if let Some(u) = out.upper_bound {
            emit(g, SubsetBound::CountUpper, u, Scope::Feasible, &mut rows);
        }
        if g + 1 == m {
            if let Some(u) = ub_g {
                let threshold = lb - u;
                if threshold > 0 {
                    let single = self.ledger.entry(&original.with_fleet(1).key()).upper_bound;
                    if let Some(k) = self.min_customers(threshold, single, phase)? {
                        self.ledger.set_min_customers_per_tour(k);
                        emit(1, SubsetBound::CountLower, k, Scope::Optimal, &mut rows);
                    }
                }
            }
        }
        debug!("subset stage {g}: {} rows", rows.len());
        Ok(rows)
    }

    /// Lower bound on the customers of a tour collecting at least
    /// `threshold` profit, from one solve of the single-tour model.
    fn min_customers(&mut self, threshold: i64, single_ub: Option<i64>, phase: Deadline) -> Result<Option<i64>> {
        let variant = DerivedInstance::original(Arc::clone(&self.base)).min_count();
        let mut model = self.build_model(&variant)?;
        let customers = model.customers().to_vec();
        let profit = |i: usize| self.base.profit(i) as f64;
        model.add_row(LinearRow::new(
            CutKind::ProfitLB,
            customers.iter().map(|&i| (Var::serve(i, 0), profit(i))),
            Sense::Ge,
            threshold as f64,
        ))?;
        if let Some(u) = single_ub {
            model.add_row(LinearRow::new(
                CutKind::ProfitUB,
                customers.iter().map(|&i| (Var::serve(i, 0), profit(i))),
                Sense::Le,
                u as f64,
            ))?;
        }
        let mut backend = self.config.backend.create()?;
        backend.load(&model)?;
        match backend.solve(phase.within(self.config.probe_time_limit)) {
            Ok(out) if out.upper_bound.is_finite() => {
                let k = (-out.upper_bound - 1e-6).ceil() as i64;
                Ok((k > 0).then_some(k))
            }
            Ok(_) => Ok(None),
            Err(Error::Infeasible(_)) => {
                warn!("no single tour reaches profit {threshold}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn mandatory_stage(&mut self, lb: i64) -> Result<Vec<(LinearRow, Scope)>> {
        if !self.config.enabled(Component::Mandatory) {
            return Ok(Vec::new());
        }
        let phase = self.phase_deadline(1);
        let original = DerivedInstance::original(Arc::clone(&self.base));
        let accessible = accessibility(&self.base);
        let mut customers = accessible.customers();
        customers.sort_by_key(|&i| std::cmp::Reverse(self.base.profit(i)));
        let mut rows = Vec::new();
        for i in customers {
            if phase.expired() {
                break;
            }
            if self.ledger.mandatory().contains(&i) {
                continue;
            }
            let variant = original.without(i);
            let out = match self.cpa(&variant, phase.within(self.config.probe_time_limit), false, Some(lb)) {
                Ok(out) => out,
                Err(e @ Error::Backend(_)) => {
                    warn!("probe without customer {i} failed: {e}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            if out.below(lb) {
                info!("customer {i} is mandatory");
                self.ledger.add_mandatory(i);
                let row = LinearRow::new(
                    CutKind::Mandatory,
                    (0..self.base.fleet_size()).map(|r| (Var::serve(i, r), 1.0)),
                    Sense::Eq,
                    1.0,
                );
                self.ledger.push(row.clone(), Scope::Optimal);
                rows.push((row, Scope::Optimal));
            }
        }
        Ok(rows)
    }

    /// Tries to prove a pair never shares a tour in a solution reaching `lb`.
    fn probe_pair(&mut self, pair: ForcedPair, lb: i64, phase: Deadline) -> Result<Probe> {
        let variant = DerivedInstance::original(Arc::clone(&self.base)).forcing(pair);
        match self.cpa(&variant, phase.within(self.config.probe_time_limit), false, Some(lb)) {
            Ok(out) if out.below(lb) => Ok(Probe::Incompatible),
            Ok(out) if out.lower_bound.is_some_and(|v| v >= lb) => Ok(Probe::Compatible),
            Ok(_) => Ok(Probe::Inconclusive),
            Err(e @ Error::Backend(_)) => {
                warn!("pair probe {pair:?} failed: {e}");
                Ok(Probe::Inconclusive)
            }
            Err(e) => Err(e),
        }
    }

    /// Records a probe result and tells whether the stage should go on.
    fn keep_probing(&self, probe: Probe, streak: &mut usize) -> bool {
        if probe == Probe::Inconclusive {
            *streak += 1;
        } else {
            *streak = 0;
        }
        *streak < self.config.enhance_timeout_streak
    }

    fn enhance(&mut self, lb: i64, incumbent: Option<&Solution>, phase: Deadline) -> Result<usize> {
        let inst = Arc::clone(&self.base);
        let limit = inst.length_limit();
        let accessible = accessibility(&inst);
        let mut budget = self.config.enhance_pair_cap;
        let mut streak = 0;
        let mut added = 0;

        let g = &self.ledger.customer_graph;
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for a in 0..g.num_nodes() {
            for b in a + 1..g.num_nodes() {
                if g.has_edge(a, b) {
                    continue;
                }
                if let (Node::Customer(i), Node::Customer(j)) = (g.node(a), g.node(b)) {
                    if accessible.is_customer_accessible(i) && accessible.is_customer_accessible(j) {
                        pairs.push((limit - min_len_customers(&inst, i, j), a, b));
                    }
                }
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (_, a, b) in pairs {
            if budget == 0 || phase.expired() {
                break;
            }
            budget -= 1;
            let (Node::Customer(i), Node::Customer(j)) = (
                self.ledger.customer_graph.node(a),
                self.ledger.customer_graph.node(b),
            ) else {
                continue;
            };
            let probe = self.probe_pair(ForcedPair::Customers(i, j), lb, phase)?;
            if probe == Probe::Incompatible {
                self.ledger.customer_graph.add_edge(a, b);
                added += 1;
            }
            if !self.keep_probing(probe, &mut streak) {
                return Ok(added);
            }
        }

        // Arc pairs: arcs of different tours of the incumbent and of the
        // latest iterate.
        let mut groups: Vec<Vec<(usize, usize)>> = self.recent_arcs.clone();
        if let Some(sol) = incumbent {
            groups.extend(sol.tours.iter().map(|t| t.windows(2).map(|w| (w[0], w[1])).collect()));
        }
        let ga = &self.ledger.arc_graph;
        let mut arc_pairs = BTreeSet::new();
        for (gi, x) in groups.iter().enumerate() {
            for y in groups.iter().skip(gi + 1) {
                for &e in x {
                    for &f in y {
                        if let (Some(p), Some(q)) = (ga.index_of(&Node::Arc(e.0, e.1)), ga.index_of(&Node::Arc(f.0, f.1))) {
                            if p != q
                                && !ga.has_edge(p, q)
                                && accessible.is_arc_accessible(e.0, e.1)
                                && accessible.is_arc_accessible(f.0, f.1)
                            {
                                arc_pairs.insert((p.min(q), p.max(q)));
                            }
                        }
                    }
                }
            }
        }
        for (p, q) in arc_pairs {
            if budget == 0 || phase.expired() {
                break;
            }
            budget -= 1;
            let (Node::Arc(u, v), Node::Arc(w, s)) = (self.ledger.arc_graph.node(p), self.ledger.arc_graph.node(q)) else {
                continue;
            };
            let probe = self.probe_pair(ForcedPair::Arcs((u, v), (w, s)), lb, phase)?;
            if probe == Probe::Incompatible {
                self.ledger.arc_graph.add_edge(p, q);
                added += 1;
            }
            if !self.keep_probing(probe, &mut streak) {
                break;
            }
        }
        Ok(added)
    }

    fn incompat_stage(&mut self, lb: i64, incumbent: Option<&Solution>) -> Result<Vec<(LinearRow, Scope)>> {
        let phase = self.phase_deadline(2);
        if self.config.enabled(Component::Enhance) {
            let added = self.enhance(lb, incumbent, phase)?;
            info!("incompatibility search added {added} edges");
        }
        let fleet = self.base.fleet_size();
        let mut rows = Vec::new();
        let graphs = [
            (&self.ledger.customer_graph, &self.ledger.init_customer_graph),
            (&self.ledger.arc_graph, &self.ledger.init_arc_graph),
        ];
        for (g, init) in graphs {
            if self.config.enabled(Component::Clique) {
                for c in find_cliques(g, None) {
                    let scope = if init.is_clique(&c) { Scope::Feasible } else { Scope::Optimal };
                    for row in emit_clique_cuts(g, std::slice::from_ref(&c), fleet) {
                        rows.push((row, scope));
                    }
                }
            }
            if self.config.enabled(Component::IndepSet) {
                for b in alpha_bounds(g) {
                    let scope = if alpha_uses_initial_edges(init, &b) { Scope::Feasible } else { Scope::Optimal };
                    for row in emit_indepset_cuts(g, std::slice::from_ref(&b), fleet) {
                        rows.push((row, scope));
                    }
                }
            }
        }
        Ok(rows)
    }
}

fn alpha_uses_initial_edges(init: &IncompatGraph, b: &crate::incompat::AlphaBound) -> bool {
    b.neighbors.iter().all(|&k| init.has_edge(b.node, k)) && b.partition.iter().all(|p| init.is_clique(p))
}

/// Rows placing both members of `pair` on one tour.
pub fn forced_rows(pair: ForcedPair, fleet: usize) -> Vec<LinearRow> {
    let (p, q): (Box<dyn Fn(usize) -> Var>, Box<dyn Fn(usize) -> Var>) = match pair {
        ForcedPair::Customers(i, j) => (Box::new(move |r| Var::serve(i, r)), Box::new(move |r| Var::serve(j, r))),
        ForcedPair::Arcs((u, v), (w, s)) => (Box::new(move |r| Var::arc(u, v, r)), Box::new(move |r| Var::arc(w, s, r))),
    };
    let mut rows = vec![LinearRow::new(CutKind::ForcePair, (0..fleet).map(|r| (p(r), 1.0)), Sense::Eq, 1.0)];
    if matches!(pair, ForcedPair::Customers(..)) {
        rows.push(LinearRow::new(CutKind::ForcePair, (0..fleet).map(|r| (q(r), 1.0)), Sense::Eq, 1.0));
    }
    for r in 0..fleet {
        rows.push(LinearRow::new(CutKind::ForcePair, [(p(r), 1.0), (q(r), -1.0)], Sense::Eq, 0.0));
    }
    rows
}

/// Solves `inst` with `config`.
pub fn solve(inst: Instance, config: EngineConfig) -> Result<SolveReport> {
    Engine::new(inst, config)?.solve()
}
