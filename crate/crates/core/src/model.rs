//! Solver-independent MIP formulation: binary serve/arc variables per
//! vehicle, the base constraints, and a deduplicated pool of typed rows.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use log::debug;

use crate::error::{Error, Result};
use crate::instance::{AccessibilityMask, Instance};

/// Binary decision variable. Vehicles are numbered from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// `y`: vehicle serves the customer.
    Serve { customer: usize, vehicle: usize },
    /// `x`: vehicle traverses the arc.
    Arc { from: usize, to: usize, vehicle: usize },
}

impl Var {
    pub fn serve(customer: usize, vehicle: usize) -> Self {
        Var::Serve { customer, vehicle }
    }

    pub fn arc(from: usize, to: usize, vehicle: usize) -> Self {
        Var::Arc { from, to, vehicle }
    }

    pub fn vehicle(&self) -> usize {
        match *self {
            Var::Serve { vehicle, .. } | Var::Arc { vehicle, .. } => vehicle,
        }
    }

    /// Branching class: serve variables come first.
    pub fn priority_class(&self) -> u8 {
        match self {
            Var::Serve { .. } => 0,
            Var::Arc { .. } => 1,
        }
    }

    /// Canonical order: kind, then vehicle, then index.
    pub fn sort_key(&self) -> (u8, usize, usize, usize) {
        match *self {
            Var::Serve { customer, vehicle } => (0, vehicle, customer, 0),
            Var::Arc { from, to, vehicle } => (1, vehicle, from, to),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Var::Serve { customer, vehicle } => write!(f, "y{customer}@{vehicle}"),
            Var::Arc { from, to, vehicle } => write!(f, "x{from}-{to}@{vehicle}"),
        }
    }
}

impl FromStr for Var {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let bad = || format!("bad variable `{s}`");
        let (body, vehicle) = s.rsplit_once('@').ok_or_else(bad)?;
        let vehicle: usize = vehicle.parse().map_err(|_| bad())?;
        if let Some(c) = body.strip_prefix('y') {
            let customer = c.parse().map_err(|_| bad())?;
            Ok(Var::serve(customer, vehicle))
        } else if let Some(arc) = body.strip_prefix('x') {
            let (from, to) = arc.split_once('-').ok_or_else(bad)?;
            Ok(Var::arc(
                from.parse().map_err(|_| bad())?,
                to.parse().map_err(|_| bad())?,
                vehicle,
            ))
        } else {
            Err(bad())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

impl FromStr for Sense {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "<=" => Ok(Sense::Le),
            ">=" => Ok(Sense::Ge),
            "=" => Ok(Sense::Eq),
            _ => Err(format!("bad sense `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CutKind {
    Base,
    Gsec,
    GsecGamma,
    Symmetry,
    Inaccessible,
    ProfitUB,
    ProfitLB,
    CountUB,
    CountLB,
    Mandatory,
    Clique,
    IndepSet,
    ForcePair,
}

impl CutKind {
    pub const ALL: [CutKind; 13] = [
        CutKind::Base,
        CutKind::Gsec,
        CutKind::GsecGamma,
        CutKind::Symmetry,
        CutKind::Inaccessible,
        CutKind::ProfitUB,
        CutKind::ProfitLB,
        CutKind::CountUB,
        CutKind::CountLB,
        CutKind::Mandatory,
        CutKind::Clique,
        CutKind::IndepSet,
        CutKind::ForcePair,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CutKind::Base => "base",
            CutKind::Gsec => "gsec",
            CutKind::GsecGamma => "gsec_gamma",
            CutKind::Symmetry => "symmetry",
            CutKind::Inaccessible => "inaccessible",
            CutKind::ProfitUB => "profit_ub",
            CutKind::ProfitLB => "profit_lb",
            CutKind::CountUB => "count_ub",
            CutKind::CountLB => "count_lb",
            CutKind::Mandatory => "mandatory",
            CutKind::Clique => "clique",
            CutKind::IndepSet => "indep_set",
            CutKind::ForcePair => "force_pair",
        }
    }
}

impl fmt::Display for CutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CutKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        CutKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown cut kind `{s}`"))
    }
}

/// A linear constraint over model variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub kind: CutKind,
}

impl LinearRow {
    /// Merges repeated variables and drops zero coefficients.
    pub fn new(kind: CutKind, terms: impl IntoIterator<Item = (Var, f64)>, sense: Sense, rhs: f64) -> Self {
        let mut merged: Vec<(Var, f64)> = Vec::new();
        let mut seen: HashMap<Var, usize> = HashMap::new();
        for (v, c) in terms {
            match seen.get(&v) {
                Some(&k) => merged[k].1 += c,
                None => {
                    seen.insert(v, merged.len());
                    merged.push((v, c));
                }
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        Self {
            terms: merged,
            sense,
            rhs,
            kind,
        }
    }

    pub fn activity(&self, value: impl Fn(Var) -> f64) -> f64 {
        self.terms.iter().map(|&(v, c)| c * value(v)).sum()
    }

    /// Amount by which the row is violated (zero when satisfied).
    pub fn violation(&self, value: impl Fn(Var) -> f64) -> f64 {
        let lhs = self.activity(value);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }

    pub fn is_satisfied(&self, value: impl Fn(Var) -> f64) -> bool {
        self.violation(value) <= 1e-6
    }

    pub fn vehicles(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.iter().map(|(v, _)| v.vehicle())
    }

    /// Row restricted to the variables accepted by `keep`; dropped variables
    /// are taken to be zero.
    pub fn project(&self, keep: impl Fn(&Var) -> bool) -> LinearRow {
        LinearRow {
            terms: self.terms.iter().filter(|(v, _)| keep(v)).copied().collect(),
            sense: self.sense,
            rhs: self.rhs,
            kind: self.kind,
        }
    }

    /// True when the row holds for every assignment (no terms, satisfied rhs).
    pub fn is_vacuous(&self) -> bool {
        self.terms.is_empty()
            && match self.sense {
                Sense::Le => self.rhs >= -1e-9,
                Sense::Ge => self.rhs <= 1e-9,
                Sense::Eq => self.rhs.abs() <= 1e-9,
            }
    }

    /// One line: `kind sense rhs coef:var ...`.
    pub fn to_line(&self) -> String {
        let mut out = format!("{} {} {}", self.kind, self.sense.as_str(), self.rhs);
        for (v, c) in &self.terms {
            out.push_str(&format!(" {c}:{v}"));
        }
        out
    }

    pub fn from_line(line: &str) -> std::result::Result<Self, String> {
        let mut tok = line.split_whitespace();
        let kind: CutKind = tok.next().ok_or("empty row line")?.parse()?;
        let sense: Sense = tok.next().ok_or("missing sense")?.parse()?;
        let rhs_raw = tok.next().ok_or("missing rhs")?;
        let rhs: f64 = rhs_raw.parse().map_err(|_| format!("bad rhs `{rhs_raw}`"))?;
        let mut terms = Vec::new();
        for t in tok {
            let (c, v) = t.split_once(':').ok_or_else(|| format!("bad term `{t}`"))?;
            let c: f64 = c.parse().map_err(|_| format!("bad coefficient `{c}`"))?;
            terms.push((v.parse()?, c));
        }
        Ok(LinearRow {
            terms,
            sense,
            rhs,
            kind,
        })
    }
}

/// Serializes rows, one per line.
pub fn write_pool(rows: &[LinearRow]) -> String {
    rows.iter().map(|r| r.to_line() + "\n").collect()
}

pub fn read_pool(text: &str) -> std::result::Result<Vec<LinearRow>, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(LinearRow::from_line)
        .collect()
}

/// 0/1 values for every model variable, indexed like [`MipModel::vars`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment(pub Vec<bool>);

impl Assignment {
    pub fn get(&self, idx: usize) -> bool {
        self.0[idx]
    }
}

/// Sparse row over variable indices, the form consumed by backends.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedRow {
    pub idx: Vec<usize>,
    pub coef: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
    pub kind: CutKind,
}

impl IndexedRow {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.coef).map(|(&j, &c)| c * x[j]).sum()
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

type RowKey = (Vec<(usize, u64)>, u8, u64);

/// The formulation: variables, objective (maximized) and rows.
#[derive(Debug, Clone)]
pub struct MipModel {
    instance: Arc<Instance>,
    fleet: usize,
    customers: Vec<usize>,
    arcs: Vec<(usize, usize)>,
    vars: Vec<Var>,
    index: HashMap<Var, usize>,
    objective: Vec<f64>,
    rows: Vec<LinearRow>,
    keys: HashMap<RowKey, usize>,
}

impl MipModel {
    /// Objective and base rows over the components accepted by `mask`, for
    /// the instance's own fleet.
    pub fn build_base(inst: Arc<Instance>, mask: &AccessibilityMask) -> Result<Self> {
        let (d, a) = (inst.depart(), inst.arrive());
        if inst.cost(d, a) > inst.length_limit() + crate::instance::COST_TOL {
            return Err(Error::Infeasible(format!(
                "depot distance {:.4} exceeds the length limit {}",
                inst.cost(d, a),
                inst.length_limit()
            )));
        }
        let fleet = inst.fleet_size();
        let customers = mask.customers();
        let arcs = mask.arcs();
        let mut vars = Vec::with_capacity(fleet * (customers.len() + arcs.len()));
        for r in 0..fleet {
            vars.extend(customers.iter().map(|&i| Var::serve(i, r)));
        }
        for r in 0..fleet {
            vars.extend(arcs.iter().map(|&(i, j)| Var::arc(i, j, r)));
        }
        let index: HashMap<Var, usize> = vars.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let objective = vars
            .iter()
            .map(|v| match *v {
                Var::Serve { customer, .. } => inst.profit(customer) as f64,
                Var::Arc { .. } => 0.0,
            })
            .collect();
        let mut model = Self {
            instance: inst,
            fleet,
            customers,
            arcs,
            vars,
            index,
            objective,
            rows: Vec::new(),
            keys: HashMap::new(),
        };
        model.add_base_rows();
        Ok(model)
    }

    fn add_base_rows(&mut self) {
        let inst = Arc::clone(&self.instance);
        let (d, a) = (inst.depart(), inst.arrive());
        let mut out_arcs: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut in_arcs: HashMap<usize, Vec<usize>> = HashMap::new();
        for &(i, j) in &self.arcs {
            out_arcs.entry(i).or_default().push(j);
            in_arcs.entry(j).or_default().push(i);
        }
        let customers = self.customers.clone();
        let mut rows = Vec::new();
        for &i in &customers {
            rows.push(LinearRow::new(
                CutKind::Base,
                (0..self.fleet).map(|r| (Var::serve(i, r), 1.0)),
                Sense::Le,
                1.0,
            ));
        }
        let empty = Vec::new();
        for r in 0..self.fleet {
            let outs = out_arcs.get(&d).unwrap_or(&empty);
            rows.push(LinearRow::new(
                CutKind::Base,
                outs.iter().map(|&j| (Var::arc(d, j, r), 1.0)),
                Sense::Eq,
                1.0,
            ));
            let ins = in_arcs.get(&a).unwrap_or(&empty);
            rows.push(LinearRow::new(
                CutKind::Base,
                ins.iter().map(|&i| (Var::arc(i, a, r), 1.0)),
                Sense::Eq,
                1.0,
            ));
            for &k in &customers {
                let outs = out_arcs.get(&k).unwrap_or(&empty);
                rows.push(LinearRow::new(
                    CutKind::Base,
                    outs.iter()
                        .map(|&j| (Var::arc(k, j, r), 1.0))
                        .chain(std::iter::once((Var::serve(k, r), -1.0))),
                    Sense::Eq,
                    0.0,
                ));
                let ins = in_arcs.get(&k).unwrap_or(&empty);
                rows.push(LinearRow::new(
                    CutKind::Base,
                    ins.iter()
                        .map(|&j| (Var::arc(j, k, r), 1.0))
                        .chain(std::iter::once((Var::serve(k, r), -1.0))),
                    Sense::Eq,
                    0.0,
                ));
            }
            rows.push(LinearRow::new(
                CutKind::Base,
                self.arcs
                    .iter()
                    .map(|&(i, j)| (Var::arc(i, j, r), inst.cost(i, j))),
                Sense::Le,
                inst.length_limit(),
            ));
        }
        for row in rows {
            self.push_unchecked(row);
        }
    }

    /// Tour profits are non-increasing in the vehicle index.
    pub fn add_symmetry_rows(&mut self) -> Vec<usize> {
        let mut ids = Vec::new();
        for r in 0..self.fleet.saturating_sub(1) {
            let terms: Vec<(Var, f64)> = self
                .customers
                .iter()
                .flat_map(|&i| {
                    let p = self.instance.profit(i) as f64;
                    [(Var::serve(i, r + 1), p), (Var::serve(i, r), -p)]
                })
                .collect();
            let row = LinearRow::new(CutKind::Symmetry, terms, Sense::Le, 0.0);
            if let Ok(id) = self.add_row(row) {
                ids.push(id);
            }
        }
        ids
    }

    /// Zero-fixing rows for components the model carries but `mask` rejects.
    pub fn pin_inaccessible(&mut self, mask: &AccessibilityMask) -> Vec<usize> {
        let mut rows = Vec::new();
        for &i in &self.customers {
            if !mask.is_customer_accessible(i) {
                rows.push(LinearRow::new(
                    CutKind::Inaccessible,
                    (0..self.fleet).map(|r| (Var::serve(i, r), 1.0)),
                    Sense::Eq,
                    0.0,
                ));
            }
        }
        for &(i, j) in &self.arcs {
            if !mask.is_arc_accessible(i, j) {
                rows.push(LinearRow::new(
                    CutKind::Inaccessible,
                    (0..self.fleet).map(|r| (Var::arc(i, j, r), 1.0)),
                    Sense::Eq,
                    0.0,
                ));
            }
        }
        rows.into_iter().filter_map(|row| self.add_row(row).ok()).collect()
    }

    /// Appends a row and returns its id; a row identical (in canonical form)
    /// to an existing one returns the existing id instead.
    pub fn add_row(&mut self, row: LinearRow) -> Result<usize> {
        for (v, c) in &row.terms {
            if !self.index.contains_key(v) {
                return Err(Error::UnknownVar(*v));
            }
            if !c.is_finite() {
                return Err(Error::Contract(format!("non-finite coefficient on {v}")));
            }
        }
        if row.terms.is_empty() {
            debug!("vacuous {} row added (rhs {})", row.kind, row.rhs);
        }
        Ok(self.push_unchecked(row))
    }

    fn push_unchecked(&mut self, row: LinearRow) -> usize {
        let row = LinearRow::new(row.kind, row.terms, row.sense, row.rhs);
        let key = self.canonical_key(&row);
        if let Some(&id) = self.keys.get(&key) {
            return id;
        }
        let id = self.rows.len();
        self.rows.push(row);
        self.keys.insert(key, id);
        id
    }

    fn canonical_key(&self, row: &LinearRow) -> RowKey {
        let mut terms: Vec<(usize, f64)> = row
            .terms
            .iter()
            .map(|(v, c)| (self.index[v], *c))
            .collect();
        terms.sort_by_key(|&(k, _)| self.vars[k].sort_key());
        let mut rhs = row.rhs;
        let integral = rhs.fract() == 0.0 && terms.iter().all(|(_, c)| c.fract() == 0.0);
        if integral && !terms.is_empty() {
            let g = terms
                .iter()
                .fold(rhs.abs() as u64, |g, &(_, c)| gcd(g, c.abs() as u64));
            if g > 1 {
                let g = g as f64;
                for t in &mut terms {
                    t.1 /= g;
                }
                rhs /= g;
            }
        }
        let sense = match row.sense {
            Sense::Le => 0,
            Sense::Ge => 1,
            Sense::Eq => 2,
        };
        (
            terms.into_iter().map(|(k, c)| (k, (c + 0.0).to_bits())).collect(),
            sense,
            (rhs + 0.0).to_bits(),
        )
    }

    pub fn instance(&self) -> &Arc<Instance> {
        &self.instance
    }

    pub fn fleet(&self) -> usize {
        self.fleet
    }

    pub fn customers(&self) -> &[usize] {
        &self.customers
    }

    pub fn arcs(&self) -> &[(usize, usize)] {
        &self.arcs
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn var_index(&self, v: &Var) -> Option<usize> {
        self.index.get(v).copied()
    }

    pub fn has_var(&self, v: &Var) -> bool {
        self.index.contains_key(v)
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// Replaces the objective; `coef` is evaluated for every variable.
    pub fn set_objective(&mut self, coef: impl Fn(&Var) -> f64) {
        self.objective = self.vars.iter().map(coef).collect();
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows_of_kind(&self, kind: CutKind) -> impl Iterator<Item = &LinearRow> {
        self.rows.iter().filter(move |r| r.kind == kind)
    }

    pub fn index_row(&self, row: &LinearRow) -> Result<IndexedRow> {
        let mut idx = Vec::with_capacity(row.terms.len());
        let mut coef = Vec::with_capacity(row.terms.len());
        for (v, c) in &row.terms {
            idx.push(self.var_index(v).ok_or(Error::UnknownVar(*v))?);
            coef.push(*c);
        }
        Ok(IndexedRow {
            idx,
            coef,
            sense: row.sense,
            rhs: row.rhs,
            kind: row.kind,
        })
    }

    pub fn value_of(&self, assignment: &Assignment, v: Var) -> f64 {
        match self.index.get(&v) {
            Some(&k) if assignment.get(k) => 1.0,
            _ => 0.0,
        }
    }

    pub fn objective_value(&self, assignment: &Assignment) -> f64 {
        self.objective
            .iter()
            .zip(&assignment.0)
            .filter(|(_, &on)| on)
            .map(|(c, _)| c)
            .sum()
    }

    /// Rows violated by the assignment.
    pub fn violated_rows(&self, assignment: &Assignment) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&k| !self.rows[k].is_satisfied(|v| self.value_of(assignment, v)))
            .collect()
    }

    /// Assignment for tours given as full vertex paths `d ... a`, one per
    /// vehicle (missing vehicles run empty). Components unknown to the model
    /// make the conversion fail.
    pub fn assignment_from_tours(&self, tours: &[Vec<usize>]) -> Result<Assignment> {
        let (d, a) = (self.instance.depart(), self.instance.arrive());
        let mut values = vec![false; self.vars.len()];
        for r in 0..self.fleet {
            let empty = vec![d, a];
            let path = tours.get(r).unwrap_or(&empty);
            for w in path.windows(2) {
                let v = Var::arc(w[0], w[1], r);
                values[self.var_index(&v).ok_or(Error::UnknownVar(v))?] = true;
            }
            for &c in &path[1..path.len() - 1] {
                let v = Var::serve(c, r);
                values[self.var_index(&v).ok_or(Error::UnknownVar(v))?] = true;
            }
        }
        Ok(Assignment(values))
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{accessibility, Instance};

    fn tiny(m: usize) -> Arc<Instance> {
        Arc::new(
            Instance::new(&[(0.0, 0.0, 0), (1.0, 1.0, 5), (2.0, -1.0, 7), (3.0, 0.0, 0)], m, 10.0)
                .unwrap(),
        )
    }

    #[test]
    fn variable_count_matches_accessible_components() {
        let inst = tiny(1);
        let mask = accessibility(&inst);
        let model = MipModel::build_base(inst.clone(), &mask).unwrap();
        assert_eq!(model.num_vars(), 2 + mask.num_arcs());
        let inst = tiny(3);
        let model = MipModel::build_base(inst.clone(), &mask).unwrap();
        assert_eq!(model.num_vars(), 3 * (mask.num_customers() + mask.num_arcs()));
    }

    #[test]
    fn unreachable_depot_is_infeasible() {
        let inst = Arc::new(Instance::new(&[(0.0, 0.0, 0), (5.0, 0.0, 0)], 1, 4.0).unwrap());
        let mask = accessibility(&inst);
        assert!(matches!(
            MipModel::build_base(inst, &mask),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn symmetry_rows_count() {
        let mask = accessibility(&tiny(3));
        let mut model = MipModel::build_base(tiny(3), &mask).unwrap();
        assert_eq!(model.add_symmetry_rows().len(), 2);
        let mut model = MipModel::build_base(tiny(1), &mask).unwrap();
        assert!(model.add_symmetry_rows().is_empty());
    }

    #[test]
    fn symmetry_flags_increasing_profits() {
        let inst = tiny(2);
        let mask = accessibility(&inst);
        let mut model = MipModel::build_base(inst, &mask).unwrap();
        model.add_symmetry_rows();
        // Tour 0 collects 5, tour 1 collects 7: the second tour is richer.
        let bad = model
            .assignment_from_tours(&[vec![0, 1, 3], vec![0, 2, 3]])
            .unwrap();
        assert!(model
            .violated_rows(&bad)
            .iter()
            .any(|&k| model.rows()[k].kind == CutKind::Symmetry));
        let good = model
            .assignment_from_tours(&[vec![0, 2, 3], vec![0, 1, 3]])
            .unwrap();
        assert!(model.violated_rows(&good).is_empty());
    }

    #[test]
    fn pin_rows_for_rejected_components() {
        // Customer 2 sits far away: inaccessible, along with its arcs.
        let inst = Arc::new(
            Instance::new(&[(0.0, 0.0, 0), (1.0, 0.0, 5), (0.0, 9.0, 7), (2.0, 0.0, 0)], 1, 4.0)
                .unwrap(),
        );
        let mask = accessibility(&inst);
        let full = AccessibilityMask::unrestricted(&inst);
        let mut model = MipModel::build_base(inst.clone(), &full).unwrap();
        let before = model.num_rows();
        let pinned = model.pin_inaccessible(&mask);
        let rejected_arcs = full.num_arcs() - mask.num_arcs();
        assert_eq!(pinned.len(), 1 + rejected_arcs);
        assert_eq!(model.num_rows(), before + pinned.len());
        let serve_far = model
            .assignment_from_tours(&[vec![0, 2, 3]])
            .unwrap();
        assert!(!model.violated_rows(&serve_far).is_empty());

        let mut clean = MipModel::build_base(inst, &full).unwrap();
        assert!(clean.pin_inaccessible(&full).is_empty());
    }

    #[test]
    fn duplicate_rows_coalesce() {
        let mask = accessibility(&tiny(1));
        let mut model = MipModel::build_base(tiny(1), &mask).unwrap();
        let row = LinearRow::new(
            CutKind::Gsec,
            [(Var::arc(1, 2, 0), 1.0), (Var::arc(2, 1, 0), 1.0)],
            Sense::Le,
            1.0,
        );
        let first = model.add_row(row.clone()).unwrap();
        assert_eq!(model.add_row(row).unwrap(), first);
        // Scaled copy normalizes to the same canonical form.
        let scaled = LinearRow::new(
            CutKind::Gsec,
            [(Var::arc(2, 1, 0), 2.0), (Var::arc(1, 2, 0), 2.0)],
            Sense::Le,
            2.0,
        );
        assert_eq!(model.add_row(scaled).unwrap(), first);
    }

    #[test]
    fn unknown_variable_rejected() {
        let mask = accessibility(&tiny(1));
        let mut model = MipModel::build_base(tiny(1), &mask).unwrap();
        let row = LinearRow::new(CutKind::Gsec, [(Var::arc(1, 2, 5), 1.0)], Sense::Le, 1.0);
        assert!(matches!(model.add_row(row), Err(Error::UnknownVar(_))));
    }

    #[test]
    fn empty_row_accepted_as_vacuous() {
        let mask = accessibility(&tiny(1));
        let mut model = MipModel::build_base(tiny(1), &mask).unwrap();
        let row = LinearRow::new(CutKind::Clique, [], Sense::Le, 1.0);
        assert!(row.is_vacuous());
        assert!(model.add_row(row).is_ok());
    }

    #[test]
    fn pool_line_format() {
        let row = LinearRow::new(
            CutKind::GsecGamma,
            [(Var::arc(3, 4, 1), 1.0), (Var::serve(3, 1), -1.0)],
            Sense::Le,
            0.0,
        );
        assert_eq!(row.to_line(), "gsec_gamma <= 0 1:x3-4@1 -1:y3@1");
        assert_eq!(LinearRow::from_line(&row.to_line()).unwrap(), row);
        assert!(LinearRow::from_line("bogus <= 1").is_err());
    }
}
