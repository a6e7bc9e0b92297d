mod common;

use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topcut::engine::{Scope, SolveReport};
use topcut::incompat::{alpha_bounds, init_graphs, IncompatGraph, Node};
use topcut::instance::AccessibilityMask;
use topcut::oracle::{enumerate_feasible, solve_exact, OracleResult};
use topcut::primal::validate;
use topcut::report::gap;
use topcut::{accessibility, solve, Component, CutKind, EngineConfig, Instance, LinearRow, MipModel, Solution};

const FEASIBLE_LIMIT: usize = 200_000;

// Several checks run against wall-clock limits, so they take turns.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

// Written straight to stdout so the lines show up without --nocapture.
fn verdict(name: &str, ok: bool, detail: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn holds(row: &LinearRow, sol: &Solution) -> bool {
    row.is_satisfied(|v| sol.var_value(v))
}

fn profits_non_increasing(inst: &Instance, sol: &Solution) -> bool {
    sol.tour_profits(inst).windows(2).all(|w| w[0] >= w[1])
}

struct Run {
    inst: Instance,
    exact: OracleResult,
    report: SolveReport,
}

fn run_suite(count: u64, config: impl Fn(u64) -> EngineConfig) -> Vec<Run> {
    (0..count)
        .map(|seed| {
            let inst = common::tiny(seed);
            let exact = solve_exact(&inst).unwrap();
            let report = solve(inst.clone(), config(seed)).unwrap();
            Run { inst, exact, report }
        })
        .collect()
}

#[test]
fn oracle_equivalence_symmetry_and_mandatory() {
    let _turn = serial();
    let started = Instant::now();
    let runs = run_suite(200, |_| EngineConfig::default());
    let elapsed = started.elapsed();

    let mut mismatches = Vec::new();
    let mut unordered = 0;
    let mut false_mandatory = Vec::new();
    let mut certified = 0;
    for (seed, run) in runs.iter().enumerate() {
        let r = &run.report;
        let valid = validate(&run.inst, &r.solution).is_ok();
        if !(r.optimal && valid && r.upper_bound == run.exact.optimum && r.solution.profit == run.exact.optimum) {
            mismatches.push(seed);
        }
        if !profits_non_increasing(&run.inst, &r.solution) {
            unordered += 1;
        }
        let always = run.exact.always_served();
        certified += r.mandatory.len();
        for &i in &r.mandatory {
            if !always.contains(&i) {
                false_mandatory.push((seed, i));
            }
        }
    }
    let equiv = mismatches.is_empty() && elapsed <= Duration::from_secs(15 * 60);
    verdict(
        "oracle equivalence",
        equiv,
        format!("{} of 200 match the oracle in {:.1}s; mismatched seeds {mismatches:?}", 200 - mismatches.len(), elapsed.as_secs_f64()),
    );

    let inst = Instance::new(&[(0.0, 0.0, 0), (1.0, 1.0, 4), (2.0, -1.0, 7), (3.0, 0.5, 5), (4.0, 0.0, 0)], 2, 5.0).unwrap();
    let want = solve_exact(&inst).unwrap().optimum;
    let ablated = solve(inst.clone(), EngineConfig::default().disable(Component::Symmetry)).unwrap();
    let full = solve(inst.clone(), EngineConfig::default()).unwrap();
    let sym_ok = unordered == 0
        && ablated.optimal
        && ablated.upper_bound == want
        && full.upper_bound == want
        && profits_non_increasing(&inst, &ablated.solution);
    verdict(
        "symmetry",
        sym_ok,
        format!(
            "{unordered} unordered solutions in the suite; 3-customer ablation {} vs oracle {want}",
            ablated.upper_bound
        ),
    );

    verdict(
        "mandatory soundness",
        false_mandatory.is_empty(),
        format!("{certified} certificates, false ones {false_mandatory:?}"),
    );

    assert!(equiv);
    assert!(sym_ok);
    assert!(false_mandatory.is_empty());
}

fn feasible_families(kind: CutKind) -> bool {
    matches!(
        kind,
        CutKind::Gsec | CutKind::GsecGamma | CutKind::Inaccessible | CutKind::ProfitUB | CutKind::CountUB | CutKind::Clique | CutKind::IndepSet
    )
}

#[test]
fn cut_validity() {
    let _turn = serial();
    let mut checked = 0usize;
    let mut checked_feasible = 0usize;
    let mut violations = Vec::new();
    let mut kinds = std::collections::BTreeSet::new();
    for seed in 0..100u64 {
        let inst = common::tiny(seed + 1000);
        let exact = solve_exact(&inst).unwrap();
        let config = EngineConfig { pin_inaccessible: seed % 2 == 0, ..EngineConfig::default() };
        let report = solve(inst.clone(), config).unwrap();
        let everything = enumerate_feasible(&inst, &AccessibilityMask::unrestricted(&inst), FEASIBLE_LIMIT).ok();

        let mut rows: Vec<(LinearRow, Scope)> = report.ledger.pool().iter().map(|s| (s.row.clone(), s.scope)).collect();
        let mut model = MipModel::build_base(Arc::new(inst.clone()), &AccessibilityMask::unrestricted(&inst)).unwrap();
        let ids = model.add_symmetry_rows();
        rows.extend(ids.into_iter().map(|k| (model.rows()[k].clone(), Scope::Optimal)));

        for (row, scope) in &rows {
            checked += 1;
            kinds.insert(row.kind);
            if !exact.optimal_solutions.iter().any(|s| holds(row, s)) {
                violations.push(format!("seed {seed}: {} cuts off every optimum", row.to_line()));
            }
            if *scope == Scope::Feasible && feasible_families(row.kind) {
                if let Some(all) = &everything {
                    checked_feasible += 1;
                    if let Some(bad) = all.iter().find(|s| !holds(row, s)) {
                        violations.push(format!("seed {seed}: {} cuts off feasible {:?}", row.to_line(), bad.tours));
                    }
                }
            }
        }
    }
    verdict(
        "cut validity",
        violations.is_empty(),
        format!(
            "{checked} rows ({checked_feasible} against every feasible solution), kinds {:?}, {} violations {:?}",
            kinds,
            violations.len(),
            violations.iter().take(5).collect::<Vec<_>>()
        ),
    );
    assert!(violations.is_empty());
}

/// Tight clusters of customers on a circle around the depot: each cluster
/// is reachable on its own but a tour cannot visit two of them, so the
/// relaxation closes cheap cycles inside the clusters it cannot reach.
fn clusters(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(3..=4);
    let radius = rng.gen_range(3.0..5.0);
    let mut pts = vec![(0.0, 0.0, 0)];
    for c in 0..k {
        let t = c as f64 / k as f64 * std::f64::consts::TAU;
        let (cx, cy) = (radius * t.cos(), radius * t.sin());
        for _ in 0..rng.gen_range(2..=3) {
            pts.push((cx + rng.gen_range(-0.1..0.1), cy + rng.gen_range(-0.1..0.1), rng.gen_range(1..=10)));
        }
    }
    pts.push((0.0, 0.0, 0));
    Instance::new(&pts, rng.gen_range(1..=2), 2.0 * radius + 0.8).unwrap()
}

#[test]
fn gsec_convergence() {
    let _turn = serial();
    let mut failures = Vec::new();
    let mut iters = Vec::new();
    for seed in 0..10u64 {
        let inst = clusters(seed);
        let report = solve(inst.clone(), EngineConfig::default()).unwrap();
        let first = report.iterations.first().map_or(0, |it| it.subtours);
        let exact = solve_exact(&inst).unwrap().optimum;
        iters.push(report.iterations.len());
        let ok = first > 0
            && report.iterations.len() <= 10
            && report.optimal
            && validate(&inst, &report.solution).is_ok()
            && report.upper_bound == exact;
        if !ok {
            failures.push((seed, first, report.iterations.len(), report.upper_bound, exact));
        }
    }
    verdict(
        "GSEC convergence",
        failures.is_empty(),
        format!("iterations {iters:?}; failures (seed, first-iterate subtours, iterations, bound, oracle) {failures:?}"),
    );
    assert!(failures.is_empty());
}

fn brute_min_len_customers(inst: &Instance, i: usize, j: usize) -> f64 {
    let (d, a) = (inst.depart(), inst.arrive());
    let one = inst.cost(d, i) + inst.cost(i, j) + inst.cost(j, a);
    let two = inst.cost(d, j) + inst.cost(j, i) + inst.cost(i, a);
    one.min(two)
}

/// Shortest simple d-a path containing both arcs, by trying both orders
/// and every way of sharing an endpoint.
fn brute_min_len_arcs(inst: &Instance, p: (usize, usize), q: (usize, usize)) -> f64 {
    let (d, a) = (inst.depart(), inst.arrive());
    let mut best = f64::INFINITY;
    for (first, second) in [(p, q), (q, p)] {
        let path: Vec<usize> = if first.1 == second.0 {
            vec![d, first.0, first.1, second.1, a]
        } else {
            vec![d, first.0, first.1, second.0, second.1, a]
        };
        let path: Vec<usize> = path.iter().enumerate().filter(|&(k, &v)| k == 0 || path[k - 1] != v).map(|(_, &v)| v).collect();
        let mut seen = std::collections::HashSet::new();
        if !path.iter().all(|v| seen.insert(*v)) || path[0] != d || *path.last().unwrap() != a {
            continue;
        }
        let contains = |arc: (usize, usize)| path.windows(2).any(|w| w[0] == arc.0 && w[1] == arc.1);
        if !contains(p) || !contains(q) {
            continue;
        }
        best = best.min(path.windows(2).map(|w| inst.cost(w[0], w[1])).sum());
    }
    best
}

#[test]
fn incompatibility_initialization() {
    let _turn = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut checked, mut edges, mut mismatches) = (0, 0, Vec::new());
    let mut k = 0u64;
    while checked < 1000 {
        k += 1;
        let inst = common::random_instance(k, rng.gen_range(3..=10), rng.gen_range(1..=3));
        let mask = accessibility(&inst);
        let (gc, ga) = init_graphs(&inst, &mask);
        let limit = inst.length_limit() + 1e-6;
        for _ in 0..25 {
            let g = if rng.gen_bool(0.5) { &gc } else { &ga };
            if g.num_nodes() < 2 {
                continue;
            }
            let x = rng.gen_range(0..g.num_nodes());
            let mut y = rng.gen_range(0..g.num_nodes() - 1);
            if y >= x {
                y += 1;
            }
            let expected = match (g.node(x), g.node(y)) {
                (Node::Customer(i), Node::Customer(j)) => brute_min_len_customers(&inst, i, j) > limit,
                (Node::Arc(u, v), Node::Arc(w, s)) => brute_min_len_arcs(&inst, (u, v), (w, s)) > limit,
                _ => unreachable!("mixed graph"),
            };
            checked += 1;
            edges += expected as usize;
            if g.has_edge(x, y) != expected {
                mismatches.push((k, g.node(x), g.node(y)));
            }
        }
    }
    verdict(
        "incompatibility initialization",
        mismatches.is_empty(),
        format!("{checked} pairs over {k} instances, {edges} edges, mismatches {:?}", mismatches.iter().take(5).collect::<Vec<_>>()),
    );
    assert!(mismatches.is_empty());
}

fn max_independent(g: &IncompatGraph, set: &[usize]) -> usize {
    let n = set.len();
    (0u32..1 << n)
        .filter(|mask| {
            (0..n).all(|a| mask & (1 << a) == 0 || (a + 1..n).all(|b| mask & (1 << b) == 0 || !g.has_edge(set[a], set[b])))
        })
        .map(|mask| mask.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

#[test]
fn alpha_bound_validity() {
    let _turn = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut checked, mut failures) = (0, Vec::new());
    for k in 0..100 {
        let p = [0.2, 0.5, 0.8][k % 3];
        let n = rng.gen_range(2..=15);
        let mut g = IncompatGraph::with_order(n);
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(p) {
                    g.add_edge(a, b);
                }
            }
        }
        let bounds = alpha_bounds(&g);
        for v in 0..n {
            let nbrs: Vec<usize> = g.neighbors(v).collect();
            let exact = max_independent(&g, &nbrs);
            let alpha = bounds.iter().find(|b| b.node == v).map_or(0, |b| b.alpha);
            checked += 1;
            if alpha < exact {
                failures.push((k, v, alpha, exact));
            }
        }
    }
    verdict(
        "alpha-bound validity",
        failures.is_empty(),
        format!("{checked} neighborhoods over 100 graphs, failures {failures:?}"),
    );
    assert!(failures.is_empty());
}

#[test]
fn benchmark_smoke() {
    let _turn = serial();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/chao");
    let mut files: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    let mut parse_errors = Vec::new();
    let mut failures = Vec::new();
    let mut solved = 0;
    let mut slowest = 0.0f64;
    for path in &files {
        let inst = match Instance::load(path) {
            Ok(i) => i,
            Err(e) => {
                parse_errors.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        if inst.benchmark_name().is_none_or(|b| b.set != 2) {
            continue;
        }
        let config = EngineConfig { time_limit: Some(Duration::from_secs(600)), ..EngineConfig::default() };
        let report = solve(inst.clone(), config).unwrap();
        slowest = slowest.max(report.elapsed.as_secs_f64());
        let ok = report.optimal
            && report.upper_bound == report.lower_bound
            && validate(&inst, &report.solution).is_ok()
            && report.solution.profit == report.lower_bound
            && report.elapsed <= Duration::from_secs(600);
        if ok {
            solved += 1;
        } else {
            failures.push(format!("{} ub {} lb {}", inst.name.clone().unwrap_or_default(), report.upper_bound, report.lower_bound));
        }
    }
    let ok = parse_errors.is_empty() && failures.is_empty() && solved > 0;
    verdict(
        "benchmark smoke",
        ok,
        format!(
            "{} files parsed, {solved} set-2 instances closed, slowest {slowest:.1}s; parse errors {parse_errors:?}; open {failures:?}",
            files.len() - parse_errors.len()
        ),
    );
    assert!(ok);
}

#[test]
fn gap_formula() {
    let _turn = serial();
    let cases = [((100, 90), 10.0), ((50, 50), 0.0), ((1, 0), 100.0)];
    let ok = cases.iter().all(|&((ub, lb), want)| (gap(ub, lb) - want).abs() < 1e-12);
    verdict("gap formula", ok, format!("{:?}", cases.map(|((ub, lb), _)| gap(ub, lb))));
    assert!(ok);
}
