//! Incompatibility graphs over customers and over arcs, greedy maximal
//! cliques, clique-partition bounds on neighborhood independence numbers,
//! and the cuts derived from them.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fixedbitset::FixedBitSet;
use sha2::{Digest, Sha256};

use crate::instance::{min_len_arcs, min_len_customers, AccessibilityMask, Instance, COST_TOL};
use crate::model::{CutKind, LinearRow, Sense, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Customer(usize),
    Arc(usize, usize),
}

impl Node {
    /// The variable standing for this node on vehicle `r`.
    pub fn var(&self, r: usize) -> Var {
        match *self {
            Node::Customer(i) => Var::serve(i, r),
            Node::Arc(i, j) => Var::arc(i, j, r),
        }
    }
}

/// Undirected graph; an edge means the two nodes never share a tour in an
/// optimal solution.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompatGraph {
    nodes: Vec<Node>,
    index: HashMap<Node, usize>,
    adj: Vec<FixedBitSet>,
    num_edges: usize,
}

impl IncompatGraph {
    pub fn new(nodes: Vec<Node>) -> Self {
        let n = nodes.len();
        let index = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        Self {
            nodes,
            index,
            adj: vec![FixedBitSet::with_capacity(n); n],
            num_edges: 0,
        }
    }

    /// Plain graph on `0..n` with customer labels; handy for tests.
    pub fn with_order(n: usize) -> Self {
        Self::new((0..n).map(Node::Customer).collect())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn node(&self, k: usize) -> Node {
        self.nodes[k]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn index_of(&self, node: &Node) -> Option<usize> {
        self.index.get(node).copied()
    }

    /// Returns true when the edge is new.
    pub fn add_edge(&mut self, a: usize, b: usize) -> bool {
        if a == b || self.adj[a].contains(b) {
            return false;
        }
        self.adj[a].insert(b);
        self.adj[b].insert(a);
        self.num_edges += 1;
        true
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(b)
    }

    pub fn neighbors(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[a].ones()
    }

    pub fn degree(&self, a: usize) -> usize {
        self.adj[a].count_ones(..)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nodes.len()).flat_map(move |a| self.adj[a].ones().filter(move |&b| b > a).map(move |b| (a, b)))
    }

    pub fn is_clique(&self, set: &[usize]) -> bool {
        set.iter()
            .enumerate()
            .all(|(k, &a)| set[k + 1..].iter().all(|&b| self.has_edge(a, b)))
    }

    fn all_set(&self) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(self.nodes.len());
        s.insert_range(..);
        s
    }
}

/// Initial graphs: an edge joins two customers (or two arcs) whenever no
/// path from `d` to `a` through both fits within the length limit.
pub fn init_graphs(inst: &Instance, mask: &AccessibilityMask) -> (IncompatGraph, IncompatGraph) {
    let limit = inst.length_limit() + COST_TOL;
    let customers = mask.customers();
    let mut gc = IncompatGraph::new(customers.iter().map(|&i| Node::Customer(i)).collect());
    for a in 0..customers.len() {
        for b in a + 1..customers.len() {
            if min_len_customers(inst, customers[a], customers[b]) > limit {
                gc.add_edge(a, b);
            }
        }
    }
    let arcs = mask.arcs();
    let mut ga = IncompatGraph::new(arcs.iter().map(|&(i, j)| Node::Arc(i, j)).collect());
    for a in 0..arcs.len() {
        for b in a + 1..arcs.len() {
            if min_len_arcs(inst, arcs[a], arcs[b]) > limit {
                ga.add_edge(a, b);
            }
        }
    }
    (gc, ga)
}

/// Greedily grows a maximal clique inside `allowed` containing `start`.
/// Candidates are taken by descending degree, then (1,2)-swaps enlarge the
/// clique while any apply.
pub fn grow_clique(g: &IncompatGraph, start: &[usize], allowed: &FixedBitSet) -> Vec<usize> {
    let mut clique: Vec<usize> = start.to_vec();
    let mut cand = allowed.clone();
    for &v in &clique {
        cand.intersect_with(&g.adj[v]);
    }
    extend_greedy(g, &mut clique, &mut cand);

    // (1,2)-swap: drop one non-start member, add two adjacent nodes.
    let fixed: HashSet<usize> = start.iter().copied().collect();
    let mut improved = true;
    let mut rounds = 0;
    while improved && rounds < 8 {
        improved = false;
        rounds += 1;
        'members: for idx in 0..clique.len() {
            let v = clique[idx];
            if fixed.contains(&v) {
                continue;
            }
            let mut others = allowed.clone();
            for (k, &w) in clique.iter().enumerate() {
                if k != idx {
                    others.intersect_with(&g.adj[w]);
                }
            }
            others.set(v, false);
            let pool: Vec<usize> = others.ones().collect();
            for (p, &u) in pool.iter().enumerate() {
                for &w in &pool[p + 1..] {
                    if g.has_edge(u, w) {
                        clique.swap_remove(idx);
                        clique.push(u);
                        clique.push(w);
                        let mut cand = allowed.clone();
                        for &c in &clique {
                            cand.intersect_with(&g.adj[c]);
                        }
                        extend_greedy(g, &mut clique, &mut cand);
                        improved = true;
                        break 'members;
                    }
                }
            }
        }
    }
    clique.sort_unstable();
    clique
}

fn extend_greedy(g: &IncompatGraph, clique: &mut Vec<usize>, cand: &mut FixedBitSet) {
    for &v in clique.iter() {
        cand.set(v, false);
    }
    while let Some(best) = cand.ones().max_by_key(|&v| (g.degree(v), std::cmp::Reverse(v))) {
        clique.push(best);
        cand.intersect_with(&g.adj[best]);
        cand.set(best, false);
    }
}

/// One maximal clique per seed (every node when `seeds` is `None`),
/// deduplicated.
pub fn find_cliques(g: &IncompatGraph, seeds: Option<&[usize]>) -> Vec<Vec<usize>> {
    let all = g.all_set();
    let seeds: Vec<usize> = match seeds {
        Some(s) => s.to_vec(),
        None => (0..g.num_nodes()).collect(),
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in seeds {
        let c = grow_clique(g, &[s], &all);
        if seen.insert(c.clone()) {
            out.push(c);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphaBound {
    pub node: usize,
    pub neighbors: Vec<usize>,
    pub alpha: usize,
    /// Disjoint cliques covering `neighbors`; their count is `alpha`.
    pub partition: Vec<Vec<usize>>,
}

/// Clique partition of the subgraph induced by `set`, built by repeatedly
/// extracting a greedy clique.
pub fn clique_partition(g: &IncompatGraph, set: &[usize]) -> Vec<Vec<usize>> {
    let mut rest = FixedBitSet::with_capacity(g.num_nodes());
    for &v in set {
        rest.insert(v);
    }
    let mut parts = Vec::new();
    while let Some(start) = rest.ones().max_by_key(|&v| {
        let mut d = g.adj[v].clone();
        d.intersect_with(&rest);
        (d.count_ones(..), std::cmp::Reverse(v))
    }) {
        let mut clique = vec![start];
        let mut cand = rest.clone();
        cand.intersect_with(&g.adj[start]);
        while let Some(best) = cand.ones().max_by_key(|&v| {
            let mut d = g.adj[v].clone();
            d.intersect_with(&cand);
            (d.count_ones(..), std::cmp::Reverse(v))
        }) {
            clique.push(best);
            cand.intersect_with(&g.adj[best]);
        }
        for &v in &clique {
            rest.set(v, false);
        }
        clique.sort_unstable();
        parts.push(clique);
    }
    parts
}

pub fn alpha_bounds(g: &IncompatGraph) -> Vec<AlphaBound> {
    (0..g.num_nodes())
        .filter(|&v| g.degree(v) > 0)
        .map(|v| {
            let neighbors: Vec<usize> = g.neighbors(v).collect();
            let partition = clique_partition(g, &neighbors);
            AlphaBound {
                node: v,
                alpha: partition.len(),
                neighbors,
                partition,
            }
        })
        .collect()
}

/// `sum_{k in K} z_kr <= 1` for each clique of two or more nodes and each vehicle.
pub fn emit_clique_cuts(g: &IncompatGraph, cliques: &[Vec<usize>], fleet: usize) -> Vec<LinearRow> {
    let mut rows = Vec::new();
    for c in cliques.iter().filter(|c| c.len() >= 2) {
        for r in 0..fleet {
            rows.push(LinearRow::new(
                CutKind::Clique,
                c.iter().map(|&k| (g.node(k).var(r), 1.0)),
                Sense::Le,
                1.0,
            ));
        }
    }
    rows
}

/// `alpha z_ir + sum_{j in N_i} z_jr <= alpha` per node and vehicle; rows
/// with `alpha = |N_i|` add nothing and are skipped.
pub fn emit_indepset_cuts(g: &IncompatGraph, bounds: &[AlphaBound], fleet: usize) -> Vec<LinearRow> {
    let mut rows = Vec::new();
    for b in bounds.iter().filter(|b| b.alpha < b.neighbors.len()) {
        let alpha = b.alpha as f64;
        for r in 0..fleet {
            rows.push(LinearRow::new(
                CutKind::IndepSet,
                std::iter::once((g.node(b.node).var(r), alpha))
                    .chain(b.neighbors.iter().map(|&k| (g.node(k).var(r), 1.0))),
                Sense::Le,
                alpha,
            ));
        }
    }
    rows
}

/// Edge list, one edge per line: `c i j` for customers, `a u v w s` for arcs.
pub fn write_edge_list(g: &IncompatGraph) -> String {
    let mut out = String::new();
    for (a, b) in g.edges() {
        match (g.node(a), g.node(b)) {
            (Node::Customer(i), Node::Customer(j)) => writeln!(out, "c {i} {j}"),
            (Node::Arc(u, v), Node::Arc(w, s)) => writeln!(out, "a {u} {v} {w} {s}"),
            _ => Ok(()),
        }
        .expect("writing to a String");
    }
    out
}

/// Adds the edges listed in `text` to `g`; unknown nodes are ignored.
/// Returns the number of lines that could not be parsed.
pub fn read_edge_list(g: &mut IncompatGraph, text: &str) -> usize {
    let mut bad = 0;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let tok: Vec<&str> = line.split_whitespace().collect();
        let nums: Option<Vec<usize>> = tok[1..].iter().map(|t| t.parse().ok()).collect();
        let pair = match (tok[0], nums.as_deref()) {
            ("c", Some(&[i, j])) => Some((Node::Customer(i), Node::Customer(j))),
            ("a", Some(&[u, v, w, s])) => Some((Node::Arc(u, v), Node::Arc(w, s))),
            _ => None,
        };
        match pair {
            Some((p, q)) => {
                if let (Some(a), Some(b)) = (g.index_of(&p), g.index_of(&q)) {
                    g.add_edge(a, b);
                }
            }
            None => bad += 1,
        }
    }
    bad
}

/// Hex SHA-256 of the instance's canonical text.
pub fn instance_key(inst: &Instance) -> String {
    hex::encode(Sha256::digest(inst.to_chao().as_bytes()))
}

fn cache_path(dir: &Path, inst: &Instance) -> PathBuf {
    dir.join(format!("{}.edges", instance_key(inst)))
}

/// Initial graphs, read from `cache_dir` when a cached copy exists and
/// written there otherwise.
pub fn init_graphs_cached(
    inst: &Instance,
    mask: &AccessibilityMask,
    cache_dir: Option<&Path>,
) -> (IncompatGraph, IncompatGraph) {
    let Some(dir) = cache_dir else {
        return init_graphs(inst, mask);
    };
    let path = cache_path(dir, inst);
    if let Ok(text) = std::fs::read_to_string(&path) {
        let customers = mask.customers();
        let arcs = mask.arcs();
        let mut gc = IncompatGraph::new(customers.iter().map(|&i| Node::Customer(i)).collect());
        let mut ga = IncompatGraph::new(arcs.iter().map(|&(i, j)| Node::Arc(i, j)).collect());
        let (mut c_lines, mut a_lines) = (String::new(), String::new());
        for line in text.lines() {
            if line.starts_with('c') {
                c_lines.push_str(line);
                c_lines.push('\n');
            } else if line.starts_with('a') {
                a_lines.push_str(line);
                a_lines.push('\n');
            }
        }
        if read_edge_list(&mut gc, &c_lines) == 0 && read_edge_list(&mut ga, &a_lines) == 0 {
            log::debug!("incompatibility graphs loaded from {}", path.display());
            return (gc, ga);
        }
        log::warn!("ignoring malformed cache file {}", path.display());
    }
    let (gc, ga) = init_graphs(inst, mask);
    let text = write_edge_list(&gc) + &write_edge_list(&ga);
    if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, text)) {
        log::warn!("cannot write graph cache {}: {e}", path.display());
    }
    (gc, ga)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::accessibility;

    fn graph(n: usize, edges: &[(usize, usize)]) -> IncompatGraph {
        let mut g = IncompatGraph::with_order(n);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    fn is_maximal(g: &IncompatGraph, c: &[usize]) -> bool {
        (0..g.num_nodes())
            .filter(|v| !c.contains(v))
            .all(|v| !c.iter().all(|&u| g.has_edge(u, v)))
    }

    #[test]
    fn far_pair_is_incompatible() {
        let inst = Instance::new(
            &[(0.0, 0.0, 0), (0.0, 2.0, 1), (4.0, 2.0, 1), (4.0, 0.0, 0)],
            1,
            7.0,
        )
        .unwrap();
        assert!((min_len_customers(&inst, 1, 2) - 8.0).abs() < 1e-12);
        let (gc, _) = init_graphs(&inst, &accessibility(&inst));
        assert_eq!(gc.num_nodes(), 2);
        assert!(gc.has_edge(0, 1));
        let loose = inst.with_length_limit(100.0);
        let (gc, ga) = init_graphs(&loose, &accessibility(&loose));
        assert_eq!(gc.num_edges(), 0);
        // Arc pairs that cannot chain stay incompatible at any limit.
        assert!(ga.num_edges() > 0);
    }

    #[test]
    fn triangle_clique() {
        let g = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(find_cliques(&g, None), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn star_cliques_are_edges() {
        let g = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let cl = find_cliques(&g, None);
        assert!(cl.iter().all(|c| c.len() == 2 && c.contains(&0)));
        assert_eq!(cl.len(), 4);
    }

    #[test]
    fn five_cycle() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        for c in find_cliques(&g, None) {
            assert_eq!(c.len(), 2);
            assert!(is_maximal(&g, &c));
        }
        let hub = graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (5, 0), (5, 1), (5, 2), (5, 3), (5, 4)]);
        let b = alpha_bounds(&hub).into_iter().find(|b| b.node == 5).unwrap();
        assert_eq!(b.alpha, 3);
    }

    #[test]
    fn swap_finds_larger_clique() {
        // Seed 0 greedily picks hub 1 (high degree) but {0,2,3} is larger.
        let g = graph(
            8,
            &[(0, 1), (0, 2), (0, 3), (2, 3), (1, 4), (1, 5), (1, 6), (1, 7)],
        );
        let c = grow_clique(&g, &[0], &g.all_set());
        assert_eq!(c, vec![0, 2, 3]);
    }

    #[test]
    fn alpha_examples() {
        // Node 0 sees a triangle.
        let g = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (2, 3), (1, 3)]);
        let b = &alpha_bounds(&g)[0];
        assert_eq!((b.node, b.alpha), (0, 1));
        // Node 0 sees four isolated nodes.
        let g = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let b = &alpha_bounds(&g)[0];
        assert_eq!(b.alpha, 4);
        assert!(emit_indepset_cuts(&g, &[b.clone()], 2).is_empty());
    }

    #[test]
    fn clique_rows_per_vehicle() {
        let g = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let rows = emit_clique_cuts(&g, &[vec![0, 1, 2], vec![1]], 2);
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.terms.len() == 3 && r.rhs == 1.0));
    }

    #[test]
    fn indepset_row_with_alpha_one() {
        let g = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (2, 3), (1, 3)]);
        let rows = emit_indepset_cuts(&g, &alpha_bounds(&g)[..1], 1);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].rhs, 1.0);
        assert_eq!(rows[0].terms.len(), 4);
    }

    #[test]
    fn edge_list_round_trip_and_cache() {
        let inst = Instance::new(
            &[(0.0, 0.0, 0), (0.0, 2.0, 1), (4.0, 2.0, 1), (1.0, 1.0, 3), (4.0, 0.0, 0)],
            2,
            7.0,
        )
        .unwrap();
        let mask = accessibility(&inst);
        let (gc, ga) = init_graphs(&inst, &mask);
        let mut copy = IncompatGraph::new(ga.nodes().to_vec());
        assert_eq!(read_edge_list(&mut copy, &write_edge_list(&ga)), 0);
        assert_eq!(copy, ga);

        let dir = tempfile::tempdir().unwrap();
        let first = init_graphs_cached(&inst, &mask, Some(dir.path()));
        let second = init_graphs_cached(&inst, &mask, Some(dir.path()));
        assert_eq!(first, (gc.clone(), ga.clone()));
        assert_eq!(second, (gc, ga));
    }
}
