//! Team Orienteering instances: loading, validation and accessibility
//! preprocessing.
//!
//! Vertex `0` is the departure depot `d`, the last vertex is the arrival
//! depot `a`, everything in between is a customer.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, ParseError, Result};

/// Absolute tolerance for every cost/limit comparison.
pub const COST_TOL: f64 = 1e-6;

const METRIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub profit: i64,
}

/// Benchmark naming convention `p<set>.<m>.<letter>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkName {
    pub set: u32,
    pub fleet: u32,
    pub letter: char,
}

impl BenchmarkName {
    pub fn parse(stem: &str) -> Option<Self> {
        let rest = stem.strip_prefix('p')?;
        let mut parts = rest.split('.');
        let set = parts.next()?.parse().ok()?;
        let fleet = parts.next()?.parse().ok()?;
        let letter_part = parts.next()?;
        if parts.next().is_some() {
            return None;
        }
        let mut chars = letter_part.chars();
        let letter = chars.next()?;
        if chars.next().is_some() || !letter.is_ascii_alphabetic() {
            return None;
        }
        Some(Self { set, fleet, letter })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: Option<String>,
    vertices: Vec<Vertex>,
    fleet_size: usize,
    length_limit: f64,
    costs: Vec<f64>,
}

impl Instance {
    /// Builds an instance with Euclidean costs. The first vertex is the
    /// departure depot, the last one the arrival depot.
    pub fn new(points: &[(f64, f64, i64)], fleet_size: usize, length_limit: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInstance(
                "an instance needs both depots".into(),
            ));
        }
        if fleet_size == 0 {
            return Err(Error::InvalidInstance("fleet size must be at least 1".into()));
        }
        if !(length_limit >= 0.0) || !length_limit.is_finite() {
            return Err(Error::InvalidInstance(format!(
                "length limit must be a nonnegative number, got {length_limit}"
            )));
        }
        let last = points.len() - 1;
        let vertices: Vec<Vertex> = points
            .iter()
            .enumerate()
            .map(|(id, &(x, y, profit))| Vertex { id, x, y, profit })
            .collect();
        for v in &vertices {
            if v.profit < 0 {
                return Err(Error::InvalidInstance(format!(
                    "vertex {} has negative profit {}",
                    v.id, v.profit
                )));
            }
            if (v.id == 0 || v.id == last) && v.profit != 0 {
                return Err(Error::InvalidInstance(format!(
                    "depot {} must have zero profit",
                    v.id
                )));
            }
        }
        let n = vertices.len();
        let mut costs = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let dx = vertices[i].x - vertices[j].x;
                let dy = vertices[i].y - vertices[j].y;
                costs[i * n + j] = (dx * dx + dy * dy).sqrt();
            }
        }
        let inst = Self {
            name: None,
            vertices,
            fleet_size,
            length_limit,
            costs,
        };
        inst.check_metric()?;
        Ok(inst)
    }

    fn check_metric(&self) -> Result<()> {
        let n = self.num_vertices();
        for i in 0..n {
            for j in 0..n {
                let cij = self.cost(i, j);
                if !(cij >= 0.0) || (cij - self.cost(j, i)).abs() > METRIC_TOL {
                    return Err(Error::InvalidInstance(format!(
                        "costs between {i} and {j} are not symmetric"
                    )));
                }
            }
        }
        // O(n^3) but only run once per load.
        for i in 0..n {
            for k in 0..n {
                let cik = self.cost(i, k);
                for j in 0..n {
                    if self.cost(i, j) > cik + self.cost(k, j) + METRIC_TOL {
                        return Err(Error::InvalidInstance(format!(
                            "triangle inequality violated on ({i},{k},{j})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Same instance with a different number of vehicles.
    pub fn with_fleet(&self, fleet_size: usize) -> Self {
        let mut copy = self.clone();
        copy.fleet_size = fleet_size.max(1);
        copy
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_length_limit(&self, length_limit: f64) -> Self {
        let mut copy = self.clone();
        copy.length_limit = length_limit;
        copy
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_customers(&self) -> usize {
        self.vertices.len() - 2
    }

    pub fn depart(&self) -> usize {
        0
    }

    pub fn arrive(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn is_depot(&self, v: usize) -> bool {
        v == 0 || v == self.arrive()
    }

    pub fn customers(&self) -> std::ops::Range<usize> {
        1..self.arrive()
    }

    pub fn fleet_size(&self) -> usize {
        self.fleet_size
    }

    pub fn length_limit(&self) -> f64 {
        self.length_limit
    }

    pub fn profit(&self, v: usize) -> i64 {
        self.vertices[v].profit
    }

    pub fn total_profit(&self) -> i64 {
        self.vertices.iter().map(|v| v.profit).sum()
    }

    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.vertices.len() + j]
    }

    /// Arcs entering `d`, leaving `a` and loops are not part of the graph.
    pub fn is_forbidden(&self, i: usize, j: usize) -> bool {
        i == j || j == self.depart() || i == self.arrive()
    }

    /// Length of the route `d -> seq... -> a` (depots are added implicitly).
    pub fn route_length(&self, seq: &[usize]) -> f64 {
        let mut prev = self.depart();
        let mut len = 0.0;
        for &v in seq {
            len += self.cost(prev, v);
            prev = v;
        }
        len + self.cost(prev, self.arrive())
    }

    /// Length of a fully spelled-out path (including depots).
    pub fn path_length(&self, path: &[usize]) -> f64 {
        path.windows(2).map(|w| self.cost(w[0], w[1])).sum()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut inst = parse_chao(&text)?;
        if let Some(stem) = path.file_name().and_then(|s| s.to_str()) {
            let stem = stem.strip_suffix(".txt").unwrap_or(stem);
            inst.name = Some(stem.to_string());
        }
        Ok(inst)
    }

    pub fn benchmark_name(&self) -> Option<BenchmarkName> {
        self.name.as_deref().and_then(BenchmarkName::parse)
    }

    /// Serializes to the benchmark text format; the output parses back to an
    /// identical instance.
    pub fn to_chao(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n {}", self.vertices.len());
        let _ = writeln!(out, "m {}", self.fleet_size);
        let _ = writeln!(out, "tmax {}", self.length_limit);
        for v in &self.vertices {
            let _ = writeln!(out, "{}\t{}\t{}", v.x, v.y, v.profit);
        }
        out
    }
}

/// Parses the benchmark text format: `n`, `m` and `tmax` header lines, then
/// `n` rows of `x y profit`. The row count includes both depots.
pub fn parse_chao(text: &str) -> Result<Instance> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut header = |key: &str| -> Result<(usize, String)> {
        let (no, line) = lines
            .next()
            .ok_or_else(|| ParseError::new(0, format!("missing `{key}` header")))?;
        let mut tok = line.split_whitespace();
        match (tok.next(), tok.next(), tok.next()) {
            (Some(k), Some(v), None) if k == key => Ok((no, v.to_string())),
            _ => Err(ParseError::new(no, format!("expected `{key} <value>`, got `{line}`")).into()),
        }
    };
    let (n_line, n_raw) = header("n")?;
    let n: usize = n_raw
        .parse()
        .map_err(|_| ParseError::new(n_line, format!("bad vertex count `{n_raw}`")))?;
    let (m_line, m_raw) = header("m")?;
    let m: usize = m_raw
        .parse()
        .map_err(|_| ParseError::new(m_line, format!("bad fleet size `{m_raw}`")))?;
    let (t_line, t_raw) = header("tmax")?;
    let tmax: f64 = t_raw
        .parse()
        .map_err(|_| ParseError::new(t_line, format!("bad length limit `{t_raw}`")))?;
    if n < 2 {
        return Err(ParseError::new(n_line, "vertex count must include both depots").into());
    }
    if m == 0 {
        return Err(ParseError::new(m_line, "fleet size must be at least 1").into());
    }
    if !(tmax >= 0.0) || !tmax.is_finite() {
        return Err(ParseError::new(t_line, "length limit must be nonnegative").into());
    }

    let mut points = Vec::with_capacity(n);
    let mut last_line = t_line;
    for (no, line) in lines {
        last_line = no;
        if points.len() == n {
            return Err(ParseError::new(no, format!("more than {n} vertex rows")).into());
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(ParseError::new(no, format!("expected `x y profit`, got `{line}`")).into());
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ParseError::new(no, format!("bad number `{s}`")).into())
        };
        let (x, y, p) = (num(fields[0])?, num(fields[1])?, num(fields[2])?);
        if p < 0.0 {
            return Err(ParseError::new(no, format!("negative profit {p}")).into());
        }
        if p.fract() != 0.0 {
            return Err(ParseError::new(no, format!("profit {p} is not integral")).into());
        }
        let row = points.len();
        if (row == 0 || row == n - 1) && p != 0.0 {
            return Err(ParseError::new(no, format!("depot row carries nonzero profit {p}")).into());
        }
        points.push((x, y, p as i64));
    }
    if points.len() != n {
        return Err(ParseError::new(
            last_line,
            format!("expected {n} vertex rows, found {}", points.len()),
        )
        .into());
    }
    Instance::new(&points, m, tmax)
}

/// Customers and arcs that fit into at least one route of length `L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessibilityMask {
    num_vertices: usize,
    customers: Vec<bool>,
    arcs: Vec<bool>,
}

impl AccessibilityMask {
    /// Every customer and every non-forbidden arc, i.e. no preprocessing.
    pub fn unrestricted(inst: &Instance) -> Self {
        let n = inst.num_vertices();
        let mut customers = vec![false; n];
        for c in inst.customers() {
            customers[c] = true;
        }
        let mut arcs = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                arcs[i * n + j] = !inst.is_forbidden(i, j);
            }
        }
        Self {
            num_vertices: n,
            customers,
            arcs,
        }
    }

    pub fn is_customer_accessible(&self, i: usize) -> bool {
        self.customers[i]
    }

    pub fn is_arc_accessible(&self, i: usize, j: usize) -> bool {
        self.arcs[i * self.num_vertices + j]
    }

    /// Accessible customers in increasing order.
    pub fn customers(&self) -> Vec<usize> {
        (0..self.num_vertices).filter(|&i| self.customers[i]).collect()
    }

    pub fn num_customers(&self) -> usize {
        self.customers.iter().filter(|&&b| b).count()
    }

    /// Accessible arcs in row-major order.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        let n = self.num_vertices;
        (0..n * n)
            .filter(|&k| self.arcs[k])
            .map(|k| (k / n, k % n))
            .collect()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().filter(|&&b| b).count()
    }

    /// Drops a customer together with every arc touching it.
    pub fn without_customer(&self, i: usize) -> Self {
        let mut copy = self.clone();
        let n = self.num_vertices;
        copy.customers[i] = false;
        for k in 0..n {
            copy.arcs[i * n + k] = false;
            copy.arcs[k * n + i] = false;
        }
        copy
    }
}

/// Applies the two closed-form accessibility tests.
pub fn accessibility(inst: &Instance) -> AccessibilityMask {
    let n = inst.num_vertices();
    let (d, a) = (inst.depart(), inst.arrive());
    let limit = inst.length_limit() + COST_TOL;
    let mut customers = vec![false; n];
    for i in inst.customers() {
        customers[i] = inst.cost(d, i) + inst.cost(i, a) <= limit;
    }
    let reachable = |v: usize| v == d || v == a || customers[v];
    let mut arcs = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if inst.is_forbidden(i, j) || !reachable(i) || !reachable(j) {
                continue;
            }
            arcs[i * n + j] = inst.cost(d, i) + inst.cost(i, j) + inst.cost(j, a) <= limit;
        }
    }
    AccessibilityMask {
        num_vertices: n,
        customers,
        arcs,
    }
}

/// Shortest `d -> a` route visiting both customers `i` and `j`.
pub fn min_len_customers(inst: &Instance, i: usize, j: usize) -> f64 {
    assert!(i != j, "min_len needs two distinct customers, got {i} twice");
    assert!(
        !inst.is_depot(i) && !inst.is_depot(j),
        "min_len over customers got a depot"
    );
    let forward = inst.route_length(&[i, j]);
    let backward = inst.route_length(&[j, i]);
    forward.min(backward)
}

/// Shortest simple `d -> a` path traversing both arcs, or `+inf` when the two
/// arcs cannot be chained into one simple path.
pub fn min_len_arcs(inst: &Instance, first: (usize, usize), second: (usize, usize)) -> f64 {
    chained_length(inst, first, second).min(chained_length(inst, second, first))
}

fn chained_length(inst: &Instance, first: (usize, usize), second: (usize, usize)) -> f64 {
    let (d, a) = (inst.depart(), inst.arrive());
    let mut seq: Vec<usize> = Vec::with_capacity(6);
    for v in [d, first.0, first.1, second.0, second.1, a] {
        if seq.last() != Some(&v) {
            seq.push(v);
        }
    }
    // Both arcs must survive as consecutive pairs, and the path must be simple.
    let has_arc = |arc: (usize, usize)| seq.windows(2).any(|w| (w[0], w[1]) == arc);
    if !has_arc(first) || !has_arc(second) {
        return f64::INFINITY;
    }
    for (k, &v) in seq.iter().enumerate() {
        if seq[k + 1..].contains(&v) {
            return f64::INFINITY;
        }
    }
    if seq.first() != Some(&d) || seq.last() != Some(&a) {
        return f64::INFINITY;
    }
    inst.path_length(&seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(points: &[(f64, f64, i64)], m: usize, l: f64) -> Instance {
        Instance::new(points, m, l).unwrap()
    }

    #[test]
    fn parses_header_and_rows() {
        let mut text = String::from("n 21\nm 2\ntmax 7.5\n");
        for k in 0..21 {
            let p = if k == 0 || k == 20 { 0 } else { 10 };
            text.push_str(&format!("{}\t{}\t{}\n", k as f64 * 0.5, 1.0, p));
        }
        let parsed = parse_chao(&text).unwrap();
        assert_eq!(parsed.num_customers(), 19);
        assert_eq!(parsed.fleet_size(), 2);
        assert_eq!(parsed.length_limit(), 7.5);
    }

    #[test]
    fn depots_only_gives_no_customers() {
        let parsed = parse_chao("n 2\nm 1\ntmax 3\n0 0 0\n1 1 0\n").unwrap();
        assert_eq!(parsed.num_customers(), 0);
    }

    #[test]
    fn euclidean_depot_cost() {
        let parsed = parse_chao("n 2\nm 1\ntmax 10\n0 0 0\n3 4 0\n").unwrap();
        assert_eq!(parsed.cost(0, 1), 5.0);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = parse_chao("n 3\nm 1\ntmax 3\n0 0 0\n1 1 -4\n2 2 0\n").unwrap_err();
        match err {
            Error::Parse(e) => assert_eq!(e.line, 5),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_chao("n 3\nm 1\ntmax 3\n0 0 5\n1 1 4\n2 2 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse(ParseError { line: 4, .. })));
        let err = parse_chao("n 3\nm 1\ntmax 3\n0 0 0\n1 1 4\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        let err = parse_chao("n x\nm 1\ntmax 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse(ParseError { line: 1, .. })));
        let err = parse_chao("m 1\nn 3\ntmax 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse(ParseError { line: 1, .. })));
    }

    #[test]
    fn accessibility_examples() {
        let base = [(0.0, 0.0, 0), (5.0, 5.0, 3), (10.0, 0.0, 0)];
        // sqrt(50) + sqrt(50) = 14.1421...
        let mask = accessibility(&inst(&base, 1, 20.0));
        assert!(mask.is_customer_accessible(1));
        let mask = accessibility(&inst(&base, 1, 10.0));
        assert!(!mask.is_customer_accessible(1));
        let mask = accessibility(&inst(&base, 1, 0.0));
        assert_eq!(mask.num_customers(), 0);
    }

    #[test]
    fn min_len_customer_pair() {
        let i = inst(&[(0.0, 0.0, 0), (1.0, 1.0, 1), (3.0, 1.0, 1), (4.0, 0.0, 0)], 1, 10.0);
        let expected = 2.0 + 2.0 * 2f64.sqrt();
        assert!((min_len_customers(&i, 1, 2) - expected).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn min_len_same_customer_panics() {
        let i = inst(&[(0.0, 0.0, 0), (1.0, 1.0, 1), (4.0, 0.0, 0)], 1, 10.0);
        min_len_customers(&i, 1, 1);
    }

    #[test]
    fn min_len_chained_arcs() {
        let i = inst(
            &[(0.0, 0.0, 0), (1.0, 2.0, 1), (2.0, 3.0, 1), (3.0, 1.0, 1), (5.0, 0.0, 0)],
            1,
            50.0,
        );
        let expected = i.cost(0, 1) + i.cost(1, 2) + i.cost(2, 3) + i.cost(3, 4);
        assert_eq!(min_len_arcs(&i, (1, 2), (2, 3)), expected);
        // Opposite arcs form a 2-cycle: no simple path.
        assert!(min_len_arcs(&i, (1, 2), (2, 1)).is_infinite());
        // Two arcs leaving the same vertex.
        assert!(min_len_arcs(&i, (1, 2), (1, 3)).is_infinite());
        // Depot arcs are pinned to the ends of the path.
        let exp = i.cost(0, 1) + i.cost(1, 2) + i.cost(2, 3) + i.cost(3, 4);
        assert_eq!(min_len_arcs(&i, (2, 3), (0, 1)), exp);
    }

    #[test]
    fn benchmark_names() {
        assert_eq!(
            BenchmarkName::parse("p2.3.k"),
            Some(BenchmarkName { set: 2, fleet: 3, letter: 'k' })
        );
        assert_eq!(BenchmarkName::parse("random"), None);
    }
}
