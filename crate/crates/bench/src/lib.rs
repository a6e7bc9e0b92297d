//! Inputs shared by the benchmarks.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topcut::incompat::IncompatGraph;
use topcut::Instance;

/// Uniform instance on a 10 x 10 square with profits 1..=10.
pub fn random_instance(seed: u64, n: usize, m: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<(f64, f64, i64)> = Vec::with_capacity(n + 2);
    pts.push((rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), 0));
    for _ in 0..n {
        pts.push((rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(1..=10)));
    }
    pts.push((rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), 0));
    let (d, a) = (pts[0], pts[n + 1]);
    let l = (d.0 - a.0).hypot(d.1 - a.1) + rng.gen_range(1.0..14.0);
    Instance::new(&pts, m, l).expect("valid instance")
}

/// Erdős–Rényi graph on `n` nodes with edge probability `p`.
pub fn random_graph(seed: u64, n: usize, p: f64) -> IncompatGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = IncompatGraph::with_order(n);
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                g.add_edge(a, b);
            }
        }
    }
    g
}

pub fn corpus_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/chao").join(name)
}
