#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topcut::Instance;

/// Random instance on a 10 x 10 grid: `n` customers with profits 1..=10,
/// fleet `m` and a length limit between the depot distance and a full
/// sweep of the square.
pub fn random_instance(seed: u64, n: usize, m: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), 0)];
    for _ in 0..n {
        pts.push((rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(1..=10)));
    }
    pts.push((rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), 0));
    let (d, a) = (pts[0], pts[n + 1]);
    let da = ((d.0 - a.0) as f64).hypot(d.1 - a.1);
    let l = da + rng.gen_range(1.0..14.0);
    Instance::new(&pts, m, l).expect("valid instance")
}

pub fn tiny(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let n = rng.gen_range(1..=10);
    let m = rng.gen_range(1..=3);
    random_instance(seed, n, m)
}
