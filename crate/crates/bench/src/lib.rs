//! Random transport instances for benchmarking the solvers.

use fairtransport::{build_cost_matrix, CostMatrix, DiscreteMeasure};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two measures and their squared-Euclidean cost matrix.
pub struct Instance {
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
    pub cost: CostMatrix,
}

fn points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, dim), |_| rng.random::<f64>())
}

fn weights(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    let w = Array1::from_shape_fn(n, |_| 0.1 + rng.random::<f64>());
    let total = w.sum();
    w / total
}

/// Uniform measures on random points of the unit cube.
pub fn uniform_instance(n: usize, m: usize, dim: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = DiscreteMeasure::uniform(points(&mut rng, n, dim)).expect("nonempty");
    let target = DiscreteMeasure::uniform(points(&mut rng, m, dim)).expect("nonempty");
    let cost = build_cost_matrix(source.points(), target.points(), 2.0).expect("same dimension");
    Instance { source, target, cost }
}

/// Like [`uniform_instance`] with random positive weights.
pub fn weighted_instance(n: usize, m: usize, dim: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pa = points(&mut rng, n, dim);
    let wa = weights(&mut rng, n);
    let pb = points(&mut rng, m, dim);
    let wb = weights(&mut rng, m);
    let source = DiscreteMeasure::new(pa, wa).expect("valid measure");
    let target = DiscreteMeasure::new(pb, wb).expect("valid measure");
    let cost = build_cost_matrix(source.points(), target.points(), 2.0).expect("same dimension");
    Instance { source, target, cost }
}
