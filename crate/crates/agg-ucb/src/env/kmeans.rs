//! Seeded k-means for sub-dividing classes into finer groups.
//!
//! Initialization is k-means++ style (first centroid uniform, later ones
//! sampled proportionally to squared distance), iterations are Lloyd's
//! algorithm, and any cluster that empties is re-seeded to the point
//! farthest from its assigned centroid. Everything is deterministic under
//! the seed.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KmeansResult {
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    /// `k x dim` centroid matrix.
    pub centroids: Array2<f64>,
    /// Final sum of squared distances to assigned centroids.
    pub objective: f64,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

fn plus_plus_init(points: &ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let dim = points.ncols();
    let mut centroids = Array2::zeros((k, dim));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut dists: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = dists.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with chosen centroids; any pick
            // works and the empty-cluster repair handles duplicates.
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in dists.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.row_mut(c).assign(&points.row(next));
        for i in 0..n {
            let d = sq_dist(points.row(i), centroids.row(c));
            if d < dists[i] {
                dists[i] = d;
            }
        }
    }
    centroids
}

/// Clusters `points` (rows) into `k` groups.
pub fn kmeans(
    points: &ArrayView2<f64>,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KmeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::ClusterCount { k, n_points: n });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "kmeans input",
        });
    }
    let dim = points.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut objective = f64::INFINITY;
    let mut iterations = 0;

    for iter in 0..max_iters.max(1) {
        iterations = iter + 1;
        // Assignment step.
        let mut new_objective = 0.0;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = sq_dist(points.row(i), centroids.row(0));
            for c in 1..k {
                let d = sq_dist(points.row(i), centroids.row(c));
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            assignments[i] = best;
            new_objective += best_d;
        }
        // Update step.
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            let mut row = sums.row_mut(c);
            row += &points.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = centroids.row_mut(c);
                row.assign(&sums.row(c));
                row.mapv_inplace(|v| v / counts[c] as f64);
            } else {
                // Re-seed an empty cluster to the point farthest from its
                // current centroid.
                let mut far = 0;
                let mut far_d = -1.0;
                for i in 0..n {
                    let d = sq_dist(points.row(i), centroids.row(assignments[i]));
                    if d > far_d {
                        far = i;
                        far_d = d;
                    }
                }
                centroids.row_mut(c).assign(&points.row(far));
                assignments[far] = c;
            }
        }
        let converged = (objective - new_objective).abs() <= 1e-12 * objective.max(1.0);
        objective = new_objective;
        if converged {
            break;
        }
    }

    Ok(KmeansResult {
        assignments,
        centroids,
        objective,
        iterations,
    })
}
