//! Arm-group graph estimation from streaming contexts.
//!
//! Every group keeps the contexts observed for it. Similarity between two
//! groups is measured through kernel mean embeddings: with an RBF kernel
//! `k(x, y) = exp(-||x - y||^2 / (2 * bandwidth_kernel^2))`, the squared
//! embedding distance between groups `a` and `b` is the biased MMD^2
//!
//! ```text
//! ||psi_a - psi_b||^2 = K_aa / n_a^2 + K_bb / n_b^2 - 2 K_ab / (n_a n_b)
//! ```
//!
//! where `K_ab` is the double sum of kernel values over the two context sets.
//! Those double sums are maintained incrementally so ingestion costs one
//! kernel row instead of a full recompute. The edge weight between two groups
//! is `exp(-MMD^2 / bandwidth_similarity)`, which keeps every weight in
//! `(0, 1]` and makes the graph connected. Self-loops have weight exactly 1.
//!
//! A group that has not observed any context yet participates with a
//! provisional squared distance of 1 to every other group (so its edges carry
//! weight `exp(-1 / bandwidth_similarity)`) and a self-loop of 1; this keeps
//! the normalized adjacency well defined from round zero.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum tolerated deviation from unit norm for ingested contexts.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Bandwidths for the RBF kernel and the group-similarity map.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct KernelConfig {
    /// RBF kernel bandwidth (sigma_k).
    pub bandwidth_kernel: f64,
    /// Similarity bandwidth dividing the MMD^2 in the edge-weight map (sigma_s).
    pub bandwidth_similarity: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bandwidth_kernel: 1.0,
            bandwidth_similarity: 1.0,
        }
    }
}

impl KernelConfig {
    pub fn new(bandwidth_kernel: f64, bandwidth_similarity: f64) -> Result<Self> {
        if !bandwidth_kernel.is_finite() || bandwidth_kernel <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "bandwidth_kernel",
                value: bandwidth_kernel,
            });
        }
        if !bandwidth_similarity.is_finite() || bandwidth_similarity <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "bandwidth_similarity",
                value: bandwidth_similarity,
            });
        }
        Ok(Self {
            bandwidth_kernel,
            bandwidth_similarity,
        })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.bandwidth_kernel, self.bandwidth_similarity).map(|_| ())
    }
}

/// RBF kernel `exp(-||x - y||^2 / (2 sigma_k^2))`.
///
/// Returns 1 exactly when `x == y` and stays in `(0, 1]` for finite inputs.
pub fn rbf_kernel(x: &[f64], y: &[f64], config: &KernelConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "rbf_kernel",
            expected: x.len(),
            got: y.len(),
        });
    }
    let mut d2 = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        d2 += d * d;
    }
    if !d2.is_finite() {
        return Err(Error::NonFinite {
            context: "rbf_kernel input",
        });
    }
    let s = config.bandwidth_kernel;
    Ok((-d2 / (2.0 * s * s)).exp())
}

/// Observed contexts of one group.
#[derive(Debug, Clone, Default)]
pub struct GroupStats {
    contexts: Vec<Array1<f64>>,
}

impl GroupStats {
    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn contexts(&self) -> &[Array1<f64>] {
        &self.contexts
    }
}

/// Streaming estimate of the arm-group graph.
#[derive(Debug, Clone)]
pub struct ArmGroupGraph {
    kernel: KernelConfig,
    stats: Vec<GroupStats>,
    /// `gram_sums[(a, b)]` is the double sum of kernel values over the
    /// contexts of groups `a` and `b` (ordered pairs, so the diagonal counts
    /// each unordered pair twice plus the self terms).
    gram_sums: Array2<f64>,
    /// Current edge weights; symmetric, diagonal exactly 1, entries in (0, 1].
    weights: Array2<f64>,
}

impl ArmGroupGraph {
    pub fn new(n_groups: usize, kernel: KernelConfig) -> Result<Self> {
        if n_groups == 0 {
            return Err(Error::InvalidConfig("graph needs at least one group".into()));
        }
        KernelConfig::new(kernel.bandwidth_kernel, kernel.bandwidth_similarity)?;
        let mut graph = Self {
            kernel,
            stats: vec![GroupStats::default(); n_groups],
            gram_sums: Array2::zeros((n_groups, n_groups)),
            weights: Array2::zeros((n_groups, n_groups)),
        };
        graph.refresh_weights();
        Ok(graph)
    }

    pub fn n_groups(&self) -> usize {
        self.stats.len()
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn group(&self, group: usize) -> Result<&GroupStats> {
        self.stats
            .get(group)
            .ok_or(Error::GroupOutOfRange {
                group,
                n_groups: self.stats.len(),
            })
    }

    /// Raw kernel double sums, exposed for verification against a direct
    /// recomputation from the stored contexts.
    pub fn gram_sums(&self) -> &Array2<f64> {
        &self.gram_sums
    }

    /// Current edge-weight matrix W.
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    fn validate_context(&self, context: &Array1<f64>) -> Result<()> {
        if context.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "ingested context",
            });
        }
        let norm = context.dot(context).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::DegenerateContext {
                reason: "context is not unit-norm",
            });
        }
        Ok(())
    }

    /// Ingests one context for `group`, updating the kernel double sums
    /// incrementally and refreshing the affected weight row/column.
    pub fn ingest(&mut self, group: usize, context: &Array1<f64>) -> Result<()> {
        self.ingest_batch(&[(group, context)])
    }

    /// Ingests a batch of `(group, context)` observations. Weights of the
    /// touched groups are recomputed once at the end of the batch.
    pub fn ingest_batch(&mut self, batch: &[(usize, &Array1<f64>)]) -> Result<()> {
        let n = self.n_groups();
        for &(group, context) in batch {
            if group >= n {
                return Err(Error::GroupOutOfRange { group, n_groups: n });
            }
            self.validate_context(context)?;
        }
        let mut touched = vec![false; n];
        for &(group, context) in batch {
            let x = context.as_slice().expect("contexts are contiguous");
            // Kernel row of the new context against every stored context.
            let mut row = vec![0.0; n];
            for (other, stats) in self.stats.iter().enumerate() {
                let mut sum = 0.0;
                for stored in &stats.contexts {
                    let y = stored.as_slice().expect("contexts are contiguous");
                    sum += rbf_kernel(x, y, &self.kernel)?;
                }
                row[other] = sum;
            }
            for other in 0..n {
                if other == group {
                    // Ordered double sum: (new, old) and (old, new) pairs plus
                    // the (new, new) self term, which is exactly 1.
                    self.gram_sums[(group, group)] += 2.0 * row[group] + 1.0;
                } else {
                    self.gram_sums[(group, other)] += row[other];
                    self.gram_sums[(other, group)] += row[other];
                }
            }
            self.stats[group].contexts.push(context.clone());
            touched[group] = true;
        }
        for group in 0..n {
            if touched[group] {
                self.refresh_group_weights(group);
            }
        }
        Ok(())
    }

    /// Squared kernel mean embedding distance (biased MMD^2) between two
    /// groups, clamped at zero. Errors if either group is still empty.
    pub fn mmd_sq(&self, a: usize, b: usize) -> Result<f64> {
        let n = self.n_groups();
        for g in [a, b] {
            if g >= n {
                return Err(Error::GroupOutOfRange {
                    group: g,
                    n_groups: n,
                });
            }
            if self.stats[g].is_empty() {
                return Err(Error::EmptyGroup(g));
            }
        }
        let na = self.stats[a].len() as f64;
        let nb = self.stats[b].len() as f64;
        let value = self.gram_sums[(a, a)] / (na * na) + self.gram_sums[(b, b)] / (nb * nb)
            - 2.0 * self.gram_sums[(a, b)] / (na * nb);
        Ok(value.max(0.0))
    }

    /// Edge weight `exp(-MMD^2 / bandwidth_similarity)` between two groups.
    /// Errors if either group is still empty.
    pub fn edge_weight(&self, a: usize, b: usize) -> Result<f64> {
        Ok((-self.mmd_sq(a, b)? / self.kernel.bandwidth_similarity).exp())
    }

    /// Weight used in the maintained matrix: the estimated edge weight when
    /// both groups have data, otherwise the provisional value (squared
    /// distance 1; self-loops always 1).
    fn pair_weight(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 1.0;
        }
        if self.stats[a].is_empty() || self.stats[b].is_empty() {
            return (-1.0 / self.kernel.bandwidth_similarity).exp();
        }
        self.edge_weight(a, b).expect("both groups nonempty")
    }

    fn refresh_group_weights(&mut self, group: usize) {
        for other in 0..self.n_groups() {
            let w = self.pair_weight(group, other);
            self.weights[(group, other)] = w;
            self.weights[(other, group)] = w;
        }
    }

    /// Recomputes the full weight matrix from the current sums.
    pub fn refresh_weights(&mut self) {
        for group in 0..self.n_groups() {
            self.refresh_group_weights(group);
        }
    }

    /// `S^k` for `S = D^{-1/2} A D^{-1/2}` with `A` the current weight matrix
    /// (self-loops included) and `D` its degree matrix.
    pub fn normalized_adjacency_power(&self, hop: usize) -> NormalizedAdjacency {
        NormalizedAdjacency::from_weights(&self.weights, hop)
            .expect("maintained weights are symmetric and positive")
    }
}

/// Symmetrically normalized adjacency raised to the hop count.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    s_power: Array2<f64>,
    hop: usize,
}

impl NormalizedAdjacency {
    /// Builds `S^k` from an explicit weight matrix. The matrix must be
    /// square, symmetric, entrywise nonnegative with strictly positive row
    /// sums. `hop == 0` yields the identity.
    pub fn from_weights(weights: &Array2<f64>, hop: usize) -> Result<Self> {
        let (rows, cols) = weights.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch {
                context: "adjacency weights",
                expected: rows,
                got: cols,
            });
        }
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite {
                context: "adjacency weights",
            });
        }
        for i in 0..rows {
            for j in (i + 1)..cols {
                if (weights[(i, j)] - weights[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidConfig(
                        "adjacency weights must be symmetric".into(),
                    ));
                }
            }
        }
        let mut inv_sqrt_deg = Array1::zeros(rows);
        for i in 0..rows {
            let degree: f64 = weights.row(i).sum();
            if degree <= 0.0 {
                return Err(Error::InvalidConfig(
                    "adjacency row sums must be positive".into(),
                ));
            }
            inv_sqrt_deg[i] = 1.0 / degree.sqrt();
        }
        let mut s = Array2::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                s[(i, j)] = inv_sqrt_deg[i] * weights[(i, j)] * inv_sqrt_deg[j];
            }
        }
        let mut s_power = Array2::eye(rows);
        for _ in 0..hop {
            s_power = s_power.dot(&s);
        }
        Ok(Self { s_power, hop })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.s_power
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn n_groups(&self) -> usize {
        self.s_power.nrows()
    }
}

/// Empirical kernel adjacency built from time-aligned sample streams:
/// `A[i][j] = (1 / (t * n)) * sum_tau k(x_{i,tau}, x_{j,tau})` where `n` is
/// the number of streams and `t` their common length.
///
/// This estimator exists for studying how fast empirical group similarity
/// concentrates around its expectation; the policy path uses
/// [`ArmGroupGraph`] instead.
pub fn time_aligned_adjacency(
    streams: &[Vec<Array1<f64>>],
    kernel: &KernelConfig,
) -> Result<Array2<f64>> {
    let n = streams.len();
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one stream".into()));
    }
    let t = streams[0].len();
    if t == 0 {
        return Err(Error::InvalidConfig("streams must be nonempty".into()));
    }
    for stream in streams {
        if stream.len() != t {
            return Err(Error::DimensionMismatch {
                context: "time_aligned_adjacency",
                expected: t,
                got: stream.len(),
            });
        }
    }
    let mut adjacency = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let mut sum = 0.0;
            for tau in 0..t {
                let x = streams[i][tau].as_slice().expect("contiguous");
                let y = streams[j][tau].as_slice().expect("contiguous");
                sum += rbf_kernel(x, y, kernel)?;
            }
            let value = sum / (t as f64 * n as f64);
            adjacency[(i, j)] = value;
            adjacency[(j, i)] = value;
        }
    }
    Ok(adjacency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit(v: Vec<f64>) -> Array1<f64> {
        let a = Array1::from(v);
        let n = a.dot(&a).sqrt();
        a / n
    }

    fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let a = Array1::from(v);
            let n = a.dot(&a).sqrt();
            if n > 1e-6 {
                return a / n;
            }
        }
    }

    /// Direct double-sum recomputation of the kernel sums from the stored
    /// contexts: the independent route the incremental path must match.
    fn brute_force_gram(graph: &ArmGroupGraph) -> Array2<f64> {
        let n = graph.n_groups();
        let mut gram = Array2::zeros((n, n));
        for a in 0..n {
            for b in 0..n {
                let mut sum = 0.0;
                for x in graph.group(a).unwrap().contexts() {
                    for y in graph.group(b).unwrap().contexts() {
                        sum += rbf_kernel(
                            x.as_slice().unwrap(),
                            y.as_slice().unwrap(),
                            graph.kernel(),
                        )
                        .unwrap();
                    }
                }
                gram[(a, b)] = sum;
            }
        }
        gram
    }

    #[test]
    fn rbf_kernel_identical_inputs_is_one() {
        let cfg = KernelConfig::default();
        let x = [0.6, 0.8];
        assert_eq!(rbf_kernel(&x, &x, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn rbf_kernel_orthonormal_pair_matches_hand_value() {
        // ||e1 - e2||^2 = 2, so k = exp(-2 / 2) = exp(-1).
        let cfg = KernelConfig::default();
        let k = rbf_kernel(&[1.0, 0.0], &[0.0, 1.0], &cfg).unwrap();
        assert!((k - 0.36787944117144233).abs() < 1e-15, "k = {k}");
    }

    #[test]
    fn rbf_kernel_rejects_dimension_mismatch() {
        let cfg = KernelConfig::default();
        assert!(matches!(
            rbf_kernel(&[1.0], &[1.0, 0.0], &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kernel_config_rejects_nonpositive_bandwidths() {
        assert!(KernelConfig::new(0.0, 1.0).is_err());
        assert!(KernelConfig::new(1.0, -2.0).is_err());
        assert!(KernelConfig::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn ingest_single_context_sets_unit_self_sum() {
        let mut g = ArmGroupGraph::new(2, KernelConfig::default()).unwrap();
        g.ingest(0, &unit(vec![1.0, 0.0])).unwrap();
        assert_eq!(g.gram_sums()[(0, 0)], 1.0);
        assert_eq!(g.group(0).unwrap().len(), 1);
        assert_eq!(g.edge_weight(0, 0).unwrap(), 1.0);
    }

    #[test]
    fn identical_singleton_groups_have_zero_distance_and_unit_weight() {
        let mut g = ArmGroupGraph::new(2, KernelConfig::default()).unwrap();
        let x = unit(vec![0.3, -0.4, 0.5]);
        g.ingest(0, &x).unwrap();
        g.ingest(1, &x).unwrap();
        assert_eq!(g.mmd_sq(0, 1).unwrap(), 0.0);
        assert_eq!(g.edge_weight(0, 1).unwrap(), 1.0);
    }

    #[test]
    fn orthonormal_singletons_match_hand_computed_distance_and_weight() {
        // k(x, y) = exp(-1), so MMD^2 = 1 + 1 - 2 exp(-1) ~= 1.2642411177
        // and the edge weight is exp(-MMD^2) ~= 0.2824535639.
        let mut g = ArmGroupGraph::new(2, KernelConfig::default()).unwrap();
        g.ingest(0, &unit(vec![1.0, 0.0])).unwrap();
        g.ingest(1, &unit(vec![0.0, 1.0])).unwrap();
        let mmd = g.mmd_sq(0, 1).unwrap();
        assert!((mmd - 1.2642411176571153).abs() < 1e-12, "mmd = {mmd}");
        let w = g.edge_weight(0, 1).unwrap();
        assert!((w - 0.2824535638505403).abs() < 1e-12, "w = {w}");
    }

    #[test]
    fn mmd_on_empty_group_errors() {
        let mut g = ArmGroupGraph::new(2, KernelConfig::default()).unwrap();
        g.ingest(0, &unit(vec![1.0, 0.0])).unwrap();
        assert!(matches!(g.mmd_sq(0, 1), Err(Error::EmptyGroup(1))));
        assert!(matches!(g.edge_weight(1, 0), Err(Error::EmptyGroup(1))));
    }

    #[test]
    fn empty_groups_get_provisional_weights() {
        let g = ArmGroupGraph::new(3, KernelConfig::default()).unwrap();
        let w = g.weights();
        let provisional = (-1.0f64).exp();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { provisional };
                assert_eq!(w[(i, j)], expected);
            }
        }
    }

    #[test]
    fn ingest_rejects_out_of_range_group_and_bad_contexts() {
        let mut g = ArmGroupGraph::new(2, KernelConfig::default()).unwrap();
        assert!(matches!(
            g.ingest(2, &unit(vec![1.0, 0.0])),
            Err(Error::GroupOutOfRange { .. })
        ));
        assert!(matches!(
            g.ingest(0, &array![0.5, 0.5]),
            Err(Error::DegenerateContext { .. })
        ));
        assert!(matches!(
            g.ingest(0, &array![f64::NAN, 0.0]),
            Err(Error::NonFinite { .. })
        ));
        // A failed batch must not partially apply.
        assert_eq!(g.group(0).unwrap().len(), 0);
    }

    #[test]
    fn incremental_gram_matches_brute_force_on_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let n_groups = rng.random_range(1..5usize);
            let dim = rng.random_range(2..6usize);
            let mut g = ArmGroupGraph::new(n_groups, KernelConfig::default()).unwrap();
            let n_contexts = rng.random_range(1..40usize);
            for _ in 0..n_contexts {
                let group = rng.random_range(0..n_groups);
                g.ingest(group, &random_unit(&mut rng, dim)).unwrap();
            }
            let brute = brute_force_gram(&g);
            for (a, b) in ndarray::indices((n_groups, n_groups)) {
                assert!(
                    (g.gram_sums()[(a, b)] - brute[(a, b)]).abs() <= 1e-10,
                    "gram mismatch at ({a}, {b})"
                );
            }
        }
    }

    #[test]
    fn mmd_matches_full_gram_quadratic_form() {
        // Independent route: assemble the combined Gram matrix over both
        // context sets and evaluate a^T K a with a = [1/n_a .., -1/n_b ..].
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = KernelConfig::default();
        let mut g = ArmGroupGraph::new(2, cfg).unwrap();
        let xs: Vec<_> = (0..5).map(|_| random_unit(&mut rng, 4)).collect();
        let ys: Vec<_> = (0..7).map(|_| random_unit(&mut rng, 4)).collect();
        for x in &xs {
            g.ingest(0, x).unwrap();
        }
        for y in &ys {
            g.ingest(1, y).unwrap();
        }
        let all: Vec<_> = xs.iter().chain(ys.iter()).collect();
        let mut coeff = vec![1.0 / xs.len() as f64; xs.len()];
        coeff.extend(vec![-1.0 / ys.len() as f64; ys.len()]);
        let mut quad = 0.0;
        for (i, xi) in all.iter().enumerate() {
            for (j, xj) in all.iter().enumerate() {
                quad += coeff[i]
                    * coeff[j]
                    * rbf_kernel(xi.as_slice().unwrap(), xj.as_slice().unwrap(), &cfg).unwrap();
            }
        }
        let mmd = g.mmd_sq(0, 1).unwrap();
        assert!((mmd - quad).abs() < 1e-12, "mmd = {mmd}, quad = {quad}");
    }

    #[test]
    fn identical_sample_groups_drive_weight_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = ArmGroupGraph::new(2, KernelConfig::default()).unwrap();
        for _ in 0..30 {
            let x = random_unit(&mut rng, 3);
            g.ingest(0, &x).unwrap();
            g.ingest(1, &x).unwrap();
        }
        let w = g.edge_weight(0, 1).unwrap();
        assert!(w > 1.0 - 1e-12, "duplicate groups should have weight ~1, got {w}");
    }

    #[test]
    fn two_group_uniform_weights_give_half_matrix_and_idempotent_square() {
        let w = array![[1.0, 1.0], [1.0, 1.0]];
        let s1 = NormalizedAdjacency::from_weights(&w, 1).unwrap();
        let s2 = NormalizedAdjacency::from_weights(&w, 2).unwrap();
        for v in s1.matrix() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        for (a, b) in s1.matrix().iter().zip(s2.matrix()) {
            assert!((a - b).abs() < 1e-15, "S^2 should equal S here");
        }
    }

    #[test]
    fn hop_zero_is_identity() {
        let g = ArmGroupGraph::new(4, KernelConfig::default()).unwrap();
        let s = g.normalized_adjacency_power(0);
        assert_eq!(s.matrix(), &Array2::<f64>::eye(4));
        assert_eq!(s.hop(), 0);
    }

    /// Power-iteration estimate of the spectral norm of a symmetric matrix.
    fn spectral_norm(m: &Array2<f64>, iters: usize, rng: &mut ChaCha8Rng) -> f64 {
        let n = m.nrows();
        let mut v = random_unit(rng, n);
        let mut estimate = 0.0;
        for _ in 0..iters {
            let w = m.dot(&v);
            estimate = w.dot(&w).sqrt();
            if estimate == 0.0 {
                return 0.0;
            }
            v = w / estimate;
        }
        estimate
    }

    #[test]
    fn normalized_adjacency_spectral_norm_is_at_most_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let n_groups = rng.random_range(2..7usize);
            let dim = rng.random_range(2..5usize);
            let mut g = ArmGroupGraph::new(n_groups, KernelConfig::default()).unwrap();
            for _ in 0..rng.random_range(0..30usize) {
                let group = rng.random_range(0..n_groups);
                g.ingest(group, &random_unit(&mut rng, dim)).unwrap();
            }
            let s = g.normalized_adjacency_power(1);
            let norm = spectral_norm(s.matrix(), 200, &mut rng);
            assert!(norm <= 1.0 + 1e-8, "||S||_2 = {norm}");
        }
    }

    #[test]
    fn time_aligned_adjacency_diagonal_is_inverse_group_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let streams: Vec<Vec<Array1<f64>>> = (0..3)
            .map(|_| (0..10).map(|_| random_unit(&mut rng, 3)).collect())
            .collect();
        let a = time_aligned_adjacency(&streams, &KernelConfig::default()).unwrap();
        for i in 0..3 {
            // k(x, x) = 1 at every step, so the diagonal is exactly 1/n.
            assert!((a[(i, i)] - 1.0 / 3.0).abs() < 1e-15);
        }
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a[(i, j)], a[(j, i)]);
                assert!(a[(i, j)] > 0.0 && a[(i, j)] <= 1.0 / 3.0 + 1e-15);
            }
        }
    }

    #[test]
    fn time_aligned_adjacency_rejects_ragged_streams() {
        let streams = vec![
            vec![unit(vec![1.0, 0.0])],
            vec![unit(vec![0.0, 1.0]), unit(vec![1.0, 0.0])],
        ];
        assert!(matches!(
            time_aligned_adjacency(&streams, &KernelConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn weights_stay_symmetric_in_unit_interval(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_groups = rng.random_range(1..5usize);
            let dim = rng.random_range(2..5usize);
            let mut g = ArmGroupGraph::new(n_groups, KernelConfig::default()).unwrap();
            for _ in 0..rng.random_range(0..20usize) {
                let group = rng.random_range(0..n_groups);
                g.ingest(group, &random_unit(&mut rng, dim)).unwrap();
            }
            let w = g.weights();
            for a in 0..n_groups {
                prop_assert_eq!(w[(a, a)], 1.0);
                for b in 0..n_groups {
                    prop_assert_eq!(w[(a, b)], w[(b, a)]);
                    prop_assert!(w[(a, b)] > 0.0 && w[(a, b)] <= 1.0);
                }
            }
        }

        #[test]
        fn kernel_is_symmetric_and_bounded(
            x in proptest::collection::vec(-1.0f64..1.0, 3),
            y in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let cfg = KernelConfig::default();
            let kxy = rbf_kernel(&x, &y, &cfg).unwrap();
            let kyx = rbf_kernel(&y, &x, &cfg).unwrap();
            prop_assert_eq!(kxy, kyx);
            prop_assert!(kxy > 0.0 && kxy <= 1.0);
        }
    }
}
