//! Truncated SVD by seeded subspace iteration.
//!
//! The dominant `rank`-dimensional subspace is found by orthogonal
//! iteration on the smaller Gram side; the projected `rank x rank`
//! symmetric problem is then solved exactly with cyclic Jacobi rotations,
//! which rotates the subspace basis into singular vectors. Deterministic
//! under the seed.

use ndarray::{Array1, Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Rank-`d` factors: `a ~ u * diag(singular_values) * v^T`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `rows x d`, orthonormal columns.
    pub u: Array2<f64>,
    /// Descending, nonnegative.
    pub singular_values: Array1<f64>,
    /// `cols x d`, orthonormal columns.
    pub v: Array2<f64>,
}

/// Modified Gram-Schmidt with a second re-orthogonalization pass. Columns
/// that collapse numerically are replaced by fresh random directions so the
/// output always has orthonormal columns.
fn orthonormalize(basis: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
    let (n, k) = basis.dim();
    for j in 0..k {
        for _attempt in 0..64 {
            for _pass in 0..2 {
                for i in 0..j {
                    let proj = basis.column(i).dot(&basis.column(j));
                    let prev = basis.column(i).to_owned();
                    let mut col = basis.column_mut(j);
                    col.scaled_add(-proj, &prev);
                }
            }
            let norm = basis.column(j).dot(&basis.column(j)).sqrt();
            if norm > 1e-10 {
                basis.column_mut(j).mapv_inplace(|v| v / norm);
                break;
            }
            for v in basis.column_mut(j).iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let _ = n;
        }
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and the matching eigenvector columns.
fn jacobi_symmetric(matrix: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = matrix.nrows();
    let mut m = matrix.clone();
    let mut vecs = Array2::eye(n);
    let scale: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    s += m[(p, q)] * m[(p, q)];
                }
            }
            s.sqrt()
        };
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = c * mip - s * miq;
                    m[(i, q)] = s * mip + c * miq;
                }
                for i in 0..n {
                    let mpi = m[(p, i)];
                    let mqi = m[(q, i)];
                    m[(p, i)] = c * mpi - s * mqi;
                    m[(q, i)] = s * mpi + c * mqi;
                }
                for i in 0..n {
                    let vip = vecs[(i, p)];
                    let viq = vecs[(i, q)];
                    vecs[(i, p)] = c * vip - s * viq;
                    vecs[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[(b, b)].partial_cmp(&m[(a, a)]).unwrap());
    let values = Array1::from(order.iter().map(|&i| m[(i, i)]).collect::<Vec<_>>());
    let mut sorted = Array2::zeros((n, n));
    for (out, &src) in order.iter().enumerate() {
        sorted.column_mut(out).assign(&vecs.column(src));
    }
    (values, sorted)
}

/// Rank-`rank` SVD approximation of `a` using `iters` subspace iterations.
pub fn truncated_svd(
    a: &ArrayView2<f64>,
    rank: usize,
    iters: usize,
    seed: u64,
) -> Result<SvdFactors> {
    let (rows, cols) = a.dim();
    if rank == 0 || rank > rows.min(cols) {
        return Err(Error::InvalidConfig(format!(
            "svd rank must be in 1..={}, got {rank}",
            rows.min(cols)
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "svd input",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Iterate on the smaller side so the Gram products stay cheap.
    let tall = rows >= cols;
    let side = if tall { cols } else { rows };
    let mut basis = Array2::zeros((side, rank));
    for v in basis.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    orthonormalize(&mut basis, &mut rng);
    for _ in 0..iters.max(1) {
        basis = if tall {
            // basis spans right singular directions: V <- orth(A^T (A V)).
            a.t().dot(&a.dot(&basis))
        } else {
            // basis spans left singular directions: U <- orth(A (A^T U)).
            a.dot(&a.t().dot(&basis))
        };
        orthonormalize(&mut basis, &mut rng);
    }
    // Project: B = A V (or A^T U); M = B^T B is the squared singular
    // structure inside the subspace.
    let b = if tall { a.dot(&basis) } else { a.t().dot(&basis) };
    let m = b.t().dot(&b);
    let (lambda, p) = jacobi_symmetric(&m);
    let rotated = basis.dot(&p);
    let singular_values = lambda.mapv(|l| l.max(0.0).sqrt());
    // Recover the other side's vectors as B P / sigma; re-randomize columns
    // with vanishing singular value so both factors stay orthonormal.
    let mut other = b.dot(&p);
    for (j, &s) in singular_values.iter().enumerate() {
        if s > 1e-12 {
            other.column_mut(j).mapv_inplace(|v| v / s);
        } else {
            for v in other.column_mut(j).iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
    }
    orthonormalize(&mut other, &mut rng);
    let (u, v) = if tall { (other, rotated) } else { (rotated, other) };
    Ok(SvdFactors {
        u,
        singular_values,
        v,
    })
}

impl SvdFactors {
    /// Dense reconstruction `u * diag(s) * v^T`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let mut scaled = self.u.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            scaled.column_mut(j).mapv_inplace(|v| v * s);
        }
        scaled.dot(&self.v.t())
    }

    /// Row factors scaled by the square root of the singular values, the
    /// symmetric split used for latent user/item representations.
    pub fn scaled_left(&self) -> Array2<f64> {
        let mut out = self.u.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            let r = s.max(0.0).sqrt();
            out.column_mut(j).mapv_inplace(|v| v * r);
        }
        out
    }

    pub fn scaled_right(&self) -> Array2<f64> {
        let mut out = self.v.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            let r = s.max(0.0).sqrt();
            out.column_mut(j).mapv_inplace(|v| v * r);
        }
        out
    }
}
