//! Gradient-space confidence widths.
//!
//! The design matrix `Z = lambda I + sum_t g_t g_t^T` accumulates the outer
//! products of chosen-arm gradients. The exploration width of a candidate
//! with gradient `g` is `sqrt(g^T Z^{-1} g / m)`.
//!
//! Exact mode never forms `Z`: it maintains `Z^{-1}` directly through the
//! Sherman-Morrison identity
//!
//! ```text
//! (Z + g g^T)^{-1} = Z^{-1} - (Z^{-1} g)(Z^{-1} g)^T / (1 + g^T Z^{-1} g)
//! ```
//!
//! The subtracted term is computed from `u = Z^{-1} g / sqrt(1 + g^T Z^{-1} g)`
//! so the update is exactly symmetric in floating point and `Z^{-1}` stays
//! symmetric positive definite. Diagonal mode keeps only
//! `diag(lambda + sum g_t^2)` as a cheap approximation for large parameter
//! counts.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceMode {
    #[default]
    Exact,
    Diagonal,
}

impl fmt::Display for ConfidenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfidenceMode::Exact => f.write_str("exact"),
            ConfidenceMode::Diagonal => f.write_str("diagonal"),
        }
    }
}

impl FromStr for ConfidenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ConfidenceMode::Exact),
            "diagonal" => Ok(ConfidenceMode::Diagonal),
            other => Err(Error::InvalidConfig(format!(
                "unknown confidence mode: {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
enum Storage {
    Exact { z_inv: Array2<f64> },
    Diagonal { diag: Array1<f64> },
}

/// Running confidence state over a `p`-dimensional gradient space.
#[derive(Debug, Clone)]
pub struct ConfidenceState {
    lambda: f64,
    /// Network width `m` appearing in the denominator of the width formula.
    m: usize,
    updates: usize,
    storage: Storage,
}

impl ConfidenceState {
    pub fn new(p: usize, lambda: f64, m: usize, mode: ConfidenceMode) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidConfig(
                "confidence dimension must be positive".into(),
            ));
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: lambda,
            });
        }
        if m == 0 {
            return Err(Error::InvalidConfig("width divisor m must be positive".into()));
        }
        let storage = match mode {
            ConfidenceMode::Exact => Storage::Exact {
                z_inv: Array2::eye(p) / lambda,
            },
            ConfidenceMode::Diagonal => Storage::Diagonal {
                diag: Array1::from_elem(p, lambda),
            },
        };
        Ok(Self {
            lambda,
            m,
            updates: 0,
            storage,
        })
    }

    pub fn dim(&self) -> usize {
        match &self.storage {
            Storage::Exact { z_inv } => z_inv.nrows(),
            Storage::Diagonal { diag } => diag.len(),
        }
    }

    pub fn mode(&self) -> ConfidenceMode {
        match &self.storage {
            Storage::Exact { .. } => ConfidenceMode::Exact,
            Storage::Diagonal { .. } => ConfidenceMode::Diagonal,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of rank-1 updates applied so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Maintained inverse, available in exact mode for verification.
    pub fn z_inv(&self) -> Option<&Array2<f64>> {
        match &self.storage {
            Storage::Exact { z_inv } => Some(z_inv),
            Storage::Diagonal { .. } => None,
        }
    }

    fn check_vector(&self, g: &ArrayView1<f64>, context: &'static str) -> Result<()> {
        if g.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "confidence vector",
                expected: self.dim(),
                got: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context });
        }
        Ok(())
    }

    /// `sqrt(g^T Z^{-1} g / m)`.
    pub fn width(&self, g: ArrayView1<f64>) -> Result<f64> {
        self.check_vector(&g, "confidence width input")?;
        let quad = match &self.storage {
            Storage::Exact { z_inv } => {
                let v = z_inv.dot(&g);
                g.dot(&v)
            }
            Storage::Diagonal { diag } => g
                .iter()
                .zip(diag.iter())
                .map(|(gi, di)| gi * gi / di)
                .sum(),
        };
        Ok((quad.max(0.0) / self.m as f64).sqrt())
    }

    /// Widths of several candidates whose gradients are the columns of
    /// `columns` (`p x k`). One matrix product instead of `k` matrix-vector
    /// passes over `Z^{-1}`.
    pub fn width_batch(&self, columns: &ArrayView2<f64>) -> Result<Vec<f64>> {
        if columns.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "confidence batch rows",
                expected: self.dim(),
                got: columns.nrows(),
            });
        }
        if columns.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "confidence width batch input",
            });
        }
        match &self.storage {
            Storage::Exact { z_inv } => {
                let v = z_inv.dot(columns);
                let mut widths = Vec::with_capacity(columns.ncols());
                for k in 0..columns.ncols() {
                    let quad = columns.column(k).dot(&v.column(k));
                    widths.push((quad.max(0.0) / self.m as f64).sqrt());
                }
                Ok(widths)
            }
            Storage::Diagonal { .. } => (0..columns.ncols())
                .map(|k| self.width(columns.column(k)))
                .collect(),
        }
    }

    /// Rank-1 update `Z <- Z + g g^T`.
    pub fn update(&mut self, g: ArrayView1<f64>) -> Result<()> {
        self.check_vector(&g, "confidence update input")?;
        match &mut self.storage {
            Storage::Exact { z_inv } => {
                let v = z_inv.dot(&g);
                let denom = 1.0 + g.dot(&v);
                // u u^T = v v^T / denom, but products u_i * u_j commute, so
                // the stored matrix stays exactly symmetric.
                let u = v.mapv(|vi| vi / denom.sqrt());
                let us = u.as_slice().expect("contiguous");
                let zs = z_inv.as_slice_mut().expect("standard layout");
                let p = us.len();
                for i in 0..p {
                    let ui = us[i];
                    if ui == 0.0 {
                        continue;
                    }
                    let row = &mut zs[i * p..(i + 1) * p];
                    for (z, uj) in row.iter_mut().zip(us) {
                        *z -= ui * uj;
                    }
                }
            }
            Storage::Diagonal { diag } => {
                for (d, gi) in diag.iter_mut().zip(g.iter()) {
                    *d += gi * gi;
                }
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// `Z^{-1} v` (exact mode) or `diag^{-1} v` (diagonal mode).
    pub fn apply_inverse(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_vector(&v, "apply_inverse input")?;
        Ok(match &self.storage {
            Storage::Exact { z_inv } => z_inv.dot(&v),
            Storage::Diagonal { diag } => {
                Array1::from_iter(v.iter().zip(diag.iter()).map(|(vi, di)| vi / di))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn basis(p: usize, i: usize) -> Array1<f64> {
        let mut v = Array1::zeros(p);
        v[i] = 1.0;
        v
    }

    /// Test-only dense inversion via Gauss-Jordan with partial pivoting: the
    /// independent route the Sherman-Morrison path must match.
    fn invert(m: &Array2<f64>) -> Array2<f64> {
        let n = m.nrows();
        let mut a = m.clone();
        let mut inv = Array2::eye(n);
        for col in 0..n {
            let mut pivot = col;
            for row in (col + 1)..n {
                if a[(row, col)].abs() > a[(pivot, col)].abs() {
                    pivot = row;
                }
            }
            assert!(a[(pivot, col)].abs() > 1e-300, "singular test matrix");
            if pivot != col {
                for j in 0..n {
                    a.swap((col, j), (pivot, j));
                    inv.swap((col, j), (pivot, j));
                }
            }
            let diag = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= diag;
                inv[(col, j)] /= diag;
            }
            for row in 0..n {
                if row == col {
                    continue;
                }
                let factor = a[(row, col)];
                if factor == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[(row, j)] -= factor * a[(col, j)];
                    inv[(row, j)] -= factor * inv[(col, j)];
                }
            }
        }
        inv
    }

    #[test]
    fn fresh_state_width_is_initial_ridge_width() {
        let state = ConfidenceState::new(3, 1.0, 4, ConfidenceMode::Exact).unwrap();
        let w = state.width(basis(3, 0).view()).unwrap();
        assert_eq!(w, 0.5, "sqrt(1 / (lambda * m)) with lambda=1, m=4");
        let state2 = ConfidenceState::new(3, 2.0, 1, ConfidenceMode::Exact).unwrap();
        let w2 = state2.width(basis(3, 1).view()).unwrap();
        assert!((w2 - (0.5f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_has_zero_width() {
        for mode in [ConfidenceMode::Exact, ConfidenceMode::Diagonal] {
            let state = ConfidenceState::new(5, 0.7, 3, mode).unwrap();
            assert_eq!(state.width(Array1::zeros(5).view()).unwrap(), 0.0);
        }
    }

    #[test]
    fn width_scales_linearly_in_gradient_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = ConfidenceState::new(6, 1.0, 2, ConfidenceMode::Exact).unwrap();
        for _ in 0..10 {
            let g = Array1::from_shape_fn(6, |_| rng.random::<f64>() - 0.5);
            state.update(g.view()).unwrap();
        }
        let g = Array1::from_shape_fn(6, |_| rng.random::<f64>() - 0.5);
        let w1 = state.width(g.view()).unwrap();
        let w3 = state.width((&g * 3.0).view()).unwrap();
        assert!((w3 - 3.0 * w1).abs() <= 1e-12 * w1.max(1.0));
    }

    #[test]
    fn single_basis_update_matches_closed_form() {
        // Z = diag(2, 1) after adding e1 e1^T to the identity, so widths are
        // sqrt(1/2) and 1 with m = 1.
        let mut state = ConfidenceState::new(2, 1.0, 1, ConfidenceMode::Exact).unwrap();
        state.update(basis(2, 0).view()).unwrap();
        let w0 = state.width(basis(2, 0).view()).unwrap();
        let w1 = state.width(basis(2, 1).view()).unwrap();
        assert!((w0 - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((w1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_update_leaves_width_untouched() {
        let mut state = ConfidenceState::new(2, 1.0, 1, ConfidenceMode::Exact).unwrap();
        state.update(basis(2, 0).view()).unwrap();
        let before = state.width(basis(2, 0).view()).unwrap();
        state.update(basis(2, 1).view()).unwrap();
        let after = state.width(basis(2, 0).view()).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn repeated_update_with_same_gradient_strictly_shrinks_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Array1::from_shape_fn(8, |_| rng.random::<f64>() - 0.5);
        for mode in [ConfidenceMode::Exact, ConfidenceMode::Diagonal] {
            let mut state = ConfidenceState::new(8, 1.0, 4, mode).unwrap();
            let mut prev = state.width(g.view()).unwrap();
            for _ in 0..5 {
                state.update(g.view()).unwrap();
                let w = state.width(g.view()).unwrap();
                assert!(w < prev, "width must strictly decrease along its own direction");
                prev = w;
            }
        }
    }

    #[test]
    fn zero_update_is_a_no_op() {
        let mut state = ConfidenceState::new(4, 1.0, 2, ConfidenceMode::Exact).unwrap();
        let before = state.z_inv().unwrap().clone();
        state.update(Array1::zeros(4).view()).unwrap();
        assert_eq!(state.z_inv().unwrap(), &before);
    }

    #[test]
    fn sherman_morrison_matches_direct_inverse() {
        let p = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lambda = 0.8;
        let mut state = ConfidenceState::new(p, lambda, 4, ConfidenceMode::Exact).unwrap();
        let mut z = Array2::eye(p) * lambda;
        for _ in 0..100 {
            let g = Array1::from_shape_fn(p, |_| rng.random::<f64>() - 0.5);
            state.update(g.view()).unwrap();
            let outer = g
                .view()
                .insert_axis(ndarray::Axis(1))
                .dot(&g.view().insert_axis(ndarray::Axis(0)));
            z += &outer;
        }
        let direct = invert(&z);
        let maintained = state.z_inv().unwrap();
        let mut max_err = 0.0f64;
        for (a, b) in maintained.iter().zip(direct.iter()) {
            max_err = max_err.max((a - b).abs());
        }
        assert!(max_err <= 1e-8, "max entry error {max_err}");
    }

    #[test]
    fn maintained_inverse_stays_exactly_symmetric() {
        let p = 15;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut state = ConfidenceState::new(p, 1.0, 1, ConfidenceMode::Exact).unwrap();
        for _ in 0..50 {
            let g = Array1::from_shape_fn(p, |_| rng.random::<f64>() - 0.5);
            state.update(g.view()).unwrap();
        }
        let z = state.z_inv().unwrap();
        for i in 0..p {
            for j in 0..p {
                assert_eq!(z[(i, j)].to_bits(), z[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn width_is_monotone_nonincreasing_under_updates() {
        let p = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let probe = Array1::from_shape_fn(p, |_| rng.random::<f64>() - 0.5);
        for mode in [ConfidenceMode::Exact, ConfidenceMode::Diagonal] {
            let mut state = ConfidenceState::new(p, 1.0, 2, mode).unwrap();
            let mut prev = state.width(probe.view()).unwrap();
            for _ in 0..100 {
                let g = Array1::from_shape_fn(p, |_| rng.random::<f64>() - 0.5);
                state.update(g.view()).unwrap();
                let w = state.width(probe.view()).unwrap();
                assert!(w <= prev * (1.0 + 1e-12), "width grew: {prev} -> {w}");
                prev = w;
            }
        }
    }

    #[test]
    fn batch_widths_match_single_widths() {
        let p = 10;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut state = ConfidenceState::new(p, 1.0, 3, ConfidenceMode::Exact).unwrap();
        for _ in 0..20 {
            let g = Array1::from_shape_fn(p, |_| rng.random::<f64>() - 0.5);
            state.update(g.view()).unwrap();
        }
        let cols = Array2::from_shape_fn((p, 5), |_| rng.random::<f64>() - 0.5);
        let batch = state.width_batch(&cols.view()).unwrap();
        for (k, w) in batch.iter().enumerate() {
            let single = state.width(cols.column(k)).unwrap();
            assert!((w - single).abs() <= 1e-12);
        }
    }

    #[test]
    fn diagonal_agrees_with_exact_on_axis_aligned_updates() {
        let p = 6;
        let mut exact = ConfidenceState::new(p, 1.5, 2, ConfidenceMode::Exact).unwrap();
        let mut diag = ConfidenceState::new(p, 1.5, 2, ConfidenceMode::Diagonal).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let i = rng.random_range(0..p);
            let g = basis(p, i) * (rng.random::<f64>() * 2.0 - 1.0);
            exact.update(g.view()).unwrap();
            diag.update(g.view()).unwrap();
        }
        for i in 0..p {
            let we = exact.width(basis(p, i).view()).unwrap();
            let wd = diag.width(basis(p, i).view()).unwrap();
            assert!((we - wd).abs() <= 1e-12, "axis {i}: {we} vs {wd}");
        }
    }

    #[test]
    fn apply_inverse_solves_against_accumulated_matrix() {
        let p = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut state = ConfidenceState::new(p, 1.0, 1, ConfidenceMode::Exact).unwrap();
        let mut z = Array2::eye(p);
        for _ in 0..25 {
            let g = Array1::from_shape_fn(p, |_| rng.random::<f64>() - 0.5);
            state.update(g.view()).unwrap();
            let outer = g
                .view()
                .insert_axis(ndarray::Axis(1))
                .dot(&g.view().insert_axis(ndarray::Axis(0)));
            z += &outer;
        }
        let b = Array1::from_shape_fn(p, |_| rng.random::<f64>() - 0.5);
        let x = state.apply_inverse(b.view()).unwrap();
        let residual = z.dot(&x) - &b;
        let err = residual.dot(&residual).sqrt();
        assert!(err <= 1e-9, "|Z x - b| = {err}");
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(ConfidenceState::new(0, 1.0, 1, ConfidenceMode::Exact).is_err());
        assert!(ConfidenceState::new(3, 0.0, 1, ConfidenceMode::Exact).is_err());
        assert!(ConfidenceState::new(3, 1.0, 0, ConfidenceMode::Exact).is_err());
        let mut state = ConfidenceState::new(3, 1.0, 1, ConfidenceMode::Exact).unwrap();
        assert!(state.width(Array1::zeros(2).view()).is_err());
        assert!(state
            .update(array![f64::NAN, 0.0, 0.0].view())
            .is_err());
    }

    #[test]
    fn mode_parsing_round_trips() {
        for mode in [ConfidenceMode::Exact, ConfidenceMode::Diagonal] {
            let parsed: ConfidenceMode = mode.to_string().parse().unwrap();
            assert_eq!(parsed, mode);
        }
        assert!("banana".parse::<ConfidenceMode>().is_err());
    }
}
