//! Group-aware context embedding.
//!
//! An arm with feature vector `x` (dimension `d`) living in a universe of
//! `n` groups is logically embedded as the `n x (d * n)` block matrix whose
//! row `c` holds `x^T` in column block `c` and zeros elsewhere:
//!
//! ```text
//! X~ = [ x^T  0   ... 0  ]
//!      [ 0    x^T ... 0  ]
//!      [ ...             ]
//!      [ 0    0   ... x^T]
//! ```
//!
//! The matrix is identical no matter which group the arm belongs to; the
//! group only selects which output row is read. The embedding is stored as
//! `(features, n_groups)` and multiplied against weight matrices blockwise,
//! so the cost of `X~ * Theta` is `O(n * d * m)` rather than
//! `O(n^2 * d * m)`. Dense materialization exists for verification only.

use ndarray::{Array1, Array2, ArrayView2, s};

use crate::error::{Error, Result};
use crate::graph::UNIT_NORM_TOL;

/// One candidate arm: unit-norm features, the group it is offered under, and
/// an opaque identifier used in logs.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmContext {
    pub features: Array1<f64>,
    pub group: usize,
    pub arm_id: u64,
}

impl ArmContext {
    /// Wraps an already unit-norm feature vector.
    pub fn new(features: Array1<f64>, group: usize, arm_id: u64) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::DegenerateContext {
                reason: "empty feature vector",
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "arm features",
            });
        }
        let norm = features.dot(&features).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::DegenerateContext {
                reason: "features are not unit-norm",
            });
        }
        Ok(Self {
            features,
            group,
            arm_id,
        })
    }

    /// Normalizes an arbitrary nonzero feature vector onto the unit sphere.
    pub fn from_unnormalized(features: Array1<f64>, group: usize, arm_id: u64) -> Result<Self> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "arm features",
            });
        }
        let norm = features.dot(&features).sqrt();
        if norm <= 0.0 {
            return Err(Error::DegenerateContext {
                reason: "zero feature vector cannot be normalized",
            });
        }
        Self::new(features / norm, group, arm_id)
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Implicit block-diagonal embedding of one arm.
#[derive(Debug, Clone)]
pub struct EmbeddedArm {
    context: ArmContext,
    n_groups: usize,
}

/// Embeds an arm into an `n_groups`-group universe.
pub fn embed(context: &ArmContext, n_groups: usize) -> Result<EmbeddedArm> {
    if n_groups == 0 {
        return Err(Error::InvalidConfig("embedding needs at least one group".into()));
    }
    if context.group >= n_groups {
        return Err(Error::GroupOutOfRange {
            group: context.group,
            n_groups,
        });
    }
    Ok(EmbeddedArm {
        context: context.clone(),
        n_groups,
    })
}

impl EmbeddedArm {
    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn group(&self) -> usize {
        self.context.group
    }

    pub fn features(&self) -> &Array1<f64> {
        &self.context.features
    }

    pub fn context(&self) -> &ArmContext {
        &self.context
    }

    /// Row dimension of the logical matrix (`n_groups`).
    pub fn rows(&self) -> usize {
        self.n_groups
    }

    /// Column dimension of the logical matrix (`d * n_groups`).
    pub fn cols(&self) -> usize {
        self.context.features.len() * self.n_groups
    }

    /// Computes `X~ * theta` without materializing `X~`. `theta` must have
    /// `d * n_groups` rows; the result has `n_groups` rows and inherits
    /// `theta`'s column count. Row `c` equals `x^T * theta[block c]`.
    pub fn multiply_right(&self, theta: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let d = self.context.features.len();
        if theta.nrows() != d * self.n_groups {
            return Err(Error::DimensionMismatch {
                context: "embedding multiply_right",
                expected: d * self.n_groups,
                got: theta.nrows(),
            });
        }
        let m = theta.ncols();
        let mut out = Array2::zeros((self.n_groups, m));
        for c in 0..self.n_groups {
            let block = theta.slice(s![c * d..(c + 1) * d, ..]);
            let row = self.context.features.dot(&block);
            out.row_mut(c).assign(&row);
        }
        Ok(out)
    }

    /// Materializes the block-diagonal matrix; intended for verification.
    pub fn to_dense(&self) -> Array2<f64> {
        let d = self.context.features.len();
        let mut dense = Array2::zeros((self.n_groups, d * self.n_groups));
        for c in 0..self.n_groups {
            dense
                .slice_mut(s![c, c * d..(c + 1) * d])
                .assign(&self.context.features);
        }
        dense
    }

    /// Dense copy of one logical row: zeros everywhere except block `row`,
    /// which holds the features.
    pub fn dense_row(&self, row: usize) -> Result<Array1<f64>> {
        if row >= self.n_groups {
            return Err(Error::GroupOutOfRange {
                group: row,
                n_groups: self.n_groups,
            });
        }
        let d = self.context.features.len();
        let mut out = Array1::zeros(d * self.n_groups);
        out.slice_mut(s![row * d..(row + 1) * d])
            .assign(&self.context.features);
        Ok(out)
    }
}
