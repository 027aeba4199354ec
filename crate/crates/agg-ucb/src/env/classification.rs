//! Classification-as-bandit environment with augmented sub-classes.
//!
//! Every original class is split into a fixed number of sub-classes by
//! k-means on that class's samples; the sub-classes are the arm groups. A
//! round presents one sample's context once per sub-class (a multi-group
//! arm), and the reward for predicting a sub-class is 1 for the exact
//! sub-class, 0.5 for a sibling sub-class of the same original class, and 0
//! otherwise.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::kmeans::kmeans;
use super::{Environment, Round};
use crate::embedding::ArmContext;
use crate::error::{Error, Result};

/// Reward for predicting sub-class `predicted` when the truth is `actual`,
/// given the sub-class to original-class mapping.
pub fn classification_reward(predicted: usize, actual: usize, class_of: &[usize]) -> Result<f64> {
    let n = class_of.len();
    if predicted >= n || actual >= n {
        return Err(Error::GroupOutOfRange {
            group: predicted.max(actual),
            n_groups: n,
        });
    }
    if predicted == actual {
        Ok(1.0)
    } else if class_of[predicted] == class_of[actual] {
        Ok(0.5)
    } else {
        Ok(0.0)
    }
}

/// Samples with class labels, sub-divided into finer groups.
#[derive(Debug)]
pub struct ClassificationEnv {
    features: Vec<Array1<f64>>,
    /// Global sub-class per sample: `class * sub_divisions + cluster`.
    sub_labels: Vec<usize>,
    /// Sub-class to original class.
    class_of: Vec<usize>,
    sub_divisions: usize,
    d_x: usize,
    rng: ChaCha8Rng,
    next_arm_id: u64,
}

impl ClassificationEnv {
    /// Builds the environment from a feature matrix (one sample per row) and
    /// integer class labels. Rows are normalized to unit norm. Labels may be
    /// any integers; they are made dense in sorted order.
    pub fn new(
        features: &Array2<f64>,
        labels: &[i64],
        sub_divisions: usize,
        kmeans_iters: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 || labels.len() != n {
            return Err(Error::DimensionMismatch {
                context: "classification features vs labels",
                expected: n,
                got: labels.len(),
            });
        }
        if sub_divisions == 0 {
            return Err(Error::InvalidConfig(
                "sub_divisions must be positive".into(),
            ));
        }
        let mut classes: Vec<i64> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let dense_class = |label: i64| classes.binary_search(&label).expect("label seen above");

        let mut sub_labels = vec![0usize; n];
        for (class_idx, _class) in classes.iter().enumerate() {
            let members: Vec<usize> = (0..n)
                .filter(|&i| dense_class(labels[i]) == class_idx)
                .collect();
            if members.len() < sub_divisions {
                return Err(Error::ClusterCount {
                    k: sub_divisions,
                    n_points: members.len(),
                });
            }
            let mut block = Array2::zeros((members.len(), features.ncols()));
            for (row, &i) in members.iter().enumerate() {
                block.row_mut(row).assign(&features.row(i));
            }
            let clustering = kmeans(
                &block.view(),
                sub_divisions,
                kmeans_iters,
                seed.wrapping_add(class_idx as u64),
            )?;
            let mut seen = vec![false; sub_divisions];
            for (&i, &cluster) in members.iter().zip(&clustering.assignments) {
                sub_labels[i] = class_idx * sub_divisions + cluster;
                seen[cluster] = true;
            }
            if !seen.iter().all(|&s| s) {
                return Err(Error::InvalidConfig(format!(
                    "class {class_idx} collapsed below {sub_divisions} sub-divisions"
                )));
            }
        }

        let normalized: Vec<Array1<f64>> = (0..n)
            .map(|i| {
                let row = features.row(i).to_owned();
                ArmContext::from_unnormalized(row, 0, 0).map(|c| c.features)
            })
            .collect::<Result<_>>()?;

        let n_sub = classes.len() * sub_divisions;
        let class_of: Vec<usize> = (0..n_sub).map(|s| s / sub_divisions).collect();
        Ok(Self {
            d_x: features.ncols(),
            features: normalized,
            sub_labels,
            class_of,
            sub_divisions,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_arm_id: 0,
        })
    }

    /// Reads `f1,...,fk,label` rows (no header) and builds the environment.
    pub fn from_csv(path: &Path, sub_divisions: usize, kmeans_iters: usize, seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<i64> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 2 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: "expected at least one feature and a label".into(),
                });
            }
            let label: i64 = fields[fields.len() - 1].trim().parse().map_err(|_| {
                Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("bad class label `{}`", fields[fields.len() - 1]),
                }
            })?;
            let mut row = Vec::with_capacity(fields.len() - 1);
            for f in &fields[..fields.len() - 1] {
                let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("bad feature value `{f}`"),
                })?;
                row.push(v);
            }
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        message: format!(
                            "inconsistent column count: {} vs {}",
                            row.len(),
                            first.len()
                        ),
                    });
                }
            }
            rows.push(row);
            labels.push(label);
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 0,
                message: "no data rows".into(),
            });
        }
        let dim = rows[0].len();
        let mut features = Array2::zeros((rows.len(), dim));
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                features[(i, j)] = *v;
            }
        }
        Self::new(&features, &labels, sub_divisions, kmeans_iters, seed)
    }

    pub fn class_of(&self) -> &[usize] {
        &self.class_of
    }

    pub fn sub_divisions(&self) -> usize {
        self.sub_divisions
    }

    pub fn n_samples(&self) -> usize {
        self.features.len()
    }

    pub fn sub_label(&self, sample: usize) -> Option<usize> {
        self.sub_labels.get(sample).copied()
    }
}

impl Environment for ClassificationEnv {
    fn n_groups(&self) -> usize {
        self.class_of.len()
    }

    fn context_dim(&self) -> usize {
        self.d_x
    }

    fn next_round(&mut self) -> Result<Round> {
        let idx = self.rng.random_range(0..self.features.len());
        let truth = self.sub_labels[idx];
        let n_sub = self.class_of.len();
        let mut candidates = Vec::with_capacity(n_sub);
        let mut oracle = Vec::with_capacity(n_sub);
        for g in 0..n_sub {
            candidates.push(ArmContext::new(
                self.features[idx].clone(),
                g,
                self.next_arm_id,
            )?);
            oracle.push(classification_reward(g, truth, &self.class_of)?);
        }
        self.next_arm_id += 1;
        let observed = oracle.clone();
        Round::new(candidates, oracle, observed)
    }
}
