//! Squared-loss gradient descent over the observed history.
//!
//! The training loss over a replay buffer of `(context, reward)` pairs is
//! `L(theta) = 1/2 sum_tau (f(s, x_tau; theta) - r_tau)^2`, evaluated on the
//! current graph. Its gradient is `sum_tau (f - r_tau) * grad f`, assembled
//! in one pass per entry. Training runs `steps` full-batch descent updates
//! `theta <- theta - eta * grad L(theta)` from a caller-chosen starting
//! point: the round-zero random weights for a faithful cold restart, or the
//! previous round's weights when warm starts are enabled. A run aborts with
//! an error when the loss becomes non-finite or exceeds `1e6 x` its initial
//! value.

use std::io::Write;
use std::path::PathBuf;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::embedding::{embed, ArmContext};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::network::{
    self, FcParams, NetworkParams,
};

/// Multiple of the initial loss beyond which training is abandoned.
const DIVERGENCE_FACTOR: f64 = 1e6;

/// One observed pull.
#[derive(Debug, Clone)]
pub struct ReplayEntry {
    pub context: ArmContext,
    pub reward: f64,
}

/// Chronological store of every chosen arm and observed reward.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    entries: Vec<ReplayEntry>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, context: ArmContext, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::NonFinite {
                context: "replay reward",
            });
        }
        self.entries.push(ReplayEntry { context, reward });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ReplayEntry] {
        &self.entries
    }
}

/// Gradient descent settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    /// Learning rate eta.
    pub eta: f64,
    /// Number of full-batch descent steps per training call.
    pub steps: usize,
    /// Start from the previous round's weights instead of the round-zero
    /// random weights. The faithful default is a cold restart; warm starts
    /// are a practical mode that spreads fitting work across rounds.
    pub warm_start: bool,
    /// When set, each training call rewrites this file with `step,loss` rows.
    #[serde(default)]
    pub curve_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 1e-2,
            steps: 100,
            warm_start: false,
            curve_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta < 0.0 {
            return Err(Error::InvalidParameter {
                name: "eta",
                value: self.eta,
            });
        }
        Ok(())
    }
}

/// Result of one training call. `curve[j]` is the loss before step `j + 1`;
/// the last element is the loss of the returned parameters, so the curve has
/// `steps + 1` points.
#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    pub params: P,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub curve: Vec<f64>,
}

/// `1/2 sum (f - r)^2` over the buffer under the given graph. An empty
/// buffer has loss 0 by convention.
pub fn loss(
    params: &NetworkParams,
    buffer: &ReplayBuffer,
    s_power: &NormalizedAdjacency,
) -> Result<f64> {
    let mut total = 0.0;
    for entry in buffer.entries() {
        let e = embed(&entry.context, params.shape().n_groups)?;
        let f = network::forward_value(s_power, &e, entry.context.group, params)?;
        let diff = f - entry.reward;
        total += 0.5 * diff * diff;
    }
    Ok(total)
}

fn loss_and_gradient(
    params: &NetworkParams,
    buffer: &ReplayBuffer,
    s_power: &NormalizedAdjacency,
    grad: &mut [f64],
) -> Result<f64> {
    grad.fill(0.0);
    let mut total = 0.0;
    for entry in buffer.entries() {
        let e = embed(&entry.context, params.shape().n_groups)?;
        let reward = entry.reward;
        let f = network::value_and_accumulate(
            s_power,
            &e,
            entry.context.group,
            params,
            |value| value - reward,
            grad,
        )?;
        let diff = f - reward;
        total += 0.5 * diff * diff;
    }
    Ok(total)
}

fn write_curve(path: &PathBuf, curve: &[f64]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "step,loss")?;
    for (step, loss) in curve.iter().enumerate() {
        writeln!(file, "{step},{loss}")?;
    }
    Ok(())
}

fn check_divergence(step: usize, loss: f64, guard: f64) -> Result<()> {
    if !loss.is_finite() || loss > guard {
        return Err(Error::Diverged { step, loss });
    }
    Ok(())
}

/// Runs `config.steps` full-batch descent updates from `start`.
pub fn train(
    start: &NetworkParams,
    buffer: &ReplayBuffer,
    s_power: &NormalizedAdjacency,
    config: &TrainConfig,
) -> Result<TrainOutcome<NetworkParams>> {
    config.validate()?;
    let mut params = start.clone();
    if buffer.is_empty() {
        return Ok(TrainOutcome {
            params,
            initial_loss: 0.0,
            final_loss: 0.0,
            curve: vec![0.0],
        });
    }
    let mut grad = vec![0.0; start.shape().param_len()];
    let mut curve = Vec::with_capacity(config.steps + 1);
    let mut guard = f64::INFINITY;
    for step in 0..config.steps {
        let current = loss_and_gradient(&params, buffer, s_power, &mut grad)?;
        if step == 0 {
            guard = DIVERGENCE_FACTOR * current.max(1e-12);
        }
        check_divergence(step, current, guard)?;
        curve.push(current);
        network::apply_flat_update(&mut params, &grad, -config.eta)?;
    }
    let final_loss = loss(&params, buffer, s_power)?;
    if config.steps == 0 {
        guard = DIVERGENCE_FACTOR * final_loss.max(1e-12);
    }
    check_divergence(config.steps, final_loss, guard)?;
    curve.push(final_loss);
    if let Some(path) = &config.curve_path {
        write_curve(path, &curve)?;
    }
    Ok(TrainOutcome {
        params,
        initial_loss: curve[0],
        final_loss,
        curve,
    })
}

/// FC-scorer loss over `(input, reward)` pairs; the baseline analogue of
/// [`loss`].
pub fn fc_loss(params: &FcParams, entries: &[(Array1<f64>, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for (input, reward) in entries {
        let f = network::fc_value(params, input.view())?;
        let diff = f - reward;
        total += 0.5 * diff * diff;
    }
    Ok(total)
}

fn fc_loss_and_gradient(
    params: &FcParams,
    entries: &[(Array1<f64>, f64)],
    grad: &mut [f64],
) -> Result<f64> {
    grad.fill(0.0);
    let mut total = 0.0;
    for (input, reward) in entries {
        let r = *reward;
        let f = network::fc_value_and_accumulate(params, input.view(), |value| value - r, grad)?;
        let diff = f - r;
        total += 0.5 * diff * diff;
    }
    Ok(total)
}

/// FC analogue of [`train`], used by the pooled and independent baselines.
pub fn fc_train(
    start: &FcParams,
    entries: &[(Array1<f64>, f64)],
    config: &TrainConfig,
) -> Result<TrainOutcome<FcParams>> {
    config.validate()?;
    let mut params = start.clone();
    if entries.is_empty() {
        return Ok(TrainOutcome {
            params,
            initial_loss: 0.0,
            final_loss: 0.0,
            curve: vec![0.0],
        });
    }
    for (input, reward) in entries {
        if !reward.is_finite() || input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "fc training entry",
            });
        }
    }
    let mut grad = vec![0.0; start.shape().param_len()];
    let mut curve = Vec::with_capacity(config.steps + 1);
    let mut guard = f64::INFINITY;
    for step in 0..config.steps {
        let current = fc_loss_and_gradient(&params, entries, &mut grad)?;
        if step == 0 {
            guard = DIVERGENCE_FACTOR * current.max(1e-12);
        }
        check_divergence(step, current, guard)?;
        curve.push(current);
        network::fc_apply_flat_update(&mut params, &grad, -config.eta)?;
    }
    let final_loss = fc_loss(&params, entries)?;
    if config.steps == 0 {
        guard = DIVERGENCE_FACTOR * final_loss.max(1e-12);
    }
    check_divergence(config.steps, final_loss, guard)?;
    curve.push(final_loss);
    if let Some(path) = &config.curve_path {
        write_curve(path, &curve)?;
    }
    Ok(TrainOutcome {
        params,
        initial_loss: curve[0],
        final_loss,
        curve,
    })
}

/// Convenience wrapper for scoring gradients as owned vectors.
pub fn score_gradient(
    s_power: &NormalizedAdjacency,
    context: &ArmContext,
    params: &NetworkParams,
) -> Result<(f64, Array1<f64>)> {
    let e = embed(context, params.shape().n_groups)?;
    let mut acc = vec![0.0; params.shape().param_len()];
    let value =
        network::value_and_accumulate(s_power, &e, context.group, params, |_| 1.0, &mut acc)?;
    Ok((value, Array1::from(acc)))
}

/// Dot product helper used in tests and diagnostics.
pub fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.dot(&b)
}
