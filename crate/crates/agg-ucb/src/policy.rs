//! Bandit agents: the graph-aware UCB policy and its comparison baselines.
//!
//! Every agent exposes the same two-phase protocol. `step` is pure: it scores
//! the round's candidates as `point + gamma * width` and returns the argmax
//! (lowest index on ties) together with everything the caller needs to log
//! and to apply feedback. `update` mutates state with the observed reward:
//! ingest contexts, retrain the estimator, and fold the chosen arm's
//! selection-time gradient into the confidence matrix.

use ndarray::{Array1, Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::confidence::{ConfidenceMode, ConfidenceState};
use crate::embedding::{embed, ArmContext};
use crate::error::{Error, Result};
use crate::graph::{ArmGroupGraph, KernelConfig, NormalizedAdjacency};
use crate::network::{
    self, fc_value_and_accumulate, init_fc_params, init_params, Activation, FcParams, FcShape,
    NetworkParams, NetworkShape,
};
use crate::trainer::{fc_train, train, ReplayBuffer, TrainConfig};

/// Agent hyperparameters shared by the graph policy and the neural
/// baselines.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AgentConfig {
    /// Exploration weight on the confidence width. Zero yields a greedy
    /// policy on point estimates.
    pub gamma: f64,
    /// Ridge regularization for the gradient matrix.
    pub lambda: f64,
    /// Hidden width of the scoring network.
    pub m: usize,
    /// Total depth (GNN layer plus fully-connected stack).
    pub depth: usize,
    /// Neighborhood aggregation power of the normalized adjacency.
    pub k_hop: usize,
    pub kernel: KernelConfig,
    pub train: TrainConfig,
    pub mode: ConfidenceMode,
    pub activation: Activation,
    /// Feed every candidate context into the graph estimator (the faithful
    /// reading of group context sets); `false` restricts updates to the
    /// chosen arm.
    pub ingest_all: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            lambda: 1.0,
            m: 32,
            depth: 2,
            k_hop: 1,
            kernel: KernelConfig::default(),
            train: TrainConfig::default(),
            mode: ConfidenceMode::Exact,
            activation: Activation::Tanh,
            ingest_all: true,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: self.gamma,
            });
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: self.lambda,
            });
        }
        self.kernel.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

/// Scores of a single candidate, kept for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub point: f64,
    pub width: f64,
    pub score: f64,
}

/// Outcome of one selection step.
#[derive(Debug, Clone)]
pub struct RoundDecision {
    pub chosen_index: usize,
    pub chosen: ArmContext,
    pub point: f64,
    pub width: f64,
    pub score: f64,
    pub per_candidate: Vec<CandidateScore>,
    /// Gradient of the chosen arm's score at the selection-time parameters;
    /// this is the rank-1 direction folded into the confidence matrix on
    /// update.
    chosen_gradient: Array1<f64>,
}

impl RoundDecision {
    pub fn chosen_gradient(&self) -> &Array1<f64> {
        &self.chosen_gradient
    }
}

/// Picks the argmax index with the lowest-index tie rule. `scores` must be
/// nonempty and finite.
fn argmax(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            context: "candidate scores",
        });
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

fn assemble_decision(
    candidates: &[ArmContext],
    points: Vec<f64>,
    widths: Vec<f64>,
    gamma: f64,
    gradients: Array2<f64>,
) -> Result<RoundDecision> {
    let per_candidate: Vec<CandidateScore> = points
        .iter()
        .zip(&widths)
        .map(|(&point, &width)| CandidateScore {
            point,
            width,
            score: point + gamma * width,
        })
        .collect();
    let scores: Vec<f64> = per_candidate.iter().map(|c| c.score).collect();
    let chosen_index = argmax(&scores)?;
    let chosen = candidates[chosen_index].clone();
    Ok(RoundDecision {
        chosen_index,
        chosen,
        point: per_candidate[chosen_index].point,
        width: per_candidate[chosen_index].width,
        score: per_candidate[chosen_index].score,
        per_candidate,
        chosen_gradient: gradients.column(chosen_index).to_owned(),
    })
}

/// Common interface of all policies: a pure scoring step and a mutating
/// feedback step.
pub trait Agent {
    fn name(&self) -> &'static str;

    /// Scores candidates and picks one. Does not mutate the agent.
    fn step(&self, candidates: &[ArmContext]) -> Result<RoundDecision>;

    /// Applies the observed reward for a decision produced by this agent's
    /// current state.
    fn update(
        &mut self,
        candidates: &[ArmContext],
        decision: &RoundDecision,
        reward: f64,
    ) -> Result<()>;

    /// Training loss after the most recent update; zero before any update
    /// and for policies without a trained estimator.
    fn last_loss(&self) -> f64;
}

fn check_feedback(candidates: &[ArmContext], decision: &RoundDecision, reward: f64) -> Result<()> {
    if decision.chosen_index >= candidates.len() {
        return Err(Error::DimensionMismatch {
            context: "decision index vs candidates",
            expected: candidates.len(),
            got: decision.chosen_index,
        });
    }
    if !reward.is_finite() {
        return Err(Error::NonFinite {
            context: "observed reward",
        });
    }
    Ok(())
}

/// The graph-aware UCB policy: GNN scorer over the estimated group graph,
/// gradient-based confidence widths, full-history retraining each round.
pub struct AggUcbAgent {
    config: AgentConfig,
    theta0: NetworkParams,
    params: NetworkParams,
    graph: ArmGroupGraph,
    s_power: NormalizedAdjacency,
    confidence: ConfidenceState,
    buffer: ReplayBuffer,
    last_loss: f64,
}

impl AggUcbAgent {
    pub fn new(config: AgentConfig, n_groups: usize, d_x: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let shape = NetworkShape {
            m: config.m,
            depth: config.depth,
            d_x,
            n_groups,
            activation: config.activation,
        };
        let theta0 = init_params(shape, seed)?;
        let graph = ArmGroupGraph::new(n_groups, config.kernel)?;
        let s_power = graph.normalized_adjacency_power(config.k_hop);
        let confidence =
            ConfidenceState::new(shape.param_len(), config.lambda, config.m, config.mode)?;
        Ok(Self {
            config,
            params: theta0.clone(),
            theta0,
            graph,
            s_power,
            confidence,
            buffer: ReplayBuffer::new(),
            last_loss: 0.0,
        })
    }

    pub fn graph(&self) -> &ArmGroupGraph {
        &self.graph
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn confidence(&self) -> &ConfidenceState {
        &self.confidence
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }
}

impl Agent for AggUcbAgent {
    fn name(&self) -> &'static str {
        "agg_ucb"
    }

    fn step(&self, candidates: &[ArmContext]) -> Result<RoundDecision> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let p = self.params.shape().param_len();
        // Column-major so each candidate's gradient column is one contiguous
        // slice for the accumulator.
        let mut gradients = Array2::zeros((p, candidates.len()).f());
        let mut points = Vec::with_capacity(candidates.len());
        for (idx, candidate) in candidates.iter().enumerate() {
            let e = embed(candidate, self.params.shape().n_groups)?;
            let mut column = gradients.column_mut(idx);
            let slice = column
                .as_slice_memory_order_mut()
                .expect("contiguous column");
            let value = network::value_and_accumulate(
                &self.s_power,
                &e,
                candidate.group,
                &self.params,
                |_| 1.0,
                slice,
            )?;
            points.push(value);
        }
        let widths = self.confidence.width_batch(&gradients.view())?;
        assemble_decision(candidates, points, widths, self.config.gamma, gradients)
    }

    fn update(
        &mut self,
        candidates: &[ArmContext],
        decision: &RoundDecision,
        reward: f64,
    ) -> Result<()> {
        check_feedback(candidates, decision, reward)?;
        if self.config.ingest_all {
            let batch: Vec<(usize, &Array1<f64>)> = candidates
                .iter()
                .map(|c| (c.group, &c.features))
                .collect();
            self.graph.ingest_batch(&batch)?;
        } else {
            self.graph
                .ingest(decision.chosen.group, &decision.chosen.features)?;
        }
        self.s_power = self.graph.normalized_adjacency_power(self.config.k_hop);
        self.buffer.push(decision.chosen.clone(), reward)?;
        let start = if self.config.train.warm_start {
            self.params.clone()
        } else {
            self.theta0.clone()
        };
        let outcome = train(&start, &self.buffer, &self.s_power, &self.config.train)?;
        self.params = outcome.params;
        self.last_loss = outcome.final_loss;
        self.confidence.update(decision.chosen_gradient.view())?;
        Ok(())
    }

    fn last_loss(&self) -> f64 {
        self.last_loss
    }
}

/// How an FC baseline turns an arm context into its network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FcInput {
    /// Raw context features: one network pooled across all groups.
    Raw,
    /// The group-aware embedded row (dimension `d_x * n_groups`): one
    /// network, but inputs live in disjoint per-group blocks.
    EmbeddedRow { n_groups: usize },
}

/// Gradient-UCB policy on a plain FC network; covers both the pooled
/// baseline (raw contexts) and the independent baseline (embedded rows).
pub struct NeuralFcAgent {
    name: &'static str,
    config: AgentConfig,
    input: FcInput,
    theta0: FcParams,
    params: FcParams,
    confidence: ConfidenceState,
    entries: Vec<(Array1<f64>, f64)>,
    last_loss: f64,
}

impl NeuralFcAgent {
    fn with_input(
        name: &'static str,
        config: AgentConfig,
        input: FcInput,
        d_x: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let input_dim = match input {
            FcInput::Raw => d_x,
            FcInput::EmbeddedRow { n_groups } => d_x * n_groups,
        };
        let shape = FcShape {
            input_dim,
            m: config.m,
            depth: config.depth,
            activation: config.activation,
        };
        let theta0 = init_fc_params(shape, seed)?;
        let confidence =
            ConfidenceState::new(shape.param_len(), config.lambda, config.m, config.mode)?;
        Ok(Self {
            name,
            config,
            input,
            params: theta0.clone(),
            theta0,
            confidence,
            entries: Vec::new(),
            last_loss: 0.0,
        })
    }

    /// Pooled baseline: a single FC network over raw contexts, blind to
    /// groups.
    pub fn pooled(config: AgentConfig, d_x: usize, seed: u64) -> Result<Self> {
        Self::with_input("neural_pool", config, FcInput::Raw, d_x, seed)
    }

    /// Independent baseline: an FC network over the group-aware embedded
    /// row, so each group occupies its own input block.
    pub fn independent(config: AgentConfig, n_groups: usize, d_x: usize, seed: u64) -> Result<Self> {
        Self::with_input(
            "neural_ind",
            config,
            FcInput::EmbeddedRow { n_groups },
            d_x,
            seed,
        )
    }

    fn network_input(&self, candidate: &ArmContext) -> Result<Array1<f64>> {
        match self.input {
            FcInput::Raw => Ok(candidate.features.clone()),
            FcInput::EmbeddedRow { n_groups } => {
                let e = embed(candidate, n_groups)?;
                e.dense_row(candidate.group)
            }
        }
    }
}

impl Agent for NeuralFcAgent {
    fn name(&self) -> &'static str {
        self.name
    }

    fn step(&self, candidates: &[ArmContext]) -> Result<RoundDecision> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let p = self.params.shape().param_len();
        let mut gradients = Array2::zeros((p, candidates.len()).f());
        let mut points = Vec::with_capacity(candidates.len());
        for (idx, candidate) in candidates.iter().enumerate() {
            let input = self.network_input(candidate)?;
            let mut column = gradients.column_mut(idx);
            let slice = column
                .as_slice_memory_order_mut()
                .expect("contiguous column");
            let value = fc_value_and_accumulate(&self.params, input.view(), |_| 1.0, slice)?;
            points.push(value);
        }
        let widths = self.confidence.width_batch(&gradients.view())?;
        assemble_decision(candidates, points, widths, self.config.gamma, gradients)
    }

    fn update(
        &mut self,
        candidates: &[ArmContext],
        decision: &RoundDecision,
        reward: f64,
    ) -> Result<()> {
        check_feedback(candidates, decision, reward)?;
        let input = self.network_input(&decision.chosen)?;
        self.entries.push((input, reward));
        let start = if self.config.train.warm_start {
            self.params.clone()
        } else {
            self.theta0.clone()
        };
        let outcome = fc_train(&start, &self.entries, &self.config.train)?;
        self.params = outcome.params;
        self.last_loss = outcome.final_loss;
        self.confidence.update(decision.chosen_gradient.view())?;
        Ok(())
    }

    fn last_loss(&self) -> f64 {
        self.last_loss
    }
}

/// Disjoint linear UCB: an independent ridge regression per group with the
/// classic width `sqrt(x^T A_c^{-1} x)`.
pub struct LinUcbAgent {
    gamma: f64,
    states: Vec<ConfidenceState>,
    b: Vec<Array1<f64>>,
}

impl LinUcbAgent {
    pub fn new(gamma: f64, lambda: f64, n_groups: usize, d_x: usize) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
            });
        }
        let states = (0..n_groups)
            .map(|_| ConfidenceState::new(d_x, lambda, 1, ConfidenceMode::Exact))
            .collect::<Result<Vec<_>>>()?;
        let b = vec![Array1::zeros(d_x); n_groups];
        Ok(Self { gamma, states, b })
    }

    fn group_state(&self, group: usize) -> Result<&ConfidenceState> {
        self.states.get(group).ok_or(Error::GroupOutOfRange {
            group,
            n_groups: self.states.len(),
        })
    }
}

impl Agent for LinUcbAgent {
    fn name(&self) -> &'static str {
        "lin_ucb"
    }

    fn step(&self, candidates: &[ArmContext]) -> Result<RoundDecision> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let d = self.b[0].len();
        let mut gradients = Array2::zeros((d, candidates.len()));
        let mut points = Vec::with_capacity(candidates.len());
        let mut widths = Vec::with_capacity(candidates.len());
        for (idx, candidate) in candidates.iter().enumerate() {
            let state = self.group_state(candidate.group)?;
            let theta = state.apply_inverse(self.b[candidate.group].view())?;
            points.push(theta.dot(&candidate.features));
            // ConfidenceState is constructed with m=1, so this width is the
            // plain sqrt(x^T A^{-1} x).
            widths.push(state.width(candidate.features.view())?);
            gradients.column_mut(idx).assign(&candidate.features);
        }
        assemble_decision(candidates, points, widths, self.gamma, gradients)
    }

    fn update(
        &mut self,
        candidates: &[ArmContext],
        decision: &RoundDecision,
        reward: f64,
    ) -> Result<()> {
        check_feedback(candidates, decision, reward)?;
        let group = decision.chosen.group;
        if group >= self.states.len() {
            return Err(Error::GroupOutOfRange {
                group,
                n_groups: self.states.len(),
            });
        }
        self.states[group].update(decision.chosen.features.view())?;
        self.b[group].scaled_add(reward, &decision.chosen.features);
        Ok(())
    }

    fn last_loss(&self) -> f64 {
        0.0
    }
}
