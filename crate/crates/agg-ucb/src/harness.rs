//! Experiment driver: seeded runs, regret accounting, CSV logs, and grid
//! search.
//!
//! A run executes one algorithm against one environment for a fixed horizon,
//! once per seed, writing one CSV per (grid point, seed) with the schema
//! `t,arm_id,group,point,width,reward,regret,cum_regret,loss`. Regret is
//! pseudo-regret against the environment's noiseless oracle. A trainer
//! divergence aborts only the affected seed, leaving its partial log on
//! disk; the overall run then reports failure.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::classification::ClassificationEnv;
use crate::env::recommendation::{RecommendationEnv, RecommendationEnvConfig};
use crate::env::synthetic::{RewardFn, SyntheticEnv, SyntheticEnvConfig};
use crate::env::{Environment, Round};
use crate::error::{Error, Result};
use crate::policy::{Agent, AggUcbAgent, AgentConfig, LinUcbAgent, NeuralFcAgent};

/// Exact CSV header of per-round logs.
pub const CSV_HEADER: &str = "t,arm_id,group,point,width,reward,regret,cum_regret,loss";

/// Which policy to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    AggUcb,
    NeuralPool,
    NeuralInd,
    LinUcb,
    /// Always plays the oracle-best candidate; a zero-regret reference.
    Oracle,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Algo::AggUcb => "agg_ucb",
            Algo::NeuralPool => "neural_pool",
            Algo::NeuralInd => "neural_ind",
            Algo::LinUcb => "lin_ucb",
            Algo::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agg_ucb" => Ok(Algo::AggUcb),
            "neural_pool" => Ok(Algo::NeuralPool),
            "neural_ind" => Ok(Algo::NeuralInd),
            "lin_ucb" => Ok(Algo::LinUcb),
            "oracle" => Ok(Algo::Oracle),
            other => Err(Error::InvalidConfig(format!(
                "unknown algorithm `{other}` (expected agg_ucb, neural_pool, neural_ind, lin_ucb, or oracle)"
            ))),
        }
    }
}

/// Environment description that round-trips through config files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Synthetic {
        n_groups: usize,
        d_x: usize,
        #[serde(default)]
        arms_per_round: Option<usize>,
        group_spread: f64,
        reward_fn: RewardFn,
        noise_sigma: f64,
        /// When set, groups share centers in `families` blocks.
        #[serde(default)]
        families: Option<usize>,
        /// Seed for the family center draw (independent of the run seed so
        /// every seed plays the same world).
        #[serde(default)]
        world_seed: u64,
    },
    Classification {
        path: PathBuf,
        sub_divisions: usize,
        #[serde(default = "default_kmeans_iters")]
        kmeans_iters: usize,
    },
    Recommendation {
        ratings_path: PathBuf,
        groups_path: PathBuf,
        rank: usize,
        #[serde(default = "default_svd_iters")]
        svd_iters: usize,
        #[serde(default = "default_max_items")]
        max_items_per_round: usize,
    },
}

fn default_kmeans_iters() -> usize {
    100
}

fn default_svd_iters() -> usize {
    150
}

fn default_max_items() -> usize {
    20
}

impl EnvSpec {
    pub fn synthetic_default() -> Self {
        EnvSpec::Synthetic {
            n_groups: 10,
            d_x: 10,
            arms_per_round: None,
            group_spread: 0.4,
            reward_fn: RewardFn::Cosine,
            noise_sigma: 0.05,
            families: Some(2),
            world_seed: 7,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Synthetic { .. } => "synthetic",
            EnvSpec::Classification { .. } => "classification",
            EnvSpec::Recommendation { .. } => "recommendation",
        }
    }

    pub fn build(&self, seed: u64) -> Result<Box<dyn Environment>> {
        match self {
            EnvSpec::Synthetic {
                n_groups,
                d_x,
                arms_per_round,
                group_spread,
                reward_fn,
                noise_sigma,
                families,
                world_seed,
            } => {
                let mut config = SyntheticEnvConfig::new(*n_groups, *d_x);
                if let Some(k) = arms_per_round {
                    config.arms_per_round = *k;
                }
                config.group_spread = *group_spread;
                config.reward_fn = *reward_fn;
                config.noise_sigma = *noise_sigma;
                if let Some(f) = families {
                    config = config.correlated_families(*f, *world_seed)?;
                }
                Ok(Box::new(SyntheticEnv::new(config, seed)?))
            }
            EnvSpec::Classification {
                path,
                sub_divisions,
                kmeans_iters,
            } => Ok(Box::new(ClassificationEnv::from_csv(
                path,
                *sub_divisions,
                *kmeans_iters,
                seed,
            )?)),
            EnvSpec::Recommendation {
                ratings_path,
                groups_path,
                rank,
                svd_iters,
                max_items_per_round,
            } => {
                let config = RecommendationEnvConfig {
                    rank: *rank,
                    svd_iters: *svd_iters,
                    max_items_per_round: *max_items_per_round,
                };
                Ok(Box::new(RecommendationEnv::from_csv(
                    ratings_path,
                    groups_path,
                    config,
                    seed,
                )?))
            }
        }
    }
}

/// Grid-search value lists; the defaults are the documented search ranges.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridSpec {
    pub gamma: Vec<f64>,
    pub eta: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            gamma: vec![1e-1, 1e-2, 1e-3],
            eta: vec![1e-2, 1e-3, 1e-4],
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub env: EnvSpec,
    /// Number of rounds T.
    pub horizon: usize,
    pub agent: AgentConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must be nonempty".into()));
        }
        self.agent.validate()?;
        Ok(())
    }
}

/// One logged round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub t: usize,
    pub arm_id: u64,
    pub group: usize,
    pub point: f64,
    pub width: f64,
    pub reward: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub loss: f64,
}

impl RoundLog {
    fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            self.t,
            self.arm_id,
            self.group,
            self.point,
            self.width,
            self.reward,
            self.regret,
            self.cum_regret,
            self.loss
        )
    }
}

/// Result of one seed's run.
#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub rows: Vec<RoundLog>,
    pub csv_path: PathBuf,
    /// Set when the run aborted early (for example trainer divergence); the
    /// CSV then holds the partial log.
    pub failure: Option<Error>,
}

impl SeedRun {
    pub fn final_cum_regret(&self) -> f64 {
        self.rows.last().map(|r| r.cum_regret).unwrap_or(0.0)
    }
}

fn build_agent(
    algo: Algo,
    config: &AgentConfig,
    n_groups: usize,
    d_x: usize,
    seed: u64,
) -> Result<Box<dyn Agent>> {
    Ok(match algo {
        Algo::AggUcb => Box::new(AggUcbAgent::new(config.clone(), n_groups, d_x, seed)?),
        Algo::NeuralPool => Box::new(NeuralFcAgent::pooled(config.clone(), d_x, seed)?),
        Algo::NeuralInd => Box::new(NeuralFcAgent::independent(
            config.clone(),
            n_groups,
            d_x,
            seed,
        )?),
        Algo::LinUcb => Box::new(LinUcbAgent::new(config.gamma, config.lambda, n_groups, d_x)?),
        Algo::Oracle => {
            return Err(Error::InvalidConfig(
                "oracle policy is driven by the harness, not an agent".into(),
            ))
        }
    })
}

/// Derives the agent's weight-initialization seed from the run seed. The
/// environment consumes the run seed itself.
fn agent_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

fn oracle_row(round: &Round, t: usize, cum_regret: f64) -> RoundLog {
    let best = round.best_index();
    RoundLog {
        t,
        arm_id: round.candidates[best].arm_id,
        group: round.candidates[best].group,
        point: round.oracle[best],
        width: 0.0,
        reward: round.observed[best],
        regret: 0.0,
        cum_regret,
        loss: 0.0,
    }
}

fn run_seed(
    config: &ExperimentConfig,
    seed: u64,
    csv_path: &Path,
) -> Result<SeedRun> {
    let mut env = config.env.build(seed)?;
    let mut agent: Option<Box<dyn Agent>> = match config.algo {
        Algo::Oracle => None,
        algo => Some(build_agent(
            algo,
            &config.agent,
            env.n_groups(),
            env.context_dim(),
            agent_seed(seed),
        )?),
    };

    let file = File::create(csv_path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{CSV_HEADER}")?;

    let mut rows = Vec::with_capacity(config.horizon);
    let mut cum_regret = 0.0;
    let mut failure = None;
    for t in 1..=config.horizon {
        let round = env.next_round()?;
        let row = match agent.as_mut() {
            None => {
                let row = oracle_row(&round, t, cum_regret);
                cum_regret += row.regret;
                row
            }
            Some(agent) => {
                let decision = match agent.step(&round.candidates) {
                    Ok(d) => d,
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                };
                let reward = round.observed[decision.chosen_index];
                let regret = round.regret_of(decision.chosen_index);
                cum_regret += regret;
                if let Err(e) = agent.update(&round.candidates, &decision, reward) {
                    // Log the round before aborting so the partial file
                    // reflects everything that happened.
                    let row = RoundLog {
                        t,
                        arm_id: decision.chosen.arm_id,
                        group: decision.chosen.group,
                        point: decision.point,
                        width: decision.width,
                        reward,
                        regret,
                        cum_regret,
                        loss: agent.last_loss(),
                    };
                    row.write_csv(&mut out)?;
                    out.flush()?;
                    rows.push(row);
                    failure = Some(e);
                    break;
                }
                RoundLog {
                    t,
                    arm_id: decision.chosen.arm_id,
                    group: decision.chosen.group,
                    point: decision.point,
                    width: decision.width,
                    reward,
                    regret,
                    cum_regret,
                    loss: agent.last_loss(),
                }
            }
        };
        if failure.is_some() {
            break;
        }
        row.write_csv(&mut out)?;
        out.flush()?;
        rows.push(row);
    }
    Ok(SeedRun {
        seed,
        rows,
        csv_path: csv_path.to_path_buf(),
        failure,
    })
}

fn csv_file_name(config: &ExperimentConfig, grid_point: Option<(f64, f64)>, seed: u64) -> String {
    match grid_point {
        None => format!("{}_{}_seed{}.csv", config.algo, config.env.name(), seed),
        Some((gamma, eta)) => format!(
            "{}_{}_gamma{}_eta{}_seed{}.csv",
            config.algo,
            config.env.name(),
            gamma,
            eta,
            seed
        ),
    }
}

/// Runs every seed of the experiment, writing one CSV per seed. The outer
/// `Err` covers setup problems; per-seed aborts land in `SeedRun::failure`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let path = config.out_dir.join(csv_file_name(config, None, seed));
        runs.push(run_seed(config, seed, &path)?);
    }
    Ok(runs)
}

/// One grid evaluation row.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub gamma: f64,
    pub eta: f64,
    pub seed: u64,
    pub final_cum_regret: f64,
}

#[derive(Debug)]
pub struct GridOutcome {
    pub best_gamma: f64,
    pub best_eta: f64,
    pub best_mean_regret: f64,
    pub table: Vec<GridRow>,
    pub summary_path: PathBuf,
}

/// Evaluates the Cartesian product of the grid's `gamma` and `eta` lists by
/// mean final cumulative regret across seeds. Ties go to the smaller
/// `(gamma, eta)` tuple. Emits `grid_summary.csv` alongside the run CSVs.
pub fn grid_search(config: &ExperimentConfig) -> Result<GridOutcome> {
    config.validate()?;
    let grid = config.grid.clone().unwrap_or_default();
    if grid.gamma.is_empty() || grid.eta.is_empty() {
        return Err(Error::InvalidConfig("grid value lists must be nonempty".into()));
    }
    std::fs::create_dir_all(&config.out_dir)?;
    let mut table = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    for &gamma in &grid.gamma {
        for &eta in &grid.eta {
            let mut point_config = config.clone();
            point_config.agent.gamma = gamma;
            point_config.agent.train.eta = eta;
            let mut total = 0.0;
            for &seed in &config.seeds {
                let path = config
                    .out_dir
                    .join(csv_file_name(config, Some((gamma, eta)), seed));
                let run = run_seed(&point_config, seed, &path)?;
                if let Some(e) = run.failure {
                    return Err(e);
                }
                let final_regret = run.final_cum_regret();
                total += final_regret;
                table.push(GridRow {
                    gamma,
                    eta,
                    seed,
                    final_cum_regret: final_regret,
                });
            }
            let mean = total / config.seeds.len() as f64;
            let better = match best {
                None => true,
                Some((bg, be, bm)) => {
                    mean < bm
                        || (mean == bm && (gamma, eta) < (bg, be))
                }
            };
            if better {
                best = Some((gamma, eta, mean));
            }
        }
    }
    let (best_gamma, best_eta, best_mean_regret) = best.expect("nonempty grid");
    let summary_path = config.out_dir.join("grid_summary.csv");
    let mut out = BufWriter::new(File::create(&summary_path)?);
    writeln!(out, "gamma,eta,seed,final_cum_regret")?;
    for row in &table {
        writeln!(
            out,
            "{},{},{},{}",
            row.gamma, row.eta, row.seed, row.final_cum_regret
        )?;
    }
    out.flush()?;
    Ok(GridOutcome {
        best_gamma,
        best_eta,
        best_mean_regret,
        table,
        summary_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::TrainConfig;

    fn quick_env() -> EnvSpec {
        EnvSpec::Synthetic {
            n_groups: 3,
            d_x: 4,
            arms_per_round: None,
            group_spread: 0.4,
            reward_fn: RewardFn::Linear,
            noise_sigma: 0.05,
            families: None,
            world_seed: 0,
        }
    }

    fn quick_agent() -> AgentConfig {
        AgentConfig {
            m: 8,
            train: TrainConfig {
                eta: 1e-2,
                steps: 5,
                warm_start: true,
                curve_path: None,
            },
            ..AgentConfig::default()
        }
    }

    fn quick_config(algo: Algo, dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            algo,
            env: quick_env(),
            horizon: 10,
            agent: quick_agent(),
            seeds: vec![1, 2],
            grid: None,
            out_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn horizon_one_emits_one_row_per_seed() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = quick_config(Algo::LinUcb, dir.path());
        config.horizon = 1;
        let runs = run_experiment(&config).unwrap();
        assert_eq!(runs.len(), 2);
        for run in &runs {
            assert!(run.failure.is_none());
            assert_eq!(run.rows.len(), 1);
            let text = std::fs::read_to_string(&run.csv_path).unwrap();
            let lines: Vec<&str> = text.lines().collect();
            assert_eq!(lines.len(), 2);
            assert_eq!(lines[0], CSV_HEADER);
        }
    }

    #[test]
    fn oracle_runs_have_identically_zero_regret() {
        let dir = tempfile::tempdir().unwrap();
        let config = quick_config(Algo::Oracle, dir.path());
        let runs = run_experiment(&config).unwrap();
        for run in runs {
            assert!(run.rows.iter().all(|r| r.regret == 0.0));
            assert_eq!(run.final_cum_regret(), 0.0);
        }
    }

    #[test]
    fn rerun_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        for algo in [Algo::AggUcb, Algo::NeuralPool, Algo::NeuralInd, Algo::LinUcb] {
            let runs_a = run_experiment(&quick_config(algo, dir_a.path())).unwrap();
            let runs_b = run_experiment(&quick_config(algo, dir_b.path())).unwrap();
            for (a, b) in runs_a.iter().zip(&runs_b) {
                let ta = std::fs::read(&a.csv_path).unwrap();
                let tb = std::fs::read(&b.csv_path).unwrap();
                assert_eq!(ta, tb, "{algo} seed {}", a.seed);
                assert!(!ta.is_empty());
            }
        }
    }

    #[test]
    fn seeds_are_isolated() {
        let dir_joint = tempfile::tempdir().unwrap();
        let dir_single = tempfile::tempdir().unwrap();
        let mut config = quick_config(Algo::AggUcb, dir_joint.path());
        config.seeds = vec![5, 6];
        let joint = run_experiment(&config).unwrap();
        let mut config_single = quick_config(Algo::AggUcb, dir_single.path());
        for (i, seed) in [5u64, 6].iter().enumerate() {
            config_single.seeds = vec![*seed];
            let single = run_experiment(&config_single).unwrap();
            let a = std::fs::read(&joint[i].csv_path).unwrap();
            let b = std::fs::read(&single[0].csv_path).unwrap();
            assert_eq!(a, b, "seed {seed}");
        }
    }

    #[test]
    fn cumulative_regret_is_nonnegative_and_non_decreasing() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = quick_config(Algo::NeuralPool, dir.path());
        config.horizon = 25;
        config.seeds = vec![3];
        let runs = run_experiment(&config).unwrap();
        let rows = &runs[0].rows;
        assert_eq!(rows.len(), 25);
        let mut prev = 0.0;
        for row in rows {
            assert!(row.regret >= 0.0);
            assert!(row.cum_regret >= prev);
            prev = row.cum_regret;
        }
    }

    #[test]
    fn divergent_training_aborts_seed_with_partial_log() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = quick_config(Algo::AggUcb, dir.path());
        config.agent.train.eta = 1e12;
        config.agent.train.steps = 10;
        config.agent.train.warm_start = false;
        config.horizon = 15;
        config.seeds = vec![9];
        let runs = run_experiment(&config).unwrap();
        let run = &runs[0];
        assert!(matches!(run.failure, Some(Error::Diverged { .. })));
        assert!(run.rows.len() < 15, "aborted before the horizon");
        let text = std::fs::read_to_string(&run.csv_path).unwrap();
        assert_eq!(text.lines().count(), run.rows.len() + 1);
    }

    #[test]
    fn lin_ucb_regret_decreases_on_a_linear_world() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = quick_config(Algo::LinUcb, dir.path());
        config.env = EnvSpec::Synthetic {
            n_groups: 3,
            d_x: 4,
            arms_per_round: Some(6),
            group_spread: 0.8,
            reward_fn: RewardFn::Linear,
            noise_sigma: 0.02,
            families: None,
            world_seed: 0,
        };
        config.agent.gamma = 0.2;
        config.horizon = 400;
        config.seeds = vec![1, 2, 3];
        let runs = run_experiment(&config).unwrap();
        let mut first = 0.0;
        let mut last = 0.0;
        for run in &runs {
            let q = run.rows.len() / 4;
            first += run.rows[..q].iter().map(|r| r.regret).sum::<f64>() / q as f64;
            last += run.rows[run.rows.len() - q..]
                .iter()
                .map(|r| r.regret)
                .sum::<f64>()
                / q as f64;
        }
        assert!(
            last < first,
            "per-round regret should fall: first quartile {first}, last {last}"
        );
    }

    #[test]
    fn grid_search_emits_table_and_picks_argmin() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = quick_config(Algo::LinUcb, dir.path());
        config.horizon = 15;
        config.seeds = vec![1, 2];
        config.grid = Some(GridSpec {
            gamma: vec![0.1, 0.01, 0.001],
            eta: vec![0.01],
        });
        let outcome = grid_search(&config).unwrap();
        assert_eq!(outcome.table.len(), 3 * 2, "3 grid points x 2 seeds");
        // The winner's mean is no worse than every other grid point's mean.
        for &gamma in &[0.1, 0.01, 0.001] {
            let mean: f64 = outcome
                .table
                .iter()
                .filter(|r| r.gamma == gamma)
                .map(|r| r.final_cum_regret)
                .sum::<f64>()
                / 2.0;
            assert!(outcome.best_mean_regret <= mean + 1e-12);
        }
        let summary = std::fs::read_to_string(&outcome.summary_path).unwrap();
        assert_eq!(summary.lines().next().unwrap(), "gamma,eta,seed,final_cum_regret");
        assert_eq!(summary.lines().count(), 1 + 6);
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = quick_config(Algo::LinUcb, dir.path());
        config.horizon = 5;
        config.seeds = vec![1];
        config.grid = Some(GridSpec {
            gamma: vec![0.05],
            eta: vec![0.001],
        });
        let outcome = grid_search(&config).unwrap();
        assert_eq!(outcome.best_gamma, 0.05);
        assert_eq!(outcome.best_eta, 0.001);
    }

    #[test]
    fn config_validation_rejects_empty_seeds_and_zero_horizon() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = quick_config(Algo::LinUcb, dir.path());
        config.seeds.clear();
        assert!(run_experiment(&config).is_err());
        let mut config = quick_config(Algo::LinUcb, dir.path());
        config.horizon = 0;
        assert!(run_experiment(&config).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let config = quick_config(Algo::AggUcb, dir.path());
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
    }
}
