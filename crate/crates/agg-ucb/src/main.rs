//! Command-line experiment runner.
//!
//! Configuration comes from an optional JSON file (the `ExperimentConfig`
//! schema) with every flag overriding the file value. Without a file, a
//! desk-scale synthetic profile is used. Exit status is nonzero when any
//! seed aborts, so partial logs are never mistaken for finished runs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use agg_ucb::env::synthetic::RewardFn;
use agg_ucb::harness::{
    grid_search, run_experiment, Algo, EnvSpec, ExperimentConfig, GridSpec,
};
use agg_ucb::policy::AgentConfig;

#[derive(Parser, Debug)]
#[command(
    name = "agg-ucb",
    about = "Simulate group-graph neural bandits and baselines, logging per-round CSVs"
)]
struct Cli {
    /// JSON experiment config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Policy: agg_ucb, neural_pool, neural_ind, lin_ucb, or oracle.
    #[arg(long)]
    algo: Option<String>,

    /// Environment preset: synthetic, classification, or recommendation.
    #[arg(long)]
    env: Option<String>,

    /// Horizon (number of rounds).
    #[arg(long = "T")]
    horizon: Option<usize>,

    /// Network width.
    #[arg(long)]
    m: Option<usize>,

    /// Network depth.
    #[arg(long = "L")]
    depth: Option<usize>,

    /// Neighborhood aggregation power.
    #[arg(long = "k-hop")]
    k_hop: Option<usize>,

    /// Exploration parameter.
    #[arg(long)]
    gamma: Option<f64>,

    /// Ridge regularization.
    #[arg(long)]
    lambda: Option<f64>,

    /// Training learning rate.
    #[arg(long)]
    eta: Option<f64>,

    /// Training steps per round.
    #[arg(long = "J")]
    steps: Option<usize>,

    /// Group-similarity bandwidth.
    #[arg(long = "sigma-s")]
    sigma_s: Option<f64>,

    /// RBF kernel bandwidth.
    #[arg(long = "sigma-k")]
    sigma_k: Option<f64>,

    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,

    /// Confidence bookkeeping: exact or diagonal.
    #[arg(long)]
    mode: Option<String>,

    /// Output directory for CSV logs.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Continue training from the previous round's weights instead of
    /// restarting from the initial ones.
    #[arg(long)]
    warm_start: bool,

    /// Write each round's training curve to this file (overwritten per
    /// round).
    #[arg(long = "train-curve")]
    train_curve: Option<PathBuf>,

    /// Run the grid search over gamma and eta instead of a single setting.
    #[arg(long)]
    grid: bool,

    /// Synthetic preset: number of arm groups.
    #[arg(long = "n-groups")]
    n_groups: Option<usize>,

    /// Synthetic preset: context dimension.
    #[arg(long = "d-x")]
    d_x: Option<usize>,

    /// Synthetic preset: reward noise standard deviation.
    #[arg(long = "noise-sigma")]
    noise_sigma: Option<f64>,

    /// Synthetic preset: reward nonlinearity (linear, cosine, quadratic).
    #[arg(long = "reward-fn")]
    reward_fn: Option<String>,

    /// Synthetic preset: number of correlated group families (omit for
    /// independent groups).
    #[arg(long)]
    families: Option<usize>,

    /// Classification preset: samples CSV (features..., label).
    #[arg(long)]
    data: Option<PathBuf>,

    /// Classification preset: sub-divisions per class.
    #[arg(long = "sub-divisions")]
    sub_divisions: Option<usize>,

    /// Recommendation preset: ratings CSV (user,item,rating).
    #[arg(long)]
    ratings: Option<PathBuf>,

    /// Recommendation preset: item-group CSV (item,group).
    #[arg(long)]
    groups: Option<PathBuf>,

    /// Recommendation preset: latent factor rank.
    #[arg(long)]
    rank: Option<usize>,
}

fn default_config() -> ExperimentConfig {
    ExperimentConfig {
        algo: Algo::AggUcb,
        env: EnvSpec::synthetic_default(),
        horizon: 200,
        agent: AgentConfig::default(),
        seeds: vec![1],
        grid: None,
        out_dir: PathBuf::from("runs"),
    }
}

fn build_env_spec(cli: &Cli, current: EnvSpec) -> Result<EnvSpec, String> {
    let selected = match &cli.env {
        None => current,
        Some(name) => match name.as_str() {
            "synthetic" => match current {
                spec @ EnvSpec::Synthetic { .. } => spec,
                _ => EnvSpec::synthetic_default(),
            },
            "classification" => EnvSpec::Classification {
                path: cli
                    .data
                    .clone()
                    .ok_or("--env classification requires --data PATH")?,
                sub_divisions: cli.sub_divisions.unwrap_or(5),
                kmeans_iters: 100,
            },
            "recommendation" => EnvSpec::Recommendation {
                ratings_path: cli
                    .ratings
                    .clone()
                    .ok_or("--env recommendation requires --ratings PATH")?,
                groups_path: cli
                    .groups
                    .clone()
                    .ok_or("--env recommendation requires --groups PATH")?,
                rank: cli.rank.unwrap_or(20),
                svd_iters: 150,
                max_items_per_round: 20,
            },
            other => return Err(format!("unknown environment `{other}`")),
        },
    };
    Ok(match selected {
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
            let reward_fn = match &cli.reward_fn {
                None => reward_fn,
                Some(s) => s.parse::<RewardFn>().map_err(|e| e.to_string())?,
            };
            EnvSpec::Synthetic {
                n_groups: cli.n_groups.unwrap_or(n_groups),
                d_x: cli.d_x.unwrap_or(d_x),
                arms_per_round,
                group_spread,
                reward_fn,
                noise_sigma: cli.noise_sigma.unwrap_or(noise_sigma),
                families: cli.families.or(families),
                world_seed,
            }
        }
        spec @ EnvSpec::Classification { .. } => {
            if let Some(data) = &cli.data {
                if let EnvSpec::Classification {
                    sub_divisions,
                    kmeans_iters,
                    ..
                } = spec
                {
                    EnvSpec::Classification {
                        path: data.clone(),
                        sub_divisions: cli.sub_divisions.unwrap_or(sub_divisions),
                        kmeans_iters,
                    }
                } else {
                    unreachable!()
                }
            } else {
                spec
            }
        }
        spec @ EnvSpec::Recommendation { .. } => spec,
    })
}

fn assemble(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut config = match &cli.config {
        None => default_config(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| format!("bad config {}: {e}", path.display()))?
        }
    };
    if let Some(algo) = &cli.algo {
        config.algo = algo.parse().map_err(|e: agg_ucb::Error| e.to_string())?;
    }
    config.env = build_env_spec(cli, config.env)?;
    if let Some(t) = cli.horizon {
        config.horizon = t;
    }
    if let Some(m) = cli.m {
        config.agent.m = m;
    }
    if let Some(depth) = cli.depth {
        config.agent.depth = depth;
    }
    if let Some(k) = cli.k_hop {
        config.agent.k_hop = k;
    }
    if let Some(gamma) = cli.gamma {
        config.agent.gamma = gamma;
    }
    if let Some(lambda) = cli.lambda {
        config.agent.lambda = lambda;
    }
    if let Some(eta) = cli.eta {
        config.agent.train.eta = eta;
    }
    if let Some(steps) = cli.steps {
        config.agent.train.steps = steps;
    }
    if cli.warm_start {
        config.agent.train.warm_start = true;
    }
    if let Some(path) = &cli.train_curve {
        config.agent.train.curve_path = Some(path.clone());
    }
    if let Some(sigma_s) = cli.sigma_s {
        config.agent.kernel = agg_ucb::graph::KernelConfig::new(
            cli.sigma_k.unwrap_or(config.agent.kernel.bandwidth_kernel),
            sigma_s,
        )
        .map_err(|e| e.to_string())?;
    } else if let Some(sigma_k) = cli.sigma_k {
        config.agent.kernel =
            agg_ucb::graph::KernelConfig::new(sigma_k, config.agent.kernel.bandwidth_similarity)
                .map_err(|e| e.to_string())?;
    }
    if let Some(seeds) = &cli.seed {
        config.seeds = seeds.clone();
    }
    if let Some(mode) = &cli.mode {
        config.agent.mode = mode.parse().map_err(|e: agg_ucb::Error| e.to_string())?;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if cli.grid && config.grid.is_none() {
        config.grid = Some(GridSpec::default());
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match assemble(&cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::FAILURE;
        }
    };

    if cli.grid || config.grid.is_some() {
        match grid_search(&config) {
            Ok(outcome) => {
                println!(
                    "best gamma {} eta {} with mean final cumulative regret {}",
                    outcome.best_gamma, outcome.best_eta, outcome.best_mean_regret
                );
                println!("summary: {}", outcome.summary_path.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        }
    } else {
        match run_experiment(&config) {
            Ok(runs) => {
                let mut failed = false;
                for run in &runs {
                    match &run.failure {
                        None => println!(
                            "seed {}: {} rounds, final cumulative regret {} -> {}",
                            run.seed,
                            run.rows.len(),
                            run.final_cum_regret(),
                            run.csv_path.display()
                        ),
                        Some(e) => {
                            failed = true;
                            eprintln!(
                                "seed {}: aborted after {} rounds ({e}); partial log at {}",
                                run.seed,
                                run.rows.len(),
                                run.csv_path.display()
                            );
                        }
                    }
                }
                if failed {
                    ExitCode::FAILURE
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        }
    }
}
