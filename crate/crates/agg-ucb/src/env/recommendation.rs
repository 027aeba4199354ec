//! Recommendation environment built from a ratings table.
//!
//! Ratings are min-max normalized to `[0, 1]` and arranged into a
//! zero-filled user x item matrix whose truncated SVD yields latent
//! factors; users and items each take a square-root share of the singular
//! values. An arm's context is the elementwise product of the user and item
//! factors with a constant 0.01 appended, normalized to the unit sphere.
//! Items carry one or more groups (genres); an item under several groups
//! appears once per group in the candidate set.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::svd::truncated_svd;
use super::{Environment, Round};
use crate::embedding::ArmContext;
use crate::error::{Error, Result};

/// Elementwise product of the two factors with a constant 0.01 appended,
/// normalized to unit norm. The constant keeps the vector nonzero even when
/// the factors are orthogonal in every coordinate.
pub fn gmf_context(user_factor: ArrayView1<f64>, item_factor: ArrayView1<f64>) -> Result<Array1<f64>> {
    if user_factor.len() != item_factor.len() {
        return Err(Error::DimensionMismatch {
            context: "gmf factor dimensions",
            expected: user_factor.len(),
            got: item_factor.len(),
        });
    }
    let mut out = Array1::zeros(user_factor.len() + 1);
    for (i, (u, v)) in user_factor.iter().zip(item_factor.iter()).enumerate() {
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::NonFinite {
                context: "gmf factors",
            });
        }
        out[i] = u * v;
    }
    out[user_factor.len()] = 0.01;
    let norm = out.dot(&out).sqrt();
    Ok(out / norm)
}

#[derive(Debug, Clone)]
pub struct RecommendationEnvConfig {
    /// Latent dimension of the factorization; contexts have `rank + 1`
    /// coordinates.
    pub rank: usize,
    pub svd_iters: usize,
    /// Cap on rated items presented per round.
    pub max_items_per_round: usize,
}

impl Default for RecommendationEnvConfig {
    fn default() -> Self {
        Self {
            rank: 20,
            svd_iters: 150,
            max_items_per_round: 20,
        }
    }
}

/// Ratings-driven environment with item groups.
#[derive(Debug)]
pub struct RecommendationEnv {
    user_factors: Array2<f64>,
    item_factors: Array2<f64>,
    /// Dense item index to ascending dense group indices.
    item_groups: Vec<Vec<usize>>,
    /// Dense user index to ascending dense item indices they rated.
    user_items: Vec<Vec<usize>>,
    ratings: BTreeMap<(usize, usize), f64>,
    n_groups: usize,
    max_items_per_round: usize,
    rng: ChaCha8Rng,
}

impl RecommendationEnv {
    /// Builds the environment from rating triples and item-group pairs.
    /// Ids may be arbitrary; they are made dense in sorted order. Every
    /// rated item must carry at least one group.
    pub fn new(
        ratings: &[(u64, u64, f64)],
        item_group_pairs: &[(u64, u64)],
        config: RecommendationEnvConfig,
        seed: u64,
    ) -> Result<Self> {
        if ratings.is_empty() {
            return Err(Error::InvalidConfig("ratings table is empty".into()));
        }
        if config.rank == 0 {
            return Err(Error::InvalidConfig("svd rank must be positive".into()));
        }
        if config.max_items_per_round == 0 {
            return Err(Error::InvalidConfig(
                "max_items_per_round must be positive".into(),
            ));
        }
        for (_, _, r) in ratings {
            if !r.is_finite() {
                return Err(Error::NonFinite {
                    context: "rating value",
                });
            }
        }

        let mut user_ids: Vec<u64> = ratings.iter().map(|(u, _, _)| *u).collect();
        user_ids.sort_unstable();
        user_ids.dedup();
        let mut item_ids: Vec<u64> = ratings.iter().map(|(_, i, _)| *i).collect();
        item_ids.sort_unstable();
        item_ids.dedup();
        let dense_user = |id: u64| user_ids.binary_search(&id).expect("seen above");
        let dense_item = |id: u64| item_ids.binary_search(&id).expect("seen above");

        let min = ratings.iter().map(|(_, _, r)| *r).fold(f64::INFINITY, f64::min);
        let max = ratings
            .iter()
            .map(|(_, _, r)| *r)
            .fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            return Err(Error::InvalidConfig(
                "ratings are constant; min-max normalization is undefined".into(),
            ));
        }

        let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (u, i, r) in ratings {
            table.insert((dense_user(*u), dense_item(*i)), (r - min) / (max - min));
        }

        let n_users = user_ids.len();
        let n_items = item_ids.len();
        if config.rank > n_users.min(n_items) {
            return Err(Error::InvalidConfig(format!(
                "svd rank {} exceeds min(users, items) = {}",
                config.rank,
                n_users.min(n_items)
            )));
        }
        let mut matrix = Array2::zeros((n_users, n_items));
        for (&(u, i), &r) in &table {
            matrix[(u, i)] = r;
        }
        let factors = truncated_svd(&matrix.view(), config.rank, config.svd_iters, seed)?;
        let user_factors = factors.scaled_left();
        let item_factors = factors.scaled_right();

        let mut group_ids: Vec<u64> = item_group_pairs.iter().map(|(_, g)| *g).collect();
        group_ids.sort_unstable();
        group_ids.dedup();
        let mut item_groups: Vec<Vec<usize>> = vec![Vec::new(); n_items];
        for (item, group) in item_group_pairs {
            if let Ok(idx) = item_ids.binary_search(item) {
                let g = group_ids.binary_search(group).expect("seen above");
                if !item_groups[idx].contains(&g) {
                    item_groups[idx].push(g);
                }
            }
        }
        for groups in item_groups.iter_mut() {
            groups.sort_unstable();
        }
        if let Some(bare) = item_groups.iter().position(|g| g.is_empty()) {
            return Err(Error::InvalidConfig(format!(
                "rated item {} has no group assignment",
                item_ids[bare]
            )));
        }

        let mut user_items: Vec<Vec<usize>> = vec![Vec::new(); n_users];
        for &(u, i) in table.keys() {
            user_items[u].push(i);
        }

        Ok(Self {
            user_factors,
            item_factors,
            item_groups,
            user_items,
            ratings: table,
            n_groups: group_ids.len(),
            max_items_per_round: config.max_items_per_round,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Reads `user_id,item_id,rating` triples and `item_id,group_id` pairs
    /// (headers optional: a first line that fails numeric parsing is
    /// skipped).
    pub fn from_csv(
        ratings_path: &Path,
        groups_path: &Path,
        config: RecommendationEnvConfig,
        seed: u64,
    ) -> Result<Self> {
        let ratings = parse_ratings(ratings_path)?;
        let pairs = parse_groups(groups_path)?;
        Self::new(&ratings, &pairs, config, seed)
    }

    pub fn n_users(&self) -> usize {
        self.user_factors.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.item_factors.nrows()
    }

    pub fn rating(&self, user: usize, item: usize) -> Option<f64> {
        self.ratings.get(&(user, item)).copied()
    }

    pub fn item_group_list(&self, item: usize) -> Option<&[usize]> {
        self.item_groups.get(item).map(|g| g.as_slice())
    }
}

fn parse_ratings(path: &Path) -> Result<Vec<(u64, u64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("expected user,item,rating but found {} fields", fields.len()),
            });
        }
        let parsed: Option<(u64, u64, f64)> = (|| {
            Some((
                fields[0].trim().parse().ok()?,
                fields[1].trim().parse().ok()?,
                fields[2].trim().parse().ok()?,
            ))
        })();
        match parsed {
            Some(triple) => out.push(triple),
            None if lineno == 0 => continue, // header
            None => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("bad rating row `{line}`"),
                })
            }
        }
    }
    Ok(out)
}

fn parse_groups(path: &Path) -> Result<Vec<(u64, u64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("expected item,group but found {} fields", fields.len()),
            });
        }
        let parsed: Option<(u64, u64)> = (|| {
            Some((fields[0].trim().parse().ok()?, fields[1].trim().parse().ok()?))
        })();
        match parsed {
            Some(pair) => out.push(pair),
            None if lineno == 0 => continue, // header
            None => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("bad group row `{line}`"),
                })
            }
        }
    }
    Ok(out)
}

impl Environment for RecommendationEnv {
    fn n_groups(&self) -> usize {
        self.n_groups
    }

    fn context_dim(&self) -> usize {
        self.user_factors.ncols() + 1
    }

    fn next_round(&mut self) -> Result<Round> {
        let user = self.rng.random_range(0..self.user_items.len());
        let rated = &self.user_items[user];
        // Partial Fisher-Yates when the user rated more items than the cap.
        let selected: Vec<usize> = if rated.len() <= self.max_items_per_round {
            rated.clone()
        } else {
            let mut pool = rated.clone();
            for i in 0..self.max_items_per_round {
                let j = self.rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(self.max_items_per_round);
            pool
        };
        let mut candidates = Vec::new();
        let mut oracle = Vec::new();
        for &item in &selected {
            let features = gmf_context(self.user_factors.row(user), self.item_factors.row(item))?;
            let rating = self.ratings[&(user, item)];
            for &group in &self.item_groups[item] {
                candidates.push(ArmContext::new(features.clone(), group, item as u64)?);
                oracle.push(rating);
            }
        }
        let observed = oracle.clone();
        Round::new(candidates, oracle, observed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gmf_hand_example_matches() {
        let u = array![1.0, 0.0];
        let v = array![2.0, 3.0];
        let got = gmf_context(u.view(), v.view()).unwrap();
        let raw: Array1<f64> = array![2.0, 0.0, 0.01];
        let expected = &raw / raw.dot(&raw).sqrt();
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() <= 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn all_ones_user_factor_reproduces_item_factor_direction() {
        let u = array![1.0, 1.0, 1.0];
        let v = array![0.4, -0.2, 0.9];
        let got = gmf_context(u.view(), v.view()).unwrap();
        let raw: Array1<f64> = array![0.4, -0.2, 0.9, 0.01];
        let norm = raw.dot(&raw).sqrt();
        for (a, b) in got.iter().zip(raw.iter()) {
            assert!((a - b / norm).abs() <= 1e-15);
        }
    }

    #[test]
    fn gmf_output_is_unit_norm_even_for_orthogonal_factors() {
        let u = array![1.0, 0.0];
        let v = array![0.0, 1.0];
        let got = gmf_context(u.view(), v.view()).unwrap();
        let norm = got.dot(&got).sqrt();
        assert!((norm - 1.0).abs() <= 1e-12);
        assert_eq!(got[0], 0.0);
        assert_eq!(got[1], 0.0);
        assert!((got[2] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gmf_rejects_mismatched_or_non_finite_factors() {
        let u = array![1.0, 2.0];
        let v = array![1.0];
        assert!(gmf_context(u.view(), v.view()).is_err());
        let nan = array![f64::NAN, 1.0];
        let ok = array![1.0, 1.0];
        assert!(gmf_context(nan.view(), ok.view()).is_err());
    }

    fn toy_ratings() -> Vec<(u64, u64, f64)> {
        vec![
            (10, 100, 5.0),
            (10, 101, 3.0),
            (10, 102, 1.0),
            (20, 100, 4.0),
            (20, 103, 2.0),
            (30, 101, 5.0),
            (30, 102, 2.5),
            (30, 103, 1.5),
        ]
    }

    fn toy_groups() -> Vec<(u64, u64)> {
        vec![(100, 0), (100, 7), (101, 7), (102, 3), (103, 0)]
    }

    fn toy_env(seed: u64) -> RecommendationEnv {
        let config = RecommendationEnvConfig {
            rank: 2,
            svd_iters: 200,
            max_items_per_round: 20,
        };
        RecommendationEnv::new(&toy_ratings(), &toy_groups(), config, seed).unwrap()
    }

    #[test]
    fn construction_normalizes_ratings_and_maps_groups() {
        let env = toy_env(1);
        assert_eq!(env.n_users(), 3);
        assert_eq!(env.n_items(), 4);
        assert_eq!(env.n_groups(), 3, "groups 0, 3, 7 made dense");
        assert_eq!(env.context_dim(), 3);
        // Min-max: rating 5.0 -> 1.0, rating 1.0 -> 0.0.
        assert_eq!(env.rating(0, 0).unwrap(), 1.0);
        assert_eq!(env.rating(0, 2).unwrap(), 0.0);
        // Item 100 carries two groups (0 and 7 -> dense 0 and 2).
        assert_eq!(env.item_group_list(0).unwrap(), &[0, 2]);
    }

    #[test]
    fn rounds_expand_multi_group_items_and_stay_unit_norm() {
        let mut env = toy_env(2);
        for _ in 0..20 {
            let round = env.next_round().unwrap();
            for (c, &r) in round.candidates.iter().zip(&round.oracle) {
                let norm = c.features.dot(&c.features).sqrt();
                assert!((norm - 1.0).abs() <= 1e-9);
                assert!((0.0..=1.0).contains(&r));
            }
            // Same item under several groups shares features and reward.
            for i in 0..round.candidates.len() {
                for j in (i + 1)..round.candidates.len() {
                    if round.candidates[i].arm_id == round.candidates[j].arm_id {
                        assert_eq!(round.candidates[i].features, round.candidates[j].features);
                        assert_eq!(round.oracle[i], round.oracle[j]);
                        assert_ne!(round.candidates[i].group, round.candidates[j].group);
                    }
                }
            }
        }
    }

    #[test]
    fn item_cap_limits_candidates() {
        let mut ratings = Vec::new();
        for item in 0..30u64 {
            ratings.push((1, item, (item % 5) as f64));
        }
        let pairs: Vec<(u64, u64)> = (0..30u64).map(|i| (i, i % 4)).collect();
        let config = RecommendationEnvConfig {
            rank: 1,
            svd_iters: 100,
            max_items_per_round: 5,
        };
        let mut env = RecommendationEnv::new(&ratings, &pairs, config, 3).unwrap();
        for _ in 0..10 {
            let round = env.next_round().unwrap();
            assert_eq!(round.candidates.len(), 5, "single-group items, capped");
        }
    }

    #[test]
    fn missing_group_assignment_is_an_error() {
        let ratings = toy_ratings();
        let pairs = vec![(100u64, 0u64)];
        let config = RecommendationEnvConfig {
            rank: 2,
            svd_iters: 50,
            max_items_per_round: 5,
        };
        match RecommendationEnv::new(&ratings, &pairs, config, 0) {
            Err(Error::InvalidConfig(msg)) => assert!(msg.contains("no group")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn constant_ratings_are_rejected() {
        let ratings = vec![(1u64, 1u64, 3.0), (2, 2, 3.0)];
        let pairs = vec![(1u64, 0u64), (2, 0)];
        let config = RecommendationEnvConfig {
            rank: 1,
            svd_iters: 10,
            max_items_per_round: 5,
        };
        assert!(RecommendationEnv::new(&ratings, &pairs, config, 0).is_err());
    }

    #[test]
    fn csv_ingestion_with_headers_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ratings_path = dir.path().join("ratings.csv");
        let groups_path = dir.path().join("groups.csv");
        let mut text = String::from("user_id,item_id,rating\n");
        for (u, i, r) in toy_ratings() {
            text.push_str(&format!("{u},{i},{r}\n"));
        }
        std::fs::write(&ratings_path, text).unwrap();
        let mut text = String::from("item_id,group_id\n");
        for (i, g) in toy_groups() {
            text.push_str(&format!("{i},{g}\n"));
        }
        std::fs::write(&groups_path, text).unwrap();
        let config = RecommendationEnvConfig {
            rank: 2,
            svd_iters: 100,
            max_items_per_round: 10,
        };
        let env = RecommendationEnv::from_csv(&ratings_path, &groups_path, config.clone(), 5).unwrap();
        assert_eq!(env.n_users(), 3);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "user,item,rating\n1,2,oops\n").unwrap();
        match RecommendationEnv::from_csv(&bad, &groups_path, config, 5) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rounds_are_deterministic_under_seed() {
        let mut a = toy_env(11);
        let mut b = toy_env(11);
        for _ in 0..10 {
            let ra = a.next_round().unwrap();
            let rb = b.next_round().unwrap();
            assert_eq!(ra.oracle, rb.oracle);
            assert_eq!(ra.candidates.len(), rb.candidates.len());
            for (ca, cb) in ra.candidates.iter().zip(&rb.candidates) {
                assert_eq!(ca.features, cb.features);
                assert_eq!(ca.group, cb.group);
            }
        }
    }
}
