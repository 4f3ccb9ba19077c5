//! Best-of-n curve family with closed-form unbiased estimators.
//!
//! Given `N` labelled responses ranked by the RM, the probability that the
//! rank-`r` response is the `k`-th best RM pick of a uniform `n`-subset is
//!
//! ```text
//!   w_k(r) = C(r-1, k-1) * C(N-r, n-k) / C(N, n)
//! ```
//!
//! so expectations over all `C(N, n)` subsets reduce to `O(N)` weighted sums.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combin::{binomial, log_binomial, EXACT_BINOMIAL_LIMIT};
use crate::data::{BenchmarkDataset, RmScoreTable};
use crate::ranking::RankedResponses;
use crate::stats::{mean, standard_error};

#[derive(Debug, Error, PartialEq)]
pub enum BonError {
    #[error("need 1 <= k <= n <= N, got k={k}, n={n}, N={total}")]
    InvalidRank { k: usize, n: usize, total: usize },
    #[error("n values must be strictly increasing within [{min}, {total}]")]
    InvalidGrid { min: usize, total: usize },
    #[error("unknown variant {0:?} (expected best_of_n, rank_k_of_n:K or best_m_of_n:M)")]
    UnknownVariant(String),
}

pub type Result<T> = std::result::Result<T, BonError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BonVariant {
    BestOfN,
    /// Oracle score of the RM's k-th pick.
    RankKOfN(usize),
    /// Average oracle score of the RM's top m picks.
    BestMOfN(usize),
}

impl BonVariant {
    /// Smallest subset size for which the variant is defined.
    pub fn min_n(&self) -> usize {
        match *self {
            BonVariant::BestOfN => 1,
            BonVariant::RankKOfN(k) => k,
            BonVariant::BestMOfN(m) => m,
        }
    }
}

impl fmt::Display for BonVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BonVariant::BestOfN => write!(f, "best_of_n"),
            BonVariant::RankKOfN(k) => write!(f, "rank_k_of_n:{k}"),
            BonVariant::BestMOfN(m) => write!(f, "best_m_of_n:{m}"),
        }
    }
}

impl FromStr for BonVariant {
    type Err = BonError;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || BonError::UnknownVariant(s.to_string());
        let param = |rest: &str| rest.parse::<usize>().ok().filter(|&v| v >= 1).ok_or_else(unknown);
        match s.split_once(':') {
            None if s == "best_of_n" => Ok(BonVariant::BestOfN),
            Some(("rank_k_of_n", k)) => Ok(BonVariant::RankKOfN(param(k)?)),
            Some(("best_m_of_n", m)) => Ok(BonVariant::BestMOfN(param(m)?)),
            _ => Err(unknown()),
        }
    }
}

impl TryFrom<String> for BonVariant {
    type Error = BonError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BonVariant> for String {
    fn from(v: BonVariant) -> String {
        v.to_string()
    }
}

/// `w_k(r)` for `r = 1..=total` (index `r - 1`).
pub fn rank_weights(total: usize, n: usize, k: usize) -> Result<Vec<f64>> {
    if !(1 <= k && k <= n && n <= total) {
        return Err(BonError::InvalidRank { k, n, total });
    }
    let weights = if total <= EXACT_BINOMIAL_LIMIT {
        let den = binomial(total, n).expect("fits in u128") as f64;
        (1..=total)
            .map(|r| {
                let num = binomial(r - 1, k - 1).expect("fits") * binomial(total - r, n - k).expect("fits");
                num as f64 / den
            })
            .collect()
    } else {
        let den = log_binomial(total, n);
        (1..=total)
            .map(|r| {
                if r < k || total - r < n - k {
                    0.0
                } else {
                    (log_binomial(r - 1, k - 1) + log_binomial(total - r, n - k) - den).exp()
                }
            })
            .collect()
    };
    Ok(weights)
}

fn weighted(ranked: &RankedResponses, weights: &[f64]) -> f64 {
    weights
        .iter()
        .zip(&ranked.oracle_scores)
        .map(|(w, j)| w * j)
        .sum()
}

/// Expected oracle score of the RM's best pick in a uniform n-subset.
pub fn bon_estimate(ranked_all: &RankedResponses, n: usize) -> Result<f64> {
    rank_k_of_n_estimate(ranked_all, 1, n)
}

/// Expected oracle score of the RM's k-th pick in a uniform n-subset.
pub fn rank_k_of_n_estimate(ranked_all: &RankedResponses, k: usize, n: usize) -> Result<f64> {
    let weights = rank_weights(ranked_all.len(), n, k)?;
    Ok(weighted(ranked_all, &weights))
}

/// Expected average oracle score of the RM's top m picks in a uniform n-subset.
pub fn best_m_of_n_estimate(ranked_all: &RankedResponses, m: usize, n: usize) -> Result<f64> {
    if !(1 <= m && m <= n && n <= ranked_all.len()) {
        return Err(BonError::InvalidRank {
            k: m,
            n,
            total: ranked_all.len(),
        });
    }
    let mut sum = 0.0;
    for k in 1..=m {
        sum += rank_k_of_n_estimate(ranked_all, k, n)?;
    }
    Ok(sum / m as f64)
}

/// Expected value of `variant` for one prompt, with precomputed weights.
fn variant_value(ranked: &RankedResponses, weights: &[Vec<f64>]) -> f64 {
    let sum: f64 = weights.iter().map(|w| weighted(ranked, w)).sum();
    sum / weights.len() as f64
}

/// KL divergence of best-of-n sampling from the base policy: `ln n - (n-1)/n`.
pub fn kl_divergence(n: usize) -> f64 {
    let n = n as f64;
    n.ln() - (n - 1.0) / n
}

/// Powers of two from `min_n` (rounded up) to `total`.
pub fn default_n_grid(total: usize, min_n: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |&n| n.checked_mul(2))
        .take_while(|&n| n <= total)
        .filter(|&n| n >= min_n)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BonPoint {
    pub n: usize,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BonCurve {
    pub rm_name: String,
    pub variant: BonVariant,
    pub points: Vec<BonPoint>,
    pub kl: Vec<f64>,
}

pub fn bon_curve(
    dataset: &BenchmarkDataset,
    table: &RmScoreTable,
    variant: BonVariant,
    n_values: Option<&[usize]>,
) -> Result<BonCurve> {
    let total = dataset.responses_per_prompt;
    let min = variant.min_n();
    let grid = match n_values {
        Some(v) => v.to_vec(),
        None => default_n_grid(total, min),
    };
    let valid = !grid.is_empty()
        && grid.windows(2).all(|w| w[0] < w[1])
        && grid[0] >= min
        && *grid.last().unwrap() <= total;
    if !valid {
        return Err(BonError::InvalidGrid { min, total });
    }

    let ranked: Vec<RankedResponses> = dataset
        .prompts
        .par_iter()
        .map(|p| RankedResponses::from_table(dataset, table, &p.prompt_id))
        .collect();

    let points = grid
        .iter()
        .map(|&n| {
            let ranks: Vec<usize> = match variant {
                BonVariant::BestOfN => vec![1],
                BonVariant::RankKOfN(k) => vec![k],
                BonVariant::BestMOfN(m) => (1..=m).collect(),
            };
            let weights = ranks
                .iter()
                .map(|&k| rank_weights(total, n, k))
                .collect::<Result<Vec<_>>>()?;
            let values: Vec<f64> = ranked.par_iter().map(|r| variant_value(r, &weights)).collect();
            Ok(BonPoint {
                n,
                value: mean(&values),
                std_error: standard_error(&values),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BonCurve {
        rm_name: table.rm_name.clone(),
        variant,
        kl: grid.iter().map(|&n| kl_divergence(n)).collect(),
        points,
    })
}
