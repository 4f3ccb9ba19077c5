//! Reliability-at-eta (RETA) estimation.
//!
//! For one prompt with `N` labelled responses, the estimator draws uniform
//! `n`-subsets of the responses, keeps the RM's top `floor(eta * n)` picks of
//! each subset and averages their oracle scores:
//!
//! ```text
//!   N / (eta n) * E_A[ sum_{a in top(A)} J(a) + d * (d * J(a_(m+1:n)) + (1 - d) * J(a_(m:n))) ] / sum_all J
//! ```
//!
//! with `m = floor(eta n)` and `d = eta n - m`. The residual terms interpolate
//! between neighbouring order statistics when `eta n` is not an integer and
//! vanish when it is. A rank-0 response does not exist, so for `m = 0` its
//! term is zero. The per-prompt value is averaged over an integer grid of `n`
//! around `N^(2/3)`, then over prompts.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use thiserror::Error;

use crate::combin::{binomial, for_each_combination};
use crate::data::{BenchmarkDataset, RmScoreTable};
use crate::ranking::RankedResponses;
use crate::stats::{mean, standard_error};
use crate::stream::{stable_hash, stream};

/// Enumeration is refused above this many subsets.
pub const MAX_ENUMERATED_SUBSETS: u128 = 1_000_000;

/// Relative tolerance for treating a computed `eta * n` (or grid bound) as an integer.
const INTEGER_SNAP: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum RetaError {
    #[error("floor(eta * n) is zero for eta={eta}, n={n}")]
    EmptySelection { eta: f64, n: usize },
    #[error("oracle scores of prompt {0} sum to zero")]
    DegenerateDenominator(String),
    #[error("n range is empty for N={total}")]
    EmptyNRange { total: usize },
    #[error("{count} subsets exceed the enumeration limit")]
    TooManySubsets { count: u128 },
    #[error("eta must lie in (0, 1], got {0}")]
    InvalidEta(f64),
    #[error("subset size {n} outside [1, {total}]")]
    InvalidSubsetSize { n: usize, total: usize },
    #[error("eta grid must be non-empty and strictly decreasing")]
    InvalidEtaGrid,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, RetaError>;

/// How the expectation over `n`-subsets is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampling {
    /// `resamples` independent uniform draws per (prompt, n).
    #[default]
    Random,
    /// Every `n`-subset exactly once.
    Enumerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetaConfig {
    pub resamples: usize,
    pub n_range_low_coeff: f64,
    pub n_range_high_coeff: f64,
    pub n_exponent: f64,
    pub seed: u64,
    pub normalize: bool,
    pub resampling: Resampling,
}

impl Default for RetaConfig {
    fn default() -> Self {
        RetaConfig {
            resamples: 200,
            n_range_low_coeff: 3.0,
            n_range_high_coeff: 5.0,
            n_exponent: 2.0 / 3.0,
            seed: 0,
            normalize: true,
            resampling: Resampling::Random,
        }
    }
}

impl RetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resamples == 0 {
            return Err(RetaError::InvalidConfig("resamples must be positive".into()));
        }
        if !(self.n_range_low_coeff > 0.0) || !(self.n_range_high_coeff > 0.0) {
            return Err(RetaError::InvalidConfig("n range coefficients must be positive".into()));
        }
        if self.n_range_low_coeff > self.n_range_high_coeff {
            return Err(RetaError::InvalidConfig("n_range_low_coeff exceeds n_range_high_coeff".into()));
        }
        if !(self.n_exponent > 0.0 && self.n_exponent <= 1.0) {
            return Err(RetaError::InvalidConfig("n_exponent must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Integer subset sizes `ceil(lo N^e) ..= floor(hi N^e)`, clipped to `[1, N]`.
    pub fn n_grid(&self, total: usize) -> Result<Vec<usize>> {
        self.validate()?;
        let base = (total as f64).powf(self.n_exponent);
        let lo = snap(self.n_range_low_coeff * base).ceil().max(1.0);
        let hi = snap(self.n_range_high_coeff * base).floor().min(total as f64);
        if lo > hi {
            return Err(RetaError::EmptyNRange { total });
        }
        Ok((lo as usize..=hi as usize).collect())
    }
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= INTEGER_SNAP * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// Size of the selection for one (eta, n): `eta n = count + frac`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Selection {
    count: usize,
    frac: f64,
    size: f64,
    whole: bool,
}

impl Selection {
    fn new(eta: f64, n: usize) -> Self {
        let size = snap(eta * n as f64);
        let count = size.floor() as usize;
        let frac = size - count as f64;
        Selection {
            count,
            frac,
            size,
            whole: count >= n,
        }
    }

    /// Number of leading ranked entries the body needs.
    fn needed(&self) -> usize {
        if self.frac > 0.0 {
            self.count + 1
        } else {
            self.count
        }
    }

    /// Estimator body for one subset. `prefix[i]` is the sum of the first `i`
    /// oracle scores of the subset in RM order and `ranked` those scores.
    fn body(&self, prefix: &[f64], ranked: &[f64]) -> f64 {
        let top = prefix[self.count];
        if self.frac == 0.0 {
            return top;
        }
        let d = self.frac;
        let next = ranked[self.count];
        let last = if self.count > 0 {
            ranked[self.count - 1]
        } else {
            0.0
        };
        top + d * (d * next + (1.0 - d) * last)
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(RetaError::InvalidEta(eta))
    }
}

fn check_n(n: usize, total: usize) -> Result<()> {
    if n >= 1 && n <= total {
        Ok(())
    } else {
        Err(RetaError::InvalidSubsetSize { n, total })
    }
}

/// Indices of the RM's top `floor(eta * n)` responses in a ranked set of size `n`.
pub fn beta_subset(ranked: &RankedResponses, eta: f64, subset_size: usize) -> Result<Vec<usize>> {
    check_eta(eta)?;
    if subset_size != ranked.len() || subset_size == 0 {
        return Err(RetaError::InvalidSubsetSize {
            n: subset_size,
            total: ranked.len(),
        });
    }
    let sel = Selection::new(eta, subset_size);
    if sel.count == 0 {
        return Err(RetaError::EmptySelection { eta, n: subset_size });
    }
    Ok(ranked.order[..sel.count].to_vec())
}

/// RETA point estimate for one prompt at one subset size `n`.
pub fn reta_point_estimate(
    ranked_all: &RankedResponses,
    eta: f64,
    n: usize,
    config: &RetaConfig,
) -> Result<f64> {
    Ok(point_estimates(ranked_all, &[eta], n, config)?[0])
}

/// Point estimates for several etas from the same subsets.
///
/// Subsets are keyed by (seed, prompt, n, draw) and do not depend on eta, so
/// each entry equals the corresponding single-eta call bit for bit.
pub fn point_estimates(
    ranked_all: &RankedResponses,
    etas: &[f64],
    n: usize,
    config: &RetaConfig,
) -> Result<Vec<f64>> {
    let total = ranked_all.len();
    check_n(n, total)?;
    for &eta in etas {
        check_eta(eta)?;
    }
    let oracle_total = ranked_all.oracle_total();
    if !(oracle_total > 0.0) {
        return Err(RetaError::DegenerateDenominator(ranked_all.prompt_id.clone()));
    }

    let selections: Vec<Selection> = etas.iter().map(|&e| Selection::new(e, n)).collect();
    let needed = selections
        .iter()
        .filter(|s| !s.whole)
        .map(Selection::needed)
        .max();

    let mut sums = vec![0.0; etas.len()];
    let mut draws = 0usize;
    if let Some(needed) = needed {
        let mut ranked = Vec::with_capacity(needed);
        let mut prefix = Vec::with_capacity(needed + 1);
        let mut accumulate = |positions: &mut dyn Iterator<Item = usize>| {
            ranked.clear();
            ranked.extend(positions.take(needed).map(|p| ranked_all.oracle_scores[p]));
            prefix.clear();
            prefix.push(0.0);
            let mut acc = 0.0;
            for &j in &ranked {
                acc += j;
                prefix.push(acc);
            }
            for (sum, sel) in sums.iter_mut().zip(&selections) {
                if !sel.whole {
                    *sum += sel.body(&prefix, &ranked);
                }
            }
        };

        match config.resampling {
            Resampling::Random => {
                let key = stable_hash(&ranked_all.prompt_id);
                let mut mask = vec![false; total];
                for draw in 0..config.resamples {
                    let mut rng = stream(config.seed, key, n as u64, draw as u64);
                    mask.iter_mut().for_each(|m| *m = false);
                    for p in index::sample(&mut rng, total, n) {
                        mask[p] = true;
                    }
                    accumulate(&mut (0..total).filter(|&p| mask[p]));
                }
                draws = config.resamples;
            }
            Resampling::Enumerate => {
                let count = binomial(total, n).unwrap_or(u128::MAX);
                if count > MAX_ENUMERATED_SUBSETS {
                    return Err(RetaError::TooManySubsets { count });
                }
                for_each_combination(total, n, |subset| {
                    accumulate(&mut subset.iter().copied());
                });
                draws = count as usize;
            }
        }
    }

    Ok(selections
        .iter()
        .zip(&sums)
        .map(|(sel, &sum)| {
            if sel.whole {
                // The whole subset is selected: E[sum over A] = n/N * sum_all J exactly.
                if config.normalize {
                    1.0
                } else {
                    oracle_total / total as f64
                }
            } else {
                let expected = sum / draws as f64;
                if config.normalize {
                    total as f64 / sel.size * expected / oracle_total
                } else {
                    expected / sel.size
                }
            }
        })
        .collect())
}

/// Brute-force reference: the normalized estimator expectation by full
/// enumeration, ranking each subset from scratch.
pub fn exhaustive_reta(ranked_all: &RankedResponses, eta: f64, n: usize) -> Result<f64> {
    check_eta(eta)?;
    let total = ranked_all.len();
    check_n(n, total)?;
    let count = binomial(total, n).unwrap_or(u128::MAX);
    if count > MAX_ENUMERATED_SUBSETS {
        return Err(RetaError::TooManySubsets { count });
    }
    let oracle_total = ranked_all.oracle_total();
    if !(oracle_total > 0.0) {
        return Err(RetaError::DegenerateDenominator(ranked_all.prompt_id.clone()));
    }

    let size = snap(eta * n as f64);
    let m = size.floor() as usize;
    let d = size - m as f64;
    // Zero-padded ranks as ids reproduce the full ranking's tie-break inside subsets.
    let ids: Vec<String> = (0..total).map(|p| format!("{p:010}")).collect();
    let mut acc = 0.0;
    for_each_combination(total, n, |subset| {
        let sub_ids: Vec<&str> = subset.iter().map(|&p| ids[p].as_str()).collect();
        let scores: Vec<f64> = subset.iter().map(|&p| ranked_all.rm_scores[p]).collect();
        let oracle: Vec<f64> = subset.iter().map(|&p| ranked_all.oracle_scores[p]).collect();
        let sub = RankedResponses::new("", &sub_ids, &scores, &oracle);
        let mut body: f64 = match beta_subset(&sub, eta, n) {
            Ok(top) => top.iter().map(|&i| oracle[i]).sum(),
            Err(_) => 0.0,
        };
        if d > 0.0 {
            let next = sub.oracle_scores[m];
            let last = if m > 0 { sub.oracle_scores[m - 1] } else { 0.0 };
            body += d * (d * next + (1.0 - d) * last);
        }
        acc += body;
    });
    Ok(total as f64 / size * (acc / count as f64) / oracle_total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetaEstimate {
    pub eta: f64,
    pub value: f64,
    pub per_prompt: BTreeMap<String, f64>,
    pub std_error: f64,
    pub n_values_used: Vec<usize>,
}

impl RetaEstimate {
    fn from_values(eta: f64, ids: &[&str], values: Vec<f64>, grid: Vec<usize>) -> Self {
        RetaEstimate {
            eta,
            value: mean(&values),
            std_error: standard_error(&values),
            per_prompt: ids.iter().map(|s| s.to_string()).zip(values).collect(),
            n_values_used: grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetaCurve {
    pub rm_name: String,
    pub points: Vec<(f64, RetaEstimate)>,
}

/// 15 etas spaced evenly in `-log2(eta)` over `[0, 7]`: 1 down to 1/128.
pub fn default_eta_grid() -> Vec<f64> {
    (0..15).map(|i| (-(i as f64) * 0.5).exp2()).collect()
}

pub fn reta_estimate(
    dataset: &BenchmarkDataset,
    table: &RmScoreTable,
    eta: f64,
    config: &RetaConfig,
) -> Result<RetaEstimate> {
    check_eta(eta)?;
    let grid = config.n_grid(dataset.responses_per_prompt)?;
    let values = per_prompt_values(dataset, table, &[eta], &grid, config)?;
    let ids: Vec<&str> = dataset.prompts.iter().map(|p| p.prompt_id.as_str()).collect();
    let values = values.into_iter().map(|v| v[0]).collect();
    Ok(RetaEstimate::from_values(eta, &ids, values, grid))
}

pub fn reta_curve(
    dataset: &BenchmarkDataset,
    table: &RmScoreTable,
    eta_grid: &[f64],
    config: &RetaConfig,
) -> Result<RetaCurve> {
    if eta_grid.is_empty() || eta_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(RetaError::InvalidEtaGrid);
    }
    for &eta in eta_grid {
        check_eta(eta)?;
    }
    let grid = config.n_grid(dataset.responses_per_prompt)?;
    let values = per_prompt_values(dataset, table, eta_grid, &grid, config)?;
    let ids: Vec<&str> = dataset.prompts.iter().map(|p| p.prompt_id.as_str()).collect();
    let points = eta_grid
        .iter()
        .enumerate()
        .map(|(i, &eta)| {
            let column = values.iter().map(|v| v[i]).collect();
            (eta, RetaEstimate::from_values(eta, &ids, column, grid.clone()))
        })
        .collect();
    Ok(RetaCurve {
        rm_name: table.rm_name.clone(),
        points,
    })
}

/// `result[prompt][eta]`: point estimates averaged over the n grid.
fn per_prompt_values(
    dataset: &BenchmarkDataset,
    table: &RmScoreTable,
    etas: &[f64],
    grid: &[usize],
    config: &RetaConfig,
) -> Result<Vec<Vec<f64>>> {
    dataset
        .prompts
        .par_iter()
        .map(|p| {
            let ranked = RankedResponses::from_table(dataset, table, &p.prompt_id);
            let mut sums = vec![0.0; etas.len()];
            for &n in grid {
                let point = point_estimates(&ranked, etas, n, config)?;
                for (s, v) in sums.iter_mut().zip(point) {
                    *s += v;
                }
            }
            Ok(sums.into_iter().map(|s| s / grid.len() as f64).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranked(scores: &[f64], oracle: &[f64]) -> RankedResponses {
        let ids: Vec<String> = (0..scores.len()).map(|i| format!("r{i:03}")).collect();
        let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
        RankedResponses::new("q", &ids, scores, oracle)
    }

    fn enumerate() -> RetaConfig {
        RetaConfig {
            resampling: Resampling::Enumerate,
            ..RetaConfig::default()
        }
    }

    #[test]
    fn beta_subset_examples() {
        let r = ranked(&[3.0, 1.0, 2.0], &[1.0, 1.0, 1.0]);
        assert_eq!(beta_subset(&r, 1.0 / 3.0, 3).unwrap(), vec![0]);
        let mut all = beta_subset(&r, 1.0, 3).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);

        let tied = RankedResponses::new("q", &["b", "a", "c"], &[5.0, 5.0, 1.0], &[1.0; 3]);
        assert_eq!(beta_subset(&tied, 1.0 / 3.0, 3).unwrap(), vec![1]);

        assert_eq!(
            beta_subset(&r, 0.2, 3),
            Err(RetaError::EmptySelection { eta: 0.2, n: 3 })
        );
        assert!(matches!(beta_subset(&r, 0.5, 2), Err(RetaError::InvalidSubsetSize { .. })));
    }

    // Brute force over the six pairs of {4,3,2,1}: best-of-pair oracle scores
    // are 4,4,4,3,3,2 -> mean 10/3; times N/(eta n) = 4 and over sum J = 10 -> 4/3.
    #[test]
    fn four_response_example() {
        let r = ranked(&[4.0, 3.0, 2.0, 1.0], &[4.0, 3.0, 2.0, 1.0]);
        let exact = 4.0 / 3.0;
        assert!((exhaustive_reta(&r, 0.5, 2).unwrap() - exact).abs() < 1e-15);
        assert!((reta_point_estimate(&r, 0.5, 2, &enumerate()).unwrap() - exact).abs() < 1e-15);
    }

    #[test]
    fn eta_one_is_identity() {
        let r = ranked(&[0.3, -2.0, 5.0, 1.0, 0.0], &[2.0, 9.0, 1.0, 4.0, 3.0]);
        for n in 1..=5 {
            assert_eq!(reta_point_estimate(&r, 1.0, n, &RetaConfig::default()).unwrap(), 1.0);
            assert!((exhaustive_reta(&r, 1.0, n).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_subset_exhaustive_is_single_selection() {
        let oracle = [2.0, 9.0, 1.0, 4.0, 3.0];
        let r = ranked(&[0.3, -2.0, 5.0, 1.0, 0.0], &oracle);
        // eta = 0.4, n = N = 5: top 2 by RM are indices 2 (J=1) and 3 (J=4)
        let expected = 5.0 / 2.0 * (1.0 + 4.0) / 19.0;
        assert!((exhaustive_reta(&r, 0.4, 5).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_count_uses_residual_only() {
        // eta n = 0.5: body = 0.25 * J(top of subset); for n = N = 2 the top is J = 6
        let r = ranked(&[2.0, 1.0], &[6.0, 2.0]);
        let expected = 2.0 / 0.5 * (0.25 * 6.0) / 8.0;
        assert!((exhaustive_reta(&r, 0.25, 2).unwrap() - expected).abs() < 1e-15);
        assert!((reta_point_estimate(&r, 0.25, 2, &enumerate()).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn n_grid_defaults() {
        let cfg = RetaConfig::default();
        let grid = cfg.n_grid(256).unwrap();
        assert_eq!(grid.first(), Some(&121));
        assert_eq!(grid.last(), Some(&201));
        assert_eq!(grid.len(), 81);
        assert_eq!(cfg.n_grid(16), Err(RetaError::EmptyNRange { total: 16 }));
        // 27^(2/3) = 9 exactly: [27, 45] clipped to 27
        assert_eq!(cfg.n_grid(27).unwrap(), vec![27]);
    }

    #[test]
    fn default_eta_grid_shape() {
        let g = default_eta_grid();
        assert_eq!(g.len(), 15);
        assert_eq!(g[0], 1.0);
        assert!((g[14] - 1.0 / 128.0).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn config_validation() {
        let bad = RetaConfig {
            n_range_low_coeff: 6.0,
            ..RetaConfig::default()
        };
        assert!(matches!(bad.validate(), Err(RetaError::InvalidConfig(_))));
        let bad = RetaConfig {
            n_exponent: 1.5,
            ..RetaConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn enumeration_limit() {
        let r = ranked(&vec![1.0; 40], &vec![1.0; 40]);
        assert!(matches!(exhaustive_reta(&r, 0.5, 20), Err(RetaError::TooManySubsets { .. })));
    }

    #[test]
    fn unnormalized_is_raw_average() {
        // n = N = 4, eta = 1/2: top two by RM have J = 4 and 3
        let r = ranked(&[4.0, 3.0, 2.0, 1.0], &[4.0, 3.0, 2.0, 1.0]);
        let cfg = RetaConfig {
            normalize: false,
            ..enumerate()
        };
        assert_eq!(reta_point_estimate(&r, 0.5, 4, &cfg).unwrap(), 3.5);
        assert_eq!(reta_point_estimate(&r, 1.0, 3, &cfg).unwrap(), 2.5);
    }
}
