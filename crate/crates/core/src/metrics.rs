//! Comparison ranking metrics: hit rate, MRR and NDCG of the RM's j-th pick,
//! pairwise accuracy, and win-rate aggregation of head-to-head labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BenchmarkDataset, RmScoreTable};
use crate::ranking::RankedResponses;
use crate::stats::mean;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("ground-truth set is empty: floor(eta * N) = 0 for eta={eta}, N={total}")]
    EmptyGroundTruth { eta: f64, total: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("all oracle scores of prompt {0} are equal")]
    NoComparablePairs(String),
    #[error("no win-rate labels")]
    EmptyLabels,
    #[error("{path}:{line}: {message}")]
    MalformedLabel {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("label for unknown pair ({prompt_id}, {response_id})")]
    UnknownPair {
        prompt_id: String,
        response_id: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, MetricError>;

fn same_set(a: &RankedResponses, b: &RankedResponses) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(MetricError::InvalidArgument(
            "rankings must cover the same non-empty response set".into(),
        ));
    }
    Ok(())
}

/// Percentage of the oracle's top `floor(eta N)` responses found in the RM's top K.
pub fn hit_rate(
    ranked_rm: &RankedResponses,
    ranked_oracle: &RankedResponses,
    eta: f64,
    k: usize,
) -> Result<f64> {
    same_set(ranked_rm, ranked_oracle)?;
    let total = ranked_rm.len();
    if !(eta > 0.0 && eta < 1.0) {
        return Err(MetricError::InvalidArgument(format!("eta must lie in (0, 1), got {eta}")));
    }
    if k == 0 || k > total {
        return Err(MetricError::InvalidArgument(format!("K must lie in [1, {total}], got {k}")));
    }
    let gt_size = (eta * total as f64).floor() as usize;
    if gt_size == 0 {
        return Err(MetricError::EmptyGroundTruth { eta, total });
    }
    let truth: BTreeSet<usize> = ranked_oracle.order[..gt_size].iter().copied().collect();
    let hits = ranked_rm.order[..k].iter().filter(|i| truth.contains(i)).count();
    Ok(100.0 * hits as f64 / gt_size as f64)
}

/// 1-based oracle rank of the RM's j-th pick.
fn oracle_rank_of_pick(ranked_rm: &RankedResponses, ranked_oracle: &RankedResponses, j: usize) -> Result<usize> {
    same_set(ranked_rm, ranked_oracle)?;
    if j == 0 || j > ranked_rm.len() {
        return Err(MetricError::InvalidArgument(format!(
            "selection rank must lie in [1, {}], got {j}",
            ranked_rm.len()
        )));
    }
    let pick = ranked_rm.order[j - 1];
    Ok(ranked_oracle.ranks()[pick] + 1)
}

/// Reciprocal oracle rank of the RM's j-th pick (one prompt).
pub fn mrr_at_selection(ranked_rm: &RankedResponses, ranked_oracle: &RankedResponses, j: usize) -> Result<f64> {
    Ok(1.0 / oracle_rank_of_pick(ranked_rm, ranked_oracle, j)? as f64)
}

/// Single-item NDCG of the RM's j-th pick: `log2(1 + j) / log2(1 + r)` with
/// `r` its oracle rank, capped at 1.
pub fn ndcg_at_selection(ranked_rm: &RankedResponses, ranked_oracle: &RankedResponses, j: usize) -> Result<f64> {
    let r = oracle_rank_of_pick(ranked_rm, ranked_oracle, j)?;
    if r == j {
        return Ok(1.0);
    }
    let gain = 1.0 / (1.0 + r as f64).log2();
    let ideal = 1.0 / (1.0 + j as f64).log2();
    Ok((gain / ideal).min(1.0))
}

/// Agreement (percent) of one prompt's RM scores with its oracle scores over
/// all pairs with distinct oracle scores; RM ties count one half.
pub fn pairwise_accuracy_prompt(prompt_id: &str, rm: &[f64], oracle: &[f64]) -> Result<f64> {
    let mut agree = 0.0;
    let mut pairs = 0usize;
    for i in 0..oracle.len() {
        for j in i + 1..oracle.len() {
            if oracle[i] == oracle[j] {
                continue;
            }
            pairs += 1;
            if rm[i] == rm[j] {
                agree += 0.5;
            } else if (rm[i] > rm[j]) == (oracle[i] > oracle[j]) {
                agree += 1.0;
            }
        }
    }
    if pairs == 0 {
        return Err(MetricError::NoComparablePairs(prompt_id.to_string()));
    }
    Ok(100.0 * agree / pairs as f64)
}

/// Mean over prompts of per-prompt pairwise accuracy.
pub fn pairwise_accuracy(table: &RmScoreTable, dataset: &BenchmarkDataset) -> Result<f64> {
    let per_prompt = dataset
        .prompts
        .iter()
        .map(|p| {
            let rm = table.scores_for(dataset, &p.prompt_id);
            let oracle = dataset.oracle_scores(&p.prompt_id);
            pairwise_accuracy_prompt(&p.prompt_id, &rm, &oracle)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&per_prompt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Win,
    Draw,
    Loss,
}

impl Outcome {
    pub fn value(self) -> f64 {
        match self {
            Outcome::Win => 1.0,
            Outcome::Draw => 0.0,
            Outcome::Loss => -1.0,
        }
    }
}

impl FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "win" => Ok(Outcome::Win),
            "draw" => Ok(Outcome::Draw),
            "loss" => Ok(Outcome::Loss),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinRate {
    pub percent: f64,
    pub mean_score: f64,
}

pub fn win_rate_aggregate(labels: &[Outcome]) -> Result<WinRate> {
    if labels.is_empty() {
        return Err(MetricError::EmptyLabels);
    }
    let wins = labels.iter().filter(|&&o| o == Outcome::Win).count();
    let score: f64 = labels.iter().map(|o| o.value()).sum();
    let total = labels.len() as f64;
    Ok(WinRate {
        percent: 100.0 * wins as f64 / total,
        mean_score: score / total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub prompt_id: String,
    pub response_id: String,
    pub outcome: Outcome,
}

/// Source of head-to-head comparison labels.
///
/// The shipped implementation reads labels from a file; clients that query a
/// live judge implement this trait and hand the results to the same metrics.
pub trait Labeler {
    fn labels(&self) -> Result<Vec<Label>>;
}

/// Reads `{"prompt_id", "response_id", "outcome"}` JSON lines.
#[derive(Debug, Clone)]
pub struct FileLabeler {
    pub path: PathBuf,
}

impl FileLabeler {
    pub fn new(path: impl AsRef<Path>) -> Self {
        FileLabeler {
            path: path.as_ref().to_path_buf(),
        }
    }
}

impl Labeler for FileLabeler {
    fn labels(&self) -> Result<Vec<Label>> {
        let io_err = |source| MetricError::Io {
            path: self.path.clone(),
            source,
        };
        let reader = BufReader::new(File::open(&self.path).map_err(io_err)?);
        let mut labels = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let label: Label = serde_json::from_str(&line).map_err(|e| MetricError::MalformedLabel {
                path: self.path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            labels.push(label);
        }
        Ok(labels)
    }
}

/// Checks that labels refer to pairs of `dataset` and aggregates them.
pub fn win_rate_for(dataset: &BenchmarkDataset, labeler: &dyn Labeler) -> Result<WinRate> {
    let labels = labeler.labels()?;
    for l in &labels {
        let known = dataset
            .responses_for(&l.prompt_id)
            .iter()
            .any(|r| r.response_id == l.response_id);
        if !known {
            return Err(MetricError::UnknownPair {
                prompt_id: l.prompt_id.clone(),
                response_id: l.response_id.clone(),
            });
        }
    }
    let outcomes: Vec<Outcome> = labels.iter().map(|l| l.outcome).collect();
    win_rate_aggregate(&outcomes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub rm_name: String,
    /// K -> percent, averaged over prompts.
    pub hit_rate: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub ndcg: f64,
    pub selection_rank_j: usize,
    pub pairwise_accuracy: f64,
    pub win_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricOptions {
    /// Ground-truth quantile for hit rate.
    pub eta: f64,
    /// Cutoffs; empty means N/8, N/4, N/2.
    pub hit_rate_k: Vec<usize>,
    pub selection_rank_j: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            eta: 0.25,
            hit_rate_k: Vec::new(),
            selection_rank_j: 1,
        }
    }
}

pub fn default_hit_rate_k(total: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [total / 8, total / 4, total / 2]
        .into_iter()
        .filter(|&k| k >= 1)
        .collect();
    ks.dedup();
    ks
}

pub fn metric_report(
    dataset: &BenchmarkDataset,
    table: &RmScoreTable,
    options: &MetricOptions,
    labeler: Option<&dyn Labeler>,
) -> Result<MetricReport> {
    let ks = if options.hit_rate_k.is_empty() {
        default_hit_rate_k(dataset.responses_per_prompt)
    } else {
        options.hit_rate_k.clone()
    };
    let j = options.selection_rank_j;
    let mut hits: BTreeMap<usize, Vec<f64>> = ks.iter().map(|&k| (k, Vec::new())).collect();
    let mut mrr = Vec::new();
    let mut ndcg = Vec::new();
    for p in &dataset.prompts {
        let rm = RankedResponses::from_table(dataset, table, &p.prompt_id);
        let oracle = RankedResponses::by_oracle(dataset, &p.prompt_id);
        for (&k, list) in hits.iter_mut() {
            list.push(hit_rate(&rm, &oracle, options.eta, k)?);
        }
        mrr.push(mrr_at_selection(&rm, &oracle, j)?);
        ndcg.push(ndcg_at_selection(&rm, &oracle, j)?);
    }
    Ok(MetricReport {
        rm_name: table.rm_name.clone(),
        hit_rate: hits.into_iter().map(|(k, v)| (k, mean(&v))).collect(),
        mrr: mean(&mrr),
        ndcg: mean(&ndcg),
        selection_rank_j: j,
        pairwise_accuracy: pairwise_accuracy(table, dataset)?,
        win_rate: labeler
            .map(|l| win_rate_for(dataset, l).map(|w| w.percent))
            .transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(rm: &[f64], oracle: &[f64]) -> (RankedResponses, RankedResponses) {
        let ids: Vec<String> = (0..rm.len()).map(|i| format!("r{i:03}")).collect();
        let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
        (
            RankedResponses::new("q", &ids, rm, oracle),
            RankedResponses::new("q", &ids, oracle, oracle),
        )
    }

    #[test]
    fn oracle_hit_rates_at_256() {
        let oracle: Vec<f64> = (0..256).map(|i| 1.0 + (i * 37 % 256) as f64 / 32.0).collect();
        let (rm, or) = pair(&oracle, &oracle);
        assert_eq!(hit_rate(&rm, &or, 0.25, 32).unwrap(), 50.0);
        assert_eq!(hit_rate(&rm, &or, 0.25, 64).unwrap(), 100.0);
        assert_eq!(hit_rate(&rm, &or, 0.25, 128).unwrap(), 100.0);
    }

    #[test]
    fn disjoint_hit_rate_is_zero() {
        let oracle = [8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        let rm: Vec<f64> = oracle.iter().map(|x| -x).collect();
        let (rm, or) = pair(&rm, &oracle);
        assert_eq!(hit_rate(&rm, &or, 0.25, 4).unwrap(), 0.0);
        assert!(matches!(hit_rate(&rm, &or, 0.1, 4), Err(MetricError::EmptyGroundTruth { .. })));
    }

    #[test]
    fn mrr_and_ndcg_examples() {
        let oracle = [4.0, 3.0, 2.0, 1.0];
        let (rm, or) = pair(&oracle, &oracle);
        assert_eq!(mrr_at_selection(&rm, &or, 1).unwrap(), 1.0);
        assert_eq!(mrr_at_selection(&rm, &or, 2).unwrap(), 0.5);
        assert_eq!(ndcg_at_selection(&rm, &or, 1).unwrap(), 1.0);
        assert_eq!(ndcg_at_selection(&rm, &or, 2).unwrap(), 1.0);

        let worst_first = [1.0, 2.0, 3.0, 4.0];
        let (rm, or) = pair(&worst_first, &oracle);
        assert_eq!(mrr_at_selection(&rm, &or, 1).unwrap(), 0.25);

        // top pick sits at oracle rank 3
        let (rm, or) = pair(&[1.0, 2.0, 3.0, 0.0], &oracle);
        assert_eq!(ndcg_at_selection(&rm, &or, 1).unwrap(), 0.5);
    }

    #[test]
    fn pairwise_examples() {
        assert_eq!(pairwise_accuracy_prompt("q", &[3.0, 2.0, 1.0], &[3.0, 2.0, 1.0]).unwrap(), 100.0);
        assert_eq!(pairwise_accuracy_prompt("q", &[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), 0.0);
        // pairs (0,1) agree, (0,2) agree, (1,2) disagree
        let acc = pairwise_accuracy_prompt("q", &[3.0, 1.0, 2.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((acc - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(pairwise_accuracy_prompt("q", &[1.0, 1.0], &[3.0, 2.0]).unwrap(), 50.0);
        assert!(matches!(
            pairwise_accuracy_prompt("q", &[1.0, 2.0], &[2.0, 2.0]),
            Err(MetricError::NoComparablePairs(_))
        ));
    }

    #[test]
    fn win_rate_examples() {
        use Outcome::*;
        let w = win_rate_aggregate(&[Win, Loss, Draw, Win]).unwrap();
        assert_eq!((w.percent, w.mean_score), (50.0, 0.25));
        let w = win_rate_aggregate(&[Draw, Draw]).unwrap();
        assert_eq!((w.percent, w.mean_score), (0.0, 0.0));
        let w = win_rate_aggregate(&[Win; 3]).unwrap();
        assert_eq!((w.percent, w.mean_score), (100.0, 1.0));
        assert!(matches!(win_rate_aggregate(&[]), Err(MetricError::EmptyLabels)));
    }

    #[test]
    fn default_cutoffs() {
        assert_eq!(default_hit_rate_k(256), vec![32, 64, 128]);
        assert_eq!(default_hit_rate_k(4), vec![1, 2]);
    }
}
