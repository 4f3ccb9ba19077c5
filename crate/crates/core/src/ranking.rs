//! Per-prompt rankings shared by every estimator and metric.

use std::cmp::Ordering;

use crate::data::{BenchmarkDataset, RmScoreTable};

/// Responses of one prompt ordered by a scorer, best first.
///
/// Ties are broken by ascending `response_id`, so the ranking depends only on
/// the relative order of scores and never on their magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResponses {
    pub prompt_id: String,
    /// `order[rank]` is the index (into the prompt's response list) at that rank.
    pub order: Vec<usize>,
    /// Scores in ranked order, non-increasing.
    pub rm_scores: Vec<f64>,
    /// Oracle scores aligned with `order`.
    pub oracle_scores: Vec<f64>,
}

impl RankedResponses {
    /// `ids`, `scores` and `oracle` are aligned by response index.
    pub fn new(prompt_id: impl Into<String>, ids: &[&str], scores: &[f64], oracle: &[f64]) -> Self {
        assert_eq!(ids.len(), scores.len());
        assert_eq!(ids.len(), oracle.len());
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(Ordering::Equal)
                .then_with(|| ids[a].cmp(ids[b]))
        });
        RankedResponses {
            prompt_id: prompt_id.into(),
            rm_scores: order.iter().map(|&i| scores[i]).collect(),
            oracle_scores: order.iter().map(|&i| oracle[i]).collect(),
            order,
        }
    }

    pub fn from_table(dataset: &BenchmarkDataset, table: &RmScoreTable, prompt_id: &str) -> Self {
        let responses = dataset.responses_for(prompt_id);
        let ids: Vec<&str> = responses.iter().map(|r| r.response_id.as_str()).collect();
        let oracle: Vec<f64> = responses.iter().map(|r| r.oracle_score).collect();
        let scores = table.scores_for(dataset, prompt_id);
        Self::new(prompt_id, &ids, &scores, &oracle)
    }

    /// Ranking by the oracle itself.
    pub fn by_oracle(dataset: &BenchmarkDataset, prompt_id: &str) -> Self {
        let responses = dataset.responses_for(prompt_id);
        let ids: Vec<&str> = responses.iter().map(|r| r.response_id.as_str()).collect();
        let oracle: Vec<f64> = responses.iter().map(|r| r.oracle_score).collect();
        Self::new(prompt_id, &ids, &oracle, &oracle)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn oracle_total(&self) -> f64 {
        self.oracle_scores.iter().sum()
    }

    /// `rank_of[response_index]` = 0-based rank.
    pub fn ranks(&self) -> Vec<usize> {
        let mut rank_of = vec![0; self.order.len()];
        for (rank, &idx) in self.order.iter().enumerate() {
            rank_of[idx] = rank;
        }
        rank_of
    }
}

/// Ranks every prompt of `dataset` under `table`, in prompt order.
pub fn rank_dataset(dataset: &BenchmarkDataset, table: &RmScoreTable) -> Vec<RankedResponses> {
    dataset
        .prompts
        .iter()
        .map(|p| RankedResponses::from_table(dataset, table, &p.prompt_id))
        .collect()
}
