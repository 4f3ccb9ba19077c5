//! Synthetic joint distributions of (RM score, oracle score) with closed-form
//! RETA limits `E[J | Y >= quantile(eta)] / E[J]`, plus generators and
//! convergence experiments that exercise the estimator end to end.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::{BenchmarkDataset, DataError, LoadOptions, PromptRecord, ResponseRecord, RmScoreTable};
use crate::reta::{reta_estimate, RetaConfig, RetaError};
use crate::stream::stream;

/// Smallest offset keeping `c + Z` positive with probability above 1 - 1e-9.
pub const MIN_GAUSSIAN_OFFSET: f64 = 6.0;

/// Stream tag separating generator draws from estimator resampling.
const GEN_STREAM: u64 = 0x5359_4e54_4845_5449;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unsupported spec: {0}")]
    UnsupportedSpec(String),
    #[error("eta must lie in (0, 1], got {0}")]
    InvalidEta(f64),
    #[error("need at least one prompt and N >= 2")]
    InvalidSize,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Reta(#[from] RetaError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// RM score
    pub y: f64,
    /// oracle score
    pub j: f64,
    /// probability
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    /// `J ~ Uniform(a, b)` and the RM reproduces it exactly (`Y = J`).
    /// `a = 0` is allowed; a draw of exactly zero is redrawn.
    DeterministicUniform { a: f64, b: f64 },
    /// `J ~ Uniform(a, b)`, `Y ~ Normal(0, 1)` independent of `J`.
    Independent { a: f64, b: f64 },
    /// `J = c + Z`, `Y = rho Z + sqrt(1 - rho^2) eps`, with `Z, eps ~ Normal(0, 1)`.
    /// Draws with `J <= 0` are rejected.
    NoisyGaussian { rho: f64, c: f64 },
    /// Finite joint distribution over `(y, j)` atoms.
    CustomTable { atoms: Vec<Atom> },
}

impl DistSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SynthError::UnsupportedSpec(msg.to_string()));
        match self {
            DistSpec::DeterministicUniform { a, b } | DistSpec::Independent { a, b } => {
                if !(*a >= 0.0 && a < b && b.is_finite()) {
                    return bad("uniform support needs 0 <= a < b");
                }
            }
            DistSpec::NoisyGaussian { rho, c } => {
                if !(rho.abs() <= 1.0) {
                    return bad("rho must lie in [-1, 1]");
                }
                if !(*c >= MIN_GAUSSIAN_OFFSET && c.is_finite()) {
                    return bad("noisy_gaussian needs c >= 6");
                }
            }
            DistSpec::CustomTable { atoms } => {
                if atoms.is_empty() {
                    return bad("custom_table needs atoms");
                }
                if atoms.iter().any(|a| !(a.p > 0.0) || !(a.j > 0.0) || !a.y.is_finite() || !a.j.is_finite()) {
                    return bad("atoms need p > 0, finite y and j > 0");
                }
                let total: f64 = atoms.iter().map(|a| a.p).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad("atom probabilities must sum to 1");
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            DistSpec::DeterministicUniform { .. } => "deterministic_uniform",
            DistSpec::Independent { .. } => "independent",
            DistSpec::NoisyGaussian { .. } => "noisy_gaussian",
            DistSpec::CustomTable { .. } => "custom_table",
        }
    }

    /// One `(rm_score, oracle_score)` draw.
    fn draw<R: Rng>(&self, rng: &mut R, atoms: Option<&WeightedIndex<f64>>) -> (f64, f64) {
        match self {
            DistSpec::DeterministicUniform { a, b } => {
                let j = positive_uniform(rng, *a, *b);
                (j, j)
            }
            DistSpec::Independent { a, b } => {
                let j = positive_uniform(rng, *a, *b);
                let y: f64 = StandardNormal.sample(rng);
                (y, j)
            }
            DistSpec::NoisyGaussian { rho, c } => loop {
                let z: f64 = StandardNormal.sample(rng);
                let eps: f64 = StandardNormal.sample(rng);
                let j = c + z;
                if j > 0.0 {
                    break (rho * z + (1.0 - rho * rho).sqrt() * eps, j);
                }
            },
            DistSpec::CustomTable { atoms: table } => {
                let atom = table[atoms.expect("weights built").sample(rng)];
                (atom.y, atom.j)
            }
        }
    }
}

fn positive_uniform<R: Rng>(rng: &mut R, a: f64, b: f64) -> f64 {
    let dist = Uniform::new(a, b).expect("validated");
    loop {
        let j = dist.sample(rng);
        if j > 0.0 {
            return j;
        }
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// Closed-form limit of RETA at `eta` for `spec`.
///
/// For `custom_table` this is the oracle mean over the top `eta` probability
/// mass of `Y`, taking a fraction of the boundary atom when needed; it equals
/// `E[J | Y >= quantile]` whenever the quantile cuts no atom.
pub fn analytic_reta(spec: &DistSpec, eta: f64) -> Result<f64> {
    spec.validate()?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(SynthError::InvalidEta(eta));
    }
    Ok(match spec {
        DistSpec::DeterministicUniform { a, b } => (b - eta * (b - a) / 2.0) / ((a + b) / 2.0),
        DistSpec::Independent { .. } => 1.0,
        DistSpec::NoisyGaussian { rho, c } => {
            if eta == 1.0 {
                return Ok(1.0);
            }
            let normal = standard_normal();
            let z = normal.inverse_cdf(1.0 - eta);
            (c + rho * normal.pdf(z) / eta) / c
        }
        DistSpec::CustomTable { atoms } => {
            let mut sorted = atoms.clone();
            sorted.sort_by(|a, b| b.y.total_cmp(&a.y));
            let mean_j: f64 = atoms.iter().map(|a| a.p * a.j).sum();
            let mut mass = 0.0;
            let mut top = 0.0;
            let mut i = 0;
            while i < sorted.len() && mass < eta {
                // atoms sharing a y value are selected together, in proportion
                let mut end = i;
                while end < sorted.len() && sorted[end].y == sorted[i].y {
                    end += 1;
                }
                let group_p: f64 = sorted[i..end].iter().map(|a| a.p).sum();
                let group_pj: f64 = sorted[i..end].iter().map(|a| a.p * a.j).sum();
                let take = group_p.min(eta - mass);
                top += take * group_pj / group_p;
                mass += take;
                i = end;
            }
            top / eta / mean_j
        }
    })
}

/// Draws `num_prompts` prompts with `total` i.i.d. responses each.
///
/// Every prompt has its own random stream, so the output is deterministic in
/// `seed` regardless of scheduling.
pub fn gen_synthetic(
    spec: &DistSpec,
    num_prompts: usize,
    total: usize,
    seed: u64,
) -> Result<(BenchmarkDataset, RmScoreTable)> {
    spec.validate()?;
    if num_prompts == 0 || total < 2 {
        return Err(SynthError::InvalidSize);
    }
    let weights = match spec {
        DistSpec::CustomTable { atoms } => Some(
            WeightedIndex::new(atoms.iter().map(|a| a.p))
                .map_err(|e| SynthError::UnsupportedSpec(e.to_string()))?,
        ),
        _ => None,
    };
    let pw = width(num_prompts);
    let rw = width(total);

    let rows: Vec<Vec<(f64, f64)>> = (0..num_prompts)
        .into_par_iter()
        .map(|q| {
            let mut rng = stream(seed, GEN_STREAM, q as u64, 0);
            (0..total).map(|_| spec.draw(&mut rng, weights.as_ref())).collect()
        })
        .collect();

    let mut prompts = Vec::with_capacity(num_prompts);
    let mut responses = Vec::with_capacity(num_prompts * total);
    let mut table = RmScoreTable {
        rm_name: format!("synthetic-{}", spec.kind()),
        scores: Default::default(),
    };
    for (q, row) in rows.into_iter().enumerate() {
        let prompt_id = format!("p{q:0pw$}");
        let scores = table.scores.entry(prompt_id.clone()).or_default();
        for (r, (y, j)) in row.into_iter().enumerate() {
            let response_id = format!("r{r:0rw$}");
            scores.insert(response_id.clone(), y);
            responses.push(ResponseRecord {
                prompt_id: prompt_id.clone(),
                response_id,
                text: None,
                oracle_score: j,
                oracle_samples: None,
            });
        }
        prompts.push(PromptRecord {
            prompt_id,
            text: format!("synthetic prompt {q}"),
            embedding: None,
            perplexity: None,
        });
    }
    let options = LoadOptions {
        oracle_upper_bound: f64::INFINITY,
    };
    let dataset = BenchmarkDataset::new(format!("synthetic-{}", spec.kind()), prompts, responses, &options)?;
    Ok((dataset, table))
}

fn width(count: usize) -> usize {
    (count.saturating_sub(1).max(1).ilog10() as usize + 1).max(4)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N")]
    pub total: usize,
    pub eta: f64,
    pub estimate: f64,
    pub analytic: f64,
    pub abs_error: f64,
    pub std_error: f64,
    pub seed: u64,
}

/// Runs the full RETA estimator on fresh synthetic data for each `N`.
pub fn convergence_experiment(
    spec: &DistSpec,
    eta: f64,
    n_list: &[usize],
    num_prompts: usize,
    config: &RetaConfig,
) -> Result<Vec<ConvergenceRow>> {
    let analytic = analytic_reta(spec, eta)?;
    n_list
        .iter()
        .map(|&total| {
            let (dataset, table) = gen_synthetic(spec, num_prompts, total, config.seed)?;
            let est = reta_estimate(&dataset, &table, eta, config)?;
            Ok(ConvergenceRow {
                total,
                eta,
                estimate: est.value,
                analytic,
                abs_error: (est.value - analytic).abs(),
                std_error: est.std_error,
                seed: config.seed,
            })
        })
        .collect()
}
