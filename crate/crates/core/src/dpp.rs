//! k-DPP prompt selection with an MCMC swap chain.
//!
//! The kernel over candidates is `L = lambda * E E^T` (rows of `E` are prompt
//! embeddings) with `lambda = 0.99 / sigma_max(E)^2`, which keeps every kernel
//! eigenvalue below one. The chain proposes swapping one member of the
//! current k-subset for one non-member and accepts with probability
//! `min(1, det(L_S') / det(L_S))`.
//!
//! Determinant ratios come from an incrementally maintained inverse of
//! `L_S`: removing member `p` scales the determinant by `inv[p][p]`, and
//! adding `j` scales it by the Schur complement `L_jj - b^T L_{S-p}^{-1} b`.
//! The inverse is rebuilt from scratch every `REFRESH_EVERY` steps.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::data::PromptRecord;

const LAMBDA_MARGIN: f64 = 0.99;
const REFRESH_EVERY: usize = 1000;
const MAX_INIT_ATTEMPTS: usize = 100;
/// Relative pivot below which a subset is treated as linearly dependent.
const SINGULAR_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum DppError {
    #[error("prompt {0} has no embedding")]
    MissingEmbedding(String),
    #[error("embeddings have mixed dimensions")]
    DimensionMismatch,
    #[error("all embeddings are zero")]
    ZeroMatrix,
    #[error("no candidates")]
    Empty,
    #[error("k={k} must lie in [1, {candidates}]")]
    InvalidK { k: usize, candidates: usize },
    #[error("cannot find a k-subset with nonzero determinant (embedding rank {rank} < k={k} or unlucky init)")]
    DegenerateInit { rank: usize, k: usize },
    #[error("determinant ratio is not finite")]
    NumericalBreakdown,
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
}

pub type Result<T> = std::result::Result<T, DppError>;

#[derive(Debug, Clone)]
pub struct DppModel {
    /// Rows are candidate embeddings.
    pub embeddings: DMatrix<f64>,
    pub lambda: f64,
    pub rank: usize,
}

impl DppModel {
    pub fn from_matrix(embeddings: DMatrix<f64>) -> Result<Self> {
        if embeddings.nrows() == 0 {
            return Err(DppError::Empty);
        }
        let sv = embeddings.singular_values();
        let sigma_max = sv.max();
        if !(sigma_max > 0.0) {
            return Err(DppError::ZeroMatrix);
        }
        let tol = sigma_max * SINGULAR_TOL.sqrt() * embeddings.nrows().max(embeddings.ncols()) as f64;
        let rank = sv.iter().filter(|&&s| s > tol).count();
        Ok(DppModel {
            lambda: LAMBDA_MARGIN / (sigma_max * sigma_max),
            embeddings,
            rank,
        })
    }

    pub fn candidates(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn kernel_entry(&self, a: usize, b: usize) -> f64 {
        self.lambda * self.embeddings.row(a).dot(&self.embeddings.row(b))
    }

    pub fn kernel(&self) -> DMatrix<f64> {
        &self.embeddings * self.embeddings.transpose() * self.lambda
    }

    fn submatrix(&self, subset: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(subset.len(), subset.len(), |i, j| self.kernel_entry(subset[i], subset[j]))
    }

    /// det(L_S) by Cholesky; 0 when the subset is (numerically) dependent.
    pub fn subset_determinant(&self, subset: &[usize]) -> f64 {
        cholesky_determinant(&self.submatrix(subset)).unwrap_or(0.0)
    }
}

/// Determinant of a symmetric PSD matrix, `None` when a pivot falls below
/// `SINGULAR_TOL` relative to its diagonal entry.
fn cholesky_determinant(a: &DMatrix<f64>) -> Option<f64> {
    let k = a.nrows();
    let mut l = DMatrix::<f64>::zeros(k, k);
    let mut det = 1.0;
    for j in 0..k {
        let mut d = a[(j, j)];
        for t in 0..j {
            d -= l[(j, t)] * l[(j, t)];
        }
        if !(d > SINGULAR_TOL * a[(j, j)]) {
            return None;
        }
        det *= d;
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..k {
            let mut s = a[(i, j)];
            for t in 0..j {
                s -= l[(i, t)] * l[(j, t)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(det)
}

/// Builds the model from prompt records; every prompt needs an embedding of
/// the same dimension.
pub fn build_dpp(prompts: &[PromptRecord]) -> Result<DppModel> {
    let first = prompts.first().ok_or(DppError::Empty)?;
    let dim = first
        .embedding
        .as_ref()
        .ok_or_else(|| DppError::MissingEmbedding(first.prompt_id.clone()))?
        .len();
    let mut data = Vec::with_capacity(prompts.len() * dim);
    for p in prompts {
        let e = p
            .embedding
            .as_ref()
            .ok_or_else(|| DppError::MissingEmbedding(p.prompt_id.clone()))?;
        if e.len() != dim {
            return Err(DppError::DimensionMismatch);
        }
        data.extend_from_slice(e);
    }
    DppModel::from_matrix(DMatrix::from_row_slice(prompts.len(), dim, &data))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DppSampleConfig {
    pub k: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// Defaults to `ceil(|Q0| * k * ln(1/epsilon))`.
    pub max_steps: Option<usize>,
}

impl DppSampleConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        DppSampleConfig {
            k,
            seed,
            epsilon: 0.01,
            max_steps: None,
        }
    }

    pub fn steps(&self, candidates: usize) -> usize {
        self.max_steps.unwrap_or_else(|| {
            (candidates as f64 * self.k as f64 * (1.0 / self.epsilon).ln()).ceil() as usize
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DppSample {
    /// Selected candidate indices, ascending.
    pub indices: Vec<usize>,
    pub steps: usize,
    pub accepted: usize,
}

/// Swap-chain state: the current subset and the inverse of its kernel block.
struct Chain<'a> {
    model: &'a DppModel,
    members: Vec<usize>,
    inverse: DMatrix<f64>,
}

/// Outcome of evaluating one proposal.
struct Proposal {
    ratio: f64,
    /// `L_{S-p}^{-1} b` over all slots (slot p unused) and the Schur complement.
    u: DVector<f64>,
    schur: f64,
}

impl<'a> Chain<'a> {
    fn new(model: &'a DppModel, members: Vec<usize>) -> Option<Self> {
        let inverse = model.submatrix(&members).try_inverse()?;
        Some(Chain {
            model,
            members,
            inverse,
        })
    }

    fn refresh(&mut self) -> Result<()> {
        self.inverse = self
            .model
            .submatrix(&self.members)
            .try_inverse()
            .ok_or(DppError::NumericalBreakdown)?;
        Ok(())
    }

    /// Ratio det(L_{S - members[p] + j}) / det(L_S).
    fn propose(&self, p: usize, j: usize) -> Proposal {
        let k = self.members.len();
        let inv = &self.inverse;
        let b = DVector::from_fn(k, |i, _| {
            if i == p {
                0.0
            } else {
                self.model.kernel_entry(self.members[i], j)
            }
        });
        // (A^{-1} restricted to slots != p) b, then remove the p-th pivot
        let mut u = inv * &b;
        let pivot = inv[(p, p)];
        let coupling: f64 = (0..k).filter(|&i| i != p).map(|i| inv[(p, i)] * b[i]).sum();
        for i in 0..k {
            if i != p {
                u[i] -= inv[(i, p)] * coupling / pivot;
            }
        }
        u[p] = 0.0;
        let c = self.model.kernel_entry(j, j);
        let schur = c - b.dot(&u);
        let ratio = if schur > SINGULAR_TOL * c { pivot * schur } else { 0.0 };
        Proposal { ratio, u, schur }
    }

    fn accept(&mut self, p: usize, j: usize, prop: Proposal) {
        let k = self.members.len();
        let inv = &self.inverse;
        let pivot = inv[(p, p)];
        // inverse of L_{S-p}, stored on slots != p
        let mut reduced = DMatrix::<f64>::zeros(k, k);
        for r in 0..k {
            for c in 0..k {
                if r != p && c != p {
                    reduced[(r, c)] = inv[(r, c)] - inv[(r, p)] * inv[(p, c)] / pivot;
                }
            }
        }
        let s = prop.schur;
        let u = prop.u;
        for r in 0..k {
            for c in 0..k {
                if r != p && c != p {
                    reduced[(r, c)] += u[r] * u[c] / s;
                }
            }
            if r != p {
                reduced[(r, p)] = -u[r] / s;
                reduced[(p, r)] = -u[r] / s;
            }
        }
        reduced[(p, p)] = 1.0 / s;
        self.inverse = reduced;
        self.members[p] = j;
    }
}

/// Approximate k-DPP sample: a single swap chain run for `config.steps()` steps.
pub fn sample_kdpp(model: &DppModel, config: &DppSampleConfig) -> Result<DppSample> {
    let candidates = model.candidates();
    let k = config.k;
    if k == 0 || k > candidates {
        return Err(DppError::InvalidK { k, candidates });
    }
    if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
        return Err(DppError::InvalidEpsilon(config.epsilon));
    }
    if model.rank < k {
        return Err(DppError::DegenerateInit { rank: model.rank, k });
    }
    if k == candidates {
        let all: Vec<usize> = (0..candidates).collect();
        if model.subset_determinant(&all) == 0.0 {
            return Err(DppError::DegenerateInit { rank: model.rank, k });
        }
        return Ok(DppSample {
            indices: all,
            steps: 0,
            accepted: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut chain = None;
    for _ in 0..MAX_INIT_ATTEMPTS {
        let init = index::sample(&mut rng, candidates, k).into_vec();
        if model.subset_determinant(&init) > 0.0 {
            chain = Chain::new(model, init);
            if chain.is_some() {
                break;
            }
        }
    }
    let mut chain = chain.ok_or(DppError::DegenerateInit { rank: model.rank, k })?;

    let steps = config.steps(candidates);
    let mut in_set = vec![false; candidates];
    for &m in &chain.members {
        in_set[m] = true;
    }
    let mut accepted = 0;
    for step in 1..=steps {
        let p = rng.random_range(0..k);
        // uniform over non-members
        let pick = rng.random_range(0..candidates - k);
        let j = (0..candidates)
            .filter(|&c| !in_set[c])
            .nth(pick)
            .expect("non-member exists");
        let prop = chain.propose(p, j);
        if !prop.ratio.is_finite() {
            return Err(DppError::NumericalBreakdown);
        }
        let u: f64 = rng.random();
        if u < prop.ratio.min(1.0) {
            in_set[chain.members[p]] = false;
            in_set[j] = true;
            chain.accept(p, j, prop);
            accepted += 1;
        }
        if step % REFRESH_EVERY == 0 {
            chain.refresh()?;
        }
    }

    let mut indices = chain.members;
    indices.sort_unstable();
    Ok(DppSample {
        indices,
        steps,
        accepted,
    })
}

/// Mean absolute cosine similarity over distinct pairs (0 for a singleton).
pub fn diversity_score(model: &DppModel, subset: &[usize]) -> f64 {
    let rows: Vec<_> = subset.iter().map(|&i| model.embeddings.row(i)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            let denom = rows[a].norm() * rows[b].norm();
            let cos = if denom > 0.0 { rows[a].dot(&rows[b]) / denom } else { 0.0 };
            total += cos.abs();
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}
