//! Reward-model reliability toolkit.
//!
//! * [`data`]: benchmark datasets, RM score tables and their JSON-lines formats.
//! * [`reta`]: the RETA estimator (top-eta-quantile oracle quality, normalized).
//! * [`bon`]: best-of-n, k-th-of-n and best-m-of-n curves via hypergeometric weights.
//! * [`metrics`]: hit rate, MRR, NDCG, pairwise accuracy and win rate.
//! * [`dpp`]: k-DPP prompt selection with an MCMC swap chain.
//! * [`synth`]: synthetic distributions with closed-form RETA limits.
//! * [`export`]: CSV writers for all of the above.

pub mod bon;
pub mod combin;
pub mod data;
pub mod dpp;
pub mod export;
pub mod metrics;
pub mod ranking;
pub mod reta;
pub mod stats;
pub mod stream;
pub mod synth;

pub use data::{BenchmarkDataset, RmScoreTable};
pub use ranking::RankedResponses;
pub use reta::{RetaConfig, RetaCurve, RetaEstimate};
