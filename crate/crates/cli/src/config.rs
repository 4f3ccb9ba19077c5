//! Run configuration shared by all subcommands.
//!
//! Flags and an optional JSON config file both produce a [`RunConfig`]; keys
//! present in the file win. The merged, default-filled config is echoed next
//! to the outputs and its hash goes into every provenance line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use reta::bon::BonVariant;
use reta::synth::DistSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rm_scores: Option<Vec<PathBuf>>,
    /// Adds the oracle itself as a scored table named `oracle`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub include_oracle: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resamples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_range_low_coeff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_range_high_coeff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize: Option<bool>,
    /// Also emit the unnormalized curves.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<bool>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<BonVariant>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<usize>>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit_rate_k: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection_rank_j: Option<usize>,
    /// rm_name -> label file
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeMap<String, PathBuf>>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<DistSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_prompts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub responses_per_prompt: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_n: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input("Io", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::input("InvalidConfig", format!("{}: {e}", path.display())))
    }

    /// Keys set in `file` replace those from the command line.
    pub fn overlay(self, file: RunConfig) -> RunConfig {
        let mut merged = serde_json::to_value(self).expect("config serializes");
        let over = serde_json::to_value(file).expect("config serializes");
        if let (Some(m), serde_json::Value::Object(o)) = (merged.as_object_mut(), over) {
            m.extend(o);
        }
        serde_json::from_value(merged).expect("merged config deserializes")
    }

    /// Pretty JSON with keys in declaration order.
    pub fn canonical(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    /// The config without the output location, which never affects results.
    pub fn provenance_view(&self) -> RunConfig {
        RunConfig {
            out: None,
            ..self.clone()
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical form, output location excluded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.provenance_view().canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> String {
        format!(
            "reta {} seed={} config={}",
            env!("CARGO_PKG_VERSION"),
            self.seed.unwrap_or(0),
            self.hash()
        )
    }

    pub fn require<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T, CliError> {
        value
            .as_ref()
            .ok_or_else(|| CliError::input("MissingArgument", format!("`{key}` is required")))
    }
}
