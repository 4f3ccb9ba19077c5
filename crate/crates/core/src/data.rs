//! Benchmark datasets, RM score tables and their JSON-lines file formats.
//!
//! A dataset directory holds `prompts.jsonl` and `responses.jsonl`; each tested
//! reward model ships its scores in a separate `rm_scores.jsonl`-style file.
//! Everything downstream consumes the in-memory types defined here.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const RESPONSES_FILE: &str = "responses.jsonl";

/// Default upper bound for oracle scores (the 1-10 judge scale).
pub const DEFAULT_ORACLE_UPPER_BOUND: f64 = 10.0;

const EMBEDDING_NORM_TOL: f64 = 1e-6;
const ORACLE_SAMPLES_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: malformed record ({field}): {message}")]
    MalformedRecord {
        file: String,
        line: usize,
        field: String,
        message: String,
    },
    #[error("prompt {prompt_id} has {count} responses, expected {expected}")]
    NonUniformN {
        prompt_id: String,
        count: usize,
        expected: usize,
    },
    #[error("oracle score for ({prompt_id}, {response_id}) must be positive")]
    NonPositiveOracleScore {
        prompt_id: String,
        response_id: String,
    },
    #[error("oracle score {score} for ({prompt_id}, {response_id}) exceeds bound {bound}")]
    OracleScoreAboveBound {
        prompt_id: String,
        response_id: String,
        score: f64,
        bound: f64,
    },
    #[error("oracle_samples of ({prompt_id}, {response_id}) do not average to oracle_score")]
    OracleSamplesMismatch {
        prompt_id: String,
        response_id: String,
    },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("response {response_id} refers to unknown prompt {prompt_id}")]
    UnknownPrompt {
        prompt_id: String,
        response_id: String,
    },
    #[error("dataset needs at least one prompt and at least 2 responses per prompt (got {prompts} prompts, N={n})")]
    TooSmall { prompts: usize, n: usize },
    #[error("no score for ({prompt_id}, {response_id})")]
    MissingScore {
        prompt_id: String,
        response_id: String,
    },
    #[error("score for unknown pair ({prompt_id}, {response_id})")]
    UnknownPair {
        prompt_id: String,
        response_id: String,
    },
    #[error("duplicate score for ({prompt_id}, {response_id})")]
    DuplicateScore {
        prompt_id: String,
        response_id: String,
    },
    #[error("non-finite score for ({prompt_id}, {response_id})")]
    NonFiniteScore {
        prompt_id: String,
        response_id: String,
    },
    #[error("score file mixes rm names {first} and {other}")]
    MixedRmNames { first: String, other: String },
    #[error("score file {0} contains no records")]
    EmptyScoreFile(PathBuf),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub prompt_id: String,
    pub response_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub oracle_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_samples: Option<Vec<f64>>,
}

/// Prompts, their response sets and oracle scores.
///
/// Prompts are kept sorted by `prompt_id` and each response list by
/// `response_id`, so two loads of the same files are identical in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkDataset {
    pub name: String,
    pub prompts: Vec<PromptRecord>,
    pub responses: BTreeMap<String, Vec<ResponseRecord>>,
    pub responses_per_prompt: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub oracle_upper_bound: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            oracle_upper_bound: DEFAULT_ORACLE_UPPER_BOUND,
        }
    }
}

impl BenchmarkDataset {
    /// Builds a dataset from unordered records, enforcing the structural
    /// invariants (unique ids, uniform N >= 2, positive bounded oracle scores).
    pub fn new(
        name: impl Into<String>,
        mut prompts: Vec<PromptRecord>,
        responses: Vec<ResponseRecord>,
        options: &LoadOptions,
    ) -> Result<Self> {
        prompts.sort_by(|a, b| a.prompt_id.cmp(&b.prompt_id));
        for pair in prompts.windows(2) {
            if pair[0].prompt_id == pair[1].prompt_id {
                return Err(DataError::DuplicateId {
                    kind: "prompt",
                    id: pair[0].prompt_id.clone(),
                });
            }
        }

        let mut grouped: BTreeMap<String, Vec<ResponseRecord>> = prompts
            .iter()
            .map(|p| (p.prompt_id.clone(), Vec::new()))
            .collect();
        for r in responses {
            check_oracle(&r, options)?;
            match grouped.get_mut(&r.prompt_id) {
                Some(list) => list.push(r),
                None => {
                    return Err(DataError::UnknownPrompt {
                        prompt_id: r.prompt_id,
                        response_id: r.response_id,
                    })
                }
            }
        }

        let mut expected = None;
        for (prompt_id, list) in grouped.iter_mut() {
            list.sort_by(|a, b| a.response_id.cmp(&b.response_id));
            for pair in list.windows(2) {
                if pair[0].response_id == pair[1].response_id {
                    return Err(DataError::DuplicateId {
                        kind: "response",
                        id: format!("{}/{}", prompt_id, pair[0].response_id),
                    });
                }
            }
            let n = *expected.get_or_insert(list.len());
            if list.len() != n {
                return Err(DataError::NonUniformN {
                    prompt_id: prompt_id.clone(),
                    count: list.len(),
                    expected: n,
                });
            }
        }

        let n = expected.unwrap_or(0);
        if prompts.is_empty() || n < 2 {
            return Err(DataError::TooSmall {
                prompts: prompts.len(),
                n,
            });
        }

        Ok(BenchmarkDataset {
            name: name.into(),
            prompts,
            responses: grouped,
            responses_per_prompt: n,
        })
    }

    pub fn num_prompts(&self) -> usize {
        self.prompts.len()
    }

    pub fn responses_for(&self, prompt_id: &str) -> &[ResponseRecord] {
        self.responses
            .get(prompt_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn oracle_scores(&self, prompt_id: &str) -> Vec<f64> {
        self.responses_for(prompt_id)
            .iter()
            .map(|r| r.oracle_score)
            .collect()
    }

    pub fn prompt(&self, prompt_id: &str) -> Option<&PromptRecord> {
        self.prompts
            .binary_search_by(|p| p.prompt_id.as_str().cmp(prompt_id))
            .ok()
            .map(|i| &self.prompts[i])
    }
}

fn check_oracle(r: &ResponseRecord, options: &LoadOptions) -> Result<()> {
    if !(r.oracle_score > 0.0) || !r.oracle_score.is_finite() {
        return Err(DataError::NonPositiveOracleScore {
            prompt_id: r.prompt_id.clone(),
            response_id: r.response_id.clone(),
        });
    }
    if r.oracle_score > options.oracle_upper_bound {
        return Err(DataError::OracleScoreAboveBound {
            prompt_id: r.prompt_id.clone(),
            response_id: r.response_id.clone(),
            score: r.oracle_score,
            bound: options.oracle_upper_bound,
        });
    }
    if let Some(samples) = &r.oracle_samples {
        if !oracle_samples_consistent(samples, r.oracle_score) {
            return Err(DataError::OracleSamplesMismatch {
                prompt_id: r.prompt_id.clone(),
                response_id: r.response_id.clone(),
            });
        }
    }
    Ok(())
}

fn oracle_samples_consistent(samples: &[f64], score: f64) -> bool {
    if samples.is_empty() {
        return false;
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    (mean - score).abs() <= ORACLE_SAMPLES_TOL
}

/// One reward model's scalar scores for every (prompt, response) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RmScoreTable {
    pub rm_name: String,
    /// prompt_id -> response_id -> score
    pub scores: BTreeMap<String, BTreeMap<String, f64>>,
}

impl RmScoreTable {
    pub fn get(&self, prompt_id: &str, response_id: &str) -> Option<f64> {
        self.scores.get(prompt_id)?.get(response_id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scores of one prompt aligned with `dataset.responses_for(prompt_id)`.
    ///
    /// Panics if the table does not cover the prompt; tables are checked for
    /// coverage when ingested.
    pub fn scores_for(&self, dataset: &BenchmarkDataset, prompt_id: &str) -> Vec<f64> {
        let row = &self.scores[prompt_id];
        dataset
            .responses_for(prompt_id)
            .iter()
            .map(|r| row[&r.response_id])
            .collect()
    }

    /// Applies `f` to every score, keeping the rm name.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> RmScoreTable {
        RmScoreTable {
            rm_name: self.rm_name.clone(),
            scores: self
                .scores
                .iter()
                .map(|(p, row)| (p.clone(), row.iter().map(|(r, &s)| (r.clone(), f(s))).collect()))
                .collect(),
        }
    }

    /// Builds a table that scores each response with its oracle score.
    pub fn oracle(dataset: &BenchmarkDataset) -> RmScoreTable {
        RmScoreTable {
            rm_name: "oracle".to_string(),
            scores: dataset
                .responses
                .iter()
                .map(|(p, list)| {
                    (
                        p.clone(),
                        list.iter()
                            .map(|r| (r.response_id.clone(), r.oracle_score))
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    /// Checks that the table covers exactly the dataset's pairs with finite scores.
    pub fn check_coverage(&self, dataset: &BenchmarkDataset) -> Result<()> {
        for (prompt_id, list) in &dataset.responses {
            let row = self.scores.get(prompt_id);
            for r in list {
                match row.and_then(|row| row.get(&r.response_id)) {
                    None => {
                        return Err(DataError::MissingScore {
                            prompt_id: prompt_id.clone(),
                            response_id: r.response_id.clone(),
                        })
                    }
                    Some(s) if !s.is_finite() => {
                        return Err(DataError::NonFiniteScore {
                            prompt_id: prompt_id.clone(),
                            response_id: r.response_id.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        for (prompt_id, row) in &self.scores {
            for response_id in row.keys() {
                let known = dataset
                    .responses_for(prompt_id)
                    .iter()
                    .any(|r| &r.response_id == response_id);
                if !known {
                    return Err(DataError::UnknownPair {
                        prompt_id: prompt_id.clone(),
                        response_id: response_id.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// A parsed value together with non-fatal loader warnings (e.g. unknown keys).
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<Issue>,
}

pub fn load_benchmark(path: impl AsRef<Path>) -> Result<BenchmarkDataset> {
    load_benchmark_with(path, &LoadOptions::default()).map(|l| l.value)
}

pub fn load_benchmark_with(
    path: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<Loaded<BenchmarkDataset>> {
    let dir = path.as_ref();
    let mut warnings = Vec::new();
    let prompts = read_jsonl(&dir.join(PROMPTS_FILE), &mut warnings, parse_prompt)?;
    let responses = read_jsonl(&dir.join(RESPONSES_FILE), &mut warnings, parse_response)?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let value = BenchmarkDataset::new(name, prompts, responses, options)?;
    Ok(Loaded { value, warnings })
}

/// Reads a prompts file on its own (used for k-DPP candidate pools).
pub fn load_prompts(path: impl AsRef<Path>) -> Result<Loaded<Vec<PromptRecord>>> {
    let mut warnings = Vec::new();
    let mut prompts = read_jsonl(path.as_ref(), &mut warnings, parse_prompt)?;
    prompts.sort_by(|a, b| a.prompt_id.cmp(&b.prompt_id));
    for pair in prompts.windows(2) {
        if pair[0].prompt_id == pair[1].prompt_id {
            return Err(DataError::DuplicateId {
                kind: "prompt",
                id: pair[0].prompt_id.clone(),
            });
        }
    }
    Ok(Loaded {
        value: prompts,
        warnings,
    })
}

pub fn ingest_rm_scores(dataset: &BenchmarkDataset, path: impl AsRef<Path>) -> Result<RmScoreTable> {
    ingest_rm_scores_with_warnings(dataset, path).map(|l| l.value)
}

pub fn ingest_rm_scores_with_warnings(
    dataset: &BenchmarkDataset,
    path: impl AsRef<Path>,
) -> Result<Loaded<RmScoreTable>> {
    let path = path.as_ref();
    let mut warnings = Vec::new();
    let records = read_jsonl(path, &mut warnings, parse_score)?;
    let mut rm_name: Option<String> = None;
    let mut scores: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for rec in records {
        match &rm_name {
            None => rm_name = Some(rec.rm_name.clone()),
            Some(first) if *first != rec.rm_name => {
                return Err(DataError::MixedRmNames {
                    first: first.clone(),
                    other: rec.rm_name,
                })
            }
            Some(_) => {}
        }
        if !rec.score.is_finite() {
            return Err(DataError::NonFiniteScore {
                prompt_id: rec.prompt_id,
                response_id: rec.response_id,
            });
        }
        let row = scores.entry(rec.prompt_id.clone()).or_default();
        if row.insert(rec.response_id.clone(), rec.score).is_some() {
            return Err(DataError::DuplicateScore {
                prompt_id: rec.prompt_id,
                response_id: rec.response_id,
            });
        }
    }
    let rm_name = rm_name.ok_or_else(|| DataError::EmptyScoreFile(path.to_path_buf()))?;
    let table = RmScoreTable { rm_name, scores };
    table.check_coverage(dataset)?;
    Ok(Loaded {
        value: table,
        warnings,
    })
}

/// Writes `prompts.jsonl` and `responses.jsonl` into `dir` (created if needed).
pub fn write_benchmark(dataset: &BenchmarkDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_jsonl(&dir.join(PROMPTS_FILE), dataset.prompts.iter())?;
    write_jsonl(
        &dir.join(RESPONSES_FILE),
        dataset.responses.values().flatten(),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    prompt_id: &'a str,
    response_id: &'a str,
    rm_name: &'a str,
    score: f64,
}

pub fn write_rm_scores(table: &RmScoreTable, path: impl AsRef<Path>) -> Result<()> {
    let lines = table.scores.iter().flat_map(|(p, row)| {
        row.iter().map(move |(r, &score)| ScoreLine {
            prompt_id: p,
            response_id: r,
            rm_name: &table.rm_name,
            score,
        })
    });
    write_jsonl(path.as_ref(), lines)
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for item in items {
        let line = serde_json::to_string(&item).expect("records serialize");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

struct LineCtx<'a> {
    file: &'a str,
    line: usize,
}

impl LineCtx<'_> {
    fn malformed(&self, field: &str, message: impl Into<String>) -> DataError {
        DataError::MalformedRecord {
            file: self.file.to_string(),
            line: self.line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn string(&self, obj: &Map<String, Value>, key: &str) -> Result<String> {
        match obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(self.malformed(key, "expected a string")),
            None => Err(self.malformed(key, "missing")),
        }
    }

    fn opt_string(&self, obj: &Map<String, Value>, key: &str) -> Result<Option<String>> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.malformed(key, "expected a string")),
        }
    }

    fn number(&self, obj: &Map<String, Value>, key: &str) -> Result<f64> {
        match obj.get(key) {
            Some(v) => v
                .as_f64()
                .ok_or_else(|| self.malformed(key, "expected a number")),
            None => Err(self.malformed(key, "missing")),
        }
    }

    fn opt_number(&self, obj: &Map<String, Value>, key: &str) -> Result<Option<f64>> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| self.malformed(key, "expected a number")),
        }
    }

    fn opt_numbers(&self, obj: &Map<String, Value>, key: &str) -> Result<Option<Vec<f64>>> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| self.malformed(key, "expected an array of numbers"))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Err(self.malformed(key, "expected an array of numbers")),
        }
    }
}

const PROMPT_KEYS: &[&str] = &["prompt_id", "text", "embedding", "perplexity"];
const RESPONSE_KEYS: &[&str] = &[
    "prompt_id",
    "response_id",
    "text",
    "oracle_score",
    "oracle_samples",
];
const SCORE_KEYS: &[&str] = &["prompt_id", "response_id", "rm_name", "score"];

fn parse_prompt(ctx: &LineCtx, obj: &Map<String, Value>) -> Result<(PromptRecord, &'static [&'static str])> {
    Ok((
        PromptRecord {
            prompt_id: ctx.string(obj, "prompt_id")?,
            text: ctx.string(obj, "text")?,
            embedding: ctx.opt_numbers(obj, "embedding")?,
            perplexity: ctx.opt_number(obj, "perplexity")?,
        },
        PROMPT_KEYS,
    ))
}

fn parse_response(
    ctx: &LineCtx,
    obj: &Map<String, Value>,
) -> Result<(ResponseRecord, &'static [&'static str])> {
    Ok((
        ResponseRecord {
            prompt_id: ctx.string(obj, "prompt_id")?,
            response_id: ctx.string(obj, "response_id")?,
            text: ctx.opt_string(obj, "text")?,
            oracle_score: ctx.number(obj, "oracle_score")?,
            oracle_samples: ctx.opt_numbers(obj, "oracle_samples")?,
        },
        RESPONSE_KEYS,
    ))
}

struct ScoreRecord {
    prompt_id: String,
    response_id: String,
    rm_name: String,
    score: f64,
}

fn parse_score(ctx: &LineCtx, obj: &Map<String, Value>) -> Result<(ScoreRecord, &'static [&'static str])> {
    Ok((
        ScoreRecord {
            prompt_id: ctx.string(obj, "prompt_id")?,
            response_id: ctx.string(obj, "response_id")?,
            rm_name: ctx.string(obj, "rm_name")?,
            score: ctx.number(obj, "score")?,
        },
        SCORE_KEYS,
    ))
}

fn read_jsonl<T>(
    path: &Path,
    warnings: &mut Vec<Issue>,
    parse: impl Fn(&LineCtx, &Map<String, Value>) -> Result<(T, &'static [&'static str])>,
) -> Result<Vec<T>> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file_label = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    let mut unknown_seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx = LineCtx {
            file: &file_label,
            line: i + 1,
        };
        let value: Value =
            serde_json::from_str(&line).map_err(|e| ctx.malformed("<json>", e.to_string()))?;
        let Value::Object(obj) = value else {
            return Err(ctx.malformed("<json>", "expected a JSON object"));
        };
        let (record, known) = parse(&ctx, &obj)?;
        for key in obj.keys() {
            if !known.contains(&key.as_str()) && unknown_seen.insert(key.clone()) {
                warnings.push(Issue::warning(
                    format!("{}:{}", file_label, i + 1),
                    format!("unknown key \"{key}\" ignored"),
                ));
            }
        }
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

impl Issue {
    pub fn error(location: impl Into<String>, message: impl Into<String>) -> Self {
        Issue {
            severity: Severity::Error,
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn warning(location: impl Into<String>, message: impl Into<String>) -> Self {
        Issue {
            severity: Severity::Warning,
            location: location.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn from_issues(issues: Vec<Issue>) -> Self {
        let ok = !issues.iter().any(|i| i.severity == Severity::Error);
        ValidationReport { ok, issues }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }
}

pub fn validate_dataset(dataset: &BenchmarkDataset, tables: &[RmScoreTable]) -> ValidationReport {
    validate_dataset_with(dataset, tables, &LoadOptions::default())
}

/// Runs every dataset and table invariant check, collecting problems as issues.
pub fn validate_dataset_with(
    dataset: &BenchmarkDataset,
    tables: &[RmScoreTable],
    options: &LoadOptions,
) -> ValidationReport {
    let mut issues = Vec::new();
    let n = dataset.responses_per_prompt;

    if dataset.prompts.is_empty() {
        issues.push(Issue::error("dataset", "no prompts"));
    }
    if n < 2 {
        issues.push(Issue::error("dataset", format!("responses_per_prompt = {n}, need >= 2")));
    }

    let mut seen = BTreeSet::new();
    let mut dim: Option<usize> = None;
    for p in &dataset.prompts {
        let loc = format!("prompt {}", p.prompt_id);
        if !seen.insert(p.prompt_id.as_str()) {
            issues.push(Issue::error(&loc, "duplicate prompt_id"));
        }
        if let Some(e) = &p.embedding {
            match dim {
                None => dim = Some(e.len()),
                Some(d) if d != e.len() => issues.push(Issue::error(
                    &loc,
                    format!("embedding dimension mismatch ({} vs {d})", e.len()),
                )),
                Some(_) => {}
            }
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > EMBEDDING_NORM_TOL {
                issues.push(Issue::error(&loc, format!("embedding norm {norm} is not 1")));
            }
        }
        if let Some(ppl) = p.perplexity {
            if !(ppl > 0.0) || !ppl.is_finite() {
                issues.push(Issue::error(&loc, "perplexity must be positive"));
            }
        }
        if !dataset.responses.contains_key(&p.prompt_id) {
            issues.push(Issue::error(&loc, "no responses"));
        }
    }

    for (prompt_id, list) in &dataset.responses {
        let loc = format!("prompt {prompt_id}");
        if !seen.contains(prompt_id.as_str()) {
            issues.push(Issue::error(&loc, "responses for unknown prompt"));
        }
        if list.len() != n {
            issues.push(Issue::error(
                &loc,
                format!("{} responses, expected {n}", list.len()),
            ));
        }
        let mut ids = BTreeSet::new();
        for r in list {
            let rloc = format!("response {prompt_id}/{}", r.response_id);
            if !ids.insert(r.response_id.as_str()) {
                issues.push(Issue::error(&rloc, "duplicate response_id"));
            }
            if r.prompt_id != *prompt_id {
                issues.push(Issue::error(&rloc, "filed under the wrong prompt"));
            }
            if !(r.oracle_score > 0.0) || !r.oracle_score.is_finite() {
                issues.push(Issue::error(&rloc, "oracle_score must be positive"));
            } else if r.oracle_score > options.oracle_upper_bound {
                issues.push(Issue::error(
                    &rloc,
                    format!(
                        "oracle_score {} exceeds bound {}",
                        r.oracle_score, options.oracle_upper_bound
                    ),
                ));
            }
            if let Some(samples) = &r.oracle_samples {
                if !oracle_samples_consistent(samples, r.oracle_score) {
                    issues.push(Issue::error(&rloc, "oracle_samples do not average to oracle_score"));
                }
            }
        }
    }

    let mut names = BTreeSet::new();
    for table in tables {
        let loc = format!("rm {}", table.rm_name);
        if !names.insert(table.rm_name.as_str()) {
            issues.push(Issue::error(&loc, "duplicate rm_name"));
        }
        let mut missing = 0usize;
        let mut non_finite = 0usize;
        for (prompt_id, list) in &dataset.responses {
            for r in list {
                match table.get(prompt_id, &r.response_id) {
                    None => missing += 1,
                    Some(s) if !s.is_finite() => non_finite += 1,
                    Some(_) => {}
                }
            }
        }
        let extra = table
            .scores
            .iter()
            .flat_map(|(p, row)| row.keys().map(move |r| (p, r)))
            .filter(|(p, r)| {
                !dataset
                    .responses_for(p)
                    .iter()
                    .any(|resp| &resp.response_id == *r)
            })
            .count();
        if missing > 0 {
            issues.push(Issue::error(&loc, format!("{missing} missing scores")));
        }
        if extra > 0 {
            issues.push(Issue::error(&loc, format!("{extra} scores for unknown pairs")));
        }
        if non_finite > 0 {
            issues.push(Issue::error(&loc, format!("{non_finite} non-finite scores")));
        }
    }

    ValidationReport::from_issues(issues)
}
