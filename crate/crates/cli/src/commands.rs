use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use reta::bon::{bon_curve, BonError, BonVariant};
use reta::data::{
    ingest_rm_scores, load_benchmark_with, load_prompts, validate_dataset_with, write_benchmark, write_rm_scores,
    BenchmarkDataset, Issue, LoadOptions, RmScoreTable, ValidationReport, DEFAULT_ORACLE_UPPER_BOUND,
};
use reta::dpp::{build_dpp, sample_kdpp, DppError, DppSampleConfig};
use reta::export;
use reta::metrics::{metric_report, FileLabeler, Labeler, MetricError, MetricOptions};
use reta::reta::{default_eta_grid, reta_curve, RetaConfig, RetaCurve, RetaError};
use reta::synth::{convergence_experiment, gen_synthetic, SynthError};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{compute_err, input_err, CliError};

type Result<T> = std::result::Result<T, CliError>;

/// Files written by a command, in write order.
pub type Outputs = Vec<PathBuf>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::input("Io", format!("{}: {e}", path.display()))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = RunConfig::require(&cfg.out, "out")?.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_csv(
    path: &Path,
    outputs: &mut Outputs,
    body: impl FnOnce(&mut BufWriter<File>) -> export::Result<()>,
) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))?;
    outputs.push(path.to_path_buf());
    Ok(())
}

/// Writes the canonical config echo next to the outputs.
fn echo_config(cfg: &RunConfig, dir: &Path, outputs: &mut Outputs) -> Result<()> {
    let path = dir.join("run_config.json");
    write_text(&path, &cfg.provenance_view().canonical())?;
    outputs.push(path);
    Ok(())
}

fn load_options(cfg: &RunConfig) -> LoadOptions {
    LoadOptions {
        oracle_upper_bound: cfg.oracle_max.unwrap_or(DEFAULT_ORACLE_UPPER_BOUND),
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<BenchmarkDataset> {
    let path = RunConfig::require(&cfg.dataset, "dataset")?;
    load_benchmark_with(path, &load_options(cfg))
        .map(|l| l.value)
        .map_err(input_err)
}

fn first_error(report: &ValidationReport) -> Option<CliError> {
    report
        .errors()
        .next()
        .map(|i| CliError::input("ValidationFailed", format!("{}: {}", i.location, i.message)))
}

/// Score tables from `rm_scores`, plus the oracle table when requested.
fn load_tables(cfg: &RunConfig, dataset: &BenchmarkDataset) -> Result<Vec<RmScoreTable>> {
    let mut tables = Vec::new();
    for path in cfg.rm_scores.iter().flatten() {
        tables.push(ingest_rm_scores(dataset, path).map_err(input_err)?);
    }
    if cfg.include_oracle.unwrap_or(false) {
        tables.push(RmScoreTable::oracle(dataset));
    }
    if tables.is_empty() {
        return Err(CliError::input("MissingArgument", "at least one of `rm_scores` or `include_oracle` is required"));
    }
    let report = validate_dataset_with(dataset, &tables, &load_options(cfg));
    match first_error(&report) {
        Some(e) => Err(e),
        None => Ok(tables),
    }
}

fn reta_config(cfg: &RunConfig) -> RetaConfig {
    let d = RetaConfig::default();
    RetaConfig {
        resamples: cfg.resamples.unwrap_or(d.resamples),
        n_range_low_coeff: cfg.n_range_low_coeff.unwrap_or(d.n_range_low_coeff),
        n_range_high_coeff: cfg.n_range_high_coeff.unwrap_or(d.n_range_high_coeff),
        n_exponent: cfg.n_exponent.unwrap_or(d.n_exponent),
        seed: cfg.seed.unwrap_or(d.seed),
        normalize: cfg.normalize.unwrap_or(d.normalize),
        resampling: d.resampling,
    }
}

fn reta_err(e: RetaError) -> CliError {
    match e {
        RetaError::InvalidEta(_)
        | RetaError::InvalidEtaGrid
        | RetaError::InvalidConfig(_)
        | RetaError::EmptyNRange { .. }
        | RetaError::InvalidSubsetSize { .. } => input_err(e),
        _ => compute_err(e),
    }
}

/// Fills the defaults a command actually used, so the echo is complete.
fn resolve_reta(cfg: &mut RunConfig) {
    let r = reta_config(cfg);
    cfg.seed = Some(r.seed);
    cfg.resamples = Some(r.resamples);
    cfg.n_range_low_coeff = Some(r.n_range_low_coeff);
    cfg.n_range_high_coeff = Some(r.n_range_high_coeff);
    cfg.n_exponent = Some(r.n_exponent);
    cfg.normalize = Some(r.normalize);
}

fn curves(
    dataset: &BenchmarkDataset,
    tables: &[RmScoreTable],
    etas: &[f64],
    config: &RetaConfig,
) -> Result<Vec<RetaCurve>> {
    tables
        .iter()
        .map(|t| reta_curve(dataset, t, etas, config).map_err(reta_err))
        .collect()
}

pub fn cmd_reta(mut cfg: RunConfig) -> Result<Outputs> {
    resolve_reta(&mut cfg);
    cfg.eta_grid.get_or_insert_with(default_eta_grid);
    cfg.ablation.get_or_insert(false);
    let dataset = load_dataset(&cfg)?;
    let tables = load_tables(&cfg, &dataset)?;
    let config = reta_config(&cfg);
    config.validate().map_err(reta_err)?;
    config.n_grid(dataset.responses_per_prompt).map_err(reta_err)?;
    let etas = cfg.eta_grid.clone().expect("resolved");
    let dir = out_dir(&cfg)?;
    let prov = cfg.provenance();
    let mut outputs = Vec::new();

    let mut runs = vec![(config.clone(), "")];
    if cfg.ablation == Some(true) && config.normalize {
        runs.push((
            RetaConfig {
                normalize: false,
                ..config
            },
            "_unnormalized",
        ));
    }
    for (config, suffix) in runs {
        let result = curves(&dataset, &tables, &etas, &config)?;
        write_csv(&dir.join(format!("reta_curve{suffix}.csv")), &mut outputs, |w| {
            export::write_reta_curves(w, &result, Some(&prov))
        })?;
        write_csv(&dir.join(format!("reta_per_prompt{suffix}.csv")), &mut outputs, |w| {
            export::write_per_prompt(w, &dataset, &result, Some(&prov))
        })?;
    }
    echo_config(&cfg, &dir, &mut outputs)?;
    Ok(outputs)
}

fn bon_err(e: BonError) -> CliError {
    input_err(e)
}

pub fn cmd_bon(mut cfg: RunConfig) -> Result<Outputs> {
    cfg.variants.get_or_insert_with(|| vec![BonVariant::BestOfN]);
    let dataset = load_dataset(&cfg)?;
    let tables = load_tables(&cfg, &dataset)?;
    let dir = out_dir(&cfg)?;
    let prov = cfg.provenance();
    let mut outputs = Vec::new();
    for variant in cfg.variants.clone().expect("resolved") {
        let result: Vec<_> = tables
            .iter()
            .map(|t| bon_curve(&dataset, t, variant, cfg.n_values.as_deref()).map_err(bon_err))
            .collect::<Result<_>>()?;
        let name = format!("bon_{}.csv", variant.to_string().replace(':', "_"));
        write_csv(&dir.join(name), &mut outputs, |w| {
            export::write_bon_curves(w, &result, Some(&prov))
        })?;
    }
    echo_config(&cfg, &dir, &mut outputs)?;
    Ok(outputs)
}

fn metric_err(e: MetricError) -> CliError {
    match e {
        MetricError::NoComparablePairs(_) => compute_err(e),
        _ => input_err(e),
    }
}

pub fn cmd_metrics(mut cfg: RunConfig) -> Result<Outputs> {
    let defaults = MetricOptions::default();
    cfg.eta.get_or_insert(defaults.eta);
    cfg.selection_rank_j.get_or_insert(defaults.selection_rank_j);
    let dataset = load_dataset(&cfg)?;
    let tables = load_tables(&cfg, &dataset)?;
    let names: BTreeSet<&str> = tables.iter().map(|t| t.rm_name.as_str()).collect();
    for rm in cfg.labels.iter().flat_map(|l| l.keys()) {
        if !names.contains(rm.as_str()) {
            return Err(CliError::input("UnknownRm", format!("labels given for unknown rm `{rm}`")));
        }
    }
    let options = MetricOptions {
        eta: cfg.eta.expect("resolved"),
        hit_rate_k: cfg.hit_rate_k.clone().unwrap_or_default(),
        selection_rank_j: cfg.selection_rank_j.expect("resolved"),
    };
    let dir = out_dir(&cfg)?;
    let prov = cfg.provenance();
    let reports = tables
        .iter()
        .map(|t| {
            let labeler = cfg.labels.as_ref().and_then(|l| l.get(&t.rm_name)).map(FileLabeler::new);
            metric_report(&dataset, t, &options, labeler.as_ref().map(|l| l as &dyn Labeler)).map_err(metric_err)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut outputs = Vec::new();
    write_csv(&dir.join("metrics.csv"), &mut outputs, |w| {
        export::write_metric_reports(w, &reports, Some(&prov))
    })?;
    echo_config(&cfg, &dir, &mut outputs)?;
    Ok(outputs)
}

#[derive(Serialize)]
struct SampleProvenance<'a> {
    tool: String,
    config_hash: String,
    seed: u64,
    k: usize,
    candidates: usize,
    embedding_rank: usize,
    lambda: f64,
    epsilon: f64,
    steps: usize,
    accepted: usize,
    selected: Vec<&'a str>,
}

fn dpp_err(e: DppError) -> CliError {
    match e {
        DppError::DegenerateInit { .. } | DppError::NumericalBreakdown => compute_err(e),
        _ => input_err(e),
    }
}

pub fn cmd_sample_prompts(mut cfg: RunConfig) -> Result<Outputs> {
    cfg.seed.get_or_insert(0);
    let defaults = DppSampleConfig::new(0, 0);
    cfg.epsilon.get_or_insert(defaults.epsilon);
    let path = RunConfig::require(&cfg.candidates, "candidates")?;
    let k = *RunConfig::require(&cfg.k, "k")?;
    let prompts = load_prompts(path).map_err(input_err)?.value;
    let model = build_dpp(&prompts).map_err(dpp_err)?;
    let config = DppSampleConfig {
        k,
        seed: cfg.seed.expect("resolved"),
        epsilon: cfg.epsilon.expect("resolved"),
        max_steps: cfg.max_steps,
    };
    let sample = sample_kdpp(&model, &config).map_err(dpp_err)?;
    let selected: Vec<&str> = sample.indices.iter().map(|&i| prompts[i].prompt_id.as_str()).collect();

    let dir = out_dir(&cfg)?;
    let mut outputs = Vec::new();
    let ids_path = dir.join("selected_prompts.txt");
    let mut text = String::new();
    for id in &selected {
        text.push_str(id);
        text.push('\n');
    }
    write_text(&ids_path, &text)?;
    outputs.push(ids_path);

    let record = SampleProvenance {
        tool: format!("reta {}", env!("CARGO_PKG_VERSION")),
        config_hash: cfg.hash(),
        seed: config.seed,
        k,
        candidates: model.candidates(),
        embedding_rank: model.rank,
        lambda: model.lambda,
        epsilon: config.epsilon,
        steps: sample.steps,
        accepted: sample.accepted,
        selected,
    };
    let prov_path = dir.join("sample_provenance.json");
    let mut json = serde_json::to_string_pretty(&record).expect("record serializes");
    json.push('\n');
    write_text(&prov_path, &json)?;
    outputs.push(prov_path);
    echo_config(&cfg, &dir, &mut outputs)?;
    Ok(outputs)
}

fn synth_err(e: SynthError) -> CliError {
    match e {
        SynthError::Reta(e) => reta_err(e),
        SynthError::Data(e) => compute_err(e),
        _ => input_err(e),
    }
}

pub fn cmd_synth(mut cfg: RunConfig) -> Result<Outputs> {
    cfg.seed.get_or_insert(0);
    cfg.num_prompts.get_or_insert(100);
    cfg.responses_per_prompt.get_or_insert(256);
    let spec = RunConfig::require(&cfg.spec, "spec")?.clone();
    let seed = cfg.seed.expect("resolved");
    let (dataset, table) = gen_synthetic(
        &spec,
        cfg.num_prompts.expect("resolved"),
        cfg.responses_per_prompt.expect("resolved"),
        seed,
    )
    .map_err(synth_err)?;

    let dir = out_dir(&cfg)?;
    let mut outputs = Vec::new();
    let data_dir = dir.join("dataset");
    write_benchmark(&dataset, &data_dir).map_err(compute_err)?;
    outputs.push(data_dir.join(reta::data::PROMPTS_FILE));
    outputs.push(data_dir.join(reta::data::RESPONSES_FILE));
    let scores = dir.join("rm_scores.jsonl");
    write_rm_scores(&table, &scores).map_err(compute_err)?;
    outputs.push(scores);

    if cfg.convergence_n.is_some() {
        resolve_reta(&mut cfg);
        cfg.eta.get_or_insert(0.25);
        let config = reta_config(&cfg);
        let rows = convergence_experiment(
            &spec,
            cfg.eta.expect("resolved"),
            cfg.convergence_n.as_deref().expect("checked"),
            cfg.num_prompts.expect("resolved"),
            &config,
        )
        .map_err(synth_err)?;
        let prov = cfg.provenance();
        write_csv(&dir.join("convergence.csv"), &mut outputs, |w| {
            export::write_convergence(w, &rows, Some(&prov))
        })?;
    }
    echo_config(&cfg, &dir, &mut outputs)?;
    Ok(outputs)
}

/// Validation never fails fast: every problem becomes a report entry.
pub fn cmd_validate(cfg: RunConfig) -> Result<(ValidationReport, Outputs)> {
    let dataset = load_dataset(&cfg)?;
    let mut tables = Vec::new();
    let mut load_issues = Vec::new();
    for path in cfg.rm_scores.iter().flatten() {
        match ingest_rm_scores(&dataset, path) {
            Ok(t) => tables.push(t),
            Err(e) => load_issues.push(Issue::error(path.display().to_string(), e.to_string())),
        }
    }
    let report = validate_dataset_with(&dataset, &tables, &load_options(&cfg));
    let mut issues = load_issues;
    issues.extend(report.issues);
    let report = ValidationReport::from_issues(issues);

    let mut outputs = Vec::new();
    if cfg.out.is_some() {
        let dir = out_dir(&cfg)?;
        let path = dir.join("validation.json");
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        write_text(&path, &json)?;
        outputs.push(path);
    }
    Ok((report, outputs))
}

/// File-system-safe version of an rm name.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Rewrites the dataset and score tables in canonical order and formatting.
pub fn cmd_export(cfg: RunConfig) -> Result<Outputs> {
    let dataset = load_dataset(&cfg)?;
    let mut tables = Vec::new();
    for path in cfg.rm_scores.iter().flatten() {
        tables.push(ingest_rm_scores(&dataset, path).map_err(input_err)?);
    }
    if cfg.include_oracle.unwrap_or(false) {
        tables.push(RmScoreTable::oracle(&dataset));
    }
    let dir = out_dir(&cfg)?;
    let mut outputs = Vec::new();
    let data_dir = dir.join("dataset");
    write_benchmark(&dataset, &data_dir).map_err(compute_err)?;
    outputs.push(data_dir.join(reta::data::PROMPTS_FILE));
    outputs.push(data_dir.join(reta::data::RESPONSES_FILE));
    let mut stems = BTreeSet::new();
    for table in &tables {
        let stem = file_stem(&table.rm_name);
        if !stems.insert(stem.clone()) {
            return Err(CliError::input("DuplicateRmName", format!("two tables map to `{stem}`")));
        }
        let path = dir.join(format!("rm_scores_{stem}.jsonl"));
        write_rm_scores(table, &path).map_err(compute_err)?;
        outputs.push(path);
    }
    Ok(outputs)
}
