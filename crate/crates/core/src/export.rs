//! CSV exports for curves, per-prompt values, metric tables and convergence runs.
//!
//! Every writer takes an optional provenance string that is emitted as a
//! leading `# ...` comment line before the header.

use std::io::Write;

use crate::bon::BonCurve;
use crate::data::BenchmarkDataset;
use crate::metrics::MetricReport;
use crate::reta::RetaCurve;
use crate::synth::ConvergenceRow;

pub type Result<T> = std::result::Result<T, csv::Error>;

/// Shortest round-trip representation, always with a decimal point or exponent.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn writer<W: Write>(mut out: W, provenance: Option<&str>) -> Result<csv::Writer<W>> {
    if let Some(p) = provenance {
        writeln!(out, "# {p}")?;
    }
    Ok(csv::Writer::from_writer(out))
}

pub fn write_reta_curves<W: Write>(out: W, curves: &[RetaCurve], provenance: Option<&str>) -> Result<()> {
    let mut w = writer(out, provenance)?;
    w.write_record(["rm_name", "eta", "value", "std_error", "n_low", "n_high"])?;
    for curve in curves {
        for (eta, est) in &curve.points {
            let lo = est.n_values_used.first().copied().unwrap_or(0);
            let hi = est.n_values_used.last().copied().unwrap_or(0);
            w.write_record([
                curve.rm_name.clone(),
                fmt_f64(*eta),
                fmt_f64(est.value),
                fmt_f64(est.std_error),
                lo.to_string(),
                hi.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-prompt values with the prompt's perplexity (blank when absent).
pub fn write_per_prompt<W: Write>(
    out: W,
    dataset: &BenchmarkDataset,
    curves: &[RetaCurve],
    provenance: Option<&str>,
) -> Result<()> {
    let mut w = writer(out, provenance)?;
    w.write_record(["rm_name", "prompt_id", "eta", "value", "perplexity"])?;
    for curve in curves {
        for (eta, est) in &curve.points {
            for (prompt_id, value) in &est.per_prompt {
                let ppl = dataset
                    .prompt(prompt_id)
                    .and_then(|p| p.perplexity)
                    .map(fmt_f64)
                    .unwrap_or_default();
                w.write_record([
                    curve.rm_name.clone(),
                    prompt_id.clone(),
                    fmt_f64(*eta),
                    fmt_f64(*value),
                    ppl,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_bon_curves<W: Write>(out: W, curves: &[BonCurve], provenance: Option<&str>) -> Result<()> {
    let mut w = writer(out, provenance)?;
    w.write_record(["rm_name", "variant", "n", "kl", "value", "std_error"])?;
    for curve in curves {
        for (point, kl) in curve.points.iter().zip(&curve.kl) {
            w.write_record([
                curve.rm_name.clone(),
                curve.variant.to_string(),
                point.n.to_string(),
                fmt_f64(*kl),
                fmt_f64(point.value),
                fmt_f64(point.std_error),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per RM: pairwise accuracy, hit rates, NDCG, MRR, win rate.
/// All reports must share the same hit-rate cutoffs.
pub fn write_metric_reports<W: Write>(out: W, reports: &[MetricReport], provenance: Option<&str>) -> Result<()> {
    let mut w = writer(out, provenance)?;
    let ks: Vec<usize> = reports
        .first()
        .map(|r| r.hit_rate.keys().copied().collect())
        .unwrap_or_default();
    let mut header = vec!["rm_name".to_string(), "pairwise_accuracy".to_string()];
    header.extend(ks.iter().map(|k| format!("hr@{k}")));
    header.extend(["ndcg", "mrr", "selection_rank_j", "win_rate"].map(String::from));
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![r.rm_name.clone(), fmt_f64(r.pairwise_accuracy)];
        row.extend(ks.iter().map(|k| r.hit_rate.get(k).map(|v| fmt_f64(*v)).unwrap_or_default()));
        row.push(fmt_f64(r.ndcg));
        row.push(fmt_f64(r.mrr));
        row.push(r.selection_rank_j.to_string());
        row.push(r.win_rate.map(fmt_f64).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_convergence<W: Write>(out: W, rows: &[ConvergenceRow], provenance: Option<&str>) -> Result<()> {
    let mut w = writer(out, provenance)?;
    w.write_record(["N", "eta", "estimate", "analytic", "abs_error", "std_error", "seed"])?;
    for r in rows {
        w.write_record([
            r.total.to_string(),
            fmt_f64(r.eta),
            fmt_f64(r.estimate),
            fmt_f64(r.analytic),
            fmt_f64(r.abs_error),
            fmt_f64(r.std_error),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
