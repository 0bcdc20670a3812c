//! Output artifacts: per-run trace CSVs, the cross-seed summary CSV, and the
//! plain-text comparison table. All float output uses a fixed 6-significant-
//! digit formatter so identical data always produces identical bytes.

use crate::config::Method;
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, forward_transfer, forward_transfer_per_task, retention, retention_per_task, Ratio,
};
use crate::runner::RunRecord;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Format with `sig` significant digits (6 throughout the toolkit). Values
/// whose magnitude exceeds the significant-digit budget keep their full
/// integer part; the output stays deterministic either way.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return format!("{:.*}", sig - 1, 0.0);
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - mag).max(0) as usize;
    format!("{:.*}", decimals, x)
}

/// Trace CSV: one row per training episode, schema `episode,task,reward`.
pub fn render_trace_csv(record: &RunRecord) -> String {
    let mut out = String::from("episode,task,reward\n");
    for ep in &record.episodes {
        out.push_str(&format!("{},{},{}\n", ep.episode, ep.task, fmt_sig(ep.reward, 6)));
    }
    out
}

/// One aggregated summary cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub metric: String,
    /// 1-based task id, or "avg" for the per-method average.
    pub task: String,
    /// Formatted mean, "undefined" when any seed's ratio was undefined; a
    /// trailing `*` marks a negative-denominator ratio.
    pub mean: String,
    /// Formatted population std, "n/a" with fewer than two seeds.
    pub std: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub env: EnvKind,
    pub seeds: usize,
    pub rows: Vec<SummaryRow>,
}

/// Aggregate one metric across seeds into a (mean, std) cell pair.
fn cell(ratios: &[Ratio]) -> Result<(String, String)> {
    let flagged = ratios.iter().any(|r| r.is_flagged());
    let values: Option<Vec<f64>> = ratios.iter().map(|r| r.value()).collect();
    let Some(values) = values else {
        return Ok(("undefined".into(), "n/a".into()));
    };
    let agg = aggregate(&values)?;
    let mut mean = fmt_sig(agg.mean, 6);
    if flagged {
        mean.push('*');
    }
    let std = agg.std.map_or_else(|| "n/a".into(), |s| fmt_sig(s, 6));
    Ok((mean, std))
}

/// Build the summary table for several methods, each with one record per
/// seed. `rstar[i]` is the single-task reference return for task `i`.
pub fn metrics_table(
    env: EnvKind,
    entries: &[(Method, Vec<RunRecord>)],
    rstar: &[f64],
) -> Result<MetricsTable> {
    let mut rows = Vec::new();
    let mut seeds = 0;
    for (method, records) in entries {
        if records.is_empty() {
            return Err(Error::State(format!("no records for method {}", method.as_str())));
        }
        seeds = seeds.max(records.len());
        let t = records[0].eval.len();

        // retention: per task 1..T-1 (1-based), then the average
        let per_seed_ret: Vec<Vec<Ratio>> = records
            .iter()
            .map(retention_per_task)
            .collect::<Result<_>>()?;
        for i in 0..t - 1 {
            let column: Vec<Ratio> = per_seed_ret.iter().map(|r| r[i]).collect();
            let (mean, std) = cell(&column)?;
            rows.push(SummaryRow {
                method: method.as_str().into(),
                metric: "retention".into(),
                task: (i + 1).to_string(),
                mean,
                std,
            });
        }
        let avg: Vec<Ratio> = records.iter().map(retention).collect::<Result<_>>()?;
        let (mean, std) = cell(&avg)?;
        rows.push(SummaryRow {
            method: method.as_str().into(),
            metric: "retention".into(),
            task: "avg".into(),
            mean,
            std,
        });

        // forward transfer: per task 2..T (1-based), then the average
        let per_seed_fwd: Vec<Vec<Ratio>> = records
            .iter()
            .map(|r| forward_transfer_per_task(r, rstar))
            .collect::<Result<_>>()?;
        for i in 0..t - 1 {
            let column: Vec<Ratio> = per_seed_fwd.iter().map(|r| r[i]).collect();
            let (mean, std) = cell(&column)?;
            rows.push(SummaryRow {
                method: method.as_str().into(),
                metric: "forward_transfer".into(),
                task: (i + 2).to_string(),
                mean,
                std,
            });
        }
        let avg: Vec<Ratio> =
            records.iter().map(|r| forward_transfer(r, rstar)).collect::<Result<_>>()?;
        let (mean, std) = cell(&avg)?;
        rows.push(SummaryRow {
            method: method.as_str().into(),
            metric: "forward_transfer".into(),
            task: "avg".into(),
            mean,
            std,
        });
    }
    Ok(MetricsTable { env, seeds, rows })
}

/// Summary CSV, schema `method,metric,task,mean,std`.
pub fn render_summary_csv(table: &MetricsTable) -> String {
    let mut out = String::from("method,metric,task,mean,std\n");
    for r in &table.rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.method, r.metric, r.task, r.mean, r.std));
    }
    out
}

/// Plain-text comparison table: one line per method with the averaged
/// retention and forward transfer. Averages above 100% are labeled as
/// positive backward/forward transfer; `*` marks negative-denominator cells.
pub fn render_text_report(table: &MetricsTable) -> String {
    let mut out = format!(
        "continual dynamics-learning summary — env: {}, seeds: {}\n\n",
        table.env.as_str(),
        table.seeds
    );
    out.push_str(&format!(
        "{:<14} {:<24} {:<24}\n",
        "method", "retention (%)", "forward transfer (%)"
    ));
    let avg_cell = |method: &str, metric: &str| -> String {
        let row = table
            .rows
            .iter()
            .find(|r| r.method == method && r.metric == metric && r.task == "avg");
        match row {
            None => "-".into(),
            Some(r) => {
                let mut s = format!("{} ± {}", r.mean, r.std);
                let above_100 = r
                    .mean
                    .trim_end_matches('*')
                    .parse::<f64>()
                    .is_ok_and(|v| v > 100.0);
                if above_100 {
                    s.push_str(if metric == "retention" { " (+bwd)" } else { " (+fwd)" });
                }
                s
            }
        }
    };
    let mut methods: Vec<&str> = Vec::new();
    for r in &table.rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    for m in methods {
        out.push_str(&format!(
            "{:<14} {:<24} {:<24}\n",
            m,
            avg_cell(m, "retention"),
            avg_cell(m, "forward_transfer")
        ));
    }
    out.push_str(
        "\nretention: mean final-vs-own-checkpoint return ratio over tasks 1..T-1\n\
         forward transfer: mean own-checkpoint vs from-scratch return ratio over tasks 2..T\n\
         (+bwd)/(+fwd): above 100%, i.e. positive backward/forward transfer\n\
         *: ratio computed against a negative denominator\n",
    );
    out
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}
