use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::run::{Aggregate, PotentialAudit, SweepSummary};

pub const TRACE_HEADER: &str = "t,mean_cum_regret,std_cum_regret,n_replicates";
pub const RAW_HEADER: &str = "param_index,param_value,replicate,t,cum_regret";

/// 17 significant digits: enough to read back the identical `f64`.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trace_csv(agg: &Aggregate) -> String {
    let mut out = String::with_capacity(agg.mean.len() * 64);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for (i, (m, s)) in agg.mean.iter().zip(&agg.std).enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i + 1,
            fmt(*m),
            fmt(*s),
            agg.n_replicates
        );
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Aggregate> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::Config("trace CSV has an unexpected header".into()));
    }
    let bad = |line: &str| Error::Config(format!("malformed trace CSV line: {line}"));
    let (mut mean, mut std, mut n) = (Vec::new(), Vec::new(), 0);
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let [_, m, s, k] = cols[..] else {
            return Err(bad(line));
        };
        mean.push(m.parse().map_err(|_| bad(line))?);
        std.push(s.parse().map_err(|_| bad(line))?);
        n = k.parse().map_err(|_| bad(line))?;
    }
    Ok(Aggregate {
        mean,
        std,
        n_replicates: n,
    })
}

#[derive(Serialize)]
struct ReplicateRecord {
    replicate: usize,
    env_seed: u64,
    learner_seed: u64,
    final_regret: f64,
    unsolved_rounds: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    potential: Option<PotentialAudit>,
}

#[derive(Serialize)]
struct FailureRecord<'a> {
    replicate: usize,
    error: &'a str,
}

#[derive(Serialize)]
struct CellRecord<'a> {
    param_index: usize,
    param_value: f64,
    complete: bool,
    n_replicates: usize,
    mean_final_regret: Option<f64>,
    std_final_regret: Option<f64>,
    replicates: Vec<ReplicateRecord>,
    failures: Vec<FailureRecord<'a>>,
}

#[derive(Serialize)]
struct BestRecord {
    param_index: usize,
    param_value: f64,
    mean_final_regret: f64,
    std_final_regret: f64,
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    /// The config minus `output_dir`, so the file does not depend on where
    /// it is written.
    config: serde_json::Value,
    best: BestRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    potential_audits_hold: Option<bool>,
    sweep: Vec<CellRecord<'a>>,
}

fn config_echo(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    let mut value = serde_json::to_value(cfg)?;
    if let Some(map) = value.as_object_mut() {
        map.remove("output_dir");
    }
    Ok(value)
}

pub fn summary_json(summary: &SweepSummary) -> Result<String> {
    let Some(best) = summary.best_cell() else {
        return Err(Error::Empty("no sweep value completed all replicates"));
    };
    let best_agg = best
        .aggregate
        .as_ref()
        .ok_or(Error::Empty("best cell has no replicates"))?;
    let has_audits = summary
        .cells
        .iter()
        .flat_map(|c| &c.traces)
        .any(|(_, t)| t.potential.is_some());
    let record = SummaryRecord {
        config: config_echo(&summary.config)?,
        best: BestRecord {
            param_index: best.param_index,
            param_value: best.param_value,
            mean_final_regret: best_agg.final_mean(),
            std_final_regret: best_agg.final_std(),
        },
        potential_audits_hold: has_audits.then(|| summary.potential_audits_hold()),
        sweep: summary
            .cells
            .iter()
            .map(|c| CellRecord {
                param_index: c.param_index,
                param_value: c.param_value,
                complete: c.is_complete(),
                n_replicates: c.traces.len(),
                mean_final_regret: c.aggregate.as_ref().map(Aggregate::final_mean),
                std_final_regret: c.aggregate.as_ref().map(Aggregate::final_std),
                replicates: c
                    .traces
                    .iter()
                    .map(|(r, t)| ReplicateRecord {
                        replicate: *r,
                        env_seed: t.env_seed,
                        learner_seed: t.learner_seed,
                        final_regret: t.final_regret(),
                        unsolved_rounds: t.unsolved_rounds,
                        potential: t.potential,
                    })
                    .collect(),
                failures: c
                    .failures
                    .iter()
                    .map(|f| FailureRecord {
                        replicate: f.replicate,
                        error: &f.error,
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    Ok(text)
}

pub fn raw_csv(summary: &SweepSummary) -> String {
    let mut out = String::new();
    out.push_str(RAW_HEADER);
    out.push('\n');
    for cell in &summary.cells {
        for (r, trace) in &cell.traces {
            for (i, x) in trace.cum_regret.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    cell.param_index,
                    fmt(cell.param_value),
                    r,
                    i + 1,
                    fmt(*x)
                );
            }
        }
    }
    out
}

pub fn trace_file_name(summary: &SweepSummary) -> String {
    format!(
        "trace_{}_{}.csv",
        summary.config.algorithm.name.name(),
        summary.config.env.kind.name()
    )
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the best cell's trace CSV, `summary.json`, and, if the config asks
/// for it, a raw per-replicate CSV into `dir`. Returns the paths written.
pub fn emit_outputs(summary: &SweepSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    let json = summary_json(summary)?;
    let best = summary
        .best_cell()
        .and_then(|c| c.aggregate.as_ref())
        .ok_or(Error::Empty("no completed replicates"))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![
        write(dir.join(trace_file_name(summary)), &trace_csv(best))?,
        write(dir.join("summary.json"), &json)?,
    ];
    if summary.config.raw {
        let name = format!(
            "raw_{}_{}.csv",
            summary.config.algorithm.name.name(),
            summary.config.env.kind.name()
        );
        written.push(write(dir.join(name), &raw_csv(summary))?);
    }
    Ok(written)
}
