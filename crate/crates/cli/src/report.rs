//! Plot-ready tables over finished run directories.

use std::path::{Path, PathBuf};

use maskwin::harness::read_runlog_csv;
use serde::Serialize;

use crate::config::CliConfig;
use crate::{create_dir, io_err, CliError};

#[derive(Debug, Serialize)]
struct TradeoffRow {
    run: String,
    m_ms: f64,
    s_hz: f64,
    test_acc: f64,
    mac_ratio: f64,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    lambda: f64,
    m_ms: f64,
    s_hz: f64,
    test_acc: f64,
}

struct RunSummary {
    lambda: f64,
    tradeoff: TradeoffRow,
}

// Last epoch of `dir`'s runlog plus the λ it was trained with.
fn load_run(dir: &Path) -> Result<RunSummary, CliError> {
    let log = dir.join("runlog.csv");
    if !log.is_file() {
        return Err(CliError::Usage(format!("{}: no runlog.csv", dir.display())));
    }
    let rows = read_runlog_csv(&log)?;
    let last = rows
        .last()
        .ok_or_else(|| CliError::Usage(format!("{}: runlog has no epochs", log.display())))?;
    let cfg_path = dir.join("resolved_config.json");
    let cfg = CliConfig::load(Some(&cfg_path))?;
    Ok(RunSummary {
        lambda: cfg.train.lambda,
        tradeoff: TradeoffRow {
            run: dir.display().to_string(),
            m_ms: last.m_ms,
            s_hz: last.s_hz,
            test_acc: last.test_acc,
            mac_ratio: last.mac_ratio,
        },
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes `tradeoff.csv` (one row per run, in argument order) and
/// `penalty_sweep.csv` (sorted by λ, ties kept in argument order).
pub fn cmd_report(runs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut loaded = runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
    create_dir(out)?;
    let mut sweep: Vec<SweepRow> = loaded
        .iter()
        .map(|r| SweepRow {
            lambda: r.lambda,
            m_ms: r.tradeoff.m_ms,
            s_hz: r.tradeoff.s_hz,
            test_acc: r.tradeoff.test_acc,
        })
        .collect();
    sweep.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    write_csv(&out.join("tradeoff.csv"), loaded.drain(..).map(|r| r.tradeoff))?;
    write_csv(&out.join("penalty_sweep.csv"), sweep)?;
    println!("{} runs summarized into {}", runs.len(), out.display());
    Ok(())
}
