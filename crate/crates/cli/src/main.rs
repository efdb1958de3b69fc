//! `maskwin`: train, grid-search, gradient-check and report on learned
//! window/cutoff front ends.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use maskwin::gradcheck::{run_gradcheck, GradcheckOptions};
use maskwin::harness::{default_grid, generate_dataset, grid_search, train, write_runlog_csv, RunLog};
use maskwin::efficiency::EnergyReport;
use serde::Serialize;

use config::CliConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    CheckFailed(String),
    #[error(transparent)]
    Core(#[from] maskwin::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Core(maskwin::Error::Divergence { .. }) => 3,
            CliError::Usage(_) | CliError::Core(_) => 2,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "maskwin", version, about = "Learned window length and cutoff for 1-D classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write runlog.csv, summary.json and resolved_config.json.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one frozen-front-end model per (m, s) pair; writes grid.csv and best.json.
    Grid {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Window lengths in samples, comma separated. Defaults to ten values
        /// from a third of the initial m up to it.
        #[arg(long, value_delimiter = ',')]
        m_grid: Option<Vec<f64>>,
        /// Cutoffs in bins, comma separated. Defaults to ten values from 0.75
        /// of the initial s up to it.
        #[arg(long, value_delimiter = ',')]
        s_grid: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent training runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random configurations per check.
        #[arg(long, default_value_t = 20)]
        configs: usize,
        #[arg(long, default_value_t = 0.0, hide = true)]
        corrupt: f64,
    },
    /// Summarize finished runs into tradeoff.csv and penalty_sweep.csv.
    Report {
        #[arg(long = "run", required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct Summary {
    epochs: usize,
    init_m: f64,
    init_s: f64,
    final_m: f64,
    final_s: f64,
    test_acc: f64,
    aggregate_acc: f64,
    energy: EnergyReport,
}

impl Summary {
    fn new(log: &RunLog) -> Self {
        Self {
            epochs: log.rows.len(),
            init_m: log.init.0,
            init_s: log.init.1,
            final_m: log.final_m,
            final_s: log.final_s,
            test_acc: log.test_acc,
            aggregate_acc: log.aggregate_acc,
            energy: log.energy.clone(),
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn cmd_train(config: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = CliConfig::load(config)?.resolve()?;
    let dir = cfg.out_dir(out)?;
    let data = generate_dataset(&cfg.task)?;
    let log = train(&cfg.train, &cfg.task, &data)?;

    create_dir(&dir)?;
    let path = dir.join("runlog.csv");
    let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    write_runlog_csv(&log.rows, file)?;
    write_json(&dir.join("summary.json"), &Summary::new(&log))?;
    write_json(&dir.join("resolved_config.json"), &cfg)?;
    println!(
        "m {:.1} samples ({:.1} ms), s {:.1} bins ({:.1} Hz), test acc {:.4}, mac ratio {:.4}",
        log.final_m, log.energy.m_ms, log.final_s, log.energy.s_hz, log.test_acc, log.energy.mac_ratio_vs_reference
    );
    Ok(())
}

fn cmd_grid(
    config: Option<&Path>,
    m_grid: Option<Vec<f64>>,
    s_grid: Option<Vec<f64>>,
    out: Option<&Path>,
    jobs: usize,
) -> Result<(), CliError> {
    let cfg = CliConfig::load(config)?.resolve()?;
    let dir = cfg.out_dir(out)?;
    let (m_default, s_default) = default_grid(&cfg.train, &cfg.task);
    let m_grid = m_grid.unwrap_or(m_default);
    let s_grid = s_grid.unwrap_or(s_default);
    if m_grid.is_empty() || s_grid.is_empty() {
        return Err(CliError::Usage("grid search needs non-empty m and s grids".into()));
    }
    let data = generate_dataset(&cfg.task)?;
    let result = grid_search(&cfg.train, &cfg.task, &data, &m_grid, &s_grid, jobs)?;

    create_dir(&dir)?;
    let path = dir.join("grid.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    for row in &result.rows {
        w.serialize(row).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    write_json(&dir.join("best.json"), result.best_row())?;
    let best = result.best_row();
    println!(
        "best of {} points: m {} s {} acc {:.4} mac ratio {:.4}",
        result.rows.len(),
        best.m,
        best.s,
        best.accuracy,
        best.mac_ratio
    );
    Ok(())
}

fn cmd_gradcheck(seed: u64, configs: usize, corrupt: f64) -> Result<(), CliError> {
    let results = run_gradcheck(&GradcheckOptions { seed, configs, corrupt })?;
    let mut failed = Vec::new();
    for r in &results {
        let status = if r.passed() { "ok  " } else { "FAIL" };
        println!(
            "{status} {:<26} max rel err {:.3e} (tol {:.0e}, {} configs)",
            r.name, r.max_rel_err, r.tolerance, r.configs
        );
        if !r.passed() {
            failed.push(r.name.as_str());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("gradient checks failed: {}", failed.join(", "))))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, out } => cmd_train(config.as_deref(), out.as_deref()),
        Command::Grid { config, m_grid, s_grid, out, jobs } => {
            cmd_grid(config.as_deref(), m_grid, s_grid, out.as_deref(), jobs)
        }
        Command::Gradcheck { seed, configs, corrupt } => cmd_gradcheck(seed, configs, corrupt),
        Command::Report { runs, out } => report::cmd_report(&runs, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
