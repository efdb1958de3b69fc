//! Grid-search baseline over fixed `(m, s)` pairs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::task::{SyntheticTaskSpec, TaskData};
use super::train::{train, Baseline, TrainConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    /// Window length, samples.
    pub m: f64,
    /// Cutoff, bins.
    pub s: f64,
    pub accuracy: f64,
    pub mac_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// One row per grid point, `m` major, in grid order.
    pub rows: Vec<GridRow>,
    pub best: usize,
}

impl GridResult {
    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }
}

/// `count` evenly spaced values over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Ten-by-ten default grid: `m` from a third of the signal to all of it,
/// `s` from three quarters of the initial cutoff to the initial cutoff.
pub fn default_grid(config: &TrainConfig, task: &SyntheticTaskSpec) -> (Vec<f64>, Vec<f64>) {
    let (m_hi, s_hi) = config.resolved_init(task);
    (linspace(m_hi / 3.0, m_hi, 10), linspace(0.75 * s_hi, s_hi, 10))
}

/// Index of the most accurate row; ties go to the smaller `m·s`, then to the
/// earlier row.
pub fn pick_best(rows: &[GridRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        let b = &rows[best];
        if r.accuracy > b.accuracy || (r.accuracy == b.accuracy && r.m * r.s < b.m * b.s) {
            best = i;
        }
    }
    best
}

/// Trains one frozen-front-end model per `(m, s)` pair. MAC ratios are
/// relative to the configuration's own initial `(m, s)`. Up to `jobs` runs
/// execute concurrently; the table is in grid order regardless.
pub fn grid_search(
    config: &TrainConfig,
    task: &SyntheticTaskSpec,
    data: &TaskData,
    m_grid: &[f64],
    s_grid: &[f64],
    jobs: usize,
) -> Result<GridResult> {
    if m_grid.is_empty() || s_grid.is_empty() {
        return Err(Error::InvalidConfig("grid search needs non-empty m and s grids".into()));
    }
    let reference = config.resolved_init(task);
    let points: Vec<(f64, f64)> = m_grid
        .iter()
        .flat_map(|&m| s_grid.iter().map(move |&s| (m, s)))
        .collect();
    let run_point = |(m, s): (f64, f64)| -> Result<GridRow> {
        let cfg = TrainConfig {
            init_m: Some(m),
            init_s: Some(s),
            baseline: Baseline::Grid,
            ..config.clone()
        };
        let log = train(&cfg, task, data)?;
        let energy = crate::efficiency::energy_report(
            &crate::frontend::WindowSpec::new(cfg.family, m, task.n),
            &crate::frontend::DownsampleSpec::for_signal(task.n, s, cfg.r, task.rate_in),
            &super::backbone::backbone_desc(task.num_classes),
            reference,
        )?;
        Ok(GridRow {
            m,
            s,
            accuracy: log.test_acc,
            mac_ratio: energy.mac_ratio_vs_reference,
        })
    };

    let jobs = jobs.clamp(1, points.len());
    let results: Vec<Result<GridRow>> = if jobs == 1 {
        points.iter().map(|&p| run_point(p)).collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<GridRow>>>> =
            Mutex::new((0..points.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= points.len() {
                        break;
                    }
                    let r = run_point(points[i]);
                    slots.lock().expect("worker panicked")[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .expect("worker panicked")
            .into_iter()
            .map(|r| r.expect("every grid point ran"))
            .collect()
    };
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let best = pick_best(&rows);
    Ok(GridResult { rows, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(m: f64, s: f64, accuracy: f64) -> GridRow {
        GridRow { m, s, accuracy, mac_ratio: 1.0 }
    }

    #[test]
    fn best_prefers_accuracy_then_smaller_area() {
        let rows = [row(100.0, 10.0, 0.9), row(50.0, 10.0, 0.95), row(40.0, 10.0, 0.95), row(10.0, 10.0, 0.5)];
        assert_eq!(pick_best(&rows), 2);
        assert_eq!(pick_best(&rows[..1]), 0);
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(100.0, 300.0, 10);
        assert_eq!(v.len(), 10);
        assert_eq!(v[0], 100.0);
        assert_eq!(v[9], 300.0);
        assert_eq!(linspace(5.0, 9.0, 1), vec![5.0]);
    }
}
