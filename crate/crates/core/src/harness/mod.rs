//! Synthetic task, classifier, training loop and baselines.

mod backbone;
mod grid;
mod task;
mod train;

use std::fs::File;
use std::io::Write;
use std::path::Path;

pub use backbone::{backbone_desc, propagate_valid, Backbone, BoundBackbone};
pub use grid::{default_grid, grid_search, linspace, pick_best, GridResult, GridRow};
pub use task::{generate_dataset, Dataset, SyntheticTaskSpec, TaskData};
pub use train::{
    evaluate, predict_all, score, train, Baseline, EpochRow, EvalLevel, EvalResult, Model, RunLog,
    TrainConfig,
};

use crate::error::Result;

/// Column order of a run log.
pub const RUNLOG_HEADER: &str = "epoch,m_samples,m_ms,s_bins,s_hz,train_loss,test_acc,penalty,mac_ratio";

/// Writes one CSV row per epoch under [`RUNLOG_HEADER`].
pub fn write_runlog_csv(rows: &[EpochRow], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RUNLOG_HEADER.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runlog_csv(path: &Path) -> Result<Vec<EpochRow>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    Ok(r.deserialize().collect::<std::result::Result<Vec<EpochRow>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runlog_roundtrip() {
        let row = EpochRow {
            epoch: 1,
            m_samples: 4096.0,
            m_ms: 256.0,
            s_bins: 2049.0,
            s_hz: 8000.0,
            train_loss: 2.3,
            test_acc: 0.1,
            penalty: 0.0,
            mac_ratio: 1.0,
        };
        let mut buf = Vec::new();
        write_runlog_csv(std::slice::from_ref(&row), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), RUNLOG_HEADER);
        let dir = std::env::temp_dir().join(format!("maskwin-runlog-{}", std::process::id()));
        std::fs::write(&dir, &text).unwrap();
        assert_eq!(read_runlog_csv(&dir).unwrap(), vec![row]);
        std::fs::remove_file(&dir).unwrap();
    }
}
