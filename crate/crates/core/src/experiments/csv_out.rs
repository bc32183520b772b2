use std::fs;
use std::path::Path;

use super::{TrainRecord, Trajectory};
use crate::error::{Error, Result};

/// 17 significant digits, enough to round-trip any f64.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `step,dim0,dim1,...`, one row per point.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut header = vec!["step".to_string()];
    header.extend((0..traj.dim()).map(|k| format!("dim{k}")));
    let rows = traj.points.iter().enumerate().map(|(step, p)| {
        let mut row = vec![step.to_string()];
        row.extend(p.iter().map(|&v| format_real(v)));
        row
    });
    write_rows(path, &header, rows)
}

/// `w1,w2,loss` for every grid point.
pub fn write_grid(path: &Path, grid: &[[f64; 3]]) -> Result<()> {
    let header = ["w1", "w2", "loss"].map(String::from);
    write_rows(path, &header, grid.iter().map(|r| r.iter().map(|&v| format_real(v)).collect()))
}

/// `iteration,epoch,wall_ms,train_loss,train_acc`.
pub fn write_train_records(path: &Path, records: &[TrainRecord]) -> Result<()> {
    let header = ["iteration", "epoch", "wall_ms", "train_loss", "train_acc"].map(String::from);
    let rows = records.iter().map(|r| {
        vec![
            r.iteration.to_string(),
            r.epoch.to_string(),
            format_real(r.wall_ms),
            format_real(r.loss),
            format_real(r.accuracy),
        ]
    });
    write_rows(path, &header, rows)
}
