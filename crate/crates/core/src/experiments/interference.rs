use std::fs;
use std::path::Path;

use super::{format_real, Report};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{TransformParams, TransformRegistry};

/// Reads a batch written one feature per line, one sample per column.
/// Values are separated by whitespace or commas; `#` starts a comment.
pub fn parse_batch(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Config {
            line: i + 1,
            key: "batch_file".into(),
            msg,
        };
        let row = content
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(bad(format!("{} values, previous rows have {}", row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::DegenerateInput("batch file has no rows".into()));
    }
    let (d, n) = (rows.len(), rows[0].len());
    Matrix::from_vec(d, n, rows.concat())
}

/// The N×N interference matrix of every registered transform.
pub fn interference_report(x: &Matrix, params: &TransformParams) -> Result<Vec<(String, Matrix)>> {
    let registry = TransformRegistry::default();
    registry
        .names()
        .into_iter()
        .map(|name| Ok((name.to_string(), registry.create(name, params)?.interference(x)?)))
        .collect()
}

pub(super) fn run(cfg: &RunConfig, _out: &Path) -> Result<Report> {
    let path = cfg
        .batch_file
        .as_ref()
        .ok_or_else(|| Error::config("batch_file", "required by interference"))?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let x = parse_batch(&text)?;
    let mut summary = vec![format!("batch: {} features x {} samples", x.rows(), x.cols())];
    for (name, m) in interference_report(&x, &cfg.transform_params(0.0))? {
        summary.push(format!("{name}:"));
        for i in 0..m.rows() {
            summary.push(m.row(i).iter().map(|&v| format_real(v)).collect::<Vec<_>>().join(" "));
        }
    }
    Ok(Report {
        files: Vec::new(),
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mixed_separators() {
        let x = parse_batch("# two samples\n1, 2\n3 4\n\n5,6 # last\n").unwrap();
        assert_eq!(x, Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]));
    }

    #[test]
    fn ragged_rows_name_the_line() {
        match parse_batch("1 2\n3\n") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn three_matrices() {
        let x = Matrix::from_rows(&[[1.0, 0.5], [1.0, 1.0]]);
        let report = interference_report(&x, &TransformParams::default()).unwrap();
        let names: Vec<&str> = report.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["consequentialism", "naive-normalized", "plain"]);
        assert!(report[0].1.max_abs_diff(&Matrix::identity(2)) < 1e-12);
        assert_eq!(report[1].1[(0, 0)], 1.0);
        assert_eq!(report[2].1[(0, 1)], 1.5);
    }
}
