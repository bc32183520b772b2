//! Runnable experiments. Each one reads a [`RunConfig`], writes CSV files to
//! an output directory and returns a short text summary.

mod csv_out;
mod gradcheck;
mod interference;
mod toy;
mod train;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};

pub use csv_out::{format_real, write_grid, write_train_records, write_trajectory};
pub use gradcheck::{grad_check, GradCheckNet};
pub use interference::{interference_report, parse_batch};
pub use toy::{toy_loss_surface, toy_output_paths, OutputPaths, SurfaceRun};
pub use train::{build_model, load_dataset, train, train_dataset, Model, TrainRecord};

/// An ordered path through weight or output space.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
    pub rule: String,
    pub mu: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Where the path is heading. Defaults to the last point.
    pub target: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(rule: &str, mu: f64, lambda: f64, seed: u64) -> Self {
        Trajectory {
            points: Vec::new(),
            rule: rule.to_string(),
            mu,
            lambda,
            seed,
            target: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// The path restricted to coordinates `coords`, e.g. one sample's outputs.
    pub fn project(&self, coords: &[usize]) -> Trajectory {
        let pick = |p: &Vec<f64>| coords.iter().map(|&c| p[c]).collect::<Vec<_>>();
        Trajectory {
            points: self.points.iter().map(pick).collect(),
            target: self.target.as_ref().map(pick),
            rule: self.rule.clone(),
            ..*self
        }
    }
}

/// Largest distance of any point after the first from the line through the
/// first point and the target, divided by the length of that segment.
pub fn straightness(traj: &Trajectory) -> Result<f64> {
    let pts = &traj.points;
    if pts.len() < 2 {
        return Err(Error::DegenerateTrajectory(format!("{} point(s), need at least 2", pts.len())));
    }
    let dim = pts[0].len();
    if let Some(bad) = pts.iter().position(|p| p.len() != dim) {
        return Err(Error::DegenerateTrajectory(format!(
            "point {bad} has dimension {}, expected {dim}",
            pts[bad].len()
        )));
    }
    let start = &pts[0];
    let end = traj.target.as_ref().unwrap_or(&pts[pts.len() - 1]);
    if end.len() != dim {
        return Err(Error::DegenerateTrajectory("target dimension differs from points".into()));
    }
    let axis: Vec<f64> = end.iter().zip(start).map(|(e, s)| e - s).collect();
    let length = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    if length == 0.0 {
        return Err(Error::DegenerateTrajectory("start and target coincide".into()));
    }
    let unit: Vec<f64> = axis.iter().map(|v| v / length).collect();
    let mut worst = 0.0_f64;
    for p in &pts[1..] {
        let d: Vec<f64> = p.iter().zip(start).map(|(a, b)| a - b).collect();
        let along: f64 = d.iter().zip(&unit).map(|(a, b)| a * b).sum();
        let perp = d
            .iter()
            .zip(&unit)
            .map(|(a, u)| (a - along * u).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(perp);
    }
    Ok(worst / length)
}

/// What a run produced.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &str;
    fn about(&self) -> &str;
    fn run(&self, cfg: &RunConfig, out_dir: &Path) -> Result<Report>;
}

struct FnExperiment {
    name: &'static str,
    about: &'static str,
    run: fn(&RunConfig, &Path) -> Result<Report>,
}

impl Experiment for FnExperiment {
    fn name(&self) -> &str {
        self.name
    }

    fn about(&self) -> &str {
        self.about
    }

    fn run(&self, cfg: &RunConfig, out_dir: &Path) -> Result<Report> {
        (self.run)(cfg, out_dir)
    }
}

/// Name → experiment table used by the command line front end.
pub struct ExperimentRegistry {
    entries: BTreeMap<String, Box<dyn Experiment>>,
}

impl ExperimentRegistry {
    pub fn empty() -> Self {
        ExperimentRegistry {
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, experiment: Box<dyn Experiment>) {
        self.entries.insert(experiment.name().to_string(), experiment);
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Experiment> {
        self.entries
            .get(name)
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::UnknownName {
                kind: "experiment",
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }
}

impl Default for ExperimentRegistry {
    fn default() -> Self {
        let mut r = ExperimentRegistry::empty();
        let builtin: [(&'static str, &'static str, fn(&RunConfig, &Path) -> Result<Report>); 5] = [
            ("toy-surface", "two-weight loss surface and SGD / momentum / C-SGD weight paths", toy::run_surface),
            ("toy-paths", "output paths of a 20→2 linear layer under SGD and C-SGD", toy::run_paths),
            ("train", "mini-batch training on an IDX or CIFAR-10 dataset", train::run),
            ("grad-check", "backpropagation against central finite differences", gradcheck::run),
            ("interference", "interference matrices of a batch read from `batch_file`", interference::run),
        ];
        for (name, about, run) in builtin {
            r.register(Box::new(FnExperiment { name, about, run }));
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(points: &[&[f64]]) -> Trajectory {
        let mut t = Trajectory::new("test", 0.1, 0.0, 0);
        t.points = points.iter().map(|p| p.to_vec()).collect();
        t
    }

    #[test]
    fn collinear_is_zero() {
        let t = traj(&[&[0.0, 0.0], &[1.0, 1.0], &[3.0, 3.0], &[2.0, 2.0]]);
        assert!(straightness(&t).unwrap() <= 1e-15);
    }

    #[test]
    fn right_angle_detour() {
        let t = traj(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]]);
        assert!((straightness(&t).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn repeated_point_is_degenerate() {
        let t = traj(&[&[2.0, 1.0], &[2.0, 1.0], &[2.0, 1.0]]);
        assert!(matches!(straightness(&t), Err(Error::DegenerateTrajectory(_))));
        assert!(matches!(straightness(&traj(&[&[1.0]])), Err(Error::DegenerateTrajectory(_))));
    }

    #[test]
    fn explicit_target_counts_last_point() {
        let mut t = traj(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 1.0]]);
        t.target = Some(vec![2.0, 0.0]);
        assert!((straightness(&t).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn registry_has_every_subcommand() {
        let r = ExperimentRegistry::default();
        assert_eq!(r.names(), ["grad-check", "interference", "toy-paths", "toy-surface", "train"]);
        assert!(matches!(r.get("plot"), Err(Error::UnknownName { .. })));
    }
}
