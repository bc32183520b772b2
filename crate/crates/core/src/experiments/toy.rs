//! Two small settings where the paths taken by each rule can be drawn: a
//! two-weight model with one sample, and a single linear layer fit to a batch
//! of random samples.

use std::path::Path;

use super::{straightness, write_grid, write_trajectory, Report, Trajectory};
use crate::config::RunConfig;
use crate::data::synthetic_gaussian;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{init_weights, Activation, InitScheme, Layer, Loss, Network};
use crate::optim::{StepParams, UpdateRule};

/// The samples whose output paths are singled out in summaries.
pub const DESIGNATED_SAMPLES: [usize; 2] = [0, 1];

pub struct SurfaceRun {
    /// `[w1, w2, loss]` rows, w2 varying fastest.
    pub grid: Vec<[f64; 3]>,
    pub trajectories: Vec<Trajectory>,
    /// `t_i / x_i`, when every input is nonzero.
    pub optimum: Option<[f64; 2]>,
}

fn toy_loss(cfg: &RunConfig, w: [f64; 2]) -> f64 {
    (0..2)
        .map(|i| 0.5 * (w[i] * cfg.toy_x[i] - cfg.toy_t[i]).powi(2))
        .sum()
}

fn rule_sets(cfg: &RunConfig, defaults: [(&'static str, &[f64]); 3]) -> Vec<(&'static str, Vec<f64>)> {
    let given = [&cfg.mu_sgd, &cfg.mu_momentum, &cfg.mu_csgd];
    defaults
        .iter()
        .zip(given)
        .map(|((rule, d), g)| (*rule, g.clone().unwrap_or_else(|| d.to_vec())))
        .filter(|(_, mus)| !mus.is_empty())
        .collect()
}

fn step_params(cfg: &RunConfig, mu: f64) -> StepParams {
    StepParams { mu, ..cfg.step_params() }
}

/// Samples the loss of `z_i = w_i x_i` on a grid and runs SGD, momentum and
/// C-SGD from `toy_w0`.
///
/// Each weight sees only its own input, so every rule is run as two
/// independent 1×1 layers.
pub fn toy_loss_surface(cfg: &RunConfig) -> Result<SurfaceRun> {
    let lambda = cfg.lambda.unwrap_or(0.0);
    if lambda == 0.0 && cfg.toy_x.contains(&0.0) {
        return Err(Error::config("toy_x", "a zero input needs lambda > 0"));
    }
    let optimum = (!cfg.toy_x.contains(&0.0)).then(|| [0, 1].map(|i| cfg.toy_t[i] / cfg.toy_x[i]));

    let [lo, hi] = cfg.grid_range;
    let n = cfg.grid_points;
    let axis: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let mut grid = Vec::with_capacity(n * n);
    for &w1 in &axis {
        for &w2 in &axis {
            grid.push([w1, w2, toy_loss(cfg, [w1, w2])]);
        }
    }

    let sets = rule_sets(cfg, [("sgd", &[0.1]), ("momentum", &[0.05]), ("c-sgd", &[0.1, 0.9])]);
    let mut trajectories = Vec::new();
    for (rule, mus) in sets {
        for mu in mus {
            let mut traj = Trajectory::new(rule, mu, lambda, cfg.seed);
            traj.target = optimum.map(|w| w.to_vec());
            let mut coords = Vec::with_capacity(2);
            for i in 0..2 {
                let net = Network::new(vec![Layer::from_weights(
                    Matrix::from_rows(&[[cfg.toy_w0[i]]]),
                    Activation::Linear,
                )])?;
                let rule = UpdateRule::from_name(rule, &cfg.transform_params(0.0), &step_params(cfg, mu))?;
                let x = Matrix::from_rows(&[[cfg.toy_x[i]]]);
                let t = Matrix::from_rows(&[[cfg.toy_t[i]]]);
                coords.push((net, rule, x, t));
            }
            let weights = |c: &[(Network, UpdateRule, Matrix, Matrix)]| {
                c.iter().map(|(net, ..)| net.layers()[0].weights[(0, 0)]).collect::<Vec<_>>()
            };
            traj.points.push(weights(&coords));
            for _ in 0..cfg.toy_steps {
                for (net, rule, x, t) in &mut coords {
                    let cache = net.forward(x, t, Loss::Mse)?;
                    rule.apply(net, &cache)?;
                }
                traj.points.push(weights(&coords));
            }
            trajectories.push(traj);
        }
    }
    Ok(SurfaceRun {
        grid,
        trajectories,
        optimum,
    })
}

fn trajectory_file(traj: &Trajectory) -> String {
    format!("traj_{}_mu{}.csv", traj.rule, traj.mu)
}

pub(super) fn run_surface(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let run = toy_loss_surface(cfg)?;
    let mut report = Report::default();
    let grid_path = out.join("surface_grid.csv");
    write_grid(&grid_path, &run.grid)?;
    report.files.push(grid_path);
    for traj in &run.trajectories {
        let path = out.join(trajectory_file(traj));
        write_trajectory(&path, traj)?;
        report.files.push(path);
        let last = &traj.points[traj.points.len() - 1];
        let mut line = format!("{} mu={}: w = ({}, {})", traj.rule, traj.mu, last[0], last[1]);
        if run.optimum.is_some() {
            line += &format!(", straightness {:.3e}", straightness(traj)?);
        }
        report.summary.push(line);
    }
    Ok(report)
}

pub struct OutputPaths {
    /// d_out × n.
    pub targets: Matrix,
    /// Outputs per step, flattened sample by sample (`dim = s·d_out + o`).
    pub trajectories: Vec<Trajectory>,
}

impl OutputPaths {
    pub fn outputs(&self) -> usize {
        self.targets.rows()
    }

    /// The output path of sample `s` in trajectory `k`, aimed at its target.
    pub fn sample_path(&self, k: usize, s: usize) -> Trajectory {
        let d = self.outputs();
        self.trajectories[k].project(&(s * d..(s + 1) * d).collect::<Vec<_>>())
    }

    /// ‖Z_k − T‖_F for every recorded step of trajectory `k`.
    pub fn error_norms(&self, k: usize) -> Vec<f64> {
        let target = self.trajectories[k].target.as_ref().expect("set by toy_output_paths");
        self.trajectories[k]
            .points
            .iter()
            .map(|p| p.iter().zip(target).map(|(z, t)| (z - t).powi(2)).sum::<f64>().sqrt())
            .collect()
    }
}

fn flatten_by_sample(m: &Matrix) -> Vec<f64> {
    m.transpose().into_vec()
}

/// Full-batch training of one linear layer on standard-normal data,
/// recording every sample's outputs after each step.
pub fn toy_output_paths(cfg: &RunConfig) -> Result<OutputPaths> {
    let lambda = cfg.lambda.unwrap_or(0.0);
    let (x, t) = synthetic_gaussian(cfg.paths_inputs, cfg.paths_outputs, cfg.paths_samples, cfg.seed);
    let mut init = Network::mlp(&[cfg.paths_inputs, cfg.paths_outputs], Activation::Linear, Activation::Linear, false)?;
    init_weights(&mut init, InitScheme::Xavier, cfg.seed);
    let target = flatten_by_sample(&t);

    let sets = rule_sets(cfg, [("sgd", &[0.03, 0.01]), ("momentum", &[]), ("c-sgd", &[0.7])]);
    let mut trajectories = Vec::new();
    for (rule, mus) in sets {
        for mu in mus {
            let mut traj = Trajectory::new(rule, mu, lambda, cfg.seed);
            traj.target = Some(target.clone());
            let mut net = init.clone();
            let mut update = UpdateRule::from_name(rule, &cfg.transform_params(0.0), &step_params(cfg, mu))?;
            traj.points.push(flatten_by_sample(&net.predict(&x)?));
            for _ in 0..cfg.toy_steps {
                let cache = net.forward(&x, &t, Loss::Mse)?;
                update.apply(&mut net, &cache)?;
                traj.points.push(flatten_by_sample(&net.predict(&x)?));
            }
            trajectories.push(traj);
        }
    }
    Ok(OutputPaths { targets: t, trajectories })
}

pub(super) fn run_paths(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let paths = toy_output_paths(cfg)?;
    let mut report = Report::default();
    let mut targets = Trajectory::new("targets", 0.0, 0.0, cfg.seed);
    targets.points.push(flatten_by_sample(&paths.targets));
    let target_path = out.join("paths_targets.csv");
    write_trajectory(&target_path, &targets)?;
    report.files.push(target_path);
    for (k, traj) in paths.trajectories.iter().enumerate() {
        let path = out.join(trajectory_file(traj));
        write_trajectory(&path, traj)?;
        report.files.push(path);
        let norms = paths.error_norms(k);
        let mut line = format!(
            "{} mu={}: |Z-T| {:.6e} -> {:.6e}",
            traj.rule,
            traj.mu,
            norms[0],
            norms[norms.len() - 1]
        );
        for s in DESIGNATED_SAMPLES.into_iter().filter(|&s| s < cfg.paths_samples) {
            line += &format!(", sample {s} straightness {:.3e}", straightness(&paths.sample_path(k, s))?);
        }
        report.summary.push(line);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csgd_heads_straight_for_the_optimum() {
        let run = toy_loss_surface(&RunConfig::default()).unwrap();
        assert_eq!(run.optimum, Some([1.0, 1.0 / 3.0]));
        for traj in run.trajectories.iter().filter(|t| t.rule == "c-sgd") {
            assert!(straightness(traj).unwrap() <= 1e-9, "{}", traj.mu);
        }
        let sgd = run.trajectories.iter().find(|t| t.rule == "sgd").unwrap();
        assert!(straightness(sgd).unwrap() > 1e-3);
    }

    #[test]
    fn unit_step_solves_at_once() {
        let cfg = RunConfig {
            mu_sgd: Some(vec![]),
            mu_momentum: Some(vec![]),
            mu_csgd: Some(vec![1.0]),
            ..RunConfig::default()
        };
        let run = toy_loss_surface(&cfg).unwrap();
        assert_eq!(run.trajectories.len(), 1);
        let w = &run.trajectories[0].points[1];
        assert!((w[0] - 1.0).abs() <= 1e-10 && (w[1] - 1.0 / 3.0).abs() <= 1e-10, "{w:?}");
    }

    #[test]
    fn zero_input_needs_ridge() {
        let cfg = RunConfig {
            toy_x: [0.0, 1.0],
            ..RunConfig::default()
        };
        assert!(matches!(toy_loss_surface(&cfg), Err(Error::Config { .. })));
        let cfg = RunConfig {
            lambda: Some(0.1),
            ..cfg
        };
        assert!(toy_loss_surface(&cfg).unwrap().optimum.is_none());
    }

    #[test]
    fn grid_covers_range() {
        let run = toy_loss_surface(&RunConfig::default()).unwrap();
        assert_eq!(run.grid.len(), 41 * 41);
        assert_eq!(run.grid[0][..2], [-0.5, -0.5]);
        assert_eq!(run.grid[41 * 41 - 1][..2], [1.5, 1.5]);
    }

    #[test]
    fn output_paths_contract() {
        let paths = toy_output_paths(&RunConfig::default()).unwrap();
        assert_eq!(paths.trajectories.len(), 3);
        let k = paths.trajectories.iter().position(|t| t.rule == "c-sgd").unwrap();
        let norms = paths.error_norms(k);
        // Measured against the initial error: late residuals sit near the
        // rounding floor of the outputs themselves.
        for (step, n) in norms.iter().enumerate() {
            let expected = 0.3_f64.powi(step as i32) * norms[0];
            assert!((n - expected).abs() <= 1e-12 * norms[0], "step {step}");
        }
        assert_eq!(paths.sample_path(k, 1).dim(), 2);
    }
}
