use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use conseq::config::RunConfig;
use conseq::experiments::ExperimentRegistry;

#[derive(Parser)]
#[command(name = "conseq", version, about = "Backpropagation and consequentialism training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-weight loss surface with SGD, momentum and C-SGD weight paths.
    ToySurface(Common),
    /// Output-space paths of a wide linear layer under SGD and C-SGD.
    ToyPaths(Common),
    /// Mini-batch training on an IDX or CIFAR-10 dataset.
    Train(Common),
    /// Backpropagation against central finite differences.
    GradCheck(Common),
    /// Interference matrices of the batch named by `batch_file`.
    Interference(Common),
}

#[derive(clap::Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (&'static str, Common) {
        match self {
            Command::ToySurface(c) => ("toy-surface", c),
            Command::ToyPaths(c) => ("toy-paths", c),
            Command::Train(c) => ("train", c),
            Command::GradCheck(c) => ("grad-check", c),
            Command::Interference(c) => ("interference", c),
        }
    }
}

fn run(name: &str, args: Common) -> conseq::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = Some(out);
    }
    let registry = ExperimentRegistry::default();
    let report = registry.get(name)?.run(&cfg, &cfg.out_dir())?;
    for line in &report.summary {
        println!("{line}");
    }
    for file in &report.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = cli.command.split();
    match run(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("conseq {name}: {e}");
            ExitCode::from(1)
        }
    }
}
