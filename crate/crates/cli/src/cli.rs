use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use muki_core::harness::ExperimentConfig;
use muki_core::integration::Strategy;

#[derive(Debug, Parser)]
#[command(
    name = "muki",
    version,
    about = "Merge disjoint-label teachers into one student without labels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or load the data and write the workspace's data/ directory.
    GenData(Common),
    /// Train one teacher per label subset.
    TrainTeachers(Common),
    /// Build supervision caches from the teachers.
    Integrate(Common),
    /// Train students from the caches.
    TrainStudent(Common),
    /// Score students and baselines on the test set.
    Evaluate(Common),
    /// Label-reading diagnostics.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Also train a soft-target student at every temperature of the
        /// standard sweep.
        #[arg(long)]
        tau_sweep: bool,
    },
    /// Every stage in order.
    Run(Common),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::GenData(c)
            | Command::TrainTeachers(c)
            | Command::Integrate(c)
            | Command::TrainStudent(c)
            | Command::Evaluate(c)
            | Command::Run(c)
            | Command::Analyze { common: c, .. } => c,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Use this seed for data, teachers, integration and a single student.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Restrict to these strategies (repeatable).
    #[arg(long, value_name = "NAME")]
    pub strategy: Vec<Strategy>,
    /// Output directory, overriding `out_dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Monte-Carlo Dropout passes.
    #[arg(long)]
    pub k: Option<usize>,
    /// Temperature of the soft strategy.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Number of teachers.
    #[arg(long, value_name = "N")]
    pub teachers: Option<usize>,
}

impl Common {
    /// Loads the config and applies command-line overrides.
    pub fn resolve(&self) -> muki_core::Result<ExperimentConfig> {
        let cfg = ExperimentConfig::load(&self.config)?;
        self.apply(cfg)
    }

    pub fn apply(&self, mut cfg: ExperimentConfig) -> muki_core::Result<ExperimentConfig> {
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if !self.strategy.is_empty() {
            cfg.strategies = self.strategy.clone();
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(tau) = self.tau {
            cfg.tau = tau;
        }
        if let Some(n) = self.teachers {
            cfg.teachers = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
