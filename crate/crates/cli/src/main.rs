mod cli;

use anyhow::Context;
use clap::Parser;
use log::info;
use muki_core::harness::{
    analyze, evaluate, fit_students, fit_teachers, generate_data, integrate, run_experiment, tau_sweep, MetricsReport,
    Workspace,
};
use muki_core::integration::TAU_SWEEP;

use cli::{Cli, Command};

fn print_summary(report: &MetricsReport) {
    println!("{:<14} {:>4} {:>8} {:>8}", "method", "runs", "mean", "std");
    for a in &report.aggregates {
        let std = a.std.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into());
        println!("{:<14} {:>4} {:>8.4} {:>8}", a.method, a.runs, a.mean, std);
    }
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let common = cli.command.common();
    let cfg = common
        .resolve()
        .with_context(|| format!("loading {}", common.config.display()))?;
    let ws = Workspace::new(&cfg.out_dir);
    match &cli.command {
        Command::GenData(_) => generate_data(&cfg)?,
        Command::TrainTeachers(_) => {
            fit_teachers(&cfg)?;
        }
        Command::Integrate(_) => {
            integrate(&cfg, &cfg.strategies)?;
        }
        Command::TrainStudent(_) => {
            fit_students(&cfg, &cfg.strategies, &cfg.seeds.students)?;
        }
        Command::Evaluate(_) => print_summary(&evaluate(&cfg)?),
        Command::Analyze { tau_sweep: sweep, .. } => {
            let d = analyze(&cfg)?;
            println!("selection error rate {:.4}", d.selection_errors.rate);
            println!(
                "selection accuracy: deterministic {:.4}, K=1 {:.4}, K={} {:.4}",
                d.separation.deterministic, d.separation.single_pass, d.separation.passes, d.separation.monte_carlo
            );
            if *sweep {
                let points = tau_sweep(&cfg, &TAU_SWEEP, cfg.seeds.students[0])?;
                for p in &points {
                    println!("tau {:<6} accuracy {:.4}", p.tau, p.accuracy);
                }
            }
            info!("diagnostics written to {}", ws.diagnostics().display());
        }
        Command::Run(_) => {
            let report = run_experiment(&cfg)?;
            print_summary(&report);
            info!("report written to {}", ws.report().display());
        }
    }
    Ok(())
}
