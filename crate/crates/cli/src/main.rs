mod spec;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fedmf_core::experiment::{self, compare_communication, prepare, run_experiment, write_csv, SweepAxes};
use fedmf_core::theory::CheckRecord;
use fedmf_core::{verify, TrainerKind};

use spec::{build_spec, resolve_output, DataArgs, FileSpec, SweepArgs, TrainArgs};

/// Federated matrix-factorization simulator.
#[derive(Debug, Parser)]
#[command(name = "fedmf", version)]
struct Cli {
    /// TOML file supplying any option; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: $FEDMF_OUTPUT_DIR or ./fedmf-out].
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train once and write the metric history.
    Train {
        #[arg(long)]
        trainer: Option<TrainerKind>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Cross product of the sweep axes over replicate seeds.
    Sweep(SweepCmd),
    /// Noise-scale sweep (0.02, 0.04, 0.08 unless overridden).
    PrivacySweep(SweepCmd),
    /// Dropout sweep (0% to 90% unless overridden).
    RobustnessSweep(SweepCmd),
    /// Rounds to the stop criterion for several trainers.
    CompareComm {
        #[arg(long, value_delimiter = ',', default_value = "rfrec,rfrecf,fcf")]
        trainers: Vec<TrainerKind>,
        #[arg(long)]
        round_cap: Option<usize>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Desk-scale checks of the convergence theory.
    VerifyTheory {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, clap::Args)]
struct SweepCmd {
    #[arg(long)]
    trainer: Option<TrainerKind>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    sweep: SweepArgs,
    /// Also write per-run metric histories.
    #[arg(long)]
    history: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(path) => FileSpec::read(path)?,
        None => FileSpec::default(),
    };
    let out = resolve_output(cli.output.as_deref(), &file);
    let trainer = |flag: Option<TrainerKind>| flag.or(file.trainer).unwrap_or(TrainerKind::Rfrec);
    match cli.command {
        Command::Train { trainer: t, data, train } => {
            let mut spec = build_spec(trainer(t), &file, &data, &train, None)?;
            spec.write_history = true;
            run_sweep(&spec, &out)
        }
        Command::Sweep(cmd) => sweep(cmd, trainer, &file, &out, SweepAxes::default()),
        Command::PrivacySweep(cmd) => sweep(cmd, trainer, &file, &out, SweepAxes::privacy()),
        Command::RobustnessSweep(cmd) => sweep(cmd, trainer, &file, &out, SweepAxes::robustness()),
        Command::CompareComm {
            trainers,
            round_cap,
            data,
            train,
        } => {
            let round_cap = round_cap.or(file.round_cap).unwrap_or(200);
            let mut runs = Vec::with_capacity(trainers.len());
            let mut split_source = None;
            for kind in trainers {
                let spec = build_spec(kind, &file, &data, &train, None)?;
                split_source.get_or_insert_with(|| (spec.dataset.clone(), spec.split));
                runs.push((kind, spec.config));
            }
            let Some((source, split)) = split_source else {
                bail!("no trainers given");
            };
            let (train_set, test_set) = prepare(&source, &split)?;
            let report = compare_communication(&runs, &train_set, test_set.as_ref(), round_cap);
            for r in &report {
                println!(
                    "{:<7} rounds={:<5} reached={:<5} rmse={} {}",
                    r.trainer,
                    opt(r.comm_rounds),
                    r.reached,
                    opt(r.rmse),
                    r.status
                );
            }
            std::fs::create_dir_all(&out)?;
            write_csv(&out.join("comm_comparison.csv"), &report)?;
            Ok(())
        }
        Command::VerifyTheory { seed } => {
            let records = verify::run_suite(seed)?;
            for r in &records {
                println!(
                    "{} {:<32} lhs={:.6e} rhs={:.6e}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.lhs,
                    r.rhs
                );
            }
            write_report(&out, &records)?;
            let failed = records.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                bail!("{failed} theory check(s) failed");
            }
            Ok(())
        }
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".into(), |x| x.to_string())
}

fn sweep(
    cmd: SweepCmd,
    trainer: impl Fn(Option<TrainerKind>) -> TrainerKind,
    file: &FileSpec,
    out: &Path,
    fallback: SweepAxes,
) -> Result<()> {
    let mut spec = build_spec(trainer(cmd.trainer), file, &cmd.data, &cmd.train, Some((&cmd.sweep, fallback)))?;
    spec.write_history = cmd.history;
    run_sweep(&spec, out)
}

fn run_sweep(spec: &experiment::ExperimentSpec, out: &Path) -> Result<()> {
    let output = run_experiment(spec, Some(out)).with_context(|| format!("experiment in {}", out.display()))?;
    for s in &output.summary {
        let pm = |m: Option<f64>, sd: Option<f64>| match (m, sd) {
            (Some(m), Some(sd)) => format!("{m:.4}±{sd:.4}"),
            _ => "-".into(),
        };
        println!(
            "cell {:<3} alpha={} lambda={} p={} dropout={} scale={} rmse={} mae={} rounds={} failed={}/{}",
            s.cell,
            s.alpha,
            s.lambda,
            s.p,
            s.dropout_rate,
            opt(s.scale),
            pm(s.rmse_mean, s.rmse_std),
            pm(s.mae_mean, s.mae_std),
            opt(s.comm_rounds_mean),
            s.failed,
            s.runs
        );
    }
    for row in output.rows.iter().filter(|r| r.status != "ok") {
        eprintln!("cell {} seed {}: {}", row.cell, row.seed, row.status);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn write_report(out: &Path, records: &[CheckRecord]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    write_csv(&out.join("theory_report.csv"), records)?;
    std::fs::write(out.join("theory_report.json"), serde_json::to_string_pretty(records)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
