use budgetdistill::harness::{self, Axis, ExperimentConfig, Metric};
use budgetdistill::verification;
use budgetdistill::{Error, RunSeed};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_RUN: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "budgetdistill", version, about = "Budget-constrained teacher-student distillation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every (method, seed) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Replace a previous run in the output directory.
        #[arg(long)]
        force: bool,
        /// Run only this seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the randomized theorem checks.
    Verify {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the reports into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate CSV and SVG reports of a completed run.
    Report { dir: PathBuf },
    /// Print per-method means with Pareto-front membership.
    Pareto {
        dir: PathBuf,
        #[arg(long, default_value = "task_success_rate")]
        x: String,
        #[arg(long, default_value = "constraint_satisfaction")]
        y: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

type Failure = (u8, String);

fn config_failure(e: Error) -> Failure {
    (EXIT_USAGE, e.to_string())
}

fn run_failure(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::OutputExists(_) => config_failure(e),
        e => (EXIT_RUN, e.to_string()),
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            force,
            seed,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(config_failure)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let summary = harness::run_experiment(&cfg, force).map_err(run_failure)?;
            println!("method,seed,task_success_rate,mean_kl,constraint_satisfaction");
            for r in &summary.records {
                println!(
                    "{},{},{:.4},{:.4},{:.4}",
                    r.method, r.seed, r.task_success_rate, r.mean_kl, r.constraint_satisfaction
                );
            }
            if !summary.failures.is_empty() {
                for f in &summary.failures {
                    eprintln!("failed: {} seed {}: {}", f.method, f.seed, f.error.as_deref().unwrap_or(""));
                }
                return Err((
                    EXIT_RUN,
                    format!("{} cell(s) failed; partial results in {}", summary.failures.len(), summary.output_dir.display()),
                ));
            }
            println!("results in {}", summary.output_dir.display());
            Ok(())
        }
        Command::Verify { instances, seed, out } => {
            if instances == 0 {
                return Err((EXIT_USAGE, "--instances must be positive".into()));
            }
            let reports = verification::run_battery(instances, RunSeed(seed)).map_err(|e| (EXIT_RUN, e.to_string()))?;
            println!("theorem,instances,max_deviation,tolerance,passed");
            for r in &reports {
                println!("{},{},{:e},{:e},{}", r.theorem, r.instances, r.max_deviation, r.tolerance, r.passed);
            }
            if let Some(dir) = out {
                harness::save_theorem_reports(&dir, &reports).map_err(|e| (EXIT_RUN, e.to_string()))?;
            }
            if reports.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err((EXIT_VERIFY, "verification failed".into()))
            }
        }
        Command::Report { dir } => {
            harness::emit_reports(&dir).map_err(|e| (EXIT_RUN, e.to_string()))?;
            println!("reports written to {}", dir.display());
            Ok(())
        }
        Command::Pareto { dir, x, y } => {
            let x: Metric = x.parse().map_err(config_failure)?;
            let y: Metric = y.parse().map_err(config_failure)?;
            let rows = harness::read_metrics_csv(&dir.join("metrics.csv")).map_err(|e| (EXIT_RUN, e.to_string()))?;
            if rows.is_empty() {
                return Err((EXIT_RUN, "metrics.csv has no rows".into()));
            }
            let csv = harness::pareto_csv(&rows, Axis::new(x), Axis::new(y)).map_err(|e| (EXIT_RUN, e.to_string()))?;
            print!("{csv}");
            Ok(())
        }
    }
}
