use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{ensure, Result};
use clap::{Args, Parser, Subcommand};
use dagnet::convergence::VerifyOptions;
use dagnet_cli::commands::{
    compare_csv, run_compare, run_gradcheck, run_training, run_verify, write_training_artifacts, VerifyRequest,
};
use dagnet_cli::RunConfig;

/// Exit status when a run completes but its convergence verdict is negative.
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "dagnet", version, about = "Train and verify DAG feed-forward networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML key/value configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set eta=0.005`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its artifacts and convergence verdict.
    Train(ConfigArgs),
    /// Train a model and a baseline over codes and seeds; print a metric table.
    Compare {
        #[command(flatten)]
        primary: ConfigArgs,
        /// Baseline configuration; defaults to the sequential counterpart.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Compare adjoint gradients with central finite differences.
    Gradcheck(ConfigArgs),
    /// Re-run the convergence checks on a saved trajectory CSV.
    Verify {
        trajectory: PathBuf,
        /// Topology file; defaults to topology.toml beside the trajectory.
        #[arg(long)]
        topology: Option<PathBuf>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        s: Option<f64>,
        /// Constant for the step-size precondition; estimated when omitted.
        #[arg(long = "C")]
        c: Option<f64>,
        #[arg(long, default_value_t = VerifyOptions::default().tail_threshold)]
        tail_threshold: f64,
        #[arg(long, default_value_t = VerifyOptions::default().tail_window)]
        tail_window: usize,
        #[arg(long, default_value_t = VerifyOptions::default().monotone_slack)]
        monotone_slack: f64,
    },
}

fn verdict_status(converged: bool) -> ExitCode {
    if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NOT_CONVERGED)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(args) => {
            let config = args.load()?;
            let report = run_training(&config)?;
            let paths = write_training_artifacts(&config, &report, &config.output_dir)?;
            let v = &report.verdict;
            println!("iterations        {}", v.iterations);
            println!("final error       {:e}", report.outcome.final_error);
            println!("monotone descent  {}", v.monotone_descent);
            println!("tail ||q||        {:e}", v.gradient_tail_norm);
            println!("estimated C       {}", v.estimated_c.map_or("n/a".into(), |c| format!("{c:e}")));
            if let Some(q) = report.quality {
                println!("test PSNR/SSIM/NRMSE  {:.4} / {:.4} / {:.4}", q.psnr, q.ssim, q.nrmse);
            }
            for note in &v.notes {
                println!("note: {note}");
            }
            println!("artifacts in {}", paths.trajectory.parent().unwrap_or(&config.output_dir).display());
            Ok(verdict_status(v.converged()))
        }
        Command::Compare { primary, baseline } => {
            let config = primary.load()?;
            let baseline = baseline
                .map(|p| RunConfig::load(Some(&p), &primary.overrides))
                .transpose()?;
            let rows = run_compare(&config, baseline.as_ref())?;
            let table = compare_csv(&rows, &config.hash());
            std::fs::create_dir_all(&config.output_dir)?;
            std::fs::write(config.output_dir.join("compare.csv"), &table)?;
            print!("{table}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck(args) => {
            let report = run_gradcheck(&args.load()?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(verdict_status(report.passed))
        }
        Command::Verify {
            trajectory,
            topology,
            eta,
            s,
            c,
            tail_threshold,
            tail_window,
            monotone_slack,
        } => {
            ensure!(tail_window >= 1, "tail window must be at least 1");
            let verdict = run_verify(&VerifyRequest {
                trajectory,
                topology,
                eta,
                s,
                c,
                options: Some(VerifyOptions {
                    monotone_slack,
                    tail_threshold,
                    tail_window,
                }),
            })?;
            println!("{}", verdict.to_json());
            Ok(verdict_status(verdict.converged()))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
