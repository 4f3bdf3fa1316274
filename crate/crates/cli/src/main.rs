use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metalr::harness::{
    ablation_grid, compare, emit_ablation, emit_oracle, emit_report, run, run_oracle, summary_text,
    ExperimentConfig,
};
use metalr::Error;

#[derive(Parser)]
#[command(
    name = "metalr",
    version,
    about = "Layer-wise learning-rate fine-tuning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain, fine-tune and evaluate every seed of one config.
    Run(RunArgs),
    /// Baseline plus the four online variants on shared pretrained models.
    Ablate(RunArgs),
    /// Grid-search the tiny bi-level problem and compare the online rates.
    Oracle(RunArgs),
    /// Print test accuracy of finished reports side by side.
    Compare {
        /// Report directories or metrics.csv files.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Comma-separated seeds, overriding run.seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory, overriding output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-seed LR traces.
    #[arg(long, overrides_with = "no_trace")]
    trace: bool,
    #[arg(long)]
    no_trace: bool,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if self.trace {
            cfg.trace = true;
        }
        if self.no_trace {
            cfg.trace = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let mut report = run(&cfg)?;
            emit_report(&mut report, &cfg.output_dir)?;
            print!("{}", summary_text(&report));
        }
        Command::Ablate(args) => {
            let cfg = args.load()?;
            let mut ablation = ablation_grid(&cfg)?;
            emit_ablation(&mut ablation, &cfg.output_dir)?;
            print!("{}", ablation.table());
        }
        Command::Oracle(args) => {
            let cfg = args.load()?;
            let report = run_oracle(&cfg)?;
            emit_oracle(&report, &cfg.output_dir)?;
            println!(
                "oracle loss {:.6} at {:?}; online loss {:.6} at {:?}; ratio {:.4}",
                report.oracle.best_loss,
                report.oracle.best_alpha,
                report.online_alpha_loss,
                report.online_alpha,
                report.loss_ratio()
            );
        }
        Command::Compare { reports } => print!("{}", compare(&reports)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
