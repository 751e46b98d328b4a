//! Command-line front end for the pose descriptor pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use posedesc::config::Config;
use posedesc::pipeline;

/// Output directory fallback when --out is not given.
const OUT_ENV: &str = "POSEDESC_OUT";

#[derive(Parser)]
#[command(
    name = "posedesc",
    version,
    about = "Train and evaluate pose-sensitive view descriptors on procedurally rendered objects"
)]
struct Cli {
    /// Run configuration file (flat key = value text).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; defaults to $POSEDESC_OUT or ./posedesc-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed; required for gen-data and train.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override one config key, repeatable: --set key=value.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the template, training and test sets to disk.
    GenData,
    /// Train the descriptor network on the generated dataset.
    Train,
    /// Embed all templates into a descriptor database.
    Embed,
    /// Evaluate retrieval metrics on the test split.
    Eval,
    /// Evaluate the gradient-histogram baseline on the identical split.
    Baseline,
    /// Print the accuracy summary table from emitted metric files.
    Report,
}

fn load_config(cli: &Cli) -> Result<Config, posedesc::Error> {
    let mut cfg = match &cli.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    cfg.apply_overrides(&cli.set)?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("posedesc-out"))
}

fn require_seed(cli: &Cli, command: &str) -> Result<u64, posedesc::Error> {
    cli.seed.ok_or_else(|| {
        posedesc::Error::InvalidArgument(format!("--seed is required for {}", command))
    })
}

fn run(cli: &Cli) -> Result<ExitCode, posedesc::Error> {
    let cfg = load_config(cli)?;
    let out = out_dir(cli);
    match cli.command {
        Command::GenData => {
            let seed = require_seed(cli, "gen-data")?;
            let manifest = pipeline::gen_data(&cfg, seed, &out)?;
            println!(
                "wrote {} samples under {}",
                manifest.entries.len(),
                out.join("dataset").display()
            );
        }
        Command::Train => {
            let seed = require_seed(cli, "train")?;
            let summary = pipeline::train_cmd(&cfg, seed, &out)?;
            println!(
                "checkpoint {} after {} epochs",
                summary.checkpoint_digest, summary.epochs_logged
            );
            if let Some(reason) = summary.aborted {
                eprintln!("error: training aborted ({}); checkpoint holds the last good state", reason);
                return Ok(ExitCode::from(3));
            }
        }
        Command::Embed => {
            let path = pipeline::embed_cmd(&cfg, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Eval => {
            let summary = pipeline::eval_cmd(&cfg, &out)?;
            for (k, curve) in &summary.accuracy {
                let cells: Vec<String> = pipeline::REPORT_THRESHOLDS
                    .iter()
                    .zip(curve)
                    .map(|(t, a)| format!("{}deg {:.3}", t, a))
                    .collect();
                println!("k={}: {}", k, cells.join("  "));
            }
        }
        Command::Baseline => {
            let summary = pipeline::baseline_cmd(&cfg, &out)?;
            for (k, curve) in &summary.accuracy {
                let cells: Vec<String> = pipeline::REPORT_THRESHOLDS
                    .iter()
                    .zip(curve)
                    .map(|(t, a)| format!("{}deg {:.3}", t, a))
                    .collect();
                println!("hog k={}: {}", k, cells.join("  "));
            }
        }
        Command::Report => {
            let table = pipeline::report_cmd(&out)?;
            print!("{}", table);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}
