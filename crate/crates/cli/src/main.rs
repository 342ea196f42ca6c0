use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semfl::commands;
use semfl::config::ExperimentConfig;
use semfl::{CliResult, Exit, Failure, OrExit};

#[derive(Parser)]
#[command(name = "semfl", version, about = "Federated SEM segmentation experiments and gradient-inversion attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// 64x64 images, 40 of them, depth-2 U-Net with 8 base channels.
    #[arg(long)]
    desk_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and its manifest.
    Generate(Common),
    /// Train the configured runs.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train only this run id.
        #[arg(long)]
        run: Option<String>,
    },
    /// Attack a recorded client update.
    Attack {
        #[command(flatten)]
        common: Common,
        /// Attack even when the update is not a single plain-SGD step.
        #[arg(long)]
        approximate: bool,
    },
    /// Compare two images.
    Evaluate {
        candidate: PathBuf,
        original: PathBuf,
        /// Ground-truth mask of the original.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Treat the candidate as a probability map scored against --mask.
        #[arg(long)]
        segmentation: bool,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Tables and plots for a results directory.
    Report {
        /// Results directory; defaults to the configuration's output_dir.
        dir: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(c: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config).map_err(|e| {
        let missing = e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::NotFound);
        if missing {
            Failure::missing(e)
        } else {
            Failure::config(e)
        }
    })?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if c.desk_scale {
        cfg.apply_desk_scale();
    }
    cfg.validate().or_exit(Exit::Config)?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<Exit> {
    match cli.command {
        Command::Generate(c) => {
            commands::generate(&load(&c)?)?;
        }
        Command::Train { common, run } => {
            commands::train(&load(&common)?, run.as_deref())?;
        }
        Command::Attack { common, approximate } => {
            commands::attack(&load(&common)?, approximate)?;
        }
        Command::Evaluate { candidate, original, mask, segmentation, threshold } => {
            let report = commands::evaluate(&candidate, &original, mask.as_deref(), segmentation, threshold)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
        }
        Command::Report { dir, config, out } => {
            let dir = match (dir, out, config) {
                (Some(d), _, _) | (None, Some(d), _) => d,
                (None, None, Some(c)) => ExperimentConfig::load(&c).or_exit(Exit::Config)?.output_dir,
                (None, None, None) => return Err(Failure::config(anyhow::anyhow!("report needs a results directory or --config"))),
            };
            let outcome = commands::report(&dir)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            println!("{} run(s), {} attack row(s); report written to {}", outcome.runs.len(), outcome.attacks.len(), dir.join(commands::REPORT_DIR).display());
            if !outcome.warnings.is_empty() {
                return Ok(Exit::Partial);
            }
        }
    }
    Ok(Exit::Ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit as u8)
        }
    }
}
