use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gcfg_lab::output::{run_to_dir, train_to_dir};
use gcfg_lab::sweep::sweep_to_dir;
use gcfg_lab::{plot, recipes, ExperimentConfig, Range};

#[derive(Parser)]
#[command(
    name = "gcfg-lab",
    version,
    about = "Generalized classifier-free guidance experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or built-in recipe.
    Run { config: String },
    /// Sweep the weights of the first two stack terms.
    Sweep {
        config: String,
        #[arg(long, allow_hyphen_values = true)]
        w1: Range,
        #[arg(long, allow_hyphen_values = true)]
        w2: Range,
    },
    /// Train every network in a config and write checkpoints.
    Train { config: String },
    /// Render a samples or sweep CSV as SVG.
    Plot { csv: PathBuf },
    /// List built-in recipes.
    Recipes,
}

impl Cli {
    fn load(&self, spec: &str) -> Result<ExperimentConfig> {
        let mut config = recipes::load(spec)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Run { config } => {
            let config = cli.load(config)?;
            let outcome = run_to_dir(&config)?;
            for row in &outcome.metrics {
                println!("{:<40} {:>14.6}  {}", row.metric, row.value, row.details);
            }
            println!("wrote {}", config.output_dir.display());
        }
        Command::Sweep { config, w1, w2 } => {
            let config = cli.load(config)?;
            let rows = sweep_to_dir(&config, w1, w2, cli.workers)?;
            println!(
                "{} rows written to {}",
                rows.len(),
                config.output_dir.display()
            );
        }
        Command::Train { config } => {
            let config = cli.load(config)?;
            for artifact in train_to_dir(&config)? {
                println!("wrote {}", config.output_dir.join(artifact).display());
            }
        }
        Command::Plot { csv } => {
            let out = match &cli.out {
                Some(o) => o.clone(),
                None => csv.parent().map(PathBuf::from).unwrap_or_default(),
            };
            for path in plot::plot(csv, &out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Recipes => {
            for name in recipes::names() {
                println!("{name}");
            }
        }
    }
    Ok(())
}
