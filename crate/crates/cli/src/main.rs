use clap::{Parser, Subcommand};
use ganlab_cli::compare::{compare_runs, write_summary};
use ganlab_cli::plot::plot_run;
use ganlab_cli::run::{run_dir, run_experiment};
use ganlab_cli::{preset, CliError, CliResult, ExperimentConfig, PRESETS};
use std::path::PathBuf;
use std::process::ExitCode;

/// Gradient-penalty GAN experiments on synthetic data.
#[derive(Parser)]
#[command(name = "ganlab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train and write metrics, samples, grids and a manifest.
    Run {
        /// Experiment config (JSON). Omit when using --preset.
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parent of default run directories.
        #[arg(long, env = "GANLAB_OUT", default_value = "runs")]
        root: PathBuf,
    },
    /// Render SVG plots for a run directory.
    Plot { dir: PathBuf },
    /// Summarize runs as CSV.
    Compare {
        dirs: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in presets.
    Presets,
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Run {
            config,
            preset: name,
            seed,
            out,
            root,
        } => {
            let mut cfg = match (config, name) {
                (Some(path), None) => {
                    let text = std::fs::read_to_string(&path).map_err(|_| CliError::Missing(path.clone()))?;
                    ExperimentConfig::from_json(&text)?
                }
                (None, Some(n)) => preset(&n, seed.unwrap_or(0))?,
                _ => return Err(CliError::Schema("give a config file or --preset".into())),
            };
            if let Some(s) = seed {
                cfg.set_seed(s);
            }
            let dir = run_dir(&cfg, out.as_deref(), &root);
            let m = run_experiment(&cfg, &dir)?;
            println!("{}: {} files in {}", m.name, m.files.len() + 1, dir.display());
        }
        Cmd::Plot { dir } => {
            for f in plot_run(&dir)? {
                println!("{}", dir.join(f).display());
            }
        }
        Cmd::Compare { dirs, out } => {
            let rows = compare_runs(&dirs)?;
            match out {
                Some(p) => write_summary(&rows, std::fs::File::create(p)?)?,
                None => write_summary(&rows, std::io::stdout().lock())?,
            }
        }
        Cmd::Presets => PRESETS.iter().for_each(|p| println!("{p}")),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
