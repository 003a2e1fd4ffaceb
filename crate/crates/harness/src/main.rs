use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spde_core::Execution;
use spde_harness::{commands, ExperimentConfig, HarnessError};

/// Convergence and stability experiments for spectral-Galerkin
/// Euler-Maruyama schemes. See the configuration keys with `spde keys`.
#[derive(Parser)]
#[command(name = "spde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file of dotted `section.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides run.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the path count of the chosen subcommand.
    #[arg(long)]
    paths: Option<usize>,
    /// Overrides run.output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run paths on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Temporal and spatial rate experiment.
    Run(Common),
    /// Monte-Carlo stability statistics across stability.M.
    Stability(Common),
    /// Increment moments of the reference solution.
    Regularity(Common),
    /// Semi-implicit vs fully implicit differences across agreement.M.
    Agreement(Common),
    /// Single-path trajectory, diagnostics and noise dump.
    Trajectory {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        path_id: u64,
        /// Restore the driving noise from a previous `noise.csv`.
        #[arg(long)]
        noise: Option<PathBuf>,
    },
    /// Gnuplot data from the rate tables of a finished run.
    Plotdata {
        /// Directory holding rates_time.csv and rates_space.csv.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the command recorded in a manifest and compare digests.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Print every configuration key with its default value.
    Keys,
}

enum PathCount {
    Run,
    Stability,
    Regularity,
    Agreement,
    None,
}

fn load(common: &Common, which: PathCount) -> Result<(ExperimentConfig, Execution), HarnessError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.run.master_seed = s;
    }
    if let Some(n) = common.paths {
        match which {
            PathCount::Run => cfg.run.n_paths = n,
            PathCount::Stability => cfg.stability.n_paths = n,
            PathCount::Regularity => cfg.regularity.n_paths = n,
            PathCount::Agreement => cfg.agreement.n_paths = n,
            PathCount::None => {}
        }
    }
    if let Some(o) = &common.out {
        cfg.run.output_dir = o.clone();
    }
    cfg.validate()?;
    let exec = if common.sequential { Execution::Sequential } else { Execution::Parallel };
    Ok((cfg, exec))
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(c) => {
            let (cfg, exec) = load(&c, PathCount::Run)?;
            commands::run(&cfg, exec)?;
        }
        Command::Stability(c) => {
            let (cfg, exec) = load(&c, PathCount::Stability)?;
            commands::stability(&cfg, exec)?;
        }
        Command::Regularity(c) => {
            let (cfg, exec) = load(&c, PathCount::Regularity)?;
            commands::regularity(&cfg, exec)?;
        }
        Command::Agreement(c) => {
            let (cfg, exec) = load(&c, PathCount::Agreement)?;
            commands::agreement(&cfg, exec)?;
        }
        Command::Trajectory { common, path_id, noise } => {
            let (cfg, _) = load(&common, PathCount::None)?;
            commands::trajectory(&cfg, path_id, noise.as_deref())?;
        }
        Command::Plotdata { input, config, out } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let input = input.unwrap_or_else(|| cfg.run.output_dir.clone());
            let out = out.unwrap_or_else(|| input.clone());
            for p in commands::plotdata(&input, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Replay { manifest, out, sequential } => {
            let out = out.unwrap_or_else(|| manifest.parent().unwrap_or(std::path::Path::new(".")).join("replay"));
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            commands::replay(&manifest, &out, exec)?;
            println!("replay matches");
        }
        Command::Keys => print!("{}", ExperimentConfig::default().to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
