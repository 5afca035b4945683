use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use molfield::cli::{execute, Command};
use molfield::config::LoadedConfig;

/// Mollified continuum fields from particle dynamics on matrix-valued
/// potentials.
#[derive(Parser)]
#[command(name = "molfield", version, about)]
struct Cli {
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Integrate one trajectory and write trajectory.csv.
    RunMd { config: PathBuf },
    /// Evaluate fields on the probe set and write fields.csv.
    Fields { config: PathBuf },
    /// Check the balance laws and write residuals.json and residuals.csv.
    ConserveCheck { config: PathBuf },
    /// Match a Gibbs ensemble to target fields and write gibbs.json.
    GibbsFit { config: PathBuf },
    /// Compare quantum and classical expectations and write egorov.json.
    Egorov { config: PathBuf },
    /// Compare commutators with quantized brackets and write commutator.json.
    CommutatorCheck { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, path) = match cli.command {
        Sub::RunMd { config } => (Command::RunMd, config),
        Sub::Fields { config } => (Command::Fields, config),
        Sub::ConserveCheck { config } => (Command::ConserveCheck, config),
        Sub::GibbsFit { config } => (Command::GibbsFit, config),
        Sub::Egorov { config } => (Command::Egorov, config),
        Sub::CommutatorCheck { config } => (Command::CommutatorCheck, config),
    };
    let loaded = match LoadedConfig::from_path(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out_dir = std::env::var_os("MOLFIELD_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(&loaded.config.outputs.directory));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        pool = pool.num_threads(w.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| execute(command, &loaded, &out_dir)) {
        Ok(s) => {
            for f in &s.files {
                println!("wrote {}", f.display());
            }
            println!("{}: {} ({})", command.name(), if s.pass { "PASS" } else { "FAIL" }, s.message);
            if s.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
