use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracvar_cli::{commands, CliError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "fracvar", version, about = "Fractional-Laplacian variational solvers")]
struct Cli {
    /// TOML run configuration (defaults are used when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Maximize the quotient and write the eigenpair.
    SolveEigen,
    /// Check a solution CSV against the weak form and the closed-form identities.
    Verify {
        /// Defaults to `<out>/solution.csv`.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Moser norm ladder of a solution.
    Moser {
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Defaults to `solver.n_steps`.
        #[arg(long)]
        n_steps: Option<usize>,
    },
    /// Estimate the two-parameter threshold.
    Theta,
    /// Critical point search for the two-parameter problem.
    Multi,
    /// Fuzz the two pointwise inequalities.
    LemmaFuzz {
        /// Defaults to `solver.fuzz_draws`.
        #[arg(long)]
        draws: Option<usize>,
    },
}

fn run(cli: &Cli) -> Result<(), (CliError, Option<RunConfig>)> {
    let overrides = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        tol: cli.tol,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides).map_err(|e| (e, None))?;
    let result = match &cli.command {
        Command::SolveEigen => commands::solve_eigen(&cfg),
        Command::Verify { solution } => {
            let path = solution.clone().unwrap_or_else(|| commands::default_solution(&cfg));
            commands::verify(&cfg, &path)
        }
        Command::Moser { solution, n_steps } => {
            let path = solution.clone().unwrap_or_else(|| commands::default_solution(&cfg));
            commands::moser(&cfg, &path, n_steps.unwrap_or(cfg.solver.n_steps))
        }
        Command::Theta => commands::theta_cmd(&cfg),
        Command::Multi => commands::multi(&cfg),
        Command::LemmaFuzz { draws } => commands::lemma_fuzz(&cfg, draws.unwrap_or(cfg.solver.fuzz_draws)),
    };
    match result {
        Ok(path) => {
            println!("{}", path.display());
            Ok(())
        }
        Err(e) => Err((e, Some(cfg))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((err, cfg)) => {
            let mut body = err.to_json();
            if let Some(cfg) = &cfg {
                body["config"] = serde_json::to_value(cfg).expect("config serializes");
                body["seed"] = cfg.solver.seed.into();
            }
            let dir = cfg.as_ref().map(|c| c.output.directory.clone()).or_else(|| cli.out.clone());
            if let Some(dir) = dir {
                if std::fs::create_dir_all(&dir).is_ok() {
                    let text = serde_json::to_string_pretty(&body).expect("serializes");
                    let _ = std::fs::write(dir.join("error.json"), format!("{text}\n"));
                }
            }
            eprintln!("{}", serde_json::to_string(&body).expect("serializes"));
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
