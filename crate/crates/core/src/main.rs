use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dphfl::engine::plan_for;
use dphfl::harness::{
    analyze, parse_config, parse_scenario, read_run_dir, run_config, run_scenario, ExecOptions, HarnessError,
};
use dphfl::rng::SeedBook;

#[derive(Parser)]
#[command(name = "dphfl", version, about = "Hierarchical federated learning with differential privacy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the master seed of the config (or the seed list of a scenario).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root directory.
    #[arg(long, global = true, env = "DPHFL_OUT_DIR")]
    out: Option<PathBuf>,
    /// Replace existing artifacts.
    #[arg(long, global = true)]
    force: bool,
    /// Concurrent runs (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Check synchronization invariants after every aggregation.
    #[arg(long, global = true)]
    debug_invariants: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a run config.
    Run { config: PathBuf },
    /// Execute every run of a scenario sweep.
    Scenario { scenario: PathBuf },
    /// Recompute the analysis report of a run directory.
    Analyze { trace_dir: PathBuf },
    /// Print the noise plan a config would use.
    Calibrate { config: PathBuf },
}

fn out_root(cli: &Cli, configured: Option<&Path>) -> PathBuf {
    cli.out.clone().or_else(|| configured.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from("out"))
}

fn main_inner(cli: &Cli) -> Result<(), HarnessError> {
    let opts = ExecOptions { force: cli.force, jobs: cli.jobs, debug_invariants: cli.debug_invariants };
    match &cli.command {
        Command::Run { config } => {
            let mut config = parse_config(config)?;
            if let Some(seed) = cli.seed {
                config.master_seed = seed;
            }
            let dir = run_config(&config, &out_root(cli, config.output_dir.as_deref()), opts)?;
            println!("{}", dir.display());
        }
        Command::Scenario { scenario } => {
            let mut scenario = parse_scenario(scenario)?;
            if let Some(seed) = cli.seed {
                scenario.seeds = vec![seed];
            }
            let root = out_root(cli, scenario.base.output_dir.as_deref());
            let rows = run_scenario(&scenario, &root, opts)?;
            println!("{} runs written to {}", rows.len(), root.join(&scenario.name).display());
        }
        Command::Analyze { trace_dir } => {
            let (config, trace) = read_run_dir(trace_dir)?;
            let seeds = trace.echo.options.seeds;
            let topology = config.build_topology(&seeds)?;
            let task = config.build_task(&topology, &seeds)?;
            let report = analyze(&config, &task, &trace);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Calibrate { config } => {
            let mut config = parse_config(config)?;
            if let Some(seed) = cli.seed {
                config.master_seed = seed;
            }
            let seeds = SeedBook::new(config.master_seed, 0);
            let topology = config.build_topology(&seeds)?;
            let task = config.build_task(&topology, &seeds)?;
            let schedule = config.schedule().map_err(|e| HarnessError::Config {
                field: "schedule".into(),
                reason: e.to_string(),
            })?;
            let plan = plan_for(&task, &schedule, &config.steps(), &config.dp_mode(), config.task.batch_fraction)?;
            println!("{}", serde_json::to_string_pretty(&plan).expect("plan serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
