use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coral::harness::{
    cmd_bench, cmd_replay, cmd_run, memory_entry_json, memory_listing, open_memory, BenchConfig, HarnessError,
    Overrides, Randomization, RunConfig, StrategistKind, SuiteEntry, Variant,
};
use coral::tasks::TaskId;

#[derive(Parser)]
#[command(name = "coral", version, about = "Contact-rich planar manipulation planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one task and write trace, report, and CSV series.
    Run {
        #[arg(long)]
        task: TaskId,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value = "heuristic")]
        strategist: StrategistKind,
        /// JSON file with `mppi` and `loop` overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Plan memory file (JSON lines).
        #[arg(long)]
        memory: Option<PathBuf>,
        #[arg(long, default_value = "runs/latest")]
        log_dir: PathBuf,
    },
    /// Seeded trials per task under full and ablated configurations.
    Bench {
        /// Tasks to run; none gives an empty table.
        #[arg(long = "task")]
        tasks: Vec<TaskId>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 1)]
        first_seed: u64,
        /// Comma-separated subset of full, no_memory, no_refinement, no_contact_strategy.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Variant>,
        /// Run the scenes as shipped instead of randomizing them.
        #[arg(long)]
        no_randomize: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs/bench")]
        log_dir: PathBuf,
        /// Also keep every trial's trace.
        #[arg(long)]
        keep_traces: bool,
    },
    /// Recompute a trace and check it against the logged costs and states.
    Replay {
        trace: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Inspect a plan memory file.
    Memory {
        #[arg(long, default_value = "memory.jsonl")]
        memory: PathBuf,
        #[command(subcommand)]
        action: MemoryAction,
    },
}

#[derive(Subcommand)]
enum MemoryAction {
    List,
    Show { id: u64 },
}

fn overrides(path: Option<&PathBuf>) -> Result<Overrides, HarnessError> {
    path.map_or_else(|| Ok(Overrides::default()), |p| Overrides::load(p))
}

fn write(path: PathBuf, text: &str) -> Result<(), HarnessError> {
    std::fs::write(&path, text).map_err(|source| HarnessError::Io { path, source })
}

fn execute(cmd: Command) -> Result<ExitCode, HarnessError> {
    match cmd {
        Command::Run {
            task,
            seed,
            scene,
            strategist,
            config,
            memory,
            log_dir,
        } => {
            let o = overrides(config.as_ref())?;
            let cfg = RunConfig {
                scene,
                strategist,
                mppi: o.mppi,
                loop_config: o.loop_config,
                memory,
                ..RunConfig::new(task, seed, &log_dir)
            };
            let report = cmd_run(&cfg)?;
            let outcome = match &report.failure {
                None if report.success => "success".to_string(),
                Some(f) => format!("failure ({f})"),
                None => "failure".to_string(),
            };
            println!(
                "{task} seed {seed}: {outcome}; attempts {} refinements {} steps {} path {:.3} m",
                report.attempts, report.refinements, report.steps, report.path_length
            );
            println!("wrote {}", log_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            tasks,
            seeds,
            first_seed,
            variants,
            no_randomize,
            config,
            log_dir,
            keep_traces,
        } => {
            let o = overrides(config.as_ref())?;
            let cfg = BenchConfig {
                entries: tasks
                    .into_iter()
                    .map(|task| SuiteEntry { task, seeds, scene: None })
                    .collect(),
                variants: if variants.is_empty() { Variant::ALL.to_vec() } else { variants },
                first_seed,
                randomization: (!no_randomize).then(Randomization::default),
                mppi: o.mppi,
                loop_config: o.loop_config,
                trace_dir: keep_traces.then(|| log_dir.join("traces")),
            };
            let report = cmd_bench(&cfg)?;
            std::fs::create_dir_all(&log_dir).map_err(|source| HarnessError::Io {
                path: log_dir.clone(),
                source,
            })?;
            write(log_dir.join("bench.csv"), &report.rows_csv())?;
            let json = serde_json::to_string_pretty(&report).expect("bench reports serialize");
            write(log_dir.join("bench.json"), &json)?;
            print!("{}", report.table());
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { trace, tolerance } => {
            let r = cmd_replay(&trace, tolerance)?;
            println!(
                "checked {} steps; max cost error {:.3e}, max state error {:.3e}",
                r.steps_checked, r.max_cost_error, r.max_state_error
            );
            match &r.divergence {
                None => Ok(ExitCode::SUCCESS),
                Some(d) => {
                    eprintln!(
                        "divergence at attempt {} step {}: {} logged {} replayed {}",
                        d.attempt, d.k, d.what, d.logged, d.replayed
                    );
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Memory { memory, action } => {
            let store = open_memory(&memory)?;
            match action {
                MemoryAction::List => print!("{}", memory_listing(&store)),
                MemoryAction::Show { id } => println!("{}", memory_entry_json(&store, id)?),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
