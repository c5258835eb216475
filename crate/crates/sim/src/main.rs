use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use intent_core::harness::{
    read_file, render_csv, render_heatmap, render_table, run_keyword_experiment, run_scenario, ConfigError,
    ConfigPaths, ExperimentConfig, ScenarioScript, System, SystemConfig,
};

#[derive(Parser)]
#[command(name = "sim", version, about = "Simulator for the intent-driven assistive robot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play a scenario script and report what happened.
    Run(RunArgs),
    /// Run a measurement experiment.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Start the full system with the operator HTTP service.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum Experiment {
    /// Wake-word accuracy per spot and microphone.
    KeywordSpotting {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Overrides for the embedded configuration.
#[derive(Args)]
struct SystemFiles {
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    store_dir: Option<PathBuf>,
    #[arg(long)]
    locations: Option<PathBuf>,
    #[arg(long)]
    acoustic: Option<PathBuf>,
}

impl SystemFiles {
    fn load(&self) -> Result<SystemConfig, ConfigError> {
        ConfigPaths {
            grammar: self.grammar.as_deref(),
            rules: self.rules.as_deref(),
            store_dir: self.store_dir.as_deref(),
            locations: self.locations.as_deref(),
            acoustic: self.acoustic.as_deref(),
        }
        .load()
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    files: SystemFiles,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the envelope trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the harmoniser decision log as JSON lines.
    #[arg(long)]
    decisions: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Wall-clock milliseconds per simulation tick.
    #[arg(long, default_value_t = 100)]
    tick_ms: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    files: SystemFiles,
}

enum Failure {
    Config(ConfigError),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

fn write(path: &PathBuf, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let file = args.scenario.display().to_string();
    let text = read_file(&args.scenario)?;
    let script: ScenarioScript = text
        .parse()
        .map_err(|e: intent_core::harness::ScenarioError| ConfigError::new(&file, Some(e.line), e.message))?;
    let config = args.files.load()?;
    System::new(config.clone(), args.seed).check_script(&script, &file)?;
    let result = run_scenario(&script, config, args.seed)?;

    if let Some(path) = &args.trace {
        write(path, &result.trace_jsonl())?;
    }
    if let Some(path) = &args.decisions {
        write(path, &result.decisions_jsonl())?;
    }
    println!("ticks: {}  envelopes: {}  decisions: {}", result.final_tick, result.trace.len(), result.decisions.len());
    for d in &result.decisions {
        let text = if d.human_text.is_empty() { String::new() } else { format!("  \"{}\"", d.human_text) };
        println!("  t={:<5} #{:<3} {:<20} {:?}/{:?}{text}", d.tick, d.request_id, d.task_name, d.kind, d.reason);
    }
    for f in &result.finished {
        println!("  {} finished at t={} with {}", f.package, f.finished_at, f.outcome);
    }
    for entry in &result.operator_log {
        println!("  t={} operator `{}` failed: {}", entry.ts, entry.event, entry.error);
    }
    Ok(())
}

fn experiment(config: Option<PathBuf>, seed: u64, csv: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = match &config {
        Some(path) => ExperimentConfig::parse(&path.display().to_string(), &read_file(path)?, seed)?,
        None => ExperimentConfig::shipped(seed),
    };
    let grid = run_keyword_experiment(&cfg);
    if let Some(path) = &csv {
        write(path, &render_csv(&grid))?;
    }
    print!("{}", render_table(&grid));
    println!();
    print!("{}", render_heatmap(&grid));
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    let config = args.files.load()?;
    let system = System::new(config, args.seed);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| Failure::Io(format!("bind {}:{}: {e}", args.host, args.port)))?;
        let addr = listener.local_addr().map_err(|e| Failure::Io(e.to_string()))?;
        println!("listening on http://{addr}");
        sim::serve(listener, system, Duration::from_millis(args.tick_ms.max(1)))
            .await
            .map_err(|e| Failure::Io(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Experiment(Experiment::KeywordSpotting { config, seed, csv }) => experiment(config, seed, csv),
        Command::Serve(args) => serve(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
