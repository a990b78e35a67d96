//! Command-line front end for nilmanifold random-walk experiments: scenario
//! registry, JSON experiment configs, and CSV/JSON/SVG artifact emission.

pub mod commands;
pub mod config;
pub mod output;
pub mod scenario;

use clap::{Args, Parser, Subcommand};
use commands::CliError;
use config::ExperimentConfig;
use output::ArtifactWriter;
use serde_json::json;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "nilwalk", about = "Simulation laboratory for affine random walks on nilmanifolds", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args)]
pub struct RunArgs {
    /// JSON experiment configuration
    #[arg(long)]
    pub config: PathBuf,
    /// also emit SVG quick-look charts
    #[arg(long)]
    pub plot: bool,
    /// output directory (default: "out")
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// overrides the seed in the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// worker threads (or env NILWALK_THREADS); compute kernels are
    /// sequential today, so this is recorded but does not change results
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Sample the walk and dump the empirical measure
    Walk(RunArgs),
    /// Top Lyapunov exponent of the linear-part walk
    Lyapunov(RunArgs),
    /// Center-action support growth rate
    Tau(RunArgs),
    /// Koopman contraction rate transverse to the torus factor
    Sigma(RunArgs),
    /// Wasserstein lower bound against Haar from a character dictionary
    Wasserstein(RunArgs),
    /// Cauchy-Schwarz / pullback reduction of an equidistribution witness
    ReduceWitness(RunArgs),
    /// Low-height invariant subtori of the torus factor
    DetectSubgroups(RunArgs),
    /// Nearest rational model of the affine system and its finite orbit
    Rationalize(RunArgs),
    /// Large-deviation tail of the norm growth
    LdTail(RunArgs),
    /// Return times to the identity coset of a finite labeling
    ReturnTimes(RunArgs),
    /// Fourier moduli of the matrix walk along a frequency grid
    DecayScan(RunArgs),
    /// Non-concentration diagnostics on the generator measure
    NcCheck(RunArgs),
    /// Per-start obstruction table over a schedule of walk lengths
    Dichotomy(RunArgs),
    /// Scenario registry
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Subcommand)]
pub enum ScenarioAction {
    /// List registered scenarios and their status
    List {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn thread_count(args: &RunArgs) -> usize {
    args.threads
        .or_else(|| std::env::var("NILWALK_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1)
        .max(1)
}

fn run_command(name: &str, args: &RunArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Usage(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let mut cfg = ExperimentConfig::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad config: {e}")))?;
    if let Some(seed) = args.seed {
        cfg.params.seed = Some(seed);
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut writer = ArtifactWriter::new(&out_dir, &cfg.hash(), args.plot)?;
    let mut body = commands::execute(name, &cfg, &mut writer)?;
    if let serde_json::Value::Object(map) = &mut body {
        map.insert("threads".into(), json!(thread_count(args)));
    }
    println!("{}", serde_json::to_string_pretty(&body).expect("report serializes"));
    Ok(())
}

/// Returns the process exit code: 0 success, 2 structured analytic failure,
/// 1 usage error.
pub fn run(cli: Cli) -> u8 {
    let result = match &cli.command {
        Command::Walk(a) => run_command("walk", a),
        Command::Lyapunov(a) => run_command("lyapunov", a),
        Command::Tau(a) => run_command("tau", a),
        Command::Sigma(a) => run_command("sigma", a),
        Command::Wasserstein(a) => run_command("wasserstein", a),
        Command::ReduceWitness(a) => run_command("reduce-witness", a),
        Command::DetectSubgroups(a) => run_command("detect-subgroups", a),
        Command::Rationalize(a) => run_command("rationalize", a),
        Command::LdTail(a) => run_command("ld-tail", a),
        Command::ReturnTimes(a) => run_command("return-times", a),
        Command::DecayScan(a) => run_command("decay-scan", a),
        Command::NcCheck(a) => run_command("nc-check", a),
        Command::Dichotomy(a) => run_command("dichotomy", a),
        Command::Scenario { action: ScenarioAction::List { out } } => (|| {
            let dir = out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let mut writer = ArtifactWriter::new(&dir, "none", false)?;
            let body = commands::scenario_list(&mut writer)?;
            println!("{}", serde_json::to_string_pretty(&body).expect("report serializes"));
            Ok(())
        })(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let (code, kind) = match &e {
                CliError::Usage(_) => (1, "usage"),
                CliError::Analytic(_) => (2, "analytic"),
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "error": e.to_string(),
                    "kind": kind,
                    "exit_code": code,
                }))
                .expect("error serializes")
            );
            code
        }
    }
}
