use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use classforget_cli::config::RunConfig;
use classforget_cli::pipeline::{self, Workspace, ERWP_CKPT, MASK_FILE, ORIGINAL_CKPT};
use classforget_cli::{exit_code, EXIT_GATES};
use classforget_core::relevance::RelevanceMask;
use classforget_core::Result;

/// Restricted-class removal from trained image classifiers.
#[derive(Parser)]
#[command(name = "classforget", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input checkpoint. Defaults depend on the command.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Relevance mask file to write (identify) or read.
    #[arg(long, global = true)]
    mask: Option<PathBuf>,
    /// Output directory, overriding the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replaces the config's seed; the config hash follows.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the original model on every class.
    TrainOriginal,
    /// Find the parameters relevant to the excluded classes.
    Identify,
    /// Run ERwP from a checkpoint with a mask.
    Unlearn,
    /// Score a checkpoint; exits 0 only when every gate passes.
    Evaluate,
    /// Run the configured baselines and ERwP and print the comparison table.
    Baselines,
    /// Rebuild the table and plot from saved reports.
    Report,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed_override {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    if let Command::Report = cli.command {
        print!("{}", pipeline::report_step(&cfg.out_dir)?.to_text());
        return Ok(true);
    }
    let ws = Workspace::open(cfg)?;
    let checkpoint = |default: &str| cli.checkpoint.clone().unwrap_or_else(|| ws.path(default));
    let mask_path = cli.mask.clone().unwrap_or_else(|| ws.path(MASK_FILE));
    match cli.command {
        Command::TrainOriginal => {
            let (_, report) = pipeline::train_original_step(&ws)?;
            println!("{}", report.to_json().trim_end());
        }
        Command::Identify => {
            let model = ws.load_model(&checkpoint(ORIGINAL_CKPT))?;
            let mask = pipeline::identify_step(&ws, &model, &mask_path)?;
            print!("{}", pipeline::mask_summary(&mask));
            println!("mask written to {}", mask_path.display());
        }
        Command::Unlearn => {
            let model = ws.load_model(&checkpoint(ORIGINAL_CKPT))?;
            let mask = RelevanceMask::load(&mask_path)?;
            let (_, report) = pipeline::unlearn_step(&ws, &model, &mask)?;
            println!("{}", report.to_json().trim_end());
        }
        Command::Evaluate => {
            let model = ws.load_model(&checkpoint(ERWP_CKPT))?;
            let original = ws.load_original()?;
            let report = pipeline::evaluate_step(&ws, &model, &original, "evaluated")?;
            println!("{}", report.to_json().trim_end());
            let gates = report.gates.expect("protocol reports carry gates");
            if let Some(g) = gates.first_failure() {
                eprintln!("gate failed: {g}");
                return Ok(false);
            }
        }
        Command::Baselines => {
            let original = ws.load_model(&checkpoint(ORIGINAL_CKPT))?;
            let mask = if cli.mask.is_some() || mask_path.exists() {
                RelevanceMask::load(&mask_path)?
            } else {
                pipeline::identify_step(&ws, &original, &mask_path)?
            };
            print!("{}", pipeline::baselines_step(&ws, &original, &mask)?.to_text());
        }
        Command::Report => unreachable!(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_GATES as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
