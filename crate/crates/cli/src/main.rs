//! Command-line front end: `run`, `sweep`, `verify`, `oracle`, `compare`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gradbal::harness::{
    self, compare_baseline, materialize, oracle_summary, run_scenario, run_scenario_to_dir,
    sweep_nodes, ScenarioConfig, SweepConfig,
};

#[derive(Parser)]
#[command(name = "gradbal", version, about = "Gradient balancing protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV and report files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override every sampling seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the gap threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Override the round budget.
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Toggle certificate evaluation: on|off.
    #[arg(long)]
    certificates: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv (+ certificates.txt).
    Run(CommonArgs),
    /// Convergence-time sweep over node counts; writes sweep.csv.
    Sweep(CommonArgs),
    /// Evaluate all certificates; nonzero exit on any failure.
    Verify(CommonArgs),
    /// Print the centralized optimum for the config's instance.
    Oracle(CommonArgs),
    /// Paired comparison against the center-free baseline; writes compare.csv.
    Compare(CommonArgs),
}

fn load_config(args: &CommonArgs) -> Result<ScenarioConfig> {
    let mut config = ScenarioConfig::from_toml_file(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.override_seed(seed);
    }
    if let Some(epsilon) = args.epsilon {
        config.epsilon = epsilon;
    }
    if let Some(max_rounds) = args.max_rounds {
        config.max_rounds = max_rounds;
    }
    if let Some(toggle) = &args.certificates {
        config.certificates = match toggle.as_str() {
            "on" => true,
            "off" => false,
            other => bail!("--certificates expects on|off, got {other}"),
        };
    }
    Ok(config)
}

fn cmd_run(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let outcome = match &args.out {
        Some(dir) => run_scenario_to_dir(&config, dir)?,
        None => run_scenario(&config)?,
    };
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    let last = outcome.metrics.last().expect("metrics are never empty");
    println!(
        "finished at round {} (spread {:e}{})",
        last.k,
        last.spread,
        last.gap.map_or_else(String::new, |g| format!(", gap {g:e}")),
    );
    for cert in &outcome.certificates {
        println!("{}", cert.summary_line());
    }
    if let Some(dir) = &args.out {
        println!("wrote {}", dir.join("metrics.csv").display());
    }
    Ok(())
}

fn cmd_sweep(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let sweep = config.sweep.clone().unwrap_or(SweepConfig {
        n_list: vec![4, 8, 16, 32, 64],
        seeds_per_n: 10,
    });
    let result = sweep_nodes(&config, &sweep.n_list, sweep.seeds_per_n)?;
    for warning in &result.warnings {
        eprintln!("warning: {warning}");
    }
    for row in &result.rows {
        println!(
            "n={} seed={} time={} final_gap={:e}",
            row.n,
            row.seed,
            row.convergence_time
                .map_or_else(|| "censored".into(), |t| t.to_string()),
            row.final_gap,
        );
    }
    match result.slope {
        Some(slope) => println!("log-log slope of median convergence time: {slope:.3}"),
        None => println!("log-log slope unavailable"),
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("sweep.csv");
        harness::write_sweep_csv(&path, &result.rows)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_verify(args: &CommonArgs) -> Result<bool> {
    let mut config = load_config(args)?;
    config.certificates = true;
    let outcome = run_scenario(&config)?;
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    for cert in &outcome.certificates {
        println!("{}", cert.summary_line());
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        harness::write_certificates(&dir.join("certificates.txt"), &outcome.certificates)?;
    }
    Ok(outcome.certificates.iter().all(|c| c.pass))
}

fn cmd_oracle(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let scenario = materialize(&config)?;
    for warning in &scenario.warnings {
        eprintln!("warning: {warning}");
    }
    let solution = scenario
        .oracle
        .context("no oracle available for this cost family")?;
    print!("{}", oracle_summary(&solution));
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("oracle.csv");
        harness::write_oracle_csv(&path, &solution)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_compare(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let result = compare_baseline(&config)?;
    println!(
        "gradient balancing final gap: {:e}\ncenter-free final gap: {:e}",
        result.final_gap_balancing, result.final_gap_center_free
    );
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("compare.csv");
        harness::write_compare_csv(&path, &result.rows)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args).map(|()| true),
        Command::Sweep(args) => cmd_sweep(args).map(|()| true),
        Command::Verify(args) => cmd_verify(args),
        Command::Oracle(args) => cmd_oracle(args).map(|()| true),
        Command::Compare(args) => cmd_compare(args).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
