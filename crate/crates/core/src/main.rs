use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aoi_guard::commands::{
    boundary_lines, cmd_profile, cmd_simulate, cmd_solve, cmd_sweep, emit, parse_policies, render_profile,
    render_records, seed_list, summary_lines, OutputFormat,
};
use aoi_guard::config::{load_config, RunManifest};
use aoi_guard::sim::SweepAxis;
use aoi_guard::Result;

#[derive(Parser)]
#[command(name = "aoi-guard", version, about = "Significance-aware status-update scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Experiment manifest (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output file, or directory for `solve`. Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Overrides the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the manifest horizon; warmup is reset to 10%.
    #[arg(long)]
    slots: Option<usize>,
    /// Policy key, comma list, or "all".
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build tables and run the price search.
    Solve(Shared),
    /// Simulate one or more policies.
    Simulate {
        #[command(flatten)]
        shared: Shared,
        /// Number of consecutive seeds.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Simulate along one axis: agents, channels or scale.
    Sweep {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Tabulate penalty and gain against the observation at fixed ages.
    Profile {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
        deltas: Vec<usize>,
    },
}

fn load(shared: &Shared) -> Result<RunManifest> {
    let mut manifest = load_config(&shared.config)?;
    if let Some(seed) = shared.seed {
        manifest.config.seed = seed;
    }
    if let Some(slots) = shared.slots {
        manifest.config.slots = slots;
        manifest.config.warmup = slots / 10;
    }
    manifest.config.validate()?;
    Ok(manifest)
}

fn policies(shared: &Shared, manifest: &RunManifest) -> Result<Vec<aoi_guard::scheduler::PolicyKind>> {
    match &shared.policy {
        Some(p) => parse_policies(p),
        None => Ok(vec![manifest.config.policy]),
    }
}

fn report(lines: Vec<String>, to_stdout: bool) {
    for line in lines {
        if to_stdout {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(shared) => {
            let manifest = load(&shared)?;
            let artifacts = cmd_solve(&manifest)?;
            let dir = shared.output.unwrap_or_else(|| PathBuf::from("."));
            for (name, body) in &artifacts.files {
                emit(Some(&dir.join(name)), body)?;
            }
            println!(
                "lambda* = {} ({}), wrote {} files to {}",
                artifacts.lambda_star,
                if artifacts.in_band { "in band" } else { "best iterate, outside band" },
                artifacts.files.len(),
                dir.display()
            );
        }
        Command::Simulate { shared, seeds } => {
            let manifest = load(&shared)?;
            let policies = policies(&shared, &manifest)?;
            let records = cmd_simulate(&manifest, &policies, &seed_list(manifest.config.seed, seeds))?;
            emit(
                shared.output.as_deref(),
                &render_records(&records, &manifest.digest, shared.format)?,
            )?;
            report(summary_lines(&records), shared.output.is_some());
        }
        Command::Sweep {
            shared,
            axis,
            values,
            seeds,
        } => {
            let manifest = load(&shared)?;
            let policies = policies(&shared, &manifest)?;
            let records = cmd_sweep(
                &manifest,
                axis,
                &values,
                &policies,
                &seed_list(manifest.config.seed, seeds),
            )?;
            emit(
                shared.output.as_deref(),
                &render_records(&records, &manifest.digest, shared.format)?,
            )?;
            report(summary_lines(&records), shared.output.is_some());
        }
        Command::Profile { shared, deltas } => {
            let manifest = load(&shared)?;
            let profile = cmd_profile(&manifest, &deltas)?;
            emit(
                shared.output.as_deref(),
                &render_profile(&profile, &manifest.digest, shared.format)?,
            )?;
            report(boundary_lines(&profile), shared.output.is_some());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
