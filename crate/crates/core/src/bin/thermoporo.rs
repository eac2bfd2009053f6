use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use thermoporo::harness::{emit_report, find_preset, run_config, write_report, OutputFormat, RunConfig};
use thermoporo::{verify, Error, Result};

#[derive(Parser)]
#[command(name = "thermoporo", version, about = "Four-field thermo-poroelasticity convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study from a preset or a configuration file.
    Run(RunArgs),
    /// Run the oracle, energy and contraction checks on small meshes.
    Verify,
    /// List the available presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Include the h = 1/128 mesh in table presets.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Run meshes one after another instead of concurrently.
    #[arg(long)]
    serial: bool,
    /// Override a configuration key, e.g. `--set dt=5e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(args: RunArgs) -> Result<()> {
    let (name, mut config) = match (&args.preset, &args.config) {
        (Some(name), None) => {
            let p = find_preset(name)?;
            let mut c = p.config.clone();
            if args.full {
                c.mesh_sizes.extend(p.full_mesh);
            }
            (p.name, c)
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.clone(), source })?;
            let mut c = RunConfig::default();
            c.apply_text(&text)?;
            (path.display().to_string(), c)
        }
        _ => return Err(Error::Config("pass exactly one of --preset or --config".into())),
    };
    for ov in &args.overrides {
        let (k, v) = ov.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{ov}'")))?;
        config.set(k, v)?;
    }
    if let Some(f) = args.format {
        config.format = f;
    }
    if let Some(out) = args.out {
        config.out = Some(out);
    }
    let report = run_config(&name, &config, args.serial)?;
    let text = emit_report(&report, config.format);
    match &config.out {
        Some(path) => write_report(&text, path)?,
        None => print!("{text}"),
    }
    eprintln!("{name}: {} meshes in {:.2} s", report.records.len(), report.wall_seconds);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Presets => {
            for p in thermoporo::harness::presets() {
                println!("{:<24} {}", p.name, p.caption);
            }
            Ok(())
        }
        Command::Verify => match verify::run_all() {
            Ok(checks) => {
                for c in &checks {
                    println!("{} {:<40} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
                return if checks.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::from(1) };
            }
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
