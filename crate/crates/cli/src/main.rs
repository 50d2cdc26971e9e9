use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;
mod verify;

use config::{resolve, Emit, Failure, Outcome, Overrides};
use manifest::{Manifest, Output, MANIFEST};

#[derive(Debug, Parser)]
#[command(name = "loewner-forge", version, about = "Seeded Laplacian growth experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with top-level `seed`, `workers`, `out`, `emit` and one table
    /// of parameters per command.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to LOEWNER_FORGE_WORKERS, then 1.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of csv,json,svg.
    #[arg(long, value_delimiter = ',')]
    emit: Option<Vec<Emit>>,
    /// Parameter override `key=value`; the value is read as TOML, else as a string.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Hastings–Levitov HL(α) cluster.
    GrowHl(Common),
    /// Lattice DLA, exact charges or random walkers.
    GrowDla(Common),
    /// Radial or whole-plane SLE maps.
    GrowSle(Common),
    /// Radial or whole-plane Lévy–Loewner maps.
    GrowLle(Common),
    /// String-equation evolution of a Laurent map.
    HeleShaw(Common),
    /// Metropolis sampling of the 2D Coulomb gas.
    Coulomb(Common),
    /// Soliton τ functions and Adler–Moser polynomials.
    Tau(Common),
    /// β(q) of a whole-plane ensemble or τ(q) of a DLA cluster.
    Spectrum(Common),
    /// Re-checks the artifacts of a finished run.
    Verify {
        /// Manifest file or run directory.
        manifest: PathBuf,
    },
}

fn run(name: &str, c: Common) -> Outcome<Manifest> {
    let overrides = Overrides {
        config: c.config,
        seed: c.seed,
        workers: c.workers,
        out: c.out,
        emit: c.emit,
        set: c.set,
    };
    let mut cfg = resolve(name, &overrides)?;
    let (resolved, job) = commands::prepare(&cfg)?;
    cfg.params = resolved;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Failure::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let mut out = Output::create(&cfg.output_dir)?;
    let start = Instant::now();
    let summary = pool.install(|| job(&mut out))?;
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg,
        wall_time_s: start.elapsed().as_secs_f64(),
        artifacts: out.artifacts.clone(),
        summary,
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| Failure::Config(e.to_string()))? + "\n";
    std::fs::write(out.dir().join(MANIFEST), text)?;
    Ok(m)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match cli.command {
        Command::Verify { manifest } => {
            return match verify::verify(&verify::manifest_path(&manifest)) {
                Ok(report) => {
                    for c in &report.checks {
                        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                    }
                    ExitCode::from(if report.passed() { 0 } else { 2 })
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            };
        }
        Command::GrowHl(c) => ("grow-hl", c),
        Command::GrowDla(c) => ("grow-dla", c),
        Command::GrowSle(c) => ("grow-sle", c),
        Command::GrowLle(c) => ("grow-lle", c),
        Command::HeleShaw(c) => ("hele-shaw", c),
        Command::Coulomb(c) => ("coulomb", c),
        Command::Tau(c) => ("tau", c),
        Command::Spectrum(c) => ("spectrum", c),
    };
    match run(name, common) {
        Ok(m) => {
            for a in &m.artifacts {
                println!("{}  {}", a.sha256, a.path);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
