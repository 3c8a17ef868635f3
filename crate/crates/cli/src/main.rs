mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use bellstrength::games::{strength, Mode};
use bellstrength::inequality::violation_report;
use bellstrength::json::proof_to_json;
use bellstrength::projection::DEFAULT_TOL;
use bellstrength::quantum::{catalog, REFERENCE_STRENGTHS};
use bellstrength::{decompose_gamma, project, simulate_evidence, GammaTable, LocalTheory};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{parse_sigma, positive, Format, RunConfig};

const THREADS_VAR: &str = "BELLSTRENGTH_THREADS";
const CERTIFICATE_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(
    name = "bellstrength",
    version,
    about = "How strongly quantum nonlocality proofs refute local realism"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Uniform,
    Uncorrelated,
    Correlated,
    All,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::Uniform => vec![Mode::Uniform],
            ModeArg::Uncorrelated => vec![Mode::Uncorrelated],
            ModeArg::Correlated => vec![Mode::Correlated],
            ModeArg::All => Mode::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Against {
    BestLr,
    UniformLr,
}

#[derive(Debug, clap::Args)]
struct FormatArgs {
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Same as `--format json`.
    #[arg(long, conflicts_with_all = ["format", "table"])]
    json: bool,
    /// Same as `--format table`.
    #[arg(long, conflicts_with = "format")]
    table: bool,
}

impl FormatArgs {
    fn format(&self) -> Format {
        if self.json {
            Format::Json
        } else if self.table {
            Format::Table
        } else {
            self.format
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print a catalog proof as JSON.
    ExportProof { proof: String },
    /// Closest local theory for a setting distribution.
    Project {
        proof: String,
        #[arg(long, default_value = "uniform")]
        sigma: String,
        #[arg(long, default_value_t = DEFAULT_TOL, value_parser = positive)]
        tol: f64,
    },
    /// Strength of a proof under one or all setting games.
    Strength {
        proof: String,
        #[arg(long, value_enum, default_value = "all")]
        mode: ModeArg,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Recompute the published strength table and report deviations.
    VerifyPaperTable {
        #[arg(long)]
        proof: Option<String>,
        #[arg(long, default_value_t = 1e-6, value_parser = positive)]
        tol: f64,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Decompose a three-setting table set into a local theory.
    Decompose { file: PathBuf },
    /// Simulate trials and accumulate evidence against a local theory.
    Simulate {
        proof: String,
        #[arg(long, default_value = "uniform")]
        sigma: String,
        #[arg(short = 'n', long = "count")]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "best-lr")]
        against: Against,
    },
    /// Evaluate the Bell-type inequality that fits the proof.
    ViolationReport {
        proof: String,
        #[command(flatten)]
        format: FormatArgs,
    },
}

/// Exit status for a failed command: 2 for numerical failures, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<bellstrength::Error>() {
        Some(e) if e.is_numerical() => 2,
        _ => 1,
    }
}

/// A command finished but its numbers did not pass their checks.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(text) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_VAR} must be a thread count, got `{text}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")?;
    Ok(())
}

fn cmd_strength(config: &RunConfig, modes: &[Mode]) -> Result<()> {
    let proof = config.load_proof()?;
    let results = modes
        .iter()
        .map(|&m| strength(&proof, m, &config.game))
        .collect::<bellstrength::Result<Vec<_>>>()?;
    match config.format {
        Format::Json => print_json(&results)?,
        Format::Table => {
            for r in &results {
                print!("{}", report::strength(&proof, r));
                if r.strength_bits.abs() < 1e-12 {
                    println!(" proof is explained by the local theory above");
                }
            }
        }
        Format::Csv => report::csv(results.iter().map(|r| report::StrengthRow::new(&proof, r)))?,
    }
    if let Some(r) = results.iter().find(|r| r.kkt_residual > CERTIFICATE_TOL) {
        return Err(CheckFailed(format!(
            "{} optimum has kkt residual {:e}",
            r.mode, r.kkt_residual
        ))
        .into());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Cell {
    proof: String,
    mode: Mode,
    computed: f64,
    reference: f64,
    deviation: f64,
    pass: bool,
}

fn cmd_verify(filter: Option<&str>, tol: f64, format: Format) -> Result<()> {
    let rows: Vec<_> = REFERENCE_STRENGTHS
        .iter()
        .filter(|(name, _)| filter.is_none_or(|f| f == *name))
        .collect();
    if rows.is_empty() {
        anyhow::bail!("no published row for `{}`", filter.unwrap_or_default());
    }
    let config = RunConfig::new(String::new(), format);
    let mut cells = Vec::new();
    for (name, reference) in rows {
        let proof = catalog(name)?;
        for (mode, &expected) in Mode::ALL.into_iter().zip(reference) {
            let computed = strength(&proof, mode, &config.game)?.strength_bits;
            let deviation = (computed - expected).abs();
            cells.push(Cell {
                proof: name.to_string(),
                mode,
                computed,
                reference: expected,
                deviation,
                pass: deviation <= tol,
            });
        }
    }
    match format {
        Format::Json => print_json(&cells)?,
        Format::Table => {
            for c in &cells {
                println!(
                    "{:<15} {:<13} {:.10}  ref {:.10}  dev {:.2e}  {}",
                    c.proof,
                    c.mode.to_string(),
                    c.computed,
                    c.reference,
                    c.deviation,
                    if c.pass { "ok" } else { "FAIL" }
                );
            }
        }
        Format::Csv => report::csv(&cells)?,
    }
    let failing: Vec<String> = cells
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} {}", c.proof, c.mode))
        .collect();
    if !failing.is_empty() {
        return Err(CheckFailed(format!(
            "{} cell(s) off by more than {tol:e}: {}",
            failing.len(),
            failing.join(", ")
        ))
        .into());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::ExportProof { proof } => {
            let config = RunConfig::new(proof, Format::Json);
            println!("{}", proof_to_json(&config.load_proof()?)?);
        }
        Command::Project { proof, sigma, tol } => {
            let config = RunConfig::new(proof, Format::Json);
            let proof = config.load_proof()?;
            let sigma = parse_sigma(&sigma, &proof, &config.game)?;
            match project(&proof, &sigma, tol) {
                Ok(r) => print_json(&r)?,
                Err(bellstrength::Error::ProjectionNotConverged(best)) => {
                    print_json(&best)?;
                    return Err(bellstrength::Error::ProjectionNotConverged(best).into());
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::Strength {
            proof,
            mode,
            format,
        } => cmd_strength(&RunConfig::new(proof, format.format()), &mode.modes())?,
        Command::VerifyPaperTable { proof, tol, format } => {
            cmd_verify(proof.as_deref(), tol, format.format())?
        }
        Command::Decompose { file } => {
            let text = std::fs::read_to_string(&file)
                .with_context(|| format!("reading {}", file.display()))?;
            let gamma = GammaTable::from_json(&text)
                .with_context(|| format!("parsing {}", file.display()))?;
            print_json(&decompose_gamma(&gamma)?)?;
        }
        Command::Simulate {
            proof,
            sigma,
            n,
            seed,
            against,
        } => {
            let config = RunConfig::new(proof, Format::Json);
            let proof = config.load_proof()?;
            let sigma = parse_sigma(&sigma, &proof, &config.game)?;
            let pi = match against {
                Against::BestLr => project(&proof, &sigma, config.game.inner_tol)?.pi_star,
                Against::UniformLr => LocalTheory::uniform(proof.scenario())?,
            };
            print_json(&simulate_evidence(&proof, &sigma, &pi, n, seed)?)?;
        }
        Command::ViolationReport { proof, format } => {
            let config = RunConfig::new(proof, format.format());
            let proof = config.load_proof()?;
            let r = violation_report(&proof)?;
            match config.format {
                Format::Json => print_json(&r)?,
                Format::Table => print!("{}", report::violation(&proof, &r)),
                Format::Csv => report::csv([&r])?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<CheckFailed>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
