use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use arbmarket::harness::{run_scenario, sweep_calibration, write_csv, GridSpec, RunReport, Scenario};
use arbmarket::incentives::{calibrate_min_fee, holding_bound, required_payment, CalibrationProblem};
use arbmarket::market::EntryMode;
use arbmarket::msr::FeeSchedule;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arbmarket", version, about = "Fee-funded arbitration for prediction markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario end to end and write the run report as JSON.
    Simulate {
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long, env = "ARBMARKET_SEED")]
        seed: Option<u64>,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print each arbiter's expected gain from misreporting.
    Probe {
        scenario: PathBuf,
        #[arg(long, env = "ARBMARKET_SEED")]
        seed: Option<u64>,
    },
    /// Smallest fee that funds truthful arbitration.
    Calibrate {
        #[arg(long)]
        delta: f64,
        /// Market liquidity; required for single entry.
        #[arg(long)]
        b: Option<f64>,
        /// Per-agent budget.
        #[arg(long = "B")]
        budget: f64,
        /// Total worst-case loss of all traders.
        #[arg(long = "M")]
        total_loss: f64,
        #[arg(long, default_value = "multiple")]
        entry: EntryMode,
    },
    /// Minimum-fee curves over a grid, as CSV.
    Sweep {
        grid: PathBuf,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut scenario = Scenario::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn summary(r: &RunReport) -> String {
    format!(
        "price {:.4}, outcome {:.3}, k {:.4}, fees {:.4}, paid {:.4}, deficit {:.4}, truthful {}",
        r.closing_price,
        r.outcome,
        r.k,
        r.fee_revenue,
        r.total_arbiter_payments,
        r.deficit,
        r.truthful_is_equilibrium()
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, seed, out } => {
            let report = run_scenario(&load_scenario(&scenario, seed)?)?;
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
            eprintln!("{}", summary(&report));
        }
        Command::Probe { scenario, seed } => {
            let report = run_scenario(&load_scenario(&scenario, seed)?)?;
            let mut w = io::stdout().lock();
            writeln!(w, "seat\tid\tshares\tsignal\tanalytic_gain\tmc_gain\tmc_std_err\tmin_k")?;
            for d in &report.deviations {
                writeln!(
                    w,
                    "{}\t{}\t{:.6}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                    d.seat, d.id, d.shares, d.signal, d.analytic_gain, d.monte_carlo_gain, d.monte_carlo_std_err, d.min_k
                )?;
            }
            writeln!(w, "k = {:.6}; truthful equilibrium: {}", report.k, report.truthful_is_equilibrium())?;
        }
        Command::Calibrate { delta, b, budget, total_loss, entry } => {
            let problem = CalibrationProblem { delta, budget, total_loss, liquidity: b, entry_mode: entry };
            let f = calibrate_min_fee(&problem)?;
            let fee = FeeSchedule::new(f)?;
            let result = serde_json::json!({
                "min_fee": f,
                "holding_bound": holding_bound(&problem, &fee)?,
                "required_payment": required_payment(&problem, &fee)?,
                "fee_revenue": f * total_loss,
            });
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Sweep { grid, out } => {
            let text = fs::read_to_string(&grid).with_context(|| format!("reading {}", grid.display()))?;
            let spec: GridSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", grid.display()))?;
            let rows = sweep_calibration(&spec)?;
            write_csv(&rows, output(out.as_deref())?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
