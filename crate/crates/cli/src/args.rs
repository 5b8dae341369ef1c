use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use h2market::stackelberg::{ArrivalConvention, SensitivityParam};
use serde::Serialize;

/// Planning and pricing studies for a by-product hydrogen market.
#[derive(Debug, Parser, Serialize)]
#[command(name = "h2market", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct GlobalOpts {
    /// Seed for the price search (defaults to the scenario's `rng_seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel solves (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Price search population size.
    #[arg(long, global = true, value_name = "N")]
    pub ga_pop: Option<usize>,
    /// Price search generations.
    #[arg(long, global = true, value_name = "N")]
    pub ga_gens: Option<usize>,
    /// Flat prices to evaluate: `a,b,c` or `start:stop:step`.
    #[arg(long, global = true, value_name = "LIST", value_parser = parse_list)]
    pub flat_sweep: Option<::std::vec::Vec<f64>>,
    /// Sensitivity sweep, e.g. `Qtrans=6000,9000,12000` or `K3=300:420:30`.
    #[arg(long, global = true, value_name = "NAME=LIST", value_parser = parse_sensitivity)]
    pub sensitivity: Option<(SensitivityParam, Vec<f64>)>,
    /// Which arrivals the cavern pays for.
    #[arg(long, global = true, default_value_t = ArrivalConvention::Departure, value_name = "departure|strict")]
    pub arrival_convention: ArrivalConvention,
    /// Plan file written by `plan`; otherwise plans are derived inline.
    #[arg(long, global = true, value_name = "FILE")]
    pub plan: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Check a scenario file and print a parameter summary.
    Validate { scenario: PathBuf },
    /// Evaluate every coalition structure and write the plan file.
    Plan { scenario: PathBuf },
    /// Search for the equilibrium price schedule under fixed plans.
    Schedule { scenario: PathBuf },
    /// Re-solve the game across values of one parameter.
    Sweep { scenario: PathBuf },
    /// Re-export the tables of a previous run from its bundle.json.
    Report { dir: PathBuf },
    /// Compare branch and bound with lattice enumeration on random small models.
    OracleCheck {
        /// Number of random models.
        #[arg(long, default_value_t = 50)]
        cases: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Plan { .. } => "plan",
            Command::Schedule { .. } => "schedule",
            Command::Sweep { .. } => "sweep",
            Command::Report { .. } => "report",
            Command::OracleCheck { .. } => "oracle-check",
        }
    }
}

/// Parses `a,b,c` or an inclusive range `start:stop:step`.
pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{s}` is not a number"))
            .and_then(|x| if x.is_finite() { Ok(x) } else { Err(format!("`{s}` is not finite")) })
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step <= 0.0 || stop < start {
                return Err("a range needs start <= stop and a positive step".into());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            if n > 10_000 {
                return Err("range has more than 10000 values".into());
            }
            Ok((0..=n).map(|k| start + step * k as f64).collect())
        }
        [single] => {
            let values: Vec<f64> = single.split(',').map(num).collect::<Result<_, _>>()?;
            if values.is_empty() {
                return Err("empty list".into());
            }
            Ok(values)
        }
        _ => Err("expected `a,b,c` or `start:stop:step`".into()),
    }
}

fn parse_sensitivity(text: &str) -> Result<(SensitivityParam, Vec<f64>), String> {
    let (name, list) = text.split_once('=').ok_or("expected NAME=LIST")?;
    let param = name.trim().parse::<SensitivityParam>().map_err(|e| e.to_string())?;
    Ok((param, parse_list(list)?))
}
