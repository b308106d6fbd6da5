//! Command-line front end: load scenarios, run check suites, evaluate spray
//! decompositions, integrate geodesics, and render reports.
//!
//! Exit codes: 0 all checks passed, 1 check failures, 2 input or schema
//! errors.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use finsleroid::checks::{self, CheckOptions};
use finsleroid::error::Error;
use finsleroid::geodesic;
use finsleroid::report::Report;
use finsleroid::scenario::Scenario;
use finsleroid::spray;

#[derive(Debug, Parser)]
#[command(
    name = "finsleroid",
    version,
    about = "Finsleroid-regular geometry checker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the identity, oracle, and verdict batteries for a scenario.
    Check {
        scenario: PathBuf,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the check records as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override a named tolerance, e.g. --tol-override algebraic=1e-8.
        #[arg(long = "tol-override", value_name = "KEY=VALUE")]
        tol_override: Vec<String>,
        /// Omit the wall-clock timestamp so identical runs are byte-identical.
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Print the spray decomposition at one (x, y).
    Spray {
        scenario: PathBuf,
        /// Base point, comma-separated.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        /// Tangent vector, comma-separated.
        #[arg(long, allow_hyphen_values = true)]
        y: String,
    },
    /// Integrate a geodesic and write the trajectory as CSV.
    Geodesic {
        scenario: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, allow_hyphen_values = true)]
        y0: String,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Trajectory CSV destination (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a JSON report as a table or CSV.
    Report {
        report: PathBuf,
        #[arg(long, default_value = "table")]
        format: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn parse_vector(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidScenario(format!("not a number: {t:?}")))
        })
        .collect()
}

fn parse_overrides(items: &[String]) -> Result<BTreeMap<String, f64>, Error> {
    let mut out = BTreeMap::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::InvalidScenario(format!("expected KEY=VALUE, got {item:?}")))?;
        let value = v
            .parse::<f64>()
            .map_err(|_| Error::InvalidScenario(format!("not a number: {v:?}")))?;
        out.insert(k.to_string(), value);
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Check {
            scenario,
            out,
            csv,
            seed,
            tol_override,
            no_timestamp,
        } => {
            let sc = Scenario::from_path(&scenario)?;
            let opts = CheckOptions {
                seed_override: seed,
                tol_overrides: parse_overrides(&tol_override)?,
                timestamp: !no_timestamp,
            };
            let report = checks::run_checks(&sc, &opts)?;
            print!("{}", report.render_table());
            if let Some(path) = out {
                report.write_json(&path)?;
            }
            if let Some(path) = csv {
                report.write_csv(&path)?;
            }
            Ok(if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Spray { scenario, x, y } => {
            let sc = Scenario::from_path(&scenario)?;
            let fields = sc.field_set()?;
            let xv = parse_vector(&x)?;
            let yv = DVector::from_vec(parse_vector(&y)?);
            let data = spray::spray_closed_form(&fields, &xv, &yv)?;
            let oracle = spray::spray_oracle(&fields, &xv, &yv)?;
            let scale = (1.0 + oracle.amax()).max(data.g_spray.amax());
            let rel = (&data.g_spray - &oracle).abs().max() / scale;
            let fmt = |v: &DVector<f64>| {
                v.iter()
                    .map(|c| format!("{c:+.12e}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            println!("drift      {}", fmt(&data.drift));
            println!("torsion    {}", fmt(&data.torsion));
            println!("charge     {}", fmt(&data.e_term));
            println!("riemann    {}", fmt(&data.riemann));
            println!("total      {}", fmt(&data.g_spray));
            println!("oracle     {}", fmt(&oracle));
            println!("m          {:+.12e}", data.m);
            println!("rel-error  {rel:.3e}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Geodesic {
            scenario,
            x0,
            y0,
            t_end,
            step,
            out,
        } => {
            let sc = Scenario::from_path(&scenario)?;
            let fields = sc.field_set()?;
            let xv = parse_vector(&x0)?;
            let yv = parse_vector(&y0)?;
            let traj = geodesic::integrate(&fields, &xv, &yv, t_end, step)?;
            let n = fields.dim();
            let mut text = String::new();
            let mut header = String::from("t");
            for i in 0..n {
                header.push_str(&format!(",x{i}"));
            }
            for i in 0..n {
                header.push_str(&format!(",y{i}"));
            }
            header.push_str(",K,residual\n");
            text.push_str(&header);
            for row in &traj.rows {
                text.push_str(&format!("{:.6}", row.t));
                for v in &row.x {
                    text.push_str(&format!(",{v:.12e}"));
                }
                for v in &row.y {
                    text.push_str(&format!(",{v:.12e}"));
                }
                text.push_str(&format!(",{:.12e},{:.3e}\n", row.k, row.residual));
            }
            match out {
                Some(path) => std::fs::write(&path, text)?,
                None => {
                    std::io::stdout().write_all(text.as_bytes())?;
                }
            }
            if let Some(fault) = traj.fault {
                eprintln!("error: {fault}");
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { report, format } => {
            let r = Report::from_path(&report)?;
            match format.as_str() {
                "table" => print!("{}", r.render_table()),
                "csv" => print!("{}", r.to_csv()),
                other => {
                    return Err(Error::InvalidScenario(format!(
                        "unknown format {other:?} (expected table or csv)"
                    )))
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
