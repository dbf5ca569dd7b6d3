use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use densfact_cli::verify::{verify_text, VerifyError};
use densfact_cli::{exit_code, run, write_outputs, Scenario, EXIT_NUMERIC, EXIT_PASS, EXIT_SCHEMA};
use densfact_core::bounds::{ledger, LEDGERS};

#[derive(Parser)]
#[command(name = "densfact", version, about = "Run factorization scenarios and check their reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write report.json and table.csv.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a constant ledger as JSON, e.g. `ledger density --params norm_t=1,c1p=1,c1q=1,p=2,q=inf`.
    Ledger {
        name: String,
        #[arg(long, default_value = "")]
        params: String,
    },
    /// Recompute every value of a report from its witnesses.
    Verify { report: PathBuf },
}

fn parse_params(s: &str) -> Result<BTreeMap<String, f64>, String> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("expected key=value, got '{part}'"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("'{v}' is not a number"))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, out, jobs, seed } => {
            let mut s = match Scenario::load(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("schema error: {e}");
                    return code(EXIT_SCHEMA);
                }
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let report = match run::run(&s, jobs.max(1)) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("schema error: {e}");
                    return code(EXIT_SCHEMA);
                }
            };
            if let Err(e) = write_outputs(&report, &out) {
                eprintln!("cannot write to {}: {e}", out.display());
                return code(EXIT_NUMERIC);
            }
            for t in &report.trials {
                if let Some(e) = &t.error {
                    eprintln!("trial {} failed in stage '{}': {}", t.index, e.stage, e.message);
                }
                for c in t.checks.iter().filter(|c| !c.pass) {
                    eprintln!("trial {} check '{}' failed: {}", t.index, c.name, c.detail);
                }
            }
            let c = exit_code(&report);
            let passed = report.trials.iter().filter(|t| t.passed()).count();
            println!("{}: {passed}/{} trials passed; wrote {}", s.pipeline.name(), report.trials.len(), out.display());
            code(c)
        }
        Command::Ledger { name, params } => {
            let params = match parse_params(&params) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("{e}");
                    return code(EXIT_SCHEMA);
                }
            };
            match ledger(&name, &params) {
                Ok(l) => {
                    println!("{}", serde_json::to_string_pretty(&l).expect("ledger serializes"));
                    code(EXIT_PASS)
                }
                Err(e) => {
                    eprintln!("{e}");
                    if let Some((_, req)) = LEDGERS.iter().find(|(n, _)| *n == name) {
                        eprintln!("parameters: {}", req.join(", "));
                    } else {
                        let names: Vec<&str> = LEDGERS.iter().map(|(n, _)| *n).collect();
                        eprintln!("ledgers: {}", names.join(", "));
                    }
                    code(EXIT_SCHEMA)
                }
            }
        }
        Command::Verify { report } => {
            let text = match std::fs::read_to_string(&report) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("{}: {e}", report.display());
                    return code(EXIT_SCHEMA);
                }
            };
            match verify_text(&text) {
                Ok(s) => {
                    println!("ok: {} trials, {} values recomputed", s.trials, s.values_checked);
                    code(EXIT_PASS)
                }
                Err(VerifyError::Schema(e)) => {
                    eprintln!("{e}");
                    code(EXIT_SCHEMA)
                }
                Err(VerifyError::Mismatch(list)) => {
                    for l in list {
                        eprintln!("{l}");
                    }
                    code(EXIT_NUMERIC)
                }
            }
        }
    }
}
