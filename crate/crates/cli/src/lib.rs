//! Scenario runner behind the `densfact` binary.

pub mod report;
pub mod run;
pub mod scenario;
pub mod verify;

use std::path::Path;

pub use report::{table, Report};
pub use scenario::{Scenario, SchemaError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Exit code for a finished report: numeric failures win over input errors.
pub fn exit_code(report: &Report) -> i32 {
    if report.pass {
        return EXIT_PASS;
    }
    let input_only = report.trials.iter().all(|t| t.error.as_ref().map_or(t.passed(), |e| !e.numeric));
    if input_only {
        EXIT_SCHEMA
    } else {
        EXIT_NUMERIC
    }
}

/// Writes `report.json` and `table.csv` into `out`.
pub fn write_outputs(report: &Report, out: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    std::fs::write(out.join("report.json"), json)?;
    std::fs::write(out.join("table.csv"), table(report))
}
