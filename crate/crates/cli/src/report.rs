//! Report and flat-table formats.

use std::collections::BTreeMap;

use densfact_core::bounds::{lossless, ConstantLedger};
use densfact_core::ell1fact::FactorizationWitness;
use densfact_core::extraction::ExtractionItem;
use densfact_core::LinOp;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialError {
    pub stage: String,
    pub message: String,
    /// Capacity, convergence, LP and consistency failures; the rest are input errors.
    pub numeric: bool,
}

/// Everything needed to recompute a trial's values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    Extraction {
        operator: LinOp,
        norm_t: f64,
        p: f64,
        #[serde(with = "lossless::scalar")]
        q: f64,
        k_lower: f64,
        items: Vec<ExtractionItem>,
    },
    Factorization {
        operator: LinOp,
        factorization: FactorizationWitness,
        /// `P` for the extension pipelines.
        projection: Option<DMatrix<f64>>,
        #[serde(with = "lossless")]
        inputs: BTreeMap<String, f64>,
    },
    Khintchine {
        operator: LinOp,
        qs: Vec<f64>,
        /// One density per exponent; `C_{1,q} ≤ ‖h‖ ‖h⁻¹ j‖` is recomputed from it.
        densities: Vec<Vec<f64>>,
        lowers: Vec<f64>,
    },
    Kashin {
        n: usize,
        gl: f64,
        b_hat: f64,
        b_e1: f64,
        b_e2: f64,
        factors: [f64; 3],
        b_cap: f64,
        u: DMatrix<f64>,
        v: DMatrix<f64>,
        min_lower_ratio: f64,
        redraws: u64,
    },
    Ledger {
        ledger: ConstantLedger,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    #[serde(with = "lossless")]
    pub values: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub error: Option<TrialError>,
    pub witness: Option<Witness>,
    pub wall_ms: f64,
}

impl TrialRecord {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.pass)
    }

    pub fn status(&self) -> &'static str {
        match (&self.error, self.passed()) {
            (Some(_), _) => "error",
            (None, true) => "pass",
            (None, false) => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(with = "lossless::scalar")]
    pub min: f64,
    #[serde(with = "lossless::scalar")]
    pub median: f64,
    #[serde(with = "lossless::scalar")]
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub scenario: Scenario,
    pub seed: u64,
    pub columns: Vec<String>,
    pub trials: Vec<TrialRecord>,
    pub aggregate: BTreeMap<String, Summary>,
    pub pass: bool,
}

/// Min, median (lower middle for even counts) and max of the finite values of each column.
pub fn aggregate(trials: &[TrialRecord], columns: &[String]) -> BTreeMap<String, Summary> {
    let mut out = BTreeMap::new();
    for c in columns {
        let mut v: Vec<f64> = trials.iter().filter_map(|t| t.values.get(c)).copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        out.insert(c.clone(), Summary { min: v[0], median: v[(v.len() - 1) / 2], max: v[v.len() - 1] });
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `trial,seed,status,stage,<columns>`, one row per trial. Wall times are left
/// out so that equal scenarios give equal bytes.
pub fn table(report: &Report) -> String {
    let mut out = String::from("trial,seed,status,stage");
    for c in &report.columns {
        out.push(',');
        out.push_str(&csv_field(c));
    }
    out.push('\n');
    for t in &report.trials {
        let stage = t.error.as_ref().map(|e| e.stage.as_str()).unwrap_or("");
        out.push_str(&format!("{},{},{},{}", t.index, t.seed, t.status(), csv_field(stage)));
        for c in &report.columns {
            out.push(',');
            if let Some(v) = t.values.get(c) {
                out.push_str(&format!("{v:e}"));
            }
        }
        out.push('\n');
    }
    out
}
