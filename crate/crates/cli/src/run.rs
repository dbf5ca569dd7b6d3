//! Pipeline execution: one scenario, `trials` seeded runs, one report.

use std::collections::BTreeMap;
use std::time::Instant;

use densfact_core::bounds::{khintchine_bounds, ledger, KhintchineBounds};
use densfact_core::density::{c1q_bracket, measure_of};
use densfact_core::ell1fact::{density_factorization, factor_l1, factor_linf_dual, BoundReport, FactorizationWitness, Item};
use densfact_core::extraction::rosenthal_extract;
use densfact_core::families::Family;
use densfact_core::kashin::{kashin_operator, dimension_report};
use densfact_core::rankreduce::{l1_extension_factorization, linf_extension_factorization};
use densfact_core::rng::mix;
use densfact_core::{AtomSet, Error, LinOp};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::report::{aggregate, Check, Report, TrialError, TrialRecord, Witness, FORMAT_VERSION};
use crate::scenario::{OperatorSpec, Pipeline, Resolved, Scenario, SchemaError};

pub const RESIDUAL_TOL: f64 = 1e-8;
pub const PRODUCT_SLACK: f64 = 1e-7;

const FACTOR_COLUMNS: &[&str] = &["k", "guaranteed_k", "gamma", "guaranteed_gamma", "residual", "norm_product"];

/// Column order of the flat table for a scenario.
pub fn columns(s: &Scenario) -> Result<Vec<String>, SchemaError> {
    let r = s.resolved()?;
    let extra: Vec<&str> = match s.pipeline {
        Pipeline::Rosenthal => vec!["m", "guaranteed_m", "norm_t", "k_lower", "c_cal", "eta", "min_product", "product_floor", "mass"],
        Pipeline::FactorL1 | Pipeline::FactorLinf => [FACTOR_COLUMNS, &["delta", "m"]].concat(),
        Pipeline::Density => [FACTOR_COLUMNS, &["m", "sigma", "Delta", "C1p", "C1q"]].concat(),
        Pipeline::L1Extension => [FACTOR_COLUMNS, &["n", "c", "A", "norm_p", "rank_p"]].concat(),
        Pipeline::LinfExtension => [FACTOR_COLUMNS, &["n", "c", "norm_p", "rank_p"]].concat(),
        Pipeline::KhintchinePremise => {
            let mut c: Vec<String> = ["n", "C_hat", "D", "gamma", "k"].iter().map(|s| s.to_string()).collect();
            c.extend(r.qs.iter().map(|q| format!("C1q_{q}")));
            return Ok(c);
        }
        Pipeline::Kashin => vec!["n", "b_hat", "b_cap", "min_lower_ratio", "t", "c", "threshold", "feasible", "ln_j"],
        Pipeline::BoundsLedger => {
            let l = s.ledger.as_ref().expect("validated");
            return match ledger(&l.name, &l.params) {
                Ok(led) => Ok(led.derived.keys().cloned().collect()),
                Err(e) => Err(SchemaError(format!("ledger: {e}"))),
            };
        }
    };
    Ok(extra.into_iter().map(String::from).collect())
}

/// Seed of trial `i`.
pub fn trial_seed(seed: u64, i: usize) -> u64 {
    mix(seed, i as u64)
}

fn operator(s: &Scenario, seed: u64) -> densfact_core::Result<LinOp> {
    match s.operator.as_ref().expect("validated") {
        OperatorSpec::Named(f) => f.generate(seed),
        OperatorSpec::Explicit(e) => e.build().map_err(|e| Error::Domain(e.0)),
    }
}

type Outcome = (BTreeMap<String, f64>, Vec<Check>, Witness);

/// Runs every trial (on up to `jobs` threads) and assembles the report in trial order.
pub fn run(s: &Scenario, jobs: usize) -> Result<Report, SchemaError> {
    let cols = columns(s)?;
    let r = s.resolved()?;
    let work = |i: usize| run_trial(s, &r, i);
    let trials: Vec<TrialRecord> = if jobs <= 1 {
        (0..s.trials).map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| SchemaError(format!("thread pool: {e}")))?;
        pool.install(|| (0..s.trials).into_par_iter().map(work).collect())
    };
    let pass = trials.iter().all(TrialRecord::passed);
    Ok(Report {
        format_version: FORMAT_VERSION,
        scenario: s.clone(),
        seed: s.seed,
        aggregate: aggregate(&trials, &cols),
        columns: cols,
        trials,
        pass,
    })
}

pub fn run_trial(s: &Scenario, r: &Resolved, index: usize) -> TrialRecord {
    let seed = trial_seed(s.seed, index);
    let start = Instant::now();
    let result = execute(s, r, seed);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    match result {
        Ok((values, checks, witness)) => TrialRecord { index, seed, values, checks, error: None, witness: Some(witness), wall_ms },
        Err(e) => TrialRecord {
            index,
            seed,
            values: BTreeMap::new(),
            checks: Vec::new(),
            error: Some(TrialError { stage: e.stage().to_string(), message: e.to_string(), numeric: e.is_numeric() }),
            witness: None,
            wall_ms,
        },
    }
}

fn execute(s: &Scenario, r: &Resolved, seed: u64) -> densfact_core::Result<Outcome> {
    match s.pipeline {
        Pipeline::BoundsLedger => {
            let l = s.ledger.as_ref().expect("validated");
            let led = ledger(&l.name, &l.params)?;
            Ok((led.derived.clone(), Vec::new(), Witness::Ledger { ledger: led }))
        }
        Pipeline::Kashin => kashin(s, r, seed),
        _ => {
            let t = operator(s, seed)?;
            match s.pipeline {
                Pipeline::Rosenthal => rosenthal(t, r),
                Pipeline::FactorL1 => factor_l1_pipeline(t, r),
                Pipeline::FactorLinf => factor_linf_pipeline(t, r),
                Pipeline::Density => density(t, r),
                Pipeline::L1Extension => l1_extension(t, r),
                Pipeline::LinfExtension => linf_extension(t, r),
                Pipeline::KhintchinePremise => khintchine(t, r),
                Pipeline::Kashin | Pipeline::BoundsLedger => unreachable!(),
            }
        }
    }
}

fn disjoint(sets: &[&AtomSet]) -> bool {
    let mut seen = AtomSet::empty();
    for s in sets {
        if s.iter().any(|a| seen.contains(a)) {
            return false;
        }
        seen = seen.union(s);
    }
    true
}

fn rosenthal(t: LinOp, r: &Resolved) -> densfact_core::Result<Outcome> {
    let ex = rosenthal_extract(&t, r.p, r.q, r.tol)?;
    let c = &ex.constants;
    let mu = measure_of(&t)?;
    let floor = 2f64.powf(-(1.0 / r.p + 1.0)) * c.k;
    let min_product = ex.items.iter().map(|i| i.product).fold(f64::INFINITY, f64::min);
    let sets: Vec<&AtomSet> = ex.items.iter().map(|i| &i.f).collect();
    let union = sets.iter().fold(AtomSet::empty(), |u, s| u.union(s));
    let mut max_z: f64 = 0.0;
    for it in &ex.items {
        max_z = max_z.max(t.domain.norm(&it.z)?);
    }
    let values = BTreeMap::from([
        ("m".to_string(), ex.m as f64),
        ("guaranteed_m".into(), c.guaranteed_m),
        ("norm_t".into(), c.norm_t),
        ("k_lower".into(), c.k),
        ("c_cal".into(), c.c_cal),
        ("eta".into(), c.eta),
        ("min_product".into(), min_product),
        ("product_floor".into(), floor),
        ("mass".into(), mu.mass(&union)),
    ]);
    let checks = vec![
        Check::new("disjoint", disjoint(&sets), "sets F_i pairwise disjoint"),
        Check::new("in_ball", max_z <= 1.0 + 1e-9, format!("max ‖z_i‖ = {max_z}")),
        Check::new("mass_inequality", min_product >= floor - 1e-9, format!("min product {min_product} vs {floor}")),
        Check::new("count", ex.m as f64 > c.guaranteed_m, format!("m = {} vs guarantee {}", ex.m, c.guaranteed_m)),
    ];
    let witness = Witness::Extraction { operator: t, norm_t: c.norm_t, p: r.p, q: r.q, k_lower: c.k, items: ex.items };
    Ok((values, checks, witness))
}

fn factor_values(w: &FactorizationWitness, rep: &BoundReport) -> (BTreeMap<String, f64>, Vec<Check>) {
    let values = BTreeMap::from([
        ("k".to_string(), w.k as f64),
        ("guaranteed_k".into(), rep.guaranteed_k),
        ("gamma".into(), w.gamma()),
        ("guaranteed_gamma".into(), rep.guaranteed_gamma),
        ("residual".into(), w.residual),
        ("norm_product".into(), w.norm_product),
    ]);
    let k_ok = rep.guaranteed_k < 1.0 || w.k as f64 >= rep.guaranteed_k.ceil();
    let checks = vec![
        Check::new("identity", w.residual <= RESIDUAL_TOL, format!("max |BTA − I| = {:e}", w.residual)),
        Check::new("gamma", w.gamma() <= rep.guaranteed_gamma + PRODUCT_SLACK, format!("{} vs {}", w.gamma(), rep.guaranteed_gamma)),
        Check::new("k", k_ok && w.k >= 1, format!("k = {} vs guarantee {}", w.k, rep.guaranteed_k)),
    ];
    (values, checks)
}

fn factor_l1_pipeline(t: LinOp, r: &Resolved) -> densfact_core::Result<Outcome> {
    let t = t.with_exponent(1.0)?;
    let ex = rosenthal_extract(&t, r.p, r.q, r.tol)?;
    let items: Vec<Item> = ex.items.iter().map(Item::from).collect();
    let delta = r.delta.unwrap_or_else(|| ex.items.iter().map(|i| i.l1_mass).fold(f64::INFINITY, f64::min));
    let (w, rep) = factor_l1(&t, &items, delta)?;
    let (mut values, checks) = factor_values(&w, &rep);
    values.insert("delta".into(), delta);
    values.insert("m".into(), items.len() as f64);
    let inputs = rep.inputs.clone();
    Ok((values, checks, Witness::Factorization { operator: t, factorization: w, projection: None, inputs }))
}

fn factor_linf_pipeline(v: LinOp, r: &Resolved) -> densfact_core::Result<Outcome> {
    let norm = v.op_norm()?.value;
    if norm == 0.0 {
        return Err(Error::Domain("V = 0".into()));
    }
    let v = v.scaled(1.0 / norm);
    let delta = match r.delta {
        Some(d) => d,
        None => {
            let densfact_core::Codomain::Normed(x) = &v.codomain else {
                return Err(Error::Domain("V must take values in a normed space".into()));
            };
            let mut d = f64::INFINITY;
            for c in v.matrix.column_iter() {
                d = d.min(x.norm(c.clone_owned().as_slice())?);
            }
            d
        }
    };
    let (w, rep) = factor_linf_dual(&v, delta)?;
    let (mut values, checks) = factor_values(&w, &rep);
    values.insert("delta".into(), delta);
    values.insert("m".into(), v.domain.dim() as f64);
    let inputs = rep.inputs.clone();
    Ok((values, checks, Witness::Factorization { operator: v, factorization: w, projection: None, inputs }))
}

fn density(t: LinOp, r: &Resolved) -> densfact_core::Result<Outcome> {
    let t = t.with_exponent(1.0)?;
    let d = density_factorization(&t, r.p, r.q, r.tol)?;
    let (mut values, checks) = factor_values(&d.witness, &d.report);
    values.insert("m".into(), d.extraction.m as f64);
    values.insert("sigma".into(), d.sigma);
    values.insert("Delta".into(), d.big_delta);
    values.insert("C1p".into(), d.c1p_lower);
    values.insert("C1q".into(), d.c1q_upper);
    let inputs = d.report.inputs.clone();
    Ok((values, checks, Witness::Factorization { operator: t, factorization: d.witness, projection: None, inputs }))
}

fn projection_checks(p: &densfact_core::rankreduce::ProjectionWitness) -> Check {
    let v = p.violations();
    Check::new("projection", v.is_empty(), if v.is_empty() { "ok".to_string() } else { v.join("; ") })
}

fn l1_extension(t: LinOp, r: &Resolved) -> densfact_core::Result<Outcome> {
    let t = t.with_exponent(1.0)?;
    let z0 = r.subspace.clone().unwrap_or_else(|| DMatrix::identity(t.domain.dim(), t.domain.dim()));
    let f = l1_extension_factorization(&t, &z0, r.p, r.eps, r.tol)?;
    let (mut values, mut checks) = factor_values(&f.witness, &f.report);
    values.insert("n".into(), f.n as f64);
    values.insert("c".into(), f.c_eff);
    values.insert("A".into(), f.report.inputs["A"]);
    values.insert("norm_p".into(), f.projection.beta_achieved);
    values.insert("rank_p".into(), f.projection.rank as f64);
    checks.push(projection_checks(&f.projection));
    let inputs = f.report.inputs.clone();
    Ok((values, checks, Witness::Factorization { operator: t, factorization: f.witness, projection: Some(f.projection.p), inputs }))
}

fn linf_extension(u: LinOp, r: &Resolved) -> densfact_core::Result<Outcome> {
    let e = r.subspace.clone().expect("validated");
    let f = linf_extension_factorization(&u, &e, r.t, r.eps, r.tol, None)?;
    let (mut values, mut checks) = factor_values(&f.witness, &f.report);
    values.insert("n".into(), f.n as f64);
    values.insert("c".into(), f.c_eff);
    values.insert("norm_p".into(), f.projection.beta_achieved);
    values.insert("rank_p".into(), f.projection.rank as f64);
    checks.push(projection_checks(&f.projection));
    let inputs = f.report.inputs.clone();
    Ok((values, checks, Witness::Factorization { operator: u, factorization: f.witness, projection: Some(f.projection.p), inputs }))
}

/// `Ĉ = max_q C_{1,q}/√q` and the premise ledger built from it.
pub fn khintchine_summary(n: usize, qs: &[f64], c: &[f64]) -> densfact_core::Result<BTreeMap<String, f64>> {
    let c_hat = qs.iter().zip(c).map(|(q, c)| c / q.sqrt()).fold(0.0, f64::max);
    let mut values = BTreeMap::from([("n".to_string(), n as f64), ("C_hat".into(), c_hat)]);
    match khintchine_bounds(n, c_hat, 1.0)? {
        KhintchineBounds::Obvious { d } => {
            values.insert("D".into(), d);
        }
        KhintchineBounds::Bound { d, gamma, k, .. } => {
            values.insert("D".into(), d);
            values.insert("gamma".into(), gamma);
            values.insert("k".into(), k);
        }
    }
    for (q, c) in qs.iter().zip(c) {
        values.insert(format!("C1q_{q}"), *c);
    }
    Ok(values)
}

fn khintchine(t: LinOp, r: &Resolved) -> densfact_core::Result<Outcome> {
    let mut qs = r.qs.clone();
    qs.sort_by(f64::total_cmp);
    let (mut uppers, mut lowers, mut densities) = (Vec::new(), Vec::new(), Vec::new());
    for &q in &qs {
        let cert = c1q_bracket(&t, q, r.tol)?;
        uppers.push(cert.upper);
        lowers.push(cert.lower);
        densities.push(cert.h);
    }
    let values = khintchine_summary(t.domain.dim(), &qs, &uppers)?;
    let monotone = (1..qs.len()).all(|i| uppers[i] >= lowers[i - 1] * (1.0 - 1e-6));
    let gaps = uppers.iter().zip(&lowers).map(|(u, l)| (u - l) / u).fold(0.0, f64::max);
    let checks = vec![
        Check::new("nondecreasing_in_q", monotone, format!("C_1,q = {uppers:?}")),
        Check::new("finite", values["C_hat"].is_finite(), "fitted constant"),
        Check::new("certified", gaps <= 1e-6, format!("largest relative gap {gaps:e}")),
    ];
    Ok((values, checks, Witness::Khintchine { operator: t, qs, densities, lowers }))
}

/// Values of the dimension report, shared with the verifier.
pub fn kashin_values(n: usize, b_hat: f64, b_cap: f64, min_ratio: f64, gl: f64) -> densfact_core::Result<BTreeMap<String, f64>> {
    let rep = dimension_report(n, b_cap, gl)?;
    let mut values = BTreeMap::from([
        ("n".to_string(), n as f64),
        ("b_hat".into(), b_hat),
        ("b_cap".into(), b_cap),
        ("min_lower_ratio".into(), min_ratio),
        ("t".into(), rep.t),
        ("threshold".into(), rep.threshold),
        ("feasible".into(), rep.feasible as u8 as f64),
    ]);
    if rep.c.is_finite() {
        values.insert("c".into(), rep.c);
    }
    if let Some(g) = rep.growth {
        values.insert("ln_j".into(), g.j_feasible.ln());
    }
    Ok(values)
}

fn kashin(s: &Scenario, r: &Resolved, seed: u64) -> densfact_core::Result<Outcome> {
    let Some(OperatorSpec::Named(Family::Kashin { n, restarts })) = &s.operator else { unreachable!("validated") };
    let (op, redraws) = kashin_operator(*n, seed, *restarts, r.samples)?;
    let b = op.pair.b_hat;
    let values = kashin_values(*n, b, op.b_cap, op.min_lower_ratio, r.gl)?;
    let checks = vec![
        Check::new("b_at_least_one", b >= 1.0, format!("b̂ = {b}")),
        Check::new("lower_bound", op.min_lower_ratio >= 1.0 - 1e-7, format!("min ‖ve‖/‖e‖ = {}", op.min_lower_ratio)),
        Check::new("b_cap", op.b_cap <= b * b * (1.0 + 1e-6), format!("B̂ = {} vs b̂² = {}", op.b_cap, b * b)),
    ];
    let witness = Witness::Kashin {
        n: *n,
        gl: r.gl,
        b_hat: b,
        b_e1: op.pair.b_e1,
        b_e2: op.pair.b_e2,
        factors: op.factors,
        b_cap: op.b_cap,
        u: op.u,
        v: op.v,
        min_lower_ratio: op.min_lower_ratio,
        redraws,
    };
    Ok((values, checks, witness))
}
