//! Recomputes every value of a report from the witnesses it embeds.

use std::collections::BTreeMap;

use densfact_core::bounds::{density_bounds, l1_extension_bounds, ledger, linf_extension_bounds};
use densfact_core::density::{measure_of, upper_from_h};
use densfact_core::ell1fact::{l1_to_l1k_norm, Variant};
use densfact_core::extraction::{sigma, split_product};
use densfact_core::rankreduce::{l1_self_norm, numerical_rank};
use densfact_core::{conjugate, AtomSet, Codomain, LinOp, Result};
use nalgebra::{DMatrix, DVector};

use crate::report::{Report, Witness};
use crate::run::{kashin_values, khintchine_summary};
use crate::scenario::Pipeline;

pub const VERIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum VerifyError {
    /// The file is not a report.
    Schema(String),
    /// Recomputed values disagree with the recorded ones.
    Mismatch(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySummary {
    pub trials: usize,
    pub values_checked: usize,
}

pub fn agree(a: f64, b: f64) -> bool {
    if a.is_nan() || b.is_nan() {
        return a.is_nan() && b.is_nan();
    }
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= VERIFY_TOL * a.abs().max(b.abs()).max(1.0)
}

pub fn verify_text(text: &str) -> std::result::Result<VerifySummary, VerifyError> {
    let report: Report = serde_json::from_str(text).map_err(|e| VerifyError::Schema(format!("report: {e}")))?;
    verify(&report)
}

pub fn verify(report: &Report) -> std::result::Result<VerifySummary, VerifyError> {
    let pipeline = report.scenario.pipeline;
    let mut problems = Vec::new();
    let mut checked = 0;
    for t in &report.trials {
        let Some(w) = &t.witness else {
            if t.error.is_none() {
                problems.push(format!("trial {}: no witness and no error", t.index));
            }
            continue;
        };
        match recompute(pipeline, w) {
            Ok(values) => {
                for (k, v) in &values {
                    checked += 1;
                    match t.values.get(k) {
                        Some(r) if agree(*r, *v) => {}
                        Some(r) => problems.push(format!("trial {}: {k} recorded {r:e}, recomputed {v:e}", t.index)),
                        None => problems.push(format!("trial {}: {k} missing", t.index)),
                    }
                }
            }
            Err(e) => problems.push(format!("trial {}: recomputation failed: {e}", t.index)),
        }
    }
    let all = report.trials.iter().all(|t| t.passed());
    if all != report.pass {
        problems.push(format!("report says pass = {}, trials say {all}", report.pass));
    }
    if problems.is_empty() {
        Ok(VerifySummary { trials: report.trials.len(), values_checked: checked })
    } else {
        Err(VerifyError::Mismatch(problems))
    }
}

fn recompute(pipeline: Pipeline, w: &Witness) -> Result<BTreeMap<String, f64>> {
    let mut v = BTreeMap::new();
    match w {
        Witness::Extraction { operator, norm_t, p, q, k_lower, items } => {
            let t1 = operator.with_exponent(1.0)?;
            let norm = t1.op_norm()?.value;
            let tn = t1.scaled(1.0 / norm);
            let mu = measure_of(&tn)?;
            let s = sigma(*p, *q)?;
            let mut min_product = f64::INFINITY;
            let mut union = AtomSet::empty();
            for it in items {
                let g = tn.apply(&it.z);
                min_product = min_product.min(split_product(mu, g.as_slice(), &it.f, *q, s)?);
                union = union.union(&it.f);
            }
            let norm_p = tn.with_exponent(*p)?.op_norm()?.value;
            let c_cal = norm_p / k_lower;
            let ps = conjugate(*p)?;
            v.insert("norm_t".into(), norm);
            v.insert("m".into(), items.len() as f64);
            v.insert("min_product".into(), min_product);
            v.insert("mass".into(), mu.mass(&union));
            v.insert("product_floor".into(), 2f64.powf(-(1.0 / p + 1.0)) * k_lower);
            v.insert("c_cal".into(), c_cal);
            v.insert("eta".into(), (2.0 * c_cal).powf(-ps));
            v.insert("guaranteed_m".into(), (k_lower / (2f64.powf(2.0 + 1.0 / p) * c_cal)).powf(ps));
            let _ = norm_t;
        }
        Witness::Factorization { operator, factorization: f, projection, inputs } => {
            let k = f.a.ncols();
            let residual = (&f.b * &operator.matrix * &f.a - DMatrix::identity(k, k)).amax();
            let norm_t = operator.op_norm()?.value;
            let (norm_a, norm_b) = match f.variant {
                Variant::L1 => {
                    let mut na: f64 = 0.0;
                    for c in f.a.column_iter() {
                        na = na.max(operator.domain.norm(c.clone_owned().as_slice())?);
                    }
                    (na, l1_to_l1k_norm(&f.b, measure_of(operator)?))
                }
                Variant::Linf => {
                    let na = f.a.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
                    let Codomain::Normed(x) = &operator.codomain else {
                        return Err(densfact_core::Error::Domain("ℓ∞ witness needs a normed codomain".into()));
                    };
                    let mut nb: f64 = 0.0;
                    for r in f.b.row_iter() {
                        let row: DVector<f64> = r.transpose();
                        nb = nb.max(x.dual_norm(row.as_slice())?);
                    }
                    (na, nb)
                }
            };
            v.insert("k".into(), k as f64);
            v.insert("residual".into(), residual);
            v.insert("gamma".into(), norm_a * norm_b);
            v.insert("norm_product".into(), norm_a * norm_b * norm_t);
            let get = |key: &str| inputs.get(key).copied().ok_or_else(|| densfact_core::Error::Domain(format!("witness input '{key}' missing")));
            let bounds = match pipeline {
                Pipeline::FactorL1 | Pipeline::FactorLinf => {
                    let (delta, m) = (get("delta")?, get("m")?);
                    v.insert("delta".into(), delta);
                    v.insert("m".into(), m);
                    Some((2.0 / (delta * get("norm_t")?), delta * m / 8.0))
                }
                Pipeline::Density => {
                    let b = density_bounds(norm_t, get("C1p")?, get("C1q")?, get("p")?, get("q")?)?;
                    v.insert("sigma".into(), b.sigma);
                    v.insert("Delta".into(), b.big_delta);
                    Some((b.gamma, b.k))
                }
                Pipeline::L1Extension => {
                    let b = l1_extension_bounds(norm_t, get("c")?, get("p")?, get("eps")?, (get("n")? as usize).max(1))?;
                    Some((b.gamma, b.k))
                }
                Pipeline::LinfExtension => {
                    let b = linf_extension_bounds(norm_t, get("c")?, get("t")?, get("eps")?, (get("n")? as usize).max(1))?;
                    Some((b.gamma, b.k))
                }
                _ => None,
            };
            if let Some((g, kb)) = bounds {
                v.insert("guaranteed_gamma".into(), g);
                v.insert("guaranteed_k".into(), kb);
            }
            if let Some(p) = projection {
                let norm_p = match f.variant {
                    Variant::L1 => l1_self_norm(p, measure_of(operator)?),
                    Variant::Linf => p.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max),
                };
                v.insert("norm_p".into(), norm_p);
                v.insert("rank_p".into(), numerical_rank(p) as f64);
            }
        }
        Witness::Khintchine { operator, qs, densities, lowers } => {
            let mut uppers = Vec::with_capacity(qs.len());
            for ((q, h), l) in qs.iter().zip(densities).zip(lowers) {
                uppers.push(upper_from_h(operator, h, *q)?.max(*l));
            }
            v = khintchine_summary(operator.domain.dim(), qs, &uppers)?;
        }
        Witness::Kashin { n, gl, b_hat, b_e1, b_e2, factors, b_cap, u, v: vm, min_lower_ratio, .. } => {
            if !agree(*b_hat, b_e1.max(*b_e2)) {
                return Err(densfact_core::Error::Alarm("b̂ is not the larger subspace constant".into()));
            }
            if (u * *b_hat - vm).amax() > VERIFY_TOL * (1.0 + vm.amax()) {
                return Err(densfact_core::Error::Alarm("v differs from b̂·u".into()));
            }
            let cap = b_hat * factors.iter().product::<f64>();
            v = kashin_values(*n, *b_hat, cap, *min_lower_ratio, *gl)?;
            let _ = b_cap;
        }
        Witness::Ledger { ledger: l } => {
            v = ledger(&l.name, &l.inputs)?.derived;
        }
    }
    Ok(v)
}

/// Convenience for tests: recompute a single factorization residual.
pub fn residual_of(t: &LinOp, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (b * &t.matrix * a - DMatrix::identity(a.ncols(), a.ncols())).amax()
}
