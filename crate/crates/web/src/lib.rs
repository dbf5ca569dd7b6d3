//! JSON-in, JSON-out bindings for the browser demo. Every export returns either
//! `{"ok": ...}` or `{"error": "..."}` so the page never has to catch exceptions.

use densfact_core::density::{c1inf, c1q_bracket};
use densfact_core::ell1fact::density_factorization;
use densfact_core::kashin::{kashin_dimension_report, kashin_operator, MAX_KASHIN_N};
use densfact_core::{LinOp, MeasureSpace, NormedSpace};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// An operator into `L₁(weights)`: one matrix row per atom, one column per
/// coordinate of the domain.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorInput {
    pub matrix: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    #[serde(default = "default_domain")]
    pub domain: String,
}

fn default_domain() -> String {
    "l1".into()
}

impl OperatorInput {
    pub fn build(&self) -> Result<LinOp, String> {
        let rows = self.matrix.len();
        let cols = self.matrix.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || self.matrix.iter().any(|r| r.len() != cols) {
            return Err("matrix must be a non-empty rectangular array".into());
        }
        if rows != self.weights.len() {
            return Err(format!("{rows} rows but {} weights", self.weights.len()));
        }
        if cols > 6 || rows > 32 {
            return Err("the demo is limited to 6 columns and 32 atoms".into());
        }
        let domain = match self.domain.as_str() {
            "l1" => NormedSpace::l1(cols),
            "linf" => NormedSpace::linf(cols),
            other => return Err(format!("unknown domain '{other}', use l1 or linf")),
        };
        let m = DMatrix::from_fn(rows, cols, |i, j| self.matrix[i][j]);
        let mu = MeasureSpace::new(self.weights.clone()).map_err(|e| e.to_string())?;
        LinOp::into_l1(domain, mu, m).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Deserialize)]
struct ProfileInput {
    #[serde(flatten)]
    op: OperatorInput,
    qs: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Bracket {
    pub q: f64,
    pub lower: f64,
    pub upper: f64,
    pub converged: bool,
    /// Probability density achieving `upper`.
    pub density: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Profile {
    pub norm: f64,
    pub c1inf: f64,
    pub brackets: Vec<Bracket>,
}

pub fn profile(t: &LinOp, qs: &[f64]) -> Result<Profile, String> {
    let norm = t.op_norm().map_err(|e| e.to_string())?.value;
    let top = c1inf(t).map_err(|e| e.to_string())?;
    let mu = t.measure().ok_or("operator has no measure")?;
    let mut brackets = Vec::new();
    for &q in qs {
        if !(q > 1.0) || q > 1e4 {
            return Err(format!("q = {q} outside (1, 10⁴]"));
        }
        let c = c1q_bracket(t, q, 1e-8).map_err(|e| e.to_string())?;
        brackets.push(Bracket { q, lower: c.lower, upper: c.upper, converged: c.converged, density: c.density(mu) });
    }
    Ok(Profile { norm, c1inf: top, brackets })
}

#[derive(Debug, Deserialize)]
struct FactorInput {
    #[serde(flatten)]
    op: OperatorInput,
    p: f64,
    /// `null` means ∞.
    q: Option<f64>,
}

pub fn factor(t: &LinOp, p: f64, q: f64) -> Result<serde_json::Value, String> {
    let r = density_factorization(t, p, q, 1e-8).map_err(|e| format!("{} ({})", e, e.stage()))?;
    let w = &r.witness;
    Ok(json!({
        "k": w.k,
        "m": r.items.len(),
        "gamma": w.gamma(),
        "guaranteed_gamma": r.report.guaranteed_gamma,
        "guaranteed_k": r.report.guaranteed_k,
        "residual": w.residual,
        "delta": r.delta_floor,
        "c1p": [r.c1p_lower, r.c1p_upper],
        "c1q": [r.c1q_lower, r.c1q_upper],
        "a": rows(&w.a),
        "b": rows(&w.b),
        "sets": r.items.iter().map(|i| i.f.iter().collect::<Vec<_>>()).collect::<Vec<_>>(),
    }))
}

pub fn kashin(n: usize, seed: u64, restarts: usize, gl: f64) -> Result<serde_json::Value, String> {
    if n == 0 || n > MAX_KASHIN_N.min(6) {
        return Err("the demo draws n between 1 and 6".into());
    }
    let (op, redraws) = kashin_operator(n, seed, restarts.clamp(1, 64), 300).map_err(|e| e.to_string())?;
    let report = kashin_dimension_report(&op, gl).map_err(|e| e.to_string())?;
    Ok(json!({
        "n": n,
        "b_hat": op.pair.b_hat,
        "b_e1": op.pair.b_e1,
        "b_e2": op.pair.b_e2,
        "b_cap": op.b_cap,
        "min_lower_ratio": op.min_lower_ratio,
        "redraws": redraws,
        "threshold": report.threshold,
        "t": report.t,
        "feasible": report.feasible,
    }))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn wrap<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => json!({ "ok": v }).to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// `{"matrix": [[..]], "weights": [..], "domain": "l1"|"linf", "qs": [..]}`.
#[wasm_bindgen]
pub fn density_profile(input: &str) -> String {
    wrap(serde_json::from_str::<ProfileInput>(input).map_err(|e| e.to_string()).and_then(|i| profile(&i.op.build()?, &i.qs)))
}

/// `{"matrix": .., "weights": .., "domain": .., "p": 2, "q": null}`.
#[wasm_bindgen]
pub fn factor_identity(input: &str) -> String {
    wrap(
        serde_json::from_str::<FactorInput>(input)
            .map_err(|e| e.to_string())
            .and_then(|i| factor(&i.op.build()?, i.p, i.q.unwrap_or(f64::INFINITY))),
    )
}

#[wasm_bindgen]
pub fn kashin_draw(n: usize, seed: u64, restarts: usize, gl: f64) -> String {
    wrap(kashin(n, seed, restarts, gl))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    const IDENTITY4: &str = r#""matrix": [[4,0,0,0],[0,4,0,0],[0,0,4,0],[0,0,0,4]], "weights": [0.25,0.25,0.25,0.25]"#;

    #[test]
    fn profile_of_an_isometry_is_flat() {
        let out = parse(&density_profile(&format!("{{{IDENTITY4}, \"qs\": [2, 4]}}")));
        let ok = &out["ok"];
        assert!((ok["norm"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        for b in ok["brackets"].as_array().unwrap() {
            assert!(b["lower"].as_f64().unwrap() <= b["upper"].as_f64().unwrap() * (1.0 + 1e-12));
            let d: Vec<f64> = serde_json::from_value(b["density"].clone()).unwrap();
            assert!((d.iter().sum::<f64>() / 4.0 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn factorization_of_the_identity() {
        let out = parse(&factor_identity(&format!("{{{IDENTITY4}, \"p\": 2, \"q\": null}}")));
        let ok = &out["ok"];
        assert!(ok["k"].as_u64().unwrap() >= 1);
        assert!(ok["residual"].as_f64().unwrap() < 1e-8);
        assert!(ok["gamma"].as_f64().unwrap() <= ok["guaranteed_gamma"].as_f64().unwrap() + 1e-7);
    }

    #[test]
    fn errors_are_reported_not_thrown() {
        assert!(parse(&density_profile("{\"matrix\": [], \"weights\": [], \"qs\": []}"))["error"].is_string());
        assert!(parse(&density_profile("not json"))["error"].is_string());
        assert!(parse(&factor_identity(&format!("{{{IDENTITY4}, \"p\": 3, \"q\": 2}}")))["error"].is_string());
        assert!(parse(&kashin_draw(9, 0, 4, 1.0))["error"].is_string());
    }

    #[test]
    fn kashin_draw_is_seeded() {
        let a = kashin_draw(2, 3, 8, 1.0);
        assert_eq!(a, kashin_draw(2, 3, 8, 1.0));
        let v = parse(&a);
        assert!(v["ok"]["b_hat"].as_f64().unwrap() >= 1.0);
        assert_eq!(v["ok"]["feasible"], false);
    }
}
