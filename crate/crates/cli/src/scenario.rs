//! Scenario files: one TOML document naming a pipeline, an operator and its
//! parameters. Unknown fields are rejected everywhere.

use std::collections::BTreeMap;
use std::path::Path;

use densfact_core::bounds::lossless;
use densfact_core::families::Family;
use densfact_core::{Codomain, LinOp, MeasureSpace, NormedSpace};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const MAX_TRIALS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    /// Greedy extraction of pairs `(z_i, F_i)`.
    Rosenthal,
    /// Extraction followed by the ℓ₁ᵏ factorization of the extracted pairs.
    FactorL1,
    /// ℓ∞ᵏ factorization through `V: ℓ∞ᵐ → X` by duality.
    FactorLinf,
    /// Density change, extraction and ℓ₁ᵏ factorization with the `Δ` bounds.
    Density,
    /// Minimal extension, rank reduction and factorization on the L₁ side.
    L1Extension,
    /// Projection onto a subspace of ℓ∞ᵈ and factorization of the restriction.
    LinfExtension,
    /// `C_{1,q}` of the Rademacher span over a list of `q`, and the constant fitted to `√q`.
    KhintchinePremise,
    /// Random Kashin-type pair, the operator `v`, and the dimension report.
    Kashin,
    /// A named constant ledger; no operator.
    BoundsLedger,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Rosenthal => "rosenthal",
            Pipeline::FactorL1 => "factor-l1",
            Pipeline::FactorLinf => "factor-linf",
            Pipeline::Density => "density",
            Pipeline::L1Extension => "l1-extension",
            Pipeline::LinfExtension => "linf-extension",
            Pipeline::KhintchinePremise => "khintchine-premise",
            Pipeline::Kashin => "kashin",
            Pipeline::BoundsLedger => "bounds-ledger",
        }
    }

    pub fn needs_operator(self) -> bool {
        self != Pipeline::BoundsLedger
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BallKind {
    L1,
    Linf,
    L2,
}

impl BallKind {
    fn space(self, d: usize) -> NormedSpace {
        match self {
            BallKind::L1 => NormedSpace::l1(d),
            BallKind::Linf => NormedSpace::linf(d),
            BallKind::L2 => NormedSpace::l2(d),
        }
    }
}

/// An operator written out in full. `matrix` is given by rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitOperator {
    pub matrix: Vec<Vec<f64>>,
    #[serde(default = "default_domain")]
    pub domain: BallKind,
    /// Overrides `domain`: the ball is the absolute convex hull of these vectors.
    pub domain_vertices: Option<Vec<Vec<f64>>>,
    /// Codomain `L₁(weights)`.
    pub weights: Option<Vec<f64>>,
    /// Codomain normed by this ball; exclusive with `weights`.
    pub codomain: Option<BallKind>,
}

fn default_domain() -> BallKind {
    BallKind::L1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Named(Family),
    Explicit(ExplicitOperator),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub p: Option<f64>,
    /// May be `inf`.
    #[serde(default, with = "opt_lossless", skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    pub t: Option<f64>,
    pub eps: Option<f64>,
    pub tol: Option<f64>,
    pub delta: Option<f64>,
    /// Gordon–Lewis constant of the embedding (kashin).
    pub gl: Option<f64>,
    /// Directions checked for the lower bound of `v` (kashin).
    pub samples: Option<usize>,
    /// Exponents for the Rademacher experiment.
    pub qs: Option<Vec<f64>>,
    /// Basis vectors of `Z₀` (l1-extension) or `E` (linf-extension).
    pub subspace: Option<Vec<Vec<f64>>>,
}

mod opt_lossless {
    use super::lossless;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => lossless::scalar::serialize(x, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        struct W(#[serde(with = "lossless::scalar")] f64);
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerSpec {
    pub name: String,
    #[serde(default, with = "lossless")]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub pipeline: Pipeline,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    pub operator: Option<OperatorSpec>,
    #[serde(default)]
    pub params: Params,
    pub ledger: Option<LedgerSpec>,
}

fn one() -> usize {
    1
}

/// Invalid scenario; the message says which field and why.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError(pub String);

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SchemaError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, SchemaError> {
    Err(SchemaError(msg.into()))
}

/// Parameters after defaults and validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub p: f64,
    pub q: f64,
    pub t: f64,
    pub eps: f64,
    pub tol: f64,
    pub delta: Option<f64>,
    pub gl: f64,
    pub samples: usize,
    pub qs: Vec<f64>,
    pub subspace: Option<DMatrix<f64>>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SchemaError> {
        let s: Scenario = toml::from_str(text).map_err(|e| SchemaError(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path).map_err(|e| SchemaError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.trials == 0 || self.trials > MAX_TRIALS {
            return bad(format!("trials must lie in 1..={MAX_TRIALS}"));
        }
        match (self.pipeline.needs_operator(), &self.operator) {
            (true, None) => return bad(format!("pipeline '{}' needs an [operator]", self.pipeline.name())),
            (false, Some(_)) => return bad("bounds-ledger takes no [operator]"),
            _ => {}
        }
        match (self.pipeline, &self.ledger) {
            (Pipeline::BoundsLedger, None) => return bad("bounds-ledger needs a [ledger] table"),
            (Pipeline::BoundsLedger, Some(_)) => {}
            (_, Some(_)) => return bad("[ledger] is only read by bounds-ledger"),
            _ => {}
        }
        if let Some(OperatorSpec::Explicit(e)) = &self.operator {
            e.build()?;
        }
        let r = self.resolved()?;
        match self.pipeline {
            Pipeline::KhintchinePremise => {
                if !matches!(self.operator, Some(OperatorSpec::Named(Family::RademacherSpan { .. }))) {
                    return bad("khintchine-premise runs on the rademacher-span family");
                }
            }
            Pipeline::Kashin => {
                if !matches!(self.operator, Some(OperatorSpec::Named(Family::Kashin { .. }))) {
                    return bad("the kashin pipeline runs on the kashin family");
                }
            }
            Pipeline::LinfExtension => {
                if r.subspace.is_none() {
                    return bad("linf-extension needs params.subspace");
                }
            }
            _ => {}
        }
        if let Some(OperatorSpec::Named(f)) = &self.operator {
            let ok = match self.pipeline {
                Pipeline::FactorLinf | Pipeline::LinfExtension => matches!(f, Family::LinfIdentity { .. }),
                Pipeline::Rosenthal | Pipeline::FactorL1 | Pipeline::Density | Pipeline::L1Extension => matches!(
                    f,
                    Family::L1Identity { .. } | Family::RademacherSpan { .. } | Family::RandomGaussian { .. }
                ),
                _ => true,
            };
            if !ok {
                return bad(format!("family '{}' does not fit pipeline '{}'", f.name(), self.pipeline.name()));
            }
        }
        Ok(())
    }

    pub fn resolved(&self) -> Result<Resolved, SchemaError> {
        let pr = &self.params;
        let extension = matches!(self.pipeline, Pipeline::L1Extension | Pipeline::LinfExtension);
        let r = Resolved {
            p: pr.p.unwrap_or(2.0),
            q: pr.q.unwrap_or(f64::INFINITY),
            t: pr.t.unwrap_or(2.0),
            eps: pr.eps.unwrap_or(0.5),
            tol: pr.tol.unwrap_or(if extension { 1e-3 } else { 1e-8 }),
            delta: pr.delta,
            gl: pr.gl.unwrap_or(1.0),
            samples: pr.samples.unwrap_or(1000),
            qs: pr.qs.clone().unwrap_or_else(|| vec![2.0, 4.0, 8.0, 16.0]),
            subspace: match &pr.subspace {
                None => None,
                Some(cols) => Some(columns("params.subspace", cols)?),
            },
        };
        if !(r.p > 1.0 && r.p.is_finite()) {
            return bad(format!("params.p must satisfy 1 < p < inf, got {}", r.p));
        }
        if !(r.q > r.p) {
            return bad(format!("params.q must exceed p, got q = {} and p = {}", r.q, r.p));
        }
        if !(r.t > 1.0 && r.t.is_finite()) {
            return bad(format!("params.t must satisfy 1 < t < inf, got {}", r.t));
        }
        if !(r.eps > 0.0 && r.eps < 1.0) {
            return bad(format!("params.eps must lie in (0,1), got {}", r.eps));
        }
        if !(r.tol > 0.0 && r.tol < 1.0) {
            return bad(format!("params.tol must lie in (0,1), got {}", r.tol));
        }
        if let Some(d) = r.delta {
            if !(d > 0.0 && d <= 1.0) {
                return bad(format!("params.delta must lie in (0,1], got {d}"));
            }
        }
        if !(r.gl >= 1.0 && r.gl.is_finite()) {
            return bad(format!("params.gl must be at least 1, got {}", r.gl));
        }
        if r.qs.is_empty() || r.qs.iter().any(|q| !(*q > 1.0 && q.is_finite())) {
            return bad("params.qs must be a nonempty list of finite exponents above 1");
        }
        Ok(r)
    }
}

fn columns(field: &str, cols: &[Vec<f64>]) -> Result<DMatrix<f64>, SchemaError> {
    let Some(first) = cols.first() else { return bad(format!("{field} is empty")) };
    let d = first.len();
    if d == 0 || cols.iter().any(|c| c.len() != d) {
        return bad(format!("{field}: vectors must be nonempty and of equal length"));
    }
    if cols.iter().flatten().any(|v| !v.is_finite()) {
        return bad(format!("{field}: entries must be finite"));
    }
    Ok(DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i]))
}

impl ExplicitOperator {
    pub fn build(&self) -> Result<LinOp, SchemaError> {
        let rows = self.matrix.len();
        if rows == 0 || self.matrix[0].is_empty() || self.matrix.iter().any(|r| r.len() != self.matrix[0].len()) {
            return bad("operator.matrix must be a nonempty rectangular list of rows");
        }
        let cols = self.matrix[0].len();
        let m = DMatrix::from_fn(rows, cols, |i, j| self.matrix[i][j]);
        let domain = match &self.domain_vertices {
            Some(v) => NormedSpace::from_reps(columns("operator.domain_vertices", v)?).map_err(|e| SchemaError(format!("operator.domain_vertices: {e}")))?,
            None => self.domain.space(cols),
        };
        let codomain = match (&self.weights, self.codomain) {
            (Some(w), None) => Codomain::Lebesgue {
                measure: MeasureSpace::new(w.clone()).map_err(|e| SchemaError(format!("operator.weights: {e}")))?,
                r: 1.0,
            },
            (None, Some(b)) => Codomain::Normed(b.space(rows)),
            _ => return bad("operator needs exactly one of `weights` and `codomain`"),
        };
        LinOp::new(domain, codomain, m).map_err(|e| SchemaError(format!("operator: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_q_and_defaults() {
        let s = Scenario::from_toml(
            "pipeline = \"density\"\n[operator]\nfamily = \"l1-identity\"\nd = 4\n[params]\nq = inf\n",
        )
        .unwrap();
        let r = s.resolved().unwrap();
        assert!(r.q.is_infinite() && r.p == 2.0 && s.trials == 1);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<Scenario>(&json).unwrap(), s);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_exponents() {
        assert!(Scenario::from_toml("pipeline = \"density\"\nbogus = 1\n").is_err());
        let q_le_p = "pipeline = \"rosenthal\"\n[operator]\nfamily = \"l1-identity\"\nd = 4\n[params]\np = 3.0\nq = 2.0\n";
        assert!(Scenario::from_toml(q_le_p).unwrap_err().0.contains("q must exceed p"));
        let extra = "pipeline = \"rosenthal\"\n[operator]\nfamily = \"l1-identity\"\nd = 4\ncolour = 1\n";
        assert!(Scenario::from_toml(extra).is_err());
    }

    #[test]
    fn explicit_operator() {
        let s = Scenario::from_toml(
            "pipeline = \"rosenthal\"\n[operator]\nmatrix = [[2.0, 0.0], [0.0, 2.0]]\nweights = [0.5, 0.5]\n",
        )
        .unwrap();
        let Some(OperatorSpec::Explicit(e)) = &s.operator else { panic!() };
        assert_eq!(e.build().unwrap().matrix[(1, 1)], 2.0);
        let both = "pipeline = \"rosenthal\"\n[operator]\nmatrix = [[1.0]]\nweights = [1.0]\ncodomain = \"l1\"\n";
        assert!(Scenario::from_toml(both).is_err());
    }
}
