//! Linear operators between normed spaces and `L_r(μ)` spaces, with exact norms
//! wherever the geometry permits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{lp_norm_weighted, MeasureSpace};
use crate::space::{Ball, NormedSpace, MAX_SIGN_CUBE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Codomain {
    Lebesgue { measure: MeasureSpace, r: f64 },
    Normed(NormedSpace),
}

impl Codomain {
    pub fn dim(&self) -> usize {
        match self {
            Codomain::Lebesgue { measure, .. } => measure.atom_count(),
            Codomain::Normed(s) => s.dim(),
        }
    }

    pub fn norm(&self, y: &[f64]) -> Result<f64> {
        match self {
            Codomain::Lebesgue { measure, r } => measure.lp_norm(y, *r),
            Codomain::Normed(s) => s.norm(y),
        }
    }

    pub fn measure(&self) -> Option<&MeasureSpace> {
        match self {
            Codomain::Lebesgue { measure, .. } => Some(measure),
            Codomain::Normed(_) => None,
        }
    }
}

/// `‖T‖` together with a maximizing domain vector. `certified` is false only for
/// the power-iteration estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormCertificate {
    pub value: f64,
    pub certified: bool,
    pub witness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinOp {
    pub domain: NormedSpace,
    pub codomain: Codomain,
    pub matrix: DMatrix<f64>,
}

impl LinOp {
    pub fn new(domain: NormedSpace, codomain: Codomain, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() != domain.dim() || matrix.nrows() != codomain.dim() {
            return Err(Error::Shape(format!(
                "matrix is {}x{} but the spaces need {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                codomain.dim(),
                domain.dim()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("operator matrix has non-finite entries".into()));
        }
        Ok(Self { domain, codomain, matrix })
    }

    /// An operator into `L₁(μ)`.
    pub fn into_l1(domain: NormedSpace, measure: MeasureSpace, matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(domain, Codomain::Lebesgue { measure, r: 1.0 }, matrix)
    }

    pub fn measure(&self) -> Option<&MeasureSpace> {
        self.codomain.measure()
    }

    /// Same operator, regarded as taking values in `L_r` of the same measure.
    pub fn with_exponent(&self, r: f64) -> Result<LinOp> {
        match &self.codomain {
            Codomain::Lebesgue { measure, .. } => Ok(LinOp {
                domain: self.domain.clone(),
                codomain: Codomain::Lebesgue { measure: measure.clone(), r },
                matrix: self.matrix.clone(),
            }),
            Codomain::Normed(_) => Err(Error::Domain("codomain is not an L_r space".into())),
        }
    }

    pub fn scaled(&self, c: f64) -> LinOp {
        LinOp { matrix: &self.matrix * c, ..self.clone() }
    }

    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(x)
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &LinOp) -> Result<LinOp> {
        if inner.codomain.dim() != self.domain.dim() {
            return Err(Error::Shape("composition dimensions disagree".into()));
        }
        LinOp::new(inner.domain.clone(), self.codomain.clone(), &self.matrix * &inner.matrix)
    }

    pub fn rank(&self) -> usize {
        let scale = self.matrix.amax();
        if scale == 0.0 {
            return 0;
        }
        self.matrix.clone().rank(1e-10 * scale * self.matrix.nrows().max(self.matrix.ncols()) as f64)
    }

    /// Operator norm from the domain ball into the codomain norm.
    pub fn op_norm(&self) -> Result<NormCertificate> {
        let n = self.domain.dim();
        if self.matrix.amax() == 0.0 {
            return Ok(NormCertificate { value: 0.0, certified: true, witness: vec![0.0; n] });
        }
        if self.domain.is_enumerable() {
            // A convex function on a polytope peaks at a vertex.
            let reps = self.domain.vertex_reps()?;
            let mut best = (f64::NEG_INFINITY, 0);
            for (j, v) in reps.column_iter().enumerate() {
                let y = &self.matrix * v;
                let val = self.codomain.norm(y.as_slice())?;
                if val > best.0 {
                    best = (val, j);
                }
            }
            return Ok(NormCertificate {
                value: best.0,
                certified: true,
                witness: reps.column(best.1).iter().copied().collect(),
            });
        }
        match self.domain.ball() {
            Ball::Euclidean => self.euclidean_domain_norm(),
            _ => Err(Error::Capacity {
                what: "operator norm",
                detail: "domain ball is neither enumerable nor Euclidean".into(),
            }),
        }
    }

    /// Euclidean domain: `‖T‖ = max over dual-ball vertices w of ‖Tᵀw‖₂` when the
    /// codomain's dual ball is a listable polytope.
    fn euclidean_domain_norm(&self) -> Result<NormCertificate> {
        let dual_vertices: Option<DMatrix<f64>> = match &self.codomain {
            Codomain::Lebesgue { measure, r } if *r == 1.0 => {
                if measure.atom_count() > MAX_SIGN_CUBE {
                    return Err(Error::Capacity {
                        what: "operator norm",
                        detail: format!("{} atoms exceed the sign-pattern guard", measure.atom_count()),
                    });
                }
                let signs = NormedSpace::linf(measure.atom_count()).vertex_reps()?;
                let w = DMatrix::from_diagonal(&DVector::from_column_slice(measure.weights()));
                Some(w * signs)
            }
            Codomain::Lebesgue { measure, r } if r.is_infinite() => {
                Some(DMatrix::identity(measure.atom_count(), measure.atom_count()))
            }
            Codomain::Normed(s) if !matches!(s.ball(), Ball::Euclidean | Ball::Quotient { .. }) => {
                let d = s.dual()?;
                if d.is_enumerable() {
                    Some(d.vertex_reps()?)
                } else {
                    None
                }
            }
            _ => None,
        };
        if let Some(wv) = dual_vertices {
            let mut best = (f64::NEG_INFINITY, DVector::zeros(0));
            for w in wv.column_iter() {
                let g = self.matrix.tr_mul(&w.into_owned());
                let v = g.norm();
                if v > best.0 {
                    best = (v, g);
                }
            }
            let witness = (&best.1 / best.0).iter().copied().collect();
            return Ok(NormCertificate { value: best.0, certified: true, witness });
        }
        // Hilbert-space targets: largest singular value.
        let weighted = match &self.codomain {
            Codomain::Normed(s) if matches!(s.ball(), Ball::Euclidean) => Some(self.matrix.clone()),
            Codomain::Lebesgue { measure, r } if *r == 2.0 => {
                let sq = DVector::from_iterator(measure.atom_count(), measure.weights().iter().map(|w| w.sqrt()));
                Some(DMatrix::from_diagonal(&sq) * &self.matrix)
            }
            _ => None,
        };
        if let Some(m) = weighted {
            let svd = m.svd(false, true);
            let (k, &s) = svd
                .singular_values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            let vt = svd.v_t.unwrap();
            return Ok(NormCertificate { value: s, certified: true, witness: vt.row(k).iter().copied().collect() });
        }
        match &self.codomain {
            Codomain::Lebesgue { measure, r } => Ok(self.power_iteration(measure, *r)),
            Codomain::Normed(_) => Err(Error::Capacity {
                what: "operator norm",
                detail: "no exact route for this codomain".into(),
            }),
        }
    }

    /// Multistart fixed-point iteration for `max ‖Tx‖_r` on the Euclidean sphere.
    fn power_iteration(&self, measure: &MeasureSpace, r: f64) -> NormCertificate {
        let n = self.domain.dim();
        let w = measure.weights();
        let eval = |x: &DVector<f64>| lp_norm_weighted(w, (&self.matrix * x).as_slice(), r).unwrap_or(0.0);
        let mut starts: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_fn(n, |k, _| (k == i) as u8 as f64)).collect();
        let svd = self.matrix.clone().svd(false, true);
        if let Some(vt) = svd.v_t {
            starts.extend(vt.row_iter().map(|row| row.transpose()));
        }
        let mut best = (f64::NEG_INFINITY, DVector::zeros(n));
        for mut x in starts {
            let mut val = eval(&x);
            for _ in 0..500 {
                let y = &self.matrix * &x;
                let top = y.amax();
                if top == 0.0 {
                    break;
                }
                let g = DVector::from_fn(y.len(), |a, _| w[a] * (y[a] / top).abs().powf(r - 1.0) * y[a].signum());
                let mut nx = self.matrix.tr_mul(&g);
                let nn = nx.norm();
                if nn == 0.0 {
                    break;
                }
                nx /= nn;
                let nv = eval(&nx);
                if nv <= val * (1.0 + 1e-14) {
                    if nv > val {
                        x = nx;
                        val = nv;
                    }
                    break;
                }
                x = nx;
                val = nv;
            }
            if val > best.0 {
                best = (val, x);
            }
        }
        NormCertificate { value: best.0, certified: false, witness: best.1.iter().copied().collect() }
    }

    /// The adjoint between dual spaces. For `L₁(μ)` (resp. `L∞(μ)`) targets the
    /// pairing is `∫ f g dμ`, so the matrix picks up a factor `diag(μ)`.
    pub fn adjoint(&self) -> Result<LinOp> {
        let x_dual = self.domain.dual()?;
        match &self.codomain {
            Codomain::Normed(y) => LinOp::new(y.dual()?, Codomain::Normed(x_dual), self.matrix.transpose()),
            Codomain::Lebesgue { measure, r } => {
                let m = measure.atom_count();
                let mu = DMatrix::from_diagonal(&DVector::from_column_slice(measure.weights()));
                let dom = if *r == 1.0 {
                    NormedSpace::linf(m)
                } else if r.is_infinite() {
                    let inv = DVector::from_iterator(m, measure.weights().iter().map(|w| 1.0 / w));
                    NormedSpace::from_reps(DMatrix::from_diagonal(&inv))?
                } else {
                    return Err(Error::Domain(format!("adjoint into L_{r} is not provided")));
                };
                LinOp::new(dom, Codomain::Normed(x_dual), self.matrix.transpose() * mu)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> MeasureSpace {
        MeasureSpace::new(vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn identity_into_l1_has_norm_one() {
        let t = LinOp::into_l1(NormedSpace::l1(2), half(), DMatrix::from_diagonal_element(2, 2, 2.0)).unwrap();
        let n = t.op_norm().unwrap();
        assert!((n.value - 1.0).abs() < 1e-15 && n.certified);
        let z = LinOp::into_l1(NormedSpace::l1(2), half(), DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(z.op_norm().unwrap().value, 0.0);
    }

    #[test]
    fn euclidean_domain_into_l1_matches_sampling() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.3, -2.0]);
        let mu = MeasureSpace::new(vec![0.2, 0.3, 0.5]).unwrap();
        let t = LinOp::into_l1(NormedSpace::l2(2), mu.clone(), m.clone()).unwrap();
        let n = t.op_norm().unwrap();
        let mut best: f64 = 0.0;
        for k in 0..20000 {
            let th = k as f64 * std::f64::consts::PI / 20000.0;
            let y = &m * DVector::from_vec(vec![th.cos(), th.sin()]);
            best = best.max(mu.lp_norm(y.as_slice(), 1.0).unwrap());
        }
        assert!(n.value >= best - 1e-12);
        assert!(n.value - best < 1e-6);
        let w = t.apply(&n.witness);
        assert!((mu.lp_norm(w.as_slice(), 1.0).unwrap() - n.value).abs() < 1e-12);
    }

    #[test]
    fn euclidean_routes_agree() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let mu = MeasureSpace::counting(2).unwrap();
        let t2 = LinOp::new(NormedSpace::l2(2), Codomain::Lebesgue { measure: mu.clone(), r: 2.0 }, m.clone()).unwrap();
        let te = LinOp::new(NormedSpace::l2(2), Codomain::Normed(NormedSpace::l2(2)), m.clone()).unwrap();
        let tp = LinOp::new(NormedSpace::l2(2), Codomain::Lebesgue { measure: mu, r: 2.0000001 }, m).unwrap();
        let a = t2.op_norm().unwrap().value;
        assert!((a - te.op_norm().unwrap().value).abs() < 1e-12);
        let p = tp.op_norm().unwrap();
        assert!(!p.certified);
        assert!((p.value - a).abs() < 1e-5);
    }

    #[test]
    fn adjoint_norms_agree() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.3, -2.0]);
        let mu = MeasureSpace::new(vec![0.2, 0.3, 0.5]).unwrap();
        let t = LinOp::into_l1(NormedSpace::l1(2), mu, m).unwrap();
        let a = t.adjoint().unwrap();
        assert!((a.op_norm().unwrap().value - t.op_norm().unwrap().value).abs() < 1e-12);
        let u = LinOp::new(
            NormedSpace::linf(3),
            Codomain::Normed(NormedSpace::l2(2)),
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, -1.0, 1.0, 0.0]),
        )
        .unwrap();
        let ua = u.adjoint().unwrap();
        assert!((ua.op_norm().unwrap().value - u.op_norm().unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        assert!(LinOp::into_l1(NormedSpace::l1(3), half(), DMatrix::zeros(2, 2)).is_err());
    }
}
