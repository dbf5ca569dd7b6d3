//! Finite-dimensional normed spaces given by an explicit unit ball.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp;
use crate::polytope::{symmetric_facets, MAX_FACET_DIM};

pub const MAX_SIGN_CUBE: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Ball {
    /// `conv(±columns)`; only one vector of each `±v` pair is stored.
    VertexList { reps: DMatrix<f64> },
    /// Unit ball of ℓ∞ᵈ.
    SignCube,
    /// Unit ball of ℓ₁ᵈ.
    CrossPolytope,
    Euclidean,
    /// Unit ball of `L₁(weights)/span(kernel)`. Elements are represented by
    /// vectors of the ambient space.
    Quotient { weights: Vec<f64>, kernel: DMatrix<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormedSpace {
    dim: usize,
    ball: Ball,
    #[serde(skip)]
    facets: OnceLock<std::result::Result<DMatrix<f64>, Error>>,
}

impl PartialEq for NormedSpace {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.ball == other.ball
    }
}

impl NormedSpace {
    fn with_ball(dim: usize, ball: Ball) -> Self {
        Self { dim, ball, facets: OnceLock::new() }
    }

    pub fn l1(d: usize) -> Self {
        Self::with_ball(d, Ball::CrossPolytope)
    }

    pub fn linf(d: usize) -> Self {
        Self::with_ball(d, Ball::SignCube)
    }

    pub fn l2(d: usize) -> Self {
        Self::with_ball(d, Ball::Euclidean)
    }

    /// The space whose ball is `conv(±columns of reps)`.
    pub fn from_reps(reps: DMatrix<f64>) -> Result<Self> {
        let dim = reps.nrows();
        if dim == 0 || reps.ncols() == 0 {
            return Err(Error::Domain("empty vertex list".into()));
        }
        if reps.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite vertex coordinate".into()));
        }
        if reps.clone().rank(1e-10 * reps.amax()) < dim {
            return Err(Error::Domain("vertex list does not span the space".into()));
        }
        Ok(Self::with_ball(dim, Ball::VertexList { reps }))
    }

    /// Builds from a full symmetric list (`v` listed iff `−v` is), checking symmetry.
    pub fn from_symmetric_vertices(vertices: &DMatrix<f64>) -> Result<Self> {
        let cols: Vec<DVector<f64>> = vertices.column_iter().map(|c| c.into_owned()).collect();
        let tol = 1e-12 * (1.0 + vertices.amax());
        let mut reps: Vec<DVector<f64>> = Vec::new();
        for c in &cols {
            if !cols.iter().any(|d| (c + d).amax() <= tol) {
                return Err(Error::Domain("vertex list is not symmetric".into()));
            }
            if !reps.iter().any(|r| (r - c).amax() <= tol || (r + c).amax() <= tol) {
                reps.push(c.clone());
            }
        }
        Self::from_reps(DMatrix::from_columns(&reps))
    }

    pub fn quotient(weights: Vec<f64>, kernel: DMatrix<f64>) -> Result<Self> {
        if kernel.nrows() != weights.len() {
            return Err(Error::Shape("kernel rows must match the ambient dimension".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Domain("quotient weights must be positive".into()));
        }
        Ok(Self::with_ball(weights.len(), Ball::Quotient { weights, kernel }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ball(&self) -> &Ball {
        &self.ball
    }

    /// True when the unit ball is a polytope whose vertices can be listed.
    pub fn is_enumerable(&self) -> bool {
        match self.ball {
            Ball::VertexList { .. } | Ball::CrossPolytope => true,
            Ball::SignCube => self.dim <= MAX_SIGN_CUBE,
            _ => false,
        }
    }

    /// One vertex of each `±v` pair of the unit ball, as columns.
    pub fn vertex_reps(&self) -> Result<DMatrix<f64>> {
        let d = self.dim;
        match &self.ball {
            Ball::VertexList { reps } => Ok(reps.clone()),
            Ball::CrossPolytope => Ok(DMatrix::identity(d, d)),
            Ball::SignCube => {
                if d > MAX_SIGN_CUBE {
                    return Err(Error::Capacity {
                        what: "sign-cube enumeration",
                        detail: format!("dimension {d} exceeds {MAX_SIGN_CUBE}"),
                    });
                }
                let count = 1usize << (d - 1);
                Ok(DMatrix::from_fn(d, count, |i, k| {
                    if i > 0 && k & (1 << (i - 1)) != 0 {
                        -1.0
                    } else {
                        1.0
                    }
                }))
            }
            Ball::Euclidean | Ball::Quotient { .. } => Err(Error::Capacity {
                what: "vertex enumeration",
                detail: "unit ball is not a polytope with listed vertices".into(),
            }),
        }
    }

    fn facets(&self) -> Result<&DMatrix<f64>> {
        let Ball::VertexList { reps } = &self.ball else {
            return Err(Error::Domain("facets are only computed for vertex lists".into()));
        };
        self.facets
            .get_or_init(|| symmetric_facets(reps))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!("vector of length {} in dimension {}", x.len(), self.dim)));
        }
        match &self.ball {
            Ball::SignCube => Ok(x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))),
            Ball::CrossPolytope => Ok(x.iter().map(|v| v.abs()).sum()),
            Ball::Euclidean => Ok(x.iter().map(|v| v * v).sum::<f64>().sqrt()),
            Ball::Quotient { weights, kernel } => lp::quotient_norm(weights, kernel, x, true),
            Ball::VertexList { reps } => {
                if self.dim <= MAX_FACET_DIM {
                    if let Ok(f) = self.facets() {
                        let xv = DVector::from_column_slice(x);
                        return Ok(f.column_iter().fold(0.0_f64, |m, a| m.max(a.dot(&xv).abs())));
                    }
                }
                lp::symmetric_gauge(reps, x)
            }
        }
    }

    /// Norm of `x` as a functional on this space: `max_{‖v‖≤1} |⟨v, x⟩|`.
    pub fn dual_norm(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!("vector of length {} in dimension {}", x.len(), self.dim)));
        }
        match &self.ball {
            Ball::SignCube => Ok(x.iter().map(|v| v.abs()).sum()),
            Ball::CrossPolytope => Ok(x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))),
            Ball::Euclidean => Ok(x.iter().map(|v| v * v).sum::<f64>().sqrt()),
            Ball::VertexList { reps } => {
                let xv = DVector::from_column_slice(x);
                Ok(reps.column_iter().fold(0.0_f64, |m, r| m.max(r.dot(&xv).abs())))
            }
            Ball::Quotient { .. } => Err(Error::Domain("dual norm of a quotient space is not provided".into())),
        }
    }

    /// The dual space under the standard coordinate pairing.
    pub fn dual(&self) -> Result<NormedSpace> {
        match &self.ball {
            Ball::SignCube => Ok(Self::l1(self.dim)),
            Ball::CrossPolytope => Ok(Self::linf(self.dim)),
            Ball::Euclidean => Ok(Self::l2(self.dim)),
            Ball::VertexList { .. } => {
                let dual = Self::from_reps(self.facets()?.clone())?;
                if let Ball::VertexList { reps } = &self.ball {
                    // The polar's gauge is the max over the original vertices.
                    let _ = dual.facets.set(Ok(reps.clone()));
                }
                Ok(dual)
            }
            Ball::Quotient { .. } => Err(Error::Domain("dual of a quotient space is not provided".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_norms() {
        let x = [3.0, -4.0];
        assert_eq!(NormedSpace::l1(2).norm(&x).unwrap(), 7.0);
        assert_eq!(NormedSpace::linf(2).norm(&x).unwrap(), 4.0);
        assert_eq!(NormedSpace::l2(2).norm(&x).unwrap(), 5.0);
        assert_eq!(NormedSpace::l1(2).dual_norm(&x).unwrap(), 4.0);
    }

    #[test]
    fn vertex_list_matches_cross_polytope() {
        let s = NormedSpace::from_reps(DMatrix::identity(3, 3)).unwrap();
        let x = [0.5, -1.5, 2.0];
        assert!((s.norm(&x).unwrap() - 4.0).abs() < 1e-12);
        let d = s.dual().unwrap();
        assert!((d.norm(&x).unwrap() - 2.0).abs() < 1e-12);
        assert!((d.dual_norm(&x).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_vertex_input() {
        let v = DMatrix::from_column_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 2.0, 0.0, -2.0]);
        let s = NormedSpace::from_symmetric_vertices(&v).unwrap();
        assert_eq!(s.vertex_reps().unwrap().ncols(), 2);
        assert!((s.norm(&[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-12);
        let bad = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(NormedSpace::from_symmetric_vertices(&bad).is_err());
    }

    #[test]
    fn sign_cube_guard() {
        assert_eq!(NormedSpace::linf(3).vertex_reps().unwrap().ncols(), 4);
        assert!(matches!(NormedSpace::linf(25).vertex_reps(), Err(Error::Capacity { .. })));
        assert!(NormedSpace::l2(2).vertex_reps().is_err());
    }

    #[test]
    fn gauge_fallback_agrees_with_facets() {
        let reps = DMatrix::from_fn(7, 9, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0 + if i == j { 5.0 } else { 0.0 });
        let s = NormedSpace::from_reps(reps.clone()).unwrap();
        let x: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let g = s.norm(&x).unwrap();
        let direct = lp::symmetric_gauge(&reps, &x).unwrap();
        assert!((g - direct).abs() < 1e-9);
    }
}
