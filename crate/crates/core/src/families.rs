//! Named operator families used by the scenario runner and the test suites.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kashin::kashin_operator;
use crate::measure::MeasureSpace;
use crate::op::{Codomain, LinOp};
use crate::rng::SplitRng;
use crate::space::NormedSpace;

pub const MAX_RADEMACHER_N: usize = 12;
/// Above this the `{−1,0,1}ⁿ` vertex list is replaced by signs and coordinates.
const FULL_TERNARY_N: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Family {
    /// `ℓ₁ᵈ → L₁` of the uniform `d`-atom space, `e_i ↦ d·1_{i}`: an isometry.
    L1Identity { d: usize },
    /// The identity of `ℓ∞ᵈ` regarded as `ℓ∞ᵈ → ℓ∞ᵈ`.
    LinfIdentity { d: usize },
    /// The first `n` Rademacher functions on the uniform `2ⁿ`-atom cube, with
    /// their span carrying the induced `L₁` norm.
    RademacherSpan { n: usize },
    /// Gaussian matrix from `ℓ₁^dims` (or `ℓ∞^dims`) into `L₁` of random weights.
    RandomGaussian {
        dims: usize,
        atoms: usize,
        #[serde(default)]
        linf_domain: bool,
    },
    /// `v: ℓ₂ⁿ → L₁^{3n}/E₂⊥` from a random Kashin-type pair.
    Kashin {
        n: usize,
        #[serde(default = "default_restarts")]
        restarts: usize,
    },
}

fn default_restarts() -> usize {
    16
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::L1Identity { .. } => "l1-identity",
            Family::LinfIdentity { .. } => "linf-identity",
            Family::RademacherSpan { .. } => "rademacher-span",
            Family::RandomGaussian { .. } => "random-gaussian",
            Family::Kashin { .. } => "kashin",
        }
    }

    pub fn generate(&self, seed: u64) -> Result<LinOp> {
        match *self {
            Family::L1Identity { d } => l1_identity(d),
            Family::LinfIdentity { d } => linf_identity(d),
            Family::RademacherSpan { n } => rademacher_span(n),
            Family::RandomGaussian { dims, atoms, linf_domain } => random_gaussian(dims, atoms, linf_domain, seed),
            Family::Kashin { n, restarts } => {
                let (op, _) = kashin_operator(n, seed, restarts, 0)?;
                LinOp::new(NormedSpace::l2(n), Codomain::Normed(op.f_n), op.v)
            }
        }
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Domain(format!("{name} must be positive")));
    }
    Ok(())
}

pub fn l1_identity(d: usize) -> Result<LinOp> {
    positive("d", d)?;
    LinOp::into_l1(NormedSpace::l1(d), MeasureSpace::uniform(d)?, DMatrix::identity(d, d) * d as f64)
}

pub fn linf_identity(d: usize) -> Result<LinOp> {
    positive("d", d)?;
    LinOp::new(NormedSpace::linf(d), Codomain::Normed(NormedSpace::linf(d)), DMatrix::identity(d, d))
}

/// Rows are atoms `ω ∈ {±1}ⁿ`, columns the Rademacher functions `r_i(ω) = ω_i`.
pub fn rademacher_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(1 << n, n, |w, i| if w >> i & 1 == 1 { -1.0 } else { 1.0 })
}

/// The span of the Rademachers with its `L₁` norm. The ball is represented by the
/// normalized `{−1,0,1}ⁿ` directions (signs and coordinates only when `n > 8`),
/// an inscribed polytope, so constants measured on it are lower estimates.
pub fn rademacher_span(n: usize) -> Result<LinOp> {
    positive("n", n)?;
    if n > MAX_RADEMACHER_N {
        return Err(Error::Capacity { what: "rademacher-span", detail: format!("n = {n} exceeds {MAX_RADEMACHER_N}") });
    }
    let m = rademacher_matrix(n);
    let mu = MeasureSpace::uniform(1 << n)?;
    let mut reps = Vec::new();
    let mut push = |v: Vec<f64>| -> Result<()> {
        let dv = DVector::from_vec(v);
        let img = &m * &dv;
        let norm = mu.lp_norm(img.as_slice(), 1.0)?;
        reps.push(dv / norm);
        Ok(())
    };
    if n <= FULL_TERNARY_N {
        for code in 0..3usize.pow(n as u32) {
            let v: Vec<f64> = (0..n).map(|k| (code / 3usize.pow(k as u32) % 3) as f64 - 1.0).collect();
            // One of each ±v pair: first nonzero coordinate positive.
            if v.iter().find(|x| **x != 0.0) == Some(&1.0) {
                push(v)?;
            }
        }
    } else {
        for i in 0..n {
            push((0..n).map(|k| (k == i) as u8 as f64).collect())?;
        }
        for code in 0..1usize << (n - 1) {
            push((0..n).map(|k| if k > 0 && code >> (k - 1) & 1 == 1 { -1.0 } else { 1.0 }).collect())?;
        }
    }
    let domain = NormedSpace::from_reps(DMatrix::from_columns(&reps))?;
    LinOp::into_l1(domain, mu, m)
}

pub fn random_gaussian(dims: usize, atoms: usize, linf_domain: bool, seed: u64) -> Result<LinOp> {
    positive("dims", dims)?;
    positive("atoms", atoms)?;
    let mut rng = SplitRng::new(seed);
    let w: Vec<f64> = (0..atoms).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mu = MeasureSpace::new(w.iter().map(|x| x / total).collect())?;
    let m = DMatrix::from_fn(atoms, dims, |_, _| StandardNormal.sample(&mut rng));
    let domain = if linf_domain { NormedSpace::linf(dims) } else { NormedSpace::l1(dims) };
    LinOp::into_l1(domain, mu, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rademacher_two_is_orthogonal_pm_one() {
        let t = rademacher_span(2).unwrap();
        assert_eq!(t.measure().unwrap().weights(), &[0.25; 4]);
        let g = t.matrix.transpose() * &t.matrix;
        assert_eq!(g, DMatrix::identity(2, 2) * 4.0);
        assert!(t.matrix.iter().all(|v| v.abs() == 1.0));
    }

    #[test]
    fn l1_identity_columns_have_unit_mass() {
        let t = l1_identity(4).unwrap();
        let mu = t.measure().unwrap();
        for c in t.matrix.column_iter() {
            assert!((mu.lp_norm(c.as_slice(), 1.0).unwrap() - 1.0).abs() < 1e-15);
        }
        assert_eq!(t.matrix[(2, 2)], 4.0);
    }

    #[test]
    fn gaussian_is_reproducible() {
        let a = random_gaussian(3, 5, false, 17).unwrap();
        let b = random_gaussian(3, 5, false, 17).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_gaussian(3, 5, false, 18).unwrap());
    }

    #[test]
    fn guards() {
        assert!(matches!(rademacher_span(13), Err(Error::Capacity { .. })));
        assert!(l1_identity(0).is_err());
    }

    #[test]
    fn family_roundtrips_through_json() {
        let f = Family::Kashin { n: 2, restarts: 4 };
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<Family>(&s).unwrap(), f);
        let op = f.generate(3).unwrap();
        assert_eq!((op.matrix.nrows(), op.matrix.ncols()), (6, 2));
    }
}
