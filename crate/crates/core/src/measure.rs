//! Finite atomic measure spaces, functions on them and atom sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conjugate exponent `t/(t-1)`; `conjugate(∞) = 1`.
pub fn conjugate(t: f64) -> Result<f64> {
    if t.is_nan() || t <= 1.0 {
        return Err(Error::Domain(format!("conjugate exponent needs t > 1, got {t}")));
    }
    if t.is_infinite() {
        return Ok(1.0);
    }
    Ok(t / (t - 1.0))
}

/// Conjugate on the closed range `[1, ∞]`, with `1* = ∞`.
pub fn conjugate_closed(t: f64) -> Result<f64> {
    if t == 1.0 {
        Ok(f64::INFINITY)
    } else {
        conjugate(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MeasureSpace {
    weights: Vec<f64>,
}

impl TryFrom<Vec<f64>> for MeasureSpace {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        MeasureSpace::new(w)
    }
}

impl From<MeasureSpace> for Vec<f64> {
    fn from(m: MeasureSpace) -> Self {
        m.weights
    }
}

impl MeasureSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("measure space needs at least one atom".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Domain(format!("atom {i} has non-positive weight {w}")));
        }
        Ok(Self { weights })
    }

    /// `n` atoms of mass `1/n`.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    /// `n` atoms of mass one.
    pub fn counting(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atom_count(&self) -> usize {
        self.weights.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= 1e-12
    }

    pub fn mass(&self, set: &AtomSet) -> f64 {
        set.iter().map(|a| self.weights[a]).sum()
    }

    /// The sub-measure on the listed atoms, in the given order.
    pub fn restrict(&self, atoms: &[usize]) -> Result<Self> {
        Self::new(atoms.iter().map(|&a| self.weights[a]).collect())
    }

    /// The measure `φ dμ`.
    pub fn reweight(&self, phi: &[f64]) -> Result<Self> {
        if phi.len() != self.atom_count() {
            return Err(Error::Shape(format!(
                "density has {} entries for {} atoms",
                phi.len(),
                self.atom_count()
            )));
        }
        Self::new(self.weights.iter().zip(phi).map(|(w, p)| w * p).collect())
    }

    pub fn integral(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    /// `‖f‖_r` with respect to this measure.
    pub fn lp_norm(&self, f: &[f64], r: f64) -> Result<f64> {
        if f.len() != self.atom_count() {
            return Err(Error::Shape(format!(
                "function has {} values for {} atoms",
                f.len(),
                self.atom_count()
            )));
        }
        lp_norm_weighted(&self.weights, f, r)
    }
}

/// `(Σ w_a |f_a|^r)^{1/r}`, or `max |f_a|` at `r = ∞`.
pub(crate) fn lp_norm_weighted(weights: &[f64], f: &[f64], r: f64) -> Result<f64> {
    if r.is_nan() || r < 1.0 {
        return Err(Error::Domain(format!("L_r norm needs r >= 1, got {r}")));
    }
    if r.is_infinite() {
        return Ok(f.iter().fold(0.0_f64, |m, x| m.max(x.abs())));
    }
    if r == 1.0 {
        return Ok(weights.iter().zip(f).map(|(w, x)| w * x.abs()).sum());
    }
    // Scale by the sup to keep large exponents finite.
    let top = f.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if top == 0.0 {
        return Ok(0.0);
    }
    let s: f64 = weights
        .iter()
        .zip(f)
        .map(|(w, x)| w * (x.abs() / top).powf(r))
        .sum();
    Ok(top * s.powf(1.0 / r))
}

pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A real function on the atoms of a measure space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fun {
    pub values: Vec<f64>,
}

impl Fun {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn abs(&self) -> Fun {
        Fun::new(self.values.iter().map(|x| x.abs()).collect())
    }

    pub fn sgn(&self) -> Fun {
        Fun::new(self.values.iter().map(|&x| sgn(x)).collect())
    }

    pub fn mul(&self, other: &Fun) -> Fun {
        Fun::new(self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect())
    }

    /// `1_E f`.
    pub fn restrict(&self, set: &AtomSet) -> Fun {
        Fun::new(
            self.values
                .iter()
                .enumerate()
                .map(|(a, &x)| if set.contains(a) { x } else { 0.0 })
                .collect(),
        )
    }

    pub fn norm(&self, mu: &MeasureSpace, r: f64) -> Result<f64> {
        mu.lp_norm(&self.values, r)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AtomSet(BTreeSet<usize>);

impl AtomSet {
    pub fn empty() -> Self {
        Self(BTreeSet::new())
    }

    pub fn contains(&self, a: usize) -> bool {
        self.0.contains(&a)
    }

    pub fn insert(&mut self, a: usize) -> bool {
        self.0.insert(a)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn union(&self, other: &AtomSet) -> AtomSet {
        AtomSet(self.0.union(&other.0).copied().collect())
    }

    pub fn difference(&self, other: &AtomSet) -> AtomSet {
        AtomSet(self.0.difference(&other.0).copied().collect())
    }

    pub fn is_disjoint(&self, other: &AtomSet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    /// Atoms of `0..n` outside the set.
    pub fn complement(&self, n: usize) -> AtomSet {
        (0..n).filter(|a| !self.contains(*a)).collect()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }
}

impl FromIterator<usize> for AtomSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// True iff the sets are pairwise disjoint.
pub fn pairwise_disjoint(sets: &[AtomSet]) -> bool {
    let mut seen = BTreeSet::new();
    sets.iter().all(|s| s.iter().all(|a| seen.insert(a)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_values() {
        assert_eq!(conjugate(2.0).unwrap(), 2.0);
        assert_eq!(conjugate(f64::INFINITY).unwrap(), 1.0);
        assert!((conjugate(4.0 / 3.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(conjugate(1.0).is_err());
        assert!(conjugate(0.5).is_err());
        assert_eq!(conjugate_closed(1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn norms_on_two_atoms() {
        let mu = MeasureSpace::new(vec![0.5, 0.5]).unwrap();
        assert!((mu.lp_norm(&[1.0, 1.0], 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((mu.lp_norm(&[2.0, 0.0], 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mu.lp_norm(&[2.0, 0.0], f64::INFINITY).unwrap(), 2.0);
        assert!(mu.lp_norm(&[1.0, 0.0], 0.5).is_err());
        assert!(mu.is_probability());
    }

    #[test]
    fn huge_exponent_stays_finite() {
        let mu = MeasureSpace::uniform(3).unwrap();
        let v = mu.lp_norm(&[1e3, 2e3, 5.0], 1000.0).unwrap();
        assert!(v.is_finite() && v <= 2e3 && v > 1.99e3);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(MeasureSpace::new(vec![0.5, 0.0]).is_err());
        assert!(MeasureSpace::new(vec![]).is_err());
        assert!(MeasureSpace::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn atom_set_ops() {
        let a: AtomSet = [0, 2].into_iter().collect();
        let b: AtomSet = [1].into_iter().collect();
        assert!(a.is_disjoint(&b));
        assert!(pairwise_disjoint(&[a.clone(), b.clone()]));
        assert!(!pairwise_disjoint(&[a.clone(), a.clone()]));
        assert_eq!(a.complement(4), [1, 3].into_iter().collect());
        let f = Fun::new(vec![1.0, -2.0, 3.0]);
        assert_eq!(f.restrict(&a).values, vec![1.0, 0.0, 3.0]);
        assert_eq!(Fun::new(vec![0.0, -1.0]).sgn().values, vec![0.0, -1.0]);
    }
}
