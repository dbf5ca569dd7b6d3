//! Greedy extraction of vectors `z_i` and disjoint sets `F_i` on which `T z_i`
//! keeps a fixed share of its mass.

use serde::{Deserialize, Serialize};

use crate::density::{c1q, measure_of};
use crate::error::{Error, Result};
use crate::measure::{conjugate, AtomSet, MeasureSpace};
use crate::op::LinOp;

/// `σ = 1 − q*/p*`.
pub fn sigma(p: f64, q: f64) -> Result<f64> {
    check_exponents(p, q)?;
    Ok(1.0 - conjugate(q)? / conjugate(p)?)
}

pub(crate) fn check_exponents(p: f64, q: f64) -> Result<()> {
    if !(p > 1.0 && q > p) || p.is_infinite() {
        return Err(Error::Domain(format!("need 1 < p < q ≤ ∞, got p = {p}, q = {q}")));
    }
    Ok(())
}

/// `‖1_F g‖₁^σ ‖1_F g‖_q^{1−σ}`.
pub fn split_product(mu: &MeasureSpace, g: &[f64], f: &AtomSet, q: f64, sigma: f64) -> Result<f64> {
    let restricted: Vec<f64> = g.iter().enumerate().map(|(a, &v)| if f.contains(a) { v } else { 0.0 }).collect();
    let l1 = mu.lp_norm(&restricted, 1.0)?;
    let lq = mu.lp_norm(&restricted, q)?;
    Ok(l1.powf(sigma) * lq.powf(1.0 - sigma))
}

/// The level set `{|g| > γ} ∖ E` with `γ^{p−1} = κ^p/2`, checked against both
/// conclusions: `μ(F) < (2^{1/p}/κ)^{p*}` and the σ-product exceeds `2^{−1/p}κ`.
pub fn level_set_split(mu: &MeasureSpace, g: &[f64], e: &AtomSet, p: f64, q: f64, kappa: f64) -> Result<AtomSet> {
    let s = sigma(p, q)?;
    if g.len() != mu.atom_count() {
        return Err(Error::Shape("function length differs from the atom count".into()));
    }
    let l1 = mu.lp_norm(g, 1.0)?;
    if l1 > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("‖g‖₁ = {l1} > 1; rescale first")));
    }
    let outside: Vec<f64> = g.iter().enumerate().map(|(a, &v)| if e.contains(a) { 0.0 } else { v }).collect();
    let lp = mu.lp_norm(&outside, p)?;
    if !(kappa > 0.0 && lp > kappa) {
        return Err(Error::Hypothesis(format!("‖1_(~E) g‖_p = {lp} does not exceed κ = {kappa} > 0")));
    }
    let gamma = (kappa.powf(p) / 2.0).powf(1.0 / (p - 1.0));
    let f: AtomSet = (0..g.len()).filter(|&a| !e.contains(a) && g[a].abs() > gamma).collect();
    let cap = (2f64.powf(1.0 / p) / kappa).powf(conjugate(p)?);
    let mass = mu.mass(&f);
    if !(mass < cap) {
        return Err(Error::Alarm(format!("level set mass {mass} reaches the cap {cap}")));
    }
    let prod = split_product(mu, g, &f, q, s)?;
    let floor = 2f64.powf(-1.0 / p) * kappa;
    if !(prod > floor * (1.0 - 1e-12)) {
        return Err(Error::Alarm(format!("level set product {prod} does not exceed {floor}")));
    }
    Ok(f)
}

/// The domain vertex maximizing `‖1_(~E) T z‖_p`, with that value.
pub fn find_witness(t: &LinOp, e: &AtomSet, p: f64, kappa: f64) -> Result<(Vec<f64>, f64)> {
    let mu = measure_of(t)?;
    if t.matrix.amax() == 0.0 {
        return Err(Error::Hypothesis("T = 0 admits no κ > 0".into()));
    }
    let reps = t.domain.vertex_reps()?;
    let mut best = (f64::NEG_INFINITY, 0);
    for (j, v) in reps.column_iter().enumerate() {
        let mut y = &t.matrix * v;
        for a in e.iter() {
            y[a] = 0.0;
        }
        let val = mu.lp_norm(y.as_slice(), p)?;
        if val > best.0 {
            best = (val, j);
        }
    }
    if !(best.0 > kappa * (1.0 - 1e-9)) {
        return Err(Error::Alarm(format!(
            "no vertex has ‖1_(~E)Tz‖_p above κ = {kappa} (best {})",
            best.0
        )));
    }
    Ok((reps.column(best.1).iter().copied().collect(), best.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionItem {
    pub z: Vec<f64>,
    pub f: AtomSet,
    /// `‖1_F T z‖₁` for the normalized operator.
    pub l1_mass: f64,
    /// `‖1_F T z‖₁^σ ‖1_F T z‖_q^{1−σ}` for the normalized operator.
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConstants {
    pub p: f64,
    pub q: f64,
    pub sigma: f64,
    /// `‖T: Z → L₁‖` before normalization.
    pub norm_t: f64,
    /// Certified lower bound of `C_{1,p}` of the normalized operator.
    pub k: f64,
    pub k_upper: f64,
    /// `‖T: Z → L_p‖ / K`.
    pub c_cal: f64,
    pub kappa: f64,
    pub eta: f64,
    pub delta_cap: f64,
    /// `(K / (2^{2+1/p} 𝒞))^{p*}`.
    pub guaranteed_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub items: Vec<ExtractionItem>,
    pub constants: ExtractionConstants,
    pub m: usize,
}

impl ExtractionResult {
    pub fn sets(&self) -> Vec<AtomSet> {
        self.items.iter().map(|i| i.f.clone()).collect()
    }
}

/// Runs the greedy loop on `T/‖T‖` with `κ = K/2`, `η = (2𝒞)^{−p*}`, stopping at
/// the first step where the collected mass exceeds `η`.
pub fn rosenthal_extract(t: &LinOp, p: f64, q: f64, tol: f64) -> Result<ExtractionResult> {
    rosenthal_extract_with_kappa(t, p, q, tol, None)
}

/// As [`rosenthal_extract`], with an optional override of `κ` for experiments.
pub fn rosenthal_extract_with_kappa(t: &LinOp, p: f64, q: f64, tol: f64, kappa: Option<f64>) -> Result<ExtractionResult> {
    let s = sigma(p, q)?;
    let mu = measure_of(t)?;
    if !mu.is_probability() {
        return Err(Error::Domain("extraction needs a probability measure".into()));
    }
    let norm_t = t.with_exponent(1.0)?.op_norm()?.value;
    if norm_t == 0.0 {
        return Err(Error::Domain("T = 0".into()));
    }
    let tn = t.with_exponent(1.0)?.scaled(1.0 / norm_t);
    let cert = c1q(&tn, p, tol)?;
    let k = cert.lower;
    let norm_p = tn.with_exponent(p)?.op_norm()?.value;
    let c_cal = norm_p / k;
    let ps = conjugate(p)?;
    let kappa = kappa.unwrap_or(k / 2.0);
    if !(kappa > 0.0 && kappa < k) {
        return Err(Error::Domain(format!("κ must lie in (0, K) = (0, {k})")));
    }
    let eta = (c_cal * (1.0 - kappa / k).recip()).powf(-ps);
    let delta_cap = (2f64.powf(1.0 / p) / kappa).powf(ps);
    let guaranteed_m = (k / (2f64.powf(2.0 + 1.0 / p) * c_cal)).powf(ps);

    let mut items = Vec::new();
    let mut e = AtomSet::empty();
    while mu.mass(&e) <= eta {
        let (z, _) = find_witness(&tn, &e, p, kappa)?;
        let g = tn.apply(&z);
        let f = level_set_split(mu, g.as_slice(), &e, p, q, kappa)?;
        if f.is_empty() {
            return Err(Error::Alarm("level set came back empty".into()));
        }
        let restricted: Vec<f64> = g.iter().enumerate().map(|(a, &v)| if f.contains(a) { v } else { 0.0 }).collect();
        items.push(ExtractionItem {
            l1_mass: mu.lp_norm(&restricted, 1.0)?,
            product: split_product(mu, g.as_slice(), &f, q, s)?,
            z,
            f: f.clone(),
        });
        e = e.union(&f);
    }
    let m = items.len();
    if kappa == k / 2.0 && !(m as f64 > guaranteed_m) {
        return Err(Error::Alarm(format!("extracted {m} pairs, guarantee is more than {guaranteed_m}")));
    }
    Ok(ExtractionResult {
        items,
        constants: ExtractionConstants {
            p,
            q,
            sigma: s,
            norm_t,
            k,
            k_upper: cert.upper,
            c_cal,
            kappa,
            eta,
            delta_cap,
            guaranteed_m,
        },
        m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::NormedSpace;
    use nalgebra::DMatrix;

    fn half() -> MeasureSpace {
        MeasureSpace::new(vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn split_examples() {
        let inf = f64::INFINITY;
        let f = level_set_split(&half(), &[2.0, 0.0], &AtomSet::empty(), 2.0, inf, 0.5).unwrap();
        assert_eq!(f, [0].into_iter().collect());
        let prod = split_product(&half(), &[2.0, 0.0], &f, inf, 0.5).unwrap();
        assert!((prod - 2f64.sqrt()).abs() < 1e-12);

        let e: AtomSet = [0].into_iter().collect();
        assert!(matches!(level_set_split(&half(), &[2.0, 0.0], &e, 2.0, inf, 0.5), Err(Error::Hypothesis(_))));

        let f = level_set_split(&half(), &[1.0, 1.0], &AtomSet::empty(), 2.0, inf, 0.9).unwrap();
        assert_eq!(f.len(), 2);
        assert!(level_set_split(&half(), &[3.0, 0.0], &AtomSet::empty(), 2.0, inf, 0.5).is_err());
    }

    #[test]
    fn witness_examples() {
        let t = LinOp::into_l1(NormedSpace::l1(2), half(), DMatrix::from_diagonal_element(2, 2, 2.0)).unwrap();
        let e: AtomSet = [0].into_iter().collect();
        let (z, v) = find_witness(&t, &e, 2.0, 0.5).unwrap();
        assert_eq!(z, vec![0.0, 1.0]);
        assert!((v - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(find_witness(&t.scaled(0.0), &e, 2.0, 0.5), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn identity_extracts_disjoint_atoms() {
        let d = 8;
        let t = LinOp::into_l1(
            NormedSpace::l1(d),
            MeasureSpace::uniform(d).unwrap(),
            DMatrix::from_diagonal_element(d, d, d as f64),
        )
        .unwrap();
        let r = rosenthal_extract(&t, 2.0, f64::INFINITY, 1e-9).unwrap();
        assert!(r.m >= 1);
        for it in &r.items {
            assert_eq!(it.f.len(), 1);
        }
        assert!(crate::measure::pairwise_disjoint(&r.sets()));
    }
}
