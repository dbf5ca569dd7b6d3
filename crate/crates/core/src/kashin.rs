//! Random pairs of subspaces of `L₂^{3n}` on which the L₁ and L₂ norms are
//! equivalent, the quotient space built from them, and the dimension estimate
//! it feeds.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::{growth_bounds, Growth};
use crate::density::pi_t_l2_lower;
use crate::error::{Error, Result};
use crate::rng::{mix, SplitRng};
use crate::space::NormedSpace;

pub const MAX_KASHIN_N: usize = 8;
pub const REDRAWS: u64 = 8;
const DESCENT_STEPS: usize = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KashinPair {
    pub n: usize,
    pub seed: u64,
    /// Orthogonal `3n × 3n`.
    pub u: DMatrix<f64>,
    /// Columns `0..2n` of `u`.
    pub e1: DMatrix<f64>,
    /// Columns `n..3n` of `u`.
    pub e2: DMatrix<f64>,
    pub b_e1: f64,
    pub b_e2: f64,
    /// `max(b_e1, b_e2)`: estimated `sup ‖f‖₂/‖f‖₁` over `E₁ ∪ E₂`.
    pub b_hat: f64,
    /// Always true: the supremum comes from a nonconvex search and may be understated.
    pub estimate: bool,
}

/// Normalized-counting `‖f‖₂/‖f‖₁`.
pub fn norm_ratio(f: &[f64]) -> f64 {
    let m = f.len() as f64;
    let l1: f64 = f.iter().map(|v| v.abs()).sum::<f64>() / m;
    let l2 = (f.iter().map(|v| v * v).sum::<f64>() / m).sqrt();
    if l1 == 0.0 {
        1.0
    } else {
        l2 / l1
    }
}

fn orthogonal(dim: usize, rng: &mut SplitRng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign convention that makes the factorization unique.
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Vertex-type point: the unit vector of `span(e)` vanishing on the `dim − 1`
/// coordinates where `f = e c` is smallest.
fn polish(e: &DMatrix<f64>, c: &DVector<f64>) -> Option<DVector<f64>> {
    let k = e.ncols();
    if k < 2 {
        return None;
    }
    let f = e * c;
    let mut idx: Vec<usize> = (0..f.len()).collect();
    idx.sort_by(|&a, &b| f[a].abs().total_cmp(&f[b].abs()));
    // Pad to square so the SVD returns a full right basis.
    let rows = DMatrix::from_fn(k, k, |i, j| if i + 1 < k { e[(idx[i], j)] } else { 0.0 });
    let svd = rows.svd(false, true);
    let vt = svd.v_t?;
    let j = (0..k).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))?;
    let v = vt.row(j).transpose();
    let n = v.norm();
    (n > 1e-12).then(|| v / n)
}

/// `min ‖e c‖₁/‖e c‖₂` over the unit sphere of `span(e)` (orthonormal columns),
/// as `1/b`, by projected subgradient descent from `restarts` seeded starts plus
/// vertex polishing. Restarts are reduced in index order, so a larger budget
/// can only raise the estimate.
pub fn estimate_b(e: &DMatrix<f64>, restarts: usize, seed: u64) -> f64 {
    let k = e.ncols();
    let mut best_ratio: f64 = 1.0;
    for r in 0..restarts.max(1) {
        let mut rng = SplitRng::new(mix(seed, r as u64));
        let mut c = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
        c /= c.norm();
        let mut local = norm_ratio((e * &c).as_slice());
        let mut best_c = c.clone();
        for step in 0..DESCENT_STEPS {
            let f = e * &c;
            let s = f.map(|v| v.signum() * (v != 0.0) as u8 as f64);
            let g = e.transpose() * s;
            let tangent = &g - &c * c.dot(&g);
            let tn = tangent.norm();
            if tn < 1e-14 {
                break;
            }
            c -= tangent * (0.3 / ((step + 1) as f64).sqrt() / tn);
            c /= c.norm();
            let ratio = norm_ratio((e * &c).as_slice());
            if ratio > local {
                local = ratio;
                best_c = c.clone();
            }
        }
        if let Some(v) = polish(e, &best_c) {
            local = local.max(norm_ratio((e * v).as_slice()));
        }
        best_ratio = best_ratio.max(local);
    }
    best_ratio
}

pub fn random_kashin_pair(n: usize, seed: u64, restarts: usize) -> Result<KashinPair> {
    if n == 0 || n > MAX_KASHIN_N {
        return Err(Error::Capacity { what: "Kashin pair", detail: format!("n = {n} outside 1..={MAX_KASHIN_N}") });
    }
    let mut rng = SplitRng::new(seed);
    let u = orthogonal(3 * n, &mut rng);
    let e1 = u.columns(0, 2 * n).into_owned();
    let e2 = u.columns(n, 2 * n).into_owned();
    let b_e1 = estimate_b(&e1, restarts, mix(seed, 1));
    let b_e2 = estimate_b(&e2, restarts, mix(seed, 2));
    Ok(KashinPair { n, seed, u, e1, e2, b_e1, b_e2, b_hat: b_e1.max(b_e2), estimate: true })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KashinOperator {
    pub pair: KashinPair,
    /// `L₁^{3n}/E₂⊥` with the normalized counting measure.
    pub f_n: NormedSpace,
    /// `u: ℓ₂ⁿ ≅ E₁/E₂⊥ → F_n` as a `3n × n` matrix of representatives.
    pub u: DMatrix<f64>,
    /// `b_hat · u`.
    pub v: DMatrix<f64>,
    /// `‖P‖ · π₁(i_{∞,1}) · ‖i_{1,2}‖` along the factorization of `u*`, times `b_hat`.
    pub b_cap: f64,
    pub factors: [f64; 3],
    /// Smallest `‖ve‖/‖e‖` seen on the checked directions.
    pub min_lower_ratio: f64,
    pub checked_directions: usize,
}

/// Builds `F_n`, `u` and `v = b_hat u`, and checks `‖ve‖ ≥ ‖e‖` on `samples` random
/// unit vectors and the coordinate directions.
pub fn build_kashin_operator(pair: &KashinPair, samples: usize) -> Result<KashinOperator> {
    let n = pair.n;
    let m = 3 * n;
    let weights = vec![1.0 / m as f64; m];
    let e2_perp = pair.u.columns(0, n).into_owned();
    let f_n = NormedSpace::quotient(weights, e2_perp)?;
    // E₁/E₂⊥ is represented by E₁ ∩ E₂ = span(columns n..2n), scaled so that the
    // normalized L₂ norm matches ℓ₂ⁿ.
    let u = pair.u.columns(n, n).into_owned() * (m as f64).sqrt();
    if u.amax() == 0.0 {
        return Err(Error::Alarm("u vanished".into()));
    }
    let v = &u * pair.b_hat;
    let mut rng = SplitRng::new(mix(pair.seed, 0x7665));
    let mut worst = f64::INFINITY;
    let mut dirs: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_fn(n, |j, _| (i == j) as u8 as f64)).collect();
    for _ in 0..samples {
        let e: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        dirs.push(&e / e.norm());
    }
    for e in &dirs {
        let img = &v * e;
        worst = worst.min(f_n.norm(img.as_slice())? / e.norm());
    }
    // Orthogonal projection onto E₁ ∩ E₂ in L₂; norm one up to rounding.
    let p = pair.u.columns(n, n).into_owned();
    let projection_norm = (p.transpose() * &p).symmetric_eigenvalues().max().max(0.0);
    let pi1_inclusion = 1.0; // π₁ of L∞ → L₁ on a probability space is its total mass.
    let factors = [projection_norm, pi1_inclusion, pair.b_e2];
    let b_cap = pair.b_hat * factors.iter().product::<f64>();
    if worst < 1.0 - 1e-7 {
        return Err(Error::Hypothesis(format!("‖ve‖/‖e‖ = {worst} < 1: b is understated for this draw")));
    }
    Ok(KashinOperator { pair: pair.clone(), f_n, u, v, b_cap, factors, min_lower_ratio: worst, checked_directions: dirs.len() })
}

/// Draws pairs with seeds `mix(seed, attempt)` until the lower-bound check
/// passes, at most [`REDRAWS`] times.
pub fn kashin_operator(n: usize, seed: u64, restarts: usize, samples: usize) -> Result<(KashinOperator, u64)> {
    let mut last = None;
    for attempt in 0..REDRAWS {
        let pair = random_kashin_pair(n, mix(seed, attempt), restarts)?;
        match build_kashin_operator(&pair, samples) {
            Ok(op) => return Ok((op, attempt)),
            Err(Error::Hypothesis(msg)) => last = Some(msg),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Alarm(format!("no acceptable draw in {REDRAWS} attempts: {}", last.unwrap_or_default())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub n: usize,
    pub gl: f64,
    pub b_cap: f64,
    /// `(2⁵ B gl)⁻² n`.
    pub t: f64,
    /// `√(n/t)`, a lower bound for `π_t(v)/‖v‖`.
    pub c: f64,
    /// `2⁵ B gl`.
    pub threshold: f64,
    pub feasible: bool,
    pub growth: Option<Growth>,
}

/// Dimension of an almost-`ℓ∞` subspace forced in any `Z` receiving `F_n` through
/// `j` with `gl(j) = gl`. Infeasible (not an error) when `t ≤ 1`.
pub fn dimension_report(n: usize, b_cap: f64, gl: f64) -> Result<DimensionReport> {
    if n == 0 || !(b_cap >= 1.0 && gl >= 1.0) {
        return Err(Error::Domain(format!("need n ≥ 1, B ≥ 1, gl ≥ 1, got n = {n}, B = {b_cap}, gl = {gl}")));
    }
    let threshold = 32.0 * b_cap * gl;
    let t = n as f64 / (threshold * threshold);
    if t <= 1.0 {
        return Ok(DimensionReport { n, gl, b_cap, t, c: f64::NAN, threshold, feasible: false, growth: None });
    }
    let c = pi_t_l2_lower(n, t)?;
    let feasible = c >= threshold * (1.0 - 1e-12);
    let growth = if feasible { Some(growth_bounds(n as f64, t, c.max(32.0))?) } else { None };
    Ok(DimensionReport { n, gl, b_cap, t, c, threshold, feasible, growth })
}

pub fn kashin_dimension_report(op: &KashinOperator, gl: f64) -> Result<DimensionReport> {
    dimension_report(op.pair.n, op.b_cap, gl)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_shapes_and_orthogonality() {
        let p = random_kashin_pair(2, 5, 8).unwrap();
        let i = p.u.transpose() * &p.u;
        assert!((i - DMatrix::identity(6, 6)).amax() < 1e-10);
        assert_eq!((p.e1.ncols(), p.e2.ncols()), (4, 4));
        assert!(p.b_hat >= 1.0 && p.estimate);
        let one = random_kashin_pair(1, 1, 4).unwrap();
        assert!(one.b_hat >= 1.0);
    }

    #[test]
    fn constant_vector_has_ratio_one() {
        assert!((norm_ratio(&[2.0; 9]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn restarts_only_raise_the_estimate() {
        let p = random_kashin_pair(3, 11, 1).unwrap();
        let mut last = 0.0;
        for r in [1, 2, 4, 8, 16] {
            let b = estimate_b(&p.e1, r, 99);
            assert!(b >= last);
            last = b;
        }
    }

    #[test]
    fn dimension_threshold_example() {
        let r = dimension_report(1 << 12, 1.0, 1.0).unwrap();
        assert!((r.t - 4.0).abs() < 1e-12 && (r.c - 32.0).abs() < 1e-12 && r.feasible);
        assert!(!dimension_report(10, 1.0, 1.0).unwrap().feasible);
    }

    #[test]
    fn dimension_report_matches_exponent_ledger() {
        let n = 1usize << 21;
        let r = dimension_report(n, 1.0, 1.0).unwrap();
        let d = crate::bounds::dimension_exponent(1.0, 1.0, 2 * n).unwrap();
        assert!(!d.small_branch);
        assert_eq!(d.t, Some(r.t));
        assert!((r.growth.unwrap().j_feasible.ln() - d.ln_k).abs() < 1e-12);
    }

    #[test]
    fn operator_lower_bound_and_cap() {
        let (op, _) = kashin_operator(3, 4, 16, 100).unwrap();
        assert!(op.min_lower_ratio >= 1.0 - 1e-7);
        assert!(op.b_cap <= op.pair.b_hat.powi(2) * (1.0 + 1e-6));
        assert!(op.u.amax() > 0.0);
        // The quotient norm never exceeds the ambient L₁ norm.
        let x: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let l1: f64 = x.iter().map(|v| v.abs()).sum::<f64>() / 9.0;
        assert!(op.f_n.norm(&x).unwrap() <= l1 + 1e-12);
    }
}
