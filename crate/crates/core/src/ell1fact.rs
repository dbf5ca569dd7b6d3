//! Explicit factorizations of the identity of ℓ₁ᵏ (and, by duality, ℓ∞ᵏ)
//! through an operator, built from extracted vectors and disjoint sets.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::density_bounds;
use crate::density::{maurey_density, measure_of, mix_and_renormalize};
use crate::error::{Error, Result};
use crate::extraction::{check_exponents, rosenthal_extract, ExtractionResult};
use crate::measure::{pairwise_disjoint, sgn, AtomSet, Fun, MeasureSpace};
use crate::op::{Codomain, LinOp};
use crate::space::{Ball, NormedSpace};

pub const RESIDUAL_TOL: f64 = 1e-8;
pub const PRODUCT_SLACK: f64 = 1e-7;

fn binom2(m: usize) -> f64 {
    m as f64 * (m as f64 - 1.0) / 2.0
}

/// `a[(i, j)] = ∫_{A_j} |x_i| dμ`.
pub fn cross_masses(mu: &MeasureSpace, xs: &[Fun], sets: &[AtomSet]) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), sets.len(), |i, j| sets[j].iter().map(|a| mu.weights()[a] * xs[i].values[a].abs()).sum())
}

/// `α(E) = Σ_{i ≠ j ∈ E} a_ij`.
pub fn alpha_of(a: &DMatrix<f64>, e: &[usize]) -> f64 {
    let mut s = 0.0;
    for &i in e {
        for &j in e {
            if i != j {
                s += a[(i, j)];
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSelection {
    pub e0: Vec<usize>,
    pub d: Vec<usize>,
    /// `α` over all of `0..m`.
    pub alpha: f64,
    pub alpha_e0: f64,
    /// `(2k−1) binom(m,2)^{-1} Σ‖x_i‖₁`, the per-row bound.
    pub row_bound: f64,
    /// `Σ_{j ∈ D∖{i}} a_ij` for `i ∈ D`, in the order of `d`.
    pub row_sums: Vec<f64>,
}

/// Expected `α(E)` for a uniform completion of a partial choice: `state[i]` is
/// `Some(true)` (chosen), `Some(false)` (excluded) or `None` (undecided), and
/// `r` more elements are to be drawn from the `u` undecided ones.
fn conditional_alpha(a: &DMatrix<f64>, state: &[Option<bool>], r: usize, u: usize) -> f64 {
    let p1 = if u == 0 { 0.0 } else { r as f64 / u as f64 };
    let p2 = if u < 2 { 0.0 } else { (r as f64 * (r as f64 - 1.0)) / (u as f64 * (u as f64 - 1.0)) };
    let m = state.len();
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i == j || a[(i, j)] == 0.0 {
                continue;
            }
            let pr = match (state[i], state[j]) {
                (Some(false), _) | (_, Some(false)) => 0.0,
                (Some(true), Some(true)) => 1.0,
                (Some(true), None) | (None, Some(true)) => p1,
                (None, None) => p2,
            };
            s += a[(i, j)] * pr;
        }
    }
    s
}

/// Derandomized choice of `E₀` (`|E₀| = 2k`) by conditional expectations, then
/// `D ⊆ E₀` of size `k` avoiding the heavy rows. `norms[i] = ‖x_i‖₁`.
pub fn select_subset_matrix(a: &DMatrix<f64>, norms: &[f64], k: usize) -> Result<SubsetSelection> {
    let m = a.nrows();
    if a.ncols() != m || norms.len() != m {
        return Err(Error::Shape("cross-mass matrix must be m × m".into()));
    }
    if k <= 1 || 2 * k > m {
        return Err(Error::Domain(format!("subset selection needs 1 < k ≤ m/2, got k = {k}, m = {m}")));
    }
    let s = 2 * k;
    let mut state: Vec<Option<bool>> = vec![None; m];
    let mut chosen = 0;
    for i in 0..m {
        let u = m - i;
        let r = s - chosen;
        let can_take = r >= 1;
        let can_skip = u - 1 >= r;
        let take = match (can_take, can_skip) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => {
                state[i] = Some(true);
                let with = conditional_alpha(a, &state, r - 1, u - 1);
                state[i] = Some(false);
                let without = conditional_alpha(a, &state, r, u - 1);
                with <= without
            }
            (false, false) => unreachable!("the remaining count always fits"),
        };
        state[i] = Some(take);
        if take {
            chosen += 1;
        }
    }
    let e0: Vec<usize> = (0..m).filter(|&i| state[i] == Some(true)).collect();
    let alpha = alpha_of(a, &(0..m).collect::<Vec<_>>());
    let alpha_e0 = alpha_of(a, &e0);
    let row = |i: usize, set: &[usize]| -> f64 { set.iter().filter(|&&j| j != i).map(|&j| a[(i, j)]).sum() };
    // Rows carrying at least their share of α(E₀); rows with zero mass never count
    // as heavy, which keeps |E₀ ∖ F| ≥ k when α(E₀) = 0.
    let heavy: Vec<usize> = e0
        .iter()
        .copied()
        .filter(|&i| {
            let r = row(i, &e0);
            r > 0.0 && r >= alpha_e0 / k as f64
        })
        .collect();
    let d: Vec<usize> = e0.iter().copied().filter(|i| !heavy.contains(i)).take(k).collect();
    if d.len() != k {
        return Err(Error::Alarm("fewer than k light rows in E₀".into()));
    }
    let total: f64 = norms.iter().sum();
    let row_bound = (2.0 * k as f64 - 1.0) / binom2(m) * total;
    let row_sums: Vec<f64> = d.iter().map(|&i| row(i, &d)).collect();
    if let Some(bad) = row_sums.iter().find(|&&r| r > row_bound * (1.0 + 1e-12) + 1e-15) {
        return Err(Error::Alarm(format!("row sum {bad} exceeds the selection bound {row_bound}")));
    }
    Ok(SubsetSelection { e0, d, alpha, alpha_e0, row_bound, row_sums })
}

pub fn select_subset(mu: &MeasureSpace, xs: &[Fun], sets: &[AtomSet], k: usize) -> Result<SubsetSelection> {
    if xs.len() != sets.len() {
        return Err(Error::Shape("one set per function expected".into()));
    }
    if !pairwise_disjoint(sets) {
        return Err(Error::Domain("sets must be pairwise disjoint".into()));
    }
    let a = cross_masses(mu, xs, sets);
    let norms: Vec<f64> = xs.iter().map(|x| mu.lp_norm(&x.values, 1.0)).collect::<Result<_>>()?;
    select_subset_matrix(&a, &norms, k)
}

/// `Q = (WU)^{-1} W` with `W f = (∫ f g_i dμ)_i`, `g_i = 1_{F_i} sgn(U e_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftInverse {
    pub q: DMatrix<f64>,
    /// `‖Q: L₁(μ) → ℓ₁ᵏ‖`, exact.
    pub norm: f64,
    /// `δ − γ`, the diagonal-dominance margin of `WU`.
    pub margin: f64,
    pub residual: f64,
}

/// `‖Q: L₁(μ) → ℓ₁ᵏ‖ = max_a ‖Q e_a‖₁ / μ_a`.
pub fn l1_to_l1k_norm(q: &DMatrix<f64>, mu: &MeasureSpace) -> f64 {
    q.column_iter()
        .zip(mu.weights())
        .map(|(c, w)| c.iter().map(|v| v.abs()).sum::<f64>() / w)
        .fold(0.0, f64::max)
}

/// Largest cross mass `max_i Σ_{j≠i} ‖1_{F_j} U e_i‖₁`.
pub fn column_cross_mass(u: &DMatrix<f64>, mu: &MeasureSpace, sets: &[AtomSet]) -> f64 {
    (0..u.ncols())
        .map(|i| {
            sets.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, f)| f.iter().map(|a| mu.weights()[a] * u[(a, i)].abs()).sum::<f64>())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Left inverse of `U: ℓ₁ᵏ → L₁(μ)`. The cross-mass hypothesis is checked per
/// column, which is all the invertibility estimate uses.
pub fn build_left_inverse(u: &DMatrix<f64>, mu: &MeasureSpace, sets: &[AtomSet], delta: f64, gamma: f64) -> Result<LeftInverse> {
    let k = u.ncols();
    if sets.len() != k || u.nrows() != mu.atom_count() {
        return Err(Error::Shape("need one set per column and one row per atom".into()));
    }
    if !(gamma >= 0.0 && gamma < delta) {
        return Err(Error::Hypothesis(format!("need 0 ≤ γ < δ, got γ = {gamma}, δ = {delta}")));
    }
    if !pairwise_disjoint(sets) {
        return Err(Error::Hypothesis("sets must be pairwise disjoint".into()));
    }
    for i in 0..k {
        let own: f64 = sets[i].iter().map(|a| mu.weights()[a] * u[(a, i)].abs()).sum();
        if own < delta * (1.0 - 1e-12) {
            return Err(Error::Hypothesis(format!("‖1_(F_{i}) U e_{i}‖₁ = {own} < δ = {delta}")));
        }
    }
    let cross = column_cross_mass(u, mu, sets);
    if cross > gamma * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::Hypothesis(format!("cross mass {cross} exceeds γ = {gamma}")));
    }
    let mut w = DMatrix::zeros(k, mu.atom_count());
    for i in 0..k {
        for a in sets[i].iter() {
            w[(i, a)] = mu.weights()[a] * sgn(u[(a, i)]);
        }
    }
    let wu = &w * u;
    let lu = wu.lu();
    let inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Alarm("WU is singular despite diagonal dominance".into()))?;
    let q = inv * w;
    let residual = (&q * u - DMatrix::identity(k, k)).amax();
    let norm = l1_to_l1k_norm(&q, mu);
    if norm > 1.0 / (delta - gamma) + 1e-8 {
        return Err(Error::Alarm(format!("‖Q‖ = {norm} exceeds 1/(δ−γ) = {}", 1.0 / (delta - gamma))));
    }
    Ok(LeftInverse { q, norm, margin: delta - gamma, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `B T A = id` on ℓ₁ᵏ.
    L1,
    /// `B V A = id` on ℓ∞ᵏ.
    Linf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationWitness {
    pub variant: Variant,
    pub k: usize,
    /// Columns are the images of the unit vectors of the k-dimensional space.
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub residual: f64,
    pub norm_a: f64,
    pub norm_b: f64,
    pub norm_t: f64,
    /// `‖A‖‖B‖‖T‖`.
    pub norm_product: f64,
    /// Indices of the extracted items used.
    pub chosen: Vec<usize>,
    /// Largest cross mass among the chosen columns of the normalized operator.
    pub gamma_used: f64,
}

impl FactorizationWitness {
    /// `‖A‖‖B‖`, the achieved factorization constant.
    pub fn gamma(&self) -> f64 {
        self.norm_a * self.norm_b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub guaranteed_k: f64,
    pub achieved_k: usize,
    pub guaranteed_gamma: f64,
    pub achieved_gamma: f64,
    pub inputs: BTreeMap<String, f64>,
}

impl BoundReport {
    pub fn k_vacuous(&self) -> bool {
        self.guaranteed_k < 1.0
    }

    /// Violated guarantees, as human-readable strings.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.guaranteed_k >= 1.0 && (self.achieved_k as f64) < self.guaranteed_k.ceil() {
            v.push(format!("k = {} below the guaranteed {}", self.achieved_k, self.guaranteed_k));
        }
        if self.achieved_gamma > self.guaranteed_gamma + PRODUCT_SLACK {
            v.push(format!("γ = {} above the guaranteed {}", self.achieved_gamma, self.guaranteed_gamma));
        }
        v
    }
}

/// One extracted pair: a domain vector in the unit ball and a set of atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub z: Vec<f64>,
    pub f: AtomSet,
}

impl From<&crate::extraction::ExtractionItem> for Item {
    fn from(e: &crate::extraction::ExtractionItem) -> Self {
        Item { z: e.z.clone(), f: e.f.clone() }
    }
}

/// Factors the identity of ℓ₁ᵏ through `T` from pairs with `‖1_{F_i} T z_i‖₁ ≥ δ‖T‖`.
///
/// The size `k` is searched from the top: all `m` items if their cross masses are
/// already below `δ/2`, then subset selection for `k = ⌊m/2⌋, …, 2`, then the
/// scalar witness `k = 1`. The first `k` whose selected columns have cross mass
/// at most `δ/2` is used, so `‖A‖‖B‖‖T‖ ≤ 2/δ` always.
pub fn factor_l1(t: &LinOp, items: &[Item], delta: f64) -> Result<(FactorizationWitness, BoundReport)> {
    let mu = measure_of(t)?;
    let m = items.len();
    if m == 0 {
        return Err(Error::Hypothesis("no extracted pairs".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Hypothesis(format!("δ must be positive, got {delta}")));
    }
    let t1 = t.with_exponent(1.0)?;
    let norm_t = t1.op_norm()?.value;
    if norm_t == 0.0 {
        return Err(Error::Hypothesis("T = 0".into()));
    }
    let sets: Vec<AtomSet> = items.iter().map(|i| i.f.clone()).collect();
    if !pairwise_disjoint(&sets) {
        return Err(Error::Hypothesis("sets must be pairwise disjoint".into()));
    }
    let mut znorm = Vec::with_capacity(m);
    for it in items {
        let n = t.domain.norm(&it.z)?;
        if n > 1.0 + 1e-9 {
            return Err(Error::Hypothesis(format!("a vector has norm {n} > 1")));
        }
        znorm.push(n);
    }
    let tn = &t.matrix / norm_t;
    let xs: Vec<Fun> = items.iter().map(|it| Fun::new((&tn * DVector::from_column_slice(&it.z)).iter().copied().collect())).collect();
    for (i, (x, f)) in xs.iter().zip(&sets).enumerate() {
        let own: f64 = f.iter().map(|a| mu.weights()[a] * x.values[a].abs()).sum();
        if own < delta * (1.0 - 1e-12) {
            return Err(Error::Hypothesis(format!("pair {i} has ‖1_F T z‖₁/‖T‖ = {own} < δ = {delta}")));
        }
    }
    let a = cross_masses(mu, &xs, &sets);
    let norms: Vec<f64> = xs.iter().map(|x| mu.lp_norm(&x.values, 1.0)).collect::<Result<_>>()?;
    let cross_of = |d: &[usize]| -> f64 {
        d.iter().map(|&i| d.iter().filter(|&&j| j != i).map(|&j| a[(i, j)]).sum::<f64>()).fold(0.0, f64::max)
    };

    let mut candidates: Vec<Vec<usize>> = Vec::new();
    candidates.push((0..m).collect());
    for k in (2..=m / 2).rev() {
        candidates.push(select_subset_matrix(&a, &norms, k)?.d);
    }
    let mut chosen = None;
    for d in candidates {
        let g = cross_of(&d);
        if g <= delta / 2.0 {
            chosen = Some((d, g));
            break;
        }
    }
    let (d, gamma) = chosen.unwrap_or_else(|| {
        // Scalar witness: the pair with the most mass on its own set.
        let best = (0..m)
            .max_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]))
            .unwrap();
        (vec![best], 0.0)
    });
    let k = d.len();
    let amat = DMatrix::from_fn(t.domain.dim(), k, |r, c| items[d[c]].z[r]);
    let u = &tn * &amat;
    let dsets: Vec<AtomSet> = d.iter().map(|&i| sets[i].clone()).collect();
    let li = build_left_inverse(&u, mu, &dsets, delta, gamma)?;
    let b = &li.q / norm_t;
    let residual = (&b * &t.matrix * &amat - DMatrix::identity(k, k)).amax();
    let norm_a = d.iter().map(|&i| znorm[i]).fold(0.0, f64::max);
    let norm_b = l1_to_l1k_norm(&b, mu);
    let witness = FactorizationWitness {
        variant: Variant::L1,
        k,
        a: amat,
        b,
        residual,
        norm_a,
        norm_b,
        norm_t,
        norm_product: norm_a * norm_b * norm_t,
        chosen: d,
        gamma_used: gamma,
    };
    if witness.residual > RESIDUAL_TOL {
        return Err(Error::Alarm(format!("BTA differs from the identity by {}", witness.residual)));
    }
    if witness.norm_product > 2.0 / delta + PRODUCT_SLACK {
        return Err(Error::Alarm(format!("‖A‖‖B‖‖T‖ = {} exceeds 2/δ", witness.norm_product)));
    }
    let mut inputs = BTreeMap::new();
    inputs.insert("delta".into(), delta);
    inputs.insert("m".into(), m as f64);
    inputs.insert("norm_t".into(), norm_t);
    let report = BoundReport {
        guaranteed_k: delta * m as f64 / 8.0,
        achieved_k: k,
        guaranteed_gamma: 2.0 / (delta * norm_t),
        achieved_gamma: witness.gamma(),
        inputs,
    };
    Ok((witness, report))
}

/// A norm-one functional `x*` on `X` with `x*(x) = ‖x‖`: a dual-ball vertex, or
/// `x/‖x‖₂` for Euclidean `X`.
pub fn norming_functional(x_space: &NormedSpace, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    if matches!(x_space.ball(), Ball::Euclidean) {
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Ok((vec![0.0; x.len()], 0.0));
        }
        return Ok((x.iter().map(|v| v / n).collect(), n));
    }
    let dual = x_space.dual()?;
    let reps = dual.vertex_reps()?;
    let xv = DVector::from_column_slice(x);
    let mut best = (f64::NEG_INFINITY, 0, 1.0);
    for (j, r) in reps.column_iter().enumerate() {
        let v = r.dot(&xv);
        if v.abs() > best.0 {
            best = (v.abs(), j, if v < 0.0 { -1.0 } else { 1.0 });
        }
    }
    Ok((reps.column(best.1).iter().map(|v| v * best.2).collect(), best.0))
}

/// Dual form: factors the identity of ℓ∞ᵏ through `V: ℓ∞ᵐ → X` with `‖V‖ = 1`
/// and `‖V e_i‖ ≥ δ`, by running [`factor_l1`] on `V*: X* → ℓ₁ᵐ` and transposing.
pub fn factor_linf_dual(v: &LinOp, delta: f64) -> Result<(FactorizationWitness, BoundReport)> {
    if !matches!(v.domain.ball(), Ball::SignCube) {
        return Err(Error::Domain("V must be defined on ℓ∞ᵐ".into()));
    }
    let Codomain::Normed(x) = &v.codomain else {
        return Err(Error::Domain("V must take values in a normed space".into()));
    };
    let m = v.domain.dim();
    let norm_v = v.op_norm()?.value;
    if (norm_v - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("‖V‖ = {norm_v}; normalize to 1 first")));
    }
    let mut items = Vec::with_capacity(m);
    for i in 0..m {
        let (zs, val) = norming_functional(x, v.matrix.column(i).as_slice())?;
        if !(val >= delta * (1.0 - 1e-12)) || !(delta > 0.0) {
            return Err(Error::Hypothesis(format!("‖V e_{i}‖ = {val} is below δ = {delta}")));
        }
        items.push(Item { z: zs, f: [i].into_iter().collect() });
    }
    let dual_domain = if matches!(x.ball(), Ball::Euclidean) { NormedSpace::l2(x.dim()) } else { x.dual()? };
    let vstar = LinOp::into_l1(dual_domain, MeasureSpace::counting(m)?, v.matrix.transpose())?;
    let (w, mut report) = factor_l1(&vstar, &items, delta)?;
    // B'V*A' = id  ⇒  A'ᵀ V B'ᵀ = id.
    let a = w.b.transpose();
    let b = w.a.transpose();
    let residual = (&b * &v.matrix * &a - DMatrix::identity(w.k, w.k)).amax();
    let norm_a = a.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut norm_b: f64 = 0.0;
    for r in b.row_iter() {
        norm_b = norm_b.max(x.dual_norm(r.transpose().as_slice()).or_else(|_| Ok::<f64, Error>(r.norm()))?);
    }
    if (norm_a - w.norm_b).abs() > 1e-9 * (1.0 + norm_a) || (norm_b - w.norm_a).abs() > 1e-9 * (1.0 + norm_b) {
        return Err(Error::Alarm("transposed witness norms disagree".into()));
    }
    let witness = FactorizationWitness {
        variant: Variant::Linf,
        k: w.k,
        a,
        b,
        residual,
        norm_a,
        norm_b,
        norm_t: norm_v,
        norm_product: norm_a * norm_b * norm_v,
        chosen: w.chosen,
        gamma_used: w.gamma_used,
    };
    report.achieved_gamma = witness.gamma();
    Ok((witness, report))
}

/// Everything the density-change factorization produced along the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFactorization {
    pub witness: FactorizationWitness,
    pub report: BoundReport,
    pub sigma: f64,
    /// `‖T‖^σ C_{1,q}^{1−σ} / C_{1,p}` with the upper/lower brackets that make it an over-estimate.
    pub big_delta: f64,
    pub c1p_lower: f64,
    pub c1p_upper: f64,
    pub c1q_lower: f64,
    pub c1q_upper: f64,
    pub phi: Vec<f64>,
    pub extraction: ExtractionResult,
    /// Extracted pairs in the original atoms.
    pub items: Vec<Item>,
    /// `‖1_{F_i} T z_i‖₁ / ‖T‖` per pair.
    pub deltas: Vec<f64>,
    pub delta_floor: f64,
}

pub fn density_factorization(t: &LinOp, p: f64, q: f64, tol: f64) -> Result<DensityFactorization> {
    check_exponents(p, q)?;
    let t = t.with_exponent(1.0)?;
    let mu = measure_of(&t)?;
    let norm_t = t.op_norm()?.value;
    if norm_t == 0.0 {
        return Err(Error::Domain("T = 0".into()));
    }
    let fp = maurey_density(&t, p, tol)?;
    let fq = maurey_density(&t, q, tol)?;
    let mixed = mix_and_renormalize(&t, &fp, &fq)?;
    let extraction = rosenthal_extract(&mixed.t1, p, q, tol)?;
    // Both are certified lower bounds of C_{1,p}(T); the chain below needs the one
    // the extraction actually used.
    let c1p_lower = extraction.constants.k * norm_t;
    let bounds = density_bounds(norm_t, c1p_lower, fq.value, p, q)?;
    let (s, big) = (bounds.sigma, bounds.big_delta);
    let delta_floor = (4.0 * big).powf(-1.0 / s);
    let items: Vec<Item> = extraction
        .items
        .iter()
        .map(|it| Item { z: it.z.clone(), f: it.f.iter().map(|a| mixed.atoms[a]).collect() })
        .collect();
    let mut deltas = Vec::with_capacity(items.len());
    for it in &items {
        let y = t.apply(&it.z);
        let own: f64 = it.f.iter().map(|a| mu.weights()[a] * y[a].abs()).sum();
        deltas.push(own / norm_t);
    }
    let delta = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    if delta < delta_floor * (1.0 - 1e-9) {
        return Err(Error::Alarm(format!("extracted mass {delta} below (4Δ)^(-1/σ) = {delta_floor}")));
    }
    let (witness, mut report) = factor_l1(&t, &items, delta)?;
    report.guaranteed_gamma = bounds.gamma;
    report.guaranteed_k = bounds.k;
    report.inputs.insert("p".into(), p);
    report.inputs.insert("q".into(), q);
    report.inputs.insert("sigma".into(), s);
    report.inputs.insert("Delta".into(), big);
    report.inputs.insert("C1p".into(), c1p_lower);
    report.inputs.insert("C1q".into(), fq.value);
    report.inputs.insert("m_bound".into(), bounds.m);
    Ok(DensityFactorization {
        witness,
        report,
        sigma: s,
        big_delta: big,
        c1p_lower,
        c1p_upper: fp.value,
        c1q_lower: fq.lower,
        c1q_upper: fq.value,
        phi: mixed.phi,
        extraction,
        items,
        deltas,
        delta_floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_masses_give_lowest_indices() {
        let a = DMatrix::zeros(6, 6);
        let s = select_subset_matrix(&a, &[1.0; 6], 3).unwrap();
        assert_eq!(s.d, vec![0, 1, 2]);
    }

    #[test]
    fn uniform_masses_meet_the_bound() {
        let a = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        let s = select_subset_matrix(&a, &[1.0; 4], 2).unwrap();
        assert!(s.alpha_e0 <= 12.0 + 1e-12);
        assert!(s.row_sums.iter().all(|&r| r <= 3.0 / 6.0 * 4.0));
        assert!(select_subset_matrix(&DMatrix::zeros(2, 2), &[1.0; 2], 1).is_err());
    }

    #[test]
    fn left_inverse_on_disjoint_columns() {
        let mu = MeasureSpace::uniform(3).unwrap();
        let u = DMatrix::from_row_slice(3, 2, &[3.0, 0.0, 0.0, -3.0, 0.0, 0.0]);
        let sets = vec![[0].into_iter().collect(), [1].into_iter().collect()];
        let li = build_left_inverse(&u, &mu, &sets, 1.0, 0.0).unwrap();
        assert!(li.residual < 1e-15);
        assert!((li.norm - 1.0).abs() < 1e-12);
        assert!(build_left_inverse(&u, &mu, &sets, 1.0, 1.0).is_err());
    }

    #[test]
    fn scaled_identity_factors() {
        let d = 12;
        let t = LinOp::into_l1(NormedSpace::l1(d), MeasureSpace::uniform(d).unwrap(), DMatrix::from_diagonal_element(d, d, d as f64)).unwrap();
        let items: Vec<Item> = (0..d)
            .map(|i| Item { z: (0..d).map(|k| (k == i) as u8 as f64).collect(), f: [i].into_iter().collect() })
            .collect();
        let (w, r) = factor_l1(&t, &items, 1.0).unwrap();
        assert_eq!(w.k, d);
        assert!(w.residual < 1e-12 && w.norm_product <= 2.0 + 1e-9);
        assert!(r.violations().is_empty());
    }

    #[test]
    fn linf_identity_factors() {
        let m = 6;
        let v = LinOp::new(NormedSpace::linf(m), Codomain::Normed(NormedSpace::linf(m)), DMatrix::identity(m, m)).unwrap();
        let (w, _) = factor_linf_dual(&v, 1.0).unwrap();
        assert_eq!(w.k, m);
        assert!(w.residual < 1e-12 && w.norm_product <= 2.0 + 1e-9);
        let mut zero_col = DMatrix::identity(m, m);
        zero_col[(2, 2)] = 0.0;
        let v0 = LinOp::new(NormedSpace::linf(m), Codomain::Normed(NormedSpace::linf(m)), zero_col).unwrap();
        assert!(matches!(factor_linf_dual(&v0, 0.5), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn density_factorization_on_identity() {
        let d = 8;
        let t = LinOp::into_l1(NormedSpace::l1(d), MeasureSpace::uniform(d).unwrap(), DMatrix::from_diagonal_element(d, d, d as f64)).unwrap();
        let run = density_factorization(&t, 2.0, f64::INFINITY, 1e-9).unwrap();
        assert!(run.report.violations().is_empty(), "{:?}", run.report);
        assert!(run.witness.residual < 1e-8);
    }
}
