//! Closed-form constants: the guaranteed side of every factorization report.
//!
//! All calculators are pure. Values below 1 are returned as-is; callers decide
//! whether a bound is vacuous.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::conjugate;

/// `(log 2)(log 4/3)/log 5`.
pub fn growth_c1() -> f64 {
    std::f64::consts::LN_2 * (4.0f64 / 3.0).ln() / 5.0f64.ln()
}

/// `(2/ε + 1)^n / 2`, the ε-net cardinality cap on an `n`-dimensional sphere.
pub fn net_cap(n: usize, eps: f64) -> f64 {
    0.5 * (2.0 / eps + 1.0).powi(n as i32)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must lie in (0,1), got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorBounds {
    /// Upper bound on `‖A‖‖B‖`.
    pub gamma: f64,
    /// Lower bound on the dimension `k`.
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBounds {
    pub sigma: f64,
    pub big_delta: f64,
    pub gamma: f64,
    pub k: f64,
    /// Lower bound on the number of extracted pairs.
    pub m: f64,
}

/// `σ = 1 − q*/p*`, `Δ = ‖T‖^σ C_{1,q}^{1−σ}/C_{1,p}`, `γ ≤ 2(4Δ)^{1/σ}/‖T‖`,
/// `k ≥ (1/8)(4Δ)^{−1/σ}(C_{1,p}/(8‖T‖))^{p*}`.
pub fn density_bounds(norm_t: f64, c1p: f64, c1q: f64, p: f64, q: f64) -> Result<DensityBounds> {
    if !(p > 1.0 && q > p) {
        return Err(Error::Domain(format!("need 1 < p < q ≤ ∞, got p = {p}, q = {q}")));
    }
    positive("‖T‖", norm_t)?;
    positive("C_1,p", c1p)?;
    if c1q < c1p * (1.0 - 1e-9) {
        return Err(Error::Domain(format!("need C_1,p ≤ C_1,q, got {c1p} > {c1q}")));
    }
    let ps = conjugate(p)?;
    let sigma = 1.0 - conjugate(q)? / ps;
    let big_delta = norm_t.powf(sigma) * c1q.powf(1.0 - sigma) / c1p;
    let gamma = 2.0 * (4.0 * big_delta).powf(1.0 / sigma) / norm_t;
    let m = (c1p / (8.0 * norm_t)).powf(ps);
    let k = (4.0 * big_delta).powf(-1.0 / sigma) * m / 8.0;
    Ok(DensityBounds { sigma, big_delta, gamma, k, m })
}

/// Dual form for operators on `C(K)` with `0 < π_r(U) < ∞`, `1 ≤ r < t < ∞`.
pub fn summing_bounds(norm_u: f64, pi_r: f64, pi_t: f64, r: f64, t: f64) -> Result<(f64, f64, FactorBounds)> {
    if !(r >= 1.0 && t > r && t.is_finite()) {
        return Err(Error::Domain(format!("need 1 ≤ r < t < ∞, got r = {r}, t = {t}")));
    }
    positive("‖U‖", norm_u)?;
    positive("π_r", pi_r)?;
    positive("π_t", pi_t)?;
    let sigma = 1.0 - r / t;
    let big_delta = norm_u.powf(sigma) * pi_r.powf(1.0 - sigma) / pi_t;
    let gamma = 2.0 * (4.0 * big_delta).powf(1.0 / sigma) / norm_u;
    let k = (4.0 * big_delta).powf(-1.0 / sigma) * (pi_t / (8.0 * norm_u)).powf(t) / 8.0;
    Ok((sigma, big_delta, FactorBounds { gamma, k }))
}

/// Operators on `ℓ∞^N` with `π_t(U) = c‖U‖`, using `π₁(U) ≤ N‖U‖`.
pub fn cube_summing_bounds(norm_u: f64, c: f64, t: f64, n_cube: f64) -> Result<FactorBounds> {
    if !(t > 1.0 && t.is_finite()) {
        return Err(Error::Domain(format!("need 1 < t < ∞, got {t}")));
    }
    positive("‖U‖", norm_u)?;
    positive("c", c)?;
    positive("N", n_cube)?;
    let ts = conjugate(t)?;
    Ok(FactorBounds {
        gamma: 2.0 * (4.0 / c).powf(ts) * n_cube.powf(ts - 1.0) / norm_u,
        k: 2f64.powf(ts - 3.0) * (c / 8.0).powf(ts + t) * n_cube.powf(1.0 - ts),
    })
}

/// Rank-reduced form on the L₁ side: `C_{1,p}(u) ≥ c‖T‖` for every extension of
/// `T|_{Z₀}`, `n = dim T Z₀`.
pub fn l1_extension_bounds(norm_t: f64, c: f64, p: f64, eps: f64, n: usize) -> Result<FactorBounds> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("need 1 < p < ∞, got {p}")));
    }
    open_unit("ε", eps)?;
    positive("‖T‖", norm_t)?;
    positive("c", c)?;
    let ps = conjugate(p)?;
    let g = 2.0 / eps + 1.0;
    let e = n as f64 * (p - 1.0);
    Ok(FactorBounds {
        gamma: 4.0 * (2.0 / ((1.0 - eps) * c)).powf(p) * g.powf(e) / norm_t,
        k: 4f64.powf(p - 2.0) * ((1.0 - eps) * c / 8.0).powf(p * ps) * g.powf(-e),
    })
}

/// The `ε = ½, c = 2⁵` specialization: `γ < 5^δ/‖T‖`, `k > 5^{−δ} 2^{n/δ}`, `δ = (p−1)n`.
pub fn l1_extension_half_bounds(norm_t: f64, p: f64, n: usize) -> Result<(f64, FactorBounds)> {
    if !(p > 1.0 && p.is_finite()) || n == 0 {
        return Err(Error::Domain(format!("need 1 < p < ∞ and n ≥ 1, got p = {p}, n = {n}")));
    }
    positive("‖T‖", norm_t)?;
    let delta = (p - 1.0) * n as f64;
    Ok((delta, FactorBounds { gamma: 5f64.powf(delta) / norm_t, k: 5f64.powf(-delta) * 2f64.powf(n as f64 / delta) }))
}

/// Rank-reduced form on the `C(K)` side: `π_t(U|_E) = c‖U‖`, `n = dim E`.
pub fn linf_extension_bounds(norm_u: f64, c: f64, t: f64, eps: f64, n: usize) -> Result<FactorBounds> {
    if !(t > 1.0 && t.is_finite()) {
        return Err(Error::Domain(format!("need 1 < t < ∞, got {t}")));
    }
    open_unit("ε", eps)?;
    positive("‖U‖", norm_u)?;
    positive("c", c)?;
    let ts = conjugate(t)?;
    let g = 2.0 / eps + 1.0;
    let e = n as f64 / (t - 1.0);
    Ok(FactorBounds {
        gamma: 4.0 * (2.0 / ((1.0 - eps) * c)).powf(ts) * g.powf(e) / norm_u,
        k: 4f64.powf(ts - 2.0) * ((1.0 - eps) * c / 8.0).powf(t * ts) * g.powf(-e),
    })
}

/// `ε = ½, c = 2⁵`: `γ < 5^α/‖U‖`, `k > 5^{−α} 2^{n/α}`, `α = n/(t−1)`.
pub fn linf_extension_half_bounds(norm_u: f64, t: f64, n: usize) -> Result<(f64, FactorBounds)> {
    if !(t > 1.0 && t.is_finite()) || n == 0 {
        return Err(Error::Domain(format!("need 1 < t < ∞ and n ≥ 1, got t = {t}, n = {n}")));
    }
    positive("‖U‖", norm_u)?;
    let alpha = n as f64 / (t - 1.0);
    Ok((alpha, FactorBounds { gamma: 5f64.powf(alpha) / norm_u, k: 5f64.powf(-alpha) * 2f64.powf(n as f64 / alpha) }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "branch", rename_all = "kebab-case")]
pub enum KhintchineBounds {
    /// `n < 2D`: nothing to prove.
    Obvious { d: f64 },
    Bound {
        d: f64,
        p: f64,
        /// `(p−1)n`, at most `2D`.
        delta: f64,
        gamma: f64,
        k: f64,
        /// `2^{−3} C^{−1} √D`, which must equal `premise_rhs`.
        premise_lhs: f64,
        /// `2⁵‖U‖`.
        premise_rhs: f64,
    },
}

/// Subspaces of L₁ with `C_{1,p*}(X) ≤ C√p*` factored through an L₁ space:
/// `D = (2⁸C‖U‖)²`, `γ ≤ 5^{2D}`, `k ≥ 5^{−2D} 2^{n/(2D)}`.
pub fn khintchine_bounds(n: usize, c_const: f64, norm_u: f64) -> Result<KhintchineBounds> {
    positive("C", c_const)?;
    positive("‖U‖", norm_u)?;
    let d = (256.0 * c_const * norm_u).powi(2);
    let nf = n as f64;
    if nf < 2.0 * d {
        return Ok(KhintchineBounds::Obvious { d });
    }
    let ps = nf / d;
    let p = conjugate(ps)?;
    Ok(KhintchineBounds::Bound {
        d,
        p,
        delta: (p - 1.0) * nf,
        gamma: 5f64.powf(2.0 * d),
        k: 5f64.powf(-2.0 * d) * 2f64.powf(nf / (2.0 * d)),
        premise_lhs: d.sqrt() / (8.0 * c_const),
        premise_rhs: 32.0 * norm_u,
    })
}

/// Same with a quotient from a space whose dual has cotype `q`; `η` has no known
/// value and must be supplied.
pub fn cotype_bounds(n: usize, c_const: f64, q: f64, cq: f64, norm_u: f64, eta: f64) -> Result<(f64, FactorBounds)> {
    for (name, v) in [("C", c_const), ("q", q), ("C_q", cq), ("‖U‖", norm_u), ("η", eta)] {
        positive(name, v)?;
    }
    let d = eta * c_const * c_const * q * cq * cq * norm_u * norm_u;
    Ok((d, FactorBounds { gamma: 5f64.powf(d), k: 5f64.powf(-d) * 2f64.powf(n as f64 / d) }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub alpha: f64,
    pub c1: f64,
    pub ln_m: f64,
    /// `min(5^{−α} 2^{n/α}, (3/4) exp(c₁ n/α²))`.
    pub j_feasible: f64,
}

impl Growth {
    pub fn vacuous(&self) -> bool {
        self.j_feasible <= 1.0
    }
}

/// Dimension of an almost-`ℓ∞` subspace forced by `π_t(U|_E) = c‖U‖ ≥ 2⁵‖U‖`.
pub fn growth_bounds(n: f64, t: f64, c: f64) -> Result<Growth> {
    if !(t > 1.0 && t.is_finite() && n >= 1.0) {
        return Err(Error::Domain(format!("need t > 1 and n ≥ 1, got t = {t}, n = {n}")));
    }
    if !(c >= 32.0) {
        return Err(Error::Domain(format!("need c ≥ 32, got {c}")));
    }
    Ok(growth_unchecked(n, t))
}

fn growth_unchecked(n: f64, t: f64) -> Growth {
    let alpha = n / (t - 1.0);
    let c1 = growth_c1();
    let ln_m = (4.0f64 / 3.0).ln() * (std::f64::consts::LN_2 / 5.0f64.ln() * n / (alpha * alpha) - 1.0);
    let j1 = 5f64.powf(-alpha) * 2f64.powf(n / alpha);
    let j2 = 0.75 * (c1 * n / (alpha * alpha)).exp();
    Growth { alpha, c1, ln_m, j_feasible: j1.min(j2) }
}

/// `g_{ij} ≥ g_i · 2/(1 + 1/g_j)`; unknown indices default to the trivial bound 1.
pub fn james_giesy_iterate(g: &BTreeMap<u64, f64>, i: u64, j: u64) -> f64 {
    let gi = g.get(&i).copied().unwrap_or(1.0);
    let gj = g.get(&j).copied().unwrap_or(1.0);
    james_giesy_step(gi, gj)
}

pub fn james_giesy_step(gi: f64, gj: f64) -> f64 {
    gi * 2.0 / (1.0 + 1.0 / gj)
}

/// Lower bound for `g_{j₀^len}` from `g_{j₀} = a`: `a B^{len−1}`, `B = 2/(1 + 1/a)`.
pub fn james_giesy_chain(a: f64, len: u32) -> f64 {
    let mut g = BTreeMap::new();
    g.insert(1u64, a);
    let mut cur = a;
    for _ in 1..len {
        g.insert(0, cur);
        cur = james_giesy_iterate(&g, 0, 1);
    }
    cur
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectionBranch {
    /// `n ≥ (2⁵a/b)⁴`: the factorization route.
    Large,
    /// `n < (2⁵a/b)⁴`: any 2-dimensional subspace of `E`.
    TwoDimensional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionConstants {
    pub branch: SectionBranch,
    pub threshold: f64,
    pub t: Option<f64>,
    pub alpha: Option<f64>,
    /// Guaranteed dimension of the almost-`ℓ∞` subspace.
    pub j_lower: f64,
    /// One admissible pair `(A₁, A₂)`, as logarithms.
    pub ln_a1: f64,
    pub ln_a2: f64,
    /// Slack of `5^{n/(t−1)} ≤ A₁^{(a/b)²}` and `j ≥ A₂^{(b/a)⁴n}` (large branch only).
    pub large_slacks: Option<[f64; 2]>,
    /// Slack of `b ≥ A₁^{−(a/b)²}` and `2 ≥ A₂^{(2⁵)⁴}`.
    pub small_slacks: [f64; 2],
}

/// `A₁` works for every admissible input: `(a/b)² ln A₁ ≥ α ln 5` reduces to
/// `ln A₁ ≥ ln 5 · 2¹⁰ t/(t−1)` with `t ≥ 2¹⁰`.
pub fn section_ln_a1() -> f64 {
    5f64.ln() * 1024.0 * 1024.0 / 1023.0
}

/// Operators bounded below by `b` on an `n`-dimensional `E` with `d(E, ℓ₂ⁿ) = a`.
pub fn section_constants(a: f64, b: f64, n: usize) -> Result<SectionConstants> {
    if !(a >= 1.0 && b > 0.0 && b <= 1.0) || n < 2 {
        return Err(Error::Domain(format!("need a ≥ 1 ≥ b > 0 and n ≥ 2, got a = {a}, b = {b}, n = {n}")));
    }
    let nf = n as f64;
    let r = b / a;
    let threshold = (32.0 / r).powi(4);
    let ln_a1 = section_ln_a1();
    let small_cap = std::f64::consts::LN_2 / 1024f64.powi(2);
    let small = |ln_a2: f64| [b.ln() + ln_a1 / (r * r), std::f64::consts::LN_2 - 1024f64.powi(2) * ln_a2];
    if nf < threshold {
        let ln_a2 = small_cap;
        return Ok(SectionConstants {
            branch: SectionBranch::TwoDimensional,
            threshold,
            t: None,
            alpha: None,
            j_lower: 2.0,
            ln_a1,
            ln_a2,
            large_slacks: None,
            small_slacks: small(ln_a2),
        });
    }
    let t = (r / 32.0).powi(2) * nf;
    let alpha = nf / (t - 1.0);
    let g = growth_unchecked(nf, t);
    let k = 5f64.powf(-alpha) * 2f64.powf(nf / alpha);
    let grown = 0.75 * (g.c1 * nf / (alpha * alpha)).exp() - 1.0;
    let j_lower = k.min(grown).max(2.0);
    let s = r.powi(4) * nf;
    let ln_a2 = small_cap.min(j_lower.ln() / s);
    Ok(SectionConstants {
        branch: SectionBranch::Large,
        threshold,
        t: Some(t),
        alpha: Some(alpha),
        j_lower,
        ln_a1,
        ln_a2,
        large_slacks: Some([ln_a1 / (r * r) - alpha * 5f64.ln(), j_lower.ln() - s * ln_a2]),
        small_slacks: small(ln_a2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionExponent {
    /// `δ` with `k ≥ exp(δ m gl⁻⁴)` for these inputs.
    pub delta: f64,
    pub small_branch: bool,
    pub n: usize,
    pub t: Option<f64>,
    /// Natural log of the guaranteed `k`.
    pub ln_k: f64,
}

/// Exponent for spaces containing an isometric copy of the `m`-dimensional
/// Kashin-type space; `b_const` bounds `π₁(v*)` and `gl` is the Gordon–Lewis constant.
pub fn dimension_exponent(b_const: f64, gl: f64, m: usize) -> Result<DimensionExponent> {
    if !(b_const >= 1.0 && gl >= 1.0) || m < 2 {
        return Err(Error::Domain(format!("need B ≥ 1, gl ≥ 1, m ≥ 2, got B = {b_const}, gl = {gl}, m = {m}")));
    }
    let mf = m as f64;
    let n = m / 2;
    if mf <= 2.0 * (32.0 * b_const * gl).powi(4) {
        let delta = 0.25 * (32.0 * b_const).powi(-4);
        return Ok(DimensionExponent { delta, small_branch: true, n, t: None, ln_k: delta * mf * gl.powi(-4) });
    }
    let t = (32.0 * b_const * gl).powi(-2) * n as f64;
    let g = growth_unchecked(n as f64, t);
    let ln_k = g.j_feasible.ln();
    Ok(DimensionExponent { delta: ln_k * gl.powi(4) / mf, small_branch: false, n, t: Some(t), ln_k })
}

/// `η = (2𝒞)^{−p*}`, the measure budget of the greedy extraction.
pub fn extraction_eta(c_cal: f64, p: f64) -> Result<f64> {
    positive("𝒞", c_cal)?;
    Ok((2.0 * c_cal).powf(-conjugate(p)?))
}

/// Serde helpers that keep `±∞` and NaN, which JSON numbers cannot carry, as
/// the strings `"inf"`, `"-inf"` and `"nan"`. The functions at this level handle
/// `BTreeMap<String, f64>`; [`lossless::scalar`] and [`lossless::vec`] handle
/// single values and vectors.
pub mod lossless {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Num {
        F(f64),
        S(String),
    }

    impl Num {
        fn from_f64(v: f64) -> Num {
            if v.is_finite() {
                Num::F(v)
            } else if v.is_nan() {
                Num::S("nan".into())
            } else if v > 0.0 {
                Num::S("inf".into())
            } else {
                Num::S("-inf".into())
            }
        }

        fn into_f64<E: serde::de::Error>(self) -> Result<f64, E> {
            match self {
                Num::F(v) => Ok(v),
                Num::S(s) => match s.as_str() {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    "nan" => Ok(f64::NAN),
                    other => Err(E::custom(format!("not a number: {other}"))),
                },
            }
        }
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let out: BTreeMap<&String, Num> = m.iter().map(|(k, &v)| (k, Num::from_f64(v))).collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let raw = BTreeMap::<String, Num>::deserialize(d)?;
        raw.into_iter().map(|(k, n)| Ok((k, n.into_f64()?))).collect()
    }

    pub mod scalar {
        use super::Num;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            Num::from_f64(*v).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            Num::deserialize(d)?.into_f64()
        }
    }

    pub mod vec {
        use super::Num;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|x| Num::from_f64(*x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Num>::deserialize(d)?.into_iter().map(Num::into_f64).collect()
        }
    }
}

/// Named record of inputs and derived constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub name: String,
    #[serde(with = "lossless")]
    pub inputs: BTreeMap<String, f64>,
    #[serde(with = "lossless")]
    pub derived: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
}

impl ConstantLedger {
    fn new(name: &str, inputs: &BTreeMap<String, f64>) -> Self {
        ConstantLedger { name: name.into(), inputs: inputs.clone(), derived: BTreeMap::new(), flags: BTreeMap::new() }
    }

    fn set(&mut self, k: &str, v: f64) {
        self.derived.insert(k.into(), v);
    }

    fn bounds(&mut self, b: FactorBounds) {
        self.set("gamma", b.gamma);
        self.set("k", b.k);
        self.flags.insert("k_vacuous".into(), b.k < 1.0);
    }
}

/// Names accepted by [`ledger`], with their required parameters.
pub const LEDGERS: &[(&str, &[&str])] = &[
    ("density", &["norm_t", "c1p", "c1q", "p", "q"]),
    ("summing", &["norm_u", "pi_r", "pi_t", "r", "t"]),
    ("cube-summing", &["norm_u", "c", "t", "n_cube"]),
    ("l1-extension", &["norm_t", "c", "p", "eps", "n"]),
    ("l1-extension-half", &["norm_t", "p", "n"]),
    ("linf-extension", &["norm_u", "c", "t", "eps", "n"]),
    ("linf-extension-half", &["norm_u", "t", "n"]),
    ("khintchine", &["n", "c_const", "norm_u"]),
    ("cotype", &["n", "c_const", "q", "cq", "norm_u", "eta"]),
    ("growth", &["n", "t", "c"]),
    ("james-giesy", &["g_i", "g_j"]),
    ("section", &["a", "b", "n"]),
    ("dimension", &["b_const", "gl", "m"]),
    ("extraction", &["c_cal", "p"]),
];

fn as_count(name: &str, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(Error::Domain(format!("{name} must be a non-negative integer, got {v}")))
    }
}

/// Evaluates the named calculator on `params`; unknown names, missing and extra
/// parameters are rejected.
pub fn ledger(name: &str, params: &BTreeMap<String, f64>) -> Result<ConstantLedger> {
    let (_, required) = LEDGERS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Domain(format!("unknown ledger '{name}'")))?;
    for r in required.iter() {
        if !params.contains_key(*r) {
            return Err(Error::Domain(format!("ledger '{name}' needs parameter '{r}'")));
        }
    }
    if let Some(extra) = params.keys().find(|k| !required.contains(&k.as_str())) {
        return Err(Error::Domain(format!("ledger '{name}' does not take parameter '{extra}'")));
    }
    let g = |k: &str| params[k];
    let mut l = ConstantLedger::new(name, params);
    match name {
        "density" => {
            let b = density_bounds(g("norm_t"), g("c1p"), g("c1q"), g("p"), g("q"))?;
            l.set("sigma", b.sigma);
            l.set("Delta", b.big_delta);
            l.set("m", b.m);
            l.bounds(FactorBounds { gamma: b.gamma, k: b.k });
        }
        "summing" => {
            let (s, d, b) = summing_bounds(g("norm_u"), g("pi_r"), g("pi_t"), g("r"), g("t"))?;
            l.set("sigma", s);
            l.set("Delta", d);
            l.bounds(b);
        }
        "cube-summing" => l.bounds(cube_summing_bounds(g("norm_u"), g("c"), g("t"), g("n_cube"))?),
        "l1-extension" => {
            let n = as_count("n", g("n"))?;
            l.set("net_cap", net_cap(n, g("eps")));
            l.bounds(l1_extension_bounds(g("norm_t"), g("c"), g("p"), g("eps"), n)?);
        }
        "l1-extension-half" => {
            let (d, b) = l1_extension_half_bounds(g("norm_t"), g("p"), as_count("n", g("n"))?)?;
            l.set("delta", d);
            l.bounds(b);
        }
        "linf-extension" => {
            let n = as_count("n", g("n"))?;
            l.set("net_cap", net_cap(n, g("eps")));
            l.bounds(linf_extension_bounds(g("norm_u"), g("c"), g("t"), g("eps"), n)?);
        }
        "linf-extension-half" => {
            let (a, b) = linf_extension_half_bounds(g("norm_u"), g("t"), as_count("n", g("n"))?)?;
            l.set("alpha", a);
            l.bounds(b);
        }
        "khintchine" => match khintchine_bounds(as_count("n", g("n"))?, g("c_const"), g("norm_u"))? {
            KhintchineBounds::Obvious { d } => {
                l.set("D", d);
                l.flags.insert("obvious".into(), true);
            }
            KhintchineBounds::Bound { d, p, delta, gamma, k, premise_lhs, premise_rhs } => {
                l.set("D", d);
                l.set("p", p);
                l.set("delta", delta);
                l.set("premise_lhs", premise_lhs);
                l.set("premise_rhs", premise_rhs);
                l.flags.insert("obvious".into(), false);
                l.bounds(FactorBounds { gamma, k });
            }
        },
        "cotype" => {
            let (d, b) = cotype_bounds(as_count("n", g("n"))?, g("c_const"), g("q"), g("cq"), g("norm_u"), g("eta"))?;
            l.set("D", d);
            l.bounds(b);
        }
        "growth" => {
            let gr = growth_bounds(g("n"), g("t"), g("c"))?;
            l.set("alpha", gr.alpha);
            l.set("c1", gr.c1);
            l.set("ln_M", gr.ln_m);
            l.set("j_feasible", gr.j_feasible);
            l.flags.insert("vacuous".into(), gr.vacuous());
        }
        "james-giesy" => {
            if !(g("g_i") >= 1.0 && g("g_j") >= 1.0) {
                return Err(Error::Domain("g values must be at least 1".into()));
            }
            l.set("g_ij", james_giesy_step(g("g_i"), g("g_j")));
            l.set("B", 2.0 / (1.0 + 1.0 / g("g_j")));
        }
        "section" => {
            let s = section_constants(g("a"), g("b"), as_count("n", g("n"))?)?;
            l.set("threshold", s.threshold);
            if let (Some(t), Some(a)) = (s.t, s.alpha) {
                l.set("t", t);
                l.set("alpha", a);
            }
            l.set("j_lower", s.j_lower);
            l.set("ln_A1", s.ln_a1);
            l.set("ln_A2", s.ln_a2);
            l.flags.insert("two_dimensional_branch".into(), s.branch == SectionBranch::TwoDimensional);
            let slacks = s.small_slacks.iter().chain(s.large_slacks.iter().flatten());
            l.flags.insert("feasible".into(), slacks.clone().all(|&x| x >= 0.0));
        }
        "dimension" => {
            let d = dimension_exponent(g("b_const"), g("gl"), as_count("m", g("m"))?)?;
            l.set("delta", d.delta);
            l.set("n", d.n as f64);
            l.set("ln_k", d.ln_k);
            if let Some(t) = d.t {
                l.set("t", t);
            }
            l.flags.insert("small_branch".into(), d.small_branch);
        }
        "extraction" => l.set("eta", extraction_eta(g("c_cal"), g("p"))?),
        _ => unreachable!(),
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn density_example() {
        let b = density_bounds(1.0, 1.0, 1.0, 2.0, f64::INFINITY).unwrap();
        assert!(close(b.sigma, 0.5) && close(b.big_delta, 1.0) && close(b.gamma, 32.0));
        assert!(close(b.k, 1.0 / 8.0 / 16.0 / 64.0));
        let s = density_bounds(3.0, 3.0, 3.0, 2.0, f64::INFINITY).unwrap();
        assert!(close(s.big_delta, b.big_delta));
        let near = density_bounds(1.0, 1.0, 2.0, 2.0, 2.0 + 1e-13).unwrap();
        assert!(near.gamma.is_infinite() && near.k == 0.0);
        assert!(density_bounds(1.0, 1.0, 1.0, 3.0, 2.0).is_err());
    }

    #[test]
    fn cube_example() {
        let b = cube_summing_bounds(1.0, 1.0, 2.0, 16.0).unwrap();
        assert!(close(b.gamma, 512.0));
    }

    #[test]
    fn growth_constants() {
        assert!((growth_c1() - 0.1239).abs() < 1e-3);
        assert!(close(james_giesy_step(2.0, 2.0), 8.0 / 3.0));
        assert!(close(james_giesy_step(5.0, 1.0), 5.0));
        assert!(close(james_giesy_chain(2.0, 3), 32.0 / 9.0));
        let g = growth_bounds(10.0, 1.0 + 1e-6, 32.0).unwrap();
        assert!(g.ln_m < 0.0 && g.vacuous());
    }

    #[test]
    fn khintchine_branches() {
        assert!(matches!(khintchine_bounds(10, 1.0, 1.0).unwrap(), KhintchineBounds::Obvious { .. }));
        let c = 1.0 / 256.0;
        let KhintchineBounds::Bound { d, delta, .. } = khintchine_bounds(2, c, 1.0).unwrap() else { panic!() };
        assert!(close(d, 1.0) && close(delta, 2.0 * d));
    }

    #[test]
    fn section_boundary() {
        let s = section_constants(1.0, 1.0, 1 << 20).unwrap();
        assert_eq!(s.branch, SectionBranch::Large);
        assert!(close(s.t.unwrap(), 1024.0));
        let small = section_constants(1.0, 1.0, (1 << 20) - 1).unwrap();
        assert_eq!(small.branch, SectionBranch::TwoDimensional);
    }

    #[test]
    fn dimension_small_branch() {
        let d = dimension_exponent(1.0, 1.0, 100).unwrap();
        assert!(d.small_branch && close(d.delta, 0.25 / 32f64.powi(4)));
        assert_eq!(dimension_exponent(1.0, 1.0, 10).unwrap().n, 5);
    }

    #[test]
    fn ledger_round_trip() {
        let mut p = BTreeMap::new();
        for (k, v) in [("norm_t", 1.0), ("c1p", 1.0), ("c1q", 2.0), ("p", 2.0), ("q", 2.0 + 1e-13)] {
            p.insert(k.to_string(), v);
        }
        let l = ledger("density", &p).unwrap();
        let s = serde_json::to_string(&l).unwrap();
        let back: ConstantLedger = serde_json::from_str(&s).unwrap();
        assert_eq!(back.inputs, l.inputs);
        assert!(back.derived["gamma"].is_infinite());
        p.insert("extra".into(), 1.0);
        assert!(ledger("density", &p).is_err());
    }
}
