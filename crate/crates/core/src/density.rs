//! Change-of-density constants `C_{1,q}(T)` for operators into `L₁(μ)`.
//!
//! For a domain ball `conv(±v_j)` and `y_j = T v_j`,
//!
//! ```text
//! C_{1,q}(T) = min_{w ≥ 0, ∫w dμ = 1}  max_j ( Σ_a μ_a |y_ja|^q w_a^{1-q} )^{1/q}.
//! ```
//!
//! The solver works on the dual: for weights `λ` on the vertices, the inner
//! minimum over `w` has the closed form `S(λ) = Σ_a μ_a c_a^{1/q}` with
//! `c_a = Σ_j λ_j |y_ja|^q`, attained at `w_a ∝ c_a^{1/q}`. Every `S(λ)` is a
//! certified lower bound and every `w` gives an upper bound, so the returned gap
//! is a true bracket. `λ` is improved by damped multiplicative updates, all in
//! log space so that exponents in the thousands stay finite.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{conjugate, MeasureSpace};
use crate::op::{Codomain, LinOp};
use crate::rng::SplitRng;
use crate::space::{Ball, NormedSpace};

pub const EPS_W: f64 = 1e-12;
pub const ITERATION_BUDGET: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCertificate {
    pub q: f64,
    /// The density `h` (one value per atom of the original measure).
    pub h: Vec<f64>,
    /// `s` with `1/q + 1/s = 1`.
    pub s_exponent: f64,
    pub upper: f64,
    pub lower: f64,
    pub gap: f64,
    /// Dual weights on the domain vertex representatives.
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl DensityCertificate {
    /// The probability density `w = h^s / ∫h^s dμ` behind `h`.
    pub fn density(&self, mu: &MeasureSpace) -> Vec<f64> {
        let hs: Vec<f64> = self.h.iter().map(|h| h.powf(self.s_exponent)).collect();
        let z = mu.integral(&hs);
        hs.iter().map(|v| v / z).collect()
    }
}

/// Vertex images of an operator into `L_r(μ)`, restricted to atoms where some
/// image is nonzero (`0/0 = 0`).
#[derive(Debug, Clone)]
pub(crate) struct Profile {
    pub atoms: Vec<usize>,
    pub mu: Vec<f64>,
    /// `y[(j, a)] = (T v_j)_a` over kept vertices and kept atoms.
    pub y: DMatrix<f64>,
    /// Indices of the kept vertex representatives.
    pub vertices: Vec<usize>,
    pub reps: DMatrix<f64>,
    pub total_atoms: usize,
}

/// The measure of an operator into `L_r(μ)`.
pub fn measure_of(t: &LinOp) -> Result<&MeasureSpace> {
    match &t.codomain {
        Codomain::Lebesgue { measure, .. } => Ok(measure),
        Codomain::Normed(_) => Err(Error::Domain("operator must take values in an L_r(μ) space".into())),
    }
}

pub(crate) fn profile(t: &LinOp) -> Result<Profile> {
    let mu = measure_of(t)?;
    if !t.domain.is_enumerable() {
        return Err(Error::Capacity {
            what: "density solver",
            detail: "domain ball has no enumerable vertex list".into(),
        });
    }
    let reps = t.domain.vertex_reps()?;
    let images = &t.matrix * &reps; // atoms × vertices
    let scale = images.amax();
    let vertices: Vec<usize> =
        (0..images.ncols()).filter(|&j| images.column(j).amax() > 0.0).collect();
    let atoms: Vec<usize> = (0..images.nrows())
        .filter(|&a| scale > 0.0 && images.row(a).amax() > 0.0)
        .collect();
    let y = DMatrix::from_fn(vertices.len(), atoms.len(), |j, a| images[(atoms[a], vertices[j])]);
    Ok(Profile {
        mu: atoms.iter().map(|&a| mu.weights()[a]).collect(),
        atoms,
        y,
        vertices,
        reps,
        total_atoms: mu.atom_count(),
    })
}

fn lse(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// State of the dual iteration for one `λ`.
struct Eval {
    /// `ln S(λ)`.
    ls: f64,
    /// `ln w_a` of the closed-form primal point.
    lw: Vec<f64>,
    /// `ln F_j(w)`.
    lf: Vec<f64>,
}

struct DualProblem<'a> {
    q: f64,
    /// `q·ln|y_ja|`, rows = vertices.
    ly: DMatrix<f64>,
    lmu: Vec<f64>,
    _p: std::marker::PhantomData<&'a ()>,
}

impl DualProblem<'_> {
    fn new(p: &Profile, q: f64) -> Self {
        let ly = p.y.map(|v| if v == 0.0 { f64::NEG_INFINITY } else { q * v.abs().ln() });
        Self { q, ly, lmu: p.mu.iter().map(|m| m.ln()).collect(), _p: std::marker::PhantomData }
    }

    fn eval(&self, llam: &[f64]) -> Eval {
        let (nj, na) = self.ly.shape();
        let q = self.q;
        let lc: Vec<f64> = (0..na).map(|a| lse((0..nj).map(|j| llam[j] + self.ly[(j, a)]))).collect();
        let ls = lse((0..na).map(|a| self.lmu[a] + lc[a] / q));
        let lw: Vec<f64> = lc.iter().map(|c| c / q - ls).collect();
        let lf = (0..nj)
            .map(|j| lse((0..na).map(|a| self.lmu[a] + self.ly[(j, a)] + (1.0 - q) * lw[a])))
            .collect();
        Eval { ls, lw, lf }
    }

    /// `ln max_j F_j(w)^{1/q}` for an arbitrary log-density.
    fn upper_at(&self, lw: &[f64]) -> f64 {
        let (nj, na) = self.ly.shape();
        (0..nj)
            .map(|j| lse((0..na).map(|a| self.lmu[a] + self.ly[(j, a)] + (1.0 - self.q) * lw[a])))
            .fold(f64::NEG_INFINITY, f64::max)
            / self.q
    }
}

fn normalize_log(v: &mut [f64]) {
    let z = lse(v.iter().copied());
    for x in v.iter_mut() {
        *x -= z;
    }
}

struct DualResult {
    lower: f64,
    lam: Vec<f64>,
    lw: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn solve_dual(p: &Profile, q: f64, tol: f64, budget: usize) -> DualResult {
    let dp = DualProblem::new(p, q);
    let nj = p.y.nrows();
    let mut llam = vec![-(nj as f64).ln(); nj];
    let mut cur = dp.eval(&llam);
    // Pure vertex weights give the Hölder bound ‖T v_j‖₁.
    let mut best_lower = cur.ls;
    let mut best_lam = llam.clone();
    for j in 0..nj {
        let l1 = lse((0..p.mu.len()).map(|a| dp.lmu[a] + dp.ly[(j, a)] / q));
        if l1 > best_lower {
            best_lower = l1;
            best_lam = (0..nj).map(|k| if k == j { 0.0 } else { f64::NEG_INFINITY }).collect();
        }
    }
    let mut best_upper = dp.upper_at(&cur.lw);
    let mut best_lw = cur.lw.clone();
    let mut eta = 1.0;
    let mut it = 0;
    let mut converged = false;
    while it < budget {
        if best_upper - best_lower <= (1.0 + tol).ln().min(tol) {
            converged = true;
            break;
        }
        it += 1;
        let qs = q * cur.ls;
        let mut trial: Vec<f64> = llam.iter().zip(&cur.lf).map(|(l, f)| l + eta * (f - qs)).collect();
        normalize_log(&mut trial);
        let next = dp.eval(&trial);
        if next.ls + 1e-15 * next.ls.abs().max(1.0) < cur.ls {
            eta *= 0.5;
            if eta < 1e-14 {
                break;
            }
            continue;
        }
        llam = trial;
        cur = next;
        eta = (eta * 1.25).min(1e6);
        if cur.ls > best_lower {
            best_lower = cur.ls;
            best_lam = llam.clone();
        }
        let up = dp.upper_at(&cur.lw);
        if up < best_upper {
            best_upper = up;
            best_lw = cur.lw.clone();
        }
    }
    if !converged && best_upper - best_lower <= (1.0 + tol).ln().min(tol) {
        converged = true;
    }
    DualResult {
        lower: best_lower.exp(),
        lam: best_lam.iter().map(|l| l.exp()).collect(),
        lw: best_lw,
        iterations: it,
        converged,
    }
}

fn zero_certificate(q: f64, atoms: usize, nv: usize) -> Result<DensityCertificate> {
    Ok(DensityCertificate {
        q,
        h: vec![1.0; atoms],
        s_exponent: conjugate(q)?,
        upper: 0.0,
        lower: 0.0,
        gap: 0.0,
        lambda: vec![0.0; nv],
        iterations: 0,
        converged: true,
    })
}

/// `‖h‖_s · max_j ‖h⁻¹ T v_j‖_q` recomputed from scratch.
pub fn upper_from_h(t: &LinOp, h: &[f64], q: f64) -> Result<f64> {
    let mu = measure_of(t)?;
    let s = conjugate(q)?;
    let reps = t.domain.vertex_reps()?;
    let images = &t.matrix * &reps;
    let hn = mu.lp_norm(h, s)?;
    let mut best: f64 = 0.0;
    for col in images.column_iter() {
        let f: Vec<f64> = col.iter().zip(h).map(|(y, h)| y / h).collect();
        best = best.max(mu.lp_norm(&f, q)?);
    }
    Ok(hn * best)
}

/// The bracket for `C_{1,q}(T)`, returned even when the budget runs out
/// (`converged` says whether the relative gap reached `tol`).
pub fn c1q_bracket(t: &LinOp, q: f64, tol: f64) -> Result<DensityCertificate> {
    c1q_bracket_with_budget(t, q, tol, ITERATION_BUDGET)
}

pub fn c1q_bracket_with_budget(t: &LinOp, q: f64, tol: f64, budget: usize) -> Result<DensityCertificate> {
    if !(q > 1.0) || q.is_infinite() {
        return Err(Error::Domain(format!("c1q needs 1 < q < ∞, got {q}; use c1inf for q = ∞")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let p = profile(t)?;
    if p.y.nrows() == 0 || p.atoms.is_empty() {
        return zero_certificate(q, p.total_atoms, p.reps.ncols());
    }
    let r = solve_dual(&p, q, tol, budget);
    let s = conjugate(q)?;
    let mut h = vec![EPS_W; p.total_atoms];
    for (k, &a) in p.atoms.iter().enumerate() {
        // h = w^{1/s}; the scale of h is irrelevant to the bound.
        h[a] = (r.lw[k] / s).exp().max(EPS_W);
    }
    let upper = upper_from_h(t, &h, q)?.max(r.lower);
    let mut lambda = vec![0.0; p.reps.ncols()];
    for (k, &j) in p.vertices.iter().enumerate() {
        lambda[j] = r.lam[k];
    }
    let gap = upper - r.lower;
    Ok(DensityCertificate {
        q,
        h,
        s_exponent: s,
        upper,
        lower: r.lower,
        gap,
        lambda,
        iterations: r.iterations,
        converged: gap <= tol * upper || r.converged,
    })
}

/// `C_{1,q}(T)` to relative gap `tol`; a budget overrun is an error carrying the bracket.
pub fn c1q(t: &LinOp, q: f64, tol: f64) -> Result<DensityCertificate> {
    let cert = c1q_bracket(t, q, tol)?;
    if !cert.converged {
        return Err(Error::Convergence {
            stage: "density solver",
            iterations: cert.iterations,
            best_upper: cert.upper,
            best_lower: cert.lower,
            gap: cert.gap,
        });
    }
    Ok(cert)
}

/// Pointwise envelope `max_j |T v_j|` (or `‖row_a‖₂` for a Euclidean domain).
pub fn envelope(t: &LinOp) -> Result<Vec<f64>> {
    measure_of(t)?;
    if matches!(t.domain.ball(), Ball::Euclidean) {
        return Ok(t.matrix.row_iter().map(|r| r.norm()).collect());
    }
    if !t.domain.is_enumerable() {
        return Err(Error::Capacity { what: "envelope", detail: "domain not enumerable".into() });
    }
    let images = &t.matrix * t.domain.vertex_reps()?;
    Ok(images.row_iter().map(|r| r.amax()).collect())
}

/// `C_{1,∞}(T) = ∫ max_j |T v_j| dμ`, exact.
pub fn c1inf(t: &LinOp) -> Result<f64> {
    let env = envelope(t)?;
    Ok(measure_of(t)?.integral(&env))
}

/// A density `φ` with `∫φ dμ = 1` and `‖φ⁻¹T: Z → L_r(φ dμ)‖ = value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaureyForm {
    pub r: f64,
    pub phi: Vec<f64>,
    pub value: f64,
    /// Certified lower bound for `C_{1,r}(T)`.
    pub lower: f64,
}

/// `‖φ⁻¹T: Z → L_r(φ dμ)‖` with `0/0 = 0`.
pub fn maurey_value(t: &LinOp, phi: &[f64], r: f64) -> Result<f64> {
    let mu = measure_of(t)?;
    let reps = t.domain.vertex_reps()?;
    let images = &t.matrix * &reps;
    let w = mu.reweight(&phi.iter().map(|p| p.max(f64::MIN_POSITIVE)).collect::<Vec<_>>())?;
    let mut best: f64 = 0.0;
    for col in images.column_iter() {
        let mut f = Vec::with_capacity(phi.len());
        for (a, &y) in col.iter().enumerate() {
            if phi[a] > 0.0 {
                f.push(y / phi[a]);
            } else if y == 0.0 {
                f.push(0.0);
            } else {
                return Err(Error::Domain("density vanishes where the operator does not".into()));
            }
        }
        best = best.max(w.lp_norm(&f, r)?);
    }
    Ok(best)
}

pub fn maurey_density(t: &LinOp, r: f64, tol: f64) -> Result<MaureyForm> {
    let mu = measure_of(t)?;
    if r.is_infinite() {
        let env = envelope(t)?;
        let total = mu.integral(&env);
        if total == 0.0 {
            return Ok(MaureyForm { r, phi: vec![1.0 / mu.total_mass(); env.len()], value: 0.0, lower: 0.0 });
        }
        let phi: Vec<f64> = env.iter().map(|e| e / total).collect();
        return Ok(MaureyForm { r, phi, value: total, lower: total });
    }
    let cert = c1q(t, r, tol)?;
    if cert.upper == 0.0 {
        return Ok(MaureyForm { r, phi: vec![1.0 / mu.total_mass(); mu.atom_count()], value: 0.0, lower: 0.0 });
    }
    let env = envelope(t)?;
    let mut phi = cert.density(mu);
    for (p, e) in phi.iter_mut().zip(&env) {
        if *e == 0.0 {
            *p = 0.0;
        }
    }
    let z = mu.integral(&phi);
    phi.iter_mut().for_each(|p| *p /= z);
    let value = maurey_value(t, &phi, r)?;
    Ok(MaureyForm { r, phi, value, lower: cert.lower })
}

/// Result of averaging two Maurey densities and dividing them out.
#[derive(Debug, Clone)]
pub struct Mixed {
    /// `φ⁻¹ T` into `L₁(φ dμ)` on the kept atoms.
    pub t1: LinOp,
    pub phi: Vec<f64>,
    /// Original indices of the atoms of `t1`'s measure.
    pub atoms: Vec<usize>,
}

pub fn mix_and_renormalize(t: &LinOp, fp: &MaureyForm, fq: &MaureyForm) -> Result<Mixed> {
    let mu = measure_of(t)?;
    let n = mu.atom_count();
    if fp.phi.len() != n || fq.phi.len() != n {
        return Err(Error::Shape("densities must live on the operator's measure".into()));
    }
    let phi: Vec<f64> = fp.phi.iter().zip(&fq.phi).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut atoms = Vec::new();
    for a in 0..n {
        if phi[a] > 0.0 {
            atoms.push(a);
        } else if t.matrix.row(a).amax() > 0.0 {
            return Err(Error::Domain(format!("mixed density vanishes on atom {a} where T does not")));
        }
    }
    let measure = MeasureSpace::new(atoms.iter().map(|&a| phi[a] * mu.weights()[a]).collect())?;
    let m = DMatrix::from_fn(atoms.len(), t.matrix.ncols(), |i, z| t.matrix[(atoms[i], z)] / phi[atoms[i]]);
    let t1 = LinOp::into_l1(t.domain.clone(), measure, m)?;
    for f in [fp, fq] {
        let got = t1.with_exponent(f.r)?.op_norm()?.value;
        let cap = 2f64.powf(1.0 / conjugate(f.r)?) * f.value;
        if got > cap * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::Alarm(format!("mixed density norm {got} exceeds 2^(1/r*)·C = {cap} at r = {}", f.r)));
        }
    }
    Ok(Mixed { t1, phi, atoms })
}

/// A supergradient-type norming functional for `u ↦ C_{1,q}(u)`: the gradient of
/// `u ↦ S(λ; u)` at `t`. It satisfies `⟨G, u⟩ ≤ C_{1,q}(u)` for every `u` and
/// `⟨G, t⟩ = S(λ; t)`, the certified lower bound.
pub fn norming_gradient(t: &LinOp, cert: &DensityCertificate) -> Result<DMatrix<f64>> {
    let mu = measure_of(t)?;
    let q = cert.q;
    let reps = t.domain.vertex_reps()?;
    let images = &t.matrix * &reps; // atoms × J
    let mut g = DMatrix::zeros(t.matrix.nrows(), t.matrix.ncols());
    for a in 0..images.nrows() {
        let top = images.row(a).amax();
        if top == 0.0 {
            continue;
        }
        // Scale by the row max so |y|^q cannot overflow; the ratio is scale-free.
        let mut c = 0.0;
        let mut acc = DVector::zeros(t.matrix.ncols());
        for (j, &l) in cert.lambda.iter().enumerate() {
            if l == 0.0 {
                continue;
            }
            let y = images[(a, j)] / top;
            if y == 0.0 {
                continue;
            }
            c += l * y.abs().powf(q);
            acc += reps.column(j) * (l * y.abs().powf(q - 1.0) * y.signum());
        }
        if c > 0.0 {
            let factor = mu.weights()[a] * c.powf(1.0 / q - 1.0);
            g.row_mut(a).copy_from(&(acc * factor).transpose());
        }
    }
    Ok(g)
}

/// `S(λ; u)` for fixed dual weights: the lower bound that `λ` certifies for `u`.
pub fn dual_value(u: &LinOp, lambda: &[f64], q: f64) -> Result<f64> {
    let mu = measure_of(u)?;
    let images = &u.matrix * u.domain.vertex_reps()?;
    let mut s = 0.0;
    for a in 0..images.nrows() {
        let top = images.row(a).amax();
        if top == 0.0 {
            continue;
        }
        let c: f64 = lambda.iter().enumerate().map(|(j, l)| l * (images[(a, j)] / top).abs().powf(q)).sum();
        s += mu.weights()[a] * top * c.powf(1.0 / q);
    }
    Ok(s)
}

/// A `π_t` value with its bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiEstimate {
    pub t: f64,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub certified: bool,
}

const SPHERE_SAMPLES: usize = 4000;

/// `π_t(U)` for `U: ℓ∞ᴺ → X`, computed as `C_{1,t*}(U*)` with `U*: X* → ℓ₁ᴺ`
/// (counting measure). `t = 1` and Hilbert targets at `t = 2` use closed forms.
pub fn pi_dual(u: &LinOp, t: f64, tol: f64) -> Result<PiEstimate> {
    if !matches!(u.domain.ball(), Ball::SignCube) {
        return Err(Error::Domain("pi_dual needs an operator defined on ℓ∞ᴺ".into()));
    }
    let Codomain::Normed(x) = &u.codomain else {
        return Err(Error::Domain("pi_dual needs a normed-space codomain".into()));
    };
    if !(t >= 1.0) {
        return Err(Error::Domain(format!("π_t needs t ≥ 1, got {t}")));
    }
    let n = u.domain.dim();
    if u.matrix.amax() == 0.0 {
        return Ok(PiEstimate { t, value: 0.0, lower: 0.0, upper: 0.0, certified: true });
    }
    let counting = MeasureSpace::counting(n)?;
    if t == 1.0 {
        let mut s = 0.0;
        for i in 0..n {
            s += x.norm(u.matrix.column(i).as_slice())?;
        }
        return Ok(PiEstimate { t, value: s, lower: s, upper: s, certified: true });
    }
    if matches!(x.ball(), Ball::Euclidean) {
        if t == 2.0 {
            let hs = u.matrix.norm();
            return Ok(PiEstimate { t, value: hs, lower: hs, upper: hs, certified: true });
        }
        // Inscribed sample of the sphere: a lower estimate only.
        let mut rng = SplitRng::new(0x5eed_0f_5a3e);
        let d = x.dim();
        let mut pts = DMatrix::zeros(d, SPHERE_SAMPLES + d);
        for k in 0..d {
            pts[(k, k)] = 1.0;
        }
        for c in d..pts.ncols() {
            let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            pts.set_column(c, &(&v / v.norm()));
        }
        let adj = LinOp::into_l1(NormedSpace::from_reps(pts)?, counting, u.matrix.transpose())?;
        let cert = c1q_bracket(&adj, conjugate(t)?, tol)?;
        return Ok(PiEstimate { t, value: cert.upper, lower: cert.lower, upper: cert.upper, certified: false });
    }
    let adj = LinOp::into_l1(x.dual()?, counting, u.matrix.transpose())?;
    if t.is_infinite() {
        let v = adj.op_norm()?.value;
        return Ok(PiEstimate { t, value: v, lower: v, upper: v, certified: true });
    }
    let cert = c1q(&adj, conjugate(t)?, tol)?;
    Ok(PiEstimate { t, value: cert.upper, lower: cert.lower, upper: cert.upper, certified: true })
}

/// `√(n/t)`, the lower bound for `π_t` of the identity of ℓ₂ⁿ.
pub fn pi_t_l2_lower(n: usize, t: f64) -> Result<f64> {
    if n == 0 || !(t >= 1.0) {
        return Err(Error::Domain("pi_t_l2_lower needs n ≥ 1 and t ≥ 1".into()));
    }
    Ok((n as f64 / t).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atom() -> LinOp {
        LinOp::into_l1(
            NormedSpace::l1(2),
            MeasureSpace::new(vec![0.5, 0.5]).unwrap(),
            DMatrix::from_diagonal_element(2, 2, 2.0),
        )
        .unwrap()
    }

    #[test]
    fn symmetric_two_atom_value() {
        let c = c1q(&two_atom(), 2.0, 1e-10).unwrap();
        assert!((c.upper - 2f64.sqrt()).abs() < 1e-8, "{c:?}");
        assert!(c.lower <= c.upper && c.gap <= 1e-9);
        assert!((c1inf(&two_atom()).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_atom_is_one() {
        let t = LinOp::into_l1(NormedSpace::l1(1), MeasureSpace::new(vec![1.0]).unwrap(), DMatrix::from_element(1, 1, 1.0)).unwrap();
        for q in [1.5, 2.0, 7.0] {
            assert!((c1q(&t, q, 1e-10).unwrap().upper - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_operator() {
        let t = two_atom().scaled(0.0);
        let c = c1q(&t, 3.0, 1e-8).unwrap();
        assert_eq!((c.upper, c.lower), (0.0, 0.0));
        assert_eq!(c1inf(&t).unwrap(), 0.0);
    }

    #[test]
    fn upper_reproduces_from_h() {
        let t = LinOp::into_l1(
            NormedSpace::l1(2),
            MeasureSpace::new(vec![0.2, 0.3, 0.5]).unwrap(),
            DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -2.0, 0.1, 0.3, 1.0]),
        )
        .unwrap();
        let c = c1q(&t, 3.0, 1e-9).unwrap();
        let again = upper_from_h(&t, &c.h, 3.0).unwrap();
        assert!((again - c.upper).abs() <= 1e-10 * c.upper);
    }

    #[test]
    fn norming_gradient_pairs_to_lower_bound() {
        let t = LinOp::into_l1(
            NormedSpace::l1(2),
            MeasureSpace::new(vec![0.2, 0.3, 0.5]).unwrap(),
            DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -2.0, 0.1, 0.3, 1.0]),
        )
        .unwrap();
        let c = c1q(&t, 2.5, 1e-9).unwrap();
        let g = norming_gradient(&t, &c).unwrap();
        let pair = g.dot(&t.matrix);
        assert!((pair - c.lower).abs() < 1e-9 * c.lower, "{pair} vs {}", c.lower);
        assert!((dual_value(&t, &c.lambda, 2.5).unwrap() - c.lower).abs() < 1e-9);
    }

    #[test]
    fn maurey_forms_and_mixing() {
        let t = two_atom();
        let finf = maurey_density(&t, f64::INFINITY, 1e-9).unwrap();
        assert_eq!(finf.phi, vec![1.0, 1.0]);
        assert!((finf.value - 2.0).abs() < 1e-15);
        let f2 = maurey_density(&t, 2.0, 1e-10).unwrap();
        let m = mix_and_renormalize(&t, &f2, &finf).unwrap();
        assert!((m.t1.matrix[(0, 0)] - 2.0).abs() < 1e-6);
        assert_eq!(m.atoms, vec![0, 1]);
    }

    #[test]
    fn mixing_drops_dead_atoms() {
        let t = LinOp::into_l1(
            NormedSpace::l1(1),
            MeasureSpace::new(vec![0.5, 0.5]).unwrap(),
            DMatrix::from_column_slice(2, 1, &[2.0, 0.0]),
        )
        .unwrap();
        let fp = maurey_density(&t, 2.0, 1e-10).unwrap();
        let fq = maurey_density(&t, f64::INFINITY, 1e-10).unwrap();
        let m = mix_and_renormalize(&t, &fp, &fq).unwrap();
        assert_eq!(m.atoms, vec![0]);
        assert!((m.t1.op_norm().unwrap().value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pi_closed_forms() {
        let u = LinOp::new(NormedSpace::linf(2), Codomain::Normed(NormedSpace::l2(2)), DMatrix::identity(2, 2)).unwrap();
        assert!((pi_dual(&u, 1.0, 1e-9).unwrap().value - 2.0).abs() < 1e-12);
        assert!((pi_dual(&u, 2.0, 1e-9).unwrap().value - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(pi_dual(&u.scaled(0.0), 2.0, 1e-9).unwrap().value, 0.0);
        assert!((pi_t_l2_lower(4, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((pi_t_l2_lower(9, 4.0).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn pi_two_via_duality_matches_hilbert_schmidt_on_polytope_target() {
        // ℓ₁² target written as a vertex list; π₁ must equal Σ‖Ue_i‖₁.
        let x = NormedSpace::from_reps(DMatrix::identity(2, 2)).unwrap();
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -1.0, 0.0, 2.0, 1.0]);
        let u = LinOp::new(NormedSpace::linf(3), Codomain::Normed(x), m.clone()).unwrap();
        let p1 = pi_dual(&u, 1.0, 1e-9).unwrap().value;
        let direct: f64 = m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).sum();
        assert!((p1 - direct).abs() < 1e-12);
        let p2 = pi_dual(&u, 2.0, 1e-9).unwrap();
        let p3 = pi_dual(&u, 3.0, 1e-9).unwrap();
        let pinf = pi_dual(&u, f64::INFINITY, 1e-9).unwrap();
        assert!(p1 >= p2.value - 1e-9 && p2.value >= p3.value - 1e-7 && p3.value >= pinf.value - 1e-7);
    }
}
