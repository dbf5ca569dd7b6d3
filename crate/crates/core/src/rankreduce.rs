//! Finite-rank projections that reproduce a low-rank operator (L₁ side) or a
//! finite-dimensional subspace (ℓ∞ side), and the factorizations built on them.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::{l1_extension_bounds, l1_extension_half_bounds, linf_extension_bounds, linf_extension_half_bounds, net_cap};
use crate::density::{c1q, c1q_bracket, measure_of, norming_gradient};
use crate::ell1fact::{density_factorization, l1_to_l1k_norm, BoundReport, DensityFactorization, FactorizationWitness, Variant};
use crate::error::{Error, Result};
use crate::lp::{extend_functional, min_norm_preimage, min_weighted_l1, Cmp, LpProblem};
use crate::measure::{conjugate, MeasureSpace};
use crate::op::{Codomain, LinOp};
use crate::rng::SplitRng;
use crate::space::NormedSpace;

/// Largest `(2/ε + 1)^n` for which a net is built.
pub const MAX_NET_VOLUME: f64 = 3125.0;
pub const REPRODUCTION_TOL: f64 = 1e-8;
const NET_SEED: u64 = 0x6e65_745f_7365_6564;

/// Numerical rank relative to the largest singular value.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * top).count()
}

/// Orthonormal basis (columns) of the column space, ordered by singular value.
fn range_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested");
    let top = svd.singular_values.max();
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| top > 0.0 && svd.singular_values[i] > 1e-10 * top).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    if idx.is_empty() {
        return DMatrix::zeros(m.nrows(), 0);
    }
    DMatrix::from_columns(&idx.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>())
}

/// Orthonormal rows spanning the annihilator of the column space of `z0`.
fn annihilator(z0: &DMatrix<f64>) -> DMatrix<f64> {
    let d = z0.nrows();
    let b = range_basis(z0);
    let proj = DMatrix::identity(d, d) - &b * b.transpose();
    let eig = SymmetricEigen::new(proj);
    let rows: Vec<_> = (0..d).filter(|&i| eig.eigenvalues[i] > 0.5).map(|i| eig.eigenvectors.column(i).transpose()).collect();
    if rows.is_empty() {
        DMatrix::zeros(0, d)
    } else {
        DMatrix::from_rows(&rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCover {
    /// Unit vectors as columns; the set is symmetric (`x` and `−x` both present).
    pub points: DMatrix<f64>,
    pub eps: f64,
}

impl NetCover {
    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    /// One point of each `±x` pair.
    pub fn pair_reps(&self) -> DMatrix<f64> {
        let k = self.len() / 2;
        DMatrix::from_fn(self.points.nrows(), k, |i, j| self.points[(i, 2 * j)])
    }

    /// `(2/ε + 1)^n`.
    pub fn volume_bound(&self) -> f64 {
        (2.0 / self.eps + 1.0).powi(self.points.nrows() as i32)
    }

    /// Largest distance from `samples` random unit vectors to the net.
    pub fn max_gap(&self, space: &NormedSpace, samples: usize, seed: u64) -> Result<f64> {
        let mut rng = SplitRng::new(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x = random_unit(space, &mut rng)?;
            worst = worst.max(distance_to(space, &self.points, &x)?);
        }
        Ok(worst)
    }
}

fn random_unit(space: &NormedSpace, rng: &mut SplitRng) -> Result<DVector<f64>> {
    loop {
        let v = DVector::from_fn(space.dim(), |_, _| StandardNormal.sample(rng));
        let n = space.norm(v.as_slice())?;
        if n > 1e-12 {
            return Ok(v / n);
        }
    }
}

fn distance_to(space: &NormedSpace, points: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for c in points.column_iter() {
        best = best.min(space.norm((x - c).as_slice())?);
    }
    Ok(best)
}

/// Greedy ε-separated symmetric subset of the unit sphere, maximal on a large
/// sample; `seeds` (any nonzero vectors) are normalized and offered first.
pub fn epsilon_net(space: &NormedSpace, eps: f64) -> Result<NetCover> {
    epsilon_net_seeded(space, eps, &DMatrix::zeros(space.dim(), 0), NET_SEED)
}

pub fn epsilon_net_seeded(space: &NormedSpace, eps: f64, seeds: &DMatrix<f64>, seed: u64) -> Result<NetCover> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("ε must lie in (0,1), got {eps}")));
    }
    let n = space.dim();
    let volume = (2.0 / eps + 1.0).powi(n as i32);
    if volume > MAX_NET_VOLUME {
        return Err(Error::Capacity {
            what: "ε-net",
            detail: format!("(2/ε+1)^n = {volume:.0} exceeds {MAX_NET_VOLUME}"),
        });
    }
    let mut rng = SplitRng::new(seed);
    let mut pool: Vec<DVector<f64>> = Vec::new();
    for c in seeds.column_iter() {
        let norm = space.norm(c.as_slice())?;
        if norm > 1e-12 {
            pool.push(c.into_owned() / norm);
        }
    }
    let fixed = pool.len();
    let random = ((64.0 * volume) as usize).clamp(256, 20_000);
    for _ in 0..random {
        pool.push(random_unit(space, &mut rng)?);
    }
    let mut points: Vec<DVector<f64>> = Vec::new();
    let mut gap = vec![f64::INFINITY; pool.len()];
    let add = |points: &mut Vec<DVector<f64>>, gap: &mut [f64], pool: &[DVector<f64>], x: DVector<f64>| -> Result<()> {
        for (g, c) in gap.iter_mut().zip(pool) {
            *g = g.min(space.norm((c - &x).as_slice())?).min(space.norm((c + &x).as_slice())?);
        }
        points.push(-&x);
        points.push(x);
        Ok(())
    };
    for i in 0..fixed {
        if gap[i] >= eps {
            add(&mut points, &mut gap, &pool, pool[i].clone())?;
        }
    }
    loop {
        let (i, g) = gap.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, g)| if g > b.1 { (i, g) } else { b });
        if g < eps {
            break;
        }
        add(&mut points, &mut gap, &pool, pool[i].clone())?;
    }
    // Fresh samples until none of a round is uncovered.
    for _ in 0..20 {
        let mut grew = false;
        for _ in 0..1000 {
            let x = random_unit(space, &mut rng)?;
            let pm = DMatrix::from_columns(&points);
            if points.is_empty() || distance_to(space, &pm, &x)? >= eps {
                points.push(-&x);
                points.push(x);
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    // Store as (x, −x) pairs with x first.
    let mut cols = Vec::with_capacity(points.len());
    for pair in points.chunks(2) {
        cols.push(pair[1].clone());
        cols.push(pair[0].clone());
    }
    let net = NetCover { points: if cols.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&cols) }, eps };
    if net.len() as f64 >= volume {
        return Err(Error::Alarm(format!("ε-separated set of size {} breaks the volume bound {volume}", net.len())));
    }
    Ok(net)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionWitness {
    pub p: DMatrix<f64>,
    pub beta_achieved: f64,
    pub rank: usize,
    /// `max |uP − u|` or `max |Qf − f|` over a basis of `F`.
    pub reproduction_residual: f64,
    /// `(1−ε)⁻¹`.
    pub beta_cap: f64,
    /// `(2/ε + 1)^n / 2`.
    pub rank_cap: f64,
    /// Net points added after the packing to make the construction exact.
    pub repaired: usize,
}

impl ProjectionWitness {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.beta_achieved > self.beta_cap + 1e-7 {
            v.push(format!("‖P‖ = {} above {}", self.beta_achieved, self.beta_cap));
        }
        if self.rank as f64 > self.rank_cap {
            v.push(format!("rank {} above {}", self.rank, self.rank_cap));
        }
        if self.reproduction_residual > REPRODUCTION_TOL {
            v.push(format!("reproduction residual {}", self.reproduction_residual));
        }
        v
    }
}

fn zero_projection(d: usize, n: usize, eps: f64, residual: f64) -> ProjectionWitness {
    ProjectionWitness {
        p: DMatrix::zeros(d, d),
        beta_achieved: 0.0,
        rank: 0,
        reproduction_residual: residual,
        beta_cap: 1.0 / (1.0 - eps),
        rank_cap: net_cap(n, eps),
        repaired: 0,
    }
}

/// `P` on `L₁(μ)` with `uP = u`, `‖P‖ ≤ (1−ε)⁻¹` and rank below `(2/ε+1)^n/2`,
/// `n = rank u`. The quotient `F = L₁/Ker u` is realized in range coordinates,
/// where its ball is the absolute convex hull of the images of the atoms.
pub fn l1_rank_reduction(u: &DMatrix<f64>, mu: &MeasureSpace, eps: f64) -> Result<ProjectionWitness> {
    let d = mu.atom_count();
    if u.ncols() != d {
        return Err(Error::Shape("u must act on the atoms of μ".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("ε must lie in (0,1), got {eps}")));
    }
    let basis = range_basis(u);
    let n = basis.ncols();
    if n == 0 {
        return Ok(zero_projection(d, 0, eps, u.amax()));
    }
    let beta = 1.0 / (1.0 - eps);
    let q0 = basis.transpose() * u;
    let verts = DMatrix::from_fn(n, d, |i, a| q0[(i, a)] / mu.weights()[a]);
    let f = NormedSpace::from_reps(verts.clone())?;
    let mut net = epsilon_net_seeded(&f, eps, &verts, NET_SEED)?.pair_reps();
    let ones = |k: usize| vec![1.0; k];
    let mut repaired = 0;
    let ys = loop {
        let q = &net * beta;
        let mut ys = Vec::with_capacity(d);
        let mut bad = Vec::new();
        for a in 0..d {
            let v: Vec<f64> = verts.column(a).iter().copied().collect();
            if v.iter().all(|&x| x == 0.0) {
                ys.push(DVector::zeros(net.ncols()));
                continue;
            }
            let (y, val) = min_weighted_l1(&q, &v, &ones(net.ncols()), false)?;
            if val > 1.0 + 1e-9 {
                bad.push(a);
            }
            ys.push(y);
        }
        if bad.is_empty() {
            break ys;
        }
        let mut cols: Vec<DVector<f64>> = net.column_iter().map(|c| c.into_owned()).collect();
        for a in bad {
            let v = verts.column(a).into_owned();
            cols.push(&v / f.norm(v.as_slice())?);
            repaired += 1;
        }
        net = DMatrix::from_columns(&cols);
    };
    let k = net.ncols();
    let q = &net * beta;
    let mut q1 = DMatrix::zeros(d, k);
    for i in 0..k {
        let target: Vec<f64> = q.column(i).iter().copied().collect();
        q1.set_column(i, &min_norm_preimage(&q0, mu.weights(), &target)?);
    }
    let mut q2 = DMatrix::zeros(k, d);
    for (a, y) in ys.iter().enumerate() {
        q2.set_column(a, &(y * mu.weights()[a]));
    }
    let p = q1 * q2;
    let residual = (u * &p - u).amax();
    let beta_achieved = l1_self_norm(&p, mu);
    Ok(ProjectionWitness {
        p,
        beta_achieved,
        rank: k,
        reproduction_residual: residual,
        beta_cap: beta,
        rank_cap: net_cap(n, eps),
        repaired,
    })
}

/// `‖P: L₁(μ) → L₁(μ)‖ = max_a Σ_b μ_b |P_ba| / μ_a`.
pub fn l1_self_norm(p: &DMatrix<f64>, mu: &MeasureSpace) -> f64 {
    let w = mu.weights();
    (0..p.ncols())
        .map(|a| (0..p.nrows()).map(|b| w[b] * p[(b, a)].abs()).sum::<f64>() / w[a])
        .fold(0.0, f64::max)
}

/// `Q` on `ℓ∞ᵈ` with `Qf = f` on `F = span(basis)`, `‖Q‖ ≤ (1−ε)⁻¹` and rank below
/// `(2/ε+1)^n/2`. Built as `Q = J₁J₂` from a net of the sphere of `F*`.
pub fn linf_rank_projection(basis: &DMatrix<f64>, eps: f64) -> Result<ProjectionWitness> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("ε must lie in (0,1), got {eps}")));
    }
    let d = basis.nrows();
    let n = basis.ncols();
    if n == 0 {
        return Ok(zero_projection(d, 0, eps, 0.0));
    }
    if numerical_rank(basis) != n {
        return Err(Error::Domain("subspace basis must have independent columns".into()));
    }
    let beta = 1.0 / (1.0 - eps);
    // Coordinates c ↦ Bc. Functionals on F are vectors φ with φ(Bc) = φ·c; the
    // ball of F* is the absolute convex hull of the rows of B.
    let rows: Vec<usize> = (0..d).filter(|&j| basis.row(j).amax() > 0.0).collect();
    let verts = DMatrix::from_fn(n, rows.len(), |i, k| basis[(rows[k], i)]);
    let fstar = NormedSpace::from_reps(verts.clone())?;
    let mut net = epsilon_net_seeded(&fstar, eps, &verts, NET_SEED)?.pair_reps();
    let mut repaired = 0;
    let psis = loop {
        let j = (&net * beta).transpose(); // k × n
        let mut psis = Vec::with_capacity(rows.len());
        let mut bad = Vec::new();
        for (k, _) in rows.iter().enumerate() {
            let b: Vec<f64> = verts.column(k).iter().copied().collect();
            let psi = extend_functional(&j, &b)?;
            if psi.iter().map(|v| v.abs()).sum::<f64>() > 1.0 + 1e-9 {
                bad.push(k);
            }
            psis.push(psi);
        }
        if bad.is_empty() {
            break psis;
        }
        let mut cols: Vec<DVector<f64>> = net.column_iter().map(|c| c.into_owned()).collect();
        for k in bad {
            let v = verts.column(k).into_owned();
            cols.push(&v / fstar.norm(v.as_slice())?);
            repaired += 1;
        }
        net = DMatrix::from_columns(&cols);
    };
    let k = net.ncols();
    let mut j1 = DMatrix::zeros(d, k);
    for (r, psi) in rows.iter().zip(&psis) {
        j1.set_row(*r, &psi.transpose());
    }
    let mut j2 = DMatrix::zeros(k, d);
    for i in 0..k {
        let phi: Vec<f64> = net.column(i).iter().map(|v| v * beta).collect();
        j2.set_row(i, &extend_functional(basis, &phi)?.transpose());
    }
    let q = j1 * j2;
    let residual = (&q * basis - basis).amax();
    let beta_achieved = q.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    Ok(ProjectionWitness {
        p: q,
        beta_achieved,
        rank: k,
        reproduction_residual: residual,
        beta_cap: beta,
        rank_cap: net_cap(n, eps),
        repaired,
    })
}

/// Result of minimizing `C_{1,p}` over extensions of `T|_{Z₀}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinExtension {
    /// Best upper value found: `A`.
    pub value: f64,
    /// `Φ(T)`, the value of the extracted dual functional.
    pub lower: f64,
    pub u_opt: DMatrix<f64>,
    /// `S` with `Φ(u) = Tr(S u)` (`dim Z × atoms`).
    pub dual: DMatrix<f64>,
    /// Size of the part of the averaged subgradient that had to be projected away
    /// to make `Φ` constant on the extensions; zero means `Φ ≤ C_{1,p}` exactly.
    pub projection_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

const EXTENSION_BUDGET: usize = 4000;
const GRADIENT_MEMORY: usize = 48;

fn combine_gradients(grads: &[DMatrix<f64>], nmat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut parts: Vec<DMatrix<f64>> = grads.iter().map(|g| g * nmat.transpose()).collect();
    let top = parts.iter().map(|p| p.amax()).fold(0.0, f64::max);
    if top > 0.0 {
        parts.iter_mut().for_each(|p| *p /= top);
    }
    let len = parts[0].len();
    let mut lp = LpProblem::new();
    let theta: Vec<usize> = (0..grads.len()).map(|_| lp.add_var(0.0, 0.0, f64::INFINITY)).collect();
    let pos: Vec<usize> = (0..len).map(|_| lp.add_var(1.0, 0.0, f64::INFINITY)).collect();
    let neg: Vec<usize> = (0..len).map(|_| lp.add_var(1.0, 0.0, f64::INFINITY)).collect();
    lp.add_row(theta.iter().map(|&t| (t, 1.0)).collect(), Cmp::Eq, 1.0);
    for l in 0..len {
        let mut terms: Vec<(usize, f64)> = theta.iter().zip(&parts).map(|(&t, p)| (t, p[l])).filter(|(_, v)| *v != 0.0).collect();
        terms.push((pos[l], -1.0));
        terms.push((neg[l], 1.0));
        lp.add_row(terms, Cmp::Eq, 0.0);
    }
    // Any convex combination keeps Φ ≤ C_{1,p}; only the weights are used.
    let sol = lp.solve_unchecked()?;
    let weights: Vec<f64> = theta.iter().map(|&t| sol.x[t].max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Ok(grads[grads.len() - 1].clone());
    }
    let mut g = DMatrix::zeros(grads[0].nrows(), grads[0].ncols());
    for (gr, w) in grads.iter().zip(&weights) {
        g += gr * (w / total);
    }
    Ok(g)
}

/// Minimizes `u ↦ C_{1,p}(u)` over `u = T + XN`, where the rows of `N` span the
/// annihilator of `Z₀ = span(z0)`, by normalized subgradient steps with step
/// halving. The dual functional is a convex combination of the norming
/// gradients seen near the end, chosen to vanish on the free directions.
pub fn min_extension(t: &LinOp, z0: &DMatrix<f64>, p: f64, tol: f64) -> Result<MinExtension> {
    measure_of(t)?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("need 1 < p < ∞, got {p}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let dz = t.domain.dim();
    if z0.nrows() != dz {
        return Err(Error::Shape("Z₀ basis must live in the domain".into()));
    }
    let atoms = t.matrix.nrows();
    let r = numerical_rank(z0);
    let inner = (tol * 1e-3).clamp(1e-10, 1e-8);
    if r == 0 {
        return Ok(MinExtension {
            value: 0.0,
            lower: 0.0,
            u_opt: DMatrix::zeros(atoms, dz),
            dual: DMatrix::zeros(dz, atoms),
            projection_residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let nmat = annihilator(z0);
    let with = |m: DMatrix<f64>| LinOp::new(t.domain.clone(), t.codomain.clone(), m);
    if nmat.nrows() == 0 {
        let cert = c1q(t, p, inner)?;
        let g = norming_gradient(t, &cert)?;
        return Ok(MinExtension {
            value: cert.upper,
            lower: g.dot(&t.matrix),
            u_opt: t.matrix.clone(),
            dual: g.transpose(),
            projection_residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let mut x = DMatrix::zeros(atoms, nmat.nrows());
    let scale = t.matrix.norm().max(f64::MIN_POSITIVE);
    let mut step = 0.25 * scale;
    let mut best = (f64::INFINITY, x.clone());
    let mut since = 0;
    let mut grads: Vec<DMatrix<f64>> = Vec::new();
    let mut iterations = 0;
    let mut phi = DMatrix::zeros(atoms, dz);
    let mut lower = f64::NEG_INFINITY;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    while iterations < EXTENSION_BUDGET {
        iterations += 1;
        let u = with(&t.matrix + &x * &nmat)?;
        let cert = c1q_bracket(&u, p, inner)?;
        let g = norming_gradient(&u, &cert)?;
        if cert.upper < best.0 * (1.0 - 1e-12) {
            best = (cert.upper, x.clone());
            since = 0;
        } else {
            since += 1;
        }
        grads.push(g.clone());
        if grads.len() > GRADIENT_MEMORY {
            grads.remove(0);
        }
        let free = &g * nmat.transpose();
        let gn = free.norm();
        let stalled = gn <= 1e-14 * g.norm().max(f64::MIN_POSITIVE);
        if stalled || iterations % 16 == 0 || step < 1e-9 * scale {
            let combo = if stalled { g.clone() } else { combine_gradients(&grads, &nmat)? };
            let rem = &combo * nmat.transpose();
            let proj = &combo - &rem * &nmat;
            let lb = proj.dot(&t.matrix);
            if lb > lower || iterations == 1 {
                lower = lb;
                phi = proj;
                residual = rem.norm();
            }
            if best.0 - lower <= tol * best.0 {
                converged = true;
                break;
            }
        }
        if stalled || step < 1e-9 * scale {
            break;
        }
        if since >= 24 {
            step *= 0.5;
            since = 0;
            x = best.1.clone();
            continue;
        }
        x -= free * (step / gn);
    }
    let u_opt = &t.matrix + &best.1 * &nmat;
    let out = MinExtension {
        value: best.0,
        lower,
        u_opt,
        dual: phi.transpose(),
        projection_residual: residual,
        iterations,
        converged,
    };
    if !converged {
        return Err(Error::Convergence {
            stage: "minimal extension",
            iterations,
            best_upper: out.value,
            best_lower: out.lower,
            gap: out.value - out.lower,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionProjection {
    pub projection: ProjectionWitness,
    pub extension: MinExtension,
    /// `dim T Z₀`.
    pub n: usize,
    /// `C_{1,p}(PT)`.
    pub c1p_pt: f64,
}

/// A finite-rank `P` on `L₁(μ)` with `C_{1,p}(PT) ≥ A`, where `A` is the least
/// `C_{1,p}` over extensions of `T|_{Z₀}`: rank-reduce `TS` for the dual operator
/// `S` of the minimal extension, so that `Tr(SPT) = Tr(TS) = Φ(T)`.
pub fn extension_projection(t: &LinOp, z0: &DMatrix<f64>, p: f64, eps: f64, tol: f64) -> Result<ExtensionProjection> {
    let mu = measure_of(t)?.clone();
    let ext = min_extension(t, z0, p, tol)?;
    let n = numerical_rank(&(&t.matrix * z0));
    let ts = &t.matrix * &ext.dual;
    let projection = l1_rank_reduction(&ts, &mu, eps)?;
    let pt = LinOp::new(t.domain.clone(), t.codomain.clone(), &projection.p * &t.matrix)?;
    let c1p_pt = c1q(&pt, p, (tol * 1e-3).clamp(1e-10, 1e-8))?.upper;
    if c1p_pt < ext.value * (1.0 - tol) {
        return Err(Error::Alarm(format!(
            "C_1,p(PT) = {c1p_pt} below A = {} beyond tolerance (Φ(T) = {}, projected part {})",
            ext.value, ext.lower, ext.projection_residual
        )));
    }
    Ok(ExtensionProjection { projection, extension: ext, n, c1p_pt })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionFactorization {
    pub witness: FactorizationWitness,
    pub report: BoundReport,
    pub projection: ProjectionWitness,
    pub n: usize,
    /// `c` actually certified: the lower bound for `C_{1,p}` (resp. `π_t`) used
    /// in the density step, divided by the norm of the operator.
    pub c_eff: f64,
    pub inner: DensityFactorization,
}

/// Factors the identity of `ℓ₁ᵏ` through `T` when every extension of `T|_{Z₀}`
/// has large `C_{1,p}`: project with [`extension_projection`], factor `PT`
/// through densities with `q = ∞`, and compose `B' = B∘P`.
pub fn l1_extension_factorization(t: &LinOp, z0: &DMatrix<f64>, p: f64, eps: f64, tol: f64) -> Result<ExtensionFactorization> {
    let t = t.with_exponent(1.0)?;
    let mu = measure_of(&t)?.clone();
    let norm_t = t.op_norm()?.value;
    if norm_t == 0.0 {
        return Err(Error::Domain("T = 0".into()));
    }
    let ep = extension_projection(&t, z0, p, eps, tol)?;
    let pt = LinOp::new(t.domain.clone(), t.codomain.clone(), &ep.projection.p * &t.matrix)?;
    let inner = density_factorization(&pt, p, f64::INFINITY, tol)?;
    let a = inner.witness.a.clone();
    let b = &inner.witness.b * &ep.projection.p;
    let k = a.ncols();
    let residual = (&b * &t.matrix * &a - DMatrix::identity(k, k)).amax();
    let norm_a = inner.witness.norm_a;
    let norm_b = l1_to_l1k_norm(&b, &mu);
    let c_eff = inner.c1p_lower / norm_t;
    let bounds = l1_extension_bounds(norm_t, c_eff, p, eps, ep.n.max(1))?;
    let witness = FactorizationWitness {
        variant: Variant::L1,
        k,
        a,
        b,
        residual,
        norm_a,
        norm_b,
        norm_t,
        norm_product: norm_a * norm_b * norm_t,
        chosen: inner.witness.chosen.clone(),
        gamma_used: inner.witness.gamma_used,
    };
    let mut inputs = BTreeMap::new();
    inputs.insert("p".into(), p);
    inputs.insert("eps".into(), eps);
    inputs.insert("n".into(), ep.n as f64);
    inputs.insert("c".into(), c_eff);
    inputs.insert("A".into(), ep.extension.value);
    inputs.insert("norm_t".into(), norm_t);
    inputs.insert("norm_p".into(), ep.projection.beta_achieved);
    inputs.insert("rank_p".into(), ep.projection.rank as f64);
    if c_eff >= 32.0 {
        let (delta, half) = l1_extension_half_bounds(norm_t, p, ep.n.max(1))?;
        inputs.insert("delta".into(), delta);
        inputs.insert("gamma_half_form".into(), half.gamma);
        inputs.insert("k_half_form".into(), half.k);
    }
    let report = BoundReport { guaranteed_k: bounds.k, achieved_k: k, guaranteed_gamma: bounds.gamma, achieved_gamma: witness.gamma(), inputs };
    Ok(ExtensionFactorization { witness, report, projection: ep.projection, n: ep.n, c_eff, inner })
}

/// Factors the identity of `ℓ∞ᵏ` through `U: ℓ∞ᵈ → X` when `π_t(U|_E)` is large:
/// project onto `E` with [`linf_rank_projection`], factor `(UP)*` through
/// densities with `p = t*, q = ∞`, and transpose. `c` is recorded if supplied.
pub fn linf_extension_factorization(u: &LinOp, e: &DMatrix<f64>, t: f64, eps: f64, tol: f64, c: Option<f64>) -> Result<ExtensionFactorization> {
    if !matches!(u.domain.ball(), crate::space::Ball::SignCube) {
        return Err(Error::Domain("U must be defined on ℓ∞ᵈ".into()));
    }
    let Codomain::Normed(x) = &u.codomain else {
        return Err(Error::Domain("U must take values in a normed space".into()));
    };
    if !(t > 1.0 && t.is_finite()) {
        return Err(Error::Domain(format!("need 1 < t < ∞, got {t}")));
    }
    let d = u.domain.dim();
    if e.nrows() != d {
        return Err(Error::Shape("E must be a subspace of the domain".into()));
    }
    let norm_u = u.op_norm()?.value;
    if norm_u == 0.0 {
        return Err(Error::Domain("U = 0".into()));
    }
    let proj = linf_rank_projection(e, eps)?;
    let up = &u.matrix * &proj.p;
    let xstar = x.dual()?;
    let vstar = LinOp::into_l1(xstar, MeasureSpace::counting(d)?, up.transpose())?;
    let inner = density_factorization(&vstar, conjugate(t)?, f64::INFINITY, tol)?;
    let a = &proj.p * inner.witness.b.transpose();
    let b = inner.witness.a.transpose();
    let k = a.ncols();
    let residual = (&b * &u.matrix * &a - DMatrix::identity(k, k)).amax();
    let norm_a = a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut norm_b: f64 = 0.0;
    for r in b.row_iter() {
        norm_b = norm_b.max(x.dual_norm(r.transpose().as_slice())?);
    }
    let n = e.ncols();
    let c_eff = inner.c1p_lower / norm_u;
    let bounds = linf_extension_bounds(norm_u, c_eff, t, eps, n.max(1))?;
    let witness = FactorizationWitness {
        variant: Variant::Linf,
        k,
        a,
        b,
        residual,
        norm_a,
        norm_b,
        norm_t: norm_u,
        norm_product: norm_a * norm_b * norm_u,
        chosen: inner.witness.chosen.clone(),
        gamma_used: inner.witness.gamma_used,
    };
    let mut inputs = BTreeMap::new();
    inputs.insert("t".into(), t);
    inputs.insert("eps".into(), eps);
    inputs.insert("n".into(), n as f64);
    inputs.insert("c".into(), c_eff);
    if let Some(c) = c {
        inputs.insert("c_supplied".into(), c);
    }
    inputs.insert("norm_u".into(), norm_u);
    inputs.insert("norm_p".into(), proj.beta_achieved);
    inputs.insert("rank_p".into(), proj.rank as f64);
    if c_eff >= 32.0 {
        let (alpha, half) = linf_extension_half_bounds(norm_u, t, n.max(1))?;
        inputs.insert("alpha".into(), alpha);
        inputs.insert("gamma_half_form".into(), half.gamma);
        inputs.insert("k_half_form".into(), half.k);
    }
    let report = BoundReport { guaranteed_k: bounds.k, achieved_k: k, guaranteed_gamma: bounds.gamma, achieved_gamma: witness.gamma(), inputs };
    Ok(ExtensionFactorization { witness, report, projection: proj, n, c_eff, inner })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nets_in_small_dimensions() {
        let line = epsilon_net(&NormedSpace::l2(1), 0.5).unwrap();
        assert_eq!(line.len(), 2);
        let circle = epsilon_net(&NormedSpace::l2(2), 0.5).unwrap();
        assert!(circle.len() <= 12, "{}", circle.len());
        assert!(circle.max_gap(&NormedSpace::l2(2), 2000, 3).unwrap() < 0.5);
        assert!(matches!(epsilon_net(&NormedSpace::l2(6), 0.5), Err(Error::Capacity { .. })));
    }

    #[test]
    fn l1_reduction_small_cases() {
        let mu = MeasureSpace::uniform(4).unwrap();
        let u = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, -1.0, 0.5]);
        let w = l1_rank_reduction(&u, &mu, 0.5).unwrap();
        assert!(w.violations().is_empty(), "{:?}", w.violations());
        assert!(w.rank <= 2);
        let zero = l1_rank_reduction(&DMatrix::zeros(2, 4), &mu, 0.5).unwrap();
        assert_eq!(zero.rank, 0);
        let id = l1_rank_reduction(&DMatrix::identity(3, 3), &MeasureSpace::uniform(3).unwrap(), 0.5).unwrap();
        assert!((id.p.clone() - DMatrix::identity(3, 3)).amax() < 1e-8);
    }

    #[test]
    fn linf_projection_small_cases() {
        let axis = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 0.0, 0.0]);
        let w = linf_rank_projection(&axis, 0.5).unwrap();
        assert!(w.reproduction_residual < 1e-12 && (w.beta_achieved - 1.0).abs() < 1e-9);
        let ones = DMatrix::from_element(5, 1, 1.0);
        let w = linf_rank_projection(&ones, 0.5).unwrap();
        assert!(w.reproduction_residual < 1e-9);
        let two = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -1.0]);
        let w = linf_rank_projection(&two, 0.5).unwrap();
        assert!(w.violations().is_empty() && w.rank <= 12);
    }

    #[test]
    fn extension_trivial_cases() {
        let t = LinOp::into_l1(NormedSpace::l1(2), MeasureSpace::uniform(3).unwrap(), DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.3, 1.0])).unwrap();
        let none = min_extension(&t, &DMatrix::zeros(2, 0), 2.0, 1e-3).unwrap();
        assert_eq!(none.value, 0.0);
        let full = min_extension(&t, &DMatrix::identity(2, 2), 2.0, 1e-3).unwrap();
        let direct = c1q(&t, 2.0, 1e-9).unwrap().upper;
        assert!((full.value - direct).abs() < 1e-8 * direct);
        let half = min_extension(&t, &DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), 2.0, 1e-3).unwrap();
        assert!(half.value <= direct * (1.0 + 1e-9) && half.lower <= half.value * (1.0 + 1e-9));
    }
}
