//! Linear programs: a thin layer over `microlp` that adds a dual certificate,
//! plus the few specific programs the rest of the crate needs.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const FEAS_TOL: f64 = 1e-9;
pub const GAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Le,
    Ge,
}

/// `minimize c·x` subject to linear rows and variable bounds.
#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    obj: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<(Vec<(usize, f64)>, Cmp, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Row multipliers of the dual program; empty when not certified.
    pub dual: Vec<f64>,
    pub dual_value: f64,
    pub certified: bool,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.obj.push(cost);
        self.bounds.push((lo, hi));
        self.obj.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        self.rows.push((terms, cmp, rhs));
    }

    pub fn var_count(&self) -> usize {
        self.obj.len()
    }

    fn solve_raw(
        obj: &[f64],
        bounds: &[(f64, f64)],
        rows: &[(Vec<(usize, f64)>, Cmp, f64)],
        dir: OptimizationDirection,
    ) -> Result<(Vec<f64>, f64)> {
        let mut pb = Problem::new(dir);
        let vars: Vec<_> = obj.iter().zip(bounds).map(|(&c, &b)| pb.add_var(c, b)).collect();
        for (terms, cmp, rhs) in rows {
            let op = match cmp {
                Cmp::Eq => ComparisonOp::Eq,
                Cmp::Le => ComparisonOp::Le,
                Cmp::Ge => ComparisonOp::Ge,
            };
            let expr: Vec<_> = terms.iter().map(|&(i, c)| (vars[i], c)).collect();
            pb.add_constraint(expr, op, *rhs);
        }
        let sol = match pb.solve() {
            Ok(out) => out
                .into_solution()
                .map_err(|_| Error::Lp("solve interrupted".into()))?,
            Err(microlp::Error::Infeasible) => return Err(Error::Infeasible("no feasible point".into())),
            Err(microlp::Error::Unbounded) => return Err(Error::Lp("objective unbounded".into())),
            Err(e) => return Err(Error::Lp(format!("{e:?}"))),
        };
        let x = vars.iter().map(|&v| sol.var_value(v)).collect();
        Ok((x, sol.objective()))
    }

    fn check_feasible(&self, x: &[f64]) -> Result<()> {
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if x[i] < lo - FEAS_TOL * (1.0 + lo.abs()) || x[i] > hi + FEAS_TOL * (1.0 + hi.abs()) {
                return Err(Error::Lp(format!("variable {i} violates its bounds")));
            }
        }
        for (r, (terms, cmp, rhs)) in self.rows.iter().enumerate() {
            let lhs: f64 = terms.iter().map(|&(i, c)| c * x[i]).sum();
            let scale = 1.0 + rhs.abs() + terms.iter().map(|&(i, c)| (c * x[i]).abs()).sum::<f64>();
            let viol = match cmp {
                Cmp::Eq => (lhs - rhs).abs(),
                Cmp::Le => (lhs - rhs).max(0.0),
                Cmp::Ge => (rhs - lhs).max(0.0),
            };
            if viol > FEAS_TOL * scale {
                return Err(Error::Lp(format!("row {r} violated by {viol:.3e}")));
            }
        }
        Ok(())
    }

    /// Primal solve with no feasibility check; for callers that repair the point.
    pub fn solve_unchecked(&self) -> Result<LpSolution> {
        let (x, value) =
            Self::solve_raw(&self.obj, &self.bounds, &self.rows, OptimizationDirection::Minimize)?;
        Ok(LpSolution { x, value, dual: Vec::new(), dual_value: f64::NAN, certified: false })
    }

    /// Primal solve only, with a feasibility check on the returned point.
    pub fn solve_primal(&self) -> Result<LpSolution> {
        let (x, value) =
            Self::solve_raw(&self.obj, &self.bounds, &self.rows, OptimizationDirection::Minimize)?;
        self.check_feasible(&x)?;
        Ok(LpSolution { x, value, dual: Vec::new(), dual_value: f64::NAN, certified: false })
    }

    /// Solves the primal and, separately, the Lagrange dual; fails unless the
    /// two optimal values agree to `GAP_TOL·(1+|value|)`.
    pub fn solve(&self) -> Result<LpSolution> {
        let mut sol = self.solve_primal()?;
        // Dual: maximize b·y + Σ lo_j s_j − Σ hi_j t_j  s.t.  Aᵀy + s − t = c,
        // with y_i free / ≤0 / ≥0 for =, ≤, ≥ rows and s, t ≥ 0 only for finite bounds.
        let n = self.obj.len();
        let mut dobj = Vec::new();
        let mut dbounds = Vec::new();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (terms, cmp, rhs) in &self.rows {
            let k = dobj.len();
            dobj.push(*rhs);
            dbounds.push(match cmp {
                Cmp::Eq => (f64::NEG_INFINITY, f64::INFINITY),
                Cmp::Le => (f64::NEG_INFINITY, 0.0),
                Cmp::Ge => (0.0, f64::INFINITY),
            });
            for &(j, c) in terms {
                cols[j].push((k, c));
            }
        }
        let m = dobj.len();
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_finite() {
                cols[j].push((dobj.len(), 1.0));
                dobj.push(lo);
                dbounds.push((0.0, f64::INFINITY));
            }
            if hi.is_finite() {
                cols[j].push((dobj.len(), -1.0));
                dobj.push(-hi);
                dbounds.push((0.0, f64::INFINITY));
            }
        }
        let drows: Vec<_> = cols
            .into_iter()
            .zip(&self.obj)
            .map(|(terms, &c)| (terms, Cmp::Eq, c))
            .collect();
        let (y, dval) = Self::solve_raw(&dobj, &dbounds, &drows, OptimizationDirection::Maximize)?;
        if (sol.value - dval).abs() > GAP_TOL * (1.0 + sol.value.abs()) {
            return Err(Error::Lp(format!(
                "primal {} and dual {} values disagree",
                sol.value, dval
            )));
        }
        sol.dual = y[..m].to_vec();
        sol.dual_value = dval;
        sol.certified = true;
        Ok(sol)
    }
}

/// Minimizes `Σ w_i |x_i|` subject to `A x = b`.
pub fn min_weighted_l1(a: &DMatrix<f64>, b: &[f64], w: &[f64], certify: bool) -> Result<(DVector<f64>, f64)> {
    if a.nrows() != b.len() || a.ncols() != w.len() {
        return Err(Error::Shape("min_weighted_l1 dimensions".into()));
    }
    let n = a.ncols();
    let mut lp = LpProblem::new();
    for &wi in w {
        lp.add_var(wi, 0.0, f64::INFINITY);
    }
    for &wi in w {
        lp.add_var(wi, 0.0, f64::INFINITY);
    }
    for r in 0..a.nrows() {
        let mut terms = Vec::with_capacity(2 * n);
        for j in 0..n {
            let c = a[(r, j)];
            if c != 0.0 {
                terms.push((j, c));
                terms.push((n + j, -c));
            }
        }
        lp.add_row(terms, Cmp::Eq, b[r]);
    }
    let sol = match if certify { lp.solve() } else { lp.solve_primal() } {
        Err(Error::Infeasible(_)) => {
            return Err(Error::Infeasible("target is not in the range of the map".into()))
        }
        other => other?,
    };
    let x = DVector::from_fn(n, |j, _| sol.x[j] - sol.x[n + j]);
    let value = x.iter().zip(w).map(|(xi, wi)| wi * xi.abs()).sum();
    Ok((x, value))
}

/// Norm-preserving extension of a functional on `F = span(basis) ⊆ ℓ∞ᵈ` to all of
/// `ℓ∞ᵈ`. `basis` is `d × n`; `phi[k]` is the value on column `k`. Returns
/// `ψ ∈ ℓ₁ᵈ` with `ψ·basis_k = phi_k` and minimal `‖ψ‖₁`.
pub fn extend_functional(basis: &DMatrix<f64>, phi: &[f64]) -> Result<DVector<f64>> {
    if basis.ncols() != phi.len() {
        return Err(Error::Shape("one value per basis vector expected".into()));
    }
    if phi.iter().all(|&v| v == 0.0) {
        return Ok(DVector::zeros(basis.nrows()));
    }
    let ones = vec![1.0; basis.nrows()];
    let (psi, _) = min_weighted_l1(&basis.transpose(), phi, &ones, true).map_err(|e| match e {
        Error::Infeasible(_) => Error::Alarm("norm-preserving extension LP infeasible".into()),
        e => e,
    })?;
    Ok(psi)
}

/// Least `Σ w_i |x_i|` preimage of `y` under `q`; `w = 1` is the ℓ₁ norm.
pub fn min_norm_preimage(q: &DMatrix<f64>, w: &[f64], y: &[f64]) -> Result<DVector<f64>> {
    if y.iter().all(|&v| v == 0.0) {
        return Ok(DVector::zeros(q.ncols()));
    }
    Ok(min_weighted_l1(q, y, w, true)?.0)
}

/// `min_{c} Σ_a w_a |x_a − (K c)_a|`: the norm of `x + span(K)` in `L₁(w)/span(K)`.
pub fn quotient_norm(w: &[f64], kernel: &DMatrix<f64>, x: &[f64], certify: bool) -> Result<f64> {
    let d = w.len();
    if x.len() != d || kernel.nrows() != d {
        return Err(Error::Shape("quotient_norm dimensions".into()));
    }
    if kernel.ncols() == 0 {
        return Ok(w.iter().zip(x).map(|(a, b)| a * b.abs()).sum());
    }
    let mut lp = LpProblem::new();
    let kc: Vec<usize> = (0..kernel.ncols())
        .map(|_| lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY))
        .collect();
    let pos: Vec<usize> = w.iter().map(|&wa| lp.add_var(wa, 0.0, f64::INFINITY)).collect();
    let neg: Vec<usize> = w.iter().map(|&wa| lp.add_var(wa, 0.0, f64::INFINITY)).collect();
    for a in 0..d {
        let mut terms = vec![(pos[a], 1.0), (neg[a], -1.0)];
        for (k, &v) in kc.iter().enumerate() {
            if kernel[(a, k)] != 0.0 {
                terms.push((v, kernel[(a, k)]));
            }
        }
        lp.add_row(terms, Cmp::Eq, x[a]);
    }
    let sol = if certify { lp.solve()? } else { lp.solve_primal()? };
    Ok(sol.value.max(0.0))
}

/// Gauge of `conv(±columns of v)` at `x`: `min Σ|λ|` with `v λ = x`.
pub fn symmetric_gauge(v: &DMatrix<f64>, x: &[f64]) -> Result<f64> {
    if x.iter().all(|&t| t == 0.0) {
        return Ok(0.0);
    }
    let ones = vec![1.0; v.ncols()];
    Ok(min_weighted_l1(v, x, &ones, true)?.1)
}
