//! Facets of centrally symmetric polytopes `conv(±r_1, …, ±r_k)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_FACET_DIM: usize = 6;
const MAX_CANDIDATES: f64 = 4.0e6;

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Advances `idx` to the next `k`-subset of `0..n` in lexicographic order.
pub(crate) fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Facet normals `a` (one per `±a` pair) of `conv(±columns of reps)`, so that the
/// gauge of the polytope is `max |a·x|`. Equivalently, the vertices of the polar.
pub fn symmetric_facets(reps: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = reps.nrows();
    if n == 0 {
        return Err(Error::Domain("zero-dimensional polytope".into()));
    }
    if n > MAX_FACET_DIM {
        return Err(Error::Capacity {
            what: "facet enumeration",
            detail: format!("dimension {n} exceeds {MAX_FACET_DIM}"),
        });
    }
    // Drop zero columns; they do not affect the hull.
    let cols: Vec<DVector<f64>> = reps
        .column_iter()
        .filter(|c| c.amax() > 0.0)
        .map(|c| c.into_owned())
        .collect();
    let scale = cols.iter().fold(0.0_f64, |m, c| m.max(c.amax()));
    if cols.len() < n {
        return Err(Error::Domain("vertex list does not span the space".into()));
    }
    let work = binom(cols.len(), n) * 2f64.powi(n as i32 - 1);
    if work > MAX_CANDIDATES {
        return Err(Error::Capacity {
            what: "facet enumeration",
            detail: format!("{} vertices in dimension {n} ({work:.0} candidate facets)", cols.len()),
        });
    }
    let mut found: HashMap<Vec<i64>, DVector<f64>> = HashMap::new();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let sub = DMatrix::from_fn(n, n, |r, c| cols[idx[c]][r]);
        let lu = sub.transpose().lu();
        // Cheap conditioning screen: skip (near-)dependent subsets.
        let det = lu.determinant().abs();
        if det > 1e-12 * scale.powi(n as i32) {
            for signs in 0..(1u32 << (n - 1)) {
                let s = DVector::from_fn(n, |i, _| {
                    if i > 0 && signs & (1 << (i - 1)) != 0 {
                        -1.0
                    } else {
                        1.0
                    }
                });
                let Some(a) = lu.solve(&s) else { continue };
                let ok = cols.iter().all(|c| a.dot(c).abs() <= 1.0 + 1e-9);
                if ok {
                    let mut a = a;
                    let lead = a.iter().find(|v| v.abs() > 1e-12).copied().unwrap_or(1.0);
                    if lead < 0.0 {
                        a = -a;
                    }
                    let key: Vec<i64> = a.iter().map(|v| (v * scale * 1e7).round() as i64).collect();
                    found.entry(key).or_insert(a);
                }
            }
        }
        if !next_combination(&mut idx, cols.len()) {
            break;
        }
    }
    if found.is_empty() {
        return Err(Error::Domain("vertex list does not span the space".into()));
    }
    let mut keys: Vec<_> = found.keys().cloned().collect();
    keys.sort();
    let facets: Vec<DVector<f64>> = keys.into_iter().map(|k| found.remove(&k).unwrap()).collect();
    Ok(DMatrix::from_columns(&facets))
}
