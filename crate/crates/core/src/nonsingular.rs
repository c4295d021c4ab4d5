//! Total non-singularity: exact minor enumeration and randomized
//! construction of totally non-singular orthogonal complements.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Largest number of minors `all_minors_nonzero` will enumerate.
pub const MINOR_BUDGET: u128 = 2_000_000;
/// Default relative tolerance for a vanishing minor.
pub const DEFAULT_MINOR_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_RETRIES: usize = 32;
/// Orthogonality tolerance for `AᵗB = 0`.
pub const COMPLEMENT_ORTH_TOL: f64 = 1e-10;

pub type RealMatrix = DMatrix<f64>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Minor {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Outcome of a total-non-singularity check.
///
/// Minors are compared after dividing by the smaller of the row-norm and
/// column-norm products (both Hadamard bounds), so `min_scaled_minor` lies
/// in `[0, 1]` and `is_tns` holds iff it exceeds the tolerance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TnsReport {
    pub is_tns: bool,
    pub min_abs_minor: f64,
    pub min_scaled_minor: f64,
    /// The minor attaining `min_scaled_minor`; present iff `!is_tns`.
    pub witness: Option<Minor>,
    pub minors_checked: u64,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of square minors of a `p×q` matrix.
pub fn minor_count(p: usize, q: usize) -> u128 {
    (1..=p.min(q)).map(|s| binomial(p, s) * binomial(q, s)).sum()
}

/// Lexicographic `k`-subsets of `0..n`.
pub(crate) fn subsets(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut cur: Option<Vec<usize>> = if k <= n { Some((0..k).collect()) } else { None };
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                cur = None;
                break;
            }
            i -= 1;
            if next[i] < n - k + i {
                next[i] += 1;
                for j in (i + 1)..k {
                    next[j] = next[j - 1] + 1;
                }
                cur = Some(next);
                break;
            }
        }
        Some(out)
    })
}

/// Determinant by fraction-free (Bareiss) elimination with partial pivoting.
pub fn bareiss_det(mut m: Vec<f64>, s: usize) -> f64 {
    if s == 0 {
        return 1.0;
    }
    let mut sign = 1.0;
    let mut prev = 1.0;
    for k in 0..s - 1 {
        let piv = (k..s)
            .max_by(|&a, &b| m[a * s + k].abs().total_cmp(&m[b * s + k].abs()))
            .unwrap_or(k);
        if m[piv * s + k] == 0.0 {
            return 0.0;
        }
        if piv != k {
            for j in 0..s {
                m.swap(k * s + j, piv * s + j);
            }
            sign = -sign;
        }
        let pkk = m[k * s + k];
        for i in (k + 1)..s {
            let pik = m[i * s + k];
            for j in (k + 1)..s {
                m[i * s + j] = (m[i * s + j] * pkk - pik * m[k * s + j]) / prev;
            }
        }
        prev = pkk;
    }
    sign * m[(s - 1) * s + (s - 1)]
}

/// Enumerates every square minor of `a` and reports the smallest one.
pub fn all_minors_nonzero(a: &RealMatrix, tol: f64) -> Result<TnsReport> {
    let (p, q) = a.shape();
    if p == 0 || q == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    let required = minor_count(p, q);
    if required > MINOR_BUDGET {
        return Err(Error::BudgetExceeded {
            required,
            budget: MINOR_BUDGET,
        });
    }
    let mut min_abs = f64::INFINITY;
    let mut min_scaled = f64::INFINITY;
    let mut argmin: Option<Minor> = None;
    let mut checked = 0u64;
    for s in 1..=p.min(q) {
        let col_sets: Vec<Vec<usize>> = subsets(q, s).collect();
        for rows in subsets(p, s) {
            for cols in &col_sets {
                let mut sub = Vec::with_capacity(s * s);
                let mut row_bound = 1.0;
                let mut col_sq = vec![0.0; s];
                for &r in &rows {
                    let mut rn = 0.0;
                    for (ci, &c) in cols.iter().enumerate() {
                        let x = a[(r, c)];
                        sub.push(x);
                        rn += x * x;
                        col_sq[ci] += x * x;
                    }
                    row_bound *= rn.sqrt();
                }
                let col_bound: f64 = col_sq.iter().map(|v| v.sqrt()).product();
                let bound = row_bound.min(col_bound);
                let det = bareiss_det(sub, s).abs();
                let scaled = if bound > 0.0 { det / bound } else { 0.0 };
                checked += 1;
                min_abs = min_abs.min(det);
                if scaled < min_scaled {
                    min_scaled = scaled;
                    argmin = Some(Minor {
                        rows: rows.clone(),
                        cols: cols.clone(),
                    });
                }
            }
        }
    }
    let is_tns = min_scaled > tol;
    Ok(TnsReport {
        is_tns,
        min_abs_minor: min_abs,
        min_scaled_minor: min_scaled,
        witness: if is_tns { None } else { argmin },
        minors_checked: checked,
    })
}

/// Random totally non-singular `B` (`p×(p−q)`) with `AᵗB = 0`.
///
/// Draws uniform coefficients over an orthonormal basis of `Ker(Aᵗ)` and
/// keeps the first draw that passes full verification.
pub fn tns_complement(a: &RealMatrix, seed: u64, max_retries: usize) -> Result<RealMatrix> {
    let (p, q) = a.shape();
    if q == 0 || q >= p {
        return Err(Error::InvalidParameter(format!(
            "complement needs 0 < q < p, got {p}x{q}"
        )));
    }
    let report = all_minors_nonzero(a, DEFAULT_MINOR_TOL)?;
    if !report.is_tns {
        return Err(Error::NotTotallyNonSingular(format!(
            "input has vanishing minor {:?}",
            report.witness
        )));
    }
    let at_rows: Vec<Vec<f64>> = (0..q).map(|c| a.column(c).iter().copied().collect()).collect();
    let basis = linalg::null_space(&at_rows, p, 1e-12);
    let d = p - q;
    if basis.len() != d {
        return Err(Error::ComplementFailed {
            retries: 0,
            reason: format!("null space of Aᵗ has dimension {} instead of {d}", basis.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = String::new();
    for _ in 0..max_retries.max(1) {
        let coeffs = RealMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..=1.0));
        let b = RealMatrix::from_fn(p, d, |i, j| (0..d).map(|t| basis[t][i] * coeffs[(t, j)]).sum());
        let orth = (a.transpose() * &b).amax();
        if orth > COMPLEMENT_ORTH_TOL {
            last = format!("|AᵗB| = {orth:e}");
            continue;
        }
        let rep = all_minors_nonzero(&b, DEFAULT_MINOR_TOL)?;
        if rep.is_tns {
            return Ok(b);
        }
        last = format!("vanishing minor {:?} (scaled {:e})", rep.witness, rep.min_scaled_minor);
    }
    Err(Error::ComplementFailed {
        retries: max_retries,
        reason: last,
    })
}

/// Generalized Vandermonde block `rows × nodes.len()`, entry `(j, l) = nodes[l]^j`.
pub fn vandermonde_columns(nodes: &[f64], rows: usize) -> RealMatrix {
    RealMatrix::from_fn(rows, nodes.len(), |j, l| nodes[l].powi(j as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_two_by_two() {
        let a = RealMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let r = all_minors_nonzero(&a, DEFAULT_MINOR_TOL).unwrap();
        assert!(!r.is_tns);
        let w = r.witness.unwrap();
        assert_eq!(w.rows.len(), 2);
        assert_eq!(r.minors_checked, 5);
    }

    #[test]
    fn column_with_nonzero_entries() {
        let a = RealMatrix::from_column_slice(3, 1, &[1.0, 2.0, 4.0]);
        let r = all_minors_nonzero(&a, DEFAULT_MINOR_TOL).unwrap();
        assert!(r.is_tns && r.witness.is_none());
        assert_eq!(r.min_abs_minor, 1.0);
    }

    #[test]
    fn vandermonde_is_tns() {
        // all 1x1 and 2x2 minors of [[1,1],[.5,1],[.25,1],[.125,1]] are nonzero:
        // 2x2 minors are 0.5^i - 0.5^j for i != j
        let a = vandermonde_columns(&[0.5, 1.0], 4);
        let r = all_minors_nonzero(&a, DEFAULT_MINOR_TOL).unwrap();
        assert!(r.is_tns);
        assert_eq!(r.minors_checked, 8 + 6);
        assert!((r.min_abs_minor - (0.25 - 0.125)).abs() < 1e-15);
    }

    #[test]
    fn bareiss_matches_cofactor() {
        let m = vec![2.0, -1.0, 0.5, 3.0, 0.0, 1.0, -2.0, 4.0, 1.5];
        let cof = 2.0 * (0.0 * 1.5 - 1.0 * 4.0) - (-1.0) * (3.0 * 1.5 - 1.0 * -2.0) + 0.5 * (3.0 * 4.0 - 0.0);
        assert!((bareiss_det(m, 3) - cof).abs() < 1e-12);
        assert_eq!(bareiss_det(vec![1.0, 2.0, 2.0, 4.0], 2), 0.0);
    }

    #[test]
    fn subsets_enumerate() {
        let all: Vec<_> = subsets(4, 2).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 1]);
        assert_eq!(all[5], vec![2, 3]);
        assert_eq!(subsets(3, 3).count(), 1);
    }

    #[test]
    fn budget_guard() {
        let a = RealMatrix::from_element(30, 15, 1.0);
        assert!(matches!(all_minors_nonzero(&a, 1e-10), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn complement_of_ones_pair() {
        let a = RealMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let b = tns_complement(&a, 7, DEFAULT_MAX_RETRIES).unwrap();
        assert_eq!(b.shape(), (2, 1));
        assert!((b[(0, 0)] + b[(1, 0)]).abs() < 1e-12);
        assert!(b[(0, 0)].abs() > 0.0);
    }

    #[test]
    fn complement_of_ones_triple_and_vandermonde() {
        for (a, seed) in [
            (RealMatrix::from_element(3, 1, 1.0), 1u64),
            (vandermonde_columns(&[0.5, 1.0], 4), 2u64),
        ] {
            let b = tns_complement(&a, seed, DEFAULT_MAX_RETRIES).unwrap();
            assert_eq!(b.shape(), (a.nrows(), a.nrows() - a.ncols()));
            assert!((a.transpose() * &b).amax() < 1e-10);
            assert!(all_minors_nonzero(&b, DEFAULT_MINOR_TOL).unwrap().is_tns);
        }
    }

    #[test]
    fn complement_rejects_bad_input() {
        let a = RealMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(tns_complement(&a, 0, 4).is_err());
        let a = RealMatrix::from_element(2, 2, 1.0);
        assert!(tns_complement(&a, 0, 4).is_err());
    }
}
