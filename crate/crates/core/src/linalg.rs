//! Real dense helpers on top of nalgebra: SVD, numerical rank, null spaces
//! and subspace comparisons. Vectors are plain `Vec<f64>` rows.

use nalgebra::DMatrix;

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

/// Singular values in descending order.
pub fn singular_values(rows: &[Vec<f64>], ncols: usize) -> Vec<f64> {
    if rows.is_empty() || ncols == 0 {
        return Vec::new();
    }
    let m = matrix_from_rows(rows, ncols);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(rows: &[Vec<f64>], ncols: usize, rel_tol: f64) -> usize {
    let s = singular_values(rows, ncols);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > rel_tol * smax).count(),
        _ => 0,
    }
}

/// Orthonormal basis of the null space of the `rows.len() × ncols` matrix,
/// singular values below `rel_tol * sigma_max` counted as zero.
pub fn null_space(rows: &[Vec<f64>], ncols: usize, rel_tol: f64) -> Vec<Vec<f64>> {
    if rows.is_empty() {
        return (0..ncols)
            .map(|i| (0..ncols).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
    }
    // Pad with zero rows so the SVD hands back a full right basis.
    let size = ncols.max(rows.len());
    let m = DMatrix::from_fn(size, ncols, |i, j| if i < rows.len() { rows[i][j] } else { 0.0 });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = rel_tol * smax;
    let mut out = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= cut || smax == 0.0 {
            out.push(vt.row(i).iter().copied().collect());
        }
    }
    out
}

/// Orthonormal basis of the span of `vectors` (numerical rank at `rel_tol`).
pub fn orthonormal_span(vectors: &[Vec<f64>], dim: usize, rel_tol: f64) -> Vec<Vec<f64>> {
    if vectors.is_empty() {
        return Vec::new();
    }
    // columns = vectors
    let m = DMatrix::from_fn(dim, vectors.len(), |i, j| vectors[j][i]);
    let svd = m.svd(true, false);
    let u = svd.u.expect("u requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| smax > 0.0 && s > rel_tol * smax)
        .map(|(i, _)| u.column(i).iter().copied().collect())
        .collect()
}

/// Largest principal angle between the spans of two orthonormal families of
/// equal size, computed from sines so small angles keep full precision.
/// Returns `π/2` when the dimensions differ.
pub fn max_principal_angle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.len() != b.len() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.is_empty() {
        return 0.0;
    }
    let worst = residual_outside(b, a);
    worst.min(1.0).asin()
}

/// Spectral norm of `(I - P_A) B` where `P_A` projects onto the span of the
/// orthonormal family `a` and the columns of `B` are the vectors `b`.
pub fn residual_outside(b: &[Vec<f64>], a: &[Vec<f64>]) -> f64 {
    if b.is_empty() {
        return 0.0;
    }
    let dim = b[0].len();
    let mut resid = DMatrix::from_fn(dim, b.len(), |i, j| b[j][i]);
    for q in a {
        for j in 0..b.len() {
            let c: f64 = (0..dim).map(|i| q[i] * resid[(i, j)]).sum();
            for i in 0..dim {
                resid[(i, j)] -= c * q[i];
            }
        }
    }
    resid.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
