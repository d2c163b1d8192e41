//! Thin helpers over `faer` used across the pipeline.
//!
//! Matrices are `faer::Mat<f64>` with samples on rows.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

pub type Matrix = Mat<f64>;

/// Symmetric eigendecomposition with eigenvalues in nondecreasing order.
pub fn sym_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Matrix)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("symmetric eigendecomposition: {e:?}")))?;
    let s = evd.S().column_vector();
    let values = (0..s.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

/// Principal square root of a symmetric PSD matrix; negative eigenvalues
/// (roundoff) are clamped to zero.
pub fn psd_sqrt(a: MatRef<'_, f64>) -> Result<Matrix> {
    let (values, vectors) = sym_eigen(a)?;
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        let r = v.max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= r;
        }
    }
    let out = &scaled * vectors.transpose();
    Ok(symmetrize(out.as_ref()))
}

pub fn symmetrize(a: MatRef<'_, f64>) -> Matrix {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Columns spanning the orthogonal complement of an orthonormal `basis` (d × q).
pub fn orthonormal_complement(basis: MatRef<'_, f64>) -> Matrix {
    let (d, q) = (basis.nrows(), basis.ncols());
    if q == 0 {
        return Mat::identity(d, d);
    }
    let full_q = basis.qr().compute_Q();
    full_q.subcols(q, d - q).to_owned()
}

/// Flip column signs so that each column's largest-magnitude entry is positive.
/// Ties resolve to the lowest row index.
pub fn fix_column_signs(m: &mut Matrix) {
    for j in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..m.nrows() {
            let a = m[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m.nrows() > 0 && m[(best, j)] < 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Row-wise squared Euclidean norms.
pub fn row_sq_norms(z: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = vec![0.0; z.nrows()];
    for j in 0..z.ncols() {
        let col = z.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            let v = col[i];
            *o += v * v;
        }
    }
    out
}

/// Pairwise squared Euclidean distances between the rows of `a` and `b`.
pub fn sq_distances(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Matrix {
    let na = row_sq_norms(a);
    let nb = row_sq_norms(b);
    let mut g = a * b.transpose();
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            g[(i, j)] = (na[i] + nb[j] - 2.0 * g[(i, j)]).max(0.0);
        }
    }
    g
}

pub fn frobenius(a: MatRef<'_, f64>) -> f64 {
    a.norm_l2()
}

/// Largest eigenvalue magnitude of a symmetric matrix (its spectral norm).
pub fn sym_spectral_norm(a: MatRef<'_, f64>) -> Result<f64> {
    let (values, _) = sym_eigen(a)?;
    Ok(values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

pub fn one_norm(a: MatRef<'_, f64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hager–Higham estimate of ‖A⁻¹‖₁ from an LU factorization of A.
pub fn inverse_one_norm_estimate(lu: &PartialPivLu<f64>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut x = Mat::<f64>::from_fn(n, 1, |_, _| 1.0 / n as f64);
    let mut estimate = 0.0;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let y = lu.solve(&x);
        estimate = (0..n).map(|i| y[(i, 0)].abs()).sum::<f64>();
        let xi = Mat::<f64>::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
        let z = lu.solve_transpose(&xi);
        let mut j = 0;
        let mut zmax = -1.0;
        for i in 0..n {
            if z[(i, 0)].abs() > zmax {
                zmax = z[(i, 0)].abs();
                j = i;
            }
        }
        let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        x = Mat::<f64>::zeros(n, 1);
        x[(j, 0)] = 1.0;
    }
    estimate
}

/// Copy rows selected by `idx` into a new matrix.
pub fn select_rows(a: MatRef<'_, f64>, idx: &[usize]) -> Matrix {
    Mat::from_fn(idx.len(), a.ncols(), |i, j| a[(idx[i], j)])
}

/// Stack `top` over `bottom`.
pub fn vstack(top: MatRef<'_, f64>, bottom: MatRef<'_, f64>) -> Result<Matrix> {
    if top.ncols() != bottom.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cannot stack {} columns over {} columns",
            top.ncols(),
            bottom.ncols()
        )));
    }
    let n = top.nrows();
    Ok(Mat::from_fn(n + bottom.nrows(), top.ncols(), |i, j| {
        if i < n {
            top[(i, j)]
        } else {
            bottom[(i - n, j)]
        }
    }))
}

pub fn column_means(a: MatRef<'_, f64>) -> Vec<f64> {
    let n = a.nrows().max(1) as f64;
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)]).sum::<f64>() / n)
        .collect()
}

pub fn centered(a: MatRef<'_, f64>) -> Matrix {
    let means = column_means(a);
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - means[j])
}

pub fn row_vec(a: MatRef<'_, f64>, i: usize) -> Vec<f64> {
    (0..a.ncols()).map(|j| a[(i, j)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_sqrt_squares_back() {
        let b = Mat::<f64>::from_fn(5, 3, |i, j| ((i * 3 + j * 7) % 5) as f64 - 2.0);
        let a = &b * b.transpose();
        let r = psd_sqrt(a.as_ref()).unwrap();
        let back = &r * &r;
        assert!((&back - &a).norm_l2() <= 1e-10 * a.norm_l2());
    }

    #[test]
    fn complement_is_orthogonal() {
        let raw = Mat::<f64>::from_fn(6, 2, |i, j| (i as f64 + 1.0).powi(j as i32 + 1));
        let q = raw.qr().compute_thin_Q();
        let c = orthonormal_complement(q.as_ref());
        assert_eq!(c.ncols(), 4);
        assert!((c.transpose() * &q).norm_l2() < 1e-12);
        let eye = Mat::<f64>::identity(4, 4);
        assert!((c.transpose() * &c - eye).norm_l2() < 1e-12);
    }

    #[test]
    fn condition_estimate_of_diagonal() {
        let a = Mat::<f64>::from_fn(4, 4, |i, j| if i == j { 10f64.powi(i as i32) } else { 0.0 });
        let lu = a.partial_piv_lu();
        let est = inverse_one_norm_estimate(&lu, 4);
        assert!((est - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sign_fixing_makes_largest_entry_positive() {
        let mut m = Mat::<f64>::from_fn(3, 2, |i, j| if j == 0 { -(i as f64) } else { i as f64 - 1.5 });
        fix_column_signs(&mut m);
        assert_eq!(m[(2, 0)], 2.0);
        assert!(m[(0, 1)] > 0.0 || m[(2, 1)] > 0.0);
    }
}
