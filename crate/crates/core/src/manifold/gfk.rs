use faer::{Mat, MatRef};
use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{centered, fix_column_signs, orthonormal_complement, psd_sqrt, sym_eigen, symmetrize, Matrix};

const RANK_TOL: f64 = 1e-10;

/// Angles below this use the θ → 0 limits of the λ coefficients.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Geodesic flow kernel between the PCA subspaces of two domains.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicKernel {
    pub source_basis: Matrix,
    pub target_basis: Matrix,
    pub complement: Matrix,
    pub principal_angles: Vec<f64>,
    pub g: Matrix,
    pub g_sqrt: Matrix,
}

/// `(λ1, λ2, λ3)` for one principal angle.
pub fn lambda_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        return (2.0, 0.0, 0.0);
    }
    let two = 2.0 * theta;
    (1.0 + two.sin() / two, (two.cos() - 1.0) / two, 1.0 - two.sin() / two)
}

/// Eigenvectors of the sample covariance ordered by decreasing eigenvalue,
/// plus the numerical rank.
fn pca_basis(x: MatRef<'_, f64>) -> Result<(Matrix, usize)> {
    let xc = centered(x);
    let cov = xc.transpose() * &xc;
    let (values, vectors) = sym_eigen(cov.as_ref())?;
    let d = values.len();
    let top = values.last().copied().unwrap_or(0.0);
    let rank = values.iter().filter(|&&v| top > 0.0 && v > RANK_TOL * top).count();
    let mut ordered = Mat::from_fn(d, d, |i, j| vectors[(i, d - 1 - j)]);
    fix_column_signs(&mut ordered);
    Ok((ordered, rank))
}

/// Modified Gram–Schmidt on the columns of `m`, in place.
fn orthonormalize(m: &mut Matrix) {
    for j in 0..m.ncols() {
        for k in 0..j {
            let dot: f64 = (0..m.nrows()).map(|i| m[(i, j)] * m[(i, k)]).sum();
            for i in 0..m.nrows() {
                m[(i, j)] -= dot * m[(i, k)];
            }
        }
        let norm = m.col(j).norm_l2();
        for i in 0..m.nrows() {
            m[(i, j)] /= norm;
        }
    }
}

/// Build the kernel from orthonormal subspace bases `ts` (with complement
/// `rs`) and `tt`, all expressed in the same `d`-dimensional space.
pub fn gfk_from_bases(ts: MatRef<'_, f64>, rs: MatRef<'_, f64>, tt: MatRef<'_, f64>) -> Result<GeodesicKernel> {
    let (d, q) = (ts.nrows(), ts.ncols());
    if tt.nrows() != d || tt.ncols() != q || rs.nrows() != d || rs.ncols() + q != d {
        return Err(Error::DimensionMismatch(format!(
            "bases {}x{}, {}x{} and complement {}x{}",
            ts.nrows(),
            ts.ncols(),
            tt.nrows(),
            tt.ncols(),
            rs.nrows(),
            rs.ncols()
        )));
    }
    if q == 0 || 2 * q > d {
        return Err(Error::InvalidArgument(format!("subspace dimension {q} must lie in [1, {}]", d / 2)));
    }
    let cross = ts.transpose() * tt;
    let svd = cross
        .thin_svd()
        .map_err(|e| Error::Decomposition(format!("principal-angle SVD: {e:?}")))?;
    let u1 = svd.U().to_owned();
    let v = svd.V().to_owned();
    let gamma: Vec<f64> = (0..q).map(|k| svd.S().column_vector()[k].clamp(-1.0, 1.0)).collect();

    let y = &(rs.transpose() * tt) * &v;
    let width = d - q;
    let sigma: Vec<f64> = (0..q).map(|k| y.col(k).norm_l2()).collect();
    let mut theta: Vec<f64> = sigma.iter().zip(&gamma).map(|(&s, &g)| s.atan2(g)).collect();
    for k in 1..q {
        if theta[k] < theta[k - 1] {
            theta[k] = theta[k - 1];
        }
    }

    let mut u2 = Mat::<f64>::zeros(width, q);
    let mut missing = Vec::new();
    for k in 0..q {
        if sigma[k] > 1e-12 {
            for i in 0..width {
                u2[(i, k)] = -y[(i, k)] / sigma[k];
            }
        } else {
            missing.push(k);
        }
    }
    if !missing.is_empty() {
        let present: Vec<usize> = (0..q).filter(|k| !missing.contains(k)).collect();
        let have = Mat::from_fn(width, present.len(), |i, c| u2[(i, present[c])]);
        let mut have = have;
        orthonormalize(&mut have);
        let fill = orthonormal_complement(have.as_ref());
        for (c, &k) in missing.iter().enumerate() {
            for i in 0..width {
                u2[(i, k)] = fill[(i, c)];
            }
        }
    }
    orthonormalize(&mut u2);

    let a = ts * &u1;
    let b = rs * &u2;
    let mut omega = Mat::<f64>::zeros(d, 2 * q);
    for i in 0..d {
        for k in 0..q {
            omega[(i, k)] = a[(i, k)];
            omega[(i, q + k)] = b[(i, k)];
        }
    }
    let mut middle = Mat::<f64>::zeros(2 * q, 2 * q);
    for (k, &t) in theta.iter().enumerate() {
        let (l1, l2, l3) = lambda_coefficients(t);
        middle[(k, k)] = l1;
        middle[(k, q + k)] = l2;
        middle[(q + k, k)] = l2;
        middle[(q + k, q + k)] = l3;
    }
    let g = symmetrize((&(&omega * &middle) * omega.transpose()).as_ref());
    let g_sqrt = psd_sqrt(g.as_ref())?;
    Ok(GeodesicKernel {
        source_basis: ts.to_owned(),
        target_basis: tt.to_owned(),
        complement: rs.to_owned(),
        principal_angles: theta,
        g,
        g_sqrt,
    })
}

/// PCA bases of both domains in the reduced space, then the closed-form
/// kernel. `q` is lowered to the smaller covariance rank with a warning.
pub fn fit_gfk(source: MatRef<'_, f64>, target: MatRef<'_, f64>, q: usize) -> Result<GeodesicKernel> {
    let d = source.ncols();
    if target.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "source has {d} columns, target has {}",
            target.ncols()
        )));
    }
    if q == 0 || 2 * q > d {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension q={q} must satisfy 1 <= q <= {}",
            d / 2
        )));
    }
    let (ps, rank_s) = pca_basis(source)?;
    let (pt, rank_t) = pca_basis(target)?;
    let q_eff = q.min(rank_s).min(rank_t);
    if q_eff == 0 {
        return Err(Error::InvalidData("a domain has zero covariance; no subspace to align".into()));
    }
    if q_eff < q {
        warn!("subspace dimension lowered from {q} to {q_eff} (covariance rank)");
    }
    let ts = ps.subcols(0, q_eff);
    let rs = ps.subcols(q_eff, d - q_eff);
    let tt = pt.subcols(0, q_eff);
    gfk_from_bases(ts, rs, tt)
}

impl GeodesicKernel {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// Rows of `x` mapped to `x G^{1/2}`.
    pub fn transform(&self, x: MatRef<'_, f64>) -> Result<Matrix> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "kernel is {0}x{0}, input has {1} columns",
                self.dim(),
                x.ncols()
            )));
        }
        Ok(x * &self.g_sqrt)
    }
}
