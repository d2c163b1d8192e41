use faer::{Mat, MatRef};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::kernel::{Kernel, KernelConfig};
use crate::linalg::{centered, fix_column_signs, psd_sqrt, sym_eigen, Matrix};

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcaConfig {
    pub dim: usize,
    pub kernel: KernelConfig,
    /// Weight ε of the identity term in `K M0 K + εI`.
    pub regularizer: f64,
}

impl Default for TcaConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            kernel: KernelConfig::LINEAR,
            regularizer: 1.0,
        }
    }
}

/// Fitted TCA projection. New rows map to `k(x, X) W`.
#[derive(Debug, Clone, PartialEq)]
pub struct TcaModel {
    kernel: Kernel,
    /// Pooled training rows (source first).
    training: Matrix,
    /// `(n+m) × d` coefficient matrix, unit-norm sign-fixed columns.
    projection: Matrix,
    /// `Xᵀ W` for the linear kernel, so transforms skip the Gram matrix.
    linear_map: Option<Matrix>,
    eigenvalues: Vec<f64>,
}

/// `A^{-1/2}` of `A = εI + g gᵀ`, applied to the columns of `v`.
struct InvSqrt {
    g_hat: Vec<f64>,
    base: f64,
    rank_one: f64,
}

impl InvSqrt {
    fn new(g: &[f64], eps: f64) -> Self {
        let s: f64 = g.iter().map(|v| v * v).sum();
        let norm = s.sqrt();
        let g_hat = if norm > 0.0 { g.iter().map(|v| v / norm).collect() } else { vec![0.0; g.len()] };
        let base = eps.powf(-0.5);
        Self {
            g_hat,
            base,
            rank_one: (eps + s).powf(-0.5) - base,
        }
    }

    fn apply(&self, v: MatRef<'_, f64>) -> Matrix {
        let mut out = Mat::from_fn(v.nrows(), v.ncols(), |i, j| self.base * v[(i, j)]);
        for j in 0..v.ncols() {
            let dot: f64 = (0..v.nrows()).map(|i| self.g_hat[i] * v[(i, j)]).sum();
            let s = self.rank_one * dot;
            for i in 0..v.nrows() {
                out[(i, j)] += s * self.g_hat[i];
            }
        }
        out
    }
}

fn mmd_weights(n: usize, m: usize) -> Vec<f64> {
    (0..n + m)
        .map(|i| if i < n { 1.0 / n as f64 } else { -1.0 / m as f64 })
        .collect()
}

/// Keep the top `dim` eigenpairs (values in ascending order on input) whose
/// values are numerically nonzero.
fn leading(values: &[f64], dim: usize) -> Vec<usize> {
    let top = values.iter().copied().fold(0.0f64, f64::max);
    let rank = values.iter().filter(|&&v| v > RANK_TOL * top && top > 0.0).count();
    let keep = dim.min(rank);
    if keep < dim {
        warn!("reduced dimension clamped from {dim} to {keep} (numerical rank)");
    }
    (0..keep).map(|k| values.len() - 1 - k).collect()
}

fn finish_projection(mut w: Matrix) -> Matrix {
    for j in 0..w.ncols() {
        let norm = w.col(j).norm_l2();
        if norm > 0.0 {
            for i in 0..w.nrows() {
                w[(i, j)] /= norm;
            }
        }
    }
    fix_column_signs(&mut w);
    w
}

/// Fit TCA on `n` source rows followed by `m` target rows of `x`.
pub fn fit_tca(x: MatRef<'_, f64>, n: usize, cfg: &TcaConfig) -> Result<TcaModel> {
    let total = x.nrows();
    if n == 0 || n >= total {
        return Err(Error::InvalidArgument(format!("need source and target rows (n={n}, total={total})")));
    }
    if !(cfg.regularizer > 0.0) {
        return Err(Error::InvalidArgument(format!("TCA regularizer must be > 0, got {}", cfg.regularizer)));
    }
    let dim = if cfg.dim > x.ncols() && matches!(cfg.kernel.kind, crate::learner::kernel::KernelKind::Linear) {
        log::info!("TCA dimension {} exceeds feature count {}; using {}", cfg.dim, x.ncols(), x.ncols());
        x.ncols()
    } else {
        cfg.dim
    };
    if dim == 0 || dim > total {
        return Err(Error::InvalidArgument(format!("TCA dimension {dim} must lie in [1, {total}]")));
    }
    let kernel = cfg.kernel.resolve(x)?;
    let e = mmd_weights(n, total - n);
    let e_col = Mat::from_fn(total, 1, |i, _| e[i]);

    let (projection, linear_map, eigenvalues) = match kernel {
        Kernel::Linear => {
            let xt_e = x.transpose() * &e_col;
            let g = x * &xt_e;
            let inv = InvSqrt::new(g.col(0).try_as_col_major().expect("column").as_slice(), cfg.regularizer);
            let xc = centered(x);
            let c = xc.transpose() * &xc;
            let r = psd_sqrt(c.as_ref())?;
            let qr = &inv.apply(x) * &r;
            let small = qr.transpose() * &qr;
            let (values, vectors) = sym_eigen(small.as_ref())?;
            let keep = leading(&values, dim);
            let mut u = Mat::zeros(total, keep.len());
            for (col, &k) in keep.iter().enumerate() {
                let v = vectors.col(k);
                let scale = 1.0 / values[k].sqrt();
                let qv = &qr * v;
                for i in 0..total {
                    u[(i, col)] = qv[i] * scale;
                }
            }
            let w = finish_projection(inv.apply(u.as_ref()));
            let map = x.transpose() * &w;
            (w, Some(map), keep.iter().map(|&k| values[k]).collect())
        }
        Kernel::Rbf { .. } => {
            let k = kernel.gram(x);
            let g = &k * &e_col;
            let inv = InvSqrt::new(g.col(0).try_as_col_major().expect("column").as_slice(), cfg.regularizer);
            // F = H K A^{-1/2} = H (A^{-1/2} K)ᵀ since both factors are symmetric.
            let ak = inv.apply(k.as_ref());
            let f = centered(ak.transpose());
            let s = f.transpose() * &f;
            let (values, vectors) = sym_eigen(s.as_ref())?;
            let keep = leading(&values, dim);
            let u = Mat::from_fn(total, keep.len(), |i, c| vectors[(i, keep[c])]);
            let w = finish_projection(inv.apply(u.as_ref()));
            (w, None, keep.iter().map(|&k| values[k]).collect())
        }
    };
    if projection.ncols() == 0 {
        return Err(Error::Decomposition("TCA found no nonzero component".into()));
    }
    Ok(TcaModel {
        kernel,
        training: x.to_owned(),
        projection,
        linear_map,
        eigenvalues,
    })
}

impl TcaModel {
    pub fn dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn projection(&self) -> MatRef<'_, f64> {
        self.projection.as_ref()
    }

    pub fn training_features(&self) -> MatRef<'_, f64> {
        self.training.as_ref()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn transform(&self, x: MatRef<'_, f64>) -> Result<Matrix> {
        if x.ncols() != self.training.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "TCA fitted on {} features, got {}",
                self.training.ncols(),
                x.ncols()
            )));
        }
        Ok(match &self.linear_map {
            Some(map) => x * map,
            None => &self.kernel.cross(x, self.training.as_ref()) * &self.projection,
        })
    }

    pub(crate) fn from_parts(kernel: Kernel, training: Matrix, projection: Matrix, eigenvalues: Vec<f64>) -> Self {
        let linear_map = matches!(kernel, Kernel::Linear).then(|| training.transpose() * &projection);
        Self {
            kernel,
            training,
            projection,
            linear_map,
            eigenvalues,
        }
    }
}

/// Principal component projection of the pooled rows, used as the TCA
/// stand-in of the reduction ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    components: Matrix,
}

pub fn fit_pca(x: MatRef<'_, f64>, dim: usize) -> Result<PcaModel> {
    if dim == 0 {
        return Err(Error::InvalidArgument("PCA dimension must be >= 1".into()));
    }
    let mean = crate::linalg::column_means(x);
    let xc = centered(x);
    let cov = xc.transpose() * &xc;
    let (values, vectors) = sym_eigen(cov.as_ref())?;
    let keep = leading(&values, dim.min(x.ncols()));
    if keep.is_empty() {
        return Err(Error::Decomposition("PCA found no nonzero component".into()));
    }
    let mut components = Mat::from_fn(x.ncols(), keep.len(), |i, c| vectors[(i, keep[c])]);
    fix_column_signs(&mut components);
    Ok(PcaModel { mean, components })
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn components(&self) -> MatRef<'_, f64> {
        self.components.as_ref()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn transform(&self, x: MatRef<'_, f64>) -> Result<Matrix> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "PCA fitted on {} features, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let xc = Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - self.mean[j]);
        Ok(&xc * &self.components)
    }

    pub(crate) fn from_parts(mean: Vec<f64>, components: Matrix) -> Self {
        Self { mean, components }
    }
}
