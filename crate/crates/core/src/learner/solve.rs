//! Closed-form coefficient solve `((A + λM + ρL)K + ηI) β = A Yᵀ`.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use super::graph::GraphLaplacian;
use crate::alignment::MmdOperator;
use crate::error::{Error, Result};
use crate::linalg::{inverse_one_norm_estimate, one_norm, Matrix};

/// Condition estimates above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// A square matrix that can be applied to a block of columns.
pub trait Operator {
    fn dim(&self) -> usize;
    fn mul_mat(&self, rhs: MatRef<'_, f64>) -> Matrix;
}

impl Operator for Matrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn mul_mat(&self, rhs: MatRef<'_, f64>) -> Matrix {
        self * rhs
    }
}

impl Operator for MmdOperator {
    fn dim(&self) -> usize {
        self.len()
    }

    fn mul_mat(&self, rhs: MatRef<'_, f64>) -> Matrix {
        MmdOperator::mul_mat(self, rhs)
    }
}

impl Operator for GraphLaplacian {
    fn dim(&self) -> usize {
        self.len()
    }

    fn mul_mat(&self, rhs: MatRef<'_, f64>) -> Matrix {
        GraphLaplacian::mul_mat(self, rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub eta: f64,
    pub lambda: f64,
    pub rho: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            eta: 0.1,
            lambda: 0.4,
            rho: 1.0,
        }
    }
}

impl Regularization {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be > 0, got {}", self.eta)));
        }
        for (name, v) in [("lambda", self.lambda), ("rho", self.rho)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Inputs that stay fixed across pseudo-labeling iterations.
pub struct SystemParts<'a> {
    pub kernel: MatRef<'a, f64>,
    /// `A_ii = 1` for source samples.
    pub source_mask: &'a [bool],
    /// One-hot labels, classes on rows, zero columns for target samples.
    pub y: MatRef<'a, f64>,
}

#[derive(Debug, Clone)]
pub struct BetaSolution {
    /// `(n+m) × C`.
    pub beta: Matrix,
    /// `‖Φβ − AYᵀ‖_F / ‖AYᵀ‖_F`.
    pub relative_residual: f64,
    pub condition_estimate: f64,
}

fn check_parts(parts: &SystemParts<'_>) -> Result<usize> {
    let n = parts.kernel.nrows();
    if parts.kernel.ncols() != n || parts.source_mask.len() != n || parts.y.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "kernel {}x{}, mask {}, labels {}x{}",
            parts.kernel.nrows(),
            parts.kernel.ncols(),
            parts.source_mask.len(),
            parts.y.nrows(),
            parts.y.ncols()
        )));
    }
    Ok(n)
}

/// The system matrix `Φ = AK + λMK + ρLK + ηI`.
pub fn system_matrix(
    parts: &SystemParts<'_>,
    mmd: Option<&dyn Operator>,
    laplacian: Option<&dyn Operator>,
    reg: &Regularization,
) -> Result<Matrix> {
    let n = check_parts(parts)?;
    let k = parts.kernel;
    let mut phi = Mat::from_fn(n, n, |i, j| if parts.source_mask[i] { k[(i, j)] } else { 0.0 });
    for (op, w) in [(mmd, reg.lambda), (laplacian, reg.rho)] {
        if let Some(op) = op {
            if w == 0.0 {
                continue;
            }
            if op.dim() != n {
                return Err(Error::DimensionMismatch(format!("operator of size {} for {n} samples", op.dim())));
            }
            let prod = op.mul_mat(k);
            for j in 0..n {
                for i in 0..n {
                    phi[(i, j)] += w * prod[(i, j)];
                }
            }
        }
    }
    for i in 0..n {
        phi[(i, i)] += reg.eta;
    }
    Ok(phi)
}

fn masked_labels(parts: &SystemParts<'_>) -> Matrix {
    Mat::from_fn(parts.y.ncols(), parts.y.nrows(), |i, c| {
        if parts.source_mask[i] {
            parts.y[(c, i)]
        } else {
            0.0
        }
    })
}

/// Direct LU solve with up to three refinement steps. Fails when the
/// condition estimate exceeds [`MAX_CONDITION`].
pub fn solve_beta(
    parts: &SystemParts<'_>,
    mmd: Option<&dyn Operator>,
    laplacian: Option<&dyn Operator>,
    reg: &Regularization,
) -> Result<BetaSolution> {
    reg.validate()?;
    let phi = system_matrix(parts, mmd, laplacian, reg)?;
    let n = phi.nrows();
    let rhs = masked_labels(parts);
    let lu = phi.partial_piv_lu();
    let condition = one_norm(phi.as_ref()) * inverse_one_norm_estimate(&lu, n);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let mut beta = lu.solve(&rhs);
    let rhs_norm = rhs.norm_l2().max(f64::MIN_POSITIVE);
    let mut residual = &rhs - &phi * &beta;
    let mut rel = residual.norm_l2() / rhs_norm;
    for _ in 0..3 {
        if rel <= 1e-14 {
            break;
        }
        let candidate = &beta + lu.solve(&residual);
        let next = &rhs - &phi * &candidate;
        let next_rel = next.norm_l2() / rhs_norm;
        if next_rel >= rel {
            break;
        }
        beta = candidate;
        residual = next;
        rel = next_rel;
    }
    Ok(BetaSolution {
        beta,
        relative_residual: rel,
        condition_estimate: condition,
    })
}

/// `‖(Y − βᵀK)A‖² + η tr(βᵀKβ) + tr(βᵀK(λM + ρL)Kβ)`.
pub fn objective(
    parts: &SystemParts<'_>,
    mmd: Option<&dyn Operator>,
    laplacian: Option<&dyn Operator>,
    reg: &Regularization,
    beta: MatRef<'_, f64>,
) -> f64 {
    let k = parts.kernel;
    let kb = k * beta;
    let n = k.nrows();
    let mut loss = 0.0;
    for i in 0..n {
        if parts.source_mask[i] {
            for c in 0..parts.y.nrows() {
                loss += (parts.y[(c, i)] - kb[(i, c)]).powi(2);
            }
        }
    }
    let trace = |a: MatRef<'_, f64>, b: MatRef<'_, f64>| -> f64 {
        (0..a.ncols())
            .map(|c| (0..a.nrows()).map(|i| a[(i, c)] * b[(i, c)]).sum::<f64>())
            .sum()
    };
    let mut value = loss + reg.eta * trace(beta, kb.as_ref());
    for (op, w) in [(mmd, reg.lambda), (laplacian, reg.rho)] {
        if let Some(op) = op {
            value += w * trace(kb.as_ref(), op.mul_mat(kb.as_ref()).as_ref());
        }
    }
    value
}

/// One-hot `C × (n+m)` label matrix with zero target columns.
pub fn one_hot_source(source_labels: &[usize], target_count: usize, class_count: usize) -> Matrix {
    let mut y = Mat::zeros(class_count, source_labels.len() + target_count);
    for (i, &l) in source_labels.iter().enumerate() {
        y[(l, i)] = 1.0;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::graph::{build_laplacian, GraphConfig};
    use crate::learner::kernel::{build_kernel, Bandwidth, KernelConfig};
    use rand::Rng as _;

    struct Fixture {
        k: Matrix,
        mask: Vec<bool>,
        y: Matrix,
        mmd: MmdOperator,
        lap: GraphLaplacian,
    }

    fn fixture(seed: u64, n: usize, m: usize) -> Fixture {
        let mut r = crate::rng::rng(seed);
        let z = Mat::from_fn(n + m, 4, |_, _| crate::rng::std_normal(&mut r));
        let (k, _) = build_kernel(z.as_ref(), &KernelConfig::rbf(Bandwidth::Median)).unwrap();
        let ys: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let yt: Vec<usize> = (0..m).map(|_| r.random_range(0..3)).collect();
        Fixture {
            mask: (0..n + m).map(|i| i < n).collect(),
            y: one_hot_source(&ys, m, 3),
            mmd: MmdOperator::new(&ys, &yt, 3, 0.4),
            lap: build_laplacian(z.as_ref(), &GraphConfig { p: 4 }).unwrap(),
            k,
        }
    }

    #[test]
    fn kernel_ridge_limit_matches_direct_solve() {
        let f = fixture(1, 20, 0);
        let parts = SystemParts {
            kernel: f.k.as_ref(),
            source_mask: &f.mask,
            y: f.y.as_ref(),
        };
        let reg = Regularization {
            eta: 0.1,
            lambda: 0.0,
            rho: 0.0,
        };
        let sol = solve_beta(&parts, Some(&f.mmd), Some(&f.lap), &reg).unwrap();
        let mut kr = f.k.clone();
        for i in 0..20 {
            kr[(i, i)] += 0.1;
        }
        let direct = kr.full_piv_lu().solve(f.y.transpose());
        assert!((&sol.beta - &direct).norm_l2() <= 1e-8 * direct.norm_l2());
    }

    #[test]
    fn residual_bound_holds() {
        let f = fixture(2, 18, 12);
        let parts = SystemParts {
            kernel: f.k.as_ref(),
            source_mask: &f.mask,
            y: f.y.as_ref(),
        };
        let reg = Regularization::default();
        let sol = solve_beta(&parts, Some(&f.mmd), Some(&f.lap), &reg).unwrap();
        assert!(sol.relative_residual <= 1e-8);
        let phi = system_matrix(&parts, Some(&f.mmd), Some(&f.lap), &reg).unwrap();
        let r = &phi * &sol.beta - &masked_labels(&parts);
        assert!(r.norm_l2() <= 1e-8 * masked_labels(&parts).norm_l2());
    }

    #[test]
    fn solution_is_stationary() {
        let f = fixture(3, 12, 8);
        let parts = SystemParts {
            kernel: f.k.as_ref(),
            source_mask: &f.mask,
            y: f.y.as_ref(),
        };
        let reg = Regularization::default();
        let mmd: &dyn Operator = &f.mmd;
        let lap: &dyn Operator = &f.lap;
        let sol = solve_beta(&parts, Some(mmd), Some(lap), &reg).unwrap();
        let base = objective(&parts, Some(mmd), Some(lap), &reg, sol.beta.as_ref());
        let mut r = crate::rng::rng(4);
        for _ in 0..200 {
            let mut d = Mat::from_fn(20, 3, |_, _| crate::rng::std_normal(&mut r));
            let scale = 1e-4 / d.norm_l2();
            d = &d * faer::Scale(scale);
            let moved = objective(&parts, Some(mmd), Some(lap), &reg, (&sol.beta + &d).as_ref());
            assert!(moved >= base - 1e-8, "{moved} < {base}");
        }
    }

    #[test]
    fn singular_system_is_rejected() {
        let k = Mat::<f64>::from_fn(3, 3, |_, _| 1.0);
        let mask = [true; 3];
        let y = one_hot_source(&[0, 1, 0], 0, 2);
        let parts = SystemParts {
            kernel: k.as_ref(),
            source_mask: &mask,
            y: y.as_ref(),
        };
        let reg = Regularization {
            eta: 1e-15,
            lambda: 0.0,
            rho: 0.0,
        };
        let err = solve_beta(&parts, None, None, &reg).unwrap_err();
        assert!(err.to_string().contains("eta"));
    }

    #[test]
    fn eta_must_be_positive() {
        let reg = Regularization {
            eta: 0.0,
            ..Default::default()
        };
        assert!(reg.validate().is_err());
    }
}
