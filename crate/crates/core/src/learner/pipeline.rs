//! The pseudo-labeling loop: manifold features, a weak initial labeling,
//! then repeated μ estimation and coefficient solves.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use super::graph::build_laplacian;
use super::kernel::{build_kernel, Kernel};
use super::solve::{one_hot_source, solve_beta, BetaSolution, Operator, Regularization, SystemParts};
use super::weak::{argmax_rows, weak_fit_predict};
use crate::alignment::{estimate_mu, MmdOperator};
use crate::config::PipelineConfig;
use crate::data::DomainPair;
use crate::error::Result;
use crate::linalg::{vstack, Matrix};
use crate::manifold::ManifoldModel;
use crate::rng;

/// Which stages run. Disabling the manifold stage feeds raw features to
/// everything downstream; disabling the learner stops after the weak
/// classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stages {
    pub manifold: bool,
    pub learner: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self {
            manifold: true,
            learner: true,
        }
    }
}

/// One pass of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Target soft scores, `m × C`.
    pub scores: Matrix,
    pub labels: Vec<usize>,
    pub mu: f64,
    /// `None` when μ was fixed by configuration.
    pub d_marginal: Option<f64>,
    pub d_conditional: Vec<Option<f64>>,
    /// Fraction of target labels that changed against the previous pass.
    pub churn: f64,
    pub relative_residual: f64,
    pub condition_estimate: f64,
}

/// Fitted kernel classifier `f(z) = βᵀ k(Z, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub kernel: Kernel,
    pub training: Matrix,
    pub beta: Matrix,
    pub regularization: Regularization,
}

impl ClassifierModel {
    /// Soft scores for rows of `z`, one column per class.
    pub fn scores(&self, z: MatRef<'_, f64>) -> Matrix {
        self.kernel.cross(z, self.training.as_ref()) * &self.beta
    }

    pub fn predict(&self, z: MatRef<'_, f64>) -> Vec<usize> {
        argmax_rows(self.scores(z).as_ref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct M3dRun {
    pub manifold: Option<ManifoldModel>,
    /// Features the classifier sees, source rows first.
    pub features: Matrix,
    pub weak_scores: Matrix,
    pub weak_labels: Vec<usize>,
    pub iterations: Vec<IterationRecord>,
    pub classifier: Option<ClassifierModel>,
}

impl M3dRun {
    /// Latest target labels, falling back to the weak classifier.
    pub fn final_labels(&self) -> &[usize] {
        self.iterations.last().map_or(&self.weak_labels, |it| &it.labels)
    }

    pub fn final_scores(&self) -> &Matrix {
        self.iterations.last().map_or(&self.weak_scores, |it| &it.scores)
    }

    pub fn mu_trace(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.mu).collect()
    }
}

pub fn run_m3d(pair: &DomainPair, cfg: &PipelineConfig) -> Result<M3dRun> {
    run_stages(pair, cfg, Stages::default())
}

pub fn run_stages(pair: &DomainPair, cfg: &PipelineConfig, stages: Stages) -> Result<M3dRun> {
    cfg.validate()?;
    let n = pair.source.num_samples();
    let m = pair.target.num_samples();
    let c = pair.class_count();
    let ys = pair.source_labels();
    let x = vstack(pair.source.features(), pair.target.features())?;

    let (manifold, z) = if stages.manifold {
        let model = ManifoldModel::fit(x.as_ref(), n, cfg.reduction, &cfg.tca_config(), cfg.q)?;
        let z = model.transform(x.as_ref())?;
        (Some(model), z)
    } else {
        (None, x)
    };
    let zs = z.subrows(0, n);
    let zt = z.subrows(n, m);

    let weak_scores = weak_fit_predict(&cfg.weak_config(), zs, &ys, c, zt)?;
    let weak_labels = argmax_rows(weak_scores.as_ref());
    let mut run = M3dRun {
        manifold,
        features: Mat::new(),
        weak_scores,
        weak_labels,
        iterations: Vec::new(),
        classifier: None,
    };
    if !stages.learner {
        run.features = z;
        return Ok(run);
    }

    let (k, kernel) = build_kernel(z.as_ref(), &cfg.kernel_config())?;
    let laplacian = build_laplacian(z.as_ref(), &cfg.graph_config())?;
    let y = one_hot_source(&ys, m, c);
    let mask: Vec<bool> = (0..n + m).map(|i| i < n).collect();
    let parts = SystemParts {
        kernel: k.as_ref(),
        source_mask: &mask,
        y: y.as_ref(),
    };
    let reg = cfg.regularization();
    let mu_seed = rng::derive(cfg.seed, "mu");

    let mut pseudo = run.weak_labels.clone();
    let mut last: Option<BetaSolution> = None;
    for iter in 0..cfg.iterations {
        let (mu, d_marginal, d_conditional) = match cfg.mu {
            Some(mu) => (mu, None, Vec::new()),
            None => {
                let a_cfg = cfg.a_distance_config(rng::derive_indexed(mu_seed, "iteration", iter as u64));
                let est = estimate_mu(zs, &ys, zt, &pseudo, c, &a_cfg);
                (est.mu, Some(est.d_marginal), est.d_conditional)
            }
        };
        let mmd = MmdOperator::new(&ys, &pseudo, c, mu);
        let sol = solve_beta(&parts, Some(&mmd as &dyn Operator), Some(&laplacian as &dyn Operator), &reg)?;
        let scores = k.subrows(n, m) * &sol.beta;
        let labels = argmax_rows(scores.as_ref());
        let changed = labels.iter().zip(&pseudo).filter(|(a, b)| a != b).count();
        log::debug!(
            "iteration {}: mu={mu:.4} churn={changed}/{m} residual={:.2e}",
            iter + 1,
            sol.relative_residual
        );
        run.iterations.push(IterationRecord {
            scores,
            labels: labels.clone(),
            mu,
            d_marginal,
            d_conditional,
            churn: changed as f64 / m as f64,
            relative_residual: sol.relative_residual,
            condition_estimate: sol.condition_estimate,
        });
        pseudo = labels;
        last = Some(sol);
    }
    let beta = last.expect("at least one iteration").beta;
    run.classifier = Some(ClassifierModel {
        kernel,
        training: z.clone(),
        beta,
        regularization: reg,
    });
    run.features = z;
    Ok(run)
}
