//! Browser bindings for three demo operations. Each exported function takes
//! and returns JSON so the page needs no generated type glue.
//!
//! The plain-Rust functions behind the bindings are public as well, which lets
//! them be tested natively.

use m3d::config::PipelineConfig;
use m3d::data::{synth_domain_shift, DomainPair, SynthConfig};
use m3d::ensemble::EnsembleMethod;
use m3d::learner::pipeline::run_m3d;
use m3d::learner::weak::WeakKind;
use m3d::linalg::vstack;
use m3d::manifold::{fit_pca, lambda_coefficients};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaCurves {
    pub theta: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub lambda3: Vec<f64>,
}

/// Geodesic-kernel coefficients sampled on `[0, π/2]`.
pub fn lambda_curves(samples: usize) -> LambdaCurves {
    let samples = samples.max(2);
    let theta: Vec<f64> = (0..samples)
        .map(|i| std::f64::consts::FRAC_PI_2 * i as f64 / (samples - 1) as f64)
        .collect();
    let coeffs: Vec<(f64, f64, f64)> = theta.iter().map(|&t| lambda_coefficients(t)).collect();
    LambdaCurves {
        lambda1: coeffs.iter().map(|c| c.0).collect(),
        lambda2: coeffs.iter().map(|c| c.1).collect(),
        lambda3: coeffs.iter().map(|c| c.2).collect(),
        theta,
    }
}

/// Page controls. Missing fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoParams {
    pub seed: u64,
    pub shift: f64,
    pub rotation: f64,
    pub noise: f64,
    pub n_per_class: usize,
    pub classes: usize,
    pub dim: usize,
    pub iterations: usize,
    pub weak: WeakKind,
    pub ensemble: EnsembleMethod,
}

impl Default for DemoParams {
    fn default() -> Self {
        Self {
            seed: 0,
            shift: 3.0,
            rotation: 0.4,
            noise: 0.8,
            n_per_class: 60,
            classes: 3,
            dim: 8,
            iterations: 10,
            weak: WeakKind::Dtree,
            ensemble: EnsembleMethod::default(),
        }
    }
}

impl DemoParams {
    fn synth(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            n_per_class: self.n_per_class,
            class_count: self.classes,
            shift: self.shift,
            rotation: self.rotation,
            noise: self.noise,
            dim: self.dim,
            ..SynthConfig::default()
        }
    }
}

/// Both domains projected onto the two leading principal axes of the pooled
/// samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scatter {
    pub source: Vec<[f64; 2]>,
    pub source_labels: Vec<usize>,
    pub target: Vec<[f64; 2]>,
    pub target_labels: Vec<usize>,
}

fn scatter_of(pair: &DomainPair) -> Result<Scatter, String> {
    let pooled = vstack(pair.source.features(), pair.target.features()).map_err(|e| e.to_string())?;
    let pca = fit_pca(pooled.as_ref(), 2).map_err(|e| e.to_string())?;
    let plane = pca.transform(pooled.as_ref()).map_err(|e| e.to_string())?;
    let n = pair.source.num_samples();
    let point = |i: usize| [plane[(i, 0)], plane[(i, 1)]];
    Ok(Scatter {
        source: (0..n).map(point).collect(),
        source_labels: pair.source_labels(),
        target: (n..plane.nrows()).map(point).collect(),
        target_labels: pair.target_labels().unwrap_or_default(),
    })
}

pub fn synthesize(params: &DemoParams) -> Result<Scatter, String> {
    let pair = synth_domain_shift(&params.synth()).map_err(|e| e.to_string())?;
    scatter_of(&pair)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Adaptation {
    pub scatter: Scatter,
    pub predictions: Vec<usize>,
    pub weak_accuracy: f64,
    pub accuracy: f64,
    /// Target accuracy of each iteration's pseudo-labels.
    pub iteration_accuracy: Vec<f64>,
    pub mu_trace: Vec<f64>,
    pub churn_trace: Vec<f64>,
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

pub fn adapt(params: &DemoParams) -> Result<Adaptation, String> {
    let pair = synth_domain_shift(&params.synth()).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig {
        seed: params.seed,
        iterations: params.iterations,
        weak: params.weak,
        ensemble: params.ensemble,
        ..PipelineConfig::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let run = run_m3d(&pair, &cfg).map_err(|e| e.to_string())?;
    let base = m3d::ensemble::BaseEnsemble::new(
        run.iterations.iter().map(|it| it.labels.clone()).collect(),
        Some(run.iterations.iter().map(|it| it.scores.clone()).collect()),
        pair.class_count(),
    )
    .map_err(|e| e.to_string())?;
    let predictions = m3d::ensemble::consensus(&base, cfg.ensemble, cfg.decay)
        .map_err(|e| e.to_string())?
        .labels;
    let truth = pair.target_labels().unwrap_or_default();
    Ok(Adaptation {
        scatter: scatter_of(&pair)?,
        weak_accuracy: accuracy(&run.weak_labels, &truth),
        accuracy: accuracy(&predictions, &truth),
        iteration_accuracy: run.iterations.iter().map(|it| accuracy(&it.labels, &truth)).collect(),
        mu_trace: run.mu_trace(),
        churn_trace: run.iterations.iter().map(|it| it.churn).collect(),
        predictions,
    })
}

pub fn parse_params(json: &str) -> Result<DemoParams, String> {
    if json.trim().is_empty() {
        return Ok(DemoParams::default());
    }
    serde_json::from_str(json).map_err(|e| format!("bad parameters: {e}"))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = lambdaCurves)]
pub fn lambda_curves_js(samples: usize) -> Result<String, JsError> {
    to_json(&lambda_curves(samples)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = synthesize)]
pub fn synthesize_js(params: &str) -> Result<String, JsError> {
    parse_params(params)
        .and_then(|p| synthesize(&p))
        .and_then(|s| to_json(&s))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = adapt)]
pub fn adapt_js(params: &str) -> Result<String, JsError> {
    parse_params(params)
        .and_then(|p| adapt(&p))
        .and_then(|a| to_json(&a))
        .map_err(|e| JsError::new(&e))
}
