use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics_from_confusion, ConfusionMatrix, Metrics};
use crate::config::PipelineConfig;
use crate::data::{DomainPair, FeatureDataset, SplitPlan};
use crate::ensemble::{consensus, BaseEnsemble, EnsembleMethod};
use crate::error::{Error, Result};
use crate::learner::pipeline::{run_stages, Stages};
use crate::linalg::Matrix;
use crate::manifold::ManifoldModel;
use crate::rng;

/// A pipeline variant for ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    Full,
    /// Weak classifier on manifold features.
    ManifoldOnly,
    /// Alignment and classifier learning on raw features, final iteration only.
    AlignClassifyOnly,
    /// Everything except the manifold stage.
    NoManifold,
    /// Final iteration instead of the consensus.
    NoEnsemble,
    FixedMu(f64),
    PcaInsteadOfTca,
    Ensemble(EnsembleMethod),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Full => f.write_str("full"),
            Variant::ManifoldOnly => f.write_str("manifold-only"),
            Variant::AlignClassifyOnly => f.write_str("align-classify-only"),
            Variant::NoManifold => f.write_str("no-manifold"),
            Variant::NoEnsemble => f.write_str("no-ensemble"),
            Variant::FixedMu(mu) => write!(f, "fixed-mu-{mu}"),
            Variant::PcaInsteadOfTca => f.write_str("pca-instead-of-tca"),
            Variant::Ensemble(m) => write!(f, "ensemble-{m}"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Variant::Full,
            "manifold-only" => Variant::ManifoldOnly,
            "align-classify-only" | "align+classify-only" => Variant::AlignClassifyOnly,
            "no-manifold" => Variant::NoManifold,
            "no-ensemble" => Variant::NoEnsemble,
            "pca-instead-of-tca" | "pca" => Variant::PcaInsteadOfTca,
            other => {
                if let Some(v) = other.strip_prefix("fixed-mu-") {
                    let mu: f64 = v
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad fixed mu in variant `{other}`")))?;
                    if !(0.0..=1.0).contains(&mu) {
                        return Err(Error::InvalidArgument(format!("fixed mu must lie in [0, 1], got {mu}")));
                    }
                    Variant::FixedMu(mu)
                } else if let Some(m) = other.strip_prefix("ensemble-") {
                    Variant::Ensemble(m.parse()?)
                } else {
                    return Err(Error::InvalidArgument(format!(
                        "unknown variant `{other}` (expected full, manifold-only, align-classify-only, no-manifold, no-ensemble, fixed-mu-<x>, pca-instead-of-tca or ensemble-<method>)"
                    )));
                }
            }
        })
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

/// Effective configuration, stages and consensus of a variant. A `None`
/// consensus keeps the final iteration.
pub fn apply_variant(base: &PipelineConfig, variant: Variant) -> (PipelineConfig, Stages, Option<EnsembleMethod>) {
    let mut cfg = base.clone();
    let mut stages = Stages::default();
    let mut method = Some(base.ensemble);
    match variant {
        Variant::Full => {}
        Variant::ManifoldOnly => stages.learner = false,
        Variant::AlignClassifyOnly => {
            stages.manifold = false;
            method = None;
        }
        Variant::NoManifold => stages.manifold = false,
        Variant::NoEnsemble => method = None,
        Variant::FixedMu(mu) => cfg.mu = Some(mu),
        Variant::PcaInsteadOfTca => cfg.reduction = crate::manifold::Reduction::Pca,
        Variant::Ensemble(m) => {
            cfg.ensemble = m;
            method = Some(m);
        }
    }
    (cfg, stages, method)
}

/// Predictions and traces of one domain pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub predictions: Vec<usize>,
    /// Soft scores behind the AUROC, `m × C`.
    pub scores: Matrix,
    pub truth: Option<Vec<usize>>,
    pub metrics: Option<Metrics>,
    pub confusion: Option<ConfusionMatrix>,
    pub mu_trace: Vec<f64>,
    pub churn_trace: Vec<f64>,
    pub residuals: Vec<f64>,
    pub similarity: Option<Matrix>,
    pub manifold: Option<ManifoldModel>,
}

pub fn evaluate_pair(pair: &DomainPair, base: &PipelineConfig, variant: Variant) -> Result<PairOutcome> {
    let (cfg, stages, method) = apply_variant(base, variant);
    let run = run_stages(pair, &cfg, stages)?;
    let c = pair.class_count();
    let mut similarity = None;
    let (predictions, scores) = match (run.iterations.is_empty(), method) {
        (true, _) | (false, None) => (run.final_labels().to_vec(), run.final_scores().clone()),
        (false, Some(method)) => {
            let labelings = run.iterations.iter().map(|it| it.labels.clone()).collect();
            let soft: Vec<Matrix> = run.iterations.iter().map(|it| it.scores.clone()).collect();
            let scores = if method == EnsembleMethod::Average {
                let mut sum = Mat::<f64>::zeros(soft[0].nrows(), c);
                for s in &soft {
                    sum = &sum + s;
                }
                faer::Scale(1.0 / soft.len() as f64) * &sum
            } else {
                run.final_scores().clone()
            };
            let ens = BaseEnsemble::new(labelings, Some(soft), c)?;
            let result = consensus(&ens, method, cfg.decay)?;
            similarity = result.similarity;
            (result.labels, scores)
        }
    };
    let truth = pair.target_labels();
    let (metrics, confusion) = match &truth {
        Some(t) => {
            let cm = ConfusionMatrix::from_labels(t, &predictions, c)?;
            (Some(metrics_from_confusion(&cm, Some((scores.as_ref(), t)))), Some(cm))
        }
        None => (None, None),
    };
    Ok(PairOutcome {
        predictions,
        scores,
        truth,
        metrics,
        confusion,
        mu_trace: run.mu_trace(),
        churn_trace: run.iterations.iter().map(|it| it.churn).collect(),
        residuals: run.iterations.iter().map(|it| it.relative_residual).collect(),
        similarity,
        manifold: run.manifold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub index: usize,
    pub source_subjects: Vec<i64>,
    pub target_subjects: Vec<i64>,
    pub session: Option<i64>,
    /// `None` on success.
    pub error: Option<String>,
    pub metrics: Option<Metrics>,
    pub confusion: Option<ConfusionMatrix>,
    pub mu_trace: Vec<f64>,
    pub churn_trace: Vec<f64>,
    pub residuals: Vec<f64>,
    pub seconds: f64,
    #[serde(skip)]
    pub predictions: Vec<PredictionRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRow {
    /// Row of the target sample in the evaluated dataset file.
    pub row: usize,
    pub sample: usize,
    pub subject: i64,
    pub session: i64,
    pub truth: Option<usize>,
    pub predicted: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(MeanStd { mean, std: var.sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: Variant,
    pub protocol: String,
    pub config: PipelineConfig,
    pub folds: Vec<FoldReport>,
    pub completed: usize,
    pub failed: usize,
    /// Some fold failed; aggregates cover the rest.
    pub partial: bool,
    /// Aggregates over successful folds, keyed by metric name.
    pub summary: BTreeMap<String, MeanStd>,
    pub total_seconds: f64,
}

impl RunReport {
    pub fn summary_of(&self, metric: &str) -> Option<MeanStd> {
        self.summary.get(metric).copied()
    }

    fn assemble(variant: Variant, protocol: String, config: PipelineConfig, folds: Vec<FoldReport>, total: f64) -> Self {
        let failed = folds.iter().filter(|f| f.error.is_some()).count();
        let summary = Metrics::NAMES
            .iter()
            .filter_map(|&name| {
                let vals: Vec<f64> = folds.iter().filter_map(|f| f.metrics.as_ref()?.get(name)).collect();
                mean_std(&vals).map(|ms| (name.to_string(), ms))
            })
            .collect();
        Self {
            variant,
            protocol,
            config,
            completed: folds.len() - failed,
            failed,
            partial: failed > 0,
            folds,
            summary,
            total_seconds: total,
        }
    }
}

/// Where a fold's samples come from.
struct FoldMeta {
    index: usize,
    /// Dataset rows of the target samples.
    rows: Vec<usize>,
    source_subjects: Vec<i64>,
    target_subjects: Vec<i64>,
    session: Option<i64>,
}

fn fold_report(
    pair: Result<DomainPair>,
    cfg: &PipelineConfig,
    variant: Variant,
    meta: FoldMeta,
) -> (FoldReport, Option<PairOutcome>) {
    let start = Instant::now();
    let FoldMeta {
        index,
        rows,
        source_subjects,
        target_subjects,
        session,
    } = meta;
    let mut report = FoldReport {
        index,
        source_subjects,
        target_subjects,
        session,
        error: None,
        metrics: None,
        confusion: None,
        mu_trace: Vec::new(),
        churn_trace: Vec::new(),
        residuals: Vec::new(),
        seconds: 0.0,
        predictions: Vec::new(),
    };
    let outcome = pair.and_then(|pair| evaluate_pair(&pair, cfg, variant).map(|o| (pair, o)));
    let kept = match outcome {
        Ok((pair, o)) => {
            report.predictions = o
                .predictions
                .iter()
                .enumerate()
                .map(|(i, &p)| PredictionRow {
                    row: rows[i],
                    sample: i,
                    subject: pair.target.subjects()[i],
                    session: pair.target.sessions()[i],
                    truth: pair.target.labels()[i],
                    predicted: p,
                })
                .collect();
            report.metrics = o.metrics.clone();
            report.confusion = o.confusion.clone();
            report.mu_trace = o.mu_trace.clone();
            report.churn_trace = o.churn_trace.clone();
            report.residuals = o.residuals.clone();
            Some(o)
        }
        Err(e) => {
            log::warn!("fold {index} failed: {e}");
            report.error = Some(e.to_string());
            None
        }
    };
    report.seconds = start.elapsed().as_secs_f64();
    (report, kept)
}

/// Map `f` over `0..count` on up to `jobs` threads; results keep index order.
fn parallel_map<T: Send>(count: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let jobs = jobs.clamp(1, count.max(1));
    if jobs == 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let out = f(i);
                slots.lock().expect("no poisoned workers")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|o| o.expect("every index processed"))
        .collect()
}

/// Run one variant over every fold. Each fold gets its own seed derived
/// from the configured seed and the fold index, so variants share seeds.
pub fn run_protocol(
    dataset: &FeatureDataset,
    plan: &SplitPlan,
    cfg: &PipelineConfig,
    variant: Variant,
    jobs: usize,
) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let folds = parallel_map(plan.folds.len(), jobs, |i| {
        let fold = &plan.folds[i];
        let fold_cfg = PipelineConfig {
            seed: rng::derive_indexed(cfg.seed, "fold", fold.index as u64),
            ..cfg.clone()
        };
        fold_report(
            fold.materialize(dataset),
            &fold_cfg,
            variant,
            FoldMeta {
                index: fold.index,
                rows: fold.target_rows(dataset),
                source_subjects: fold.source_subjects.clone(),
                target_subjects: fold.target_subjects.clone(),
                session: fold.session,
            },
        )
        .0
    });
    Ok(RunReport::assemble(
        variant,
        plan.protocol.to_string(),
        cfg.clone(),
        folds,
        start.elapsed().as_secs_f64(),
    ))
}

/// A single source/target pair reported as one fold, plus the full outcome
/// when the pair succeeded.
pub fn run_pair(pair: &DomainPair, cfg: &PipelineConfig, variant: Variant) -> Result<(RunReport, Option<PairOutcome>)> {
    cfg.validate()?;
    let start = Instant::now();
    let (fold, outcome) = fold_report(
        Ok(pair.clone()),
        cfg,
        variant,
        FoldMeta {
            index: 0,
            rows: (0..pair.target.num_samples()).collect(),
            source_subjects: pair.source.subject_ids(),
            target_subjects: pair.target.subject_ids(),
            session: None,
        },
    );
    let report = RunReport::assemble(
        variant,
        "pair".into(),
        cfg.clone(),
        vec![fold],
        start.elapsed().as_secs_f64(),
    );
    Ok((report, outcome))
}

/// One report per variant over shared folds and seeds.
pub fn ablation_matrix(
    dataset: &FeatureDataset,
    plan: &SplitPlan,
    cfg: &PipelineConfig,
    variants: &[Variant],
    jobs: usize,
) -> Result<Vec<RunReport>> {
    if variants.is_empty() {
        return Err(Error::InvalidArgument("no variants requested".into()));
    }
    variants.iter().map(|&v| run_protocol(dataset, plan, cfg, v, jobs)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_loso_splits, synth_subjects, Protocol, SynthConfig};

    fn dataset() -> FeatureDataset {
        synth_subjects(
            &SynthConfig {
                seed: 2,
                n_per_class: 10,
                ..Default::default()
            },
            4,
            1,
        )
        .unwrap()
    }

    fn cfg() -> PipelineConfig {
        PipelineConfig {
            d_tca: 8,
            iterations: 3,
            ..Default::default()
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for s in [
            "full",
            "manifold-only",
            "align-classify-only",
            "no-manifold",
            "no-ensemble",
            "fixed-mu-0",
            "fixed-mu-0.5",
            "fixed-mu-1",
            "pca-instead-of-tca",
            "ensemble-last",
            "ensemble-avg",
            "ensemble-vote",
            "ensemble-linkclue-cts-sl",
        ] {
            assert_eq!(s.parse::<Variant>().unwrap().to_string(), s);
        }
        assert!("no-thing".parse::<Variant>().is_err());
        assert!("fixed-mu-2".parse::<Variant>().is_err());
    }

    #[test]
    fn loso_gives_one_entry_per_subject() {
        let ds = dataset();
        let plan = make_loso_splits(&ds, Protocol::CrossSession).unwrap();
        let report = run_protocol(&ds, &plan, &cfg(), Variant::Full, 1).unwrap();
        assert_eq!(report.folds.len(), 4);
        assert_eq!(report.completed, 4);
        assert!(!report.partial);
        assert!(report.summary_of("accuracy").is_some());
    }

    #[test]
    fn parallel_folds_match_sequential() {
        let ds = dataset();
        let plan = make_loso_splits(&ds, Protocol::CrossSession).unwrap();
        let a = run_protocol(&ds, &plan, &cfg(), Variant::Full, 1).unwrap();
        let b = run_protocol(&ds, &plan, &cfg(), Variant::Full, 3).unwrap();
        for (fa, fb) in a.folds.iter().zip(&b.folds) {
            assert_eq!(fa.metrics, fb.metrics);
            assert_eq!(fa.predictions, fb.predictions);
            assert_eq!(fa.mu_trace, fb.mu_trace);
        }
    }

    #[test]
    fn fixed_mu_variant_traces_are_constant() {
        let ds = dataset();
        let plan = make_loso_splits(&ds, Protocol::CrossSession).unwrap();
        let report = run_protocol(&ds, &plan, &cfg(), Variant::FixedMu(0.5), 1).unwrap();
        for f in &report.folds {
            assert_eq!(f.mu_trace, vec![0.5; 3]);
        }
        assert_eq!(report.variant.to_string(), "fixed-mu-0.5");
    }

    #[test]
    fn failing_folds_are_recorded() {
        let ds = dataset();
        let plan = make_loso_splits(&ds, Protocol::CrossSession).unwrap();
        // p larger than any fold's sample count makes every graph build fail.
        let bad = PipelineConfig { p: 10_000, ..cfg() };
        let report = run_protocol(&ds, &plan, &bad, Variant::Full, 2).unwrap();
        assert_eq!(report.failed, 4);
        assert!(report.partial);
        assert!(report.summary.is_empty());
    }

    #[test]
    fn manifold_only_uses_weak_labels() {
        let ds = dataset();
        let plan = make_loso_splits(&ds, Protocol::CrossSession).unwrap();
        let pair = plan.folds[0].materialize(&ds).unwrap();
        let out = evaluate_pair(&pair, &cfg(), Variant::ManifoldOnly).unwrap();
        assert!(out.mu_trace.is_empty());
        let run = run_stages(
            &pair,
            &cfg(),
            Stages {
                manifold: true,
                learner: false,
            },
        )
        .unwrap();
        assert_eq!(out.predictions, run.weak_labels);
    }

    #[test]
    fn ablation_matrix_has_a_row_per_variant() {
        let ds = dataset();
        let plan = make_loso_splits(&ds, Protocol::CrossSession).unwrap();
        let reports = ablation_matrix(&ds, &plan, &cfg(), &[Variant::NoEnsemble], 1).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].variant, Variant::NoEnsemble);
    }

    #[test]
    fn population_std() {
        let ms = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!((ms.mean, ms.std), (2.0, 1.0));
        assert!(mean_std(&[]).is_none());
    }
}
