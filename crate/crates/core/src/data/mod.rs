//! Labeled feature datasets, file formats, split plans and synthetic benchmarks.

mod de;
mod io;
mod split;
mod synth;

pub use de::{band_variance, extract_de_features, Band, DEFAULT_BANDS, DE_VARIANCE_FLOOR};
pub use io::{load_dataset, save_dataset, save_dataset_with_echo, FileFormat};
pub use split::{make_loso_splits, Fold, Protocol, SplitPlan};
pub use synth::{synth_domain_shift, synth_subjects, SynthConfig};

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Samples on rows, one column per feature, with per-sample annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: Matrix,
    labels: Vec<Option<usize>>,
    subjects: Vec<i64>,
    sessions: Vec<i64>,
    class_count: usize,
    feature_names: Option<Vec<String>>,
}

impl FeatureDataset {
    pub fn new(
        features: Matrix,
        labels: Vec<Option<usize>>,
        subjects: Vec<i64>,
        sessions: Vec<i64>,
        class_count: usize,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 || features.ncols() == 0 {
            return Err(Error::InvalidData(format!(
                "dataset must have at least one sample and one feature (got {}x{})",
                n,
                features.ncols()
            )));
        }
        if class_count < 2 {
            return Err(Error::InvalidData(format!("class_count must be >= 2, got {class_count}")));
        }
        for (name, len) in [("labels", labels.len()), ("subjects", subjects.len()), ("sessions", sessions.len())] {
            if len != n {
                return Err(Error::DimensionMismatch(format!("{name} has {len} entries for {n} samples")));
            }
        }
        for j in 0..features.ncols() {
            for i in 0..n {
                if !features[(i, j)].is_finite() {
                    return Err(Error::InvalidData(format!(
                        "non-finite value {} at sample {i}, feature {j}",
                        features[(i, j)]
                    )));
                }
            }
        }
        if let Some((i, l)) = labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&l| l >= class_count).map(|l| (i, l)))
        {
            return Err(Error::InvalidData(format!(
                "label {l} at sample {i} is outside [0, {class_count})"
            )));
        }
        Ok(Self {
            features,
            labels,
            subjects,
            sessions,
            class_count,
            feature_names: None,
        })
    }

    /// Single-subject, single-session dataset with every sample labeled.
    pub fn from_labeled(features: Matrix, labels: &[usize], class_count: usize) -> Result<Self> {
        let n = features.nrows();
        Self::new(
            features,
            labels.iter().map(|&l| Some(l)).collect(),
            vec![0; n],
            vec![0; n],
            class_count,
        )
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_features() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature names for {} features",
                names.len(),
                self.num_features()
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn num_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> MatRef<'_, f64> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn subjects(&self) -> &[i64] {
        &self.subjects
    }

    pub fn sessions(&self) -> &[i64] {
        &self.sessions
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    /// Labels as plain indices; errors if any sample is unlabeled.
    pub fn hard_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::InvalidData(format!("sample {i} is unlabeled"))))
            .collect()
    }

    /// Sorted distinct subject ids.
    pub fn subject_ids(&self) -> Vec<i64> {
        let mut ids = self.subjects.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn session_ids(&self) -> Vec<i64> {
        let mut ids = self.sessions.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// New dataset holding the rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let features = Mat::from_fn(idx.len(), self.num_features(), |i, j| self.features[(idx[i], j)]);
        let mut out = Self::new(
            features,
            idx.iter().map(|&i| self.labels[i]).collect(),
            idx.iter().map(|&i| self.subjects[i]).collect(),
            idx.iter().map(|&i| self.sessions[i]).collect(),
            self.class_count,
        )?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    pub fn with_class_count(mut self, class_count: usize) -> Result<Self> {
        if class_count < self.class_count {
            let max = self.labels.iter().flatten().max().copied().unwrap_or(0);
            if max >= class_count {
                return Err(Error::InvalidData(format!(
                    "label {max} does not fit class_count {class_count}"
                )));
            }
        }
        if class_count < 2 {
            return Err(Error::InvalidData("class_count must be >= 2".into()));
        }
        self.class_count = class_count;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<Option<usize>>) -> Result<Self> {
        if labels.len() != self.num_samples() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} samples",
                labels.len(),
                self.num_samples()
            )));
        }
        if labels.iter().flatten().any(|&l| l >= self.class_count) {
            return Err(Error::InvalidData("label outside class range".into()));
        }
        self.labels = labels;
        Ok(self)
    }
}

/// Labeled source domain and target domain sharing one feature space.
/// Target labels, when present, are used for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: FeatureDataset,
    pub target: FeatureDataset,
}

impl DomainPair {
    pub fn new(source: FeatureDataset, target: FeatureDataset) -> Result<Self> {
        if source.num_features() != target.num_features() {
            return Err(Error::DimensionMismatch(format!(
                "source has {} features, target has {}",
                source.num_features(),
                target.num_features()
            )));
        }
        if !source.is_fully_labeled() {
            return Err(Error::InvalidData("source domain must be fully labeled".into()));
        }
        let classes = source.class_count().max(target.class_count());
        let source = source.with_class_count(classes)?;
        let target = target.with_class_count(classes)?;
        Ok(Self { source, target })
    }

    pub fn class_count(&self) -> usize {
        self.source.class_count()
    }

    pub fn num_features(&self) -> usize {
        self.source.num_features()
    }

    pub fn source_labels(&self) -> Vec<usize> {
        self.source.labels().iter().map(|l| l.expect("validated")).collect()
    }

    /// Target ground truth if every target sample carries a label.
    pub fn target_labels(&self) -> Option<Vec<usize>> {
        self.target.labels().iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FeatureDataset {
        let x = Mat::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        FeatureDataset::new(x, vec![Some(0), Some(1), None, Some(2)], vec![1, 1, 2, 2], vec![0; 4], 3).unwrap()
    }

    #[test]
    fn rejects_out_of_range_label() {
        let x = Mat::from_fn(2, 1, |i, _| i as f64);
        let err = FeatureDataset::new(x, vec![Some(0), Some(2)], vec![0, 0], vec![0, 0], 2).unwrap_err();
        assert!(err.to_string().contains("label 2"));
    }

    #[test]
    fn rejects_non_finite() {
        let mut x = Mat::from_fn(2, 2, |i, j| (i + j) as f64);
        x[(1, 0)] = f64::INFINITY;
        assert!(FeatureDataset::new(x, vec![None, None], vec![0, 0], vec![0, 0], 2).is_err());
    }

    #[test]
    fn select_preserves_annotations() {
        let d = tiny();
        let s = d.select(&[3, 0]).unwrap();
        assert_eq!(s.labels(), &[Some(2), Some(0)]);
        assert_eq!(s.subjects(), &[2, 1]);
        assert_eq!(s.features()[(0, 2)], 11.0);
    }

    #[test]
    fn domain_pair_requires_labeled_source() {
        let d = tiny();
        assert!(DomainPair::new(d.clone(), d).is_err());
    }
}
