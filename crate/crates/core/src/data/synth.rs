//! Desk-scale domain-shift benchmarks.
//!
//! Class `c` of `C` is an isotropic Gaussian blob centred at radius
//! [`SynthConfig::radius`] and angle `2πc/C` in the plane of the first two
//! features; the remaining features carry class-specific offsets of smaller
//! magnitude plus noise. The target domain is the same mixture rotated by
//! `rotation` in that plane and translated by `shift` along the first axis.

use std::f64::consts::PI;

use faer::Mat;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DomainPair, FeatureDataset};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_per_class: usize,
    pub class_count: usize,
    pub shift: f64,
    /// Radians.
    pub rotation: f64,
    pub noise: f64,
    pub dim: usize,
    pub radius: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_per_class: 200,
            class_count: 3,
            shift: 3.0,
            rotation: 0.4,
            noise: 0.8,
            dim: 16,
            radius: 3.0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_per_class < 2 {
            return Err(Error::InvalidArgument("n_per_class must be >= 2".into()));
        }
        if self.class_count < 2 {
            return Err(Error::InvalidArgument("class_count must be >= 2".into()));
        }
        if !(self.noise > 0.0) {
            return Err(Error::InvalidArgument("noise must be > 0".into()));
        }
        if self.dim < 2 {
            return Err(Error::InvalidArgument("dim must be >= 2".into()));
        }
        if !self.shift.is_finite() || !self.rotation.is_finite() || !self.radius.is_finite() {
            return Err(Error::InvalidArgument("shift, rotation and radius must be finite".into()));
        }
        Ok(())
    }
}

fn class_means(cfg: &SynthConfig, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let off = Normal::new(0.0, 0.5).expect("valid normal");
    (0..cfg.class_count)
        .map(|c| {
            let a = 2.0 * PI * c as f64 / cfg.class_count as f64;
            let mut m = vec![0.0; cfg.dim];
            m[0] = cfg.radius * a.cos();
            m[1] = cfg.radius * a.sin();
            for v in m.iter_mut().skip(2) {
                *v = off.sample(rng);
            }
            m
        })
        .collect()
}

/// Draw `n_per_class` samples per class and apply `(rotation, shift)`.
fn draw_domain(
    cfg: &SynthConfig,
    means: &[Vec<f64>],
    rotation: f64,
    shift: f64,
    rng: &mut rng::Rng,
) -> (faer::Mat<f64>, Vec<usize>) {
    let noise = Normal::new(0.0, cfg.noise).expect("noise > 0");
    let n = cfg.n_per_class * cfg.class_count;
    let mut x = Mat::<f64>::zeros(n, cfg.dim);
    let mut labels = Vec::with_capacity(n);
    let (s, c) = rotation.sin_cos();
    for class in 0..cfg.class_count {
        for k in 0..cfg.n_per_class {
            let i = class * cfg.n_per_class + k;
            let mut row: Vec<f64> = means[class].iter().map(|m| m + noise.sample(rng)).collect();
            let (a, b) = (row[0], row[1]);
            row[0] = c * a - s * b + shift;
            row[1] = s * a + c * b;
            for (j, v) in row.into_iter().enumerate() {
                x[(i, j)] = v;
            }
            labels.push(class);
        }
    }
    (x, labels)
}

/// Source and target domains differing by a rotation and a translation.
/// Pure function of the configuration.
pub fn synth_domain_shift(cfg: &SynthConfig) -> Result<DomainPair> {
    cfg.validate()?;
    let mut rng = rng::rng(rng::derive(cfg.seed, "synth"));
    let means = class_means(cfg, &mut rng);
    let (xs, ys) = draw_domain(cfg, &means, 0.0, 0.0, &mut rng);
    let (xt, yt) = draw_domain(cfg, &means, cfg.rotation, cfg.shift, &mut rng);
    let n = ys.len();
    let source = FeatureDataset::new(xs, ys.into_iter().map(Some).collect(), vec![0; n], vec![0; n], cfg.class_count)?;
    let target = FeatureDataset::new(xt, yt.into_iter().map(Some).collect(), vec![1; n], vec![0; n], cfg.class_count)?;
    DomainPair::new(source, target)
}

/// Multi-subject dataset: every subject/session gets its own random rotation
/// in `[-rotation, rotation]` and shift in `[-shift, shift]`. Labels are kept
/// on every sample so leave-subject-out evaluation can score the targets.
pub fn synth_subjects(cfg: &SynthConfig, subjects: usize, sessions: usize) -> Result<FeatureDataset> {
    cfg.validate()?;
    if subjects == 0 || sessions == 0 {
        return Err(Error::InvalidArgument("need at least one subject and one session".into()));
    }
    let mut rng = rng::rng(rng::derive(cfg.seed, "synth-subjects"));
    let means = class_means(cfg, &mut rng);
    let per = cfg.n_per_class * cfg.class_count;
    let total = per * subjects * sessions;
    let mut x = Mat::<f64>::zeros(total, cfg.dim);
    let mut labels = Vec::with_capacity(total);
    let mut subj = Vec::with_capacity(total);
    let mut sess = Vec::with_capacity(total);
    let mut row = 0;
    for s in 0..subjects {
        for t in 0..sessions {
            let rot = cfg.rotation * (2.0 * rng.random::<f64>() - 1.0);
            let shift = cfg.shift * (2.0 * rng.random::<f64>() - 1.0);
            let (block, ys) = draw_domain(cfg, &means, rot, shift, &mut rng);
            for i in 0..per {
                for j in 0..cfg.dim {
                    x[(row + i, j)] = block[(i, j)];
                }
            }
            labels.extend(ys.into_iter().map(Some));
            subj.extend(std::iter::repeat(s as i64 + 1).take(per));
            sess.extend(std::iter::repeat(t as i64 + 1).take(per));
            row += per;
        }
    }
    FeatureDataset::new(x, labels, subj, sess, cfg.class_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let cfg = SynthConfig { seed: 7, ..Default::default() };
        assert_eq!(synth_domain_shift(&cfg).unwrap(), synth_domain_shift(&cfg).unwrap());
        let other = SynthConfig { seed: 8, ..Default::default() };
        assert_ne!(synth_domain_shift(&cfg).unwrap(), synth_domain_shift(&other).unwrap());
    }

    #[test]
    fn zero_shift_domains_share_moments() {
        let cfg = SynthConfig {
            shift: 0.0,
            rotation: 0.0,
            n_per_class: 2000,
            ..Default::default()
        };
        let pair = synth_domain_shift(&cfg).unwrap();
        for j in 0..cfg.dim {
            let ms = crate::linalg::column_means(pair.source.features())[j];
            let mt = crate::linalg::column_means(pair.target.features())[j];
            assert!((ms - mt).abs() < 0.06, "feature {j}: {ms} vs {mt}");
        }
    }

    #[test]
    fn preconditions() {
        for bad in [
            SynthConfig { n_per_class: 1, ..Default::default() },
            SynthConfig { class_count: 1, ..Default::default() },
            SynthConfig { noise: 0.0, ..Default::default() },
        ] {
            assert!(synth_domain_shift(&bad).is_err());
        }
    }

    #[test]
    fn subjects_layout() {
        let cfg = SynthConfig { n_per_class: 5, ..Default::default() };
        let d = synth_subjects(&cfg, 4, 2).unwrap();
        assert_eq!(d.num_samples(), 4 * 2 * 15);
        assert_eq!(d.subject_ids(), vec![1, 2, 3, 4]);
        assert_eq!(d.session_ids(), vec![1, 2]);
    }
}
