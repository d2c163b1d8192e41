//! Dynamic distribution alignment: A-distance estimates, the adaptive factor
//! μ, and the MMD matrices `M0`, `M_c` and `M = (1-μ)M0 + μ Σ_c M_c`.
//!
//! Every MMD matrix here is a weighted sum of outer products `e eᵀ` where
//! `e` holds `1/n` on one sample group and `-1/m` on another, so `M` is kept
//! in that factored form and applied in `O(N·C)` per column.

use faer::{Mat, MatRef};
use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::linalg::{select_rows, Matrix};
use crate::rng;

/// Mean-difference vector: `1/|a|` on `a`, `-1/|b|` on `b`, zero elsewhere.
fn mean_gap_vector(len: usize, a: &[usize], b: &[usize]) -> Vec<f64> {
    let mut e = vec![0.0; len];
    for &i in a {
        e[i] = 1.0 / a.len() as f64;
    }
    for &j in b {
        e[j] = -1.0 / b.len() as f64;
    }
    e
}

fn outer(e: &[f64]) -> Matrix {
    Mat::from_fn(e.len(), e.len(), |i, j| e[i] * e[j])
}

/// Marginal MMD matrix for `n` source rows followed by `m` target rows.
pub fn build_m0(n: usize, m: usize) -> Matrix {
    let src: Vec<usize> = (0..n).collect();
    let tgt: Vec<usize> = (n..n + m).collect();
    outer(&mean_gap_vector(n + m, &src, &tgt))
}

fn class_members(labels: &[usize], class: usize, offset: usize) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|&(_, &l)| l == class)
        .map(|(i, _)| i + offset)
        .collect()
}

/// Conditional MMD matrix of one class; all zeros when the class is missing
/// from either domain.
pub fn build_mc(source_labels: &[usize], target_pseudo: &[usize], class: usize) -> Matrix {
    let n = source_labels.len();
    let len = n + target_pseudo.len();
    let a = class_members(source_labels, class, 0);
    let b = class_members(target_pseudo, class, n);
    if a.is_empty() || b.is_empty() {
        return Mat::zeros(len, len);
    }
    outer(&mean_gap_vector(len, &a, &b))
}

/// `Σ_k w_k e_k e_kᵀ`, a symmetric PSD matrix of rank at most the term count.
#[derive(Debug, Clone, PartialEq)]
pub struct MmdOperator {
    len: usize,
    terms: Vec<(f64, Vec<f64>)>,
}

impl MmdOperator {
    /// `(1-μ)·M0 + μ·Σ_c M_c` with empty classes left out.
    pub fn new(source_labels: &[usize], target_pseudo: &[usize], class_count: usize, mu: f64) -> Self {
        let n = source_labels.len();
        let m = target_pseudo.len();
        let len = n + m;
        let src: Vec<usize> = (0..n).collect();
        let tgt: Vec<usize> = (n..len).collect();
        let mut terms = vec![(1.0 - mu, mean_gap_vector(len, &src, &tgt))];
        for c in 0..class_count {
            let a = class_members(source_labels, c, 0);
            let b = class_members(target_pseudo, c, n);
            if !a.is_empty() && !b.is_empty() {
                terms.push((mu, mean_gap_vector(len, &a, &b)));
            }
        }
        Self { len, terms }
    }

    pub fn zero(len: usize) -> Self {
        Self { len, terms: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Mat::zeros(self.len, self.len);
        for (w, e) in &self.terms {
            for j in 0..self.len {
                if e[j] == 0.0 {
                    continue;
                }
                for i in 0..self.len {
                    out[(i, j)] += w * e[i] * e[j];
                }
            }
        }
        out
    }

    pub fn mul_mat(&self, rhs: MatRef<'_, f64>) -> Matrix {
        let mut out = Mat::zeros(self.len, rhs.ncols());
        for (w, e) in &self.terms {
            for c in 0..rhs.ncols() {
                let col = rhs.col(c);
                let dot: f64 = e.iter().enumerate().map(|(i, v)| v * col[i]).sum();
                let s = w * dot;
                if s == 0.0 {
                    continue;
                }
                for (i, v) in e.iter().enumerate() {
                    out[(i, c)] += s * v;
                }
            }
        }
        out
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(w, e)| {
                let d: f64 = e.iter().zip(v).map(|(a, b)| a * b).sum();
                w * d * d
            })
            .sum()
    }
}

/// Settings of the linear domain classifier behind the A-distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ADistanceConfig {
    pub iterations: usize,
    pub step: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ADistanceConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            step: 0.1,
            l2: 1e-3,
            seed: 0,
        }
    }
}

/// Linear hinge-loss classifier trained by full-batch subgradient descent on
/// standardized features. Positive class = `b`. Both classes get equal total
/// weight in the loss.
struct HingeModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    w: Vec<f64>,
    bias: f64,
}

impl HingeModel {
    fn fit(a: MatRef<'_, f64>, b: MatRef<'_, f64>, cfg: &ADistanceConfig) -> Self {
        let d = a.ncols();
        let (na, nb) = (a.nrows(), b.nrows());
        let total = (na + nb) as f64;
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for j in 0..d {
            let s: f64 = (0..na).map(|i| a[(i, j)]).sum::<f64>() + (0..nb).map(|i| b[(i, j)]).sum::<f64>();
            mean[j] = s / total;
            let v: f64 = (0..na).map(|i| (a[(i, j)] - mean[j]).powi(2)).sum::<f64>()
                + (0..nb).map(|i| (b[(i, j)] - mean[j]).powi(2)).sum::<f64>();
            let sd = (v / total).sqrt();
            scale[j] = if sd > 1e-12 { 1.0 / sd } else { 0.0 };
        }
        let std_row = |m: MatRef<'_, f64>, i: usize| -> Vec<f64> { (0..d).map(|j| (m[(i, j)] - mean[j]) * scale[j]).collect() };
        let rows: Vec<(Vec<f64>, f64, f64)> = (0..na)
            .map(|i| (std_row(a, i), -1.0, 0.5 / na as f64))
            .chain((0..nb).map(|i| (std_row(b, i), 1.0, 0.5 / nb as f64)))
            .collect();
        let mut w = vec![0.0; d];
        let mut bias = 0.0;
        let mut gw = vec![0.0; d];
        for t in 1..=cfg.iterations {
            gw.iter_mut().zip(&w).for_each(|(g, wi)| *g = cfg.l2 * wi);
            let mut gb = 0.0;
            for (x, y, weight) in &rows {
                let margin = y * (x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + bias);
                if margin < 1.0 {
                    let s = -y * weight;
                    gw.iter_mut().zip(x).for_each(|(g, xi)| *g += s * xi);
                    gb += s;
                }
            }
            let eta = cfg.step / (t as f64).sqrt();
            w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= eta * g);
            bias -= eta * gb;
        }
        Self { mean, scale, w, bias }
    }

    fn predicts_b(&self, x: MatRef<'_, f64>, i: usize) -> bool {
        let s: f64 = (0..x.ncols())
            .map(|j| (x[(i, j)] - self.mean[j]) * self.scale[j] * self.w[j])
            .sum::<f64>()
            + self.bias;
        s > 0.0
    }
}

/// Split `0..n` into two halves after a seeded shuffle.
fn halves(n: usize, rng: &mut rng::Rng) -> [Vec<usize>; 2] {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut out = [Vec::new(), Vec::new()];
    for (k, i) in idx.into_iter().enumerate() {
        out[k % 2].push(i);
    }
    out[0].sort_unstable();
    out[1].sort_unstable();
    out
}

/// Proxy A-distance `clamp(2(1 - 2ε), 0, 2)` between two sample sets, where ε
/// is the held-out balanced error of a linear domain classifier averaged over
/// a stratified 2-fold split.
pub fn a_distance(a: MatRef<'_, f64>, b: MatRef<'_, f64>, cfg: &ADistanceConfig) -> f64 {
    if a.nrows() < 2 || b.nrows() < 2 {
        warn!(
            "A-distance needs at least 2 samples per set (got {} and {}); returning 0",
            a.nrows(),
            b.nrows()
        );
        return 0.0;
    }
    let mut r = rng::rng(rng::derive(cfg.seed, "a-distance"));
    let fa = halves(a.nrows(), &mut r);
    let fb = halves(b.nrows(), &mut r);
    let mut err = 0.0;
    for k in 0..2 {
        let (tr, te) = (k, 1 - k);
        let model = HingeModel::fit(
            select_rows(a, &fa[tr]).as_ref(),
            select_rows(b, &fb[tr]).as_ref(),
            cfg,
        );
        let wrong_a = fa[te].iter().filter(|&&i| model.predicts_b(a, i)).count();
        let wrong_b = fb[te].iter().filter(|&&i| !model.predicts_b(b, i)).count();
        err += 0.5 * (wrong_a as f64 / fa[te].len() as f64 + wrong_b as f64 / fb[te].len() as f64);
    }
    let eps = err / 2.0;
    (2.0 * (1.0 - 2.0 * eps)).clamp(0.0, 2.0)
}

/// Outcome of one μ estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub mu: f64,
    pub d_marginal: f64,
    /// Per-class A-distance; `None` where the class is empty in either domain.
    pub d_conditional: Vec<Option<f64>>,
}

/// `μ = 1 - d_A / (d_A + Σ_c d_c)`, with 0.5 when every distance vanishes.
pub fn mu_from_distances(d_marginal: f64, d_conditional: &[Option<f64>]) -> f64 {
    let sum_c: f64 = d_conditional.iter().flatten().sum();
    let denom = d_marginal + sum_c;
    if denom <= 0.0 {
        0.5
    } else {
        (1.0 - d_marginal / denom).clamp(0.0, 1.0)
    }
}

pub fn estimate_mu(
    source: MatRef<'_, f64>,
    source_labels: &[usize],
    target: MatRef<'_, f64>,
    target_pseudo: &[usize],
    class_count: usize,
    cfg: &ADistanceConfig,
) -> MuEstimate {
    let d_marginal = a_distance(source, target, cfg);
    let d_conditional: Vec<Option<f64>> = (0..class_count)
        .map(|c| {
            let a = class_members(source_labels, c, 0);
            let b = class_members(target_pseudo, c, 0);
            if a.is_empty() || b.is_empty() {
                return None;
            }
            let class_cfg = ADistanceConfig {
                seed: rng::derive_indexed(cfg.seed, "class", c as u64),
                ..*cfg
            };
            Some(a_distance(
                select_rows(source, &a).as_ref(),
                select_rows(target, &b).as_ref(),
                &class_cfg,
            ))
        })
        .collect();
    MuEstimate {
        mu: mu_from_distances(d_marginal, &d_conditional),
        d_marginal,
        d_conditional,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn mean_of(v: &[f64], idx: impl Iterator<Item = usize>) -> Option<f64> {
        let (s, c) = idx.fold((0.0, 0usize), |(s, c), i| (s + v[i], c + 1));
        (c > 0).then(|| s / c as f64)
    }

    fn quad(m: &Matrix, v: &[f64]) -> f64 {
        let n = v.len();
        (0..n).map(|i| (0..n).map(|j| v[i] * m[(i, j)] * v[j]).sum::<f64>()).sum()
    }

    #[test]
    fn m0_minimal_case() {
        let m = build_m0(1, 1);
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(0, 1)], -1.0);
        assert_eq!(m[(1, 0)], -1.0);
        assert_eq!(m[(1, 1)], 1.0);
    }

    #[test]
    fn m0_rows_sum_to_zero() {
        let m = build_m0(2, 3);
        for i in 0..5 {
            let s: f64 = (0..5).map(|j| m[(i, j)]).sum();
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn mc_block_values() {
        let m = build_mc(&[0, 0, 1], &[0, 1], 0);
        assert_eq!(m[(0, 1)], 0.25);
        assert_eq!(m[(3, 3)], 1.0);
        assert_eq!(m[(0, 3)], -0.5);
        assert_eq!(m[(2, 2)], 0.0);
        let absent = build_mc(&[0, 1], &[1, 1], 0);
        assert_eq!(absent.norm_l2(), 0.0);
    }

    #[test]
    fn operator_matches_dense_assembly() {
        let ys = [0, 1, 2, 1, 0];
        let yt = [2, 2, 0, 1];
        let mu = 0.3;
        let op = MmdOperator::new(&ys, &yt, 3, mu);
        let mut dense = build_m0(5, 4);
        for j in 0..9 {
            for i in 0..9 {
                dense[(i, j)] *= 1.0 - mu;
            }
        }
        for c in 0..3 {
            let mc = build_mc(&ys, &yt, c);
            dense = &dense + &(&mc * faer::Scale(mu));
        }
        assert!((&op.to_dense() - &dense).norm_l2() < 1e-14);
        let rhs = Mat::from_fn(9, 2, |i, j| (i as f64 - 3.0) * (j as f64 + 1.0));
        assert!((&op.mul_mat(rhs.as_ref()) - &(&dense * &rhs)).norm_l2() < 1e-12);
    }

    #[test]
    fn operator_is_psd() {
        let op = MmdOperator::new(&[0, 1, 1, 0, 2], &[1, 0, 0], 3, 0.6);
        let (values, _) = crate::linalg::sym_eigen(op.to_dense().as_ref()).unwrap();
        assert!(values[0] >= -1e-10);
    }

    #[test]
    fn a_distance_of_identical_sets_is_small() {
        let mut r = rng::rng(5);
        let a = Mat::from_fn(200, 5, |_, _| crate::rng::std_normal(&mut r));
        let d = a_distance(a.as_ref(), a.as_ref(), &ADistanceConfig::default());
        assert!(d <= 0.15, "{d}");
    }

    #[test]
    fn a_distance_of_far_sets_is_two() {
        let mut r = rng::rng(6);
        let a = Mat::from_fn(200, 5, |_, _| crate::rng::std_normal(&mut r));
        let b = Mat::from_fn(200, 5, |_, _| 100.0 + crate::rng::std_normal(&mut r));
        let d = a_distance(a.as_ref(), b.as_ref(), &ADistanceConfig::default());
        assert!((d - 2.0).abs() <= 0.1, "{d}");
    }

    #[test]
    fn tiny_sets_give_zero() {
        let a = Mat::from_fn(1, 2, |_, _| 0.0);
        let b = Mat::from_fn(5, 2, |i, _| i as f64);
        assert_eq!(a_distance(a.as_ref(), b.as_ref(), &ADistanceConfig::default()), 0.0);
    }

    #[test]
    fn mu_formula_cases() {
        assert_eq!(mu_from_distances(0.0, &[Some(0.5), None]), 1.0);
        assert_eq!(mu_from_distances(2.0, &[Some(2.0), Some(2.0), Some(2.0)]), 0.75);
        assert_eq!(mu_from_distances(0.0, &[Some(0.0), None]), 0.5);
    }

    #[test]
    fn swapped_roles_give_similar_mu() {
        let mut r = rng::rng(8);
        let a = Mat::from_fn(120, 3, |i, _| (i % 3) as f64 + crate::rng::std_normal(&mut r));
        let b = Mat::from_fn(120, 3, |i, j| (i % 3) as f64 + 0.8 * j as f64 + crate::rng::std_normal(&mut r));
        let la: Vec<usize> = (0..120).map(|i| i % 3).collect();
        let cfg = ADistanceConfig::default();
        let ab = estimate_mu(a.as_ref(), &la, b.as_ref(), &la, 3, &cfg).mu;
        let ba = estimate_mu(b.as_ref(), &la, a.as_ref(), &la, 3, &cfg).mu;
        assert!((ab - ba).abs() < 0.15, "{ab} vs {ba}");
    }

    proptest! {
        #[test]
        fn quadratic_forms_are_mean_gaps(seed in any::<u64>(), n in 1usize..8, m in 1usize..8, mu in 0.0f64..=1.0) {
            let mut r = rng::rng(seed);
            let v: Vec<f64> = (0..n + m).map(|_| crate::rng::std_normal(&mut r)).collect();
            let ys: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
            let yt: Vec<usize> = (0..m).map(|_| r.random_range(0..3)).collect();
            let gap = |a: Option<f64>, b: Option<f64>| a.zip(b).map_or(0.0, |(a, b)| (a - b).powi(2));
            let marginal = gap(mean_of(&v, 0..n), mean_of(&v, n..n + m));
            prop_assert!((quad(&build_m0(n, m), &v) - marginal).abs() <= 1e-10);
            let mut conditional = 0.0;
            for c in 0..3 {
                let g = gap(
                    mean_of(&v, (0..n).filter(|&i| ys[i] == c)),
                    mean_of(&v, (0..m).filter(|&j| yt[j] == c).map(|j| j + n)),
                );
                prop_assert!((quad(&build_mc(&ys, &yt, c), &v) - g).abs() <= 1e-10);
                conditional += g;
            }
            let op = MmdOperator::new(&ys, &yt, 3, mu);
            prop_assert!((op.quad_form(&v) - ((1.0 - mu) * marginal + mu * conditional)).abs() <= 1e-10);
        }

        #[test]
        fn mu_stays_in_unit_interval(da in 0.0f64..=2.0, dc in proptest::collection::vec(proptest::option::of(0.0f64..=2.0), 0..6)) {
            let mu = mu_from_distances(da, &dc);
            prop_assert!((0.0..=1.0).contains(&mu));
        }
    }
}
