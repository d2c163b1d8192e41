//! Weak initial classifiers returning per-class probability estimates.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sq_distances, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeakKind {
    Knn,
    Gnb,
    Dtree,
}

impl FromStr for WeakKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(WeakKind::Knn),
            "gnb" => Ok(WeakKind::Gnb),
            "dtree" => Ok(WeakKind::Dtree),
            other => Err(Error::InvalidArgument(format!(
                "unknown weak classifier `{other}` (expected knn, gnb or dtree)"
            ))),
        }
    }
}

impl fmt::Display for WeakKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeakKind::Knn => "knn",
            WeakKind::Gnb => "gnb",
            WeakKind::Dtree => "dtree",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakConfig {
    pub kind: WeakKind,
    pub knn_k: usize,
    pub max_depth: usize,
}

impl Default for WeakConfig {
    fn default() -> Self {
        Self {
            kind: WeakKind::Dtree,
            knn_k: 5,
            max_depth: 10,
        }
    }
}

/// Fit on `(xs, ys)` and return an `m × C` probability matrix for `xt`.
pub fn weak_fit_predict(
    cfg: &WeakConfig,
    xs: MatRef<'_, f64>,
    ys: &[usize],
    class_count: usize,
    xt: MatRef<'_, f64>,
) -> Result<Matrix> {
    if xs.nrows() == 0 || xs.nrows() != ys.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} source rows with {} labels",
            xs.nrows(),
            ys.len()
        )));
    }
    if xs.ncols() != xt.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "source has {} features, target has {}",
            xs.ncols(),
            xt.ncols()
        )));
    }
    if let Some(&bad) = ys.iter().find(|&&y| y >= class_count) {
        return Err(Error::InvalidData(format!("label {bad} outside [0, {class_count})")));
    }
    Ok(match cfg.kind {
        WeakKind::Knn => knn(xs, ys, class_count, xt, cfg.knn_k)?,
        WeakKind::Gnb => GaussianNb::fit(xs, ys, class_count).predict_proba(xt),
        WeakKind::Dtree => DecisionTree::fit(xs, ys, class_count, cfg.max_depth).predict_proba(xt),
    })
}

/// Row-wise argmax with ties to the lowest column.
pub fn argmax_rows(scores: MatRef<'_, f64>) -> Vec<usize> {
    (0..scores.nrows())
        .map(|i| {
            let mut best = 0;
            for c in 1..scores.ncols() {
                if scores[(i, c)] > scores[(i, best)] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn knn(xs: MatRef<'_, f64>, ys: &[usize], class_count: usize, xt: MatRef<'_, f64>, k: usize) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::InvalidArgument("knn k must be >= 1".into()));
    }
    let k = k.min(xs.nrows());
    let d = sq_distances(xt, xs);
    let mut out = Mat::zeros(xt.nrows(), class_count);
    let mut order: Vec<usize> = Vec::with_capacity(xs.nrows());
    for i in 0..xt.nrows() {
        order.clear();
        order.extend(0..xs.nrows());
        let key = |&j: &usize| (d[(i, j)], j);
        order.select_nth_unstable_by(k - 1, |a, b| {
            let (da, ia) = key(a);
            let (db, ib) = key(b);
            da.total_cmp(&db).then(ia.cmp(&ib))
        });
        for &j in &order[..k] {
            out[(i, ys[j])] += 1.0 / k as f64;
        }
    }
    Ok(out)
}

/// Gaussian naive Bayes with variance smoothing `1e-9 · max feature variance`.
#[derive(Debug, Clone)]
pub struct GaussianNb {
    log_prior: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

impl GaussianNb {
    pub fn fit(xs: MatRef<'_, f64>, ys: &[usize], class_count: usize) -> Self {
        let (n, d) = (xs.nrows(), xs.ncols());
        let mut max_var: f64 = 0.0;
        for j in 0..d {
            let mean = (0..n).map(|i| xs[(i, j)]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (xs[(i, j)] - mean).powi(2)).sum::<f64>() / n as f64;
            max_var = max_var.max(var);
        }
        let smoothing = 1e-9 * max_var.max(f64::MIN_POSITIVE);
        let mut counts = vec![0usize; class_count];
        let mut means = vec![vec![0.0; d]; class_count];
        let mut vars = vec![vec![0.0; d]; class_count];
        for (i, &y) in ys.iter().enumerate() {
            counts[y] += 1;
            for j in 0..d {
                means[y][j] += xs[(i, j)];
            }
        }
        for c in 0..class_count {
            if counts[c] > 0 {
                means[c].iter_mut().for_each(|v| *v /= counts[c] as f64);
            }
        }
        for (i, &y) in ys.iter().enumerate() {
            for j in 0..d {
                vars[y][j] += (xs[(i, j)] - means[y][j]).powi(2);
            }
        }
        for c in 0..class_count {
            let cnt = counts[c].max(1) as f64;
            vars[c].iter_mut().for_each(|v| *v = *v / cnt + smoothing);
        }
        let log_prior = counts
            .iter()
            .map(|&c| if c == 0 { f64::NEG_INFINITY } else { (c as f64 / n as f64).ln() })
            .collect();
        Self { log_prior, means, vars }
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.vars
    }

    fn joint_log_likelihood(&self, x: MatRef<'_, f64>, i: usize) -> Vec<f64> {
        let two_pi = 2.0 * std::f64::consts::PI;
        (0..self.log_prior.len())
            .map(|c| {
                if self.log_prior[c] == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                let ll: f64 = (0..x.ncols())
                    .map(|j| {
                        let v = self.vars[c][j];
                        -0.5 * (two_pi * v).ln() - (x[(i, j)] - self.means[c][j]).powi(2) / (2.0 * v)
                    })
                    .sum();
                self.log_prior[c] + ll
            })
            .collect()
    }

    pub fn predict_proba(&self, x: MatRef<'_, f64>) -> Matrix {
        let classes = self.log_prior.len();
        let mut out = Mat::zeros(x.nrows(), classes);
        for i in 0..x.nrows() {
            let jll = self.joint_log_likelihood(x, i);
            let top = jll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = jll.iter().map(|v| (v - top).exp()).collect();
            let total: f64 = exps.iter().sum();
            for c in 0..classes {
                out[(i, c)] = exps[c] / total;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// CART classifier: Gini impurity, midpoint thresholds, leaves hold class
/// frequencies. Among equally good splits the first one found (feature
/// order, then ascending threshold) wins.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    root: Node,
    class_count: usize,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

impl DecisionTree {
    pub fn fit(xs: MatRef<'_, f64>, ys: &[usize], class_count: usize, max_depth: usize) -> Self {
        let idx: Vec<usize> = (0..xs.nrows()).collect();
        let root = Self::grow(xs, ys, class_count, idx, max_depth);
        Self { root, class_count }
    }

    fn leaf(ys: &[usize], idx: &[usize], class_count: usize) -> Node {
        let mut freq = vec![0.0; class_count];
        for &i in idx {
            freq[ys[i]] += 1.0;
        }
        freq.iter_mut().for_each(|f| *f /= idx.len() as f64);
        Node::Leaf(freq)
    }

    fn grow(xs: MatRef<'_, f64>, ys: &[usize], class_count: usize, idx: Vec<usize>, depth: usize) -> Node {
        let mut counts = vec![0usize; class_count];
        for &i in &idx {
            counts[ys[i]] += 1;
        }
        let total = idx.len();
        let parent = gini(&counts, total);
        if depth == 0 || total < 2 || parent == 0.0 {
            return Self::leaf(ys, &idx, class_count);
        }
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.clone();
        let mut left = vec![0usize; class_count];
        for f in 0..xs.ncols() {
            sorted.sort_by(|&a, &b| xs[(a, f)].total_cmp(&xs[(b, f)]).then(a.cmp(&b)));
            left.iter_mut().for_each(|c| *c = 0);
            for pos in 0..total - 1 {
                left[ys[sorted[pos]]] += 1;
                let (lo, hi) = (xs[(sorted[pos], f)], xs[(sorted[pos + 1], f)]);
                if lo == hi {
                    continue;
                }
                let nl = pos + 1;
                let nr = total - nl;
                let right: Vec<usize> = counts.iter().zip(&left).map(|(a, b)| a - b).collect();
                let score = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / total as f64;
                if best.map_or(true, |(s, _, _)| score < s) {
                    best = Some((score, f, 0.5 * (lo + hi)));
                }
            }
        }
        match best {
            Some((score, feature, threshold)) if score < parent => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| xs[(i, feature)] <= threshold);
                Node::Split {
                    feature,
                    threshold,
                    left: Box::new(Self::grow(xs, ys, class_count, l, depth - 1)),
                    right: Box::new(Self::grow(xs, ys, class_count, r, depth - 1)),
                }
            }
            _ => Self::leaf(ys, &idx, class_count),
        }
    }

    pub fn predict_proba(&self, x: MatRef<'_, f64>) -> Matrix {
        let mut out = Mat::zeros(x.nrows(), self.class_count);
        for i in 0..x.nrows() {
            let mut node = &self.root;
            let freq = loop {
                match node {
                    Node::Leaf(f) => break f,
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => node = if x[(i, *feature)] <= *threshold { left } else { right },
                }
            };
            for (c, &p) in freq.iter().enumerate() {
                out[(i, c)] = p;
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        fn walk(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::kernel::from_rows;

    #[test]
    fn knn_exact_match_has_full_vote() {
        let xs = from_rows(&[&[0.0, 0.0], &[5.0, 5.0], &[9.0, 0.0]]);
        let xt = from_rows(&[&[5.0, 5.0]]);
        let cfg = WeakConfig {
            kind: WeakKind::Knn,
            knn_k: 1,
            ..Default::default()
        };
        let p = weak_fit_predict(&cfg, xs.as_ref(), &[0, 2, 1], 3, xt.as_ref()).unwrap();
        assert_eq!((p[(0, 0)], p[(0, 1)], p[(0, 2)]), (0.0, 0.0, 1.0));
    }

    #[test]
    fn knn_votes_are_fractions() {
        let xs = from_rows(&[&[0.0], &[1.0], &[2.0], &[3.0], &[4.0], &[10.0]]);
        let xt = from_rows(&[&[2.0]]);
        let cfg = WeakConfig {
            kind: WeakKind::Knn,
            ..Default::default()
        };
        let p = weak_fit_predict(&cfg, xs.as_ref(), &[0, 0, 1, 1, 1, 0], 2, xt.as_ref()).unwrap();
        assert!((p[(0, 0)] - 0.4).abs() < 1e-12 && (p[(0, 1)] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn gnb_boundary_matches_closed_form() {
        // Class 0 has mean 0, variance 2/3; class 1 has mean 5, variance 8/3.
        let xs = from_rows(&[&[-1.0], &[0.0], &[1.0], &[3.0], &[5.0], &[7.0]]);
        let ys = [0, 0, 0, 1, 1, 1];
        let model = GaussianNb::fit(xs.as_ref(), &ys, 2);
        let (m0, v0) = (model.means()[0][0], model.variances()[0][0]);
        let (m1, v1) = (model.means()[1][0], model.variances()[1][0]);
        // Equal priors: solve ln N(x; m0, v0) = ln N(x; m1, v1) for the root between the means.
        let a = 1.0 / (2.0 * v1) - 1.0 / (2.0 * v0);
        let b = m0 / v0 - m1 / v1;
        let c = m1 * m1 / (2.0 * v1) - m0 * m0 / (2.0 * v0) + 0.5 * (v1 / v0).ln();
        let disc = (b * b - 4.0 * a * c).sqrt();
        let roots = [(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)];
        let analytic = roots.into_iter().find(|r| (m0..m1).contains(r)).unwrap();

        let grid: Vec<f64> = (0..=50_000).map(|i| i as f64 * 1e-4).collect();
        let xt = Mat::from_fn(grid.len(), 1, |i, _| grid[i]);
        let p = model.predict_proba(xt.as_ref());
        let labels = argmax_rows(p.as_ref());
        let switch = labels.iter().position(|&l| l == 1).unwrap();
        assert!((grid[switch] - analytic).abs() <= 1e-3, "{} vs {analytic}", grid[switch]);
    }

    #[test]
    fn dtree_fits_separable_data() {
        let mut r = crate::rng::rng(9);
        let xs = Mat::from_fn(80, 2, |_, _| crate::rng::std_normal(&mut r));
        let ys: Vec<usize> = (0..80).map(|i| usize::from(xs[(i, 0)] + 0.5 * xs[(i, 1)] > 0.1)).collect();
        let tree = DecisionTree::fit(xs.as_ref(), &ys, 2, 10);
        let pred = argmax_rows(tree.predict_proba(xs.as_ref()).as_ref());
        assert_eq!(pred, ys);
        assert!(tree.depth() <= 10);
    }

    #[test]
    fn dtree_depth_limit() {
        let xs = Mat::from_fn(64, 1, |i, _| i as f64);
        let ys: Vec<usize> = (0..64).map(|i| i % 2).collect();
        let tree = DecisionTree::fit(xs.as_ref(), &ys, 2, 3);
        assert_eq!(tree.depth(), 3);
        let p = tree.predict_proba(xs.as_ref());
        for i in 0..64 {
            assert!((p[(i, 0)] + p[(i, 1)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        let s = from_rows(&[&[0.5, 0.5], &[0.2, 0.8]]);
        assert_eq!(argmax_rows(s.as_ref()), vec![0, 1]);
    }

    #[test]
    fn unknown_kind() {
        assert!("svm".parse::<WeakKind>().is_err());
    }
}
