use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::learner::weak::argmax_rows;
use crate::linalg::Matrix;

/// Largest float strictly below `r`, or 0 for 0.
fn shrink(r: f64) -> f64 {
    if r > 0.0 {
        f64::from_bits(r.to_bits() - 1)
    } else {
        0.0
    }
}

/// Distance from `sorted[pos]` to its `k`-th nearest other element.
fn kth_neighbour_distance(sorted: &[f64], pos: usize, k: usize) -> f64 {
    let x = sorted[pos];
    let (mut lo, mut hi) = (pos, pos);
    let mut d = 0.0;
    for _ in 0..k {
        let left = (lo > 0).then(|| x - sorted[lo - 1]);
        let right = (hi + 1 < sorted.len()).then(|| sorted[hi + 1] - x);
        match (left, right) {
            (Some(l), Some(r)) if l <= r => {
                lo -= 1;
                d = l;
            }
            (Some(l), None) => {
                lo -= 1;
                d = l;
            }
            (_, Some(r)) => {
                hi += 1;
                d = r;
            }
            (None, None) => break,
        }
    }
    d
}

/// Nearest-neighbour estimate of the mutual information (nats) between a
/// continuous feature and discrete labels.
///
/// For each sample, `r` is the distance to the `k`-th nearest sample of the
/// same label and `m` counts all samples strictly closer than `r`
/// (itself included). The estimate is
/// `ψ(N) + ⟨ψ(k)⟩ − ⟨ψ(N_y)⟩ − ⟨ψ(m)⟩`, clamped at 0. Samples whose label
/// occurs once are ignored and `k` shrinks to `N_y − 1` for small labels.
pub fn mutual_information_cd(feature: &[f64], labels: &[usize], k: usize) -> Result<f64> {
    if feature.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature values with {} labels",
            feature.len(),
            labels.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("neighbour count must be >= 1".into()));
    }
    if feature.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("feature contains non-finite values".into()));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); classes];
    for (&v, &y) in feature.iter().zip(labels) {
        groups[y].push(v);
    }
    let kept: Vec<&Vec<f64>> = groups.iter().filter(|g| g.len() > 1).collect();
    if kept.len() < 2 {
        return Ok(0.0);
    }
    let mut all: Vec<f64> = kept.iter().flat_map(|g| g.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    let n = all.len();
    let (mut sum_k, mut sum_ny, mut sum_m) = (0.0, 0.0, 0.0);
    for g in kept {
        let mut sorted = g.clone();
        sorted.sort_by(f64::total_cmp);
        let kk = k.min(sorted.len() - 1);
        let psi_ny = digamma(sorted.len() as f64);
        for pos in 0..sorted.len() {
            let x = sorted[pos];
            let r = shrink(kth_neighbour_distance(&sorted, pos, kk));
            // Compare distances rather than shifted bounds: `x ± r` can round
            // onto the excluded neighbour.
            let mid = all.partition_point(|&v| v < x);
            let lo = all[..mid].partition_point(|&v| x - v > r);
            let hi = mid + all[mid..].partition_point(|&v| v - x <= r);
            sum_k += digamma(kk as f64);
            sum_ny += psi_ny;
            sum_m += digamma((hi - lo) as f64);
        }
    }
    let nf = n as f64;
    let mi = digamma(nf) + (sum_k - sum_ny - sum_m) / nf;
    Ok(mi.max(0.0))
}

/// Class × feature mutual information, min–max scaled to `[0, 1]` over the
/// whole matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiMatrix {
    /// `values[c][j]`.
    pub values: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
}

/// MI between every feature column and each one-vs-rest indicator of the
/// predicted class (argmax of `predictions`).
pub fn mi_map(features: MatRef<'_, f64>, predictions: MatRef<'_, f64>, k: usize) -> Result<MiMatrix> {
    if predictions.nrows() != features.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows with {} prediction rows",
            features.nrows(),
            predictions.nrows()
        )));
    }
    mi_map_hard(features, &argmax_rows(predictions), predictions.ncols(), k)
}

pub fn mi_map_hard(features: MatRef<'_, f64>, labels: &[usize], class_count: usize, k: usize) -> Result<MiMatrix> {
    if labels.len() != features.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows with {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let d = features.ncols();
    let columns: Vec<Vec<f64>> = (0..d).map(|j| (0..features.nrows()).map(|i| features[(i, j)]).collect()).collect();
    let mut raw: Matrix = Mat::zeros(class_count, d);
    for c in 0..class_count {
        let indicator: Vec<usize> = labels.iter().map(|&y| usize::from(y == c)).collect();
        for (j, col) in columns.iter().enumerate() {
            raw[(c, j)] = mutual_information_cd(col, &indicator, k)?;
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in 0..class_count {
        for j in 0..d {
            lo = lo.min(raw[(c, j)]);
            hi = hi.max(raw[(c, j)]);
        }
    }
    let span = hi - lo;
    let values = (0..class_count)
        .map(|c| {
            (0..d)
                .map(|j| if span > 0.0 { (raw[(c, j)] - lo) / span } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(MiMatrix {
        values,
        feature_names: (0..d).map(|j| format!("f{j}")).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng as _;

    #[test]
    fn kth_distance_on_a_line() {
        let s = [0.0, 1.0, 3.0, 6.0];
        assert_eq!(kth_neighbour_distance(&s, 0, 1), 1.0);
        assert_eq!(kth_neighbour_distance(&s, 0, 3), 6.0);
        assert_eq!(kth_neighbour_distance(&s, 2, 2), 3.0);
    }

    #[test]
    fn matches_reference_estimator() {
        // Reference value from scikit-learn's continuous/discrete estimator.
        let labels: Vec<usize> = (0..500).map(|i| i % 3).collect();
        let x: Vec<f64> = (0..500)
            .map(|i| 0.5 * (i % 3) as f64 + (1.3 * i as f64).sin() * (0.7 * i as f64).cos())
            .collect();
        let mi = mutual_information_cd(&x, &labels, 3).unwrap();
        assert!((mi - 0.308363123984039).abs() < 1e-9, "{mi}");
    }

    #[test]
    fn constant_feature_has_zero_information() {
        let labels: Vec<usize> = (0..50).map(|i| i % 2).collect();
        assert_eq!(mutual_information_cd(&[1.5; 50], &labels, 3).unwrap(), 0.0);
    }

    #[test]
    fn single_label_has_zero_information() {
        assert_eq!(mutual_information_cd(&[0.1, 0.4, 0.2], &[1, 1, 1], 3).unwrap(), 0.0);
    }

    #[test]
    fn monotone_transforms_barely_move_the_estimate() {
        let mut r = crate::rng::rng(8);
        let labels: Vec<usize> = (0..2000).map(|_| r.random_range(0..3)).collect();
        let x: Vec<f64> = labels.iter().map(|&y| y as f64 + crate::rng::std_normal(&mut r)).collect();
        let a = mutual_information_cd(&x, &labels, 3).unwrap();
        let b = mutual_information_cd(&x.iter().map(|v| v.exp()).collect::<Vec<_>>(), &labels, 3).unwrap();
        assert!((a - b).abs() <= 0.05, "{a} vs {b}");
        assert!(a > 0.1, "{a}");
    }

    #[test]
    fn planted_feature_tops_the_map() {
        let mut r = crate::rng::rng(9);
        let m = 300;
        let labels: Vec<usize> = (0..m).map(|_| r.random_range(0..3)).collect();
        let x = Mat::from_fn(m, 5, |i, j| {
            let noise = crate::rng::std_normal(&mut r);
            if j == 2 {
                3.0 * labels[i] as f64 + 0.1 * noise
            } else {
                noise
            }
        });
        let map = mi_map_hard(x.as_ref(), &labels, 3, 3).unwrap();
        let best = map.values.iter().flatten().copied().fold(0.0, f64::max);
        assert_eq!(best, 1.0);
        assert!((0..3).any(|c| map.values[c][2] == 1.0));
        assert!(map.values.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn constant_features_give_a_zero_map() {
        let x = Mat::from_fn(20, 4, |_, j| j as f64);
        let labels: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let map = mi_map_hard(x.as_ref(), &labels, 3, 3).unwrap();
        assert_eq!(map.values, vec![vec![0.0; 4]; 3]);
    }

    #[test]
    fn map_ignores_sample_order() {
        let mut r = crate::rng::rng(10);
        let m = 120;
        let labels: Vec<usize> = (0..m).map(|_| r.random_range(0..3)).collect();
        let x = Mat::from_fn(m, 3, |i, j| labels[i] as f64 * j as f64 + crate::rng::std_normal(&mut r));
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut r);
        let xp = Mat::from_fn(m, 3, |i, j| x[(perm[i], j)]);
        let lp: Vec<usize> = perm.iter().map(|&p| labels[p]).collect();
        assert_eq!(mi_map_hard(x.as_ref(), &labels, 3, 3).unwrap(), mi_map_hard(xp.as_ref(), &lp, 3, 3).unwrap());
    }
}
