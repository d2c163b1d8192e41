//! p-nearest-neighbour cosine graph and its Laplacian `L = D - W`.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{row_sq_norms, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Neighbour count.
    pub p: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { p: 10 }
    }
}

/// Symmetric sparse weight matrix stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    adjacency: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
}

/// Cosine similarity matrix of the rows of `z`. Zero rows have similarity 0
/// with everything (including themselves).
pub fn cosine_similarities(z: MatRef<'_, f64>) -> Matrix {
    let norms: Vec<f64> = row_sq_norms(z).into_iter().map(f64::sqrt).collect();
    let unit = Mat::from_fn(z.nrows(), z.ncols(), |i, j| {
        if norms[i] > 0.0 {
            z[(i, j)] / norms[i]
        } else {
            0.0
        }
    });
    &unit * unit.transpose()
}

/// W_ij = max(cos(z_i, z_j), 0) when either point is among the other's `p`
/// most cosine-similar points (ties to the lower index), else 0; W_ii = 0.
pub fn build_laplacian(z: MatRef<'_, f64>, config: &GraphConfig) -> Result<GraphLaplacian> {
    let n = z.nrows();
    if config.p == 0 || config.p >= n {
        return Err(Error::InvalidArgument(format!(
            "neighbour count p={} must satisfy 1 <= p < {n}",
            config.p
        )));
    }
    let sim = cosine_similarities(z);
    let mut linked = vec![Vec::<usize>::new(); n];
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        let key = |&j: &usize| (std::cmp::Reverse(ordered(sim[(i, j)])), j);
        order.select_nth_unstable_by_key(config.p - 1, key);
        order.truncate(config.p);
        for &j in &order {
            linked[i].push(j);
            linked[j].push(i);
        }
    }
    let mut adjacency = Vec::with_capacity(n);
    let mut degree = Vec::with_capacity(n);
    for (i, mut nbrs) in linked.into_iter().enumerate() {
        nbrs.sort_unstable();
        nbrs.dedup();
        let row: Vec<(usize, f64)> = nbrs.into_iter().map(|j| (j, sim[(i, j)].max(0.0))).collect();
        degree.push(row.iter().map(|&(_, w)| w).sum());
        adjacency.push(row);
    }
    Ok(GraphLaplacian { adjacency, degree })
}

/// Total order key for finite similarities.
fn ordered(v: f64) -> i64 {
    let bits = v.to_bits() as i64;
    if bits < 0 {
        bits ^ i64::MAX
    } else {
        bits
    }
}

impl GraphLaplacian {
    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    pub fn neighbours(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn weights(&self) -> Matrix {
        let n = self.len();
        let mut w = Mat::zeros(n, n);
        for (i, row) in self.adjacency.iter().enumerate() {
            for &(j, v) in row {
                w[(i, j)] = v;
            }
        }
        w
    }

    pub fn laplacian(&self) -> Matrix {
        let mut l = self.weights();
        for j in 0..l.ncols() {
            for i in 0..l.nrows() {
                l[(i, j)] = -l[(i, j)];
            }
        }
        for (i, &d) in self.degree.iter().enumerate() {
            l[(i, i)] = d;
        }
        l
    }

    /// `L · rhs` without forming L.
    pub fn mul_mat(&self, rhs: MatRef<'_, f64>) -> Matrix {
        let n = self.len();
        let mut out = Mat::zeros(n, rhs.ncols());
        for c in 0..rhs.ncols() {
            let col = rhs.col(c);
            for i in 0..n {
                let mut acc = self.degree[i] * col[i];
                for &(j, w) in &self.adjacency[i] {
                    acc -= w * col[j];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::kernel::from_rows;

    /// Brute-force neighbour oracle: sort all candidates by (-sim, index).
    fn oracle_weights(z: MatRef<'_, f64>, p: usize) -> Matrix {
        let n = z.nrows();
        let cos = |a: usize, b: usize| {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for k in 0..z.ncols() {
                dot += z[(a, k)] * z[(b, k)];
                na += z[(a, k)] * z[(a, k)];
                nb += z[(b, k)] * z[(b, k)];
            }
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na.sqrt() * nb.sqrt())
            }
        };
        let knn = |i: usize| {
            let mut c: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            c.sort_by(|&a, &b| cos(i, b).partial_cmp(&cos(i, a)).unwrap().then(a.cmp(&b)));
            c.truncate(p);
            c
        };
        let sets: Vec<Vec<usize>> = (0..n).map(knn).collect();
        Mat::from_fn(n, n, |i, j| {
            if i != j && (sets[i].contains(&j) || sets[j].contains(&i)) {
                cos(i, j).max(0.0)
            } else {
                0.0
            }
        })
    }

    #[test]
    fn identical_vectors_give_complete_graph() {
        let z = Mat::from_fn(5, 3, |_, j| j as f64 + 1.0);
        let g = build_laplacian(z.as_ref(), &GraphConfig { p: 2 }).unwrap();
        let w = g.weights();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    // every pair is linked through the "or" rule only if chosen;
                    // identical sims choose the lowest indices.
                    assert!(w[(i, j)] == 0.0 || (w[(i, j)] - 1.0).abs() < 1e-12);
                }
            }
        }
        let ones = Mat::<f64>::from_fn(5, 1, |_, _| 1.0);
        assert!(g.mul_mat(ones.as_ref()).norm_l2() < 1e-12);
        let full = build_laplacian(z.as_ref(), &GraphConfig { p: 4 }).unwrap().weights();
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 0.0 } else { 1.0 };
                assert!((full[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_orthogonal_clusters_are_block_diagonal() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let t = 0.05 * i as f64;
                if i < 5 {
                    vec![1.0, t, 0.0, 0.0]
                } else {
                    vec![0.0, 0.0, 1.0, t]
                }
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let z = from_rows(&refs);
        let w = build_laplacian(z.as_ref(), &GraphConfig { p: 3 }).unwrap().weights();
        let oracle = oracle_weights(z.as_ref(), 3);
        assert!((&w - &oracle).norm_l2() < 1e-12);
        for i in 0..5 {
            for j in 5..10 {
                assert_eq!(w[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn matches_oracle_on_random_points() {
        let mut rng = crate::rng::rng(3);
        let z = Mat::from_fn(25, 4, |_, _| crate::rng::std_normal(&mut rng));
        for p in [1, 3, 7] {
            let g = build_laplacian(z.as_ref(), &GraphConfig { p }).unwrap();
            assert!((&g.weights() - &oracle_weights(z.as_ref(), p)).norm_l2() < 1e-12);
            let l = g.laplacian();
            let dense = &l * &z;
            assert!((&dense - &g.mul_mat(z.as_ref())).norm_l2() < 1e-10);
        }
    }

    #[test]
    fn zero_vector_has_zero_similarity() {
        let z = from_rows(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let g = build_laplacian(z.as_ref(), &GraphConfig { p: 2 }).unwrap();
        assert!(g.neighbours(0).iter().all(|&(_, w)| w == 0.0));
        assert_eq!(g.degree()[0], 0.0);
    }

    #[test]
    fn p_must_be_below_sample_count() {
        let z = from_rows(&[&[1.0], &[2.0]]);
        assert!(build_laplacian(z.as_ref(), &GraphConfig { p: 2 }).is_err());
    }
}
