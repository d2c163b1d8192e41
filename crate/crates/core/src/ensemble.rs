//! Consensus over the per-iteration target labelings.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `l` hard labelings of the same `m` samples, optionally with soft scores.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseEnsemble {
    labelings: Vec<Vec<usize>>,
    scores: Option<Vec<Matrix>>,
    class_count: usize,
}

impl BaseEnsemble {
    pub fn new(labelings: Vec<Vec<usize>>, scores: Option<Vec<Matrix>>, class_count: usize) -> Result<Self> {
        let Some(first) = labelings.first() else {
            return Err(Error::InvalidArgument("ensemble needs at least one labeling".into()));
        };
        let m = first.len();
        if labelings.iter().any(|l| l.len() != m) {
            return Err(Error::DimensionMismatch("base labelings differ in length".into()));
        }
        if let Some(&bad) = labelings.iter().flatten().find(|&&c| c >= class_count) {
            return Err(Error::InvalidData(format!("label {bad} outside [0, {class_count})")));
        }
        if let Some(s) = &scores {
            if s.len() != labelings.len() || s.iter().any(|s| s.nrows() != m || s.ncols() != class_count) {
                return Err(Error::DimensionMismatch(format!(
                    "scores must be {} matrices of {m}x{class_count}",
                    labelings.len()
                )));
            }
        }
        Ok(Self {
            labelings,
            scores,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labelings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labelings.is_empty()
    }

    pub fn samples(&self) -> usize {
        self.labelings[0].len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labelings(&self) -> &[Vec<usize>] {
        &self.labelings
    }
}

pub fn consensus_last(ens: &BaseEnsemble) -> Vec<usize> {
    ens.labelings.last().expect("non-empty").clone()
}

/// Argmax of the mean soft score, ties to the lowest class.
pub fn consensus_average(ens: &BaseEnsemble) -> Result<Vec<usize>> {
    let scores = ens
        .scores
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("averaging consensus needs soft scores".into()))?;
    let mut sum = Mat::<f64>::zeros(ens.samples(), ens.class_count);
    for s in scores {
        sum = &sum + s;
    }
    Ok(crate::learner::weak::argmax_rows(sum.as_ref()))
}

/// Per-sample majority; ties go to whichever tied class the latest labeling chose
/// most recently.
pub fn consensus_vote(ens: &BaseEnsemble) -> Vec<usize> {
    let mut counts = vec![0usize; ens.class_count];
    (0..ens.samples())
        .map(|i| {
            counts.iter_mut().for_each(|c| *c = 0);
            for l in &ens.labelings {
                counts[l[i]] += 1;
            }
            let top = *counts.iter().max().expect("classes");
            ens.labelings
                .iter()
                .rev()
                .map(|l| l[i])
                .find(|&c| counts[c] == top)
                .expect("some class attains the max")
        })
        .collect()
}

/// Clusters of every labeling, numbered consecutively labeling by labeling.
/// Returns per-labeling sample→cluster ids and each cluster's member list.
fn enumerate_clusters(ens: &BaseEnsemble) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut ids = Vec::with_capacity(ens.len());
    let mut members: Vec<Vec<usize>> = Vec::new();
    for labeling in &ens.labelings {
        let mut local = vec![usize::MAX; ens.class_count];
        let mut row = Vec::with_capacity(labeling.len());
        for (i, &c) in labeling.iter().enumerate() {
            if local[c] == usize::MAX {
                local[c] = members.len();
                members.push(Vec::new());
            }
            members[local[c]].push(i);
            row.push(local[c]);
        }
        ids.push(row);
    }
    (ids, members)
}

/// Jaccard overlap `|X ∩ Y| / |X ∪ Y|` of sorted member lists.
fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Connected-triple similarity between samples.
///
/// Clusters of all labelings form a weighted graph with Jaccard edge
/// weights. Two clusters of the same labeling are related through every
/// third cluster `k` by `min(w_xk, w_yk)`; these sums are scaled by their
/// maximum and by `decay`. A pair scores 1 for each labeling that
/// co-clusters it and the scaled triple weight otherwise, averaged over
/// labelings.
pub fn cts_similarity(ens: &BaseEnsemble, decay: f64) -> Result<Matrix> {
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::InvalidArgument(format!("decay must lie in (0, 1], got {decay}")));
    }
    let (ids, members) = enumerate_clusters(ens);
    let nc = members.len();
    let mut w = vec![vec![0.0; nc]; nc];
    for x in 0..nc {
        for y in x + 1..nc {
            let v = jaccard(&members[x], &members[y]);
            w[x][y] = v;
            w[y][x] = v;
        }
    }
    // Triple weights between clusters of the same labeling.
    let mut wct = vec![vec![0.0; nc]; nc];
    let mut max = 0.0f64;
    let mut start = 0;
    for row in &ids {
        let count = row.iter().copied().max().map_or(0, |m| m + 1) - start;
        for x in start..start + count {
            for y in x + 1..start + count {
                let v: f64 = (0..nc).map(|k| w[x][k].min(w[y][k])).sum();
                wct[x][y] = v;
                wct[y][x] = v;
                max = max.max(v);
            }
        }
        start += count;
    }
    let m = ens.samples();
    let l = ens.len() as f64;
    let mut s = Mat::<f64>::zeros(m, m);
    for row in &ids {
        for j in 0..m {
            for i in 0..j {
                let (a, b) = (row[i], row[j]);
                let v = if a == b {
                    1.0
                } else if max > 0.0 {
                    decay * wct[a][b] / max
                } else {
                    0.0
                };
                s[(i, j)] += v;
            }
        }
    }
    for j in 0..m {
        for i in 0..j {
            let v = s[(i, j)] / l;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
        s[(j, j)] = 1.0;
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    Average,
}

impl Linkage {
    fn code(&self) -> &'static str {
        match self {
            Linkage::Single => "sl",
            Linkage::Complete => "cl",
            Linkage::Average => "al",
        }
    }
}

/// Agglomerative clustering on `1 - similarity` down to `k` clusters.
///
/// A merged cluster keeps the smaller slot index, so each slot is named by
/// its smallest member. Among equally close pairs the lexicographically
/// smallest `(slot, slot)` merges first. Labels are numbered by first
/// appearance in sample order.
pub fn agglomerative(similarity: MatRef<'_, f64>, linkage: Linkage, k: usize) -> Result<Vec<usize>> {
    let m = similarity.nrows();
    if similarity.ncols() != m {
        return Err(Error::DimensionMismatch("similarity must be square".into()));
    }
    if k == 0 || k > m {
        return Err(Error::InvalidArgument(format!("cluster count {k} must lie in [1, {m}]")));
    }
    let mut dist: Vec<f64> = (0..m * m).map(|t| 1.0 - similarity[(t / m, t % m)]).collect();
    let idx = |i: usize, j: usize| i * m + j;
    let mut active = vec![true; m];
    let mut size = vec![1usize; m];
    let mut owner: Vec<usize> = (0..m).collect();
    let nearest = |dist: &[f64], active: &[bool], i: usize| -> Option<usize> {
        let mut best: Option<usize> = None;
        for j in i + 1..m {
            if active[j] && best.map_or(true, |b| dist[idx(i, j)] < dist[idx(i, b)]) {
                best = Some(j);
            }
        }
        best
    };
    let mut nn: Vec<Option<usize>> = (0..m).map(|i| nearest(&dist, &active, i)).collect();
    let mut clusters = m;
    while clusters > k {
        let mut pick: Option<(usize, usize)> = None;
        for i in 0..m {
            if let (true, Some(j)) = (active[i], nn[i]) {
                if pick.map_or(true, |(a, b)| dist[idx(i, j)] < dist[idx(a, b)]) {
                    pick = Some((i, j));
                }
            }
        }
        let (a, b) = pick.expect("more than one cluster remains");
        for t in 0..m {
            if !active[t] || t == a || t == b {
                continue;
            }
            let (da, db) = (dist[idx(a, t)], dist[idx(b, t)]);
            let v = match linkage {
                Linkage::Single => da.min(db),
                Linkage::Complete => da.max(db),
                Linkage::Average => (size[a] as f64 * da + size[b] as f64 * db) / (size[a] + size[b]) as f64,
            };
            dist[idx(a, t)] = v;
            dist[idx(t, a)] = v;
        }
        active[b] = false;
        size[a] += size[b];
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
        clusters -= 1;
        for i in 0..m {
            if !active[i] {
                continue;
            }
            if i == a || nn[i] == Some(a) || nn[i] == Some(b) {
                nn[i] = nearest(&dist, &active, i);
            } else if i < a {
                if let Some(j) = nn[i] {
                    let (dc, dn) = (dist[idx(i, a)], dist[idx(i, j)]);
                    if dc < dn || (dc == dn && a < j) {
                        nn[i] = Some(a);
                    }
                }
            }
        }
    }
    let mut relabel = vec![usize::MAX; m];
    let mut next = 0;
    Ok(owner
        .into_iter()
        .map(|o| {
            if relabel[o] == usize::MAX {
                relabel[o] = next;
                next += 1;
            }
            relabel[o]
        })
        .collect())
}

/// Consensus method over base labelings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EnsembleMethod {
    Last,
    Average,
    Vote,
    LinkClue(Linkage),
}

impl Default for EnsembleMethod {
    fn default() -> Self {
        EnsembleMethod::LinkClue(Linkage::Single)
    }
}

impl fmt::Display for EnsembleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnsembleMethod::Last => f.write_str("last"),
            EnsembleMethod::Average => f.write_str("avg"),
            EnsembleMethod::Vote => f.write_str("vote"),
            EnsembleMethod::LinkClue(l) => write!(f, "linkclue-cts-{}", l.code()),
        }
    }
}

impl FromStr for EnsembleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "last" => EnsembleMethod::Last,
            "avg" | "average" | "averaging" => EnsembleMethod::Average,
            "vote" | "voting" => EnsembleMethod::Vote,
            "linkclue" | "linkclue-cts-sl" => EnsembleMethod::LinkClue(Linkage::Single),
            "linkclue-cts-cl" => EnsembleMethod::LinkClue(Linkage::Complete),
            "linkclue-cts-al" => EnsembleMethod::LinkClue(Linkage::Average),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown ensemble method `{other}` (expected last, avg, vote, linkclue-cts-sl, linkclue-cts-cl or linkclue-cts-al)"
                )))
            }
        })
    }
}

impl TryFrom<String> for EnsembleMethod {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EnsembleMethod> for String {
    fn from(m: EnsembleMethod) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusResult {
    pub labels: Vec<usize>,
    pub method: EnsembleMethod,
    pub similarity: Option<Matrix>,
}

/// CTS similarity, agglomerative clustering into `min(C, m)` groups, then
/// each group takes the class most frequent among its members' base labels.
pub fn consensus_linkclue(ens: &BaseEnsemble, linkage: Linkage, decay: f64) -> Result<ConsensusResult> {
    let sim = cts_similarity(ens, decay)?;
    let k = ens.class_count.min(ens.samples());
    let groups = agglomerative(sim.as_ref(), linkage, k)?;
    let mut votes = vec![vec![0usize; ens.class_count]; k];
    for labeling in &ens.labelings {
        for (i, &c) in labeling.iter().enumerate() {
            votes[groups[i]][c] += 1;
        }
    }
    let class_of: Vec<usize> = votes
        .iter()
        .map(|v| {
            let mut best = 0;
            for c in 1..v.len() {
                if v[c] > v[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    Ok(ConsensusResult {
        labels: groups.iter().map(|&g| class_of[g]).collect(),
        method: EnsembleMethod::LinkClue(linkage),
        similarity: Some(sim),
    })
}

pub fn consensus(ens: &BaseEnsemble, method: EnsembleMethod, decay: f64) -> Result<ConsensusResult> {
    let labels = match method {
        EnsembleMethod::Last => consensus_last(ens),
        EnsembleMethod::Average => consensus_average(ens)?,
        EnsembleMethod::Vote => consensus_vote(ens),
        EnsembleMethod::LinkClue(l) => return consensus_linkclue(ens, l, decay),
    };
    Ok(ConsensusResult {
        labels,
        method,
        similarity: None,
    })
}

/// Square similarity matrix with `s0..s{m-1}` column headers.
pub fn write_similarity_csv(similarity: MatRef<'_, f64>, echo: &str, path: &Path) -> Result<()> {
    let header: Vec<String> = (0..similarity.ncols()).map(|j| format!("s{j}")).collect();
    let rows: Vec<Vec<String>> = (0..similarity.nrows())
        .map(|i| (0..similarity.ncols()).map(|j| similarity[(i, j)].to_string()).collect())
        .collect();
    crate::export::write_csv(path, echo, &header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ens(labelings: Vec<Vec<usize>>, c: usize) -> BaseEnsemble {
        BaseEnsemble::new(labelings, None, c).unwrap()
    }

    /// Exhaustive triple enumeration: for every pair of clusters of one
    /// labeling, walk every third cluster and recompute Jaccard weights from
    /// raw membership sets.
    fn cts_oracle(labelings: &[Vec<usize>], decay: f64) -> Vec<Vec<f64>> {
        let m = labelings[0].len();
        let mut clusters: Vec<(usize, usize)> = Vec::new();
        for (t, l) in labelings.iter().enumerate() {
            let mut seen: Vec<usize> = l.clone();
            seen.sort_unstable();
            seen.dedup();
            clusters.extend(seen.into_iter().map(|c| (t, c)));
        }
        let set = |(t, c): (usize, usize)| -> Vec<usize> { (0..m).filter(|&i| labelings[t][i] == c).collect() };
        let w = |x: (usize, usize), y: (usize, usize)| -> f64 {
            if x == y {
                return 0.0;
            }
            let (a, b) = (set(x), set(y));
            let inter = a.iter().filter(|i| b.contains(i)).count();
            let union = a.len() + b.len() - inter;
            inter as f64 / union as f64
        };
        let triple = |x, y| clusters.iter().map(|&k| w(x, k).min(w(y, k))).sum::<f64>();
        let mut max = 0.0f64;
        for &x in &clusters {
            for &y in &clusters {
                if x.0 == y.0 && x.1 < y.1 {
                    max = max.max(triple(x, y));
                }
            }
        }
        let mut s = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    s[i][j] = 1.0;
                    continue;
                }
                let mut acc = 0.0;
                for (t, l) in labelings.iter().enumerate() {
                    acc += if l[i] == l[j] {
                        1.0
                    } else if max > 0.0 {
                        decay * triple((t, l[i]), (t, l[j])) / max
                    } else {
                        0.0
                    };
                }
                s[i][j] = acc / labelings.len() as f64;
            }
        }
        s
    }

    /// Naive agglomeration recomputing every cluster distance from the
    /// original matrix at each step. Clusters are named by their smallest
    /// member, matching the slot rule.
    fn agglomerative_oracle(sim: &Matrix, linkage: Linkage, k: usize) -> Vec<usize> {
        let m = sim.nrows();
        let mut groups: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
        let d = |a: &[usize], b: &[usize]| -> f64 {
            let vals: Vec<f64> = a.iter().flat_map(|&i| b.iter().map(move |&j| 1.0 - sim[(i, j)])).collect();
            match linkage {
                Linkage::Single => vals.iter().copied().fold(f64::INFINITY, f64::min),
                Linkage::Complete => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Linkage::Average => vals.iter().sum::<f64>() / vals.len() as f64,
            }
        };
        while groups.len() > k {
            groups.sort_by_key(|g| g[0]);
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..groups.len() {
                for b in a + 1..groups.len() {
                    let v = d(&groups[a], &groups[b]);
                    if v < best.0 {
                        best = (v, a, b);
                    }
                }
            }
            let taken = groups.remove(best.2);
            groups[best.1].extend(taken);
            groups[best.1].sort_unstable();
        }
        let mut labels = vec![0; m];
        groups.sort_by_key(|g| g[0]);
        for (gi, g) in groups.iter().enumerate() {
            for &i in g {
                labels[i] = gi;
            }
        }
        labels
    }

    #[test]
    fn cts_matches_triple_oracle() {
        let labelings = vec![vec![0, 0, 1, 1, 2, 2], vec![0, 1, 1, 1, 0, 2]];
        let s = cts_similarity(&ens(labelings.clone(), 3), 0.8).unwrap();
        let oracle = cts_oracle(&labelings, 0.8);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(s[(i, j)], oracle[i][j], "({i},{j})");
            }
        }
    }

    #[test]
    fn always_co_clustered_pairs_have_similarity_one() {
        let s = cts_similarity(&ens(vec![vec![0, 0, 1], vec![2, 2, 0]], 3), 0.8).unwrap();
        assert_eq!(s[(0, 1)], 1.0);
        assert!(s[(0, 2)] < 1.0);
    }

    #[test]
    fn linkages_match_naive_oracle() {
        let mut r = crate::rng::rng(12);
        for trial in 0..20 {
            let pts: Vec<f64> = (0..8).map(|_| crate::rng::std_normal(&mut r)).collect();
            let sim = if trial % 2 == 0 {
                Mat::from_fn(8, 8, |i, j| 1.0 - (pts[i] - pts[j]).abs() / 10.0)
            } else {
                // Quantized similarities force ties.
                Mat::from_fn(8, 8, |i, j| 1.0 - ((pts[i] - pts[j]).abs() * 2.0).round() / 10.0)
            };
            for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
                for k in 1..=8 {
                    let got = agglomerative(sim.as_ref(), linkage, k).unwrap();
                    assert_eq!(got, agglomerative_oracle(&sim, linkage, k), "{linkage:?} k={k} trial={trial}");
                }
            }
        }
    }

    #[test]
    fn two_blocks_are_recovered() {
        let sim = Mat::from_fn(6, 6, |i, j| if (i < 3) == (j < 3) { 1.0 } else { 0.0 });
        for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
            assert_eq!(agglomerative(sim.as_ref(), linkage, 2).unwrap(), vec![0, 0, 0, 1, 1, 1]);
        }
        assert_eq!(agglomerative(sim.as_ref(), Linkage::Single, 6).unwrap(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn identical_labelings_are_fixed_points() {
        let base = vec![2, 0, 1, 1, 0, 2, 2];
        let scores: Vec<Matrix> = (0..3)
            .map(|_| Mat::from_fn(7, 3, |i, c| f64::from(base[i] == c)))
            .collect();
        let e = BaseEnsemble::new(vec![base.clone(); 3], Some(scores), 3).unwrap();
        for method in [
            EnsembleMethod::Last,
            EnsembleMethod::Average,
            EnsembleMethod::Vote,
            EnsembleMethod::LinkClue(Linkage::Single),
            EnsembleMethod::LinkClue(Linkage::Complete),
            EnsembleMethod::LinkClue(Linkage::Average),
        ] {
            assert_eq!(consensus(&e, method, 0.8).unwrap().labels, base, "{method}");
        }
    }

    #[test]
    fn vote_and_average_arithmetic() {
        let e = ens(vec![vec![0], vec![0], vec![1]], 2);
        assert_eq!(consensus_vote(&e), vec![0]);
        let tie = ens(vec![vec![0], vec![1]], 2);
        assert_eq!(consensus_vote(&tie), vec![1]);
        let scores = vec![
            Mat::from_fn(1, 2, |_, c| [0.6, 0.4][c]),
            Mat::from_fn(1, 2, |_, c| [0.2, 0.8][c]),
        ];
        let e = BaseEnsemble::new(vec![vec![0], vec![1]], Some(scores), 2).unwrap();
        assert_eq!(consensus_average(&e).unwrap(), vec![1]);
        assert!(consensus_average(&ens(vec![vec![0]], 2)).is_err());
    }

    #[test]
    fn permuted_copies_resolve_to_the_majority_labeling() {
        let base = vec![0, 0, 1, 1, 2, 2, 0, 1];
        let perm = |p: [usize; 3]| base.iter().map(|&c| p[c]).collect::<Vec<_>>();
        let labelings = vec![base.clone(), perm([1, 2, 0]), base.clone(), perm([2, 0, 1]), base.clone()];
        let out = consensus_linkclue(&ens(labelings.clone(), 3), Linkage::Single, 0.8).unwrap();
        // Brute-force mapping oracle: each true group maps to the class most
        // often assigned to its members over all labelings.
        let expected: Vec<usize> = base
            .iter()
            .map(|&g| {
                let mut count = [0usize; 3];
                for l in &labelings {
                    for (i, &c) in l.iter().enumerate() {
                        if base[i] == g {
                            count[c] += 1;
                        }
                    }
                }
                (0..3).max_by_key(|&c| (count[c], std::cmp::Reverse(c))).unwrap()
            })
            .collect();
        assert_eq!(out.labels, expected);
        assert_eq!(out.labels, base);
    }

    #[test]
    fn method_names_round_trip() {
        for s in ["last", "avg", "vote", "linkclue-cts-sl", "linkclue-cts-cl", "linkclue-cts-al"] {
            assert_eq!(s.parse::<EnsembleMethod>().unwrap().to_string(), s);
        }
        assert!("linkclue-srs-sl".parse::<EnsembleMethod>().is_err());
    }

    fn labelings_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
        (1usize..5, 2usize..12).prop_flat_map(|(l, m)| proptest::collection::vec(proptest::collection::vec(0usize..3, m), l))
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric_bounded_unit_diagonal(labelings in labelings_strategy(), decay in 0.01f64..=1.0) {
            let s = cts_similarity(&ens(labelings, 3), decay).unwrap();
            for i in 0..s.nrows() {
                prop_assert_eq!(s[(i, i)], 1.0);
                for j in 0..s.ncols() {
                    prop_assert_eq!(s[(i, j)], s[(j, i)]);
                    prop_assert!((0.0..=1.0).contains(&s[(i, j)]));
                }
            }
        }

        #[test]
        fn larger_decay_never_lowers_similarity(labelings in labelings_strategy(), a in 0.01f64..=1.0, b in 0.01f64..=1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let e = ens(labelings, 3);
            let s_lo = cts_similarity(&e, lo).unwrap();
            let s_hi = cts_similarity(&e, hi).unwrap();
            for i in 0..s_lo.nrows() {
                for j in 0..s_lo.ncols() {
                    prop_assert!(s_hi[(i, j)] >= s_lo[(i, j)] - 1e-15);
                }
            }
        }

        #[test]
        fn vote_of_single_labeling_is_last(labelings in labelings_strategy()) {
            let e = ens(vec![labelings[0].clone()], 3);
            prop_assert_eq!(consensus_vote(&e), consensus_last(&e));
        }

        #[test]
        fn consensus_is_permutation_equivariant(labelings in labelings_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let m = labelings[0].len();
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(&mut crate::rng::rng(seed));
            let permuted: Vec<Vec<usize>> = labelings.iter().map(|l| perm.iter().map(|&p| l[p]).collect()).collect();
            for method in [EnsembleMethod::Last, EnsembleMethod::Vote] {
                let a = consensus(&ens(labelings.clone(), 3), method, 0.8).unwrap().labels;
                let b = consensus(&ens(permuted.clone(), 3), method, 0.8).unwrap().labels;
                let a_perm: Vec<usize> = perm.iter().map(|&p| a[p]).collect();
                prop_assert_eq!(a_perm, b);
            }
            let a = cts_similarity(&ens(labelings.clone(), 3), 0.8).unwrap();
            let b = cts_similarity(&ens(permuted, 3), 0.8).unwrap();
            for i in 0..m {
                for j in 0..m {
                    prop_assert!((a[(perm[i], perm[j])] - b[(i, j)]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn single_and_complete_depend_only_on_similarity_order(seed in any::<u64>(), k in 1usize..8) {
            let mut r = crate::rng::rng(seed);
            let pts: Vec<f64> = (0..8).map(|_| crate::rng::std_normal(&mut r)).collect();
            let sim = Mat::from_fn(8, 8, |i, j| (-(pts[i] - pts[j]).abs()).exp());
            let warped = Mat::from_fn(8, 8, |i, j| sim[(i, j)].powi(3));
            for linkage in [Linkage::Single, Linkage::Complete] {
                prop_assert_eq!(
                    agglomerative(sim.as_ref(), linkage, k).unwrap(),
                    agglomerative(warped.as_ref(), linkage, k).unwrap()
                );
            }
        }
    }
}
