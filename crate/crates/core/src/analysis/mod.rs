//! Mutual-information feature maps and subject-pair hypothesis tests.

mod hypothesis;
mod mi;

pub use hypothesis::{
    bh_fdr, compare_groups, normality_p, pairwise_tests, rank_sum_test, welch_t_test, PairTest, TestKind,
    TestMatrix, NORMALITY_ALPHA,
};
pub use mi::{mi_map, mi_map_hard, mutual_information_cd, MiMatrix};

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::FeatureDataset;
use crate::error::{Error, Result};
use crate::export::write_csv;

/// Per-subject samples of one feature, or of the per-sample feature mean
/// when `feature` is `None`. `class` keeps only samples with that label.
pub fn subject_groups(
    dataset: &FeatureDataset,
    feature: Option<usize>,
    class: Option<usize>,
) -> Result<Vec<(String, Vec<f64>)>> {
    let x = dataset.features();
    if let Some(j) = feature {
        if j >= x.ncols() {
            return Err(Error::InvalidArgument(format!(
                "feature {j} out of range for {} features",
                x.ncols()
            )));
        }
    }
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for i in 0..x.nrows() {
        if class.is_some_and(|c| dataset.labels()[i] != Some(c)) {
            continue;
        }
        let v = match feature {
            Some(j) => x[(i, j)],
            None => (0..x.ncols()).map(|j| x[(i, j)]).sum::<f64>() / x.ncols() as f64,
        };
        groups.entry(dataset.subjects()[i]).or_default().push(v);
    }
    Ok(groups.into_iter().map(|(s, v)| (format!("subject-{s}"), v)).collect())
}

/// `class` column then one column per feature.
pub fn write_mi_csv(map: &MiMatrix, echo: &str, path: &Path) -> Result<()> {
    let header: Vec<String> = std::iter::once("class".to_string()).chain(map.feature_names.iter().cloned()).collect();
    let rows: Vec<Vec<String>> = map
        .values
        .iter()
        .enumerate()
        .map(|(c, row)| std::iter::once(c.to_string()).chain(row.iter().map(|v| format!("{v:.6}"))).collect())
        .collect();
    write_csv(path, echo, &header, &rows)
}

/// One row per subject pair; empty p-values mark untestable pairs.
pub fn write_tests_csv(tests: &TestMatrix, echo: &str, path: &Path) -> Result<()> {
    let header = ["a", "b", "test", "p", "p_adjusted"].map(String::from);
    let fmt = |p: Option<f64>| p.map_or_else(String::new, |v| format!("{v:.6e}"));
    let rows: Vec<Vec<String>> = tests
        .pairs()
        .into_iter()
        .map(|t| vec![t.a, t.b, t.test.to_string(), fmt(t.p), fmt(t.adjusted)])
        .collect();
    write_csv(path, echo, &header, &rows)
}
