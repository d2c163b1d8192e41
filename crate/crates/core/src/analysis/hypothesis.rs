use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Benjamini–Hochberg step-up adjustment: `p̃_(i) = min_{j ≥ i} T·p_(j)/j`,
/// capped at 1, returned in input order.
pub fn bh_fdr(p: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("p-value {bad} outside [0, 1]")));
    }
    let t = p.len();
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; t];
    let mut running = 1.0f64;
    for rank in (0..t).rev() {
        let i = order[rank];
        running = running.min(p[i] * t as f64 / (rank + 1) as f64);
        out[i] = running.max(p[i]);
    }
    Ok(out)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (mean, x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Two-sided tail of Student's t: `I_{ν/(ν+t²)}(ν/2, 1/2)`.
fn student_two_sided(t: f64, df: f64) -> f64 {
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Welch's unequal-variance t-test, two-sided.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    student_two_sided(t, df)
}

/// Wilcoxon rank-sum test with tie-corrected normal approximation, two-sided.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> f64 {
    let mut pooled: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let (mut rank_a, mut tie_term) = (0.0, 0.0);
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_a += pooled[i..=j].iter().filter(|p| p.1).count() as f64 * mid;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let u = rank_a - n1 * (n1 + 1.0) / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    normal_two_sided((u - n1 * n2 / 2.0) / var.sqrt())
}

/// D'Agostino–Pearson omnibus normality test from sample skewness and
/// kurtosis. `None` below 8 samples or for constant samples.
pub fn normality_p(x: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 8 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n;
    let m = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    if m2 <= 0.0 {
        return None;
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);

    let y = skew * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0) / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let y = if y == 0.0 { 1.0 } else { y };
    let z_skew = delta * (y / alpha + ((y / alpha).powi(2) + 1.0).sqrt()).ln();

    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0).powi(2) * (n + 3.0) * (n + 5.0));
    let xk = (kurt - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + xk * (2.0 / (a - 4.0)).sqrt();
    if denom == 0.0 {
        return None;
    }
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    let z_kurt = (term1 - term2) / (2.0 / (9.0 * a)).sqrt();

    let k2 = z_skew * z_skew + z_kurt * z_kurt;
    // Chi-square survival with two degrees of freedom.
    Some((-k2 / 2.0).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    WelchT,
    RankSum,
    /// A group has fewer than three samples.
    Untestable,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::WelchT => "welch-t",
            TestKind::RankSum => "rank-sum",
            TestKind::Untestable => "untestable",
        })
    }
}

pub const NORMALITY_ALPHA: f64 = 0.05;

/// Welch t when both groups pass the normality screen, rank-sum otherwise.
pub fn compare_groups(a: &[f64], b: &[f64]) -> (TestKind, Option<f64>) {
    if a.len() < 3 || b.len() < 3 {
        return (TestKind::Untestable, None);
    }
    let normal = |x: &[f64]| normality_p(x).is_some_and(|p| p >= NORMALITY_ALPHA);
    if normal(a) && normal(b) {
        (TestKind::WelchT, Some(welch_t_test(a, b)))
    } else {
        (TestKind::RankSum, Some(rank_sum_test(a, b)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: String,
    pub b: String,
    pub test: TestKind,
    pub p: Option<f64>,
    pub adjusted: Option<f64>,
}

/// Symmetric subject × subject test results. Diagonal cells hold 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMatrix {
    pub names: Vec<String>,
    pub p_values: Vec<Vec<Option<f64>>>,
    pub adjusted: Vec<Vec<Option<f64>>>,
    pub test_used: Vec<Vec<Option<TestKind>>>,
}

impl TestMatrix {
    /// Upper-triangle cells in row order.
    pub fn pairs(&self) -> Vec<PairTest> {
        let s = self.names.len();
        let mut out = Vec::new();
        for i in 0..s {
            for j in i + 1..s {
                out.push(PairTest {
                    a: self.names[i].clone(),
                    b: self.names[j].clone(),
                    test: self.test_used[i][j].expect("off-diagonal cells carry a test"),
                    p: self.p_values[i][j],
                    adjusted: self.adjusted[i][j],
                });
            }
        }
        out
    }
}

/// Test every pair of groups, then adjust all testable p-values jointly.
pub fn pairwise_tests(groups: &[(String, Vec<f64>)]) -> Result<TestMatrix> {
    let s = groups.len();
    if s < 2 {
        return Err(Error::InvalidArgument(format!("pairwise tests need at least 2 groups, got {s}")));
    }
    let mut p_values = vec![vec![None; s]; s];
    let mut test_used = vec![vec![None; s]; s];
    let mut cells = Vec::new();
    for i in 0..s {
        p_values[i][i] = Some(1.0);
        for j in i + 1..s {
            let (kind, p) = compare_groups(&groups[i].1, &groups[j].1);
            test_used[i][j] = Some(kind);
            test_used[j][i] = Some(kind);
            p_values[i][j] = p;
            p_values[j][i] = p;
            if let Some(p) = p {
                cells.push((i, j, p));
            }
        }
    }
    let adjusted_flat = bh_fdr(&cells.iter().map(|c| c.2).collect::<Vec<_>>())?;
    let mut adjusted = vec![vec![None; s]; s];
    for i in 0..s {
        adjusted[i][i] = Some(1.0);
    }
    for (&(i, j, _), &q) in cells.iter().zip(&adjusted_flat) {
        adjusted[i][j] = Some(q);
        adjusted[j][i] = Some(q);
    }
    Ok(TestMatrix {
        names: groups.iter().map(|g| g.0.clone()).collect(),
        p_values,
        adjusted,
        test_used,
    })
}
