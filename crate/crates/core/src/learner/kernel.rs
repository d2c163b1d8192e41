use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sq_distances, Matrix};

/// RBF bandwidth: explicit σ or the median pairwise distance of the data.
/// Serialized as a number or the string `"median"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    Median,
}

impl Serialize for Bandwidth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Fixed(v) => s.serialize_f64(*v),
            Bandwidth::Median => s.serialize_str("median"),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Bandwidth::Fixed(v)),
            Raw::Text(t) if t == "median" => Ok(Bandwidth::Median),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "bandwidth must be a number or \"median\", got {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub bandwidth: Bandwidth,
}

impl KernelConfig {
    pub const LINEAR: KernelConfig = KernelConfig {
        kind: KernelKind::Linear,
        bandwidth: Bandwidth::Median,
    };

    pub fn rbf(bandwidth: Bandwidth) -> Self {
        KernelConfig {
            kind: KernelKind::Rbf,
            bandwidth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("kernel bandwidth must be > 0, got {s}")));
            }
        }
        Ok(())
    }

    /// Fix the bandwidth against the training rows.
    pub fn resolve(&self, z: MatRef<'_, f64>) -> Result<Kernel> {
        self.validate()?;
        Ok(match self.kind {
            KernelKind::Linear => Kernel::Linear,
            KernelKind::Rbf => Kernel::Rbf {
                sigma: match self.bandwidth {
                    Bandwidth::Fixed(s) => s,
                    Bandwidth::Median => median_pairwise_distance(z),
                },
            },
        })
    }
}

/// A kernel with every parameter fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Rbf { sigma: f64 },
}

impl Kernel {
    /// `K[i, j] = k(a_i, b_j)` over the rows of `a` and `b`.
    pub fn cross(&self, a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Matrix {
        match *self {
            Kernel::Linear => a * b.transpose(),
            Kernel::Rbf { sigma } => {
                let mut d = sq_distances(a, b);
                let scale = -1.0 / (2.0 * sigma * sigma);
                for j in 0..d.ncols() {
                    for i in 0..d.nrows() {
                        d[(i, j)] = (d[(i, j)] * scale).exp();
                    }
                }
                d
            }
        }
    }

    /// Symmetric Gram matrix of the rows of `z`.
    pub fn gram(&self, z: MatRef<'_, f64>) -> Matrix {
        let mut k = self.cross(z, z);
        let n = k.nrows();
        for j in 0..n {
            for i in 0..j {
                let v = 0.5 * (k[(i, j)] + k[(j, i)]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            if let Kernel::Rbf { .. } = self {
                k[(j, j)] = 1.0;
            }
        }
        k
    }
}

/// Median of pairwise Euclidean distances over distinct pairs; 1.0 when the
/// median is zero or there is a single row.
pub fn median_pairwise_distance(z: MatRef<'_, f64>) -> f64 {
    let n = z.nrows();
    if n < 2 {
        return 1.0;
    }
    let d = sq_distances(z, z);
    let mut vals = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for i in 0..j {
            vals.push(d[(i, j)]);
        }
    }
    let mid = vals.len() / 2;
    let (_, m, _) = vals.select_nth_unstable_by(mid, f64::total_cmp);
    let med = m.sqrt();
    if med > 0.0 && med.is_finite() {
        med
    } else {
        1.0
    }
}

/// Kernel matrix over the rows of `z`, with the bandwidth resolved from `z`.
pub fn build_kernel(z: MatRef<'_, f64>, config: &KernelConfig) -> Result<(Matrix, Kernel)> {
    if z.nrows() == 0 {
        return Err(Error::InvalidArgument("kernel needs at least one sample".into()));
    }
    let kernel = config.resolve(z)?;
    Ok((kernel.gram(z), kernel))
}

/// Convenience for tests and small fixtures.
pub fn from_rows(rows: &[&[f64]]) -> Matrix {
    Mat::from_fn(rows.len(), rows.first().map_or(0, |r| r.len()), |i, j| rows[i][j])
}
