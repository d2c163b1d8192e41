//! Dimensionality reduction followed by the geodesic flow kernel.

mod gfk;
mod model;
mod tca;

pub use gfk::{fit_gfk, gfk_from_bases, lambda_coefficients, GeodesicKernel, SMALL_ANGLE};
pub use model::{load_model, save_model};
pub use tca::{fit_pca, fit_tca, PcaModel, TcaConfig, TcaModel};

use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Tca,
    Pca,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reducer {
    Tca(TcaModel),
    Pca(PcaModel),
}

impl Reducer {
    pub fn dim(&self) -> usize {
        match self {
            Reducer::Tca(m) => m.dim(),
            Reducer::Pca(m) => m.dim(),
        }
    }

    pub fn transform(&self, x: MatRef<'_, f64>) -> Result<Matrix> {
        match self {
            Reducer::Tca(m) => m.transform(x),
            Reducer::Pca(m) => m.transform(x),
        }
    }
}

/// Reduction plus kernel; maps raw features to manifold features.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    pub reducer: Reducer,
    pub kernel: GeodesicKernel,
}

impl ManifoldModel {
    /// Fit on `n` source rows followed by target rows of `x`. `q = None`
    /// picks half the reduced dimension.
    pub fn fit(x: MatRef<'_, f64>, n: usize, reduction: Reduction, tca: &TcaConfig, q: Option<usize>) -> Result<Self> {
        let reducer = match reduction {
            Reduction::Tca => Reducer::Tca(fit_tca(x, n, tca)?),
            Reduction::Pca => Reducer::Pca(fit_pca(x, tca.dim)?),
        };
        let reduced = reducer.transform(x)?;
        let d = reduced.ncols();
        let q = match q {
            Some(q) if 2 * q > d && d >= 2 => {
                log::warn!("subspace dimension {q} exceeds half the reduced dimension {d}; using {}", d / 2);
                d / 2
            }
            Some(q) => q,
            None => (d / 2).max(1),
        };
        let kernel = fit_gfk(reduced.subrows(0, n), reduced.subrows(n, x.nrows() - n), q)?;
        Ok(Self { reducer, kernel })
    }

    pub fn transform(&self, x: MatRef<'_, f64>) -> Result<Matrix> {
        self.kernel.transform(self.reducer.transform(x)?.as_ref())
    }
}
