//! Flat pipeline configuration read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::ADistanceConfig;
use crate::ensemble::EnsembleMethod;
use crate::error::{Error, Result};
use crate::learner::graph::GraphConfig;
use crate::learner::kernel::{Bandwidth, KernelConfig, KernelKind};
use crate::learner::solve::Regularization;
use crate::learner::weak::{WeakConfig, WeakKind};
use crate::manifold::{Reduction, TcaConfig};

/// Every knob of one pipeline run. Keys mirror the field names; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Reduced dimension before the geodesic kernel.
    pub d_tca: usize,
    /// Subspace dimension; half of the reduced dimension when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    pub reduction: Reduction,
    pub tca_kernel: KernelKind,
    pub tca_bandwidth: Bandwidth,
    pub tca_regularizer: f64,
    /// Classifier kernel.
    pub kernel: KernelKind,
    pub bandwidth: Bandwidth,
    pub eta: f64,
    pub lambda: f64,
    pub rho: f64,
    /// Neighbour count of the similarity graph.
    pub p: usize,
    /// Pseudo-labeling iterations.
    #[serde(alias = "l")]
    pub iterations: usize,
    pub weak: WeakKind,
    pub knn_k: usize,
    pub tree_depth: usize,
    pub ensemble: EnsembleMethod,
    pub decay: f64,
    /// Fixed adaptive factor; estimated every iteration when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            d_tca: 128,
            q: None,
            reduction: Reduction::Tca,
            tca_kernel: KernelKind::Linear,
            tca_bandwidth: Bandwidth::Median,
            tca_regularizer: 1.0,
            kernel: KernelKind::Rbf,
            bandwidth: Bandwidth::Median,
            eta: 0.1,
            lambda: 0.4,
            rho: 1.0,
            p: 10,
            iterations: 10,
            weak: WeakKind::Dtree,
            knn_k: 5,
            tree_depth: 10,
            ensemble: EnsembleMethod::default(),
            decay: 0.8,
            mu: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Compact JSON used as the config echo in output artifacts.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.d_tca == 0 {
            return bad("d_tca must be >= 1".into());
        }
        if let Some(q) = self.q {
            if q == 0 || 2 * q > self.d_tca {
                return bad(format!("q must lie in [1, d_tca/2 = {}], got {q}", self.d_tca / 2));
            }
        }
        if !(self.tca_regularizer > 0.0 && self.tca_regularizer.is_finite()) {
            return bad(format!("tca_regularizer must be > 0, got {}", self.tca_regularizer));
        }
        self.tca_kernel_config().validate()?;
        self.kernel_config().validate()?;
        self.regularization().validate()?;
        if self.p == 0 {
            return bad("p must be >= 1".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.knn_k == 0 || self.tree_depth == 0 {
            return bad("knn_k and tree_depth must be >= 1".into());
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        if let Some(mu) = self.mu {
            if !(0.0..=1.0).contains(&mu) {
                return bad(format!("mu must lie in [0, 1], got {mu}"));
            }
        }
        Ok(())
    }

    pub fn tca_kernel_config(&self) -> KernelConfig {
        KernelConfig {
            kind: self.tca_kernel,
            bandwidth: self.tca_bandwidth,
        }
    }

    pub fn tca_config(&self) -> TcaConfig {
        TcaConfig {
            dim: self.d_tca,
            kernel: self.tca_kernel_config(),
            regularizer: self.tca_regularizer,
        }
    }

    pub fn kernel_config(&self) -> KernelConfig {
        KernelConfig {
            kind: self.kernel,
            bandwidth: self.bandwidth,
        }
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            eta: self.eta,
            lambda: self.lambda,
            rho: self.rho,
        }
    }

    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig { p: self.p }
    }

    pub fn weak_config(&self) -> WeakConfig {
        WeakConfig {
            kind: self.weak,
            knn_k: self.knn_k,
            max_depth: self.tree_depth,
        }
    }

    pub fn a_distance_config(&self, seed: u64) -> ADistanceConfig {
        ADistanceConfig {
            seed,
            ..ADistanceConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(PipelineConfig::from_toml_str("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig {
            q: Some(8),
            mu: Some(0.5),
            bandwidth: Bandwidth::Fixed(2.5),
            ..Default::default()
        };
        assert_eq!(PipelineConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(PipelineConfig::from_toml_str(&PipelineConfig::default().to_toml()).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = PipelineConfig::from_toml_str("etta = 0.2").unwrap_err();
        assert!(err.to_string().contains("etta"), "{err}");
    }

    #[test]
    fn values_are_parsed() {
        let cfg = PipelineConfig::from_toml_str(
            "d_tca = 16\nl = 3\nweak = \"knn\"\nensemble = \"vote\"\nbandwidth = 2\nreduction = \"pca\"\nmu = 1.0\n",
        )
        .unwrap();
        assert_eq!(cfg.d_tca, 16);
        assert_eq!(cfg.iterations, 3);
        assert_eq!(cfg.weak, WeakKind::Knn);
        assert_eq!(cfg.ensemble, EnsembleMethod::Vote);
        assert_eq!(cfg.bandwidth, Bandwidth::Fixed(2.0));
        assert_eq!(cfg.reduction, Reduction::Pca);
        assert_eq!(cfg.mu, Some(1.0));
    }

    #[test]
    fn range_violations_are_rejected() {
        for text in ["eta = 0.0", "q = 65", "decay = 1.5", "mu = 2.0", "iterations = 0", "p = 0", "bandwidth = -1.0"] {
            assert!(PipelineConfig::from_toml_str(text).is_err(), "{text}");
        }
    }
}
