//! Optional JSON settings file, selected with `--config` or the
//! `ELASTIC_DS_CONFIG` environment variable. Unset fields keep the library
//! defaults; command-line flags override the file.

use std::path::Path;

use elastic_ds::{EigenScaling, PipelineConfig};
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::files::{read_json, ScalingJson};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub margin: Option<f64>,
    pub regularization: Option<f64>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub scaling: Option<ScalingJson>,
    pub pins_per_link: Option<usize>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => Ok(read_json(p)?.0),
            None => Ok(Self::default()),
        }
    }

    /// Pipeline configuration with `seed` taking precedence over the file.
    pub fn pipeline(&self, seed: Option<u64>) -> CliResult<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(v) = self.k_min {
            cfg.gmm.k_min = v;
        }
        if let Some(v) = self.k_max {
            cfg.gmm.k_max = v;
        }
        if let Some(v) = self.restarts {
            cfg.gmm.restarts = v;
        }
        if let Some(v) = seed.or(self.seed) {
            cfg.gmm.seed = v;
        }
        if let Some(v) = self.margin {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Validation(format!("margin must be positive, got {v}")));
            }
            cfg.estimate.margin = v;
        }
        if let Some(v) = self.regularization {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CliError::Validation(format!(
                    "regularization must be nonnegative, got {v}"
                )));
            }
            cfg.estimate.regularization = v;
        }
        if let Some(v) = self.max_iters {
            cfg.estimate.lbfgs.max_iters = v;
        }
        if let Some(v) = self.grad_tol {
            cfg.estimate.lbfgs.grad_tol = v;
        }
        if let Some(s) = self.scaling {
            cfg.scaling = EigenScaling::from(s);
        }
        cfg.pins_per_link = self.pins_per_link;
        Ok(cfg)
    }
}
