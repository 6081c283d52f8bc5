use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DEFAULT_NOISE_HALF_WIDTH, ExperimentPlan, DEFAULT_T_LIST};
use crate::error::{Error, Result};

/// Flat key-value configuration read from TOML. Every key is optional.
///
/// ```toml
/// n_list = [2]
/// t_list = [100, 200, 400, 800, 1600]
/// reps = 10
/// seed = 2024
/// out = "out"
/// noise_half_width = 0.03
/// xi = 0.7142857142857143
/// c_tau = 1.0
/// kappa = 0.5
/// write_periods = true
/// require_uniqueness = true
/// n = 2          # simulate / ne-solve
/// horizon = 1600 # simulate
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_list: Vec<usize>,
    pub t_list: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub noise_half_width: f64,
    pub xi: f64,
    pub c_tau: f64,
    pub kappa: f64,
    pub write_periods: bool,
    pub require_uniqueness: bool,
    pub n: usize,
    pub horizon: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_list: vec![2],
            t_list: DEFAULT_T_LIST.to_vec(),
            reps: 10,
            seed: 2024,
            out: PathBuf::from("out"),
            noise_half_width: DEFAULT_NOISE_HALF_WIDTH,
            xi: 5.0 / 7.0,
            c_tau: 1.0,
            kappa: 0.5,
            write_periods: true,
            require_uniqueness: true,
            n: 2,
            horizon: 1600,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            n_list: self.n_list.clone(),
            t_list: self.t_list.clone(),
            replications: self.reps,
            seed: self.seed,
            out_dir: self.out.clone(),
            noise_half_width: self.noise_half_width,
            xi: self.xi,
            c_tau: self.c_tau,
            kappa: self.kappa,
            write_periods: self.write_periods,
            require_uniqueness: self.require_uniqueness,
        }
    }
}
