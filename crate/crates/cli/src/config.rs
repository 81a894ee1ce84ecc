//! Flat TOML run configuration.
//!
//! ```toml
//! preset = "paper-4x4"      # built-in name or path to a matrix file
//! alpha = 0.5
//! beta = 0.4
//! sigma_e2 = [0.002, 0.01]  # a single value is fine too
//! snr_sr_db = 30.0
//! snr_rd_db = [10, 20, 30]
//! source_power = 4.0
//! relay_power = 4.0
//! streams = 4
//! tol_mse = 1e-6
//! max_iters = 100
//! n_symbols = 10000
//! n_realizations = 100
//! seed = 1
//! ```
//!
//! Every key is optional. Unknown keys are rejected.

use std::path::Path;

use afrelay::channel::CorrelationParams;
use afrelay::design::DesignConfig;
use afrelay::objective::PowerBudget;
use afrelay::simulate::SweepConfig;
use afrelay::validate::ValidationConfig;
use serde::Deserialize;

/// A scalar or a list of scalars.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Values {
    One(f64),
    Many(Vec<f64>),
}

impl Values {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Values::One(v) => vec![*v],
            Values::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub sigma_e2: Option<Values>,
    pub snr_sr_db: Option<f64>,
    pub snr_rd_db: Option<Values>,
    pub source_power: Option<f64>,
    pub relay_power: Option<f64>,
    pub streams: Option<usize>,
    pub tol_mse: Option<f64>,
    pub tol_power: Option<f64>,
    pub tol_lambda: Option<f64>,
    pub tol_qmp: Option<f64>,
    pub max_iters: Option<usize>,
    pub n_symbols: Option<usize>,
    pub n_realizations: Option<usize>,
    pub seed: Option<u64>,
    pub covariance_samples: Option<usize>,
    pub mse_trials: Option<usize>,
    pub instances: Option<usize>,
    pub feasible_points: Option<usize>,
}

/// Everything needed for a single design run.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignPoint {
    pub preset: String,
    pub correlation: CorrelationParams,
    pub snr_sr_db: f64,
    pub snr_rd_db: f64,
    pub streams: usize,
    pub budget: PowerBudget,
    pub design: DesignConfig,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn budget(&self) -> PowerBudget {
        PowerBudget {
            source: self.source_power.unwrap_or(4.0),
            relay: self.relay_power.unwrap_or(4.0),
        }
    }

    fn design(&self) -> DesignConfig {
        let d = DesignConfig::default();
        DesignConfig {
            tol_mse: self.tol_mse.unwrap_or(d.tol_mse),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol_power: self.tol_power.unwrap_or(d.tol_power),
            tol_lambda: self.tol_lambda.unwrap_or(d.tol_lambda),
            tol_qmp: self.tol_qmp.unwrap_or(d.tol_qmp),
        }
    }

    fn single(values: &Option<Values>, key: &str, default: f64) -> Result<f64, String> {
        match values.as_ref().map(Values::to_vec).as_deref() {
            None => Ok(default),
            Some([v]) => Ok(*v),
            Some(vs) => Err(format!(
                "{key} must be a single value here, got {}",
                vs.len()
            )),
        }
    }

    /// Design and validation take one `sigma_e2` and one `snr_rd_db`.
    pub fn design_point(&self) -> Result<DesignPoint, String> {
        Ok(DesignPoint {
            preset: self.preset.clone().unwrap_or_else(|| "paper-4x4".into()),
            correlation: CorrelationParams {
                alpha: self.alpha.unwrap_or(0.5),
                beta: self.beta.unwrap_or(0.4),
                sigma_e2: Self::single(&self.sigma_e2, "sigma_e2", 0.01)?,
            },
            snr_sr_db: self.snr_sr_db.unwrap_or(30.0),
            snr_rd_db: Self::single(&self.snr_rd_db, "snr_rd_db", 20.0)?,
            streams: self.streams.unwrap_or(4),
            budget: self.budget(),
            design: self.design(),
        })
    }

    pub fn sweep(&self) -> SweepConfig {
        let d = SweepConfig::default();
        SweepConfig {
            preset: self.preset.clone().unwrap_or(d.preset),
            snr_rd_db: self.snr_rd_db.as_ref().map_or(d.snr_rd_db, Values::to_vec),
            sigma_e2: self.sigma_e2.as_ref().map_or(d.sigma_e2, Values::to_vec),
            snr_sr_db: self.snr_sr_db.unwrap_or(d.snr_sr_db),
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            streams: self.streams.unwrap_or(d.streams),
            n_symbols: self.n_symbols.unwrap_or(d.n_symbols),
            n_realizations: self.n_realizations.unwrap_or(d.n_realizations),
            seed: self.seed.unwrap_or(d.seed),
            budget: self.budget(),
            design: self.design(),
        }
    }

    pub fn validation(&self) -> Result<ValidationConfig, String> {
        let p = self.design_point()?;
        let d = ValidationConfig::default();
        Ok(ValidationConfig {
            preset: p.preset,
            correlation: p.correlation,
            snr_sr_db: p.snr_sr_db,
            snr_rd_db: p.snr_rd_db,
            streams: p.streams,
            budget: p.budget,
            design: p.design,
            seed: self.seed.unwrap_or(d.seed),
            covariance_samples: self.covariance_samples.unwrap_or(d.covariance_samples),
            mse_trials: self.mse_trials.unwrap_or(d.mse_trials),
            instances: self.instances.unwrap_or(d.instances),
            feasible_points: self.feasible_points.unwrap_or(d.feasible_points),
        })
    }
}
