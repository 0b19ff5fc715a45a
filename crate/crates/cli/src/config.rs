//! Run configuration, read from TOML with every default materialized.

use crate::error::{CliError, CliResult};
use nalgebra::DMatrix;
use provconf_core::en_fit::pi0_grid;
use provconf_core::pseudo_bayes::DEFAULT_NODES;
use provconf_core::summary_model::FamilyKind;
use provconf_core::{CovarianceForm, Family, FitConfig, FitMode, GammaPrior, DEFAULT_HUBER_TUNING};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilyKind,
    pub dispersion: f64,
    pub pi0_min: f64,
    pub pi0_max: f64,
    pub pi0_points: usize,
    pub interval_multiplier: f64,
    pub huber_tuning: f64,
    pub refit_intervals: usize,
    pub covariance_form: CovarianceForm,
    /// Diagonal of the normal prior on ν; ignored when `prior_covariance` is set.
    pub prior_variance: f64,
    /// Full prior covariance, row-major.
    pub prior_covariance: Option<Vec<Vec<f64>>>,
    pub quadrature_nodes: usize,
    pub flag_level: f64,
    pub gamma_prior_shape: f64,
    pub gamma_prior_rate: f64,
    pub posterior_grid_points: usize,
    pub posterior_ids: Vec<String>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            family: FamilyKind::Poisson,
            dispersion: 1.0,
            pi0_min: 0.02,
            pi0_max: 1.0,
            pi0_points: 50,
            interval_multiplier: 1.96,
            huber_tuning: DEFAULT_HUBER_TUNING,
            refit_intervals: 0,
            covariance_form: CovarianceForm::Linearized,
            prior_variance: 1.0,
            prior_covariance: None,
            quadrature_nodes: DEFAULT_NODES,
            flag_level: 0.05,
            gamma_prior_shape: 2.0,
            gamma_prior_rate: 2.0,
            posterior_grid_points: 200,
            posterior_ids: Vec::new(),
            output_dir: PathBuf::from("out"),
            seed: 1,
        }
    }
}

fn bad<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.family()?;
        if !(self.pi0_min > 0.0 && self.pi0_min <= self.pi0_max && self.pi0_max <= 1.0) {
            return bad(format!("π₀ bounds must satisfy 0 < min ≤ max ≤ 1, got [{}, {}]", self.pi0_min, self.pi0_max));
        }
        if self.pi0_points == 0 {
            return bad("pi0_points must be at least 1");
        }
        if !(self.flag_level > 0.0 && self.flag_level < 1.0) {
            return bad(format!("flag_level must lie in (0, 1), got {}", self.flag_level));
        }
        if self.quadrature_nodes < 8 {
            return bad(format!("quadrature_nodes must be at least 8, got {}", self.quadrature_nodes));
        }
        if !(self.prior_variance > 0.0 && self.prior_variance.is_finite()) {
            return bad("prior_variance must be positive");
        }
        if !(self.gamma_prior_shape > 0.0 && self.gamma_prior_rate > 0.0) {
            return bad("Gamma prior shape and rate must be positive");
        }
        if self.posterior_grid_points < 2 {
            return bad("posterior_grid_points must be at least 2");
        }
        if let Some(rows) = &self.prior_covariance {
            if rows.iter().any(|r| r.len() != rows.len()) {
                return bad("prior_covariance must be square");
            }
        }
        self.fit_config().validate()?;
        Ok(())
    }

    pub fn family(&self) -> CliResult<Family> {
        Ok(Family::new(self.family, self.dispersion)?)
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            pi0_grid: pi0_grid(self.pi0_min, self.pi0_max, self.pi0_points),
            interval_multiplier: self.interval_multiplier,
            huber_tuning: self.huber_tuning,
            refit_intervals: self.refit_intervals,
            covariance_form: self.covariance_form,
            mode: FitMode::EmpiricalNull,
            ..FitConfig::default()
        }
    }

    pub fn gamma_prior(&self) -> GammaPrior {
        GammaPrior { shape: self.gamma_prior_shape, rate: self.gamma_prior_rate }
    }

    pub fn prior_matrix(&self, p: usize) -> CliResult<DMatrix<f64>> {
        match &self.prior_covariance {
            Some(rows) => {
                if rows.len() != p {
                    return bad(format!("prior_covariance is {0}×{0} but there are {p} covariates", rows.len()));
                }
                Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
            }
            None => Ok(DMatrix::identity(p, p) * self.prior_variance),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.fit_config().pi0_grid.len(), 50);
    }

    #[test]
    fn rejects_out_of_range_values() {
        for text in ["flag_level = 1.5", "quadrature_nodes = 4", "pi0_min = 0.0", "dispersion = -1.0", "bogus = 1"] {
            let parsed: Result<RunConfig, _> = toml::from_str(text);
            let failed = match parsed {
                Err(_) => true,
                Ok(cfg) => cfg.validate().is_err(),
            };
            assert!(failed, "{text}");
        }
    }

    #[test]
    fn explicit_prior_covariance() {
        let cfg: RunConfig = toml::from_str("prior_covariance = [[2.0, 0.5], [0.5, 1.0]]").unwrap();
        let m = cfg.prior_matrix(2).unwrap();
        assert_eq!(m[(0, 1)], 0.5);
        assert!(cfg.prior_matrix(3).is_err());
    }
}
