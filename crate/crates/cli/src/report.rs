//! Report schemas: `fit.json`, `providers.csv` rows and posterior grids.

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use nalgebra::DMatrix;
use provconf_core::pseudo_bayes::{flag_from_z, PosteriorR};
use provconf_core::summary_model::{corrected_z, naive_z, FamilyKind};
use provconf_core::{
    corrected_posterior, flag_from_cdf, lambda_posterior, nu_posterior, original_posterior, ConfoundingParams, EnFit,
    Family, Flag, InitEstimate, NullInterval, NuPosterior, ProviderSummary,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Bumped whenever a key or column is added, removed or renamed.
pub const SCHEMA_VERSION: u32 = 1;

pub const PROVIDER_COLUMNS: [&str; 16] = [
    "id",
    "z_naive",
    "z_corrected",
    "A",
    "B",
    "in_null_set",
    "r_median_orig",
    "r_lo_orig",
    "r_hi_orig",
    "r_median_adj",
    "r_lo_adj",
    "r_hi_adj",
    "flag_freq_naive",
    "flag_freq_adj",
    "flag_bayes_naive",
    "flag_bayes_adj",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub pi0: f64,
    pub loglik: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    pub schema_version: u32,
    pub family: FamilyKind,
    pub dispersion: f64,
    pub nu_hat: Vec<f64>,
    pub standard_errors: Option<Vec<f64>>,
    /// Wald intervals at the configured flag level, one `[lower, upper]` per coefficient.
    pub wald_ci: Option<Vec<[f64; 2]>>,
    pub sigma2_alpha_hat: f64,
    pub pi0_hat: f64,
    pub null_count: usize,
    pub n_providers: usize,
    pub loglik: f64,
    pub converged: bool,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub covariate_names: Vec<String>,
    pub centers: Vec<f64>,
    pub init: InitEstimate,
    pub profile: Vec<ProfilePoint>,
    pub provider_ids: Vec<String>,
    pub null_intervals: Vec<[f64; 2]>,
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn new(fit: &EnFit, providers: &[ProviderSummary], names: &[String], centers: &[f64], config: &RunConfig, mut warnings: Vec<String>) -> Self {
        let crit = provconf_core::pseudo_bayes::critical_value(config.flag_level);
        let se = fit.standard_errors();
        let wald_ci = se.as_ref().map(|se| fit.params.nu.iter().zip(se).map(|(v, s)| [v - crit * s, v + crit * s]).collect());
        warnings.extend(fit.warnings.iter().cloned());
        FitReport {
            schema_version: SCHEMA_VERSION,
            family: config.family,
            dispersion: config.dispersion,
            nu_hat: fit.params.nu.clone(),
            standard_errors: se,
            wald_ci,
            sigma2_alpha_hat: fit.params.sigma2_alpha,
            pi0_hat: fit.pi0,
            null_count: fit.null_count(),
            n_providers: providers.len(),
            loglik: fit.loglik,
            converged: fit.converged,
            covariance: fit.covariance.as_ref().map(|c| c.row_iter().map(|r| r.iter().copied().collect()).collect()),
            covariate_names: names.to_vec(),
            centers: centers.to_vec(),
            init: fit.init.clone(),
            profile: fit.profile.iter().map(|(pi0, ll)| ProfilePoint { pi0: *pi0, loglik: *ll }).collect(),
            provider_ids: providers.iter().map(|p| p.id.clone()).collect(),
            null_intervals: fit.intervals.iter().map(|iv| [iv.lower, iv.upper]).collect(),
            config: config.clone(),
            warnings,
        }
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let report: FitReport = serde_json::from_str(&text)?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "{}: schema version {} is not supported (expected {SCHEMA_VERSION})",
                path.display(),
                report.schema_version
            )));
        }
        Ok(report)
    }

    pub fn params(&self) -> ConfoundingParams {
        ConfoundingParams { nu: self.nu_hat.clone(), sigma2_alpha: self.sigma2_alpha_hat }
    }

    pub fn family(&self) -> CliResult<Family> {
        Ok(Family::new(self.family, self.dispersion)?)
    }

    pub fn covariance_matrix(&self) -> Option<DMatrix<f64>> {
        let rows = self.covariance.as_ref()?;
        let p = rows.len();
        Some(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    /// Saved interval for `id`, if that provider was part of the fit.
    pub fn interval_for(&self, id: &str) -> Option<NullInterval> {
        let i = self.provider_ids.iter().position(|p| p == id)?;
        let [lower, upper] = self.null_intervals[i];
        Some(NullInterval { lower, upper })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderRow {
    pub id: String,
    pub z_naive: f64,
    pub z_corrected: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub in_null_set: bool,
    pub r_median_orig: Option<f64>,
    pub r_lo_orig: Option<f64>,
    pub r_hi_orig: Option<f64>,
    pub r_median_adj: Option<f64>,
    pub r_lo_adj: Option<f64>,
    pub r_hi_adj: Option<f64>,
    pub flag_freq_naive: Flag,
    pub flag_freq_adj: Flag,
    pub flag_bayes_naive: Option<Flag>,
    pub flag_bayes_adj: Option<Flag>,
}

/// Everything needed to score providers against a fitted model.
pub struct Scorer<'a> {
    pub family: Family,
    pub params: ConfoundingParams,
    pub nu_post: Option<NuPosterior>,
    pub config: &'a RunConfig,
}

impl<'a> Scorer<'a> {
    pub fn new(report: &FitReport, config: &'a RunConfig) -> CliResult<Self> {
        let family = report.family()?;
        let nu_post = match report.covariance_matrix() {
            Some(cov) if family.kind != FamilyKind::Normal => {
                let prior = config.prior_matrix(report.nu_hat.len())?;
                Some(nu_posterior(&report.nu_hat, &cov, &prior)?)
            }
            _ => None,
        };
        Ok(Self { family, params: report.params(), nu_post, config })
    }

    /// Count posteriors exist for count families with a covariance estimate.
    pub fn bayes_available(&self) -> bool {
        self.nu_post.is_some()
    }

    pub fn posteriors(&self, p: &ProviderSummary) -> CliResult<Option<(PosteriorR, PosteriorR)>> {
        let Some(nu_post) = &self.nu_post else { return Ok(None) };
        let prior = self.config.gamma_prior();
        let orig = original_posterior(p, prior)?;
        let lam = lambda_posterior(p, nu_post, self.params.sigma2_alpha)?;
        let adj = corrected_posterior(p, lam, self.config.quadrature_nodes, prior)?;
        Ok(Some((orig, adj)))
    }

    pub fn row(&self, p: &ProviderSummary, interval: NullInterval) -> CliResult<ProviderRow> {
        let level = self.config.flag_level;
        let z_naive = naive_z(p, &self.family)?;
        let z_corrected = corrected_z(p, &self.family, &self.params)?;
        let mut row = ProviderRow {
            id: p.id.clone(),
            z_naive,
            z_corrected,
            a: interval.lower,
            b: interval.upper,
            in_null_set: interval.contains(z_naive),
            r_median_orig: None,
            r_lo_orig: None,
            r_hi_orig: None,
            r_median_adj: None,
            r_lo_adj: None,
            r_hi_adj: None,
            flag_freq_naive: flag_from_z(z_naive, level),
            flag_freq_adj: flag_from_z(z_corrected, level),
            flag_bayes_naive: None,
            flag_bayes_adj: None,
        };
        if let Some((orig, adj)) = self.posteriors(p)? {
            let (lo, hi) = orig.credible_interval(level)?;
            row.r_median_orig = Some(orig.median()?);
            row.r_lo_orig = Some(lo);
            row.r_hi_orig = Some(hi);
            let (lo, hi) = adj.credible_interval(level)?;
            row.r_median_adj = Some(adj.median()?);
            row.r_lo_adj = Some(lo);
            row.r_hi_adj = Some(hi);
            row.flag_bayes_naive = Some(flag_from_cdf(&orig, level)?);
            row.flag_bayes_adj = Some(flag_from_cdf(&adj, level)?);
        }
        Ok(row)
    }

    /// Rows in input order; providers are scored in parallel.
    pub fn table(&self, providers: &[ProviderSummary], intervals: &[NullInterval]) -> CliResult<Vec<ProviderRow>> {
        providers.par_iter().zip(intervals).map(|(p, iv)| self.row(p, *iv)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorPoint {
    pub r: f64,
    pub pdf_orig: f64,
    pub pdf_adj: f64,
    pub cdf_orig: f64,
    pub cdf_adj: f64,
}

/// Density and CDF of both posteriors on `(0, r_max]`, where `r_max` is the
/// larger 99.9% quantile.
pub fn posterior_grid(orig: &PosteriorR, adj: &PosteriorR, points: usize) -> CliResult<Vec<PosteriorPoint>> {
    let r_max = orig.quantile(0.999)?.max(adj.quantile(0.999)?);
    Ok((1..=points)
        .map(|k| {
            let r = r_max * k as f64 / points as f64;
            PosteriorPoint { r, pdf_orig: orig.pdf(r), pdf_adj: adj.pdf(r), cdf_orig: orig.cdf(r), cdf_adj: adj.cdf(r) }
        })
        .collect())
}

/// File-system-safe form of a provider id.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}
