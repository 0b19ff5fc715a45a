//! Simulation laboratory: synthetic provider datasets generated at the
//! patient level, and Monte-Carlo summaries of estimation and flagging.
//!
//! Each replicate owns a ChaCha20 stream selected by its index, so results
//! do not depend on how replicates are scheduled across threads.

use crate::en_fit::{fit, FitConfig, FitMode};
use crate::error::{Error, Result};
use crate::pseudo_bayes::{
    corrected_posterior, flag_from_cdf, flag_from_z, lambda_posterior, nu_posterior, original_posterior, Flag,
    FlagMethod, GammaPrior, DEFAULT_NODES,
};
use crate::summary_model::{corrected_z, naive_z, ConfoundingParams, Family, FamilyKind, ProviderSummary};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Linear predictors above this overflow the Poisson sampler's useful range.
pub const MAX_LINEAR_PREDICTOR: f64 = 30.0;
/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_SHARE: f64 = 0.10;

/// Overrides for provider 0, the single target of the flagging study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub w: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    pub n_providers: usize,
    pub n_per_provider: usize,
    pub family: FamilyKind,
    pub dispersion: f64,
    pub nu: Vec<f64>,
    pub sigma2_alpha: f64,
    pub outlier_proportion: f64,
    pub outlier_effect: f64,
    pub outlier_w_coupling: f64,
    pub mu_star: f64,
    pub beta: Vec<f64>,
    pub target: Option<TargetSpec>,
    pub seed: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            n_providers: 200,
            n_per_provider: 100,
            family: FamilyKind::Poisson,
            dispersion: 1.0,
            nu: vec![0.25],
            sigma2_alpha: 0.1,
            outlier_proportion: 0.0,
            outlier_effect: 2.0,
            outlier_w_coupling: 0.5,
            mu_star: 0.0,
            beta: vec![0.3],
            target: None,
            seed: 1,
        }
    }
}

impl SimScenario {
    pub fn family(&self) -> Result<Family> {
        Family::new(self.family, self.dispersion)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.n_providers < 2 {
            return bad(format!("need at least 2 providers, got {}", self.n_providers));
        }
        if self.n_per_provider == 0 {
            return bad("n_per_provider must be positive".into());
        }
        if !(0.0..1.0).contains(&self.outlier_proportion) {
            return bad(format!("outlier_proportion must lie in [0, 1), got {}", self.outlier_proportion));
        }
        if !(self.sigma2_alpha >= 0.0 && self.sigma2_alpha.is_finite()) {
            return bad("sigma2_alpha must be nonnegative".into());
        }
        if self.family == FamilyKind::QuasiPoisson && !(self.dispersion > 1.0) {
            return bad("simulated quasi-Poisson counts need dispersion > 1".into());
        }
        if let Some(t) = &self.target {
            if t.w.len() != self.nu.len() {
                return bad("target covariate length differs from ν".into());
            }
        }
        self.family().map_err(|e| Error::Scenario(e.to_string()))?;
        Ok(())
    }

    /// Number of outlying providers; they occupy the last indices.
    pub fn outlier_count(&self) -> usize {
        let k = (self.outlier_proportion * self.n_providers as f64).round() as usize;
        k.min(self.n_providers - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreScenario {
    pub n_providers: usize,
    pub n_per_provider: usize,
    pub xi: f64,
    pub sigma2_tau: f64,
    pub contamination: f64,
    /// Mean and variance of the provider-level covariate mean `m_X`.
    pub x_mean_dist: (f64, f64),
    pub x_within_variance: f64,
    pub mu_star: f64,
    pub beta: f64,
    pub sigma2_eps: f64,
    /// Outlying `τᵢ` are shifted by `± outlier_shift · σ_τ`.
    pub outlier_shift: f64,
    pub seed: u64,
}

impl Default for CreScenario {
    fn default() -> Self {
        Self {
            n_providers: 200,
            n_per_provider: 50,
            xi: 0.25,
            sigma2_tau: 0.1,
            contamination: 0.0,
            x_mean_dist: (-0.4, 0.25),
            x_within_variance: 0.25,
            mu_star: -6.0,
            beta: 1.0,
            sigma2_eps: 1.0,
            outlier_shift: 5.0,
            seed: 1,
        }
    }
}

impl CreScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.n_providers < 2 || self.n_per_provider == 0 {
            return bad("need at least 2 providers with at least one patient each".into());
        }
        if !(0.0..1.0).contains(&self.contamination) {
            return bad(format!("contamination must lie in [0, 1), got {}", self.contamination));
        }
        if !(self.sigma2_tau > 0.0 && self.x_within_variance > 0.0 && self.sigma2_eps > 0.0 && self.x_mean_dist.1 >= 0.0)
        {
            return bad("variances must be positive".into());
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        ((self.contamination * self.n_providers as f64).round() as usize).min(self.n_providers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Glm(SimScenario),
    Cre(CreScenario),
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        match self {
            Scenario::Glm(s) => s.validate(),
            Scenario::Cre(s) => s.validate(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Scenario::Glm(s) => s.seed,
            Scenario::Cre(s) => s.seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            Scenario::Glm(s) => s.seed = seed,
            Scenario::Cre(s) => s.seed = seed,
        }
        self
    }

    pub fn family(&self) -> Result<Family> {
        match self {
            Scenario::Glm(s) => s.family(),
            Scenario::Cre(s) => Family::normal(s.sigma2_eps),
        }
    }

    /// True `(ν, σ²_α)`; for CRE data these are `(ξ, σ²_τ)`.
    pub fn truth(&self) -> (Vec<f64>, f64) {
        match self {
            Scenario::Glm(s) => (s.nu.clone(), s.sigma2_alpha),
            Scenario::Cre(s) => (vec![s.xi], s.sigma2_tau),
        }
    }

    pub fn generate(&self, rng: &mut ChaCha20Rng) -> Result<SimDataset> {
        match self {
            Scenario::Glm(s) => generate(s, rng),
            Scenario::Cre(s) => generate_cre(s, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub is_null: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub providers: Vec<ProviderSummary>,
    pub truth: Truth,
}

/// RNG for replicate `rep` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn std_normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws one outcome given the true linear predictor `theta`.
fn draw_outcome(family: &Family, theta: f64, rng: &mut ChaCha20Rng) -> Result<f64> {
    match family.kind {
        FamilyKind::Normal => Ok(theta + family.dispersion.sqrt() * std_normal(rng)),
        kind => {
            if theta > MAX_LINEAR_PREDICTOR {
                return Err(Error::Scenario(format!(
                    "linear predictor {theta:.2} exceeds {MAX_LINEAR_PREDICTOR}; Poisson rate would overflow"
                )));
            }
            let mut mean = theta.exp();
            if kind == FamilyKind::QuasiPoisson {
                // Gamma-Poisson counts with variance ψ·mean.
                let scale = family.dispersion - 1.0;
                mean = Gamma::new(mean / scale, scale).map_err(|e| Error::Scenario(e.to_string()))?.sample(rng);
            }
            if mean <= 0.0 {
                return Ok(0.0);
            }
            Ok(Poisson::new(mean).map_err(|e| Error::Scenario(e.to_string()))?.sample(rng))
        }
    }
}

/// Generates a provider dataset from the patient-level model.
pub fn generate(s: &SimScenario, rng: &mut ChaCha20Rng) -> Result<SimDataset> {
    s.validate()?;
    let family = s.family()?;
    let p = s.nu.len();
    let n_out = s.outlier_count();
    let sd_alpha = s.sigma2_alpha.sqrt();
    let mut providers = Vec::with_capacity(s.n_providers);
    let mut truth = Truth {
        gamma: Vec::with_capacity(s.n_providers),
        alpha: Vec::with_capacity(s.n_providers),
        is_null: Vec::with_capacity(s.n_providers),
    };
    for i in 0..s.n_providers {
        let mut w: Vec<f64> = (0..p).map(|_| std_normal(rng)).collect();
        let alpha = sd_alpha * std_normal(rng);
        let outlier = i >= s.n_providers - n_out;
        let mut gamma = if outlier { s.outlier_effect + s.outlier_w_coupling * w.first().copied().unwrap_or(0.0) } else { 0.0 };
        if i == 0 {
            if let Some(t) = &s.target {
                w = t.w.clone();
                gamma = t.gamma;
            }
        }
        let shift = gamma + w.iter().zip(&s.nu).map(|(a, b)| a * b).sum::<f64>() + alpha;

        let (mut o, mut e, mut n_eff) = (0.0, 0.0, 0.0);
        for _ in 0..s.n_per_provider {
            let xb: f64 = s.beta.iter().map(|b| b * std_normal(rng)).sum();
            let theta0 = s.mu_star + xb;
            o += draw_outcome(&family, theta0 + shift, rng)?;
            match family.kind {
                FamilyKind::Normal => {
                    e += theta0;
                    n_eff += 1.0;
                }
                _ => {
                    e += theta0.exp();
                    n_eff += theta0.exp();
                }
            }
        }
        let mut prov = ProviderSummary::new(format!("sim{i:04}"), o, e, n_eff, w);
        prov = match family.kind {
            FamilyKind::Normal => prov.with_n_patients(s.n_per_provider as u32),
            // For log-link counts b''' = b''.
            _ => prov.with_b3_sum(n_eff),
        };
        providers.push(prov);
        truth.gamma.push(gamma);
        truth.alpha.push(alpha);
        truth.is_null.push(gamma == 0.0);
    }
    Ok(SimDataset { providers, truth })
}

/// Generates a Normal-outcome correlated-random-effects dataset with the
/// centred covariate means as the provider-level confounder.
pub fn generate_cre(s: &CreScenario, rng: &mut ChaCha20Rng) -> Result<SimDataset> {
    s.validate()?;
    let n_out = s.outlier_count();
    let sd_tau = s.sigma2_tau.sqrt();
    let sd_within = s.x_within_variance.sqrt();
    let sd_eps = s.sigma2_eps.sqrt();
    let mx = Normal::new(s.x_mean_dist.0, s.x_mean_dist.1.sqrt()).map_err(|e| Error::Scenario(e.to_string()))?;

    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(s.n_providers);
    let mut taus = Vec::with_capacity(s.n_providers);
    for i in 0..s.n_providers {
        let m: f64 = mx.sample(rng);
        xs.push((0..s.n_per_provider).map(|_| m + sd_within * std_normal(rng)).collect());
        let mut tau = sd_tau * std_normal(rng);
        if i >= s.n_providers - n_out {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            tau += sign * s.outlier_shift * sd_tau;
        }
        taus.push(tau);
    }
    let xbar: Vec<f64> = xs.iter().map(|x| x.iter().sum::<f64>() / x.len() as f64).collect();
    let grand = xbar.iter().sum::<f64>() / xbar.len() as f64;
    // The reference predictor absorbs the average between-provider effect,
    // so θ* - θ⁰ = ξ (X̄ᵢ - mean X̄) + τᵢ.
    let mu0 = s.mu_star + s.xi * grand;

    let mut providers = Vec::with_capacity(s.n_providers);
    let mut truth = Truth { gamma: vec![], alpha: vec![], is_null: vec![] };
    for (i, x) in xs.iter().enumerate() {
        let gamma = s.xi * xbar[i] + taus[i];
        let (mut o, mut e) = (0.0, 0.0);
        for xij in x {
            o += s.mu_star + gamma + s.beta * xij + sd_eps * std_normal(rng);
            e += mu0 + s.beta * xij;
        }
        let n = s.n_per_provider;
        providers.push(
            ProviderSummary::new(format!("cre{i:04}"), o, e, n as f64, vec![xbar[i] - grand]).with_n_patients(n as u32),
        );
        truth.gamma.push(gamma);
        truth.alpha.push(taus[i]);
        truth.is_null.push(i < s.n_providers - n_out);
    }
    Ok(SimDataset { providers, truth })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    RppClc,
    NormalMle,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::RppClc => "rpp_clc",
            Estimator::NormalMle => "normal_mle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub estimators: Vec<Estimator>,
    pub flag_methods: Vec<FlagMethod>,
    pub fit: FitConfig,
    pub flag_level: f64,
    pub quadrature_nodes: usize,
    /// Diagonal of Σ_prior for ν.
    pub prior_variance: f64,
    pub gamma_prior: GammaPrior,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            estimators: vec![Estimator::RppClc],
            flag_methods: vec![],
            fit: FitConfig::default(),
            flag_level: 0.05,
            quadrature_nodes: DEFAULT_NODES,
            prior_variance: 1.0,
            gamma_prior: GammaPrior::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub estimator: Estimator,
    pub nu_hat: Vec<f64>,
    pub sigma2_alpha_hat: f64,
    pub pi0_hat: f64,
    /// Whether the 95% Wald interval for the first coefficient covers the truth.
    pub covers_nu: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub estimates: Vec<EstimateRecord>,
    pub flags: Vec<(FlagMethod, Flag)>,
}

/// One replicate: generate, fit, flag provider 0.
pub fn run_one(scenario: &Scenario, config: &SimConfig, rep: u64) -> Result<ReplicateRecord> {
    let mut rng = replicate_rng(scenario.seed(), rep);
    let data = scenario.generate(&mut rng)?;
    let family = scenario.family()?;
    let (nu_true, _) = scenario.truth();

    let mut estimates = Vec::new();
    let mut main_fit = None;
    for &est in &config.estimators {
        let mode = match est {
            Estimator::RppClc => FitMode::EmpiricalNull,
            Estimator::NormalMle => FitMode::NormalMle,
        };
        let cfg = FitConfig { mode, ..config.fit.clone() };
        let f = fit(&data.providers, &family, &cfg)?;
        let covers_nu = f.standard_errors().and_then(|se| {
            let (Some(s), Some(v), Some(t)) = (se.first(), f.params.nu.first(), nu_true.first()) else { return None };
            Some((v - t).abs() <= 1.959_963_984_540_054 * s)
        });
        estimates.push(EstimateRecord {
            estimator: est,
            nu_hat: f.params.nu.clone(),
            sigma2_alpha_hat: f.params.sigma2_alpha,
            pi0_hat: f.pi0,
            covers_nu,
        });
        if est == Estimator::RppClc {
            main_fit = Some(f);
        }
    }

    let mut flags = Vec::new();
    if !config.flag_methods.is_empty() {
        let f = match main_fit {
            Some(f) => f,
            None => fit(&data.providers, &family, &config.fit)?,
        };
        let target = &data.providers[0];
        let level = config.flag_level;
        for &method in &config.flag_methods {
            let flag = match method {
                FlagMethod::NaiveFrequentist => flag_from_z(naive_z(target, &family)?, level),
                FlagMethod::AdjustedFrequentist => flag_from_z(corrected_z(target, &family, &f.params)?, level),
                FlagMethod::NaiveBayes => flag_from_cdf(&original_posterior(target, config.gamma_prior)?, level)?,
                FlagMethod::AdjustedBayes => {
                    let p = f.params.nu.len();
                    let cov = f.covariance.clone().ok_or_else(|| {
                        Error::Validation("adjusted Bayesian flags need the sandwich covariance".into())
                    })?;
                    let prior = DMatrix::identity(p, p) * config.prior_variance;
                    let nu_post = nu_posterior(&f.params.nu, &cov, &prior)?;
                    let lam = lambda_posterior(target, &nu_post, f.params.sigma2_alpha)?;
                    let post = corrected_posterior(target, lam, config.quadrature_nodes, config.gamma_prior)?;
                    flag_from_cdf(&post, level)?
                }
            };
            flags.push((method, flag));
        }
    }
    Ok(ReplicateRecord { estimates, flags })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub bias_nu: f64,
    pub se_bias_nu: f64,
    pub mse_nu: f64,
    pub se_mse_nu: f64,
    pub bias_sigma2_alpha: f64,
    pub se_bias_sigma2_alpha: f64,
    pub mse_sigma2_alpha: f64,
    pub se_mse_sigma2_alpha: f64,
    pub mean_pi0: f64,
    pub coverage_nu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagSummary {
    pub method: FlagMethod,
    /// Flag rate when the target is null (any direction).
    pub ffp: Option<f64>,
    /// Rate of flags in the direction of the target's true effect.
    pub tfp: Option<f64>,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub n_reps: usize,
    pub n_failed: usize,
    pub estimators: Vec<EstimatorSummary>,
    pub flags: Vec<FlagSummary>,
    pub failure_messages: Vec<String>,
}

impl ReplicateMetrics {
    pub fn estimator(&self, e: Estimator) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.estimator == e)
    }

    pub fn flag(&self, m: FlagMethod) -> Option<&FlagSummary> {
        self.flags.iter().find(|s| s.method == m)
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `n_reps` independent replicates in parallel and summarizes them.
pub fn run_replicates(scenario: &Scenario, config: &SimConfig, n_reps: usize) -> Result<ReplicateMetrics> {
    if n_reps == 0 {
        return Err(Error::Validation("n_reps must be at least 1".into()));
    }
    scenario.validate()?;
    let records: Vec<Result<ReplicateRecord>> =
        (0..n_reps as u64).into_par_iter().map(|rep| run_one(scenario, config, rep)).collect();

    let mut ok = Vec::with_capacity(n_reps);
    let mut failure_messages = Vec::new();
    for (rep, r) in records.into_iter().enumerate() {
        match r {
            Ok(rec) => ok.push(rec),
            // Scenario errors are configuration problems, not replicate noise.
            Err(e @ Error::Scenario(_)) => return Err(e),
            Err(e) => failure_messages.push(format!("replicate {rep}: {e}")),
        }
    }
    let n_failed = failure_messages.len();
    if n_failed as f64 > MAX_FAILURE_SHARE * n_reps as f64 {
        return Err(Error::TooManyFailures { failed: n_failed, total: n_reps });
    }
    Ok(summarize(scenario, config, &ok, n_reps, failure_messages))
}

fn summarize(
    scenario: &Scenario,
    config: &SimConfig,
    records: &[ReplicateRecord],
    n_reps: usize,
    failure_messages: Vec<String>,
) -> ReplicateMetrics {
    let (nu_true, s2_true) = scenario.truth();
    let nu0 = nu_true.first().copied().unwrap_or(0.0);
    let estimators = config
        .estimators
        .iter()
        .map(|&est| {
            let rows: Vec<&EstimateRecord> =
                records.iter().filter_map(|r| r.estimates.iter().find(|e| e.estimator == est)).collect();
            let err_nu: Vec<f64> = rows.iter().map(|e| e.nu_hat.first().copied().unwrap_or(0.0) - nu0).collect();
            let err_s2: Vec<f64> = rows.iter().map(|e| e.sigma2_alpha_hat - s2_true).collect();
            let sq_nu: Vec<f64> = err_nu.iter().map(|d| d * d).collect();
            let sq_s2: Vec<f64> = err_s2.iter().map(|d| d * d).collect();
            let (bias_nu, se_bias_nu) = mean_and_se(&err_nu);
            let (mse_nu, se_mse_nu) = mean_and_se(&sq_nu);
            let (bias_s2, se_bias_s2) = mean_and_se(&err_s2);
            let (mse_s2, se_mse_s2) = mean_and_se(&sq_s2);
            let pis: Vec<f64> = rows.iter().map(|e| e.pi0_hat).collect();
            let cover: Vec<f64> =
                rows.iter().filter_map(|e| e.covers_nu).map(|c| if c { 1.0 } else { 0.0 }).collect();
            EstimatorSummary {
                estimator: est,
                bias_nu,
                se_bias_nu,
                mse_nu,
                se_mse_nu,
                bias_sigma2_alpha: bias_s2,
                se_bias_sigma2_alpha: se_bias_s2,
                mse_sigma2_alpha: mse_s2,
                se_mse_sigma2_alpha: se_mse_s2,
                mean_pi0: mean_and_se(&pis).0,
                coverage_nu: if cover.is_empty() { None } else { Some(mean_and_se(&cover).0) },
            }
        })
        .collect();

    let target_gamma = match scenario {
        Scenario::Glm(s) => s.target.as_ref().map_or(0.0, |t| t.gamma),
        Scenario::Cre(_) => 0.0,
    };
    let flags = config
        .flag_methods
        .iter()
        .map(|&method| {
            let hits: Vec<f64> = records
                .iter()
                .filter_map(|r| r.flags.iter().find(|(m, _)| *m == method).map(|(_, f)| *f))
                .map(|f| {
                    let hit = if target_gamma == 0.0 {
                        f != Flag::Null
                    } else if target_gamma < 0.0 {
                        f == Flag::Low
                    } else {
                        f == Flag::High
                    };
                    if hit { 1.0 } else { 0.0 }
                })
                .collect();
            let rate = mean_and_se(&hits).0;
            let se = (rate * (1.0 - rate) / hits.len() as f64).sqrt();
            let (ffp, tfp) = if target_gamma == 0.0 { (Some(rate), None) } else { (None, Some(rate)) };
            FlagSummary { method, ffp, tfp, se }
        })
        .collect();

    ReplicateMetrics { n_reps, n_failed: n_reps - records.len(), estimators, flags, failure_messages }
}

/// Params of the data-generating model, for callers that need them as a
/// `ConfoundingParams`.
pub fn true_params(scenario: &Scenario) -> ConfoundingParams {
    let (nu, s2) = scenario.truth();
    ConfoundingParams { nu, sigma2_alpha: s2 }
}
