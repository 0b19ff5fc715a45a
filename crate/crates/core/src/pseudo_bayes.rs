//! Posterior of the measure ratio before and after the confounding
//! correction, credible intervals, and flag rules.
//!
//! The corrected posterior is a Gamma-Lognormal mixture,
//! `R* | λ ~ Gamma(O + a₀, E λ + b₀)` with `log λ ~ N(m, v)`. Its CDF and
//! density are integrated in `z = (log λ - m) / √v`. When the mixing
//! distribution is narrow compared with the Gamma kernel, plain
//! Gauss-Hermite is exact to many digits. When it is wide, the kernel is a
//! sharp ridge in `z` and the integral is taken with nodes centred on the
//! ridge instead.

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_integral, gauss_hermite, LogIntegrand};
use crate::special::{gamma_ln_pdf, gamma_p, norm_ln_cdf, norm_ln_pdf, norm_ln_sf, norm_quantile};
use crate::summary_model::ProviderSummary;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;

pub const DEFAULT_NODES: usize = 64;
pub const QUANTILE_REL_TOL: f64 = 1e-8;
/// Largest quantile change tolerated when the node count is doubled.
pub const QUADRATURE_TOL: f64 = 1e-4;

/// Conjugate Gamma prior on the measure ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self { shape: 2.0, rate: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuPosterior {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub prior_covariance: DMatrix<f64>,
}

/// Normal-normal update of ν given `ν̂ ~ N(ν, Σ_ν̂)` and `ν ~ N(0, Σ_prior)`.
pub fn nu_posterior(nu_hat: &[f64], sigma_nu_hat: &DMatrix<f64>, sigma_prior: &DMatrix<f64>) -> Result<NuPosterior> {
    let p = nu_hat.len();
    if sigma_nu_hat.shape() != (p, p) || sigma_prior.shape() != (p, p) {
        return Err(Error::Validation(format!("covariances must be {p}×{p}")));
    }
    if p == 0 {
        return Ok(NuPosterior {
            mean: vec![],
            covariance: DMatrix::zeros(0, 0),
            prior_covariance: sigma_prior.clone(),
        });
    }
    let nu = nalgebra::DVector::from_column_slice(nu_hat);
    let sum = sigma_prior + sigma_nu_hat;
    let sum_inv = sum
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularDesign("Σ_prior + Σ_ν̂ is not invertible".into()))?;
    let mean = sigma_prior * &sum_inv * nu;
    let precision_form = sigma_prior
        .clone()
        .cholesky()
        .zip(sigma_nu_hat.clone().cholesky())
        .map(|(a, b)| (a.inverse() + b.inverse()).try_inverse());
    let covariance = match precision_form {
        Some(Some(c)) => c,
        // Σ_prior (or Σ_ν̂) singular: Σ_p - Σ_p (Σ_p + Σ_ν̂)⁻¹ Σ_p avoids the inverse.
        _ => sigma_prior - sigma_prior * &sum_inv * sigma_prior,
    };
    let covariance = 0.5 * (&covariance + covariance.transpose());
    Ok(NuPosterior { mean: mean.as_slice().to_vec(), covariance, prior_covariance: sigma_prior.clone() })
}

/// `log Λ ~ N(log_mean, log_variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPosterior {
    pub log_mean: f64,
    pub log_variance: f64,
}

impl LambdaPosterior {
    pub fn new(log_mean: f64, log_variance: f64) -> Result<Self> {
        if !log_mean.is_finite() || !(log_variance >= 0.0 && log_variance.is_finite()) {
            return Err(Error::Validation(format!(
                "lognormal posterior needs finite mean and nonnegative variance, got ({log_mean}, {log_variance})"
            )));
        }
        Ok(Self { log_mean, log_variance })
    }
}

/// `Wᵢᵀ m_post` and `Wᵢᵀ Σ_post Wᵢ + σ²_α`.
pub fn lambda_posterior(provider: &ProviderSummary, nu: &NuPosterior, sigma2_alpha: f64) -> Result<LambdaPosterior> {
    let w = &provider.covariates;
    if w.len() != nu.mean.len() {
        return Err(Error::Validation(format!(
            "provider `{}` has {} covariates, ν has {}",
            provider.id,
            w.len(),
            nu.mean.len()
        )));
    }
    let wv = nalgebra::DVector::from_column_slice(w);
    let spread = (wv.transpose() * &nu.covariance * &wv)[(0, 0)].max(0.0);
    LambdaPosterior::new(provider.linear_index(&nu.mean), spread + sigma2_alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorKind {
    OriginalGamma,
    CorrectedMixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorR {
    pub kind: PosteriorKind,
    pub shape: f64,
    /// `E + b₀` for the original posterior; `E` for the mixture.
    pub rate_base: f64,
    pub prior: GammaPrior,
    pub lambda: Option<LambdaPosterior>,
    pub quadrature_nodes: usize,
}

/// `Gamma(O + a₀, E + b₀)`.
pub fn original_posterior(provider: &ProviderSummary, prior: GammaPrior) -> Result<PosteriorR> {
    check_counts(provider)?;
    Ok(PosteriorR {
        kind: PosteriorKind::OriginalGamma,
        shape: provider.observed + prior.shape,
        rate_base: provider.expected + prior.rate,
        prior,
        lambda: None,
        quadrature_nodes: 0,
    })
}

/// Gamma-Lognormal mixture `∫ Gamma(r; O + a₀, E λ + b₀) f_Λ(λ) dλ`.
pub fn corrected_posterior(
    provider: &ProviderSummary,
    lambda: LambdaPosterior,
    nodes: usize,
    prior: GammaPrior,
) -> Result<PosteriorR> {
    check_counts(provider)?;
    if nodes < 8 {
        return Err(Error::Validation(format!("at least 8 quadrature nodes are required, got {nodes}")));
    }
    Ok(PosteriorR {
        kind: PosteriorKind::CorrectedMixture,
        shape: provider.observed + prior.shape,
        rate_base: provider.expected,
        prior,
        lambda: Some(lambda),
        quadrature_nodes: nodes,
    })
}

fn check_counts(provider: &ProviderSummary) -> Result<()> {
    if !(provider.observed >= 0.0 && provider.observed.is_finite()) {
        return Err(Error::Validation(format!("provider `{}`: observed must be ≥ 0", provider.id)));
    }
    if !(provider.expected >= 0.0 && provider.expected.is_finite()) {
        return Err(Error::Validation(format!("provider `{}`: expected must be ≥ 0", provider.id)));
    }
    Ok(())
}

/// Log of the CDF integrand after integrating the Gamma CDF by parts in `z`:
/// `log[g_a(y(z)) y'(z)] + log Φ(z)` (or `log Φᶜ(z)`), with
/// `y(z) = r (E e^{m+σz} + b₀)` and `g_a` the unit-rate Gamma density.
struct Bump {
    a: f64,
    r: f64,
    e: f64,
    m: f64,
    sigma: f64,
    b0: f64,
    upper_tail: bool,
}

impl Bump {
    /// `(y, y')`.
    fn parts(&self, z: f64) -> (f64, f64) {
        let k = self.r * self.e * (self.m + self.sigma * z).exp();
        (k + self.r * self.b0, self.sigma * k)
    }

    /// Log normal tail and its first two derivatives.
    fn tail(&self, z: f64) -> (f64, f64, f64) {
        if self.upper_tail {
            let h = (norm_ln_pdf(z) - norm_ln_sf(z)).exp();
            (norm_ln_sf(z), -h, -h * (h - z))
        } else {
            let g = (norm_ln_pdf(z) - norm_ln_cdf(z)).exp();
            (norm_ln_cdf(z), g, -g * (g + z))
        }
    }
}

impl LogIntegrand for Bump {
    fn value(&self, z: f64) -> f64 {
        let (y, dy) = self.parts(z);
        gamma_ln_pdf(y, self.a, 1.0) + dy.ln() + self.tail(z).0
    }
    fn d1(&self, z: f64) -> f64 {
        let (y, dy) = self.parts(z);
        ((self.a - 1.0) / y - 1.0) * dy + self.sigma + self.tail(z).1
    }
    fn d2(&self, z: f64) -> f64 {
        let (y, dy) = self.parts(z);
        let a = self.a;
        -(a - 1.0) / (y * y) * dy * dy + ((a - 1.0) / y - 1.0) * self.sigma * dy + self.tail(z).2
    }
}

/// `log Gamma(r; a, E e^{m+σz} + b₀) + log φ(z)`.
struct DensityKernel {
    a: f64,
    r: f64,
    e: f64,
    m: f64,
    sigma: f64,
    b0: f64,
}

impl DensityKernel {
    fn rate(&self, z: f64) -> (f64, f64) {
        let k = self.e * (self.m + self.sigma * z).exp();
        (k + self.b0, self.sigma * k)
    }
}

impl LogIntegrand for DensityKernel {
    fn value(&self, z: f64) -> f64 {
        gamma_ln_pdf(self.r, self.a, self.rate(z).0) + norm_ln_pdf(z)
    }
    fn d1(&self, z: f64) -> f64 {
        let (b, db) = self.rate(z);
        (self.a / b - self.r) * db - z
    }
    fn d2(&self, z: f64) -> f64 {
        let (b, db) = self.rate(z);
        -self.a / (b * b) * db * db + (self.a / b - self.r) * self.sigma * db - 1.0
    }
}

impl PosteriorR {
    fn mixing(&self) -> Option<(f64, f64)> {
        self.lambda.map(|l| (l.log_mean, l.log_variance))
    }

    /// Plain Gauss-Hermite is adequate when the lognormal spread is small
    /// compared with the relative width `1/√a` of the Gamma kernel.
    fn narrow(&self, v: f64) -> bool {
        v.sqrt() * self.shape.sqrt() <= 1.0
    }

    pub fn mean(&self) -> f64 {
        match self.mixing() {
            None => self.shape / self.rate_base,
            Some((m, v)) => {
                let rule = gauss_hermite(self.quadrature_nodes);
                rule.normal_expectation(m, v, |u| self.shape / (self.rate_base * u.exp() + self.prior.rate))
            }
        }
    }

    pub fn cdf(&self, r: f64) -> f64 {
        self.cdf_with(r, self.quadrature_nodes)
    }

    fn cdf_with(&self, r: f64, nodes: usize) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r.is_infinite() {
            return 1.0;
        }
        let (m, v) = match self.mixing() {
            None => return gamma_p(self.shape, r * self.rate_base),
            Some(mv) => mv,
        };
        let a = self.shape;
        let (e, b0) = (self.rate_base, self.prior.rate);
        if e == 0.0 {
            return gamma_p(a, r * b0);
        }
        let rule = gauss_hermite(nodes);
        if self.narrow(v) {
            return rule
                .normal_expectation(m, v, |u| gamma_p(a, r * (e * u.exp() + b0)))
                .clamp(0.0, 1.0);
        }
        let sigma = v.sqrt();
        // Ridge location: y(z*) = a, i.e. E e^{m+σz*} = a/r - b₀.
        let z_star = if a / r > b0 && e > 0.0 { (((a / r - b0) / e).ln() - m) / sigma } else { f64::NEG_INFINITY };
        let upper_tail = z_star >= 0.0;
        let bump = Bump { a, r, e, m, sigma, b0, upper_tail };
        let value = if upper_tail {
            gamma_p(a, r * b0) + adaptive_integral(&bump, &rule, z_star)
        } else {
            1.0 - adaptive_integral(&bump, &rule, z_star.max(-3.0))
        };
        value.clamp(0.0, 1.0)
    }

    pub fn pdf(&self, r: f64) -> f64 {
        if r <= 0.0 || r.is_infinite() {
            return 0.0;
        }
        let (m, v) = match self.mixing() {
            None => return gamma_ln_pdf(r, self.shape, self.rate_base).exp(),
            Some(mv) => mv,
        };
        let a = self.shape;
        let (e, b0) = (self.rate_base, self.prior.rate);
        if e == 0.0 {
            return gamma_ln_pdf(r, a, b0).exp();
        }
        let rule = gauss_hermite(self.quadrature_nodes);
        if self.narrow(v) {
            return rule.normal_expectation(m, v, |u| gamma_ln_pdf(r, a, e * u.exp() + b0).exp());
        }
        let sigma = v.sqrt();
        let guess = if a / r > b0 && e > 0.0 { (((a / r - b0) / e).ln() - m) / sigma } else { -3.0 };
        let kernel = DensityKernel { a, r, e, m, sigma, b0 };
        adaptive_integral(&kernel, &rule, guess.clamp(-MODE_GUESS_LIMIT, MODE_GUESS_LIMIT))
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.quantile_with(p, self.quadrature_nodes)
    }

    fn quantile_with(&self, p: f64, nodes: usize) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Validation(format!("probability must lie in (0, 1), got {p}")));
        }
        let cdf = |r: f64| self.cdf_with(r, nodes);
        // Expand geometrically from the kernel mean at the central node.
        let centre = match self.mixing() {
            None => self.shape / self.rate_base,
            Some((m, _)) => self.shape / (self.rate_base * m.exp() + self.prior.rate),
        };
        let (mut lo, mut hi) = (centre, centre);
        let mut expansions = 0;
        while cdf(lo) > p {
            lo *= 0.5;
            expansions += 1;
            if expansions > 1100 || lo == 0.0 {
                return Err(Error::Bracketing { p, detail: format!("lower end reached {lo:e}") });
            }
        }
        expansions = 0;
        while cdf(hi) < p {
            hi *= 2.0;
            expansions += 1;
            if expansions > 1100 || !hi.is_finite() {
                return Err(Error::Bracketing { p, detail: format!("upper end reached {hi:e}") });
            }
        }
        for _ in 0..400 {
            if hi - lo <= QUANTILE_REL_TOL * 0.5 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn median(&self) -> Result<f64> {
        self.quantile(0.5)
    }

    /// Equal-tailed `1 - α` interval `[q(α/2), q(1 - α/2)]`.
    pub fn credible_interval(&self, alpha: f64) -> Result<(f64, f64)> {
        check_level(alpha)?;
        Ok((self.quantile(alpha / 2.0)?, self.quantile(1.0 - alpha / 2.0)?))
    }

    /// Largest change of the 2.5%, 50% and 97.5% quantiles when the node
    /// count is doubled.
    pub fn quadrature_check(&self) -> Result<QuadratureCheck> {
        if self.lambda.is_none() {
            return Ok(QuadratureCheck { nodes: 0, max_change: 0.0, converged: true });
        }
        let mut max_change = 0.0f64;
        for p in [0.025, 0.5, 0.975] {
            let a = self.quantile_with(p, self.quadrature_nodes)?;
            let b = self.quantile_with(p, 2 * self.quadrature_nodes)?;
            max_change = max_change.max((a - b).abs());
        }
        Ok(QuadratureCheck {
            nodes: self.quadrature_nodes,
            max_change,
            converged: max_change <= QUADRATURE_TOL,
        })
    }
}

const MODE_GUESS_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureCheck {
    pub nodes: usize,
    pub max_change: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagMethod {
    NaiveFrequentist,
    AdjustedFrequentist,
    NaiveBayes,
    AdjustedBayes,
}

impl FlagMethod {
    pub const ALL: [FlagMethod; 4] =
        [Self::NaiveFrequentist, Self::AdjustedFrequentist, Self::NaiveBayes, Self::AdjustedBayes];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NaiveFrequentist => "naive_frequentist",
            Self::AdjustedFrequentist => "adjusted_frequentist",
            Self::NaiveBayes => "naive_bayes",
            Self::AdjustedBayes => "adjusted_bayes",
        }
    }

    pub fn is_bayes(self) -> bool {
        matches!(self, Self::NaiveBayes | Self::AdjustedBayes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Low,
    Null,
    High,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Low => "low",
            Flag::Null => "null",
            Flag::High => "high",
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagDecision {
    pub provider_id: String,
    pub method: FlagMethod,
    pub statistic: f64,
    pub interval: Option<(f64, f64)>,
    pub flag: Flag,
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("flag level must lie in (0, 1), got {level}")))
    }
}

/// Two-sided critical value `Φ⁻¹(1 - level/2)`.
pub fn critical_value(level: f64) -> f64 {
    norm_quantile(1.0 - level / 2.0)
}

pub fn flag_from_z(z: f64, level: f64) -> Flag {
    let c = critical_value(level);
    if z < -c {
        Flag::Low
    } else if z > c {
        Flag::High
    } else {
        Flag::Null
    }
}

pub fn flag_from_interval(lower: f64, upper: f64) -> Flag {
    if upper < 1.0 {
        Flag::Low
    } else if lower > 1.0 {
        Flag::High
    } else {
        Flag::Null
    }
}

/// Same decision as the credible-interval rule, from a single CDF value:
/// the interval lies below 1 iff `F(1) > 1 - level/2`.
pub fn flag_from_cdf(posterior: &PosteriorR, level: f64) -> Result<Flag> {
    check_level(level)?;
    let f1 = posterior.cdf(1.0);
    Ok(if f1 > 1.0 - level / 2.0 {
        Flag::Low
    } else if f1 < level / 2.0 {
        Flag::High
    } else {
        Flag::Null
    })
}

pub fn flag_frequentist(provider_id: &str, z: f64, method: FlagMethod, level: f64) -> Result<FlagDecision> {
    check_level(level)?;
    if method.is_bayes() {
        return Err(Error::Validation(format!("{} is not a frequentist method", method.as_str())));
    }
    Ok(FlagDecision { provider_id: provider_id.to_string(), method, statistic: z, interval: None, flag: flag_from_z(z, level) })
}

pub fn flag_bayes(provider_id: &str, posterior: &PosteriorR, method: FlagMethod, level: f64) -> Result<FlagDecision> {
    if !method.is_bayes() {
        return Err(Error::Validation(format!("{} is not a Bayesian method", method.as_str())));
    }
    let (lo, hi) = posterior.credible_interval(level)?;
    Ok(FlagDecision {
        provider_id: provider_id.to_string(),
        method,
        statistic: posterior.median()?,
        interval: Some((lo, hi)),
        flag: flag_from_interval(lo, hi),
    })
}
