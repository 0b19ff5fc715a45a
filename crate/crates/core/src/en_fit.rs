//! Empirical-null likelihood and its maximization.
//!
//! Providers whose naive score lands inside a fixed null interval enter the
//! likelihood through `π₀ φᵢ(Z)`; the rest enter through `1 - π₀ Qᵢ`, the
//! probability of escaping the interval.

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::robust_init::{initialize, scaled_design, InitEstimate, DEFAULT_HUBER_TUNING};
use crate::special::{norm_interval_prob, norm_ln_pdf};
use crate::summary_model::{
    naive_z_batch, null_moments_at, validate_dataset, ConfoundingParams, Family, FamilyKind, ProviderSummary,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullInterval {
    pub lower: f64,
    pub upper: f64,
}

impl NullInterval {
    pub fn contains(&self, z: f64) -> bool {
        self.lower <= z && z <= self.upper
    }

    pub fn unbounded() -> Self {
        Self { lower: f64::NEG_INFINITY, upper: f64::INFINITY }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Truncated empirical-null likelihood profiled over the π₀ grid.
    EmpiricalNull,
    /// Every provider treated as null with π₀ = 1: the plain normal MLE.
    NormalMle,
}

/// Which sandwich the fit reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceForm {
    /// Linearized mean with `Ωᵢᵢ = 1 + Wᵢᵀν̂ + φ̂ ñᵢ`.
    Linearized,
    /// Jacobian of the exact null mean with the exact null variance.
    ModelBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub pi0_grid: Vec<f64>,
    pub interval_multiplier: f64,
    pub huber_tuning: f64,
    /// Extra passes that recompute the null intervals from the previous fit.
    pub refit_intervals: usize,
    /// Lower bound for σ²_α when forming the log-scale starting point.
    pub sigma2_start_floor: f64,
    pub nm_f_tol: f64,
    pub nm_max_iter: usize,
    pub compute_covariance: bool,
    pub covariance_form: CovarianceForm,
    pub mode: FitMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            pi0_grid: pi0_grid(0.02, 1.0, 50),
            interval_multiplier: 1.96,
            huber_tuning: DEFAULT_HUBER_TUNING,
            refit_intervals: 0,
            sigma2_start_floor: 1e-3,
            nm_f_tol: 1e-10,
            nm_max_iter: 2000,
            compute_covariance: true,
            covariance_form: CovarianceForm::Linearized,
            mode: FitMode::EmpiricalNull,
        }
    }
}

impl FitConfig {
    pub fn normal_mle() -> Self {
        Self { mode: FitMode::NormalMle, pi0_grid: vec![1.0], ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pi0_grid.is_empty() {
            return Err(Error::Validation("π₀ grid is empty".into()));
        }
        if let Some(bad) = self.pi0_grid.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::Validation(format!("π₀ grid values must lie in (0, 1], got {bad}")));
        }
        if !(self.interval_multiplier > 0.0 && self.interval_multiplier.is_finite()) {
            return Err(Error::Validation("interval multiplier must be positive".into()));
        }
        if !(self.huber_tuning > 0.0) {
            return Err(Error::Validation("Huber tuning must be positive".into()));
        }
        if !(self.sigma2_start_floor > 0.0) {
            return Err(Error::Validation("σ²_α start floor must be positive".into()));
        }
        if !(self.nm_f_tol > 0.0) || self.nm_max_iter == 0 {
            return Err(Error::Validation("Nelder-Mead tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }

    fn nelder_mead(&self) -> NelderMeadConfig {
        NelderMeadConfig { f_tol: self.nm_f_tol, max_iter: self.nm_max_iter, ..NelderMeadConfig::default() }
    }
}

/// `points` equally spaced values on `[lower, upper]`.
pub fn pi0_grid(lower: f64, upper: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![upper];
    }
    let step = (upper - lower) / (points - 1) as f64;
    (0..points).map(|k| if k + 1 == points { upper } else { lower + step * k as f64 }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnFit {
    pub params: ConfoundingParams,
    pub pi0: f64,
    pub loglik: f64,
    pub null_set: Vec<bool>,
    pub intervals: Vec<NullInterval>,
    pub covariance: Option<DMatrix<f64>>,
    pub init: InitEstimate,
    pub converged: bool,
    /// Maximized log-likelihood at each π₀ grid point (`None` if that run failed).
    pub profile: Vec<(f64, Option<f64>)>,
    pub warnings: Vec<String>,
}

impl EnFit {
    pub fn null_count(&self) -> usize {
        self.null_set.iter().filter(|b| **b).count()
    }

    /// Sandwich standard errors of ν̂.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.covariance.as_ref().map(|c| (0..c.nrows()).map(|j| c[(j, j)].max(0.0).sqrt()).collect())
    }
}

/// `[mean - k sd, mean + k sd]` at the given parameters.
pub fn null_intervals_at(
    providers: &[ProviderSummary],
    family: &Family,
    params: &ConfoundingParams,
    multiplier: f64,
) -> Result<Vec<NullInterval>> {
    providers
        .iter()
        .map(|p| {
            let m = null_moments_at(p, family, p.linear_index(&params.nu), params.sigma2_alpha)?;
            let half = multiplier * m.sd();
            Ok(NullInterval { lower: m.mean - half, upper: m.mean + half })
        })
        .collect()
}

/// Null intervals at the robust starting values.
pub fn null_intervals(
    providers: &[ProviderSummary],
    family: &Family,
    init: &InitEstimate,
    multiplier: f64,
) -> Result<Vec<NullInterval>> {
    let params = ConfoundingParams { nu: init.nu0.clone(), sigma2_alpha: init.sigma2_alpha0 };
    null_intervals_at(providers, family, &params, multiplier)
}

pub fn null_set(z: &[f64], intervals: &[NullInterval]) -> Vec<bool> {
    z.iter().zip(intervals).map(|(z, iv)| iv.contains(*z)).collect()
}

/// Data held fixed while the likelihood is maximized.
#[derive(Debug, Clone)]
pub struct EnObjective<'a> {
    providers: &'a [ProviderSummary],
    family: Family,
    z: Vec<f64>,
    intervals: Vec<NullInterval>,
    null_set: Vec<bool>,
}

impl<'a> EnObjective<'a> {
    pub fn new(
        providers: &'a [ProviderSummary],
        family: &Family,
        intervals: Vec<NullInterval>,
        null_set: Vec<bool>,
    ) -> Result<Self> {
        if intervals.len() != providers.len() || null_set.len() != providers.len() {
            return Err(Error::Validation("intervals and null set must have one entry per provider".into()));
        }
        let z = naive_z_batch(providers, family)?;
        Ok(Self { providers, family: *family, z, intervals, null_set })
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Log-likelihood; `-∞` wherever a term is undefined.
    pub fn eval(&self, nu: &[f64], sigma2_alpha: f64, pi0: f64) -> f64 {
        if !(pi0 > 0.0 && pi0 <= 1.0) || !(sigma2_alpha >= 0.0) {
            return f64::NEG_INFINITY;
        }
        let ln_pi0 = pi0.ln();
        let mut total = 0.0;
        for (i, p) in self.providers.iter().enumerate() {
            let m = match null_moments_at(p, &self.family, p.linear_index(nu), sigma2_alpha) {
                Ok(m) => m,
                Err(_) => return f64::NEG_INFINITY,
            };
            let sd = m.sd();
            if self.null_set[i] {
                total += ln_pi0 + norm_ln_pdf((self.z[i] - m.mean) / sd) - sd.ln();
            } else {
                let iv = self.intervals[i];
                let q = norm_interval_prob((iv.lower - m.mean) / sd, (iv.upper - m.mean) / sd);
                let escape = -pi0 * q;
                if !(escape > -1.0) {
                    return f64::NEG_INFINITY;
                }
                total += escape.ln_1p();
            }
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    /// Objective over `θ = (ν, ln σ²_α)`.
    pub fn eval_log_scale(&self, theta: &[f64], pi0: f64) -> f64 {
        let (nu, ls) = theta.split_at(theta.len() - 1);
        self.eval(nu, ls[0].exp(), pi0)
    }
}

/// Empirical-null log-likelihood at `params`.
pub fn log_likelihood(
    providers: &[ProviderSummary],
    family: &Family,
    params: &ConfoundingParams,
    pi0: f64,
    intervals: &[NullInterval],
    null_set: &[bool],
) -> Result<f64> {
    let obj = EnObjective::new(providers, family, intervals.to_vec(), null_set.to_vec())?;
    Ok(obj.eval(&params.nu, params.sigma2_alpha, pi0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pi0Optimum {
    pub pi0: f64,
    pub params: ConfoundingParams,
    pub loglik: f64,
    pub converged: bool,
}

/// Maximizes over `(ν, ln σ²_α)` at a single π₀.
pub fn maximize_at_pi0(
    objective: &EnObjective<'_>,
    start: &ConfoundingParams,
    pi0: f64,
    config: &FitConfig,
) -> Result<Pi0Optimum> {
    let mut theta0 = start.nu.clone();
    theta0.push(start.sigma2_alpha.max(config.sigma2_start_floor).ln());
    let r = nelder_mead(|t| objective.eval_log_scale(t, pi0), &theta0, &config.nelder_mead())?;
    let (nu, ls) = r.argmax.split_at(r.argmax.len() - 1);
    Ok(Pi0Optimum {
        pi0,
        params: ConfoundingParams { nu: nu.to_vec(), sigma2_alpha: ls[0].exp() },
        loglik: r.value,
        converged: r.converged,
    })
}

struct Pass {
    best: Pi0Optimum,
    intervals: Vec<NullInterval>,
    null_set: Vec<bool>,
    profile: Vec<(f64, Option<f64>)>,
    warnings: Vec<String>,
}

fn run_pass(
    providers: &[ProviderSummary],
    family: &Family,
    start: &ConfoundingParams,
    intervals: Vec<NullInterval>,
    null_set: Vec<bool>,
    config: &FitConfig,
) -> Result<Pass> {
    if !null_set.iter().any(|b| *b) {
        return Err(Error::NoNullProviders);
    }
    let objective = EnObjective::new(providers, family, intervals.clone(), null_set.clone())?;
    let runs: Vec<Result<Pi0Optimum>> =
        config.pi0_grid.par_iter().map(|&pi0| maximize_at_pi0(&objective, start, pi0, config)).collect();

    let mut warnings = Vec::new();
    let mut profile = Vec::with_capacity(runs.len());
    let mut best: Option<Pi0Optimum> = None;
    let mut failures = Vec::new();
    for (run, &pi0) in runs.into_iter().zip(&config.pi0_grid) {
        match run {
            Ok(opt) if opt.loglik.is_finite() => {
                profile.push((pi0, Some(opt.loglik)));
                if !opt.converged {
                    warnings.push(format!("Nelder-Mead hit the iteration cap at π₀ = {pi0:.4}"));
                }
                let better = match &best {
                    None => true,
                    Some(b) => opt.loglik > b.loglik || (opt.loglik == b.loglik && opt.pi0 > b.pi0),
                };
                if better {
                    best = Some(opt);
                }
            }
            Ok(_) => {
                profile.push((pi0, None));
                failures.push(format!("π₀ = {pi0}: non-finite optimum"));
            }
            Err(e) => {
                profile.push((pi0, None));
                failures.push(format!("π₀ = {pi0}: {e}"));
            }
        }
    }
    let best = best.ok_or_else(|| Error::FitFailure(failures.join("; ")))?;
    if !failures.is_empty() {
        warnings.push(format!("{} π₀ grid points failed", failures.len()));
    }
    Ok(Pass { best, intervals, null_set, profile, warnings })
}

/// Fits the empirical-null model (or the normal-MLE baseline, per `config.mode`).
pub fn fit(providers: &[ProviderSummary], family: &Family, config: &FitConfig) -> Result<EnFit> {
    config.validate()?;
    validate_dataset(providers, family)?;
    let init = initialize(providers, family, config.huber_tuning)?;
    let z = naive_z_batch(providers, family)?;
    let start = ConfoundingParams { nu: init.nu0.clone(), sigma2_alpha: init.sigma2_alpha0 };

    let mut pass = match config.mode {
        FitMode::NormalMle => {
            let baseline = FitConfig { pi0_grid: vec![1.0], ..config.clone() };
            let intervals = vec![NullInterval::unbounded(); providers.len()];
            run_pass(providers, family, &start, intervals, vec![true; providers.len()], &baseline)?
        }
        FitMode::EmpiricalNull => {
            let intervals = null_intervals(providers, family, &init, config.interval_multiplier)?;
            let set = null_set(&z, &intervals);
            let mut pass = run_pass(providers, family, &start, intervals, set, config)?;
            for _ in 0..config.refit_intervals {
                let intervals =
                    null_intervals_at(providers, family, &pass.best.params, config.interval_multiplier)?;
                let set = null_set(&z, &intervals);
                let mut next = run_pass(providers, family, &pass.best.params, intervals, set, config)?;
                next.warnings.splice(0..0, pass.warnings);
                pass = next;
            }
            pass
        }
    };
    if !init.converged {
        pass.warnings.insert(0, "robust initialization hit the IRLS iteration cap".into());
    }

    let covariance = if config.compute_covariance {
        Some(match config.covariance_form {
            CovarianceForm::Linearized => sandwich_covariance(providers, family, &pass.best.params, &pass.null_set)?,
            CovarianceForm::ModelBased => {
                model_based_covariance(providers, family, &pass.best.params, &pass.null_set)?
            }
        })
    } else {
        None
    };
    Ok(EnFit {
        params: pass.best.params,
        pi0: pass.best.pi0,
        loglik: pass.best.loglik,
        null_set: pass.null_set,
        intervals: pass.intervals,
        covariance,
        init,
        converged: pass.best.converged,
        profile: pass.profile,
        warnings: pass.warnings,
    })
}

/// `(XᵀX)⁻¹ XᵀΩX (XᵀX)⁻¹` for diagonal `Ω`.
pub fn sandwich_from_design(design: &DMatrix<f64>, omega: &[f64]) -> Result<DMatrix<f64>> {
    let (n, p) = design.shape();
    if omega.len() != n {
        return Err(Error::Validation("one Ω entry per design row is required".into()));
    }
    if n < p {
        return Err(Error::SingularDesign(format!("{n} null providers for {p} covariates")));
    }
    let xtx = design.transpose() * design;
    let bread = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularDesign("null-set design is rank deficient".into()))?
        .inverse();
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for (i, &w) in omega.iter().enumerate() {
        let row = design.row(i);
        meat += w * row.transpose() * row;
    }
    let cov = &bread * meat * &bread;
    Ok(0.5 * (&cov + cov.transpose()))
}

/// Sandwich covariance of ν̂ over null-set providers.
///
/// Rows are `sqrt(size/a) Wᵢ`, the regressors of the approximately linear
/// mean of `Z`, and `Ωᵢᵢ = 1 + (b3ᵢ/ñᵢ) Wᵢᵀν̂ + φ̂ ñᵢ`, which reduces to
/// `1 + Wᵢᵀν̂ + φ̂ ñᵢ` for Poisson counts and `1 + φ̂ nᵢ` for Normal outcomes.
pub fn sandwich_covariance(
    providers: &[ProviderSummary],
    family: &Family,
    params: &ConfoundingParams,
    null_set: &[bool],
) -> Result<DMatrix<f64>> {
    let members: Vec<ProviderSummary> =
        providers.iter().zip(null_set).filter(|(_, b)| **b).map(|(p, _)| p.clone()).collect();
    if members.is_empty() {
        return Err(Error::NoNullProviders);
    }
    let phi = params.varphi(family);
    let omega = members
        .iter()
        .map(|p| {
            let size = family.size(p);
            let slope = match family.kind {
                FamilyKind::Normal => 0.0,
                FamilyKind::ExpFamilyApprox => p.b3_sum.unwrap_or(size) / size,
                _ => 1.0,
            };
            let w = 1.0 + slope * p.linear_index(&params.nu) + phi * size;
            if w > 0.0 && w.is_finite() {
                Ok(w)
            } else {
                Err(Error::DegenerateWeight { provider: p.id.clone(), weight: w })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    sandwich_from_design(&scaled_design(&members, family), &omega)
}

/// Sandwich built from the exact null moments: rows are `∂μᵢ/∂ν` and
/// `Ωᵢᵢ` is the null variance of `Zᵢ`. For Normal outcomes this coincides
/// with the linearized form.
pub fn model_based_covariance(
    providers: &[ProviderSummary],
    family: &Family,
    params: &ConfoundingParams,
    null_set: &[bool],
) -> Result<DMatrix<f64>> {
    let members: Vec<&ProviderSummary> =
        providers.iter().zip(null_set).filter(|(_, b)| **b).map(|(p, _)| p).collect();
    if members.is_empty() {
        return Err(Error::NoNullProviders);
    }
    let p = params.nu.len();
    let mut design = DMatrix::zeros(members.len(), p);
    let mut omega = Vec::with_capacity(members.len());
    for (i, prov) in members.iter().enumerate() {
        let li = prov.linear_index(&params.nu);
        let root = (family.size(prov) / family.dispersion).sqrt();
        let slope = match family.kind {
            FamilyKind::Poisson | FamilyKind::QuasiPoisson => root * (li + 0.5 * params.sigma2_alpha).exp(),
            FamilyKind::Normal | FamilyKind::ExpFamilyApprox => root,
        };
        for (j, w) in prov.covariates.iter().enumerate() {
            design[(i, j)] = slope * w;
        }
        omega.push(null_moments_at(prov, family, li, params.sigma2_alpha)?.variance);
    }
    sandwich_from_design(&design, &omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_quantile;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, Normal, Poisson};

    fn single(z: f64) -> Vec<ProviderSummary> {
        // ñ = E = 100 so that O = E + 10 z gives naive score z.
        vec![ProviderSummary::new("a", 100.0 + 10.0 * z, 100.0, 100.0, vec![0.0])]
    }

    #[test]
    fn standard_band_at_zero_params() {
        let data = vec![
            ProviderSummary::new("a", 3.0, 5.0, 5.0, vec![1.0]),
            ProviderSummary::new("b", 30.0, 25.0, 40.0, vec![-2.0]),
        ];
        let init = InitEstimate { nu0: vec![0.0], scale0: 1.0, sigma2_alpha0: 0.0, converged: true };
        for iv in null_intervals(&data, &Family::poisson(), &init, 1.96).unwrap() {
            assert_eq!((iv.lower, iv.upper), (-1.96, 1.96));
        }
    }

    #[test]
    fn normal_band_by_substitution() {
        let p = ProviderSummary::new("n", 0.0, 1.0, 100.0, vec![1.0]).with_n_patients(100);
        let init = InitEstimate { nu0: vec![0.25], scale0: 1.0, sigma2_alpha0: 0.1, converged: true };
        let iv = null_intervals(&[p], &Family::normal(1.0).unwrap(), &init, 1.96).unwrap()[0];
        assert_relative_eq!(iv.lower, 2.5 - 1.96 * 11f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(iv.upper, 2.5 + 1.96 * 11f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn poisson_band_widens_with_size() {
        let init = InitEstimate { nu0: vec![0.1], scale0: 1.0, sigma2_alpha0: 0.05, converged: true };
        let data: Vec<_> =
            [5.0, 20.0, 80.0, 320.0].iter().map(|&n| ProviderSummary::new("p", n, n, n, vec![0.5])).collect();
        let ivs = null_intervals(&data, &Family::poisson(), &init, 1.96).unwrap();
        for w in ivs.windows(2) {
            assert!(w[1].upper - w[1].lower > w[0].upper - w[0].lower);
        }
    }

    #[test]
    fn single_provider_likelihood_terms() {
        let params = ConfoundingParams::zero(1);
        let iv = [NullInterval { lower: -1.96, upper: 1.96 }];
        let inside = log_likelihood(&single(0.0), &Family::poisson(), &params, 1.0, &iv, &[true]).unwrap();
        assert_relative_eq!(inside, -0.918_938_533_204_672_8, epsilon = 1e-14);
        let outside = log_likelihood(&single(2.5), &Family::poisson(), &params, 1.0, &iv, &[false]).unwrap();
        // ln(1 - 0.9500042097035591), 0.95000... from mpmath.
        assert_relative_eq!(outside, -2.995_816_471_169_693_3, max_relative = 1e-12);
    }

    #[test]
    fn mixed_set_with_half_prior() {
        let mut data = single(0.0);
        data.extend(single(2.5));
        data[1].id = "b".into();
        let iv = vec![NullInterval { lower: -1.96, upper: 1.96 }; 2];
        let got = log_likelihood(&data, &Family::poisson(), &ConfoundingParams::zero(1), 0.5, &iv, &[true, false])
            .unwrap();
        let expect = 0.5f64.ln() - 0.918_938_533_204_672_8 + (1.0 - 0.5 * 0.950_004_209_703_559_1f64).ln();
        assert_relative_eq!(got, expect, max_relative = 1e-13);
    }

    #[test]
    fn degenerate_moments_give_minus_infinity() {
        let p = ProviderSummary::new("x", 10.0, 10.0, 10.0, vec![1.0]).with_b3_sum(10.0);
        let iv = [NullInterval { lower: -2.0, upper: 2.0 }];
        let params = ConfoundingParams::new(vec![-5.0], 0.0).unwrap();
        let v = log_likelihood(&[p], &Family::exp_family(1.0).unwrap(), &params, 0.9, &iv, &[true]).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn sandwich_identity_cases() {
        let eye = DMatrix::<f64>::identity(3, 3);
        let cov = sandwich_from_design(&eye, &[1.0; 3]).unwrap();
        assert_relative_eq!(cov, eye, epsilon = 1e-14);
        let w = DMatrix::from_column_slice(4, 1, &[1.0, -2.0, 0.5, 3.0]);
        let cov = sandwich_from_design(&w, &[1.0; 4]).unwrap();
        assert_relative_eq!(cov[(0, 0)], 1.0 / 14.25, epsilon = 1e-14);
    }

    #[test]
    fn sandwich_rejects_degenerate_weight_and_rank() {
        let data = vec![
            ProviderSummary::new("a", 1.0, 1.0, 1.0, vec![1.0]),
            ProviderSummary::new("b", 1.0, 1.0, 1.0, vec![-3.0]),
        ];
        let params = ConfoundingParams::new(vec![0.5], 0.0).unwrap();
        let err = sandwich_covariance(&data, &Family::poisson(), &params, &[true, true]).unwrap_err();
        assert!(matches!(err, Error::DegenerateWeight { ref provider, .. } if provider == "b"));
        let w = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0]);
        assert!(matches!(sandwich_from_design(&w, &[1.0; 3]), Err(Error::SingularDesign(_))));
    }

    pub(crate) fn poisson_dataset(n_prov: usize, size: f64, nu: f64, s2: f64, seed: u64) -> Vec<ProviderSummary> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let std = Normal::new(0.0, 1.0).unwrap();
        (0..n_prov)
            .map(|i| {
                let w: f64 = std.sample(&mut rng);
                let alpha = s2.sqrt() * std.sample(&mut rng);
                let rate = size * (w * nu + alpha).exp();
                let o: f64 = Poisson::new(rate).unwrap().sample(&mut rng);
                ProviderSummary::new(format!("p{i}"), o, size, size, vec![w])
            })
            .collect()
    }

    #[test]
    fn all_null_single_pi0_matches_normal_mle() {
        let data = poisson_dataset(10, 50.0, 0.0, 0.0, 4);
        let z = naive_z_batch(&data, &Family::poisson()).unwrap();
        let wide = FitConfig { interval_multiplier: 50.0, pi0_grid: vec![1.0], ..FitConfig::default() };
        let en = fit(&data, &Family::poisson(), &wide).unwrap();
        assert!(null_set(&z, &en.intervals).iter().all(|b| *b));
        let mle = fit(&data, &Family::poisson(), &FitConfig { interval_multiplier: 50.0, ..FitConfig::normal_mle() })
            .unwrap();
        assert_eq!(en.params, mle.params);
        assert_eq!(en.loglik, mle.loglik);
    }

    #[test]
    fn no_null_providers_is_an_error() {
        let data = poisson_dataset(30, 50.0, 0.2, 0.05, 8);
        let cfg = FitConfig { interval_multiplier: 1e-12, ..FitConfig::default() };
        assert_eq!(fit(&data, &Family::poisson(), &cfg).unwrap_err(), Error::NoNullProviders);
    }

    #[test]
    fn recovers_parameters_on_clean_data() {
        let data = poisson_dataset(400, 100.0, 0.25, 0.1, 21);
        let f = fit(&data, &Family::poisson(), &FitConfig::default()).unwrap();
        assert!((f.params.nu[0] - 0.25).abs() < 0.06, "{:?}", f.params);
        assert!((f.params.sigma2_alpha - 0.1).abs() < 0.05, "{:?}", f.params);
        let cov = f.covariance.as_ref().unwrap();
        assert!(cov[(0, 0)] > 0.0);
        // Optimizer never worsens the start at any grid point.
        let obj = EnObjective::new(&data, &Family::poisson(), f.intervals.clone(), f.null_set.clone()).unwrap();
        let s2 = f.init.sigma2_alpha0.max(1e-3);
        for (pi0, ll) in &f.profile {
            assert!(ll.unwrap() >= obj.eval(&f.init.nu0, s2, *pi0));
        }
    }

    #[test]
    fn refit_intervals_runs_additional_passes() {
        let data = poisson_dataset(100, 80.0, 0.2, 0.05, 2);
        let a = fit(&data, &Family::poisson(), &FitConfig::default()).unwrap();
        let b = fit(&data, &Family::poisson(), &FitConfig { refit_intervals: 1, ..FitConfig::default() }).unwrap();
        let expect = null_intervals_at(&data, &Family::poisson(), &a.params, 1.96).unwrap();
        assert_eq!(b.intervals, expect);
    }

    #[test]
    fn grid_construction() {
        let g = pi0_grid(0.02, 1.0, 50);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 0.02);
        assert_eq!(g[49], 1.0);
        assert_relative_eq!(g[1] - g[0], 0.02, epsilon = 1e-12);
        assert!(FitConfig { pi0_grid: vec![0.0], ..FitConfig::default() }.validate().is_err());
        assert!(norm_quantile(0.975) > 1.95);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn moving_a_null_score_away_lowers_likelihood(seed in 0u64..1000, k in 0usize..20, step in 0.01f64..1.0) {
            let data = poisson_dataset(20, 60.0, 0.2, 0.05, seed);
            let params = ConfoundingParams::new(vec![0.2], 0.05).unwrap();
            let family = Family::poisson();
            let iv = vec![NullInterval { lower: -50.0, upper: 50.0 }; 20];
            let set = vec![true; 20];
            let base = log_likelihood(&data, &family, &params, 0.8, &iv, &set).unwrap();
            let m = crate::summary_model::null_moments(&data[k], &family, &params).unwrap();
            let z = crate::summary_model::naive_z(&data[k], &family).unwrap();
            let dir = if z >= m.mean { 1.0 } else { -1.0 };
            let mut moved = data.clone();
            moved[k].observed += dir * step * 60f64.sqrt();
            let after = log_likelihood(&moved, &family, &params, 0.8, &iv, &set).unwrap();
            prop_assert!(after <= base);
        }

        #[test]
        fn sandwich_is_symmetric_psd(seed in 0u64..1000) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let std = Normal::new(0.0, 1.0).unwrap();
            let data: Vec<_> = (0..25).map(|i| {
                let w = vec![std.sample(&mut rng), std.sample(&mut rng)];
                ProviderSummary::new(format!("s{i}"), 40.0, 40.0, 40.0 + i as f64, w)
            }).collect();
            let params = ConfoundingParams::new(vec![0.1, -0.05], 0.02).unwrap();
            let set: Vec<bool> = (0..25).map(|i| i % 4 != 0).collect();
            let c = sandwich_covariance(&data, &Family::poisson(), &params, &set).unwrap();
            prop_assert!((c[(0, 1)] - c[(1, 0)]).abs() < 1e-12);
            let eig = c.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|e| *e >= -1e-15));
        }

        #[test]
        fn fit_ignores_provider_order(seed in 0u64..200, shift in 1usize..59) {
            let data = poisson_dataset(60, 50.0, 0.2, 0.05, seed);
            let mut rotated = data.clone();
            rotated.rotate_left(shift);
            let cfg = FitConfig { pi0_grid: pi0_grid(0.5, 1.0, 6), ..FitConfig::default() };
            let a = fit(&data, &Family::poisson(), &cfg).unwrap();
            let b = fit(&rotated, &Family::poisson(), &cfg).unwrap();
            prop_assert!((a.params.nu[0] - b.params.nu[0]).abs() < 1e-5);
            prop_assert!((a.params.sigma2_alpha - b.params.sigma2_alpha).abs() < 1e-5);
            prop_assert_eq!(a.pi0, b.pi0);
        }
    }

    #[test]
    fn model_based_matches_linearized_for_normal_outcomes() {
        let fam = Family::normal(2.0).unwrap();
        let data: Vec<ProviderSummary> = (0..12)
            .map(|i| {
                let w = i as f64 / 4.0 - 1.3;
                ProviderSummary::new(format!("p{i}"), 3.0 + w, 2.5, 40.0, vec![w, (i % 3) as f64 - 1.0])
                    .with_n_patients(40 + i)
            })
            .collect();
        let params = ConfoundingParams::new(vec![0.3, -0.1], 0.2).unwrap();
        let set: Vec<bool> = (0..12).map(|i| i != 4).collect();
        let a = sandwich_covariance(&data, &fam, &params, &set).unwrap();
        let b = model_based_covariance(&data, &fam, &params, &set).unwrap();
        assert!((a - b).abs().max() < 1e-14);
    }
}
