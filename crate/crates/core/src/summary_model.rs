//! Provider summaries, outcome families, and the null moments of the naive
//! Z-score.
//!
//! A provider's naive score is `Z = (O - E) / sqrt(a(ψ) ñ)`. When the
//! provider's own quality effect is zero, `Z` still carries the observed
//! confounding `Wᵀν` and the latent provider effect with variance `σ²_α`.
//! [`null_moments`] gives the conditional mean and variance of `Z` under that
//! null, either exactly (Normal, Poisson, quasi-Poisson) or through a
//! first-order expansion valid for any exponential family.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Public summary statistics for one provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSummary {
    pub id: String,
    /// Observed outcome count `O`.
    pub observed: f64,
    /// Expected outcome count `E = Σ b'(θ⁰)`.
    pub expected: f64,
    /// Effective size `ñ = Σ b''(θ⁰)`.
    pub effective_size: f64,
    /// Provider-level covariates `W`.
    pub covariates: Vec<f64>,
    /// Number of patients; required by the Normal family.
    pub n_patients: Option<u32>,
    /// `Σ b'''(θ⁰)`; required by the approximate exponential-family moments.
    pub b3_sum: Option<f64>,
}

impl ProviderSummary {
    pub fn new(id: impl Into<String>, observed: f64, expected: f64, effective_size: f64, covariates: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            observed,
            expected,
            effective_size,
            covariates,
            n_patients: None,
            b3_sum: None,
        }
    }

    pub fn with_n_patients(mut self, n: u32) -> Self {
        self.n_patients = Some(n);
        self
    }

    pub fn with_b3_sum(mut self, b3: f64) -> Self {
        self.b3_sum = Some(b3);
        self
    }

    /// Linear confounding index `Wᵀν`.
    pub fn linear_index(&self, nu: &[f64]) -> f64 {
        self.covariates.iter().zip(nu).map(|(w, v)| w * v).sum()
    }

    /// Checks the invariants of count-type outcomes: `O ≥ 0`, `E > 0`, `ñ > 0`.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("provider `{}`: {what}", self.id)));
        if self.observed < 0.0 {
            return bad("observed must be nonnegative");
        }
        if self.expected <= 0.0 {
            return bad("expected must be positive");
        }
        self.validate_common()
    }

    /// Checks shared by every family. Normal outcomes may have negative
    /// observed and expected totals.
    fn validate_common(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("provider `{}`: {what}", self.id)));
        if !self.observed.is_finite() || !self.expected.is_finite() {
            return bad("observed and expected must be finite");
        }
        if !self.effective_size.is_finite() || self.effective_size <= 0.0 {
            return bad("effective_size must be finite and positive");
        }
        if self.covariates.iter().any(|w| !w.is_finite()) {
            return bad("covariates must be finite");
        }
        if matches!(self.n_patients, Some(0)) {
            return bad("n_patients must be positive");
        }
        if let Some(b3) = self.b3_sum {
            if !b3.is_finite() {
                return bad("b3_sum must be finite");
            }
        }
        Ok(())
    }

    /// Checks the provider against the requirements of `family`.
    pub fn validate_for(&self, family: &Family) -> Result<()> {
        if family.kind == FamilyKind::Normal {
            self.validate_common()?;
        } else {
            self.validate()?;
        }
        match family.kind {
            FamilyKind::Normal if self.n_patients.is_none() => Err(Error::Validation(format!(
                "provider `{}`: the Normal family requires n_patients",
                self.id
            ))),
            FamilyKind::ExpFamilyApprox if self.b3_sum.is_none() => Err(Error::Validation(format!(
                "provider `{}`: the approximate exponential-family moments require b3_sum",
                self.id
            ))),
            _ => Ok(()),
        }
    }
}

/// Validates a whole dataset: per-provider invariants plus a common covariate
/// dimension. Returns that dimension.
pub fn validate_dataset(providers: &[ProviderSummary], family: &Family) -> Result<usize> {
    let first = providers
        .first()
        .ok_or_else(|| Error::Validation("dataset has no providers".into()))?;
    let p = first.covariates.len();
    for prov in providers {
        prov.validate_for(family)?;
        if prov.covariates.len() != p {
            return Err(Error::Validation(format!(
                "provider `{}` has {} covariates, expected {p}",
                prov.id,
                prov.covariates.len()
            )));
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Normal,
    Poisson,
    QuasiPoisson,
    ExpFamilyApprox,
}

impl FamilyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FamilyKind::Normal => "normal",
            FamilyKind::Poisson => "poisson",
            FamilyKind::QuasiPoisson => "quasi_poisson",
            FamilyKind::ExpFamilyApprox => "exp_family_approx",
        }
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(FamilyKind::Normal),
            "poisson" => Ok(FamilyKind::Poisson),
            "quasi_poisson" | "quasipoisson" => Ok(FamilyKind::QuasiPoisson),
            "exp_family_approx" | "expfamily" => Ok(FamilyKind::ExpFamilyApprox),
            other => Err(Error::Validation(format!("unknown family `{other}`"))),
        }
    }
}

/// Outcome family together with its dispersion `a(ψ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub kind: FamilyKind,
    /// `a(ψ)`: `σ²_ε` for Normal, 1 for Poisson, `ψ` otherwise.
    pub dispersion: f64,
}

impl Family {
    pub fn new(kind: FamilyKind, dispersion: f64) -> Result<Self> {
        if !(dispersion.is_finite() && dispersion > 0.0) {
            return Err(Error::Validation(format!("dispersion must be positive, got {dispersion}")));
        }
        if kind == FamilyKind::Poisson && dispersion != 1.0 {
            return Err(Error::Validation("the Poisson family has dispersion fixed at 1".into()));
        }
        Ok(Self { kind, dispersion })
    }

    pub fn poisson() -> Self {
        Self { kind: FamilyKind::Poisson, dispersion: 1.0 }
    }

    pub fn normal(sigma2_eps: f64) -> Result<Self> {
        Self::new(FamilyKind::Normal, sigma2_eps)
    }

    pub fn quasi_poisson(psi: f64) -> Result<Self> {
        Self::new(FamilyKind::QuasiPoisson, psi)
    }

    pub fn exp_family(dispersion: f64) -> Result<Self> {
        Self::new(FamilyKind::ExpFamilyApprox, dispersion)
    }

    /// Information size entering the mean function: `nᵢ` for Normal, `ñᵢ`
    /// otherwise.
    pub fn size(&self, provider: &ProviderSummary) -> f64 {
        match (self.kind, provider.n_patients) {
            (FamilyKind::Normal, Some(n)) => n as f64,
            _ => provider.effective_size,
        }
    }
}

/// Confounding parameters `(ν, σ²_α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundingParams {
    pub nu: Vec<f64>,
    pub sigma2_alpha: f64,
}

impl ConfoundingParams {
    pub fn new(nu: Vec<f64>, sigma2_alpha: f64) -> Result<Self> {
        if nu.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("ν must be finite".into()));
        }
        if !(sigma2_alpha.is_finite() && sigma2_alpha >= 0.0) {
            return Err(Error::Validation(format!("σ²_α must be nonnegative, got {sigma2_alpha}")));
        }
        Ok(Self { nu, sigma2_alpha })
    }

    /// No confounding at all.
    pub fn zero(p: usize) -> Self {
        Self { nu: vec![0.0; p], sigma2_alpha: 0.0 }
    }

    /// `φ = σ²_α / a(ψ)`.
    pub fn varphi(&self, family: &Family) -> f64 {
        self.sigma2_alpha / family.dispersion
    }
}

/// Mean and variance of the naive Z-score for a null provider.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullMoments {
    pub mean: f64,
    pub variance: f64,
}

impl NullMoments {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// `(O - E) / sqrt(a(ψ) ñ)`.
pub fn naive_z(provider: &ProviderSummary, family: &Family) -> Result<f64> {
    let z = (provider.observed - provider.expected) / (family.dispersion * family.size(provider)).sqrt();
    if z.is_finite() {
        Ok(z)
    } else {
        Err(Error::Validation(format!("provider `{}`: naive Z is not finite", provider.id)))
    }
}

pub fn naive_z_batch(providers: &[ProviderSummary], family: &Family) -> Result<Vec<f64>> {
    providers.iter().map(|p| naive_z(p, family)).collect()
}

/// Moments from the linear index `Wᵀν` instead of a full parameter vector.
/// This is the allocation-free kernel shared by the likelihood.
#[inline]
pub fn null_moments_at(provider: &ProviderSummary, family: &Family, linear_index: f64, sigma2_alpha: f64) -> Result<NullMoments> {
    let size = family.size(provider);
    let a = family.dispersion;
    let phi = sigma2_alpha / a;
    let (mean, variance) = match family.kind {
        FamilyKind::Normal => ((size / a).sqrt() * linear_index, 1.0 + phi * size),
        FamilyKind::Poisson | FamilyKind::QuasiPoisson => {
            // a = 1 for Poisson; the quasi-Poisson form rescales by ψ.
            let m = (linear_index + 0.5 * sigma2_alpha).exp();
            let mean = (size / a).sqrt() * (m - 1.0);
            let variance = m * (1.0 + m * sigma2_alpha.exp_m1() * size / a);
            (mean, variance)
        }
        FamilyKind::ExpFamilyApprox => {
            let b3 = provider.b3_sum.ok_or_else(|| {
                Error::Validation(format!("provider `{}`: b3_sum is required", provider.id))
            })?;
            let mean = (size / a).sqrt() * linear_index;
            let variance = 1.0 + (b3 / size) * linear_index + phi * size;
            (mean, variance)
        }
    };
    if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
        return Err(Error::DegenerateVariance {
            provider: provider.id.clone(),
            variance,
        });
    }
    Ok(NullMoments { mean, variance })
}

/// Null mean and variance of the naive Z-score at `params`.
pub fn null_moments(provider: &ProviderSummary, family: &Family, params: &ConfoundingParams) -> Result<NullMoments> {
    null_moments_at(provider, family, provider.linear_index(&params.nu), params.sigma2_alpha)
}

pub fn null_moments_batch(providers: &[ProviderSummary], family: &Family, params: &ConfoundingParams) -> Result<Vec<NullMoments>> {
    providers.iter().map(|p| null_moments(p, family, params)).collect()
}

/// `(Z - E[Z | null]) / sqrt(Var[Z | null])`.
pub fn corrected_z(provider: &ProviderSummary, family: &Family, params: &ConfoundingParams) -> Result<f64> {
    let z = naive_z(provider, family)?;
    let m = null_moments(provider, family, params)?;
    Ok((z - m.mean) / m.sd())
}

pub fn corrected_z_batch(providers: &[ProviderSummary], family: &Family, params: &ConfoundingParams) -> Result<Vec<f64>> {
    providers.iter().map(|p| corrected_z(p, family, params)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn prov(o: f64, e: f64, n: f64) -> ProviderSummary {
        ProviderSummary::new("p", o, e, n, vec![1.0])
    }

    #[test]
    fn naive_z_examples() {
        let pois = Family::poisson();
        assert_eq!(naive_z(&prov(9.0, 9.0, 4.0), &pois).unwrap(), 0.0);
        assert_eq!(naive_z(&prov(12.0, 9.0, 9.0), &pois).unwrap(), 1.0);
        let qp = Family::quasi_poisson(4.0).unwrap();
        assert_eq!(naive_z(&prov(12.0, 9.0, 9.0), &qp).unwrap(), 0.5);
    }

    #[test]
    fn poisson_moments_without_confounding_are_standard() {
        for n in [1.0, 37.0, 1e4] {
            let m = null_moments_at(&prov(0.0, 1.0, n), &Family::poisson(), 0.0, 0.0).unwrap();
            assert_eq!(m.mean, 0.0);
            assert_eq!(m.variance, 1.0);
        }
    }

    #[test]
    fn normal_moments_by_substitution() {
        let p = ProviderSummary::new("n", 0.0, 1.0, 100.0, vec![1.0]).with_n_patients(100);
        let fam = Family::normal(1.0).unwrap();
        let m = null_moments(&p, &fam, &ConfoundingParams::new(vec![0.25], 0.1).unwrap()).unwrap();
        assert_relative_eq!(m.mean, 2.5, epsilon = 1e-12);
        assert_relative_eq!(m.variance, 11.0, epsilon = 1e-12);
    }

    #[test]
    fn every_family_is_standard_at_zero_params() {
        let p = ProviderSummary::new("x", 3.0, 2.0, 50.0, vec![0.7, -1.2])
            .with_n_patients(50)
            .with_b3_sum(45.0);
        let zero = ConfoundingParams::zero(2);
        for fam in [
            Family::poisson(),
            Family::normal(2.0).unwrap(),
            Family::quasi_poisson(3.0).unwrap(),
            Family::exp_family(1.5).unwrap(),
        ] {
            let m = null_moments(&p, &fam, &zero).unwrap();
            assert_eq!(m.mean, 0.0, "{:?}", fam.kind);
            assert_eq!(m.variance, 1.0, "{:?}", fam.kind);
        }
    }

    #[test]
    fn corrected_z_examples() {
        let p = ProviderSummary::new("c", 125.0, 100.0, 100.0, vec![1.0]).with_n_patients(100);
        let fam = Family::normal(1.0).unwrap();
        // naive z = 25 / 10 = 2.5 = mean
        let params = ConfoundingParams::new(vec![0.25], 0.1).unwrap();
        assert_relative_eq!(corrected_z(&p, &fam, &params).unwrap(), 0.0, epsilon = 1e-12);

        let pois = Family::poisson();
        let zero = ConfoundingParams::zero(1);
        assert_eq!(corrected_z(&p, &pois, &zero).unwrap(), naive_z(&p, &pois).unwrap());
    }

    #[test]
    fn exp_family_variance_can_be_degenerate() {
        let p = ProviderSummary::new("deg", 1.0, 1.0, 10.0, vec![1.0]).with_b3_sum(10.0);
        let fam = Family::exp_family(1.0).unwrap();
        let err = null_moments_at(&p, &fam, -2.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariance { ref provider, .. } if provider == "deg"));
    }

    #[test]
    fn family_requirements_are_checked() {
        let p = prov(1.0, 1.0, 1.0);
        assert!(p.validate_for(&Family::normal(1.0).unwrap()).is_err());
        assert!(p.validate_for(&Family::exp_family(1.0).unwrap()).is_err());
        assert!(p.validate_for(&Family::poisson()).is_ok());
        let neg = ProviderSummary::new("n", -310.0, -320.0, 50.0, vec![0.1]).with_n_patients(50);
        assert!(neg.validate_for(&Family::normal(1.0).unwrap()).is_ok());
        assert!(neg.validate_for(&Family::poisson()).is_err());
        assert!(Family::new(FamilyKind::Poisson, 2.0).is_err());
        assert!(Family::normal(0.0).is_err());
        assert!(naive_z(&prov(f64::NAN, 1.0, 1.0), &Family::poisson()).is_err());
    }

    #[test]
    fn exp_family_agrees_with_poisson_to_first_order() {
        // For Poisson data b''' = b'' so b3_sum = ñ.
        let p = ProviderSummary::new("e", 0.0, 80.0, 80.0, vec![1.0]).with_b3_sum(80.0);
        let exact = Family::poisson();
        let approx = Family::exp_family(1.0).unwrap();
        let mut prev_ratio = f64::INFINITY;
        for k in 1..=6 {
            let s = 0.5_f64.powi(k);
            let (li, s2) = (0.5 * s, 0.2 * s * s);
            let a = null_moments_at(&p, &exact, li, s2).unwrap();
            let b = null_moments_at(&p, &approx, li, s2).unwrap();
            // error relative to the perturbation size must shrink
            let ratio = ((a.mean - b.mean).abs() / (80f64.sqrt()) + (a.variance - b.variance).abs() / 80.0) / s;
            assert!(ratio < prev_ratio, "k={k}: {ratio} !< {prev_ratio}");
            prev_ratio = ratio;
        }
        assert!(prev_ratio < 0.02);
    }

    proptest! {
        #[test]
        fn naive_z_is_antisymmetric(e in 0.5f64..500.0, r in 0.0f64..100.0, n in 0.5f64..500.0) {
            let fam = Family::poisson();
            let up = ProviderSummary::new("u", e + r, e, n, vec![]);
            let down = ProviderSummary::new("d", (e - r).max(0.0), e, n, vec![]);
            prop_assume!(e - r >= 0.0);
            let zu = naive_z(&up, &fam).unwrap();
            let zd = naive_z(&down, &fam).unwrap();
            prop_assert!((zu + zd).abs() <= 1e-12 * (1.0 + zu.abs()));
        }

        #[test]
        fn poisson_variance_is_positive(li in -5.0f64..5.0, s2 in 0.0f64..3.0, n in 0.1f64..1e4) {
            let m = null_moments_at(&prov(0.0, 1.0, n), &Family::poisson(), li, s2).unwrap();
            prop_assert!(m.variance > 0.0);
        }
    }
}
