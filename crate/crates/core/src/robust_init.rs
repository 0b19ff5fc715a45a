//! Robust starting values for the empirical-null fit.
//!
//! The naive Z-scores are regressed on `sqrt(ñ/a) W` with a Huber
//! M-estimator (IRLS, MAD scale re-estimated every iteration). The residual
//! scale then yields a moment estimate of `σ²_α`.

use crate::error::{Error, Result};
use crate::summary_model::{naive_z_batch, validate_dataset, Family, ProviderSummary};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Classical 95%-efficiency Huber constant.
pub const DEFAULT_HUBER_TUNING: f64 = 1.345;
pub const SCALE_FLOOR: f64 = 1e-8;
const MAD_CONSISTENCY: f64 = 0.674_489_750_196_081_7;
const MAX_ITER: usize = 200;
const COEF_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct HuberFit {
    pub coefficients: Vec<f64>,
    pub scale: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitEstimate {
    pub nu0: Vec<f64>,
    pub scale0: f64,
    pub sigma2_alpha0: f64,
    pub converged: bool,
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mad_scale(residuals: &[f64]) -> f64 {
    let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    (median(&abs) / MAD_CONSISTENCY).max(SCALE_FLOOR)
}

fn weighted_least_squares(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64]) -> Result<DVector<f64>> {
    let p = x.ncols();
    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    let mut xtwy = DVector::<f64>::zeros(p);
    for (i, &wi) in w.iter().enumerate() {
        let row = x.row(i);
        for a in 0..p {
            let xa = row[a] * wi;
            xtwy[a] += xa * y[i];
            for b in 0..=a {
                xtwx[(a, b)] += xa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtwx[(b, a)] = xtwx[(a, b)];
        }
    }
    let chol = xtwx
        .cholesky()
        .ok_or_else(|| Error::SingularDesign("weighted normal equations are not positive definite".into()))?;
    Ok(chol.solve(&xtwy))
}

/// Huber M-estimate of `y ~ X β` (no implicit intercept).
pub fn huber_regression(responses: &[f64], design: &DMatrix<f64>, tuning: f64) -> Result<HuberFit> {
    let (n, p) = design.shape();
    if responses.len() != n {
        return Err(Error::Validation(format!("{} responses for a design with {n} rows", responses.len())));
    }
    if n <= p {
        return Err(Error::Validation(format!("need more observations ({n}) than coefficients ({p})")));
    }
    if !(tuning > 0.0) {
        return Err(Error::Validation(format!("Huber tuning must be positive, got {tuning}")));
    }
    if responses.iter().any(|v| !v.is_finite()) || design.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("regression inputs must be finite".into()));
    }
    if p == 0 {
        return Ok(HuberFit { coefficients: vec![], scale: mad_scale(responses), iterations: 0, converged: true });
    }
    let svd = design.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-10) {
        return Err(Error::SingularDesign(format!("condition number exceeds 1e10 (σ_min = {smin:e})")));
    }

    let y = DVector::from_column_slice(responses);
    let mut beta = weighted_least_squares(design, &y, &vec![1.0; n])?;
    let mut weights = vec![1.0; n];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=MAX_ITER {
        iterations = it;
        let resid = &y - design * &beta;
        let scale = mad_scale(resid.as_slice());
        for (w, r) in weights.iter_mut().zip(resid.iter()) {
            let u = (r / scale).abs();
            *w = if u <= tuning { 1.0 } else { tuning / u };
        }
        let next = weighted_least_squares(design, &y, &weights)?;
        let change = (&next - &beta).amax();
        beta = next;
        if change < COEF_TOL {
            converged = true;
            break;
        }
    }
    let resid = &y - design * &beta;
    Ok(HuberFit {
        coefficients: beta.as_slice().to_vec(),
        scale: mad_scale(resid.as_slice()),
        iterations,
        converged,
    })
}

/// Design rows `sqrt(size/a) Wᵢ`.
pub fn scaled_design(providers: &[ProviderSummary], family: &Family) -> DMatrix<f64> {
    let p = providers.first().map_or(0, |pr| pr.covariates.len());
    DMatrix::from_fn(providers.len(), p, |i, j| {
        let pr = &providers[i];
        (family.size(pr) / family.dispersion).sqrt() * pr.covariates[j]
    })
}

/// Starting values `(ν⁽⁰⁾, s⁽⁰⁾, σ²_α⁽⁰⁾)` from a Huber fit of the naive scores.
pub fn initialize(providers: &[ProviderSummary], family: &Family, tuning: f64) -> Result<InitEstimate> {
    let p = validate_dataset(providers, family)?;
    if providers.len() < p + 2 {
        return Err(Error::Validation(format!(
            "need at least {} providers for {p} covariates, got {}",
            p + 2,
            providers.len()
        )));
    }
    let z = naive_z_batch(providers, family)?;
    let design = scaled_design(providers, family);
    let fit = huber_regression(&z, &design, tuning)?;

    let indices: Vec<f64> = providers.iter().map(|pr| pr.linear_index(&fit.coefficients)).collect();
    let sizes: Vec<f64> = providers.iter().map(|pr| family.size(pr)).collect();
    let varphi0 = ((fit.scale * fit.scale - 1.0 - median(&indices)) / median(&sizes)).max(0.0);
    Ok(InitEstimate {
        nu0: fit.coefficients,
        scale0: fit.scale,
        sigma2_alpha0: varphi0 * family.dispersion,
        converged: fit.converged,
    })
}
