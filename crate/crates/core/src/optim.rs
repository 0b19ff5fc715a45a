//! Derivative-free Nelder-Mead simplex maximizer.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Stop once the spread of function values across the simplex drops below this.
    pub f_tol: f64,
    /// ... and the simplex diameter drops below `x_tol (1 + |x_best|)`.
    pub x_tol: f64,
    pub max_iter: usize,
    /// Relative size of the initial simplex edges.
    pub initial_step: f64,
    /// Edge length used for coordinates that start at zero.
    pub zero_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            f_tol: 1e-10,
            x_tol: 1e-8,
            max_iter: 2000,
            initial_step: 0.1,
            zero_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Maximizes `objective` from `start`. Non-finite objective values are
/// treated as `-∞`, so infeasible regions are simply rejected.
pub fn nelder_mead<F>(mut objective: F, start: &[f64], config: &NelderMeadConfig) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("Nelder-Mead start must be finite".into()));
    }
    let n = start.len();
    let mut evaluations = 0usize;
    // Work with the loss -f so the bookkeeping reads as minimization.
    let mut loss = |x: &[f64]| {
        evaluations += 1;
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    };

    let f0 = loss(start);
    if !f0.is_finite() {
        return Err(Error::InvalidStart);
    }
    if n == 0 {
        return Ok(NelderMeadResult { argmax: vec![], value: -f0, iterations: 0, evaluations: 1, converged: true });
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f0));
    for j in 0..n {
        let mut x = start.to_vec();
        x[j] += if x[j] != 0.0 { config.initial_step * x[j].abs() } else { config.zero_step };
        let f = loss(&x);
        simplex.push((x, f));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        // Both tests are needed: symmetric vertices can tie in value while
        // straddling the optimum.
        if spread < config.f_tol && diameter(&simplex) < config.x_tol * (1.0 + norm(&simplex[0].0)) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let f_worst = simplex[n].1;
        let f_second = simplex[n - 1].1;
        let f_best = simplex[0].1;

        let xr = lerp(&centroid, &worst, -config.reflection);
        let fr = loss(&xr);
        if fr < f_best {
            let xe = lerp(&centroid, &worst, -config.expansion);
            let fe = loss(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < f_worst {
            let xc = lerp(&centroid, &xr, config.contraction);
            let fc = loss(&xc);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = lerp(&centroid, &worst, config.contraction);
            let fc = loss(&xc);
            let ok = fc < f_worst;
            (xc, fc, ok)
        };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = lerp(&best, &vertex.0, config.shrink);
            let f = loss(&x);
            *vertex = (x, f);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (argmax, best) = simplex.swap_remove(0);
    Ok(NelderMeadResult { argmax, value: -best, iterations, evaluations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let r = nelder_mead(
            |x| -((x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2)),
            &[0.0, 0.0],
            &NelderMeadConfig::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.argmax[0] - 1.0).abs() < 1e-5 && (r.argmax[1] - 2.0).abs() < 1e-5, "{:?}", r.argmax);
    }

    #[test]
    fn flat_quartic() {
        let r = nelder_mead(|x| -(x[0] - 3.0).powi(4), &[0.0], &NelderMeadConfig::default()).unwrap();
        assert!((r.argmax[0] - 3.0).abs() < 1e-3, "{:?}", r);
    }

    #[test]
    fn rosenbrock_valley() {
        let cfg = NelderMeadConfig { f_tol: 1e-14, max_iter: 5000, ..Default::default() };
        let r = nelder_mead(
            |x| -(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)),
            &[-1.2, 1.0],
            &cfg,
        )
        .unwrap();
        assert!((r.argmax[0] - 1.0).abs() < 1e-3 && (r.argmax[1] - 1.0).abs() < 1e-3, "{:?}", r);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let err = nelder_mead(|_| f64::NEG_INFINITY, &[0.0, 1.0], &NelderMeadConfig::default()).unwrap_err();
        assert_eq!(err, Error::InvalidStart);
    }

    #[test]
    fn retreats_from_infeasible_region() {
        // log barrier: only x > 0 is feasible, maximum at x = 0.5.
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::NEG_INFINITY } else { x[0].ln() - x[0] * 2.0 };
        let r = nelder_mead(f, &[3.0], &NelderMeadConfig::default()).unwrap();
        assert!((r.argmax[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| (3.0 * x[0]).sin() * (2.0 * x[1]).cos() - 0.1 * (x[0] * x[0] + x[1] * x[1]);
        for start in [[0.3, -0.2], [2.0, 1.0], [-1.5, 0.7]] {
            let r = nelder_mead(f, &start, &NelderMeadConfig::default()).unwrap();
            assert!(r.value >= f(&start));
        }
    }

    #[test]
    fn respects_iteration_cap() {
        let cfg = NelderMeadConfig { max_iter: 5, ..Default::default() };
        let r = nelder_mead(|x| -(x[0] * x[0] + x[1] * x[1]), &[10.0, 10.0], &cfg).unwrap();
        assert_eq!(r.iterations, 5);
        assert!(!r.converged);
    }
}
