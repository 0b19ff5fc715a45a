//! Gauss-Hermite rules and a Laplace-centred (adaptive) variant.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights for `∫ f(x) e^{-x²} dx ≈ Σ wₖ f(xₖ)`, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `wₖ e^{xₖ²}`, for integrands that carry their own Gaussian factor.
    pub scaled_weights: Vec<f64>,
}

impl GaussHermite {
    /// Roots by Newton iteration on the orthonormal Hermite recurrence,
    /// which keeps full relative precision in the smallest weights.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let pim4 = PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let (mut p1, mut p2) = (pim4, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        x.reverse();
        w.reverse();
        let scaled_weights = x.iter().zip(&w).map(|(xi, wi)| wi * (xi * xi).exp()).collect();
        Self { nodes: x, weights: w, scaled_weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(Y)]` for `Y ~ N(mean, variance)`.
    pub fn normal_expectation(&self, mean: f64, variance: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let scale = (2.0 * variance).sqrt();
        let total: f64 = self.weights.iter().sum();
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mean + scale * x)).sum::<f64>() / total
    }
}

/// Shared rule for `n` nodes, built once per process.
pub fn gauss_hermite(n: usize) -> Arc<GaussHermite> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(n).or_insert_with(|| Arc::new(GaussHermite::new(n))).clone()
}

/// A log-integrand with analytic first and second derivatives.
pub trait LogIntegrand {
    fn value(&self, z: f64) -> f64;
    fn d1(&self, z: f64) -> f64;
    fn d2(&self, z: f64) -> f64;
}

const MODE_LIMIT: f64 = 60.0;

/// Maximizer of a unimodal log-integrand: outward search for a sign change
/// of the derivative, then Newton steps safeguarded by bisection.
pub fn find_mode<L: LogIntegrand>(f: &L, guess: f64) -> f64 {
    let guess = guess.clamp(-MODE_LIMIT, MODE_LIMIT);
    let g0 = f.d1(guess);
    if g0 == 0.0 || !g0.is_finite() {
        return guess;
    }
    let dir = g0.signum();
    let (mut lo, mut hi) = (guess, guess);
    let mut step = 0.5;
    while step < 1e4 {
        let next = guess + dir * step;
        if dir > 0.0 {
            lo = hi;
            hi = next;
        } else {
            hi = lo;
            lo = next;
        }
        if !(f.d1(next) * dir > 0.0) {
            break;
        }
        step *= 2.0;
    }
    // Invariant: d1(lo) > 0 ≥ d1(hi).
    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        let g = f.d1(z);
        if g > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let h = f.d2(z);
        let newton = if h < 0.0 { z - g / h } else { f64::NAN };
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - z).abs() < 1e-12 * (1.0 + z.abs()) || hi - lo < 1e-13 * (1.0 + z.abs()) {
            return next;
        }
        z = next;
    }
    z
}

/// `∫ exp(L(z)) dz` by Gauss-Hermite nodes placed at the mode of `L` and
/// scaled by its curvature.
pub fn adaptive_integral<L: LogIntegrand>(f: &L, rule: &GaussHermite, guess: f64) -> f64 {
    let mode = find_mode(f, guess);
    let curv = f.d2(mode);
    let s = if curv < 0.0 && curv.is_finite() { 1.0 / (-curv).sqrt() } else { 1.0 };
    let terms: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.scaled_weights)
        .map(|(t, w)| w.ln() + f.value(mode + SQRT_2 * s * t))
        .collect();
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return if peak == f64::INFINITY { f64::INFINITY } else { 0.0 };
    }
    let sum: f64 = terms.iter().map(|v| (v - peak).exp()).sum();
    SQRT_2 * s * (peak + sum.ln()).exp()
}
