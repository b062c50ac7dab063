//! Univariate and bivariate Gaussian mixtures.
//!
//! Fitting is EM with k-means++ seeding and BIC order selection (see [`em`]).
//! Models are plain data and serialize to JSON as parallel arrays:
//!
//! ```json
//! {"weights": [0.4, 0.6], "means": [1.0, 7.5], "variances": [0.3, 2.0]}
//! {"weights": [1.0], "means": [[0.0, 0.0]], "covariances": [[[1.0, 0.8], [0.8, 1.0]]]}
//! ```

pub(crate) mod em;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use em::{fit_bivariate_gmm, fit_bivariate_gmm_with_report, fit_gmm, fit_gmm_with_report, FitReport};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Largest component count tried.
    pub k_max: usize,
    pub max_iters: usize,
    /// Relative log-likelihood change below which EM stops.
    pub tol: f64,
    /// Lower bound on component variances (covariance eigenvalues), MW^2.
    /// `None` uses `(1e-4 * data range)^2`, at least [`MIN_VARIANCE_FLOOR`].
    pub variance_floor: Option<f64>,
    pub n_init: usize,
    pub seed: u64,
}

/// Absolute lower bound for the data-derived variance floor. Applies when the
/// data range is zero (e.g. photovoltaic output at night).
pub const MIN_VARIANCE_FLOOR: f64 = 1e-8;

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k_max: 3,
            max_iters: 100,
            tol: 1e-8,
            variance_floor: None,
            n_init: 4,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max < 1 || self.max_iters < 1 || self.n_init < 1 {
            return Err(Error::InvalidParams(
                "k_max, max_iters and n_init must all be >= 1".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParams(format!("tol must be > 0, got {}", self.tol)));
        }
        if let Some(f) = self.variance_floor {
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "variance_floor must be finite and > 0, got {f}"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn resolve_floor(&self, range: f64) -> f64 {
        self.variance_floor
            .unwrap_or_else(|| (1e-4 * range).powi(2).max(MIN_VARIANCE_FLOOR))
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidParams("mixture needs at least one component".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParams("mixture weights must be finite and >= 0".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidParams(format!("mixture weights sum to {total}, not 1")));
    }
    Ok(())
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
pub(crate) fn normal_log_density(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln() + d * d / variance)
}

fn normal_cdf(x: f64, mean: f64, variance: f64) -> f64 {
    0.5 * libm::erfc(-(x - mean) / (2.0 * variance).sqrt())
}

fn pick_component<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = k;
        }
        acc += w;
        if u < acc {
            return k;
        }
    }
    last_positive
}

/// One-dimensional Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let m = GmmModel {
            weights,
            means,
            variances,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_weights(&self.weights)?;
        let k = self.weights.len();
        if self.means.len() != k || self.variances.len() != k {
            return Err(Error::InvalidParams("mixture arrays differ in length".into()));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParams("mixture means must be finite".into()));
        }
        if self.variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidParams("mixture variances must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let terms: Vec<f64> = (0..self.n_components())
            .map(|k| self.weights[k].ln() + normal_log_density(x, self.means[k], self.variances[k]))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (0..self.n_components())
            .map(|k| self.weights[k] * normal_cdf(x, self.means[k], self.variances[k]))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    /// Draws a component by its weight, then a normal variate from it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = pick_component(&self.weights, rng);
        let z: f64 = rng.sample(StandardNormal);
        self.means[k] + self.variances[k].sqrt() * z
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    pub fn bic(&self, samples: &[f64]) -> f64 {
        let ll: f64 = samples.iter().map(|&x| self.log_density(x)).sum();
        bic(ll, 3 * self.n_components() - 1, samples.len())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: GmmModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

pub(crate) fn bic(log_likelihood: f64, n_params: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + n_params as f64 * (n as f64).ln()
}

pub type Cov2 = [[f64; 2]; 2];

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub(crate) fn sym_eigenvalues(c: &Cov2) -> (f64, f64) {
    let (a, b, d) = (c[0][0], c[0][1], c[1][1]);
    let mid = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mid - rad, mid + rad)
}

/// Projects a symmetric 2x2 matrix onto `{eigenvalues >= floor}` by
/// clamping its spectrum.
pub(crate) fn clamp_spectrum(c: Cov2, floor: f64) -> Cov2 {
    let (lo, hi) = sym_eigenvalues(&c);
    if lo >= floor {
        return c;
    }
    let (a, b, d) = (c[0][0], c[0][1], c[1][1]);
    // unit eigenvector for `hi`
    let (vx, vy) = if b.abs() > 1e-300 {
        let (x, y) = (hi - d, b);
        let n = (x * x + y * y).sqrt();
        (x / n, y / n)
    } else if a >= d {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let hi = hi.max(floor);
    let lo = floor;
    // Σ = hi·v vᵀ + lo·w wᵀ with w ⟂ v
    let (wx, wy) = (-vy, vx);
    let s00 = hi * vx * vx + lo * wx * wx;
    let s01 = hi * vx * vy + lo * wx * wy;
    let s11 = hi * vy * vy + lo * wy * wy;
    [[s00, s01], [s01, s11]]
}

#[inline]
pub(crate) fn bivariate_log_density(p: [f64; 2], mean: [f64; 2], c: &Cov2) -> f64 {
    let (a, b, d) = (c[0][0], c[0][1], c[1][1]);
    let det = a * d - b * b;
    let dx = p[0] - mean[0];
    let dy = p[1] - mean[1];
    let quad = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
    -LN_2PI - 0.5 * det.ln() - 0.5 * quad
}

/// Two-dimensional Gaussian mixture with full covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateGmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    pub covariances: Vec<Cov2>,
}

impl BivariateGmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<[f64; 2]>, covariances: Vec<Cov2>) -> Result<Self> {
        let m = BivariateGmmModel {
            weights,
            means,
            covariances,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_weights(&self.weights)?;
        let k = self.weights.len();
        if self.means.len() != k || self.covariances.len() != k {
            return Err(Error::InvalidParams("mixture arrays differ in length".into()));
        }
        if self.means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParams("mixture means must be finite".into()));
        }
        for c in &self.covariances {
            if c.iter().flatten().any(|v| !v.is_finite()) || c[0][1] != c[1][0] {
                return Err(Error::InvalidParams("covariance must be finite and symmetric".into()));
            }
            let (lo, _) = sym_eigenvalues(c);
            if !(lo > 0.0) || c[0][0] * c[1][1] - c[0][1] * c[0][1] <= 0.0 {
                return Err(Error::InvalidParams("covariance must be positive definite".into()));
            }
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn log_density(&self, p: [f64; 2]) -> f64 {
        let terms: Vec<f64> = (0..self.n_components())
            .map(|k| self.weights[k].ln() + bivariate_log_density(p, self.means[k], &self.covariances[k]))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn density(&self, p: [f64; 2]) -> f64 {
        self.log_density(p).exp()
    }

    /// Marginal mixture of coordinate `axis` (0 or 1).
    pub fn marginal(&self, axis: usize) -> GmmModel {
        GmmModel {
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| m[axis]).collect(),
            variances: self.covariances.iter().map(|c| c[axis][axis]).collect(),
        }
    }

    /// Exact mixture for coordinate 1 given coordinate 0 equals `x_prev`.
    ///
    /// Component `k` keeps weight proportional to `w_k * N(x_prev; mu_k0,
    /// S_k00)` and is conditioned in closed form. If every component density
    /// at `x_prev` underflows, the original weights are kept.
    pub fn conditional_slice(&self, x_prev: f64) -> GmmModel {
        let k = self.n_components();
        let mut log_w = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut variances = Vec::with_capacity(k);
        for i in 0..k {
            let [m0, m1] = self.means[i];
            let c = &self.covariances[i];
            let gain = c[1][0] / c[0][0];
            log_w.push(self.weights[i].ln() + normal_log_density(x_prev, m0, c[0][0]));
            means.push(m1 + gain * (x_prev - m0));
            // Schur complement; bounded below by the smallest eigenvalue.
            let schur = c[1][1] - gain * c[1][0];
            variances.push(schur.max(sym_eigenvalues(c).0));
        }
        let total = log_sum_exp(&log_w);
        let weights = if total.is_finite() {
            let mut w: Vec<f64> = log_w.iter().map(|l| (l - total).exp()).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            w
        } else {
            self.weights.clone()
        };
        GmmModel {
            weights,
            means,
            variances,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: BivariateGmmModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

/// Normal density helper for tests and oracles.
pub fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt()
}
