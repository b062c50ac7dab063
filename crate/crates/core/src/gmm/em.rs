use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    bic, bivariate_log_density, clamp_spectrum, normal_log_density, BivariateGmmModel, Cov2, FitConfig, GmmModel,
};
use crate::error::{Error, Result};

/// Diagnostics of one `fit_*` call.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Selected component count.
    pub k: usize,
    pub log_likelihood: f64,
    pub bic: f64,
    /// BIC of the best restart for every component count tried.
    pub bic_by_k: Vec<(usize, f64)>,
    /// Log-likelihood after each E-step, for every EM run performed.
    pub ll_traces: Vec<Vec<f64>>,
    pub variance_floor: f64,
    /// Set when the data had a single distinct value.
    pub degenerate: bool,
}

/// Compensated (Neumaier) sum; EM monotonicity checks work at 1e-9 absolute.
fn stable_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn converged(prev: f64, ll: f64, tol: f64) -> bool {
    (ll - prev).abs() <= tol * ll.abs().max(1.0)
}

/// k-means++ seeding over points in `D` dimensions.
fn kmeans_pp<const D: usize, R: Rng>(points: &[[f64; D]], k: usize, rng: &mut R) -> Vec<[f64; D]> {
    let dist2 = |a: &[f64; D], b: &[f64; D]| (0..D).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn check_finite<'a>(values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for v in values {
        if !v.is_finite() {
            return Err(Error::Fit(format!("non-finite sample {v}")));
        }
    }
    Ok(())
}

fn count_distinct<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| a == b);
    v.len()
}

// ---------------------------------------------------------------- 1-D

struct Run1 {
    model: GmmModel,
    ll: f64,
    trace: Vec<f64>,
}

fn em_1d(xs: &[f64], init_means: Vec<f64>, floor: f64, cfg: &FitConfig) -> Run1 {
    let n = xs.len();
    let k = init_means.len();
    let nf = n as f64;
    let mean_all = xs.iter().sum::<f64>() / nf;
    let var_all = (xs.iter().map(|x| (x - mean_all).powi(2)).sum::<f64>() / nf).max(floor);

    let mut weights = vec![1.0 / k as f64; k];
    let mut means = init_means;
    let mut variances = vec![var_all; k];
    let mut resp = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut log_terms = vec![0.0; k];

    for iter in 0..=cfg.max_iters {
        // E-step
        let ll = stable_sum(xs.iter().enumerate().map(|(i, &x)| {
            for j in 0..k {
                log_terms[j] = weights[j].ln() + normal_log_density(x, means[j], variances[j]);
            }
            let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for j in 0..k {
                let e = (log_terms[j] - max).exp();
                resp[i * k + j] = e;
                s += e;
            }
            for j in 0..k {
                resp[i * k + j] /= s;
            }
            max + s.ln()
        }));
        let done = trace.last().is_some_and(|&prev| converged(prev, ll, cfg.tol));
        trace.push(ll);
        if done || iter == cfg.max_iters {
            break;
        }
        // M-step
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            weights[j] = nk / nf;
            if nk <= 0.0 {
                continue;
            }
            let mu = (0..n).map(|i| resp[i * k + j] * xs[i]).sum::<f64>() / nk;
            let var = (0..n).map(|i| resp[i * k + j] * (xs[i] - mu).powi(2)).sum::<f64>() / nk;
            means[j] = mu;
            variances[j] = var.max(floor);
        }
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);
    }
    Run1 {
        ll: *trace.last().unwrap(),
        model: GmmModel {
            weights,
            means,
            variances,
        },
        trace,
    }
}

/// Fits a univariate mixture, choosing the component count by BIC.
pub fn fit_gmm(samples: &[f64], config: &FitConfig) -> Result<GmmModel> {
    fit_gmm_with_report(samples, config).map(|(m, _)| m)
}

pub fn fit_gmm_with_report(samples: &[f64], config: &FitConfig) -> Result<(GmmModel, FitReport)> {
    fit_1d(samples, config, true)
}

/// `loud = false` leaves degenerate-data reporting to the caller.
pub(crate) fn fit_1d(samples: &[f64], config: &FitConfig, loud: bool) -> Result<(GmmModel, FitReport)> {
    config.validate()?;
    if samples.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 samples, got {}", samples.len())));
    }
    check_finite(samples.iter())?;
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = config.resolve_floor(hi - lo);
    let n = samples.len();

    let distinct = count_distinct(samples);
    if distinct < 2 {
        if loud && config.k_max > 1 {
            warn!("all {n} samples equal {lo}; returning a single component at the variance floor");
        }
        let model = GmmModel {
            weights: vec![1.0],
            means: vec![lo],
            variances: vec![floor],
        };
        let ll: f64 = samples.iter().map(|&x| model.log_density(x)).sum();
        let b = bic(ll, 2, n);
        return Ok((
            model,
            FitReport {
                k: 1,
                log_likelihood: ll,
                bic: b,
                bic_by_k: vec![(1, b)],
                ll_traces: vec![vec![ll]],
                variance_floor: floor,
                degenerate: true,
            },
        ));
    }
    if n < 2 * config.k_max {
        warn!("{n} samples for up to {} components", config.k_max);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let points: Vec<[f64; 1]> = samples.iter().map(|&x| [x]).collect();
    let k_top = config.k_max.min(distinct);
    let mut best: Option<(f64, Run1)> = None;
    let mut bic_by_k = Vec::new();
    let mut ll_traces = Vec::new();
    for k in 1..=k_top {
        // a single component has a unique optimum
        let restarts = if k == 1 { 1 } else { config.n_init };
        let mut best_k: Option<Run1> = None;
        for _ in 0..restarts {
            let init = kmeans_pp(&points, k, &mut rng).into_iter().map(|c| c[0]).collect();
            let run = em_1d(samples, init, floor, config);
            ll_traces.push(run.trace.clone());
            if best_k.as_ref().is_none_or(|b| run.ll > b.ll) {
                best_k = Some(run);
            }
        }
        let run = best_k.unwrap();
        let b = bic(run.ll, 3 * k - 1, n);
        bic_by_k.push((k, b));
        if best.as_ref().is_none_or(|(bb, _)| b < *bb) {
            best = Some((b, run));
        }
    }
    let (b, run) = best.unwrap();
    let report = FitReport {
        k: run.model.n_components(),
        log_likelihood: run.ll,
        bic: b,
        bic_by_k,
        ll_traces,
        variance_floor: floor,
        degenerate: false,
    };
    Ok((run.model, report))
}

// ---------------------------------------------------------------- 2-D

struct Run2 {
    model: BivariateGmmModel,
    ll: f64,
    trace: Vec<f64>,
}

fn weighted_cov(ps: &[[f64; 2]], resp: impl Fn(usize) -> f64, nk: f64, mu: [f64; 2]) -> Cov2 {
    let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
    for (i, p) in ps.iter().enumerate() {
        let r = resp(i);
        let dx = p[0] - mu[0];
        let dy = p[1] - mu[1];
        s00 += r * dx * dx;
        s01 += r * dx * dy;
        s11 += r * dy * dy;
    }
    [[s00 / nk, s01 / nk], [s01 / nk, s11 / nk]]
}

fn em_2d(ps: &[[f64; 2]], init_means: Vec<[f64; 2]>, floor: f64, cfg: &FitConfig) -> Run2 {
    let n = ps.len();
    let k = init_means.len();
    let nf = n as f64;
    let mu_all = [
        ps.iter().map(|p| p[0]).sum::<f64>() / nf,
        ps.iter().map(|p| p[1]).sum::<f64>() / nf,
    ];
    let cov_all = clamp_spectrum(weighted_cov(ps, |_| 1.0, nf, mu_all), floor);

    let mut weights = vec![1.0 / k as f64; k];
    let mut means = init_means;
    let mut covs = vec![cov_all; k];
    let mut resp = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut log_terms = vec![0.0; k];

    for iter in 0..=cfg.max_iters {
        let ll = stable_sum(ps.iter().enumerate().map(|(i, &p)| {
            for j in 0..k {
                log_terms[j] = weights[j].ln() + bivariate_log_density(p, means[j], &covs[j]);
            }
            let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for j in 0..k {
                let e = (log_terms[j] - max).exp();
                resp[i * k + j] = e;
                s += e;
            }
            for j in 0..k {
                resp[i * k + j] /= s;
            }
            max + s.ln()
        }));
        let done = trace.last().is_some_and(|&prev| converged(prev, ll, cfg.tol));
        trace.push(ll);
        if done || iter == cfg.max_iters {
            break;
        }
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            weights[j] = nk / nf;
            if nk <= 0.0 {
                continue;
            }
            let mu = [
                (0..n).map(|i| resp[i * k + j] * ps[i][0]).sum::<f64>() / nk,
                (0..n).map(|i| resp[i * k + j] * ps[i][1]).sum::<f64>() / nk,
            ];
            means[j] = mu;
            covs[j] = clamp_spectrum(weighted_cov(ps, |i| resp[i * k + j], nk, mu), floor);
        }
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);
    }
    Run2 {
        ll: *trace.last().unwrap(),
        model: BivariateGmmModel {
            weights,
            means,
            covariances: covs,
        },
        trace,
    }
}

/// Fits a bivariate full-covariance mixture, choosing the component count
/// by BIC. Covariance eigenvalues are kept at or above the variance floor,
/// so collinear or constant data is regularized rather than rejected.
pub fn fit_bivariate_gmm(pairs: &[[f64; 2]], config: &FitConfig) -> Result<BivariateGmmModel> {
    fit_bivariate_gmm_with_report(pairs, config).map(|(m, _)| m)
}

pub fn fit_bivariate_gmm_with_report(pairs: &[[f64; 2]], config: &FitConfig) -> Result<(BivariateGmmModel, FitReport)> {
    fit_2d(pairs, config, true)
}

pub(crate) fn fit_2d(pairs: &[[f64; 2]], config: &FitConfig, loud: bool) -> Result<(BivariateGmmModel, FitReport)> {
    config.validate()?;
    if pairs.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 pairs, got {}", pairs.len())));
    }
    check_finite(pairs.iter().flatten())?;
    let range = (0..2)
        .map(|a| {
            let lo = pairs.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
            let hi = pairs.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .fold(0.0, f64::max);
    let floor = config.resolve_floor(range);
    let n = pairs.len();
    let distinct = count_distinct(pairs);
    if n < 3 {
        warn!("{n} pairs is below the recommended minimum of 3");
    }

    if distinct < 2 {
        if loud && config.k_max > 1 {
            warn!(
                "all {n} pairs equal {:?}; returning a single component at the variance floor",
                pairs[0]
            );
        }
        let model = BivariateGmmModel {
            weights: vec![1.0],
            means: vec![pairs[0]],
            covariances: vec![[[floor, 0.0], [0.0, floor]]],
        };
        let ll: f64 = pairs.iter().map(|&p| model.log_density(p)).sum();
        let b = bic(ll, 5, n);
        return Ok((
            model,
            FitReport {
                k: 1,
                log_likelihood: ll,
                bic: b,
                bic_by_k: vec![(1, b)],
                ll_traces: vec![vec![ll]],
                variance_floor: floor,
                degenerate: true,
            },
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k_top = config.k_max.min(distinct);
    let mut best: Option<(f64, Run2)> = None;
    let mut bic_by_k = Vec::new();
    let mut ll_traces = Vec::new();
    for k in 1..=k_top {
        let restarts = if k == 1 { 1 } else { config.n_init };
        let mut best_k: Option<Run2> = None;
        for _ in 0..restarts {
            let init = kmeans_pp(pairs, k, &mut rng);
            let run = em_2d(pairs, init, floor, config);
            ll_traces.push(run.trace.clone());
            if best_k.as_ref().is_none_or(|b| run.ll > b.ll) {
                best_k = Some(run);
            }
        }
        let run = best_k.unwrap();
        let b = bic(run.ll, 6 * k - 1, n);
        bic_by_k.push((k, b));
        if best.as_ref().is_none_or(|(bb, _)| b < *bb) {
            best = Some((b, run));
        }
    }
    let (b, run) = best.unwrap();
    let report = FitReport {
        k: run.model.n_components(),
        log_likelihood: run.ll,
        bic: b,
        bic_by_k,
        ll_traces,
        variance_floor: floor,
        degenerate: false,
    };
    Ok((run.model, report))
}
