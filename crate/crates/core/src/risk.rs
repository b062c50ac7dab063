//! Strategy-independent risk indices for persistent shortage and fluctuation.
//!
//! Per period `t` (zero-based):
//!
//! * `PS(t) = max(load(t) - alpha_sg * cap_sg - rg(t), 0)`
//! * `RU(t) = max(dload + drop in rg - ramp_up_sg, 0)`, `RD(t)` mirrored with
//!   `ramp_down_sg`; `PF(t) = max(RU(t), RD(t))` and `PF(0) = 0`.
//! * `IPS(t)`, `IPF(t)`: window sums over `W = [t, min(t + sigma, horizon - 1)]`
//!   of `sgn[X(tau)] * X(t)^2` ([`IndexForm::Literal`]) or
//!   `sgn[X(tau)] * X(tau)^2` ([`IndexForm::TauSquared`]).
//! * `ILT = sum_t theta * IPS(t) + (1 - theta) * IPF(t)`.
//!
//! `sgn[x]` is 1 for `x > 0` and 0 otherwise, with no tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powermodel::{IndexForm, PowerSystem, RiskParams, Scenario};

/// Per-period shortage/fluctuation traces and the scalar long-term index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub ps_mw: Vec<f64>,
    pub pf_mw: Vec<f64>,
    pub ips: Vec<f64>,
    pub ipf: Vec<f64>,
    pub ilt: f64,
    pub theta: f64,
}

impl RiskProfile {
    pub fn horizon(&self) -> usize {
        self.ps_mw.len()
    }

    /// Sum in period order starting from +0.0, the order `ilt` uses.
    pub fn sum_ips(&self) -> f64 {
        self.ips.iter().fold(0.0, |a, x| a + x)
    }

    pub fn sum_ipf(&self) -> f64 {
        self.ipf.iter().fold(0.0, |a, x| a + x)
    }
}

fn check_period(scenario: &Scenario, t: usize) -> Result<()> {
    let n = scenario.n_periods();
    if t >= n {
        return Err(Error::PeriodOutOfRange { t, n_periods: n });
    }
    Ok(())
}

#[inline]
pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn shortage_from_totals(load: f64, rg: f64, firm_capacity: f64) -> f64 {
    (load - firm_capacity - rg).max(0.0)
}

/// Ramp-up and ramp-down shortfalls between two consecutive periods, given
/// total load and renewable output in each.
#[inline]
pub(crate) fn ramp_shortfalls_from_totals(
    load_prev: f64,
    load: f64,
    rg_prev: f64,
    rg: f64,
    ramp_up: f64,
    ramp_down: f64,
) -> (f64, f64) {
    let up = ((load - load_prev) + (rg_prev - rg) - ramp_up).max(0.0);
    let down = ((load_prev - load) + (rg - rg_prev) - ramp_down).max(0.0);
    (up, down)
}

/// Power shortage `PS(t)` in MW, using the system's `alpha_sg`.
pub fn power_shortage(scenario: &Scenario, system: &PowerSystem, t: usize) -> Result<f64> {
    check_period(scenario, t)?;
    Ok(shortage_from_totals(
        scenario.total_load(t),
        scenario.total_rg(t),
        system.firm_capacity_mw(),
    ))
}

/// Ramp-up and ramp-down shortfalls `(RU(t), RD(t))`; both zero at `t = 0`.
pub fn ramp_shortfalls(scenario: &Scenario, system: &PowerSystem, t: usize) -> Result<(f64, f64)> {
    check_period(scenario, t)?;
    if t == 0 {
        return Ok((0.0, 0.0));
    }
    Ok(ramp_shortfalls_from_totals(
        scenario.total_load(t - 1),
        scenario.total_load(t),
        scenario.total_rg(t - 1),
        scenario.total_rg(t),
        system.total_ramp_up_mw(),
        system.total_ramp_down_mw(),
    ))
}

/// Power fluctuation `PF(t) = max(RU(t), RD(t))` in MW.
pub fn power_fluctuation(scenario: &Scenario, system: &PowerSystem, t: usize) -> Result<f64> {
    let (up, down) = ramp_shortfalls(scenario, system, t)?;
    Ok(up.max(down))
}

/// `PS` for periods `0..horizon`, with an explicit derating coefficient.
pub fn shortage_series(scenario: &Scenario, system: &PowerSystem, alpha_sg: f64, horizon: usize) -> Vec<f64> {
    let firm = alpha_sg * system.total_capacity_mw();
    (0..horizon)
        .map(|t| shortage_from_totals(scenario.total_load(t), scenario.total_rg(t), firm))
        .collect()
}

/// `PF` for periods `0..horizon`.
pub fn fluctuation_series(scenario: &Scenario, system: &PowerSystem, horizon: usize) -> Vec<f64> {
    let (ru, rd) = (system.total_ramp_up_mw(), system.total_ramp_down_mw());
    let mut out = Vec::with_capacity(horizon);
    for t in 0..horizon {
        if t == 0 {
            out.push(0.0);
            continue;
        }
        let (up, down) = ramp_shortfalls_from_totals(
            scenario.total_load(t - 1),
            scenario.total_load(t),
            scenario.total_rg(t - 1),
            scenario.total_rg(t),
            ru,
            rd,
        );
        out.push(up.max(down));
    }
    out
}

/// Window index of a nonnegative series; windows are cut at the end of
/// `series`, so passing a prefix gives the no-lookahead partial index.
pub fn window_index(series: &[f64], sigma: usize, form: IndexForm) -> Vec<f64> {
    let n = series.len();
    match form {
        IndexForm::Literal => {
            // positives[i] = number of positive entries in series[..i]
            let mut positives = Vec::with_capacity(n + 1);
            positives.push(0usize);
            for &x in series {
                positives.push(positives.last().unwrap() + usize::from(x > 0.0));
            }
            (0..n)
                .map(|t| {
                    let x = series[t];
                    if x > 0.0 {
                        let end = window_end(t, sigma, n);
                        (positives[end] - positives[t]) as f64 * x * x
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        IndexForm::TauSquared => (0..n)
            .map(|t| {
                let end = window_end(t, sigma, n);
                series[t..end].iter().map(|&x| sgn(x) * x * x).sum()
            })
            .collect(),
    }
}

#[inline]
fn window_end(t: usize, sigma: usize, n: usize) -> usize {
    t.saturating_add(sigma).saturating_add(1).min(n)
}

fn window_value(series: &[f64], t: usize, sigma: usize, form: IndexForm) -> f64 {
    let end = window_end(t, sigma, series.len());
    match form {
        IndexForm::Literal => {
            let count = series[t..end].iter().filter(|&&x| x > 0.0).count();
            count as f64 * series[t] * series[t]
        }
        IndexForm::TauSquared => series[t..end].iter().map(|&x| sgn(x) * x * x).sum(),
    }
}

/// Shortage index `IPS(t)` over the full horizon. Uses `params.alpha_sg`.
pub fn shortage_index(scenario: &Scenario, system: &PowerSystem, params: &RiskParams, t: usize) -> Result<f64> {
    check_period(scenario, t)?;
    let n = scenario.n_periods();
    let end = window_end(t, params.sigma, n);
    let ps = shortage_series(scenario, system, params.alpha_sg, end);
    Ok(window_value(&ps, t, params.sigma, params.index_form))
}

/// Fluctuation index `IPF(t)` over the full horizon.
pub fn fluctuation_index(scenario: &Scenario, system: &PowerSystem, params: &RiskParams, t: usize) -> Result<f64> {
    check_period(scenario, t)?;
    let n = scenario.n_periods();
    let end = window_end(t, params.sigma, n);
    let pf = fluctuation_series(scenario, system, end);
    Ok(window_value(&pf, t, params.sigma, params.index_form))
}

/// `ILT = sum_t theta * IPS(t) + (1 - theta) * IPF(t)`, accumulated in
/// period order. At `theta = 1` (resp. 0) this is bit-equal to summing `ips`
/// (resp. `ipf`) in period order.
pub fn long_term_index(ips: &[f64], ipf: &[f64], theta: f64) -> f64 {
    ips.iter()
        .zip(ipf)
        .fold(0.0, |acc, (&s, &f)| acc + (theta * s + (1.0 - theta) * f))
}

/// Full risk profile over `0..horizon` (default: the whole scenario). Index
/// windows are truncated at `horizon`.
pub fn risk_profile(
    scenario: &Scenario,
    system: &PowerSystem,
    params: &RiskParams,
    horizon: Option<usize>,
) -> Result<RiskProfile> {
    params.validate()?;
    let n = scenario.n_periods();
    let horizon = horizon.unwrap_or(n);
    if horizon > n {
        return Err(Error::PeriodOutOfRange {
            t: horizon,
            n_periods: n,
        });
    }
    let ps_mw = shortage_series(scenario, system, params.alpha_sg, horizon);
    let pf_mw = fluctuation_series(scenario, system, horizon);
    Ok(profile_from_series(ps_mw, pf_mw, params))
}

pub(crate) fn profile_from_series(ps_mw: Vec<f64>, pf_mw: Vec<f64>, params: &RiskParams) -> RiskProfile {
    let ips = window_index(&ps_mw, params.sigma, params.index_form);
    let ipf = window_index(&pf_mw, params.sigma, params.index_form);
    let ilt = long_term_index(&ips, &ipf, params.theta);
    RiskProfile {
        ps_mw,
        pf_mw,
        ips,
        ipf,
        ilt,
        theta: params.theta,
    }
}

/// A maximal run of consecutive periods with a positive value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// First period of the run (zero-based).
    pub start: usize,
    /// One past the last period.
    pub end: usize,
    /// Sum of the series over the run.
    pub mass: f64,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Positive runs of `series`, largest mass first (ties: earlier run first).
pub fn positive_clusters(series: &[f64]) -> Vec<Cluster> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < series.len() {
        if series[t] > 0.0 {
            let start = t;
            let mut mass = 0.0;
            while t < series.len() && series[t] > 0.0 {
                mass += series[t];
                t += 1;
            }
            out.push(Cluster { start, end: t, mass });
        } else {
            t += 1;
        }
    }
    out.sort_by(|a, b| b.mass.total_cmp(&a.mass).then(a.start.cmp(&b.start)));
    out
}
