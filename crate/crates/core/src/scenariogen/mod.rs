//! Extreme scenario generation by sequential Monte Carlo over per-period
//! Gaussian mixtures, with periodic screening on the long-term risk index.
//!
//! One run:
//!
//! 1. `n_sam = (ceil(N_T / screen_interval) + 1) * n_ext` members are drawn
//!    from the first-period marginals.
//! 2. Each following period is drawn from the conditional slice of the
//!    unit's (previous, current) mixture at the member's previous value.
//!    `n_candidates` draws are taken and one is kept with probability
//!    proportional to `exp(tilt * delta / s)`, where `delta` is the local risk
//!    increment of the candidate and `s` the median positive increment.
//! 3. Whenever `t` is a multiple of `screen_interval` and `t < N_T`, the
//!    `n_ext` members with the lowest prefix `ILT` are discarded.
//! 4. At `t = N_T` the remaining members are ranked by full-horizon `ILT`
//!    and the top `n_ext` are returned.
//!
//! Randomness: member `m` draws period `t` from ChaCha8 keyed by the master
//! seed, on stream `m`, starting at word position `t << 32` (see
//! [`member_rng`]). Screening and worker count therefore never change a
//! surviving member's draws.

mod bank;

use std::time::Instant;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bank::{bank_cache_path, bank_key, build_model_bank, load_or_build_bank, CacheStatus, TransitionModelBank};

use crate::error::{Error, Result};
use crate::gmm::FitConfig;
use crate::powermodel::{PowerSystem, RiskParams, Scenario};
use crate::risk::{
    long_term_index, ramp_shortfalls_from_totals, risk_profile, shortage_from_totals, window_index, RiskProfile,
};

const SCALE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Number of extreme scenarios returned, and removed per screening.
    pub n_ext: usize,
    /// Periods between screenings.
    pub screen_interval: usize,
    /// Candidates drawn per unit and period for importance resampling.
    pub n_candidates: usize,
    /// Tilt strength; 0 disables the risk preference.
    pub tilt: f64,
    pub seed: u64,
    pub risk: RiskParams,
    pub fit: FitConfig,
    /// Per-unit upper clamp bounds in canonical order (renewables, loads);
    /// `None` or an empty list means unbounded above. The lower bound is
    /// always 0.
    #[serde(default)]
    pub upper_bounds: Vec<Option<f64>>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            n_ext: 100,
            screen_interval: 730,
            n_candidates: 8,
            tilt: 1.0,
            seed: 0,
            risk: RiskParams::default(),
            fit: FitConfig::default(),
            upper_bounds: Vec::new(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ext < 1 || self.screen_interval < 1 || self.n_candidates < 1 {
            return Err(Error::InvalidParams(
                "n_ext, screen_interval and n_candidates must all be >= 1".into(),
            ));
        }
        if !(self.tilt >= 0.0) || !self.tilt.is_finite() {
            return Err(Error::InvalidParams(format!(
                "tilt must be finite and >= 0, got {}",
                self.tilt
            )));
        }
        if self.upper_bounds.iter().flatten().any(|b| !(*b >= 0.0)) {
            return Err(Error::InvalidParams("upper bounds must be >= 0".into()));
        }
        self.risk.validate()?;
        self.fit.validate()
    }

    fn upper(&self, unit: usize) -> f64 {
        self.upper_bounds.get(unit).copied().flatten().unwrap_or(f64::INFINITY)
    }
}

/// `(ceil(n_periods / screen_interval) + 1) * n_ext`.
pub fn initial_sample_count(n_periods: usize, screen_interval: usize, n_ext: usize) -> usize {
    (n_periods.div_ceil(screen_interval) + 1) * n_ext
}

/// One-based periods at which screening happens: multiples of the interval
/// strictly below the horizon.
pub fn screening_periods(n_periods: usize, screen_interval: usize) -> Vec<usize> {
    (1..)
        .map(|k| k * screen_interval)
        .take_while(|&t| t < n_periods)
        .collect()
}

/// RNG for member `member` at zero-based period `period`.
pub fn member_rng(seed: u64, member: usize, period: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member as u64);
    rng.set_word_pos((period as u128) << 32);
    rng
}

/// Clamps a draw to `[0, upper]`.
#[inline]
pub fn clamp_draw(x: f64, upper: f64) -> f64 {
    x.max(0.0).min(upper)
}

/// A partially built candidate scenario with its running shortage and
/// fluctuation traces.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    /// Stable creation index; drives the RNG stream and tie-breaking.
    pub id: usize,
    /// Per-unit values in canonical order, periods `0..t_current`.
    pub rows: Vec<Vec<f64>>,
    pub ps_mw: Vec<f64>,
    pub pf_mw: Vec<f64>,
}

impl Member {
    pub fn label(&self) -> String {
        format!("cand-{:06}", self.id)
    }

    pub fn to_scenario(&self, n_rg: usize) -> Result<Scenario> {
        let mut rg = self.rows.clone();
        let ld = rg.split_off(n_rg);
        Scenario::new(self.label(), rg, ld)
    }

    /// `ILT` over the filled prefix with windows cut at the prefix end.
    pub fn prefix_ilt(&self, params: &RiskParams) -> f64 {
        let ips = window_index(&self.ps_mw, params.sigma, params.index_form);
        let ipf = window_index(&self.pf_mw, params.sigma, params.index_form);
        long_term_index(&ips, &ipf, params.theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<Member>,
    t_current: usize,
    n_periods: usize,
    n_rg: usize,
    initial_count: usize,
}

impl Ensemble {
    pub fn members(&self) -> &[Member] {
        &self.members
    }

    /// Number of filled periods (the last filled period, one-based).
    pub fn t_current(&self) -> usize {
        self.t_current
    }

    pub fn n_sam(&self) -> usize {
        self.members.len()
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn initial_count(&self) -> usize {
        self.initial_count
    }

    pub fn is_complete(&self) -> bool {
        self.t_current == self.n_periods
    }

    pub fn is_screening_due(&self, screen_interval: usize) -> bool {
        self.t_current.is_multiple_of(screen_interval) && self.t_current < self.n_periods
    }
}

// Aggregates needed to score one period.
#[derive(Debug, Clone, Copy)]
struct Grid {
    firm: f64,
    ramp_up: f64,
    ramp_down: f64,
    theta: f64,
}

impl Grid {
    fn new(system: &PowerSystem, risk: &RiskParams) -> Self {
        Grid {
            firm: risk.alpha_sg * system.total_capacity_mw(),
            ramp_up: system.total_ramp_up_mw(),
            ramp_down: system.total_ramp_down_mw(),
            theta: risk.theta,
        }
    }

    fn shortage(&self, load: f64, rg: f64) -> f64 {
        shortage_from_totals(load, rg, self.firm)
    }

    fn fluctuation(&self, load_prev: f64, load: f64, rg_prev: f64, rg: f64) -> f64 {
        let (up, down) = ramp_shortfalls_from_totals(load_prev, load, rg_prev, rg, self.ramp_up, self.ramp_down);
        up.max(down)
    }

    /// `theta * sgn[PS] PS^2 + (1 - theta) * sgn[PF] PF^2`.
    fn increment(&self, ps: f64, pf: f64) -> f64 {
        self.theta * ps * ps + (1.0 - self.theta) * pf * pf
    }
}

fn check_compat(bank: &TransitionModelBank, system: &PowerSystem, config: &GenerationConfig) -> Result<()> {
    config.validate()?;
    let inv = system.inventory();
    if inv.rg_units.len() != bank.n_rg || inv.ld_units.len() != bank.n_ld {
        return Err(Error::Shape(format!(
            "bank has {} renewable / {} load units, system has {} / {}",
            bank.n_rg,
            bank.n_ld,
            inv.rg_units.len(),
            inv.ld_units.len()
        )));
    }
    if !config.upper_bounds.is_empty() && config.upper_bounds.len() != bank.n_units() {
        return Err(Error::Shape(format!(
            "{} upper bounds for {} units",
            config.upper_bounds.len(),
            bank.n_units()
        )));
    }
    if bank.n_periods == 0 {
        return Err(Error::Shape("empty horizon".into()));
    }
    Ok(())
}

/// Draws the first period of every member from the unit marginals.
pub fn init_ensemble(bank: &TransitionModelBank, system: &PowerSystem, config: &GenerationConfig) -> Result<Ensemble> {
    check_compat(bank, system, config)?;
    let grid = Grid::new(system, &config.risk);
    let n_units = bank.n_units();
    let n_sam = initial_sample_count(bank.n_periods, config.screen_interval, config.n_ext);
    let members = (0..n_sam)
        .into_par_iter()
        .map(|id| {
            let mut rng = member_rng(config.seed, id, 0);
            let rows: Vec<Vec<f64>> = (0..n_units)
                .map(|u| vec![clamp_draw(bank.initial(u).sample(&mut rng), config.upper(u))])
                .collect();
            let (rg, load) = totals(&rows, bank.n_rg, 0);
            Member {
                id,
                ps_mw: vec![grid.shortage(load, rg)],
                pf_mw: vec![0.0],
                rows,
            }
        })
        .collect();
    Ok(Ensemble {
        members,
        t_current: 1,
        n_periods: bank.n_periods,
        n_rg: bank.n_rg,
        initial_count: n_sam,
    })
}

fn totals(rows: &[Vec<f64>], n_rg: usize, t: usize) -> (f64, f64) {
    let rg = rows[..n_rg].iter().map(|r| r[t]).sum();
    let load = rows[n_rg..].iter().map(|r| r[t]).sum();
    (rg, load)
}

/// Index drawn from `exp(tilt * delta / s)` weights, `s` the median positive
/// increment; uniform when every increment is zero.
fn select_candidate<R: Rng + ?Sized>(deltas: &[f64], tilt: f64, rng: &mut R) -> usize {
    let mut positive: Vec<f64> = deltas.iter().copied().filter(|&d| d > 0.0).collect();
    if positive.is_empty() {
        return rng.random_range(0..deltas.len());
    }
    positive.sort_by(f64::total_cmp);
    let mid = positive.len() / 2;
    let median = if positive.len() % 2 == 1 {
        positive[mid]
    } else {
        0.5 * (positive[mid - 1] + positive[mid])
    };
    let scale = median.max(SCALE_EPS);
    let logits: Vec<f64> = deltas.iter().map(|d| tilt * d / scale).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn advance_member(member: &mut Member, t: usize, bank: &TransitionModelBank, grid: &Grid, config: &GenerationConfig) {
    let n_units = bank.n_units();
    let n_rg = bank.n_rg;
    let slices: Vec<_> = (0..n_units)
        .map(|u| bank.transition(u, t).conditional_slice(member.rows[u][t - 1]))
        .collect();
    let mut rng = member_rng(config.seed, member.id, t);
    let (rg_prev, load_prev) = totals(&member.rows, n_rg, t - 1);

    let mut chosen = vec![0.0; n_units];
    if config.n_candidates == 1 {
        for u in 0..n_units {
            chosen[u] = clamp_draw(slices[u].sample(&mut rng), config.upper(u));
        }
    } else {
        // other units sit at their (clamped) conditional means while one is scored
        let anchors: Vec<f64> = (0..n_units)
            .map(|u| clamp_draw(slices[u].mean(), config.upper(u)))
            .collect();
        let anchor_rg: f64 = anchors[..n_rg].iter().sum();
        let anchor_load: f64 = anchors[n_rg..].iter().sum();
        let mut candidates = vec![0.0; config.n_candidates];
        let mut deltas = vec![0.0; config.n_candidates];
        for u in 0..n_units {
            for (c, d) in candidates.iter_mut().zip(deltas.iter_mut()) {
                *c = clamp_draw(slices[u].sample(&mut rng), config.upper(u));
                let (rg, load) = if u < n_rg {
                    (anchor_rg - anchors[u] + *c, anchor_load)
                } else {
                    (anchor_rg, anchor_load - anchors[u] + *c)
                };
                let ps = grid.shortage(load, rg);
                let pf = grid.fluctuation(load_prev, load, rg_prev, rg);
                *d = grid.increment(ps, pf);
            }
            chosen[u] = candidates[select_candidate(&deltas, config.tilt, &mut rng)];
        }
    }
    for (row, x) in member.rows.iter_mut().zip(&chosen) {
        row.push(*x);
    }
    let (rg, load) = totals(&member.rows, n_rg, t);
    member.ps_mw.push(grid.shortage(load, rg));
    member.pf_mw.push(grid.fluctuation(load_prev, load, rg_prev, rg));
}

/// Fills the next period for every member.
pub fn advance_period(
    ensemble: &mut Ensemble,
    bank: &TransitionModelBank,
    system: &PowerSystem,
    config: &GenerationConfig,
) -> Result<()> {
    if ensemble.t_current >= ensemble.n_periods {
        return Err(Error::Schedule(format!(
            "ensemble already complete at t = {}",
            ensemble.t_current
        )));
    }
    let grid = Grid::new(system, &config.risk);
    let t = ensemble.t_current;
    ensemble
        .members
        .par_iter_mut()
        .for_each(|m| advance_member(m, t, bank, &grid, config));
    ensemble.t_current += 1;
    Ok(())
}

/// Outcome of one screening step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRecord {
    /// One-based period at which screening happened.
    pub t: usize,
    pub before: usize,
    pub after: usize,
    /// Largest prefix ILT among removed members.
    pub cut_ilt: f64,
    /// Smallest prefix ILT among survivors.
    pub min_survivor_ilt: f64,
    pub removed_ids: Vec<usize>,
}

/// Removes the `n_ext` members with the lowest prefix `ILT`. Among equal
/// values the member with the higher id is removed first.
pub fn screen(ensemble: &mut Ensemble, config: &GenerationConfig) -> Result<ScreeningRecord> {
    if !ensemble.is_screening_due(config.screen_interval) {
        return Err(Error::Schedule(format!(
            "t = {} is not a screening period (interval {}, horizon {})",
            ensemble.t_current, config.screen_interval, ensemble.n_periods
        )));
    }
    let before = ensemble.n_sam();
    if before < 2 * config.n_ext {
        return Err(Error::Schedule(format!(
            "removing {} of {before} members would leave fewer than {}",
            config.n_ext, config.n_ext
        )));
    }
    let ilts: Vec<f64> = ensemble
        .members
        .par_iter()
        .map(|m| m.prefix_ilt(&config.risk))
        .collect();
    let mut order: Vec<usize> = (0..before).collect();
    order.sort_by(|&a, &b| {
        ilts[a]
            .total_cmp(&ilts[b])
            .then(ensemble.members[b].id.cmp(&ensemble.members[a].id))
    });
    let (removed, kept) = order.split_at(config.n_ext);
    let cut_ilt = removed.iter().map(|&i| ilts[i]).fold(f64::NEG_INFINITY, f64::max);
    let min_survivor_ilt = kept.iter().map(|&i| ilts[i]).fold(f64::INFINITY, f64::min);
    let mut drop = vec![false; before];
    for &i in removed {
        drop[i] = true;
    }
    let mut removed_ids: Vec<usize> = removed.iter().map(|&i| ensemble.members[i].id).collect();
    removed_ids.sort_unstable();
    let mut idx = 0;
    ensemble.members.retain(|_| {
        let keep = !drop[idx];
        idx += 1;
        keep
    });
    debug!(
        "screened at t = {}: {before} -> {} (cut ILT {cut_ilt})",
        ensemble.t_current,
        ensemble.n_sam()
    );
    Ok(ScreeningRecord {
        t: ensemble.t_current,
        before,
        after: ensemble.n_sam(),
        cut_ilt,
        min_survivor_ilt,
        removed_ids,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedScenario {
    /// One-based rank by descending ILT.
    pub rank: usize,
    pub member_id: usize,
    pub scenario: Scenario,
    pub profile: RiskProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub label: String,
    pub ilt: f64,
    pub sum_ips: f64,
    pub sum_ipf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_secs: f64,
}

/// Run record. Everything except `timing` is a deterministic function of
/// the inputs, configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: u32,
    pub seed: u64,
    pub config: GenerationConfig,
    pub n_periods: usize,
    pub unit_ids: Vec<String>,
    pub bank_key: String,
    pub initial_members: usize,
    pub screenings: Vec<ScreeningRecord>,
    /// Member count at start and after each screening.
    pub survivor_trace: Vec<usize>,
    pub final_members: usize,
    pub ranking: Vec<RankEntry>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutput {
    pub ranked: Vec<RankedScenario>,
    pub manifest: RunManifest,
}

/// Ranks scenarios by descending `ILT`; ties keep the lower id first.
pub fn rank_by_ilt(mut items: Vec<(usize, Scenario, RiskProfile)>) -> Vec<RankedScenario> {
    items.sort_by(|a, b| b.2.ilt.total_cmp(&a.2.ilt).then(a.0.cmp(&b.0)));
    items
        .into_iter()
        .enumerate()
        .map(|(i, (id, scenario, profile))| RankedScenario {
            rank: i + 1,
            member_id: id,
            scenario,
            profile,
        })
        .collect()
}

/// Runs the full procedure on a prebuilt bank.
pub fn generate_with_bank(
    bank: &TransitionModelBank,
    system: &PowerSystem,
    config: &GenerationConfig,
) -> Result<GenerationOutput> {
    let started = Instant::now();
    let mut ensemble = init_ensemble(bank, system, config)?;
    let mut screenings = Vec::new();
    let mut survivor_trace = vec![ensemble.n_sam()];
    info!(
        "generating: {} members, {} periods, {} screenings",
        ensemble.n_sam(),
        bank.n_periods,
        screening_periods(bank.n_periods, config.screen_interval).len()
    );
    while !ensemble.is_complete() {
        advance_period(&mut ensemble, bank, system, config)?;
        if ensemble.is_screening_due(config.screen_interval) {
            let rec = screen(&mut ensemble, config)?;
            survivor_trace.push(rec.after);
            screenings.push(rec);
        }
    }

    let final_members = ensemble.n_sam();
    let scored = ensemble
        .members
        .par_iter()
        .map(|m| {
            let s = m.to_scenario(bank.n_rg)?;
            let p = risk_profile(&s, system, &config.risk, None)?;
            Ok((m.id, s, p))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ranked = rank_by_ilt(scored);
    ranked.truncate(config.n_ext);

    let ranking = ranked
        .iter()
        .map(|r| RankEntry {
            rank: r.rank,
            label: r.scenario.label.clone(),
            ilt: r.profile.ilt,
            sum_ips: r.profile.sum_ips(),
            sum_ipf: r.profile.sum_ipf(),
        })
        .collect();
    let manifest = RunManifest {
        format: 1,
        seed: config.seed,
        config: config.clone(),
        n_periods: bank.n_periods,
        unit_ids: system.inventory().unit_ids().map(str::to_owned).collect(),
        bank_key: bank.key.clone(),
        initial_members: ensemble.initial_count,
        screenings,
        survivor_trace,
        final_members,
        ranking,
        timing: Timing {
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    };
    Ok(GenerationOutput { ranked, manifest })
}

/// Builds the model bank from `historical` and runs the procedure.
pub fn generate(historical: &[Scenario], system: &PowerSystem, config: &GenerationConfig) -> Result<GenerationOutput> {
    config.validate()?;
    let bank = build_model_bank(historical, &config.fit)?;
    generate_with_bank(&bank, system, config)
}
