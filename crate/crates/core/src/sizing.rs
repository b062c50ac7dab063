//! Greedy long-duration storage sizing over a scenario set.
//!
//! Per scenario, the residual `r(t) = load(t) - alpha_sg * cap_sg - rg(t)` is
//! served by a store that starts full, discharges to cover deficits and
//! recharges from surpluses (charging losses applied on the way in). Power
//! capacity is the largest deficit; energy capacity is the smallest value,
//! found by bisection to [`ENERGY_TOLERANCE_MWH`], that leaves no deficit
//! unserved. The cumulative deficit is always feasible and brackets the
//! search. The set's requirement is the component-wise maximum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powermodel::{PowerSystem, Scenario};

pub const ENERGY_TOLERANCE_MWH: f64 = 0.1;
pub const DEFAULT_EFFICIENCY: f64 = 0.8;
const UNSERVED_EPS_MWH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub power_mw: f64,
    pub energy_mwh: f64,
    /// Round-trip efficiency in (0, 1].
    pub efficiency: f64,
}

fn check_efficiency(efficiency: f64) -> Result<()> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "efficiency must lie in (0, 1], got {efficiency}"
        )));
    }
    Ok(())
}

/// Signed residual per period: positive is a deficit, negative a surplus.
pub fn residual_profile(scenario: &Scenario, system: &PowerSystem) -> Vec<f64> {
    let firm = system.firm_capacity_mw();
    (0..scenario.n_periods())
        .map(|t| scenario.total_load(t) - firm - scenario.total_rg(t))
        .collect()
}

/// Unserved energy (MWh, one-period steps) of the greedy policy with a store
/// of the given size that starts full.
pub fn greedy_unserved(residual: &[f64], power_mw: f64, energy_mwh: f64, efficiency: f64) -> f64 {
    let mut soc = energy_mwh;
    let mut unserved = 0.0;
    for &r in residual {
        if r > 0.0 {
            let out = r.min(power_mw).min(soc);
            soc -= out;
            unserved += r - out;
        } else if r < 0.0 {
            let input = (-r).min(power_mw).min((energy_mwh - soc) / efficiency);
            soc = (soc + input * efficiency).min(energy_mwh);
        }
    }
    unserved
}

fn size_residual(residual: &[f64], efficiency: f64) -> StorageSpec {
    let power_mw = residual.iter().copied().fold(0.0, f64::max);
    if power_mw <= 0.0 {
        return StorageSpec {
            power_mw: 0.0,
            energy_mwh: 0.0,
            efficiency,
        };
    }
    let feasible = |e: f64| greedy_unserved(residual, power_mw, e, efficiency) <= UNSERVED_EPS_MWH;
    let mut lo = 0.0;
    let mut hi: f64 = residual.iter().filter(|r| **r > 0.0).sum();
    if feasible(lo) {
        hi = lo;
    }
    while hi - lo > ENERGY_TOLERANCE_MWH {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    StorageSpec {
        power_mw,
        energy_mwh: hi,
        efficiency,
    }
}

pub fn size_scenario(scenario: &Scenario, system: &PowerSystem, efficiency: f64) -> Result<StorageSpec> {
    check_efficiency(efficiency)?;
    Ok(size_residual(&residual_profile(scenario, system), efficiency))
}

/// Component-wise maximum of the per-scenario requirements.
pub fn size_storage(scenarios: &[Scenario], system: &PowerSystem, efficiency: f64) -> Result<StorageSpec> {
    check_efficiency(efficiency)?;
    if scenarios.is_empty() {
        return Err(Error::InvalidParams("sizing needs at least one scenario".into()));
    }
    let mut spec = StorageSpec {
        power_mw: 0.0,
        energy_mwh: 0.0,
        efficiency,
    };
    for s in scenarios {
        let one = size_scenario(s, system, efficiency)?;
        spec.power_mw = spec.power_mw.max(one.power_mw);
        spec.energy_mwh = spec.energy_mwh.max(one.energy_mwh);
    }
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Number of extreme scenarios added to the base set.
    pub k: usize,
    pub power_mw: f64,
    pub energy_mwh: f64,
}

/// Sizes `base` plus the first `k` of `extremes` for each `k` in `ks`.
pub fn sizing_sweep(
    base: &[Scenario],
    extremes: &[Scenario],
    ks: &[usize],
    system: &PowerSystem,
    efficiency: f64,
) -> Result<Vec<SweepPoint>> {
    check_efficiency(efficiency)?;
    let base_specs = base
        .iter()
        .map(|s| size_scenario(s, system, efficiency))
        .collect::<Result<Vec<_>>>()?;
    let ext_specs = extremes
        .iter()
        .map(|s| size_scenario(s, system, efficiency))
        .collect::<Result<Vec<_>>>()?;
    ks.iter()
        .map(|&k| {
            if k > extremes.len() {
                return Err(Error::InvalidParams(format!(
                    "sweep asks for {k} extreme scenarios, only {} available",
                    extremes.len()
                )));
            }
            let chosen: Vec<&StorageSpec> = base_specs.iter().chain(&ext_specs[..k]).collect();
            if chosen.is_empty() {
                return Err(Error::InvalidParams("sizing needs at least one scenario".into()));
            }
            Ok(SweepPoint {
                k,
                power_mw: chosen.iter().map(|s| s.power_mw).fold(0.0, f64::max),
                energy_mwh: chosen.iter().map(|s| s.energy_mwh).fold(0.0, f64::max),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powermodel::{RiskParams, SynchronousGenerator, UnitInventory};
    use proptest::prelude::*;

    fn system() -> PowerSystem {
        let inv = UnitInventory::new(
            vec!["rg".into()],
            vec!["ld".into()],
            vec![SynchronousGenerator::new("sg", 200.0, 60.0, 60.0)],
        );
        PowerSystem::new(inv, RiskParams::default()).unwrap()
    }

    /// Scenario whose residual equals `r` under the reference system (firm 190).
    fn from_residual(r: &[f64]) -> Scenario {
        let ld: Vec<f64> = r.iter().map(|x| (190.0 + x).max(0.0) + 100.0).collect();
        Scenario::new("r", vec![vec![100.0; r.len()]], vec![ld]).unwrap()
    }

    #[test]
    fn residual_matches_shortage() {
        let sys = system();
        let s = Scenario::new("s", vec![vec![20.0, 80.0]], vec![vec![264.0, 100.0]]).unwrap();
        let r = residual_profile(&s, &sys);
        assert!((r[0] - 54.0).abs() < 1e-12);
        for (t, x) in r.iter().enumerate() {
            assert_eq!(x.max(0.0), crate::risk::power_shortage(&s, &sys, t).unwrap());
        }
    }

    #[test]
    fn residual_under_doubled_load() {
        let sys = system();
        let s = Scenario::new("s", vec![vec![20.0, 80.0, 0.0]], vec![vec![264.0, 100.0, 50.0]]).unwrap();
        let doubled = Scenario::new("d", s.rg_mw.clone(), vec![s.ld_mw[0].iter().map(|x| 2.0 * x).collect()]).unwrap();
        let r = residual_profile(&doubled, &sys);
        for (t, x) in r.iter().enumerate() {
            assert_eq!(*x, 2.0 * s.ld_mw[0][t] - 190.0 - s.rg_mw[0][t]);
        }
    }

    #[test]
    fn all_surplus_needs_nothing() {
        let s = from_residual(&[-10.0, -50.0, -1.0]);
        let spec = size_storage(&[s], &system(), 0.8).unwrap();
        assert_eq!((spec.power_mw, spec.energy_mwh), (0.0, 0.0));
    }

    #[test]
    fn single_pulse() {
        let mut r = vec![-100.0; 10];
        r.extend([54.0, 54.0, 54.0]);
        r.extend([-10.0; 4]);
        let spec = size_storage(&[from_residual(&r)], &system(), 1.0).unwrap();
        assert!((spec.power_mw - 54.0).abs() < 1e-9);
        assert!(
            spec.energy_mwh >= 162.0 - 1e-9 && spec.energy_mwh <= 162.1,
            "{}",
            spec.energy_mwh
        );
    }

    #[test]
    fn bad_inputs() {
        assert!(size_storage(&[], &system(), 0.8).is_err());
        assert!(size_storage(&[from_residual(&[1.0])], &system(), 0.0).is_err());
        assert!(size_storage(&[from_residual(&[1.0])], &system(), 1.5).is_err());
    }

    // Independent simulation: hour by hour with explicit state, scanning
    // energy capacities on a fine grid.
    fn brute_min_energy(r: &[f64], eff: f64, step: f64) -> f64 {
        let p = r.iter().copied().fold(0.0, f64::max);
        let total: f64 = r.iter().filter(|x| **x > 0.0).sum();
        let mut e = 0.0;
        loop {
            let mut soc = e;
            let mut ok = true;
            for &x in r {
                if x > 0.0 {
                    if soc + 1e-9 < x {
                        ok = false;
                        break;
                    }
                    soc = (soc - x).max(0.0);
                } else {
                    let room = e - soc;
                    soc += (-x).min(p).min(room / eff) * eff;
                }
            }
            if ok || e > total {
                return e;
            }
            e += step;
        }
    }

    proptest! {
        #[test]
        fn bisection_matches_brute_force(
            r in prop::collection::vec(prop_oneof![-80.0f64..0.0, 0.0f64..40.0], 1..40),
            eff in 0.5f64..=1.0,
        ) {
            let spec = size_storage(&[from_residual(&r)], &system(), eff).unwrap();
            let brute = brute_min_energy(&r, eff, 0.01);
            prop_assert!(spec.energy_mwh >= brute - 0.011, "{} vs {}", spec.energy_mwh, brute);
            prop_assert!(spec.energy_mwh <= brute + ENERGY_TOLERANCE_MWH + 1e-9, "{} vs {}", spec.energy_mwh, brute);
        }

        #[test]
        fn superset_never_shrinks(
            rs in prop::collection::vec(prop::collection::vec(-80.0f64..40.0, 12), 2..6),
            cut in 1usize..6,
        ) {
            let all: Vec<Scenario> = rs.iter().map(|r| from_residual(r)).collect();
            let cut = cut.min(all.len());
            let small = size_storage(&all[..cut], &system(), 0.8).unwrap();
            let big = size_storage(&all, &system(), 0.8).unwrap();
            prop_assert!(big.power_mw >= small.power_mw && big.energy_mwh >= small.energy_mwh);
            let mut dup = all.clone();
            dup.extend(all.iter().cloned());
            prop_assert_eq!(size_storage(&dup, &system(), 0.8).unwrap(), big);
        }
    }

    #[test]
    fn sweep_is_monotone() {
        let base = vec![from_residual(&[-20.0, 5.0, -20.0])];
        let ext: Vec<Scenario> = (1..=6)
            .map(|k| from_residual(&[-5.0, 10.0 * k as f64, 3.0 * k as f64, -5.0]))
            .collect();
        let pts = sizing_sweep(&base, &ext, &[0, 2, 4, 6], &system(), 0.8).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].power_mw >= w[0].power_mw && w[1].energy_mwh >= w[0].energy_mwh);
        }
        assert!(sizing_sweep(&base, &ext, &[7], &system(), 0.8).is_err());
    }
}
