use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gmm::em::{fit_1d, fit_2d};
use crate::gmm::{BivariateGmmModel, FitConfig, GmmModel};
use crate::powermodel::Scenario;

const BANK_FORMAT: u32 = 1;

/// Per-unit mixtures: a marginal for the first period and a (previous,
/// current) bivariate model for every later period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModelBank {
    pub format: u32,
    /// Content hash of the training data and fit configuration.
    pub key: String,
    pub n_periods: usize,
    pub n_rg: usize,
    pub n_ld: usize,
    /// `initial[u]`: first-period marginal of unit `u`.
    pub initial: Vec<GmmModel>,
    /// `transitions[u][t - 1]`: joint model of `(x[t - 1], x[t])` for unit `u`.
    pub transitions: Vec<Vec<BivariateGmmModel>>,
}

impl TransitionModelBank {
    pub fn n_units(&self) -> usize {
        self.n_rg + self.n_ld
    }

    pub fn initial(&self, unit: usize) -> &GmmModel {
        &self.initial[unit]
    }

    /// Model for the step into period `t` (zero-based, `t >= 1`).
    pub fn transition(&self, unit: usize, t: usize) -> &BivariateGmmModel {
        &self.transitions[unit][t - 1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial.len() != self.n_units() || self.transitions.len() != self.n_units() {
            return Err(Error::Shape("model bank unit count mismatch".into()));
        }
        for row in &self.transitions {
            if row.len() + 1 != self.n_periods {
                return Err(Error::Shape("model bank period coverage mismatch".into()));
            }
        }
        for m in &self.initial {
            m.validate()?;
        }
        for m in self.transitions.iter().flatten() {
            m.validate()?;
        }
        Ok(())
    }
}

fn check_historical(historical: &[Scenario]) -> Result<(usize, usize, usize)> {
    if historical.len() < 2 {
        return Err(Error::Shape(format!(
            "need at least 2 historical scenarios, got {}",
            historical.len()
        )));
    }
    let first = &historical[0];
    let shape = (first.n_periods(), first.rg_mw.len(), first.ld_mw.len());
    for s in historical {
        s.validate()?;
        let other = (s.n_periods(), s.rg_mw.len(), s.ld_mw.len());
        if other != shape {
            return Err(Error::Shape(format!(
                "historical scenario `{}` has (periods, rg, ld) = {:?}, expected {:?}",
                s.label, other, shape
            )));
        }
    }
    Ok(shape)
}

/// Cache key over the values (labels excluded) and the fit configuration.
pub fn bank_key(historical: &[Scenario], fit: &FitConfig) -> String {
    let mut h = Sha256::new();
    h.update(BANK_FORMAT.to_le_bytes());
    h.update(serde_json::to_vec(fit).expect("fit config serializes"));
    for s in historical {
        h.update((s.rg_mw.len() as u64).to_le_bytes());
        h.update((s.ld_mw.len() as u64).to_le_bytes());
        for row in s.rg_mw.iter().chain(&s.ld_mw) {
            h.update((row.len() as u64).to_le_bytes());
            for v in row {
                h.update(v.to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

// SplitMix64 finalizer, used to derive independent per-slot seeds.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn slot_config(fit: &FitConfig, unit: usize, t: usize) -> FitConfig {
    FitConfig {
        seed: mix64(fit.seed ^ mix64(((unit as u64) << 32) | t as u64)),
        ..*fit
    }
}

/// Fits one model per (unit, period) slot. Slot fits are independent and
/// seeded from `fit.seed` and the slot coordinates, so the result does not
/// depend on the rayon pool size.
pub fn build_model_bank(historical: &[Scenario], fit: &FitConfig) -> Result<TransitionModelBank> {
    fit.validate()?;
    let (n_periods, n_rg, n_ld) = check_historical(historical)?;
    let n_units = n_rg + n_ld;
    info!(
        "fitting {} models ({n_units} units x {n_periods} periods, {} historical scenarios)",
        n_units * n_periods,
        historical.len()
    );

    let initial = (0..n_units)
        .into_par_iter()
        .map(|u| {
            let xs: Vec<f64> = historical.iter().map(|s| s.unit_row(u)[0]).collect();
            fit_1d(&xs, &slot_config(fit, u, 0), false)
        })
        .collect::<Result<Vec<_>>>()?;

    let transitions = (0..n_units)
        .map(|u| {
            (1..n_periods)
                .into_par_iter()
                .map(|t| {
                    let pairs: Vec<[f64; 2]> = historical
                        .iter()
                        .map(|s| {
                            let row = s.unit_row(u);
                            [row[t - 1], row[t]]
                        })
                        .collect();
                    fit_2d(&pairs, &slot_config(fit, u, t), false)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let degenerate = initial.iter().filter(|(_, r)| r.degenerate).count()
        + transitions.iter().flatten().filter(|(_, r)| r.degenerate).count();
    if degenerate > 0 {
        warn!(
            "{degenerate} of {} slots had constant history and use a single component at the variance floor",
            n_units * n_periods
        );
    }
    let initial = initial.into_iter().map(|(m, _)| m).collect();
    let transitions = transitions
        .into_iter()
        .map(|row| row.into_iter().map(|(m, _)| m).collect())
        .collect();
    Ok(TransitionModelBank {
        format: BANK_FORMAT,
        key: bank_key(historical, fit),
        n_periods,
        n_rg,
        n_ld,
        initial,
        transitions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Built,
}

pub fn bank_cache_path(cache_dir: &Path, key: &str) -> PathBuf {
    cache_dir.join(format!("bank-{key}.json"))
}

/// Loads the bank for these inputs from `cache_dir`, or builds and stores it.
pub fn load_or_build_bank(
    historical: &[Scenario],
    fit: &FitConfig,
    cache_dir: &Path,
) -> Result<(TransitionModelBank, CacheStatus, PathBuf)> {
    check_historical(historical)?;
    let key = bank_key(historical, fit);
    let path = bank_cache_path(cache_dir, &key);
    if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bank: TransitionModelBank = serde_json::from_str(&text)?;
        if bank.format == BANK_FORMAT && bank.key == key {
            bank.validate()?;
            info!("model bank cache hit: {}", path.display());
            return Ok((bank, CacheStatus::Hit, path));
        }
    }
    let bank = build_model_bank(historical, fit)?;
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(&bank)?).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok((bank, CacheStatus::Built, path))
}
