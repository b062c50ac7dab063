//! Deterministic synthetic wind, photovoltaic and load years.
//!
//! The shapes follow a central-European pattern: windier winters, a
//! seasonal solar envelope with zero output at night, and a winter-peaking
//! load with daily and weekly cycles. Magnitudes default to a 300 MW wind,
//! 300 MW photovoltaic, 200 MW synchronous system with a peak load near
//! 264 MW. Useful for examples, benchmarks and tests; not a substitute for
//! measured data.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::{
    write_json, write_wide_csv, DatasetDescriptor, ExtraPeriods, UnitRole, UnitSource, ValueKind, DESCRIPTOR_VERSION,
};
use crate::powermodel::SynchronousGenerator;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticYears {
    pub labels: Vec<String>,
    /// `[year][period]` capacity factors.
    pub wind_cf: Vec<Vec<f64>>,
    pub pv_cf: Vec<Vec<f64>>,
    /// `[year][period]` MW.
    pub load_mw: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub n_years: usize,
    pub n_periods: usize,
    pub first_year: i32,
    /// Mean annual peak of the load, MW.
    pub peak_load_mw: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_years: 40,
            n_periods: 8760,
            first_year: 1980,
            peak_load_mw: 264.0,
            seed: 2012,
        }
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn columns(m: &[Vec<f64>]) -> Vec<&[f64]> {
    m.iter().map(Vec::as_slice).collect()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Ar1 {
    phi: f64,
    state: f64,
}

impl Ar1 {
    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let e = gauss(rng);
        self.state = self.phi * self.state + (1.0 - self.phi * self.phi).sqrt() * e;
        self.state
    }
}

/// Hourly periods; `n_periods` need not be a whole year.
pub fn synthetic_years(cfg: &SyntheticConfig) -> SyntheticYears {
    let mut out = SyntheticYears {
        labels: Vec::with_capacity(cfg.n_years),
        wind_cf: Vec::with_capacity(cfg.n_years),
        pv_cf: Vec::with_capacity(cfg.n_years),
        load_mw: Vec::with_capacity(cfg.n_years),
    };
    for y in 0..cfg.n_years {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(1_000_003).wrapping_add(y as u64));
        let year_wind: f64 = 0.25 * gauss(&mut rng);
        let year_load: f64 = 0.03 * gauss(&mut rng);
        let mut wind = Ar1 {
            phi: 0.985,
            state: gauss(&mut rng),
        };
        let mut cloud = Ar1 {
            phi: 0.95,
            state: gauss(&mut rng),
        };
        let mut noise = Ar1 { phi: 0.9, state: 0.0 };

        let mut w = Vec::with_capacity(cfg.n_periods);
        let mut p = Vec::with_capacity(cfg.n_periods);
        let mut l = Vec::with_capacity(cfg.n_periods);
        for t in 0..cfg.n_periods {
            let day = (t / 24) as f64;
            let hour = (t % 24) as f64;
            // +1 mid-winter, -1 mid-summer
            let winter = (2.0 * PI * (day + 10.0) / 365.0).cos();

            let z = wind.step(&mut rng);
            w.push(logistic(-1.0 + 0.55 * winter + year_wind + 1.4 * z).clamp(0.0, 1.0));

            let day_len = 12.0 - 4.0 * winter;
            let sunrise = 12.0 - day_len / 2.0;
            let elevation = ((hour + 0.5 - sunrise) / day_len * PI).sin().max(0.0);
            let elevation = if hour + 0.5 < sunrise || hour + 0.5 > sunrise + day_len {
                0.0
            } else {
                elevation
            };
            let clear = 0.75 - 0.3 * winter;
            let c = logistic(0.8 + 1.5 * cloud.step(&mut rng));
            p.push((clear * elevation * c).clamp(0.0, 1.0));

            let daily =
                0.5 * (1.0 - (2.0 * PI * (hour - 4.0) / 24.0).cos()) + 0.15 * (-(hour - 18.5).powi(2) / 4.0).exp();
            let weekend = if (t / 24) % 7 >= 5 { -0.07 } else { 0.0 };
            let shape = 0.62 + 0.09 * winter + 0.22 * daily + weekend + 0.025 * noise.step(&mut rng) + year_load;
            l.push((cfg.peak_load_mw * shape).max(0.0));
        }
        out.labels.push((cfg.first_year + y as i32).to_string());
        out.wind_cf.push(w);
        out.pv_cf.push(p);
        out.load_mw.push(l);
    }
    out
}

/// Installed capacities and synchronous fleet of the reference case.
pub const WIND_CAPACITY_MW: f64 = 300.0;
pub const PV_CAPACITY_MW: f64 = 300.0;

pub fn reference_generators() -> Vec<SynchronousGenerator> {
    vec![SynchronousGenerator::new("sg1", 200.0, 60.0, 60.0)]
}

/// Writes `wind.csv`, `pv.csv`, `load.csv` and `dataset.json` into `dir`.
pub fn write_dataset(dir: &Path, years: &SyntheticYears) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_wide_csv(&dir.join("wind.csv"), &years.labels, &columns(&years.wind_cf))?;
    write_wide_csv(&dir.join("pv.csv"), &years.labels, &columns(&years.pv_cf))?;
    write_wide_csv(&dir.join("load.csv"), &years.labels, &columns(&years.load_mw))?;
    let unit = |id: &str, role, kind, cap| UnitSource {
        id: id.into(),
        role,
        file: format!("{id}.csv").into(),
        value_kind: kind,
        capacity_mw: cap,
    };
    let desc = DatasetDescriptor {
        version: DESCRIPTOR_VERSION,
        n_periods: years.load_mw.first().map_or(0, Vec::len),
        extra_periods: ExtraPeriods::Reject,
        units: vec![
            unit("wind", UnitRole::Rg, ValueKind::CapacityFactor, Some(WIND_CAPACITY_MW)),
            unit("pv", UnitRole::Rg, ValueKind::CapacityFactor, Some(PV_CAPACITY_MW)),
            unit("load", UnitRole::Ld, ValueKind::Mw, None),
        ],
        synchronous_generators: reference_generators(),
    };
    let path = dir.join("dataset.json");
    write_json(&path, &desc)?;
    Ok(path)
}
