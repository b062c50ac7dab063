//! Versioned JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ltrisk::gmm::FitConfig;
use ltrisk::scenariogen::GenerationConfig;
use ltrisk::sizing::DEFAULT_EFFICIENCY;
use ltrisk::RiskParams;
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub n_ext: usize,
    pub screen_interval: usize,
    pub n_candidates: usize,
    pub tilt: f64,
}

impl Default for GenerationSection {
    fn default() -> Self {
        let g = GenerationConfig::default();
        GenerationSection {
            n_ext: g.n_ext,
            screen_interval: g.screen_interval,
            n_candidates: g.n_candidates,
            tilt: g.tilt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizingSection {
    pub efficiency: f64,
    /// Numbers of extreme scenarios added to the historical base set.
    pub sweep: Vec<usize>,
}

impl Default for SizingSection {
    fn default() -> Self {
        SizingSection {
            efficiency: DEFAULT_EFFICIENCY,
            sweep: vec![0, 5, 10, 15, 20],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportToggles {
    /// `generate` also writes a per-period risk CSV for every scenario.
    pub risk_profiles: bool,
    /// `generate` also runs `export-plot` into `<output_dir>/plot`.
    pub plot_data: bool,
    /// `export-plot` includes per-period risk of the historical years.
    pub include_historical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Dataset descriptor, relative to the config file.
    pub dataset: PathBuf,
    /// Master seed for model fitting and generation. It replaces `fit.seed`
    /// on load.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub risk: RiskParams,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub sizing: SizingSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default)]
    pub exports: ExportToggles,
}

fn default_output_dir() -> PathBuf {
    "out".into()
}

fn default_cache_dir() -> PathBuf {
    "cache".into()
}

impl RunConfig {
    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.version != CONFIG_VERSION {
            bail!("unsupported config version {} (expected {CONFIG_VERSION})", cfg.version);
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let base = if base.as_os_str().is_empty() {
            Path::new(".")
        } else {
            base
        };
        for p in [&mut cfg.dataset, &mut cfg.output_dir, &mut cfg.cache_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.set_seed(cfg.seed);
        if !cfg.dataset.is_file() {
            bail!("dataset descriptor {} does not exist", cfg.dataset.display());
        }
        Ok(cfg)
    }

    /// Sets the master seed, which also seeds model fitting.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.fit.seed = seed;
    }

    pub fn fit_config(&self) -> FitConfig {
        self.fit
    }

    pub fn generation_config(&self, upper_bounds: Vec<Option<f64>>) -> GenerationConfig {
        GenerationConfig {
            n_ext: self.generation.n_ext,
            screen_interval: self.generation.screen_interval,
            n_candidates: self.generation.n_candidates,
            tilt: self.generation.tilt,
            seed: self.seed,
            risk: self.risk,
            fit: self.fit_config(),
            upper_bounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.risk.validate()?;
        self.fit.validate()?;
        self.generation_config(Vec::new()).validate()?;
        let e = self.sizing.efficiency;
        if !(e > 0.0 && e <= 1.0) {
            bail!("sizing.efficiency must lie in (0, 1], got {e}");
        }
        Ok(())
    }
}
