//! Subcommand implementations. Each returns a JSON summary for stdout.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::info;
use ltrisk::ingest::{self, HistoricalSet};
use ltrisk::risk::{positive_clusters, risk_profile};
use ltrisk::scenariogen::{generate_with_bank, load_or_build_bank, CacheStatus, RunManifest};
use ltrisk::sizing::{sizing_sweep, SweepPoint};
use ltrisk::{PowerSystem, RiskParams, RiskProfile, Scenario};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::staging::Staging;

pub const MANIFEST_FORMAT: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RANKING_FILE: &str = "ranking.csv";
pub const SCENARIO_DIR: &str = "scenarios";
pub const SIZING_FILE: &str = "sizing_curve.csv";

/// Facts about the execution that do not affect results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Runtime {
    pub bank_cache: CacheStatus,
    pub bank_file: PathBuf,
    pub workers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizingRecord {
    pub efficiency: f64,
    pub base_scenarios: usize,
    pub points: Vec<SweepPoint>,
}

/// Contents of `manifest.json` in a `generate` output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    /// Effective configuration after flag overrides; replaying it
    /// reproduces the run.
    pub run_config: RunConfig,
    pub dataset_sha256: String,
    pub generation: RunManifest,
    pub runtime: Runtime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizing: Option<SizingRecord>,
}

struct Loaded {
    hist: HistoricalSet,
    system: PowerSystem,
}

fn load(cfg: &RunConfig) -> Result<Loaded> {
    let hist = ingest::load_dataset(&cfg.dataset)?;
    let system = PowerSystem::new(hist.inventory.clone(), cfg.risk)?;
    info!(
        "loaded {} historical scenarios of {} periods",
        hist.scenarios.len(),
        hist.n_periods()
    );
    Ok(Loaded { hist, system })
}

pub fn scenario_file_name(rank: usize, ilt: f64, n: usize) -> String {
    let width = n.to_string().len().max(3);
    format!("ext_{rank:0width$}_{ilt:.6e}.csv")
}

fn parse_rank(name: &str) -> Option<usize> {
    name.strip_prefix("ext_")?.split('_').next()?.parse().ok()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_risk_csv(path: &Path, p: &RiskProfile) -> Result<()> {
    write_rows(
        path,
        &["period", "ps_mw", "pf_mw", "ips", "ipf"],
        (0..p.horizon()).map(|t| {
            vec![
                (t + 1).to_string(),
                p.ps_mw[t].to_string(),
                p.pf_mw[t].to_string(),
                p.ips[t].to_string(),
                p.ipf[t].to_string(),
            ]
        }),
    )
}

fn write_clusters_csv(path: &Path, p: &RiskProfile) -> Result<()> {
    write_rows(
        path,
        &["rank", "start_period", "end_period", "length", "ips_mass"],
        positive_clusters(&p.ips).iter().enumerate().map(|(i, c)| {
            vec![
                (i + 1).to_string(),
                (c.start + 1).to_string(),
                c.end.to_string(),
                c.len().to_string(),
                c.mass.to_string(),
            ]
        }),
    )
}

pub fn fit_bank(cfg: &RunConfig) -> Result<Value> {
    let l = load(cfg)?;
    let (bank, status, path) = load_or_build_bank(&l.hist.scenarios, &cfg.fit_config(), &cfg.cache_dir)?;
    Ok(json!({
        "command": "fit-bank",
        "cache": status,
        "bank_file": path,
        "key": bank.key,
        "units": bank.n_units(),
        "periods": bank.n_periods,
    }))
}

pub fn generate(cfg: &RunConfig) -> Result<Value> {
    let l = load(cfg)?;
    let gen_cfg = cfg.generation_config(l.hist.upper_bounds());
    gen_cfg.validate()?;
    let (bank, status, bank_path) = load_or_build_bank(&l.hist.scenarios, &gen_cfg.fit, &cfg.cache_dir)?;
    let out = generate_with_bank(&bank, &l.system, &gen_cfg)?;
    ensure!(
        out.ranked.len() == gen_cfg.n_ext,
        "expected {} extreme scenarios, got {}",
        gen_cfg.n_ext,
        out.ranked.len()
    );

    let staging = Staging::new(&cfg.output_dir)?;
    let sdir = staging.path().join(SCENARIO_DIR);
    fs::create_dir(&sdir)?;
    let inv = &l.hist.inventory;
    for r in &out.ranked {
        let path = sdir.join(scenario_file_name(r.rank, r.profile.ilt, gen_cfg.n_ext));
        ingest::write_scenario_csv(&path, &r.scenario, inv)?;
        let back = ingest::read_scenario_csv(&path, inv, r.scenario.label.clone())?;
        ensure!(
            back == r.scenario,
            "scenario file {} did not read back exactly",
            path.display()
        );
    }
    if cfg.exports.risk_profiles {
        let rdir = staging.path().join("risk");
        fs::create_dir(&rdir)?;
        for r in &out.ranked {
            write_risk_csv(&rdir.join(format!("risk_{}.csv", r.scenario.label)), &r.profile)?;
        }
    }
    write_rows(
        &staging.path().join(RANKING_FILE),
        &["rank", "label", "ilt", "sum_ips", "sum_ipf"],
        out.manifest.ranking.iter().map(|e| {
            vec![
                e.rank.to_string(),
                e.label.clone(),
                e.ilt.to_string(),
                e.sum_ips.to_string(),
                e.sum_ipf.to_string(),
            ]
        }),
    )?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        run_config: cfg.clone(),
        dataset_sha256: l.hist.content_hash(),
        generation: out.manifest,
        runtime: Runtime {
            bank_cache: status,
            bank_file: bank_path,
            workers: rayon::current_num_threads(),
        },
        sizing: None,
    };
    write_json(&staging.path().join(MANIFEST_FILE), &manifest)?;
    staging.commit()?;

    let mut summary = json!({
        "command": "generate",
        "output_dir": cfg.output_dir,
        "scenarios": out.ranked.len(),
        "bank_cache": status,
        "survivor_trace": manifest.generation.survivor_trace,
    });
    if cfg.exports.plot_data {
        export_plot(
            cfg,
            &cfg.output_dir,
            &cfg.output_dir.join("plot"),
            cfg.exports.include_historical,
        )?;
        summary["plot_dir"] = json!(cfg.output_dir.join("plot"));
    }
    Ok(summary)
}

pub struct RiskRequest {
    pub scenario_files: Vec<PathBuf>,
    pub historical: Vec<String>,
    pub all_historical: bool,
    pub horizon: Option<usize>,
}

pub fn risk(cfg: &RunConfig, req: &RiskRequest, out: &Path) -> Result<Value> {
    let l = load(cfg)?;
    let mut scenarios: Vec<Scenario> = Vec::new();
    for f in &req.scenario_files {
        let label = f
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        scenarios.push(ingest::read_scenario_csv(f, &l.hist.inventory, label)?);
    }
    if req.all_historical {
        scenarios.extend(l.hist.scenarios.iter().cloned());
    } else {
        for label in &req.historical {
            let s = l
                .hist
                .get(label)
                .with_context(|| format!("no historical scenario labelled `{label}`"))?;
            scenarios.push(s.clone());
        }
    }
    ensure!(
        !scenarios.is_empty(),
        "no scenarios given (use --scenario, --historical or --all-historical)"
    );
    let mut labels: Vec<&str> = scenarios.iter().map(|s| s.label.as_str()).collect();
    labels.sort_unstable();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        bail!("duplicate scenario label `{}`", w[0]);
    }

    let staging = Staging::new(out)?;
    let mut summary_rows = Vec::new();
    for s in &scenarios {
        let p = risk_profile(s, &l.system, &cfg.risk, req.horizon)?;
        write_risk_csv(&staging.path().join(format!("risk_{}.csv", s.label)), &p)?;
        write_clusters_csv(&staging.path().join(format!("clusters_{}.csv", s.label)), &p)?;
        summary_rows.push(vec![
            s.label.clone(),
            p.ilt.to_string(),
            p.sum_ips().to_string(),
            p.sum_ipf().to_string(),
        ]);
    }
    write_rows(
        &staging.path().join("risk_summary.csv"),
        &["label", "ilt", "sum_ips", "sum_ipf"],
        summary_rows,
    )?;
    staging.commit()?;
    Ok(json!({ "command": "risk", "output_dir": out, "scenarios": scenarios.len() }))
}

/// Extreme scenarios of a `generate` run in rank order.
fn read_extremes(run_dir: &Path, hist: &HistoricalSet) -> Result<Vec<Scenario>> {
    let sdir = run_dir.join(SCENARIO_DIR);
    let mut files = Vec::new();
    for entry in fs::read_dir(&sdir).with_context(|| format!("reading {}", sdir.display()))? {
        let path = entry?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if let Some(rank) = parse_rank(&name) {
            files.push((rank, path));
        }
    }
    files.sort();
    files
        .into_iter()
        .map(|(rank, path)| {
            Ok(ingest::read_scenario_csv(
                &path,
                &hist.inventory,
                format!("ext-{rank}"),
            )?)
        })
        .collect()
}

pub fn size(cfg: &RunConfig, run_dir: &Path, sweep: &[usize], out: &Path) -> Result<Value> {
    let l = load(cfg)?;
    let extremes = read_extremes(run_dir, &l.hist)?;
    let eff = cfg.sizing.efficiency;
    let points = sizing_sweep(&l.hist.scenarios, &extremes, sweep, &l.system, eff)?;

    let staging = Staging::new(out)?;
    write_rows(
        &staging.path().join(SIZING_FILE),
        &["k", "power_mw", "energy_mwh"],
        points
            .iter()
            .map(|p| vec![p.k.to_string(), p.power_mw.to_string(), p.energy_mwh.to_string()]),
    )?;
    staging.commit()?;

    let manifest_path = run_dir.join(MANIFEST_FILE);
    if manifest_path.is_file() {
        let mut m: Value = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
            .with_context(|| format!("parsing {}", manifest_path.display()))?;
        m["sizing"] = serde_json::to_value(SizingRecord {
            efficiency: eff,
            base_scenarios: l.hist.scenarios.len(),
            points: points.clone(),
        })?;
        let tmp = manifest_path.with_extension("json.tmp");
        write_json(&tmp, &m)?;
        fs::rename(&tmp, &manifest_path)?;
    }
    Ok(json!({ "command": "size", "output_dir": out, "points": points }))
}

fn long_rows(source: &str, label: &str, p: &RiskProfile, rows: &mut Vec<Vec<String>>) {
    let metrics: [(&str, &[f64]); 4] = [
        ("ps_mw", &p.ps_mw),
        ("pf_mw", &p.pf_mw),
        ("ips", &p.ips),
        ("ipf", &p.ipf),
    ];
    for t in 0..p.horizon() {
        for (name, series) in metrics {
            rows.push(vec![
                source.into(),
                label.into(),
                (t + 1).to_string(),
                name.into(),
                series[t].to_string(),
            ]);
        }
    }
}

/// Writes tidy (long-format) CSVs for a `generate` output directory.
pub fn export_plot(cfg: &RunConfig, run_dir: &Path, out: &Path, include_historical: bool) -> Result<Value> {
    let manifest_path = run_dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_str(
        &fs::read_to_string(&manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?,
    )
    .with_context(|| format!("parsing {}", manifest_path.display()))?;
    let params: RiskParams = manifest.generation.config.risk;
    let hist = ingest::load_dataset(&cfg.dataset)?;
    let system = PowerSystem::new(hist.inventory.clone(), params)?;
    let extremes = read_extremes(run_dir, &hist)?;

    let mut series = Vec::new();
    let mut ilt = Vec::new();
    let mut push = |source: &str, s: &Scenario, with_series: bool| -> Result<()> {
        let p = risk_profile(s, &system, &params, None)?;
        if with_series {
            long_rows(source, &s.label, &p, &mut series);
        }
        ilt.push(vec![
            source.into(),
            s.label.clone(),
            p.ilt.to_string(),
            p.sum_ips().to_string(),
            p.sum_ipf().to_string(),
        ]);
        Ok(())
    };
    for s in &hist.scenarios {
        push("historical", s, include_historical)?;
    }
    for s in &extremes {
        push("extreme", s, true)?;
    }

    let staging = Staging::new(out)?;
    let dir = staging.path();
    write_rows(
        &dir.join("risk_long.csv"),
        &["source", "label", "period", "metric", "value"],
        series,
    )?;
    write_rows(
        &dir.join("ilt.csv"),
        &["source", "label", "ilt", "sum_ips", "sum_ipf"],
        ilt,
    )?;
    let mut screen_rows = vec![vec![
        "0".into(),
        manifest.generation.initial_members.to_string(),
        manifest.generation.initial_members.to_string(),
        String::new(),
        String::new(),
    ]];
    screen_rows.extend(manifest.generation.screenings.iter().map(|r| {
        vec![
            r.t.to_string(),
            r.before.to_string(),
            r.after.to_string(),
            r.cut_ilt.to_string(),
            r.min_survivor_ilt.to_string(),
        ]
    }));
    write_rows(
        &dir.join("screenings.csv"),
        &["period", "before", "after", "cut_ilt", "min_survivor_ilt"],
        screen_rows,
    )?;
    if let Some(s) = &manifest.sizing {
        write_rows(
            &dir.join("sizing_long.csv"),
            &["k", "metric", "value"],
            s.points.iter().flat_map(|p| {
                [
                    vec![p.k.to_string(), "power_mw".into(), p.power_mw.to_string()],
                    vec![p.k.to_string(), "energy_mwh".into(), p.energy_mwh.to_string()],
                ]
            }),
        )?;
    }
    let files: Vec<PathBuf> = staging.commit()?;
    Ok(json!({ "command": "export-plot", "output_dir": out, "files": files }))
}
