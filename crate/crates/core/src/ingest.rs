//! Historical datasets and scenario files.
//!
//! A dataset is a JSON descriptor plus one wide CSV per stochastic unit:
//!
//! ```text
//! period,1980,1981,...
//! 1,0.412,0.388,...
//! ```
//!
//! Column one is the one-based period index; every other column is one
//! historical scenario (typically a year). Values are MW or capacity factors
//! depending on the unit's `value_kind`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::powermodel::{Scenario, SynchronousGenerator, UnitInventory};

pub const DESCRIPTOR_VERSION: u32 = 1;
const CF_UPPER: f64 = 1.0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitRole {
    Rg,
    Ld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Mw,
    CapacityFactor,
}

/// What to do with files that have more rows than `n_periods` (leap years).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraPeriods {
    #[default]
    Reject,
    Truncate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSource {
    pub id: String,
    pub role: UnitRole,
    /// Relative to the descriptor's directory.
    pub file: PathBuf,
    pub value_kind: ValueKind,
    /// Installed capacity in MW; required for capacity factors, and an upper
    /// bound on MW values when given.
    #[serde(default)]
    pub capacity_mw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub version: u32,
    pub n_periods: usize,
    #[serde(default)]
    pub extra_periods: ExtraPeriods,
    pub units: Vec<UnitSource>,
    #[serde(default)]
    pub synchronous_generators: Vec<SynchronousGenerator>,
}

impl DatasetDescriptor {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let d: DatasetDescriptor =
            serde_json::from_str(&text).map_err(|e| Error::ingest(path, format!("bad descriptor: {e}")))?;
        d.validate().map_err(|e| Error::ingest(path, e.to_string()))?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != DESCRIPTOR_VERSION {
            return Err(Error::InvalidParams(format!(
                "unsupported descriptor version {}",
                self.version
            )));
        }
        if self.n_periods == 0 {
            return Err(Error::InvalidParams("n_periods must be >= 1".into()));
        }
        for u in &self.units {
            match (u.value_kind, u.capacity_mw) {
                (ValueKind::CapacityFactor, None) => {
                    return Err(Error::InvalidUnit {
                        unit: u.id.clone(),
                        reason: "capacity factors need capacity_mw".into(),
                    })
                }
                (_, Some(c)) if !(c.is_finite() && c >= 0.0) => {
                    return Err(Error::InvalidUnit {
                        unit: u.id.clone(),
                        reason: format!("capacity_mw {c} must be finite and >= 0"),
                    })
                }
                _ => {}
            }
        }
        self.inventory().validate()
    }

    pub fn inventory(&self) -> UnitInventory {
        let ids = |role| {
            self.units
                .iter()
                .filter(|u| u.role == role)
                .map(|u| u.id.clone())
                .collect()
        };
        UnitInventory::new(
            ids(UnitRole::Rg),
            ids(UnitRole::Ld),
            self.synchronous_generators.clone(),
        )
    }

    /// Units in canonical order: renewables, then loads.
    pub fn ordered_units(&self) -> Vec<&UnitSource> {
        let mut v: Vec<_> = self.units.iter().filter(|u| u.role == UnitRole::Rg).collect();
        v.extend(self.units.iter().filter(|u| u.role == UnitRole::Ld));
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileProvenance {
    pub path: PathBuf,
    pub sha256: String,
}

/// Aligned historical scenarios sharing one inventory and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalSet {
    pub scenarios: Vec<Scenario>,
    pub inventory: UnitInventory,
    /// Per-unit capacity in canonical order, if declared.
    pub capacities_mw: Vec<Option<f64>>,
    pub provenance: Vec<FileProvenance>,
}

impl HistoricalSet {
    pub fn n_periods(&self) -> usize {
        self.scenarios.first().map_or(0, Scenario::n_periods)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.scenarios.iter().map(|s| s.label.as_str())
    }

    pub fn get(&self, label: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.label == label)
    }

    /// Upper clamp bounds per unit for generation; `None` is unbounded.
    pub fn upper_bounds(&self) -> Vec<Option<f64>> {
        self.capacities_mw.clone()
    }

    /// Hash of labels, inventory and every value (provenance excluded).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.inventory).expect("inventory serializes"));
        for c in &self.capacities_mw {
            h.update(c.unwrap_or(-1.0).to_le_bytes());
        }
        for s in &self.scenarios {
            h.update(s.label.as_bytes());
            h.update([0]);
            for row in s.rg_mw.iter().chain(&s.ld_mw) {
                for v in row {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    /// Writes the set as MW-valued unit files plus a descriptor into `dir`;
    /// returns the descriptor path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let labels: Vec<String> = self.labels().map(str::to_owned).collect();
        let mut units = Vec::new();
        let n_rg = self.inventory.rg_units.len();
        for (u, id) in self.inventory.unit_ids().enumerate() {
            let file = PathBuf::from(format!("{id}.csv"));
            let columns: Vec<&[f64]> = self.scenarios.iter().map(|s| s.unit_row(u)).collect();
            write_wide_csv(&dir.join(&file), &labels, &columns)?;
            units.push(UnitSource {
                id: id.to_owned(),
                role: if u < n_rg { UnitRole::Rg } else { UnitRole::Ld },
                file,
                value_kind: ValueKind::Mw,
                capacity_mw: self.capacities_mw[u],
            });
        }
        let desc = DatasetDescriptor {
            version: DESCRIPTOR_VERSION,
            n_periods: self.n_periods(),
            extra_periods: ExtraPeriods::Reject,
            units,
            synchronous_generators: self.inventory.sg_units.clone(),
        };
        let path = dir.join("dataset.json");
        write_json(&path, &desc)?;
        Ok(path)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes a wide CSV: one column per label, one row per period.
pub fn write_wide_csv(path: &Path, labels: &[String], columns: &[&[f64]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    let mut header = vec!["period".to_owned()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    let n = columns.first().map_or(0, |c| c.len());
    for t in 0..n {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(columns.iter().map(|c| c[t].to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parsed wide CSV: labels and one column of raw values per label.
#[derive(Debug, Clone, PartialEq)]
pub struct WideTable {
    pub labels: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

fn parse_cell(path: &Path, row: usize, col: &str, cell: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Err(Error::ingest(
            path,
            format!("missing cell at row {row}, column `{col}`"),
        ));
    }
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::ingest(path, format!("non-numeric cell `{cell}` at row {row}, column `{col}`")))
}

/// Reads a wide CSV, keeping at most `n_periods` data rows under
/// [`ExtraPeriods::Truncate`] and rejecting any other row count.
pub fn read_wide_csv(path: &Path, n_periods: usize, extra: ExtraPeriods) -> Result<WideTable> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::ingest(path, e.to_string()))?;
    let header = r.headers().map_err(|e| Error::ingest(path, e.to_string()))?.clone();
    if header.len() < 2 || header.get(0).map(str::trim) != Some("period") {
        return Err(Error::ingest(path, "header must be `period,<label>,...`"));
    }
    let labels: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_owned()).collect();
    let mut seen = HashSet::new();
    for l in &labels {
        if l.is_empty() {
            return Err(Error::ingest(path, "empty column label"));
        }
        if !seen.insert(l.as_str()) {
            return Err(Error::ingest(path, format!("duplicate column `{l}`")));
        }
    }
    let mut columns = vec![Vec::with_capacity(n_periods); labels.len()];
    let mut rows = 0usize;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::ingest(path, e.to_string()))?;
        let row = i + 1;
        if row > n_periods {
            match extra {
                ExtraPeriods::Truncate => {
                    rows += 1;
                    continue;
                }
                ExtraPeriods::Reject => {}
            }
        }
        if rec.len() != header.len() {
            return Err(Error::ingest(
                path,
                format!("ragged row {row}: {} fields, header has {}", rec.len(), header.len()),
            ));
        }
        let period = parse_cell(path, row, "period", &rec[0])?;
        if period != row as f64 {
            return Err(Error::ingest(path, format!("row {row} has period index {}", &rec[0])));
        }
        for (c, label) in labels.iter().enumerate() {
            columns[c].push(parse_cell(path, row, label, &rec[c + 1])?);
        }
        rows += 1;
    }
    let kept = columns.first().map_or(0, Vec::len);
    if kept != n_periods || (extra == ExtraPeriods::Reject && rows != n_periods) {
        return Err(Error::ingest(
            path,
            format!("{rows} periods, descriptor declares {n_periods}"),
        ));
    }
    Ok(WideTable { labels, columns })
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Loads every unit file named by `descriptor` (paths relative to `dir`)
/// and assembles one scenario per historical label.
pub fn load_historical(dir: &Path, descriptor: &DatasetDescriptor) -> Result<HistoricalSet> {
    descriptor.validate()?;
    let units = descriptor.ordered_units();
    let mut tables = Vec::with_capacity(units.len());
    let mut provenance = Vec::with_capacity(units.len());
    for u in &units {
        let path = dir.join(&u.file);
        let mut table = read_wide_csv(&path, descriptor.n_periods, descriptor.extra_periods)?;
        for col in &mut table.columns {
            convert_column(&path, u, col)?;
        }
        provenance.push(FileProvenance {
            sha256: sha256_file(&path)?,
            path,
        });
        tables.push(table);
    }

    let labels = tables[0].labels.clone();
    let reference: HashSet<&String> = labels.iter().collect();
    for (u, t) in units.iter().zip(&tables).skip(1) {
        let other: HashSet<&String> = t.labels.iter().collect();
        if other != reference {
            return Err(Error::ingest(
                dir.join(&u.file),
                format!("scenario columns differ from {}", units[0].file.display()),
            ));
        }
    }

    let n_rg = descriptor.inventory().rg_units.len();
    let mut scenarios = Vec::with_capacity(labels.len());
    for label in &labels {
        let mut rows: Vec<Vec<f64>> = tables
            .iter()
            .map(|t| {
                let c = t.labels.iter().position(|l| l == label).expect("label sets checked");
                t.columns[c].clone()
            })
            .collect();
        let ld = rows.split_off(n_rg);
        scenarios.push(Scenario::new(label.clone(), rows, ld)?);
    }
    Ok(HistoricalSet {
        scenarios,
        inventory: descriptor.inventory(),
        capacities_mw: units.iter().map(|u| u.capacity_mw).collect(),
        provenance,
    })
}

/// Reads a descriptor and its unit files.
pub fn load_dataset(descriptor_path: &Path) -> Result<HistoricalSet> {
    let d = DatasetDescriptor::from_path(descriptor_path)?;
    let dir = descriptor_path.parent().unwrap_or(Path::new("."));
    load_historical(dir, &d)
}

fn convert_column(path: &Path, unit: &UnitSource, col: &mut [f64]) -> Result<()> {
    match unit.value_kind {
        ValueKind::CapacityFactor => {
            let cap = unit.capacity_mw.expect("validated");
            for v in col.iter_mut() {
                if !(0.0..=CF_UPPER).contains(v) {
                    return Err(Error::ingest(
                        path,
                        format!("capacity factor {v} outside [0, {CF_UPPER}]"),
                    ));
                }
                *v *= cap;
            }
        }
        ValueKind::Mw => {
            for &v in col.iter() {
                if v < 0.0 {
                    return Err(Error::ingest(path, format!("negative MW value {v}")));
                }
                if let Some(cap) = unit.capacity_mw {
                    if unit.role == UnitRole::Rg && v > cap * CF_UPPER {
                        return Err(Error::ingest(path, format!("{v} MW exceeds capacity {cap} MW")));
                    }
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- scenario files

/// Writes a scenario as `period,<rg ids...>,<ld ids...>` in MW.
pub fn write_scenario_csv(path: &Path, scenario: &Scenario, inventory: &UnitInventory) -> Result<()> {
    scenario.validate_against(inventory)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    let mut header = vec!["period".to_owned()];
    header.extend(inventory.unit_ids().map(str::to_owned));
    w.write_record(&header)?;
    let n_units = inventory.n_units();
    for t in 0..scenario.n_periods() {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend((0..n_units).map(|u| scenario.unit_row(u)[t].to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a scenario file written by [`write_scenario_csv`]. Columns are
/// matched to the inventory by id.
pub fn read_scenario_csv(path: &Path, inventory: &UnitInventory, label: impl Into<String>) -> Result<Scenario> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::ingest(path, e.to_string()))?;
    let header = r.headers().map_err(|e| Error::ingest(path, e.to_string()))?.clone();
    if header.get(0).map(str::trim) != Some("period") {
        return Err(Error::ingest(path, "header must start with `period`"));
    }
    let cols: Vec<&str> = header.iter().skip(1).map(str::trim).collect();
    let index_of = |id: &str| {
        cols.iter()
            .position(|c| *c == id)
            .ok_or_else(|| Error::ingest(path, format!("missing column `{id}`")))
    };
    let positions: Vec<usize> = inventory.unit_ids().map(index_of).collect::<Result<_>>()?;
    let mut rows = vec![Vec::new(); inventory.n_units()];
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::ingest(path, e.to_string()))?;
        let row = i + 1;
        if rec.len() != header.len() {
            return Err(Error::ingest(path, format!("ragged row {row}")));
        }
        for (u, &p) in positions.iter().enumerate() {
            rows[u].push(parse_cell(path, row, cols[p], &rec[p + 1])?);
        }
    }
    let ld = rows.split_off(inventory.rg_units.len());
    Scenario::new(label, rows, ld)
}
