//! Power-system inventory, scenarios and risk parameters.
//!
//! Everything here is immutable once validated. Periods are indexed from zero
//! in the API; exported files number them from one.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynchronousGenerator {
    pub id: String,
    /// Maximum output in MW.
    pub capacity_mw: f64,
    /// Maximum upward ramp in MW per period.
    pub ramp_up_mw: f64,
    /// Maximum downward ramp in MW per period.
    pub ramp_down_mw: f64,
}

impl SynchronousGenerator {
    pub fn new(id: impl Into<String>, capacity_mw: f64, ramp_up_mw: f64, ramp_down_mw: f64) -> Self {
        SynchronousGenerator {
            id: id.into(),
            capacity_mw,
            ramp_up_mw,
            ramp_down_mw,
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidUnit {
                unit: self.id.clone(),
                reason,
            })
        };
        for (name, v) in [
            ("capacity_mw", self.capacity_mw),
            ("ramp_up_mw", self.ramp_up_mw),
            ("ramp_down_mw", self.ramp_down_mw),
        ] {
            if !v.is_finite() || v < 0.0 {
                return fail(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.ramp_up_mw > self.capacity_mw {
            return fail(format!(
                "ramp_up_mw {} exceeds capacity_mw {}",
                self.ramp_up_mw, self.capacity_mw
            ));
        }
        if self.ramp_down_mw > self.capacity_mw {
            return fail(format!(
                "ramp_down_mw {} exceeds capacity_mw {}",
                self.ramp_down_mw, self.capacity_mw
            ));
        }
        Ok(())
    }
}

/// The unit sets of the system: renewable units, load points and
/// synchronous generators.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UnitInventory {
    pub rg_units: Vec<String>,
    pub ld_units: Vec<String>,
    #[serde(default)]
    pub sg_units: Vec<SynchronousGenerator>,
}

impl UnitInventory {
    pub fn new(rg_units: Vec<String>, ld_units: Vec<String>, sg_units: Vec<SynchronousGenerator>) -> Self {
        UnitInventory {
            rg_units,
            ld_units,
            sg_units,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rg_units.is_empty() {
            return Err(Error::InvalidSystem("no renewable units".into()));
        }
        if self.ld_units.is_empty() {
            return Err(Error::InvalidSystem("no load units".into()));
        }
        check_unique(self.rg_units.iter())?;
        check_unique(self.ld_units.iter())?;
        check_unique(self.sg_units.iter().map(|g| &g.id))?;
        for g in &self.sg_units {
            g.validate()?;
        }
        Ok(())
    }

    /// Number of stochastic units (renewable units followed by load points).
    pub fn n_units(&self) -> usize {
        self.rg_units.len() + self.ld_units.len()
    }

    /// Stochastic unit ids in canonical order: renewables, then loads.
    pub fn unit_ids(&self) -> impl Iterator<Item = &str> {
        self.rg_units.iter().chain(self.ld_units.iter()).map(String::as_str)
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a String>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidUnit {
                unit: id.clone(),
                reason: "duplicate identifier".into(),
            });
        }
    }
    Ok(())
}

/// Which quantity is squared inside the shortage/fluctuation window sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexForm {
    /// `sum_{tau in W} sgn[X(tau)] * X(t)^2`: the window counts positive
    /// periods and scales the current period's square.
    #[default]
    Literal,
    /// `sum_{tau in W} sgn[X(tau)] * X(tau)^2`.
    TauSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskParams {
    /// Fraction of synchronous capacity counted as available.
    pub alpha_sg: f64,
    /// Look-ahead bandwidth in periods.
    pub sigma: usize,
    /// Weight of the shortage index against the fluctuation index.
    pub theta: f64,
    #[serde(default)]
    pub index_form: IndexForm,
}

impl Default for RiskParams {
    fn default() -> Self {
        RiskParams {
            alpha_sg: 0.95,
            sigma: 24,
            theta: 0.5,
            index_form: IndexForm::Literal,
        }
    }
}

impl RiskParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha_sg) {
            return Err(Error::InvalidParams(format!(
                "alpha_sg must lie in [0, 1], got {}",
                self.alpha_sg
            )));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParams(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

/// Renewable generation and load trajectories over a horizon, in MW.
///
/// Both matrices are unit-major: `rg_mw[r][t]`, `ld_mw[d][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub rg_mw: Vec<Vec<f64>>,
    pub ld_mw: Vec<Vec<f64>>,
}

impl Scenario {
    pub fn new(label: impl Into<String>, rg_mw: Vec<Vec<f64>>, ld_mw: Vec<Vec<f64>>) -> Result<Self> {
        let s = Scenario {
            label: label.into(),
            rg_mw,
            ld_mw,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidScenario {
                label: self.label.clone(),
                reason,
            })
        };
        if self.rg_mw.is_empty() || self.ld_mw.is_empty() {
            return fail("needs at least one renewable and one load row".into());
        }
        let n = self.rg_mw[0].len();
        if n == 0 {
            return fail("horizon must contain at least one period".into());
        }
        for row in self.rg_mw.iter().chain(self.ld_mw.iter()) {
            if row.len() != n {
                return fail(format!("row of {} periods, expected {n}", row.len()));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return fail(format!("entry {v} is not a finite nonnegative MW value"));
            }
        }
        Ok(())
    }

    /// Checks the unit counts against an inventory.
    pub fn validate_against(&self, inventory: &UnitInventory) -> Result<()> {
        self.validate()?;
        if self.rg_mw.len() != inventory.rg_units.len() || self.ld_mw.len() != inventory.ld_units.len() {
            return Err(Error::InvalidScenario {
                label: self.label.clone(),
                reason: format!(
                    "has {} renewable / {} load rows, inventory has {} / {}",
                    self.rg_mw.len(),
                    self.ld_mw.len(),
                    inventory.rg_units.len(),
                    inventory.ld_units.len()
                ),
            });
        }
        Ok(())
    }

    pub fn n_periods(&self) -> usize {
        self.rg_mw.first().map_or(0, Vec::len)
    }

    pub fn total_rg(&self, t: usize) -> f64 {
        self.rg_mw.iter().map(|row| row[t]).sum()
    }

    pub fn total_load(&self, t: usize) -> f64 {
        self.ld_mw.iter().map(|row| row[t]).sum()
    }

    /// Row of unit `u` in canonical order (renewables, then loads).
    pub fn unit_row(&self, u: usize) -> &[f64] {
        if u < self.rg_mw.len() {
            &self.rg_mw[u]
        } else {
            &self.ld_mw[u - self.rg_mw.len()]
        }
    }
}

/// A validated inventory together with its risk parameters and cached
/// synchronous-fleet aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystem {
    inventory: UnitInventory,
    params: RiskParams,
    total_capacity_mw: f64,
    total_ramp_up_mw: f64,
    total_ramp_down_mw: f64,
}

impl PowerSystem {
    pub fn new(inventory: UnitInventory, params: RiskParams) -> Result<Self> {
        inventory.validate()?;
        params.validate()?;
        let sg = &inventory.sg_units;
        let total_capacity_mw = order_free_sum(sg.iter().map(|g| g.capacity_mw));
        let total_ramp_up_mw = order_free_sum(sg.iter().map(|g| g.ramp_up_mw));
        let total_ramp_down_mw = order_free_sum(sg.iter().map(|g| g.ramp_down_mw));
        Ok(PowerSystem {
            inventory,
            params,
            total_capacity_mw,
            total_ramp_up_mw,
            total_ramp_down_mw,
        })
    }

    pub fn inventory(&self) -> &UnitInventory {
        &self.inventory
    }

    pub fn params(&self) -> &RiskParams {
        &self.params
    }

    pub fn total_capacity_mw(&self) -> f64 {
        self.total_capacity_mw
    }

    pub fn total_ramp_up_mw(&self) -> f64 {
        self.total_ramp_up_mw
    }

    pub fn total_ramp_down_mw(&self) -> f64 {
        self.total_ramp_down_mw
    }

    /// `alpha_sg` times the aggregate synchronous capacity.
    pub fn firm_capacity_mw(&self) -> f64 {
        self.params.alpha_sg * self.total_capacity_mw
    }

    /// Same system with different risk parameters.
    pub fn with_params(&self, params: RiskParams) -> Result<Self> {
        params.validate()?;
        Ok(PowerSystem { params, ..self.clone() })
    }
}

pub fn validate_system(inventory: UnitInventory, params: RiskParams) -> Result<PowerSystem> {
    PowerSystem::new(inventory, params)
}

// Sums in ascending order so the aggregate does not depend on list order.
fn order_free_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}
