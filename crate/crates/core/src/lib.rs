//! Long-horizon risk indices for renewable-heavy power systems and
//! Gaussian-mixture sequential Monte Carlo generation of extreme scenarios.
//!
//! The crate is organised bottom-up:
//!
//! * [`powermodel`]: unit inventory, scenarios, risk parameters.
//! * [`risk`]: shortage (`PS`/`IPS`), fluctuation (`PF`/`IPF`) and the
//!   combined long-term index `ILT`.
//! * [`gmm`]: univariate and bivariate Gaussian mixtures (EM + BIC),
//!   conditional slicing and sampling.
//! * [`scenariogen`]: model bank, ensemble propagation with importance
//!   resampling, periodic screening and final ranking.
//! * [`ingest`]: wide-CSV historical datasets and scenario CSV files.
//! * [`sizing`]: greedy long-duration storage sizing over scenario sets.
//! * [`synthetic`]: deterministic synthetic datasets for examples and tests.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gmm;
pub mod ingest;
pub mod powermodel;
pub mod risk;
pub mod scenariogen;
pub mod sizing;
pub mod synthetic;

pub use error::{Error, Result};
pub use powermodel::{IndexForm, PowerSystem, RiskParams, Scenario, SynchronousGenerator, UnitInventory};
pub use risk::RiskProfile;
