//! Writes a synthetic multi-year dataset (wind, PV, load) with its descriptor.
//!
//! Usage: `make_dataset <dir> [n_periods] [n_years] [seed]`

use ltrisk::synthetic::{synthetic_years, write_dataset, SyntheticConfig};

fn numeric_arg(i: usize) -> Option<u64> {
    std::env::args().nth(i).map(|v| v.parse().expect("numeric argument"))
}

fn main() -> ltrisk::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data/synthetic".into());
    let d = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        n_periods: numeric_arg(2).map_or(d.n_periods, |v| v as usize),
        n_years: numeric_arg(3).map_or(d.n_years, |v| v as usize),
        seed: numeric_arg(4).unwrap_or(d.seed),
        ..d
    };
    let path = write_dataset(dir.as_ref(), &synthetic_years(&cfg))?;
    println!("{}", path.display());
    Ok(())
}
