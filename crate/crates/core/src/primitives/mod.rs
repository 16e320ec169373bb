//! Replicable statistical building blocks.
//!
//! Every primitive takes its internal randomness as a [`SharedRandomness`]
//! and its data as a draw closure. Sample counts follow the theoretical
//! formulas multiplied by a `budget_scale` factor (default 1).
//!
//! [`SharedRandomness`]: crate::SharedRandomness

mod heavy;
mod mass;
mod rounding;
mod sq;

pub use heavy::{r_heavy_hitters, r_heavy_hitters_filtered, HHOutcome, HHParams};
pub use mass::{mass_sample_count, project_to_simplex, r_mass_estimate, r_mass_from_counts, MassParams};
pub use rounding::{r_round, round_with_offsets, RoundingParams};
pub use sq::{r_sq, sq_sample_count};

use crate::error::{invalid, Result};

/// Scaled sample count, at least one.
pub(crate) fn scaled_count(formula: f64, budget_scale: f64) -> u64 {
    let n = (formula * budget_scale).ceil();
    if n < 1.0 {
        1
    } else if n >= u64::MAX as f64 {
        u64::MAX
    } else {
        n as u64
    }
}

pub(crate) fn check_unit_open(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("{name} must lie in (0, 1), got {x}")));
    }
    Ok(())
}

pub(crate) fn check_scale(budget_scale: f64) -> Result<()> {
    if !(budget_scale > 0.0 && budget_scale.is_finite()) {
        return Err(invalid(format!("budget_scale must be positive, got {budget_scale}")));
    }
    Ok(())
}
