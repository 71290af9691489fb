//! Sweeps run in parallel; each cell has its own derived seed, so results
//! do not depend on the thread schedule.

use anyhow::{ensure, Result};
use dockless_core::demand::DemandModel;
use dockless_core::sim::{run_cell, sweep_grid, StrategyConfig, SweepResult};
use rayon::prelude::*;

/// Every (fleet factor, vehicle count, replicate) cell in grid order.
pub fn sweep(
    d0: &[u32],
    model: &DemandModel,
    base: &StrategyConfig,
    fleet_factors: &[f64],
    vehicle_counts: &[usize],
    replicates: u32,
) -> Result<Vec<SweepResult>> {
    ensure!(!fleet_factors.is_empty(), "at least one fleet factor is required");
    ensure!(!vehicle_counts.is_empty(), "at least one vehicle count is required");
    ensure!(replicates >= 1, "at least one replicate is required");
    base.validate()?;
    let cells = sweep_grid(base.seed, fleet_factors, vehicle_counts, replicates)?;
    let results: Result<Vec<_>, _> = cells.par_iter().map(|c| run_cell(d0, model, base, c)).collect();
    Ok(results?)
}
