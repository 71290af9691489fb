//! Summary statistics and trend fits over a sweep table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{ensure, Result};
use serde::{Deserialize, Serialize};

use crate::io::SweepRow;
use crate::stats::{ols, spearman, LinearFit, RankCorrelation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub fleet_factor: f64,
    pub vehicles: usize,
    pub runs: usize,
    pub mean_lost_demand: f64,
    pub sd_lost_demand: f64,
    pub mean_reposition_trips: f64,
    pub sd_reposition_trips: f64,
}

/// Trends against fleet factor at one vehicle count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetTrend {
    pub vehicles: usize,
    pub lost_demand_fit: Option<LinearFit>,
    pub lost_demand_rank: Option<RankCorrelation>,
    pub reposition_trips_fit: Option<LinearFit>,
    pub reposition_trips_rank: Option<RankCorrelation>,
}

/// Trends against vehicle count at one fleet factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrend {
    pub fleet_factor: f64,
    pub lost_demand_fit: Option<LinearFit>,
    pub lost_demand_rank: Option<RankCorrelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: usize,
    pub cells: Vec<CellSummary>,
    pub fleet_trends: Vec<FleetTrend>,
    pub vehicle_trends: Vec<VehicleTrend>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() < 2 { 0.0 } else { v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) };
    (mean, var.sqrt())
}

/// Fleet factors are grouped by their bit pattern, which is exact for
/// values read back from a sweep file.
pub fn summarize(rows: &[SweepRow]) -> Result<Report> {
    ensure!(!rows.is_empty(), "sweep table has no rows");
    let key = |f: f64| f.to_bits();
    let mut cells: BTreeMap<(u64, usize), Vec<&SweepRow>> = BTreeMap::new();
    let mut by_vehicles: BTreeMap<usize, Vec<&SweepRow>> = BTreeMap::new();
    let mut by_factor: BTreeMap<u64, Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        ensure!(r.fleet_factor.is_finite(), "fleet factor must be finite");
        cells.entry((key(r.fleet_factor), r.vehicles)).or_default().push(r);
        by_vehicles.entry(r.vehicles).or_default().push(r);
        by_factor.entry(key(r.fleet_factor)).or_default().push(r);
    }
    let lost = |g: &[&SweepRow]| g.iter().map(|r| r.cumulative_lost_demand as f64).collect::<Vec<_>>();
    let trips = |g: &[&SweepRow]| g.iter().map(|r| r.cumulative_reposition_trips as f64).collect::<Vec<_>>();
    let mut summaries: Vec<CellSummary> = cells
        .values()
        .map(|g| {
            let (mean_lost_demand, sd_lost_demand) = mean_sd(&lost(g));
            let (mean_reposition_trips, sd_reposition_trips) = mean_sd(&trips(g));
            CellSummary {
                fleet_factor: g[0].fleet_factor,
                vehicles: g[0].vehicles,
                runs: g.len(),
                mean_lost_demand,
                sd_lost_demand,
                mean_reposition_trips,
                sd_reposition_trips,
            }
        })
        .collect();
    summaries.sort_by(|a, b| a.fleet_factor.total_cmp(&b.fleet_factor).then(a.vehicles.cmp(&b.vehicles)));
    let fleet_trends = by_vehicles
        .iter()
        .map(|(&vehicles, g)| {
            let x: Vec<f64> = g.iter().map(|r| r.fleet_factor).collect();
            let (l, t) = (lost(g), trips(g));
            FleetTrend {
                vehicles,
                lost_demand_fit: ols(&x, &l),
                lost_demand_rank: spearman(&x, &l),
                reposition_trips_fit: ols(&x, &t),
                reposition_trips_rank: spearman(&x, &t),
            }
        })
        .collect();
    let mut vehicle_trends: Vec<VehicleTrend> = by_factor
        .values()
        .map(|g| {
            let x: Vec<f64> = g.iter().map(|r| r.vehicles as f64).collect();
            let l = lost(g);
            VehicleTrend {
                fleet_factor: g[0].fleet_factor,
                lost_demand_fit: ols(&x, &l),
                lost_demand_rank: spearman(&x, &l),
            }
        })
        .collect();
    vehicle_trends.sort_by(|a, b| a.fleet_factor.total_cmp(&b.fleet_factor));
    Ok(Report { rows: rows.len(), cells: summaries, fleet_trends, vehicle_trends })
}

fn fit(f: &Option<LinearFit>) -> String {
    f.map_or("n/a".into(), |f| format!("slope {:.3} (R² {:.3})", f.slope, f.r_squared))
}

fn rank(r: &Option<RankCorrelation>) -> String {
    r.map_or("n/a".into(), |r| format!("rho {:.3} (p {:.3e})", r.rho, r.p_value))
}

impl Report {
    /// Plain-text rendering for the terminal.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} runs in {} cells", self.rows, self.cells.len());
        let _ = writeln!(s, "fleet_factor  vehicles  runs  lost_demand (mean ± sd)  reposition_trips (mean ± sd)");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{:>12}  {:>8}  {:>4}  {:>12.1} ± {:<9.1}  {:>12.1} ± {:.1}",
                c.fleet_factor,
                c.vehicles,
                c.runs,
                c.mean_lost_demand,
                c.sd_lost_demand,
                c.mean_reposition_trips,
                c.sd_reposition_trips
            );
        }
        for t in &self.fleet_trends {
            let _ = writeln!(
                s,
                "vehicles {}: lost demand vs fleet factor {}, {}; trips vs fleet factor {}, {}",
                t.vehicles,
                fit(&t.lost_demand_fit),
                rank(&t.lost_demand_rank),
                fit(&t.reposition_trips_fit),
                rank(&t.reposition_trips_rank)
            );
        }
        for t in &self.vehicle_trends {
            if t.lost_demand_fit.is_some() {
                let _ = writeln!(
                    s,
                    "fleet factor {}: lost demand vs vehicles {}, {}",
                    t.fleet_factor,
                    fit(&t.lost_demand_fit),
                    rank(&t.lost_demand_rank)
                );
            }
        }
        s
    }
}
