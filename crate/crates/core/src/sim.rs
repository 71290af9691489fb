//! Hourly simulation of a repositioning strategy.
//!
//! Every hour `t`: when `t` is a multiple of the rebalancing period `T`,
//! `K` scenarios of horizon `T` are sampled and the repositioning program
//! is solved; other hours move nothing. One fresh horizon-1 scenario is
//! then sampled as the realised demand, lost demand is counted in closed
//! form, and bikes are updated with
//! `d <- max(d + F+ - F- + sum_v (y+ - y-), 0)`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cluster::StationSet;
use crate::demand::{DemandModel, ScenarioSampler};
use crate::mip::{self, closed_form_lost_demand, CostWeights, ProblemInstance, SolveOptions};
use crate::rng::derive_seed;
use crate::time::{DayCategory, TimeStep};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    Static,
    Dynamic,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Static => "static",
            Strategy::Dynamic => "dynamic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub name: Strategy,
    pub vehicles: usize,
    /// Rebalancing period and planning horizon, hours.
    pub period: usize,
    /// Planning scenarios `K`.
    pub scenarios: usize,
    pub capacity: u32,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Search budget per solve; `None` always proves optimality.
    #[serde(default = "default_node_limit")]
    pub node_limit: Option<u64>,
}

/// Realistic hourly instances prove optimal in well under a thousand
/// nodes; the cap only guards against adversarial demand.
pub const DEFAULT_NODE_LIMIT: u64 = 500_000;

fn default_node_limit() -> Option<u64> {
    Some(DEFAULT_NODE_LIMIT)
}

impl StrategyConfig {
    /// 15 vehicles rebalancing once a day.
    pub fn static_default() -> Self {
        Self::base(Strategy::Static, 15, 24)
    }

    /// 3 vehicles rebalancing every hour.
    pub fn dynamic_default() -> Self {
        Self::base(Strategy::Dynamic, 3, 1)
    }

    pub fn for_strategy(s: Strategy) -> Self {
        match s {
            Strategy::Static => Self::static_default(),
            Strategy::Dynamic => Self::dynamic_default(),
        }
    }

    fn base(name: Strategy, vehicles: usize, period: usize) -> Self {
        StrategyConfig {
            name,
            vehicles,
            period,
            scenarios: 5,
            capacity: 10,
            alpha: 1.0,
            beta: 1.0,
            iterations: 720,
            seed: 0,
            node_limit: default_node_limit(),
        }
    }

    pub fn weights(&self) -> Result<CostWeights> {
        CostWeights::from_f64(self.alpha, self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be at least 1"));
        }
        if self.scenarios == 0 {
            return Err(Error::InvalidParameter("scenario count must be at least 1"));
        }
        if self.period == 0 {
            return Err(Error::InvalidParameter("rebalancing period must be at least 1 hour"));
        }
        if self.capacity == 0 {
            return Err(Error::InvalidParameter("vehicle capacity must be at least 1"));
        }
        self.weights().map(|_| ())
    }
}

/// One row of the results time series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub hour_of_day: usize,
    pub day_category: DayCategory,
    /// Unserved departures this hour (non-negative).
    pub lost_demand: u64,
    pub reposition_trips: u64,
    /// Bikes in the system after the update.
    pub total_bikes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Next step to run.
    pub t: TimeStep,
    pub d: Vec<u32>,
    pub lost_demand_total: u64,
    pub reposition_trip_total: u64,
    /// Solves that hit the node limit before proving optimality.
    pub unproven_solves: u64,
    pub series: Vec<StepRecord>,
}

impl SimState {
    pub fn new(d: Vec<u32>) -> Self {
        SimState {
            t: TimeStep::GENESIS,
            d,
            lost_demand_total: 0,
            reposition_trip_total: 0,
            unproven_solves: 0,
            series: Vec::new(),
        }
    }
}

/// `floor(d0_s * factor)` per station. A tolerance of 1e-9 keeps exact
/// products such as `100 * 0.29` from flooring one too low.
pub fn scale_fleet(d0: &[u32], factor: f64) -> Result<Vec<u32>> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::InvalidFleetFactor(factor));
    }
    Ok(d0.iter().map(|&d| libm::floor(d as f64 * factor + 1e-9) as u32).collect())
}

const PLAN_STREAM: u64 = 1;
const REALISED_STREAM: u64 = 2;

/// Simulates `cfg` from the stations' initial inventory.
pub fn run(stations: &StationSet, model: &DemandModel, cfg: &StrategyConfig) -> Result<SimState> {
    if stations.len() != model.station_count {
        return Err(Error::StationCountMismatch { expected: stations.len(), found: model.station_count });
    }
    run_from(stations.initial_inventory.clone(), model, cfg)
}

/// Simulates `cfg` from bikes `d0`.
pub fn run_from(d0: Vec<u32>, model: &DemandModel, cfg: &StrategyConfig) -> Result<SimState> {
    cfg.validate()?;
    model.validate()?;
    if d0.len() != model.station_count {
        return Err(Error::StationCountMismatch { expected: model.station_count, found: d0.len() });
    }
    let sampler = ScenarioSampler::new(model);
    let weights = cfg.weights()?;
    let mut state = SimState::new(d0);
    state.series.reserve(cfg.iterations);
    for _ in 0..cfg.iterations {
        step(&mut state, &sampler, cfg, weights)?;
    }
    Ok(state)
}

/// Advances `state` by one hour.
pub fn step(
    state: &mut SimState,
    sampler: &ScenarioSampler<'_>,
    cfg: &StrategyConfig,
    weights: CostWeights,
) -> Result<()> {
    let n = state.d.len();
    let t = state.t;
    let mut repo = vec![0i64; n];
    let mut trips = 0u64;
    if t.index.is_multiple_of(cfg.period as u64) && cfg.vehicles > 0 {
        let seed = derive_seed(cfg.seed, &[PLAN_STREAM, t.index]);
        let planning = sampler.sample(t, cfg.period, cfg.scenarios, seed);
        let p = ProblemInstance::from_scenarios(state.d.clone(), &planning, cfg.vehicles, cfg.capacity, weights);
        let (plan, stats) = mip::solve_with(&p, &SolveOptions { node_limit: cfg.node_limit })?;
        if !stats.proven_optimal {
            state.unproven_solves += 1;
        }
        repo = plan.net_repositioning();
        trips = plan.trips() as u64;
    }
    let realised = sampler.sample(t, 1, 1, derive_seed(cfg.seed, &[REALISED_STREAM, t.index]));
    let mut lost = 0i64;
    for s in 0..n {
        let net = realised.net_flow(0, s);
        let d = state.d[s] as i64;
        lost += closed_form_lost_demand(d, net, repo[s]);
        state.d[s] = (d + net + repo[s]).max(0) as u32;
    }
    let record = StepRecord {
        step: t.index,
        hour_of_day: t.hour_of_day(),
        day_category: t.day_category(),
        lost_demand: (-lost) as u64,
        reposition_trips: trips,
        total_bikes: state.d.iter().map(|&b| b as u64).sum(),
    };
    state.lost_demand_total += record.lost_demand;
    state.reposition_trip_total += trips;
    state.series.push(record);
    state.t = t.offset(1);
    Ok(())
}

/// One point of a sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub fleet_factor: f64,
    pub vehicles: usize,
    pub replicate: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub fleet_factor: f64,
    pub vehicles: usize,
    pub cumulative_lost_demand: u64,
    pub cumulative_reposition_trips: u64,
    pub seed: u64,
}

/// Cross product of factors, vehicle counts and replicates, each cell with
/// a seed derived from `base_seed` and its grid position. The first
/// replicate of a lone cell keeps `base_seed`, so a one-cell sweep equals a
/// plain run.
pub fn sweep_grid(
    base_seed: u64,
    fleet_factors: &[f64],
    vehicle_counts: &[usize],
    replicates: u32,
) -> Result<Vec<SweepCell>> {
    if fleet_factors.is_empty() || vehicle_counts.is_empty() || replicates == 0 {
        return Err(Error::Empty("sweep grid"));
    }
    for &f in fleet_factors {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidFleetFactor(f));
        }
    }
    let single = fleet_factors.len() == 1 && vehicle_counts.len() == 1 && replicates == 1;
    let mut cells = Vec::new();
    for (i, &fleet_factor) in fleet_factors.iter().enumerate() {
        for (j, &vehicles) in vehicle_counts.iter().enumerate() {
            for replicate in 0..replicates {
                let seed =
                    if single { base_seed } else { derive_seed(base_seed, &[i as u64, j as u64, replicate as u64]) };
                cells.push(SweepCell { fleet_factor, vehicles, replicate, seed });
            }
        }
    }
    Ok(cells)
}

/// Runs one sweep cell.
pub fn run_cell(d0: &[u32], model: &DemandModel, base: &StrategyConfig, cell: &SweepCell) -> Result<SweepResult> {
    let cfg = StrategyConfig { vehicles: cell.vehicles, seed: cell.seed, ..*base };
    let state = run_from(scale_fleet(d0, cell.fleet_factor)?, model, &cfg)?;
    Ok(SweepResult {
        fleet_factor: cell.fleet_factor,
        vehicles: cell.vehicles,
        cumulative_lost_demand: state.lost_demand_total,
        cumulative_reposition_trips: state.reposition_trip_total,
        seed: cell.seed,
    })
}

/// Sequential sweep; see the `dockless` crate for the parallel one.
pub fn sweep(
    d0: &[u32],
    model: &DemandModel,
    base: &StrategyConfig,
    fleet_factors: &[f64],
    vehicle_counts: &[usize],
) -> Result<Vec<SweepResult>> {
    sweep_grid(base.seed, fleet_factors, vehicle_counts, 1)?.iter().map(|c| run_cell(d0, model, base, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{DestTable, RateTable};
    use crate::synth::GroundTruth;
    use proptest::prelude::{prop, prop_assert, proptest};

    fn zero_model(n: usize) -> DemandModel {
        DemandModel::new(RateTable::zeros(n), DestTable::uniform(n)).unwrap()
    }

    #[test]
    fn scale_fleet_examples() {
        assert_eq!(scale_fleet(&[5, 3, 1], 0.4).unwrap(), vec![2, 1, 0]);
        assert_eq!(scale_fleet(&[5, 3, 1], 1.0).unwrap(), vec![5, 3, 1]);
        assert_eq!(scale_fleet(&[100], 0.29).unwrap(), vec![29]);
        for f in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(scale_fleet(&[1], f).is_err());
        }
    }

    proptest! {
        #[test]
        fn scaled_fleet_never_grows(d in prop::collection::vec(0u32..10_000, 1..30), f in 0.01f64..=1.0) {
            let scaled = scale_fleet(&d, f).unwrap();
            let total: u64 = scaled.iter().map(|&x| x as u64).sum();
            let orig: u64 = d.iter().map(|&x| x as u64).sum();
            prop_assert!(total as f64 <= f * orig as f64 + 1e-6 * orig as f64);
        }
    }

    #[test]
    fn defaults() {
        let s = StrategyConfig::static_default();
        assert_eq!((s.vehicles, s.period, s.scenarios, s.capacity, s.iterations), (15, 24, 5, 10, 720));
        let d = StrategyConfig::dynamic_default();
        assert_eq!((d.vehicles, d.period), (3, 1));
    }

    #[test]
    fn zero_demand_is_stationary() {
        let cfg = StrategyConfig::dynamic_default();
        let state = run_from(vec![3, 0, 7], &zero_model(3), &cfg).unwrap();
        assert_eq!(state.series.len(), 720);
        assert_eq!(state.lost_demand_total, 0);
        assert_eq!(state.reposition_trip_total, 0);
        assert_eq!(state.d, vec![3, 0, 7]);
    }

    #[test]
    fn constant_deficit_loses_one_per_hour() {
        // A departs towards B at 1/30 per interval: one trip per hour on
        // average, but with no bikes at A every departure is lost
        let mut rates = RateTable::zeros(2);
        for c in DayCategory::ALL {
            for h in 0..24 {
                rates.set_rate(0, c, h, 1.0 / 30.0);
            }
        }
        let mut dests = DestTable::uniform(2);
        for row in &mut dests.probs[0] {
            *row = vec![0.0, 1.0];
        }
        let model = DemandModel::new(rates, dests).unwrap();
        let cfg = StrategyConfig { vehicles: 0, iterations: 200, ..StrategyConfig::dynamic_default() };
        let state = run_from(vec![0, 0], &model, &cfg).unwrap();
        // every realised departure from A is lost
        let departures: u64 = (0..200u64)
            .map(|t| {
                let sampler = ScenarioSampler::new(&model);
                let set = sampler.sample(TimeStep::new(t), 1, 1, derive_seed(0, &[REALISED_STREAM, t]));
                set.flows(0, 0, 0).1 as u64
            })
            .sum();
        assert_eq!(state.lost_demand_total, departures);
        // the update counts arrivals even when the matching departure was
        // lost, so B accumulates them
        assert_eq!(state.d, vec![0, departures as u32]);
    }

    #[test]
    fn mismatched_station_counts() {
        let gt = GroundTruth::commuter(4, 5, 0).unwrap();
        let stations = gt.to_station_set().unwrap();
        assert!(matches!(
            run(&stations, &zero_model(3), &StrategyConfig::dynamic_default()),
            Err(Error::StationCountMismatch { .. })
        ));
    }

    #[test]
    fn invariants_and_determinism() {
        let gt = GroundTruth::commuter(8, 6, 3).unwrap();
        let model = gt.to_demand_model().unwrap();
        for base in [StrategyConfig::static_default(), StrategyConfig::dynamic_default()] {
            let cfg = StrategyConfig { iterations: 96, seed: 5, ..base };
            let a = run_from(gt.fleet.clone(), &model, &cfg).unwrap();
            let b = run_from(gt.fleet.clone(), &model, &cfg).unwrap();
            assert_eq!(a, b);
            let mut prev = gt.fleet.iter().map(|&x| x as u64).sum::<u64>();
            for r in &a.series {
                assert!(r.total_bikes >= prev);
                prev = r.total_bikes;
            }
            assert_eq!(a.lost_demand_total, a.series.iter().map(|r| r.lost_demand).sum::<u64>());
            assert_eq!(a.reposition_trip_total, a.series.iter().map(|r| r.reposition_trips).sum::<u64>());
            if cfg.name == Strategy::Static {
                assert!(a.series.iter().all(|r| r.step % 24 == 0 || r.reposition_trips == 0));
            }
        }
    }

    #[test]
    fn repositioning_helps_imbalanced_system() {
        let gt = GroundTruth::commuter(10, 8, 1).unwrap();
        let model = gt.to_demand_model().unwrap();
        let cfg = StrategyConfig { iterations: 168, seed: 2, ..StrategyConfig::dynamic_default() };
        let idle = run_from(gt.fleet.clone(), &model, &StrategyConfig { vehicles: 0, ..cfg }).unwrap();
        let active = run_from(gt.fleet.clone(), &model, &cfg).unwrap();
        assert!(active.reposition_trip_total > 0);
        assert!(active.lost_demand_total < idle.lost_demand_total);
    }

    #[test]
    fn sweep_single_cell_equals_run() {
        let gt = GroundTruth::commuter(6, 5, 0).unwrap();
        let model = gt.to_demand_model().unwrap();
        let base = StrategyConfig { iterations: 48, seed: 9, ..StrategyConfig::dynamic_default() };
        let rows = sweep(&gt.fleet, &model, &base, &[1.0], &[0]).unwrap();
        let plain = run_from(gt.fleet.clone(), &model, &StrategyConfig { vehicles: 0, ..base }).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].cumulative_lost_demand, plain.lost_demand_total);
        assert_eq!(rows[0].seed, 9);
    }

    #[test]
    fn vehicle_sweep_has_one_row_per_count() {
        let gt = GroundTruth::commuter(6, 3, 0).unwrap();
        let model = gt.to_demand_model().unwrap();
        let base = StrategyConfig { iterations: 24, ..StrategyConfig::dynamic_default() };
        let rows = sweep(&gt.fleet, &model, &base, &[0.4], &[1, 2, 3, 4, 5, 6, 7]).unwrap();
        assert_eq!(rows.iter().map(|r| r.vehicles).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6, 7]);
        assert!(sweep_grid(0, &[], &[1], 1).is_err());
        assert!(sweep_grid(0, &[1.5], &[1], 1).is_err());
    }
}
