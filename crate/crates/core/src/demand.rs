//! Poisson demand model: per-station departure rates on 2-minute intervals,
//! hourly destination distributions, and scenario sampling.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::time::{weekday_of_day, DayCategory, LocalClock, TimeStep};
use crate::{rng, Error, Result, Trip};

/// 2-minute intervals per hour.
pub const INTERVALS_PER_HOUR: u32 = 30;

pub const MODEL_VERSION: &str = "dockless-demand/1";

type CatHour<T> = [[T; 24]; 3];

/// Mean departures per 2-minute interval for every (station, category, hour).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rates: Vec<CatHour<f64>>,
    /// Trips observed per cell.
    pub trip_counts: Vec<CatHour<u32>>,
    /// 2-minute intervals observed per (category, hour); shared by all stations.
    pub intervals: CatHour<u32>,
}

impl RateTable {
    pub fn zeros(stations: usize) -> Self {
        RateTable {
            rates: vec![[[0.0; 24]; 3]; stations],
            trip_counts: vec![[[0; 24]; 3]; stations],
            intervals: [[0; 24]; 3],
        }
    }

    pub fn station_count(&self) -> usize {
        self.rates.len()
    }

    pub fn rate(&self, station: usize, cat: DayCategory, hour: usize) -> f64 {
        self.rates[station][cat.index()][hour]
    }

    pub fn set_rate(&mut self, station: usize, cat: DayCategory, hour: usize, lambda: f64) {
        self.rates[station][cat.index()][hour] = lambda;
    }
}

/// Destination distribution for every (origin station, hour), pooled over
/// day categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DestTable {
    /// `probs[origin][hour][dest]`.
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl DestTable {
    pub fn uniform(stations: usize) -> Self {
        let row = vec![1.0 / stations as f64; stations];
        DestTable { probs: vec![vec![row; 24]; stations] }
    }

    pub fn station_count(&self) -> usize {
        self.probs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.probs.len();
        for per_hour in &self.probs {
            if per_hour.len() != 24 {
                return Err(Error::InvalidParameter("destination table needs 24 hours per station"));
            }
            for row in per_hour {
                if row.len() != n {
                    return Err(Error::StationCountMismatch { expected: n, found: row.len() });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || row.iter().any(|p| !(*p >= 0.0)) {
                    return Err(Error::InvalidDistribution { what: "destination", sum });
                }
            }
        }
        Ok(())
    }
}

/// The fitted demand model as stored in the demand model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    pub version: alloc::string::String,
    pub station_count: usize,
    pub rates: RateTable,
    pub dests: DestTable,
}

impl DemandModel {
    pub fn new(rates: RateTable, dests: DestTable) -> Result<Self> {
        if rates.station_count() != dests.station_count() {
            return Err(Error::StationCountMismatch { expected: rates.station_count(), found: dests.station_count() });
        }
        let model = DemandModel { version: MODEL_VERSION.into(), station_count: rates.station_count(), rates, dests };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.station_count() != self.station_count {
            return Err(Error::StationCountMismatch {
                expected: self.station_count,
                found: self.rates.station_count(),
            });
        }
        if self.rates.rates.iter().flatten().flatten().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidParameter("rates must be finite and non-negative"));
        }
        self.dests.validate()
    }
}

/// Consecutive local calendar days covered by the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationDays {
    /// Local day number (days since 1970-01-01) of the first day.
    pub first_day: i64,
    pub days: u32,
}

impl ObservationDays {
    /// From the first to the last local start day among `trips`.
    pub fn spanning(trips: &[Trip], clock: &LocalClock) -> Option<Self> {
        let days = trips.iter().map(|t| clock.day(t.t_start));
        let (lo, hi) = days.fold(None, |acc: Option<(i64, i64)>, d| match acc {
            None => Some((d, d)),
            Some((lo, hi)) => Some((lo.min(d), hi.max(d))),
        })?;
        Some(ObservationDays { first_day: lo, days: (hi - lo + 1) as u32 })
    }

    pub fn contains(&self, day: i64) -> bool {
        day >= self.first_day && day < self.first_day + self.days as i64
    }

    pub fn days_in(&self, cat: DayCategory) -> u32 {
        (0..self.days as i64).filter(|d| DayCategory::from_weekday(weekday_of_day(self.first_day + d)) == cat).count()
            as u32
    }
}

/// Fits rates and destination distributions from station-annotated trips.
/// Trips starting outside `window` are ignored.
pub fn estimate(trips: &[Trip], stations: usize, clock: &LocalClock, window: ObservationDays) -> Result<DemandModel> {
    let mut table = RateTable::zeros(stations);
    let mut dest_counts = vec![vec![vec![0u64; stations]; 24]; stations];
    for (i, t) in trips.iter().enumerate() {
        let (Some(o), Some(d)) = (t.origin_station, t.dest_station) else {
            return Err(Error::MissingStation { index: i });
        };
        for id in [o, d] {
            if id >= stations {
                return Err(Error::StationOutOfRange { id, count: stations });
            }
        }
        if !window.contains(clock.day(t.t_start)) {
            continue;
        }
        let cat = clock.category(t.t_start).index();
        let hour = clock.hour(t.t_start);
        table.trip_counts[o][cat][hour] += 1;
        dest_counts[o][hour][d] += 1;
    }
    for cat in DayCategory::ALL {
        let n = window.days_in(cat) * INTERVALS_PER_HOUR;
        table.intervals[cat.index()] = [n; 24];
    }
    for s in 0..stations {
        for c in 0..3 {
            for h in 0..24 {
                let n = table.intervals[c][h];
                table.rates[s][c][h] = if n == 0 { 0.0 } else { table.trip_counts[s][c][h] as f64 / n as f64 };
            }
        }
    }
    let probs = dest_counts
        .into_iter()
        .map(|per_hour| {
            per_hour
                .into_iter()
                .map(|row| {
                    let total: u64 = row.iter().sum();
                    if total == 0 {
                        vec![1.0 / stations as f64; stations]
                    } else {
                        row.iter().map(|&c| c as f64 / total as f64).collect()
                    }
                })
                .collect()
        })
        .collect();
    DemandModel::new(table, DestTable { probs })
}

/// Sampled demand: bikes in and out per (scenario, hour offset, station).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub start: TimeStep,
    pub horizon: usize,
    pub scenarios: usize,
    pub stations: usize,
    inflow: Vec<u32>,
    outflow: Vec<u32>,
    /// Sampled (origin, destination) pairs per (scenario, hour offset).
    pub trips: Vec<Vec<(u32, u32)>>,
}

impl ScenarioSet {
    fn idx(&self, k: usize, tau: usize, s: usize) -> usize {
        (k * self.horizon + tau) * self.stations + s
    }

    /// `(F+, F-)`: bikes entering and leaving `s`.
    pub fn flows(&self, k: usize, tau: usize, s: usize) -> (u32, u32) {
        let i = self.idx(k, tau, s);
        (self.inflow[i], self.outflow[i])
    }

    pub fn hour_trips(&self, k: usize, tau: usize) -> &[(u32, u32)] {
        &self.trips[k * self.horizon + tau]
    }

    /// Net flow of `s` in scenario `k` summed over the whole horizon.
    pub fn net_flow(&self, k: usize, s: usize) -> i64 {
        (0..self.horizon)
            .map(|tau| {
                let (i, o) = self.flows(k, tau, s);
                i as i64 - o as i64
            })
            .sum()
    }

    /// `net[k][s]` for every scenario and station.
    pub fn net_flows(&self) -> Vec<Vec<i64>> {
        (0..self.scenarios).map(|k| (0..self.stations).map(|s| self.net_flow(k, s)).collect()).collect()
    }

    /// Builds a scenario set from explicit trip lists, `trips[k][tau]`.
    pub fn from_trips(start: TimeStep, stations: usize, trips: Vec<Vec<Vec<(u32, u32)>>>) -> Result<Self> {
        let scenarios = trips.len();
        let horizon = trips.first().map_or(0, |h| h.len());
        let mut set = ScenarioSet {
            start,
            horizon,
            scenarios,
            stations,
            inflow: vec![0; scenarios * horizon * stations],
            outflow: vec![0; scenarios * horizon * stations],
            trips: Vec::with_capacity(scenarios * horizon),
        };
        for (k, per_hour) in trips.into_iter().enumerate() {
            if per_hour.len() != horizon {
                return Err(Error::InvalidParameter("every scenario needs the same horizon"));
            }
            for (tau, list) in per_hour.into_iter().enumerate() {
                for &(o, d) in &list {
                    for id in [o as usize, d as usize] {
                        if id >= stations {
                            return Err(Error::StationOutOfRange { id, count: stations });
                        }
                    }
                    let io = set.idx(k, tau, o as usize);
                    let id = set.idx(k, tau, d as usize);
                    set.outflow[io] += 1;
                    set.inflow[id] += 1;
                }
                set.trips.push(list);
            }
        }
        Ok(set)
    }
}

/// Precomputed cumulative destination tables for repeated sampling.
#[derive(Debug, Clone)]
pub struct ScenarioSampler<'a> {
    model: &'a DemandModel,
    cumulative: Vec<Vec<Vec<f64>>>,
}

impl<'a> ScenarioSampler<'a> {
    pub fn new(model: &'a DemandModel) -> Self {
        let cumulative = model
            .dests
            .probs
            .iter()
            .map(|per_hour| {
                per_hour
                    .iter()
                    .map(|row| {
                        let mut acc = 0.0;
                        row.iter()
                            .map(|p| {
                                acc += p;
                                acc
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        ScenarioSampler { model, cumulative }
    }

    pub fn model(&self) -> &DemandModel {
        self.model
    }

    fn destination<R: Rng>(&self, origin: usize, hour: usize, rng: &mut R) -> usize {
        let cum = &self.cumulative[origin][hour];
        let u = rng.random::<f64>() * cum.last().copied().unwrap_or(1.0);
        let i = cum.partition_point(|&c| c <= u);
        if i < cum.len() {
            return i;
        }
        // rounding left u above the last partial sum: take the last
        // destination with positive probability
        let row = &self.model.dests.probs[origin][hour];
        row.iter().rposition(|&p| p > 0.0).unwrap_or(cum.len() - 1)
    }

    /// Departures from one station in one hour: the sum of 30 independent
    /// Poisson draws, one per 2-minute interval.
    pub fn hourly_departures<R: Rng>(&self, lambda: f64, rng: &mut R) -> u32 {
        if lambda <= 0.0 {
            return 0;
        }
        let poisson = Poisson::new(lambda).expect("finite positive rate");
        (0..INTERVALS_PER_HOUR).map(|_| poisson.sample(rng) as u32).sum()
    }

    /// `scenarios` independent scenarios of `horizon` hours from `start`.
    /// Scenario `k` uses its own stream derived from `(seed, k)`.
    pub fn sample(&self, start: TimeStep, horizon: usize, scenarios: usize, seed: u64) -> ScenarioSet {
        let stations = self.model.station_count;
        let per_scenario: Vec<Vec<Vec<(u32, u32)>>> = (0..scenarios)
            .map(|k| {
                let mut rng = rng::stream(seed, &[k as u64]);
                (0..horizon)
                    .map(|tau| {
                        let step = start.offset(tau as u64);
                        let (cat, hour) = (step.day_category(), step.hour_of_day());
                        let mut list = Vec::new();
                        for s in 0..stations {
                            let out = self.hourly_departures(self.model.rates.rate(s, cat, hour), &mut rng);
                            for _ in 0..out {
                                let d = self.destination(s, hour, &mut rng);
                                list.push((s as u32, d as u32));
                            }
                        }
                        list
                    })
                    .collect()
            })
            .collect();
        ScenarioSet::from_trips(start, stations, per_scenario).expect("sampled ids are in range")
    }
}

/// One-shot form of [`ScenarioSampler::sample`].
pub fn sample_scenarios(
    model: &DemandModel,
    start: TimeStep,
    horizon: usize,
    scenarios: usize,
    seed: u64,
) -> Result<ScenarioSet> {
    if horizon == 0 || scenarios == 0 {
        return Err(Error::InvalidParameter("horizon and scenario count must be at least 1"));
    }
    Ok(ScenarioSampler::new(model).sample(start, horizon, scenarios, seed))
}
