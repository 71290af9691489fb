//! Synthetic ping datasets drawn from a known demand process.
//!
//! Bikes sit at stations. Every 2-minute interval each station draws a
//! Poisson number of departures; a departure takes the bike that became
//! available first, or is lost when the station is empty. Each trip emits
//! a ping where the bike was parked and one at a jittered point of the
//! destination station, so [`crate::ingest::extract_trips`] recovers it.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::cluster::{Station, StationMeta, StationSet};
use crate::demand::{DemandModel, DestTable, RateTable, INTERVALS_PER_HOUR};
use crate::time::{LocalClock, Timestamp, SECONDS_PER_HOUR};
use crate::{geodesic, rng, Error, GeoPoint, LocalProjection, Ping, Result, Trip};

/// Nominal riding speed used for trip durations.
pub const RIDE_SPEED_KMH: f64 = 12.0;

/// First local day of generated data: Monday 2017-09-04.
pub const DEFAULT_FIRST_DAY: i64 = 17_413;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub centroid: GeoPoint,
    /// Parked bikes are scattered uniformly within this radius.
    pub scatter_m: f64,
}

/// A demand process with known parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub stations: Vec<StationSpec>,
    /// Departures per 2-minute interval, `rates[s][category][hour]`.
    pub rates: Vec<[[f64; 24]; 3]>,
    /// `dest_probs[origin][hour][dest]`.
    pub dest_probs: Vec<Vec<Vec<f64>>>,
    /// Bikes parked at each station at the start.
    pub fleet: Vec<u32>,
}

impl GroundTruth {
    /// Stations on a `rows x cols` grid, zero rates, destinations uniform
    /// over the other stations.
    pub fn grid(rows: usize, cols: usize, spacing_m: f64, scatter_m: f64, origin: GeoPoint) -> Self {
        let proj = LocalProjection::new(origin);
        let stations: Vec<StationSpec> = (0..rows * cols)
            .map(|i| StationSpec {
                centroid: proj.to_geo([(i % cols) as f64 * spacing_m, (i / cols) as f64 * spacing_m]),
                scatter_m,
            })
            .collect();
        let n = stations.len();
        let others = |o: usize| -> Vec<f64> {
            (0..n).map(|d| if n == 1 || d != o { 1.0 / (n.max(2) - 1) as f64 } else { 0.0 }).collect()
        };
        GroundTruth {
            rates: vec![[[0.0; 24]; 3]; n],
            dest_probs: (0..n).map(|o| vec![others(o); 24]).collect(),
            fleet: vec![0; n],
            stations,
        }
    }

    /// Commuter system: the first half of the stations are residential and
    /// send riders to the second half in the morning peak, the flow
    /// reverses in the evening, and off-peak demand is light and uniform.
    pub fn commuter(stations: usize, bikes_per_station: u32, seed: u64) -> Result<Self> {
        if stations < 2 {
            return Err(Error::TooFewStations { required: 2, found: stations });
        }
        let mut gt = Self::grid(stations.div_ceil(5), 5.min(stations), 800.0, 120.0, singapore());
        gt.stations.truncate(stations);
        let mut rng = rng::stream(seed, &[0xC0]);
        let half = stations / 2;
        let residential = |s: usize| s < half;
        gt.rates = (0..stations)
            .map(|s| {
                let mut r = [[0.0; 24]; 3];
                let scale: f64 = rng.random_range(0.8..1.2);
                for (c, per_hour) in r.iter_mut().enumerate() {
                    let weekend = if c == 2 { 0.5 } else { 1.0 };
                    for (h, rate) in per_hour.iter_mut().enumerate() {
                        let peak = match (residential(s), h) {
                            (true, 7..=9) | (false, 17..=19) => 0.15,
                            (_, 6..=22) => 0.02,
                            _ => 0.005,
                        };
                        *rate = peak * scale * weekend;
                    }
                }
                r
            })
            .collect();
        gt.dest_probs = (0..stations)
            .map(|o| {
                (0..24)
                    .map(|h| {
                        let peak = matches!(h, 7..=9 | 17..=19);
                        let weights: Vec<f64> = (0..stations)
                            .map(|d| match (d == o, peak, residential(o) != residential(d)) {
                                (true, _, _) => 0.0,
                                (false, true, true) => 1.0,
                                (false, true, false) => 0.05,
                                (false, false, _) => 1.0,
                            })
                            .collect();
                        let total: f64 = weights.iter().sum();
                        weights.iter().map(|w| w / total).collect()
                    })
                    .collect()
            })
            .collect();
        gt.fleet = vec![bikes_per_station; stations];
        Ok(gt)
    }

    /// Random system with `stations` stations on a square grid, hourly
    /// rates with morning and evening peaks, and random destinations.
    pub fn random(stations: usize, bikes_per_station: u32, seed: u64) -> Result<Self> {
        if stations < 2 {
            return Err(Error::TooFewStations { required: 2, found: stations });
        }
        let side = libm::ceil(libm::sqrt(stations as f64)) as usize;
        let mut gt = Self::grid(side, side, 500.0, 100.0, singapore());
        gt.stations.truncate(stations);
        let mut rng = rng::stream(seed, &[0x4A]);
        gt.rates = (0..stations)
            .map(|_| {
                let base: f64 = rng.random_range(0.005..0.06);
                let mut r = [[0.0; 24]; 3];
                for (c, per_hour) in r.iter_mut().enumerate() {
                    for (h, rate) in per_hour.iter_mut().enumerate() {
                        let shape = match h {
                            0..=5 => 0.2,
                            7..=9 | 17..=19 => 2.5,
                            _ => 1.0,
                        };
                        let cat = [1.0, 1.1, 0.7][c];
                        *rate = base * shape * cat * rng.random_range(0.7..1.3);
                    }
                }
                r
            })
            .collect();
        gt.dest_probs = (0..stations)
            .map(|o| {
                (0..24)
                    .map(|_| {
                        let w: Vec<f64> = (0..stations)
                            .map(|d| {
                                if d == o {
                                    return 0.0;
                                }
                                // Cubing skews weights so a few destinations dominate.
                                let u = rng.random::<f64>();
                                u * u * u
                            })
                            .collect();
                        let total: f64 = w.iter().sum();
                        w.iter().map(|x| x / total).collect()
                    })
                    .collect()
            })
            .collect();
        gt.fleet = vec![bikes_per_station; stations];
        Ok(gt)
    }

    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.stations.len();
        if n < 2 {
            return Err(Error::TooFewStations { required: 2, found: n });
        }
        for len in [self.rates.len(), self.dest_probs.len(), self.fleet.len()] {
            if len != n {
                return Err(Error::StationCountMismatch { expected: n, found: len });
            }
        }
        if self.stations.iter().any(|s| !(s.scatter_m >= 0.0 && s.scatter_m.is_finite())) {
            return Err(Error::InvalidParameter("scatter radius must be finite and non-negative"));
        }
        if self.rates.iter().flatten().flatten().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::InvalidParameter("rates must be finite and non-negative"));
        }
        self.dest_table().validate()
    }

    fn dest_table(&self) -> DestTable {
        DestTable { probs: self.dest_probs.clone() }
    }

    /// The ground truth as a demand model over its own stations.
    pub fn to_demand_model(&self) -> Result<DemandModel> {
        self.validate()?;
        let mut rates = RateTable::zeros(self.station_count());
        rates.rates = self.rates.clone();
        DemandModel::new(rates, self.dest_table())
    }

    /// Stations at the true centroids with the initial fleet as inventory.
    pub fn to_station_set(&self) -> Result<StationSet> {
        self.validate()?;
        let centroids: Vec<GeoPoint> = self.stations.iter().map(|s| s.centroid).collect();
        let projection = LocalProjection::centered_on(&centroids).ok_or(Error::Empty("station layout"))?;
        Ok(StationSet {
            stations: self
                .stations
                .iter()
                .enumerate()
                .map(|(id, s)| Station {
                    id,
                    centroid: s.centroid,
                    radius_m: s.scatter_m,
                    area_m2: core::f64::consts::PI * s.scatter_m * s.scatter_m,
                    member_count: 0,
                })
                .collect(),
            projection,
            assignment: Vec::new(),
            initial_inventory: self.fleet.clone(),
            meta: StationMeta { seed: 0, k: self.station_count(), region: None },
        })
    }
}

fn singapore() -> GeoPoint {
    GeoPoint { lat: 1.3521, lon: 103.8198 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub days: u32,
    pub first_day: i64,
    pub clock: LocalClock,
    /// Probability that a trip is followed by a short (< 200 m) GPS drift.
    pub noise_fraction: f64,
    /// Probability that a departure is a truck relocation (too fast to be a
    /// ride) instead of a ride.
    pub relocation_fraction: f64,
}

impl SynthOptions {
    pub fn days(days: u32) -> Self {
        SynthOptions {
            days,
            first_day: DEFAULT_FIRST_DAY,
            clock: LocalClock::default(),
            noise_fraction: 0.0,
            relocation_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SynthOutput {
    /// Sorted by time, then bike id.
    pub pings: Vec<Ping>,
    /// Rides as generated, with true stations.
    pub trips: Vec<Trip>,
    /// Departures that found no bike.
    pub unserved: u64,
    pub noise_pairs: u64,
    pub relocations: u64,
}

/// Pings of `days` days of demand from `gt`.
pub fn generate(gt: &GroundTruth, days: u32, seed: u64) -> Result<Vec<Ping>> {
    generate_with(gt, &SynthOptions::days(days), seed).map(|o| o.pings)
}

/// Destinations closer than this to the origin are redrawn.
const MIN_RIDE_M: f64 = 200.0;
const JITTER_ATTEMPTS: usize = 64;
const RELOCATION_SPEED_KMH: f64 = 60.0;
const NOISE_SHIFT_M: f64 = 50.0;
const NOISE_DELAY_S: i64 = 240;
/// Initial pings precede the first possible departure so no bike has two
/// pings with one timestamp.
pub const INITIAL_PING_LEAD_S: i64 = 60;

struct Bike {
    pos: GeoPoint,
}

pub fn generate_with(gt: &GroundTruth, opts: &SynthOptions, seed: u64) -> Result<SynthOutput> {
    gt.validate()?;
    if opts.days == 0 {
        return Err(Error::InvalidParameter("days must be at least 1"));
    }
    for f in [opts.noise_fraction, opts.relocation_fraction] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidParameter("fractions must lie in [0, 1]"));
        }
    }
    let n = gt.station_count();
    let projections: Vec<LocalProjection> = gt.stations.iter().map(|s| LocalProjection::new(s.centroid)).collect();
    let cumulative: Vec<Vec<Vec<f64>>> = gt
        .dest_probs
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

    let mut rng = rng::stream(seed, &[0x5E]);
    let mut out = SynthOutput::default();
    let t0 = opts.clock.midnight(opts.first_day);
    let width = (gt.fleet.iter().map(|&f| f as u64).sum::<u64>().max(1)).ilog10() as usize + 1;
    let id = |b: usize| format!("bike-{b:0width$}");

    let jitter = |rng: &mut rng::StreamRng, s: usize| -> GeoPoint {
        let r = gt.stations[s].scatter_m * libm::sqrt(rng.random::<f64>());
        let a = rng.random::<f64>() * core::f64::consts::TAU;
        projections[s].to_geo([r * libm::cos(a), r * libm::sin(a)])
    };

    let mut bikes: Vec<Bike> = Vec::new();
    // per station: (available from, bike), earliest first
    let mut parked: Vec<BinaryHeap<Reverse<(Timestamp, usize)>>> = vec![BinaryHeap::new(); n];
    for (s, &count) in gt.fleet.iter().enumerate() {
        for _ in 0..count {
            let b = bikes.len();
            let pos = jitter(&mut rng, s);
            out.pings.push(Ping { bike_id: id(b), t: t0 - INITIAL_PING_LEAD_S, pos });
            bikes.push(Bike { pos });
            parked[s].push(Reverse((t0, b)));
        }
    }

    let poisson: Vec<[[Option<Poisson<f64>>; 24]; 3]> = gt
        .rates
        .iter()
        .map(|r| r.map(|per_hour| per_hour.map(|l| (l > 0.0).then(|| Poisson::new(l).expect("validated rate")))))
        .collect();
    let mut departures: Vec<Timestamp> = Vec::new();
    for day in 0..opts.days as i64 {
        let midnight = opts.clock.midnight(opts.first_day + day);
        let cat = opts.clock.category(midnight).index();
        for hour in 0..24 {
            for interval in 0..INTERVALS_PER_HOUR as i64 {
                let start = midnight + hour as i64 * SECONDS_PER_HOUR + interval * 120;
                for s in 0..n {
                    let Some(dist) = &poisson[s][cat][hour] else { continue };
                    let count = dist.sample(&mut rng) as u64;
                    departures.clear();
                    departures.extend((0..count).map(|_| start + rng.random_range(0..120)));
                    departures.sort_unstable();
                    for &t in &departures {
                        let dest = {
                            let cum = &cumulative[s][hour];
                            let u = rng.random::<f64>() * cum[n - 1];
                            cum.partition_point(|&c| c <= u).min(n - 1)
                        };
                        match parked[s].peek() {
                            Some(Reverse((free_at, _))) if *free_at <= t => {}
                            _ => {
                                out.unserved += 1;
                                continue;
                            }
                        }
                        let Reverse((_, b)) = parked[s].pop().expect("peeked");
                        let origin = bikes[b].pos;
                        let mut target = jitter(&mut rng, dest);
                        let mut attempts = 1;
                        while geodesic(origin, target) < MIN_RIDE_M && attempts < JITTER_ATTEMPTS {
                            target = jitter(&mut rng, dest);
                            attempts += 1;
                        }
                        let dist_m = geodesic(origin, target);
                        if dist_m < MIN_RIDE_M {
                            // the station is too small for a ride here
                            parked[s].push(Reverse((t, b)));
                            out.unserved += 1;
                            continue;
                        }
                        let relocation =
                            opts.relocation_fraction > 0.0 && rng.random::<f64>() < opts.relocation_fraction;
                        let speed = if relocation { RELOCATION_SPEED_KMH } else { RIDE_SPEED_KMH };
                        let mut duration = libm::ceil(dist_m * 3.6 / speed) as i64;
                        if !relocation {
                            duration = duration.max(180);
                        }
                        let arrive = t + duration;
                        out.pings.push(Ping { bike_id: id(b), t, pos: origin });
                        out.pings.push(Ping { bike_id: id(b), t: arrive, pos: target });
                        bikes[b].pos = target;
                        if relocation {
                            out.relocations += 1;
                        } else {
                            out.trips.push(Trip {
                                bike_id: id(b),
                                t_start: t,
                                t_end: arrive,
                                origin,
                                dest: target,
                                origin_station: Some(s),
                                dest_station: Some(dest),
                            });
                        }
                        let mut free_at = arrive + 1;
                        if opts.noise_fraction > 0.0 && rng.random::<f64>() < opts.noise_fraction {
                            let a = rng.random::<f64>() * core::f64::consts::TAU;
                            let p = LocalProjection::new(target);
                            let drift = p.to_geo([NOISE_SHIFT_M * libm::cos(a), NOISE_SHIFT_M * libm::sin(a)]);
                            out.pings.push(Ping { bike_id: id(b), t: arrive + NOISE_DELAY_S, pos: drift });
                            bikes[b].pos = drift;
                            free_at = arrive + NOISE_DELAY_S + 1;
                            out.noise_pairs += 1;
                        }
                        parked[dest].push(Reverse((free_at, b)));
                    }
                }
            }
        }
    }
    out.pings.sort_by(|a, b| a.t.cmp(&b.t).then_with(|| a.bike_id.cmp(&b.bike_id)));
    Ok(out)
}
