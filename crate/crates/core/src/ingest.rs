//! Trip extraction from raw GPS pings and fleet usage analysis.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::time::{Timestamp, SECONDS_PER_DAY};
use crate::{geodesic, Error, GeoPoint, Result};

/// One GPS report from a bike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ping {
    pub bike_id: String,
    pub t: Timestamp,
    pub pos: GeoPoint,
}

impl Ping {
    pub fn new(bike_id: impl Into<String>, t: Timestamp, pos: GeoPoint) -> Result<Self> {
        let bike_id = bike_id.into();
        if bike_id.is_empty() {
            return Err(Error::EmptyBikeId);
        }
        Ok(Ping { bike_id, t, pos })
    }
}

/// A movement between two consecutive pings that passed the trip filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub bike_id: String,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub origin: GeoPoint,
    pub dest: GeoPoint,
    #[serde(default)]
    pub origin_station: Option<usize>,
    #[serde(default)]
    pub dest_station: Option<usize>,
}

impl Trip {
    pub fn duration_s(&self) -> i64 {
        self.t_end - self.t_start
    }

    pub fn distance_m(&self) -> f64 {
        geodesic(self.origin, self.dest)
    }
}

/// Thresholds a ping pair must meet to count as a trip. All three bounds
/// are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripFilter {
    pub min_duration_s: i64,
    pub min_distance_m: f64,
    pub max_speed_kmh: f64,
}

impl Default for TripFilter {
    fn default() -> Self {
        TripFilter { min_duration_s: 180, min_distance_m: 200.0, max_speed_kmh: 25.0 }
    }
}

impl TripFilter {
    pub fn accepts(&self, duration_s: i64, distance_m: f64) -> bool {
        // speed <= max rewritten without division so that exact boundary
        // values compare exactly
        duration_s >= self.min_duration_s
            && distance_m >= self.min_distance_m
            && distance_m * 3600.0 <= self.max_speed_kmh * 1000.0 * duration_s as f64
    }

    pub fn accepts_pair(&self, a: &Ping, b: &Ping) -> bool {
        self.accepts(b.t - a.t, geodesic(a.pos, b.pos))
    }
}

/// Time-ordered pings of one bike with duplicate timestamps removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BikeHistory {
    pub bike_id: String,
    pings: Vec<Ping>,
}

impl BikeHistory {
    /// Sorts by timestamp; of several pings sharing a timestamp the first in
    /// input order is kept. Returns the input positions of dropped pings.
    pub fn new(bike_id: impl Into<String>, pings: Vec<Ping>) -> (Self, Vec<usize>) {
        let mut indexed: Vec<(usize, Ping)> = pings.into_iter().enumerate().collect();
        indexed.sort_by_key(|(i, p)| (p.t, *i));
        let mut dropped = Vec::new();
        let mut kept: Vec<Ping> = Vec::with_capacity(indexed.len());
        for (i, p) in indexed {
            match kept.last() {
                Some(last) if last.t == p.t => dropped.push(i),
                _ => kept.push(p),
            }
        }
        dropped.sort_unstable();
        (BikeHistory { bike_id: bike_id.into(), pings: kept }, dropped)
    }

    pub fn pings(&self) -> &[Ping] {
        &self.pings
    }

    pub fn first(&self) -> Option<&Ping> {
        self.pings.first()
    }
}

/// Groups pings by bike id (histories come out sorted by id). The second
/// element lists the input indices of pings dropped as duplicate timestamps.
pub fn group_by_bike(pings: Vec<Ping>) -> (Vec<BikeHistory>, Vec<usize>) {
    let mut by_bike: BTreeMap<String, Vec<(usize, Ping)>> = BTreeMap::new();
    for (i, p) in pings.into_iter().enumerate() {
        by_bike.entry(p.bike_id.clone()).or_default().push((i, p));
    }
    let mut histories = Vec::with_capacity(by_bike.len());
    let mut dropped = Vec::new();
    for (id, rows) in by_bike {
        let (positions, pings): (Vec<usize>, Vec<Ping>) = rows.into_iter().unzip();
        let (h, local) = BikeHistory::new(id, pings);
        dropped.extend(local.into_iter().map(|j| positions[j]));
        histories.push(h);
    }
    dropped.sort_unstable();
    (histories, dropped)
}

/// Scans strictly consecutive ping pairs; a pair becomes a trip when it
/// passes every threshold of `filter`.
pub fn extract_trips(history: &BikeHistory, filter: &TripFilter) -> Vec<Trip> {
    history
        .pings
        .windows(2)
        .filter(|w| filter.accepts_pair(&w[0], &w[1]))
        .map(|w| Trip {
            bike_id: history.bike_id.clone(),
            t_start: w[0].t,
            t_end: w[1].t,
            origin: w[0].pos,
            dest: w[1].pos,
            origin_station: None,
            dest_station: None,
        })
        .collect()
}

pub fn extract_all(histories: &[BikeHistory], filter: &TripFilter) -> Vec<Trip> {
    histories.iter().flat_map(|h| extract_trips(h, filter)).collect()
}

/// Half-open observation window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Window {
    pub fn covering(histories: &[BikeHistory]) -> Option<Window> {
        let mut it = histories.iter().flat_map(|h| h.pings.iter().map(|p| p.t));
        let first = it.next()?;
        let (lo, hi) = it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t)));
        Some(Window { start: lo, end: hi + 1 })
    }

    pub fn len_s(&self) -> i64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdleInterval {
    pub bike_id: String,
    pub start: Timestamp,
    pub end: Timestamp,
}

impl IdleInterval {
    pub fn days(&self) -> f64 {
        (self.end - self.start) as f64 / SECONDS_PER_DAY as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UsageStats {
    pub trips_per_bike: BTreeMap<String, usize>,
    pub idle: Vec<IdleInterval>,
}

impl UsageStats {
    /// Number of bikes per trip count.
    pub fn frequency_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for &n in self.trips_per_bike.values() {
            *h.entry(n).or_insert(0) += 1;
        }
        h
    }

    pub fn idle_bike_count(&self) -> usize {
        let mut ids: Vec<&str> = self.idle.iter().map(|i| i.bike_id.as_str()).collect();
        ids.dedup();
        ids.len()
    }
}

/// Minimum idle stretch reported by [`usage_stats`].
pub const IDLE_THRESHOLD_S: i64 = 7 * SECONDS_PER_DAY;

/// Counts trips per bike and finds maximal stretches of at least
/// `min_idle_s` seconds in which a bike neither starts nor ends a trip.
/// Stretches touching the window edges are clipped to the window.
pub fn usage_stats(histories: &[BikeHistory], filter: &TripFilter, window: Window, min_idle_s: i64) -> UsageStats {
    let mut stats = UsageStats::default();
    for h in histories {
        let trips = extract_trips(h, filter);
        stats.trips_per_bike.insert(h.bike_id.clone(), trips.len());
        let mut free_from = window.start;
        let mut push = |from: Timestamp, to: Timestamp| {
            if to - from >= min_idle_s {
                stats.idle.push(IdleInterval { bike_id: h.bike_id.clone(), start: from, end: to });
            }
        };
        for trip in &trips {
            push(free_from, trip.t_start.clamp(window.start, window.end));
            free_from = trip.t_end.clamp(window.start, window.end);
        }
        push(free_from, window.end);
    }
    stats
}
