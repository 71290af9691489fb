//! Two-stage k-means station abstraction: trip endpoints are split into
//! regions, one region is clustered again into abstract stations, and bikes
//! are placed at their nearest station to seed the initial inventory.
//!
//! Clustering runs in a local planar projection (meters); station radii are
//! reported as haversine distances from the centroid.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geo::dist2;
use crate::{geodesic, rng, Error, GeoPoint, LocalProjection, Ping, Result, Trip};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this many meters.
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams { k, seed, max_iter: 300, tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<[f64; 2]>,
    pub assignment: Vec<usize>,
    /// Inertia after every assignment step, final one last.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }
}

/// Index of the closest centroid; ties go to the lowest index.
pub fn nearest(centroids: &[[f64; 2]], p: &[f64; 2]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(points: &[[f64; 2]], k: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = rng::stream(seed, &[0x6b6d_6561_6e73]);
    let mut chosen = vec![false; points.len()];
    let first = rng.random_range(0..points.len());
    chosen[first] = true;
    let mut centroids = vec![points[first]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                idx = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
            idx.unwrap()
        } else {
            // every remaining point coincides with a centroid
            chosen.iter().position(|c| !c).unwrap()
        };
        chosen[pick] = true;
        let c = points[pick];
        centroids.push(c);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(dist2(p, &c));
        }
    }
    centroids
}

fn assign(points: &[[f64; 2]], centroids: &[[f64; 2]], assignment: &mut [usize], dists: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (j, d) = nearest(centroids, p);
        assignment[i] = j;
        dists[i] = d;
        inertia += d;
    }
    inertia
}

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded at
/// the point farthest from its centroid, so exactly `k` clusters come back.
pub fn kmeans(points: &[[f64; 2]], params: &KMeansParams) -> Result<KMeans> {
    let k = params.k;
    if points.is_empty() {
        return Err(Error::Empty("point set"));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::TooManyClusters { k, points: points.len() });
    }
    let n = points.len();
    let mut centroids = plus_plus_init(points, k, params.seed);
    let mut assignment = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        history.push(assign(points, &centroids, &mut assignment, &mut dists));

        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&assignment) {
            sums[j][0] += p[0];
            sums[j][1] += p[1];
            counts[j] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let mut far: Option<(usize, f64)> = None;
            for i in 0..n {
                if counts[assignment[i]] > 1 && far.is_none_or(|(_, d)| dists[i] > d) {
                    far = Some((i, dists[i]));
                }
            }
            let Some((i, _)) = far else { break };
            let from = assignment[i];
            sums[from][0] -= points[i][0];
            sums[from][1] -= points[i][1];
            counts[from] -= 1;
            sums[j] = points[i];
            counts[j] = 1;
            assignment[i] = j;
            dists[i] = 0.0;
        }
        let mut moved: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let c = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
            moved = moved.max(dist2(&c, &centroids[j]));
            centroids[j] = c;
        }
        if libm::sqrt(moved) < params.tol {
            break;
        }
    }
    history.push(assign(points, &centroids, &mut assignment, &mut dists));
    Ok(KMeans { centroids, assignment, inertia_history: history, iterations })
}

/// Region labels for every trip endpoint; trip `i` owns endpoints `2i`
/// (origin) and `2i + 1` (destination).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSegmentation {
    pub projection: LocalProjection,
    pub centroids: Vec<GeoPoint>,
    pub labels: Vec<usize>,
}

impl RegionSegmentation {
    pub fn trip_regions(&self, trip: usize) -> (usize, usize) {
        (self.labels[2 * trip], self.labels[2 * trip + 1])
    }

    /// Region holding the most endpoints, lowest id on ties.
    pub fn largest_region(&self) -> usize {
        let mut counts = vec![0usize; self.centroids.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        let mut best = 0;
        for (j, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = j;
            }
        }
        best
    }
}

fn endpoints(trips: &[Trip]) -> Vec<GeoPoint> {
    trips.iter().flat_map(|t| [t.origin, t.dest]).collect()
}

pub fn segment_regions(trips: &[Trip], k_regions: usize, seed: u64) -> Result<RegionSegmentation> {
    let geo = endpoints(trips);
    let projection = LocalProjection::centered_on(&geo).ok_or(Error::Empty("trip set"))?;
    let plane: Vec<[f64; 2]> = geo.iter().map(|p| projection.to_plane(*p)).collect();
    let km = kmeans(&plane, &KMeansParams::new(k_regions, seed))?;
    Ok(RegionSegmentation {
        projection,
        centroids: km.centroids.iter().map(|c| projection.to_geo(*c)).collect(),
        labels: km.assignment,
    })
}

/// Trips whose origin and destination were both labelled `region`.
pub fn filter_region(trips: &[Trip], seg: &RegionSegmentation, region: usize) -> Vec<Trip> {
    trips.iter().enumerate().filter(|(i, _)| seg.trip_regions(*i) == (region, region)).map(|(_, t)| t.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: usize,
    pub centroid: GeoPoint,
    pub radius_m: f64,
    pub area_m2: f64,
    pub member_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub seed: u64,
    pub k: usize,
    pub region: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSet {
    pub stations: Vec<Station>,
    pub projection: LocalProjection,
    /// Station of every endpoint of the clustered trips (`2i`, `2i + 1`).
    pub assignment: Vec<usize>,
    /// Bikes per station at time zero.
    pub initial_inventory: Vec<u32>,
    pub meta: StationMeta,
}

impl StationSet {
    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    fn plane_centroids(&self) -> Vec<[f64; 2]> {
        self.stations.iter().map(|s| self.projection.to_plane(s.centroid)).collect()
    }

    /// Nearest station by planar distance, lowest id on ties.
    pub fn nearest_station(&self, p: GeoPoint) -> usize {
        nearest(&self.plane_centroids(), &self.projection.to_plane(p)).0
    }

    pub fn total_bikes(&self) -> u64 {
        self.initial_inventory.iter().map(|&b| b as u64).sum()
    }
}

/// Clusters the endpoints of `region_trips` into `k_stations` stations and
/// returns the trips annotated with their origin and destination stations.
/// The initial inventory is left at zero; see [`assign_initial_inventory`].
pub fn build_stations(
    region_trips: &[Trip],
    k_stations: usize,
    seed: u64,
    region: Option<usize>,
) -> Result<(StationSet, Vec<Trip>)> {
    let geo = endpoints(region_trips);
    let projection = LocalProjection::centered_on(&geo).ok_or(Error::Empty("region trip set"))?;
    let plane: Vec<[f64; 2]> = geo.iter().map(|p| projection.to_plane(*p)).collect();
    let km = kmeans(&plane, &KMeansParams::new(k_stations, seed))?;

    let centroids: Vec<GeoPoint> = km.centroids.iter().map(|c| projection.to_geo(*c)).collect();
    let mut radius = vec![0.0f64; k_stations];
    let mut members = vec![0usize; k_stations];
    for (p, &j) in geo.iter().zip(&km.assignment) {
        radius[j] = radius[j].max(geodesic(centroids[j], *p));
        members[j] += 1;
    }
    let stations = (0..k_stations)
        .map(|id| Station {
            id,
            centroid: centroids[id],
            radius_m: radius[id],
            area_m2: core::f64::consts::PI * radius[id] * radius[id],
            member_count: members[id],
        })
        .collect();
    let annotated = region_trips
        .iter()
        .enumerate()
        .map(|(i, t)| Trip {
            origin_station: Some(km.assignment[2 * i]),
            dest_station: Some(km.assignment[2 * i + 1]),
            ..t.clone()
        })
        .collect();
    let set = StationSet {
        stations,
        projection,
        assignment: km.assignment,
        initial_inventory: vec![0; k_stations],
        meta: StationMeta { seed, k: k_stations, region },
    };
    Ok((set, annotated))
}

/// Counts each bike at the station nearest its first ping. When `active` is
/// given, bikes outside it (for example bikes with no trips) are skipped.
pub fn assign_initial_inventory<'a, I>(
    first_pings: I,
    stations: &StationSet,
    active: Option<&BTreeSet<String>>,
) -> Result<Vec<u32>>
where
    I: IntoIterator<Item = &'a Ping>,
{
    if stations.is_empty() {
        return Err(Error::Empty("station set"));
    }
    let centroids = stations.plane_centroids();
    let mut inventory = vec![0u32; stations.len()];
    for p in first_pings {
        if active.is_some_and(|a| !a.contains(&p.bike_id)) {
            continue;
        }
        let (j, _) = nearest(&centroids, &stations.projection.to_plane(p.pos));
        inventory[j] += 1;
    }
    Ok(inventory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// `blobs` clusters of `per` points with spread `spread` meters, centres
    /// on a grid with spacing `gap` meters.
    fn blobs(count: usize, per: usize, spread: f64, gap: f64, seed: u64) -> (Vec<[f64; 2]>, Vec<usize>) {
        let mut rng = rng::stream(seed, &[]);
        let side = libm::ceil(libm::sqrt(count as f64)) as usize;
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for b in 0..count {
            let c = [(b % side) as f64 * gap, (b / side) as f64 * gap];
            for _ in 0..per {
                pts.push([c[0] + rng.random_range(-spread..spread), c[1] + rng.random_range(-spread..spread)]);
                truth.push(b);
            }
        }
        (pts, truth)
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        let mut map = alloc::collections::BTreeMap::new();
        a.iter().zip(b).all(|(x, y)| *map.entry(*x).or_insert(*y) == *y) && {
            let mut inv = alloc::collections::BTreeMap::new();
            b.iter().zip(a).all(|(x, y)| *inv.entry(*x).or_insert(*y) == *y)
        }
    }

    #[test]
    fn k_equal_to_n_is_exact() {
        let pts = [[0.0, 0.0], [5.0, 1.0], [3.0, 9.0], [-4.0, 2.0]];
        let km = kmeans(&pts, &KMeansParams::new(4, 3)).unwrap();
        assert_eq!(km.inertia(), 0.0);
        let mut a = km.assignment.clone();
        a.sort();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn k_one_gives_mean() {
        let pts = [[0.0, 0.0], [4.0, 2.0], [2.0, 10.0]];
        let km = kmeans(&pts, &KMeansParams::new(1, 1)).unwrap();
        assert!((km.centroids[0][0] - 2.0).abs() < 1e-12);
        assert!((km.centroids[0][1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_too_many_clusters() {
        assert!(matches!(
            kmeans(&[[0.0, 0.0]], &KMeansParams::new(2, 0)),
            Err(Error::TooManyClusters { k: 2, points: 1 })
        ));
        assert!(kmeans(&[], &KMeansParams::new(1, 0)).is_err());
    }

    #[test]
    fn two_blobs_recovered() {
        let (pts, truth) = blobs(2, 50, 10.0, 200.0, 11);
        let km = kmeans(&pts, &KMeansParams::new(2, 5)).unwrap();
        assert!(same_partition(&km.assignment, &truth));
        // brute-force nearest-centroid labelling agrees with the output
        for (p, &a) in pts.iter().zip(&km.assignment) {
            let brute = (0..2)
                .min_by(|&i, &j| dist2(p, &km.centroids[i]).partial_cmp(&dist2(p, &km.centroids[j])).unwrap())
                .unwrap();
            assert_eq!(brute, a);
        }
    }

    #[test]
    fn inertia_never_increases() {
        for seed in 0..20 {
            let (pts, _) = blobs(9, 20, 80.0, 100.0, seed);
            let km = kmeans(&pts, &KMeansParams::new(7, seed)).unwrap();
            for w in km.inertia_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", km.inertia_history);
            }
        }
    }

    #[test]
    fn duplicate_points_still_yield_k_clusters() {
        let pts = [[1.0, 1.0]; 5];
        let km = kmeans(&pts, &KMeansParams::new(3, 0)).unwrap();
        assert_eq!(km.centroids.len(), 3);
        assert_eq!(km.inertia(), 0.0);
    }

    fn gp(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn trip(o: GeoPoint, d: GeoPoint) -> Trip {
        Trip {
            bike_id: "b".into(),
            t_start: 0,
            t_end: 600,
            origin: o,
            dest: d,
            origin_station: None,
            dest_station: None,
        }
    }

    #[test]
    fn single_trip_single_region() {
        let t = [trip(gp(1.40, 103.9), gp(1.41, 103.9))];
        let seg = segment_regions(&t, 1, 0).unwrap();
        assert_eq!(seg.trip_regions(0), (0, 0));
        assert_eq!(filter_region(&t, &seg, 0).len(), 1);
    }

    #[test]
    fn single_point_station_has_zero_radius() {
        let p = gp(1.40, 103.9);
        let t = [trip(p, p)];
        let (set, annotated) = build_stations(&t, 1, 0, None).unwrap();
        assert_eq!(set.stations[0].radius_m, 0.0);
        assert_eq!(set.stations[0].area_m2, 0.0);
        assert_eq!(annotated[0].origin_station, Some(0));
    }

    fn station_set(centres: &[GeoPoint]) -> StationSet {
        let projection = LocalProjection::centered_on(centres).unwrap();
        StationSet {
            stations: centres
                .iter()
                .enumerate()
                .map(|(id, &c)| Station { id, centroid: c, radius_m: 0.0, area_m2: 0.0, member_count: 0 })
                .collect(),
            projection,
            assignment: vec![],
            initial_inventory: vec![0; centres.len()],
            meta: StationMeta { seed: 0, k: centres.len(), region: None },
        }
    }

    #[test]
    fn inventory_ties_go_to_lowest_id() {
        let proj = LocalProjection::new(gp(1.40, 103.90));
        let mut centres: Vec<GeoPoint> = (0..8).map(|i| proj.to_geo([5000.0 + i as f64 * 1000.0, 0.0])).collect();
        centres[3] = proj.to_geo([-100.0, 0.0]);
        centres[7] = proj.to_geo([100.0, 0.0]);
        let mut set = station_set(&centres);
        set.projection = proj;
        let bike = Ping::new("x", 0, gp(1.40, 103.90)).unwrap();
        let inv = assign_initial_inventory([&bike], &set, None).unwrap();
        assert_eq!(inv[3], 1);
        assert_eq!(inv[7], 0);
    }

    #[test]
    fn inventory_counts_and_filters() {
        let centres = [gp(1.40, 103.90), gp(1.45, 103.95)];
        let set = station_set(&centres);
        let none: [&Ping; 0] = [];
        assert_eq!(assign_initial_inventory(none, &set, None).unwrap(), vec![0, 0]);

        let mut rng = rng::stream(4, &[]);
        let pings: Vec<Ping> = (0..100)
            .map(|i| {
                let p = gp(1.40 + rng.random_range(-0.001..0.001), 103.90 + rng.random_range(-0.001..0.001));
                Ping::new(alloc::format!("b{i}"), 0, p).unwrap()
            })
            .collect();
        let inv = assign_initial_inventory(&pings, &set, None).unwrap();
        assert_eq!(inv, vec![100, 0]);
        let active: BTreeSet<String> = pings.iter().take(40).map(|p| p.bike_id.clone()).collect();
        let inv = assign_initial_inventory(&pings, &set, Some(&active)).unwrap();
        assert_eq!(inv.iter().sum::<u32>(), 40);
    }
}
