//! CSV and JSON file formats.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use dockless_core::cluster::{Station, StationMeta, StationSet};
use dockless_core::geo::LocalProjection;
use dockless_core::ingest::{Ping, Trip};
use dockless_core::sim::{StepRecord, SweepResult};
use dockless_core::time::Timestamp;
use dockless_core::GeoPoint;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Parses an ISO-8601 timestamp into UTC seconds. Offsets are honoured;
/// timestamps without an offset are taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    None
}

/// `2017-09-04T00:00:00Z` form.
pub fn format_timestamp(t: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(t, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Skip malformed rows and record them.
    #[default]
    Lenient,
    /// Stop at the first malformed row.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line in the input.
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Problems found while reading a ping file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ErrorReport {
    pub rows_read: u64,
    pub rows_accepted: u64,
    pub errors: Vec<RowError>,
    /// Rows dropped because the bike already had a ping at that time.
    pub duplicates: Vec<RowError>,
}

impl ErrorReport {
    pub fn error_count(&self) -> usize {
        self.errors.len()
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for e in self.errors.iter().chain(&self.duplicates) {
            writeln!(w, "{e}")?;
        }
        writeln!(
            w,
            "{} rows read, {} accepted, {} malformed, {} duplicate",
            self.rows_read,
            self.rows_accepted,
            self.errors.len(),
            self.duplicates.len()
        )
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct StrictModeError(pub RowError);

fn looks_like_header(record: &csv::StringRecord, numeric: &[usize]) -> bool {
    numeric.iter().all(|&i| record.get(i).is_none_or(|f| f.trim().parse::<f64>().is_err()))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(input)
}

fn field<'a>(r: &'a csv::StringRecord, i: usize, name: &str) -> std::result::Result<&'a str, String> {
    r.get(i).ok_or_else(|| format!("missing column {name}"))
}

fn float(r: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<f64, String> {
    let f = field(r, i, name)?;
    f.parse::<f64>().map_err(|_| format!("{name} is not a number: {f:?}"))
}

fn time(r: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<Timestamp, String> {
    let f = field(r, i, name)?;
    parse_timestamp(f).ok_or_else(|| format!("{name} is not an ISO-8601 timestamp: {f:?}"))
}

fn point(r: &csv::StringRecord, lat: usize, lon: usize) -> std::result::Result<GeoPoint, String> {
    let (la, lo) = (float(r, lat, "lat")?, float(r, lon, "lon")?);
    GeoPoint::new(la, lo).map_err(|e| e.to_string())
}

fn ping_row(r: &csv::StringRecord) -> std::result::Result<Ping, String> {
    if r.len() != 4 {
        return Err(format!("expected 4 columns, found {}", r.len()));
    }
    let id = field(r, 0, "bike_id")?;
    let t = time(r, 1, "timestamp")?;
    let pos = point(r, 2, 3)?;
    Ping::new(id, t, pos).map_err(|e| e.to_string())
}

/// Reads `bike_id,timestamp,lat,lon` rows. A first row whose coordinates
/// are not numbers is treated as a header. Exact duplicate timestamps for
/// one bike keep the first row; the rest are listed in the report.
pub fn read_pings<R: Read>(input: R, mode: ParseMode) -> Result<(Vec<Ping>, ErrorReport)> {
    let mut report = ErrorReport::default();
    let mut pings = Vec::new();
    let mut lines = Vec::new();
    let mut first = true;
    for rec in reader(input).records() {
        let rec = rec.context("reading ping CSV")?;
        let line = rec.position().map_or(0, |p| p.line());
        if std::mem::take(&mut first) && looks_like_header(&rec, &[2, 3]) {
            continue;
        }
        report.rows_read += 1;
        match ping_row(&rec) {
            Ok(p) => {
                pings.push(p);
                lines.push(line);
            }
            Err(message) => {
                let e = RowError { line, message };
                if mode == ParseMode::Strict {
                    return Err(StrictModeError(e).into());
                }
                report.errors.push(e);
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    let mut kept = Vec::with_capacity(pings.len());
    for (p, line) in pings.into_iter().zip(lines) {
        if seen.insert((p.bike_id.clone(), p.t)) {
            kept.push(p);
        } else {
            report.duplicates.push(RowError { line, message: format!("duplicate timestamp for bike {}", p.bike_id) });
        }
    }
    report.rows_accepted = kept.len() as u64;
    Ok((kept, report))
}

pub fn write_pings<W: Write>(out: W, pings: &[Ping]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bike_id", "timestamp", "lat", "lon"])?;
    for p in pings {
        w.write_record([p.bike_id.clone(), format_timestamp(p.t), p.pos.lat.to_string(), p.pos.lon.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

const TRIP_COLUMNS: [&str; 9] = [
    "bike_id",
    "t_start",
    "t_end",
    "origin_lat",
    "origin_lon",
    "dest_lat",
    "dest_lon",
    "origin_station",
    "dest_station",
];

fn station(r: &csv::StringRecord, i: usize) -> std::result::Result<Option<usize>, String> {
    match r.get(i) {
        None | Some("") => Ok(None),
        Some(f) => f.parse().map(Some).map_err(|_| format!("station id is not an integer: {f:?}")),
    }
}

fn trip_row(r: &csv::StringRecord) -> std::result::Result<Trip, String> {
    if r.len() != 7 && r.len() != 9 {
        return Err(format!("expected 7 or 9 columns, found {}", r.len()));
    }
    Ok(Trip {
        bike_id: field(r, 0, "bike_id")?.to_string(),
        t_start: time(r, 1, "t_start")?,
        t_end: time(r, 2, "t_end")?,
        origin: point(r, 3, 4)?,
        dest: point(r, 5, 6)?,
        origin_station: station(r, 7)?,
        dest_station: station(r, 8)?,
    })
}

/// Reads a trips CSV, with or without the station columns. Any malformed
/// row is an error.
pub fn read_trips<R: Read>(input: R) -> Result<Vec<Trip>> {
    let mut trips = Vec::new();
    let mut first = true;
    for rec in reader(input).records() {
        let rec = rec.context("reading trips CSV")?;
        if std::mem::take(&mut first) && looks_like_header(&rec, &[3, 4]) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line());
        trips.push(trip_row(&rec).map_err(|message| StrictModeError(RowError { line, message }))?);
    }
    Ok(trips)
}

/// Writes trips; the station columns are added when any trip carries them.
pub fn write_trips<W: Write>(out: W, trips: &[Trip]) -> Result<()> {
    let annotated = trips.iter().any(|t| t.origin_station.is_some() || t.dest_station.is_some());
    let cols = if annotated { 9 } else { 7 };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&TRIP_COLUMNS[..cols])?;
    let opt = |s: Option<usize>| s.map(|v| v.to_string()).unwrap_or_default();
    for t in trips {
        let mut row = vec![
            t.bike_id.clone(),
            format_timestamp(t.t_start),
            format_timestamp(t.t_end),
            t.origin.lat.to_string(),
            t.origin.lon.to_string(),
            t.dest.lat.to_string(),
            t.dest.lon.to_string(),
        ];
        if annotated {
            row.push(opt(t.origin_station));
            row.push(opt(t.dest_station));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results<W: Write>(out: W, series: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "hour_of_day", "day_category", "lost_demand", "reposition_trips", "total_bikes"])?;
    for r in series {
        w.write_record([
            r.step.to_string(),
            r.hour_of_day.to_string(),
            r.day_category.as_str().to_string(),
            r.lost_demand.to_string(),
            r.reposition_trips.to_string(),
            r.total_bikes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a sweep CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fleet_factor: f64,
    pub vehicles: usize,
    pub cumulative_lost_demand: u64,
    pub cumulative_reposition_trips: u64,
    pub seed: u64,
}

impl From<&SweepResult> for SweepRow {
    fn from(r: &SweepResult) -> Self {
        SweepRow {
            fleet_factor: r.fleet_factor,
            vehicles: r.vehicles,
            cumulative_lost_demand: r.cumulative_lost_demand,
            cumulative_reposition_trips: r.cumulative_reposition_trips,
            seed: r.seed,
        }
    }
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (i, r) in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input).deserialize().enumerate() {
        rows.push(r.with_context(|| format!("sweep CSV row {}", i + 1))?);
    }
    Ok(rows)
}

/// Station file entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationRecord {
    pub id: usize,
    pub lat: f64,
    pub lon: f64,
    pub radius_m: f64,
    pub area_m2: f64,
    #[serde(default)]
    pub member_count: usize,
    pub initial_bikes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationMetadata {
    pub seed: u64,
    pub k: usize,
    pub region: Option<usize>,
    /// Origin of the planar projection used for clustering.
    pub projection_origin: GeoPoint,
}

/// On-disk form of a [`StationSet`]. Endpoint assignments live in the
/// annotated trips CSV instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationFile {
    pub stations: Vec<StationRecord>,
    pub metadata: StationMetadata,
}

impl From<&StationSet> for StationFile {
    fn from(s: &StationSet) -> Self {
        StationFile {
            stations: s
                .stations
                .iter()
                .map(|st| StationRecord {
                    id: st.id,
                    lat: st.centroid.lat,
                    lon: st.centroid.lon,
                    radius_m: st.radius_m,
                    area_m2: st.area_m2,
                    member_count: st.member_count,
                    initial_bikes: s.initial_inventory.get(st.id).copied().unwrap_or(0),
                })
                .collect(),
            metadata: StationMetadata {
                seed: s.meta.seed,
                k: s.meta.k,
                region: s.meta.region,
                projection_origin: s.projection.origin,
            },
        }
    }
}

impl StationFile {
    pub fn into_station_set(self) -> Result<StationSet> {
        let mut stations = Vec::with_capacity(self.stations.len());
        let mut inventory = Vec::with_capacity(self.stations.len());
        for (i, r) in self.stations.into_iter().enumerate() {
            if r.id != i {
                bail!("station ids must be 0..S-1 in order; entry {i} has id {}", r.id);
            }
            stations.push(Station {
                id: r.id,
                centroid: GeoPoint::new(r.lat, r.lon)?,
                radius_m: r.radius_m,
                area_m2: r.area_m2,
                member_count: r.member_count,
            });
            inventory.push(r.initial_bikes);
        }
        if stations.is_empty() {
            bail!("station file lists no stations");
        }
        let origin = self.metadata.projection_origin;
        GeoPoint::new(origin.lat, origin.lon)?;
        Ok(StationSet {
            stations,
            projection: LocalProjection::new(origin),
            assignment: Vec::new(),
            initial_inventory: inventory,
            meta: StationMeta { seed: self.metadata.seed, k: self.metadata.k, region: self.metadata.region },
        })
    }
}

pub fn read_stations(path: &Path) -> Result<StationSet> {
    read_json::<StationFile>(path)?.into_station_set()
}

pub fn write_stations(path: &Path, s: &StationSet) -> Result<()> {
    write_json(path, &StationFile::from(s))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("invalid JSON in {}", path.display()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes through `f` into a file at `path`.
pub fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
