//! `dockless` command-line tool.
//!
//! Exit status: 0 on success, 2 for usage errors (unknown subcommand or
//! flag, missing required setting), 1 for I/O and validation failures.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dockless_core::cluster::{assign_initial_inventory, build_stations, filter_region, segment_regions};
use dockless_core::demand::{estimate, DemandModel, ObservationDays};
use dockless_core::ingest::{extract_all, group_by_bike, usage_stats, Ping, TripFilter, Window, IDLE_THRESHOLD_S};
use dockless_core::mip::{
    evaluate, solve_with, CostWeights, Evaluation, ProblemInstance, RepositionPlan, SolveOptions, SolveStats,
};
use dockless_core::sim::{run_from, scale_fleet};
use dockless_core::synth::{generate_with, GroundTruth, SynthOptions};
use dockless_core::time::{LocalClock, SECONDS_PER_HOUR};
use serde::{Deserialize, Serialize};

use crate::config::{pick, resolve_strategy, ConfigFile, StrategyName, StrategyOverrides};
use crate::io::{self, ParseMode, SweepRow};
use crate::manifest::{write_sidecars, RunManifest};
use crate::report::summarize;

#[derive(Debug, Parser)]
#[command(
    name = "dockless",
    version,
    about = "Dockless bike-share rebalancing: data pipeline, repositioning solver and simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Input file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file; a `<output>.manifest.json` sidecar is written beside it.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON config file. Flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct StrategyArgs {
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyName>,
    /// Hourly steps to simulate.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Cost per repositioning trip.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Cost per unit of lost demand.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Rebalancing period and planning horizon, hours.
    #[arg(long)]
    pub period: Option<usize>,
    /// Planning scenarios per solve.
    #[arg(long)]
    pub scenarios: Option<usize>,
    /// Bikes per vehicle.
    #[arg(long)]
    pub capacity: Option<u32>,
    /// Solver node budget per planning step; 0 means unlimited.
    #[arg(long)]
    pub node_limit: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    /// Stations on a grid with random rates and destinations.
    Random,
    /// Residential and business halves with opposite commuting peaks.
    Commuter,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate GPS pings from a ground-truth demand process.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Built-in layout used when no ground-truth JSON is given.
        #[arg(long, value_enum, default_value_t = Layout::Random)]
        layout: Layout,
        #[arg(long, default_value_t = 120)]
        station_count: usize,
        #[arg(long, default_value_t = 20)]
        bikes_per_station: u32,
        #[arg(long, default_value_t = 30)]
        days: u32,
        /// Probability that a ride is followed by a short GPS drift.
        #[arg(long, default_value_t = 0.0)]
        noise_fraction: f64,
        /// Probability that a departure is a truck relocation.
        #[arg(long, default_value_t = 0.0)]
        relocation_fraction: f64,
        /// Also write the ground truth as JSON.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Also write the generated rides as a trips CSV.
        #[arg(long)]
        trips: Option<PathBuf>,
    },
    /// Turn pings into trips.
    ExtractTrips {
        #[command(flatten)]
        common: Common,
        /// Abort on the first malformed row.
        #[arg(long)]
        strict: bool,
        /// Write the line-numbered error report here instead of stderr.
        #[arg(long)]
        errors: Option<PathBuf>,
        /// Also write per-bike usage and idle intervals as JSON.
        #[arg(long)]
        usage: Option<PathBuf>,
    },
    /// Cluster trip endpoints into stations.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8)]
        regions: usize,
        /// Region to keep; defaults to the one with the most endpoints.
        #[arg(long)]
        region: Option<usize>,
        #[arg(long, default_value_t = 120)]
        k: usize,
        /// Pings whose first fix per bike sets the initial inventory.
        #[arg(long)]
        pings: Option<PathBuf>,
        /// Count bikes without trips in the region too.
        #[arg(long)]
        include_idle: bool,
        /// Write the region's trips annotated with stations here.
        #[arg(long)]
        annotated: Option<PathBuf>,
    },
    /// Estimate the demand model from station-annotated trips.
    BuildDemand {
        #[command(flatten)]
        common: Common,
        /// Station JSON the trips are annotated against.
        #[arg(long)]
        stations: Option<PathBuf>,
        #[arg(long, default_value_t = 8, allow_negative_numbers = true)]
        utc_offset_hours: i64,
    },
    /// Solve one repositioning instance.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Override the instance's vehicle count.
        #[arg(long)]
        vehicles: Option<usize>,
        /// Override the instance's trip cost.
        #[arg(long)]
        alpha: Option<f64>,
        /// Override the instance's lost-demand cost.
        #[arg(long)]
        beta: Option<f64>,
        /// Stop after this many search nodes; 0 means unlimited.
        #[arg(long)]
        node_limit: Option<u64>,
    },
    /// Simulate one strategy; `--input` is the station JSON.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        strategy: StrategyArgs,
        /// Demand model JSON.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Repositioning vehicles.
        #[arg(long)]
        vehicles: Option<usize>,
        /// Scale every station's initial bikes by this factor.
        #[arg(long)]
        fleet_factor: Option<f64>,
    },
    /// Simulate a grid of fleet factors and vehicle counts.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        strategy: StrategyArgs,
        /// Demand model JSON.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Vehicle counts, comma-separated.
        #[arg(long, value_delimiter = ',')]
        vehicles: Option<Vec<usize>>,
        /// Fleet factors, comma-separated.
        #[arg(long, value_delimiter = ',')]
        fleet_factor: Option<Vec<f64>>,
        /// Seeds per grid cell.
        #[arg(long)]
        replicates: Option<u32>,
    },
    /// Summarize a sweep CSV; prints text, writes JSON with `--output`.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

/// A missing or contradictory setting; reported with exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

struct Ctx {
    file: ConfigFile,
    manifest: RunManifest,
}

impl Ctx {
    fn new(command: &str, common: &Common, settings: impl Serialize) -> Result<Self> {
        let file = ConfigFile::load_optional(common.config.as_deref())?;
        let seed = pick(common.seed, &file.seed);
        let settings = serde_json::to_value(settings)?;
        Ok(Ctx { manifest: RunManifest::start(command, common.config.clone(), settings, seed), file })
    }

    fn input(&mut self, common: &Common, what: &str) -> Result<PathBuf> {
        let p = pick(common.input.clone(), &self.file.input)
            .ok_or_else(|| usage(format!("--input ({what}) is required")))?;
        self.manifest.inputs.push(p.clone());
        Ok(p)
    }

    fn output(&self, common: &Common, what: &str) -> Result<PathBuf> {
        pick(common.output.clone(), &self.file.output).ok_or_else(|| usage(format!("--output ({what}) is required")))
    }

    fn extra_input(&mut self, flag: Option<PathBuf>, file: Option<PathBuf>, name: &str) -> Result<PathBuf> {
        let p = flag.or(file).ok_or_else(|| usage(format!("--{name} is required")))?;
        self.manifest.inputs.push(p.clone());
        Ok(p)
    }

    fn seed(&self) -> u64 {
        self.manifest.seed.unwrap_or(0)
    }

    fn wrote(&mut self, p: &Path) {
        self.manifest.outputs.push(p.to_path_buf());
    }

    fn config_value(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        if let serde_json::Value::Object(m) = &mut self.manifest.config {
            m.insert(key.to_string(), serde_json::to_value(value)?);
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        write_sidecars(&mut self.manifest)
    }
}

fn overrides(s: &StrategyArgs, vehicles: Option<usize>, seed: Option<u64>) -> StrategyOverrides {
    StrategyOverrides {
        strategy: s.strategy,
        vehicles,
        period: s.period,
        scenarios: s.scenarios,
        capacity: s.capacity,
        alpha: s.alpha,
        beta: s.beta,
        iterations: s.iterations,
        seed,
        node_limit: s.node_limit,
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth {
            common,
            layout,
            station_count,
            bikes_per_station,
            days,
            noise_fraction,
            relocation_fraction,
            ground_truth,
            trips,
        } => {
            #[derive(Serialize)]
            struct S {
                layout: &'static str,
                station_count: usize,
                bikes_per_station: u32,
                days: u32,
                noise_fraction: f64,
                relocation_fraction: f64,
            }
            let layout_name = match layout {
                Layout::Random => "random",
                Layout::Commuter => "commuter",
            };
            let mut ctx = Ctx::new(
                "synth",
                &common,
                S { layout: layout_name, station_count, bikes_per_station, days, noise_fraction, relocation_fraction },
            )?;
            let out = ctx.output(&common, "pings CSV")?;
            let seed = ctx.seed();
            let gt = match pick(common.input.clone(), &ctx.file.input) {
                Some(p) => {
                    ctx.manifest.inputs.push(p.clone());
                    io::read_json::<GroundTruth>(&p)?
                }
                None => match layout {
                    Layout::Random => GroundTruth::random(station_count, bikes_per_station, seed)?,
                    Layout::Commuter => GroundTruth::commuter(station_count, bikes_per_station, seed)?,
                },
            };
            let opts = SynthOptions { noise_fraction, relocation_fraction, ..SynthOptions::days(days) };
            let generated = generate_with(&gt, &opts, seed)?;
            io::write_with(&out, |w| io::write_pings(w, &generated.pings))?;
            ctx.wrote(&out);
            if let Some(p) = ground_truth {
                io::write_json(&p, &gt)?;
                ctx.wrote(&p);
            }
            if let Some(p) = trips {
                io::write_with(&p, |w| io::write_trips(w, &generated.trips))?;
                ctx.wrote(&p);
            }
            eprintln!(
                "{} pings, {} rides, {} unserved departures, {} noise pairs, {} relocations",
                generated.pings.len(),
                generated.trips.len(),
                generated.unserved,
                generated.noise_pairs,
                generated.relocations
            );
            ctx.finish()
        }
        Command::ExtractTrips { common, strict, errors, usage } => {
            let mut ctx = Ctx::new("extract-trips", &common, serde_json::json!({ "strict": strict }))?;
            let input = ctx.input(&common, "pings CSV")?;
            let out = ctx.output(&common, "trips CSV")?;
            let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
            let (pings, report) =
                io::read_pings(io::open(&input)?, mode).with_context(|| format!("reading {}", input.display()))?;
            match &errors {
                Some(p) => {
                    io::write_with(p, |w| Ok(report.write_to(w)?))?;
                    ctx.wrote(p);
                }
                None => report.write_to(std::io::stderr().lock())?,
            }
            let (histories, _) = group_by_bike(pings);
            let filter = TripFilter::default();
            let trips = extract_all(&histories, &filter);
            io::write_with(&out, |w| io::write_trips(w, &trips))?;
            ctx.wrote(&out);
            if let Some(p) = usage {
                let stats = match Window::covering(&histories) {
                    Some(win) => usage_stats(&histories, &filter, win, IDLE_THRESHOLD_S),
                    None => Default::default(),
                };
                #[derive(Serialize)]
                struct Usage<'a> {
                    bikes: usize,
                    idle_bikes: usize,
                    trips_histogram: BTreeMap<usize, usize>,
                    stats: &'a dockless_core::ingest::UsageStats,
                }
                let doc = Usage {
                    bikes: stats.trips_per_bike.len(),
                    idle_bikes: stats.idle_bike_count(),
                    trips_histogram: stats.frequency_histogram(),
                    stats: &stats,
                };
                io::write_json(&p, &doc)?;
                ctx.wrote(&p);
            }
            eprintln!("{} trips from {} bikes", trips.len(), histories.len());
            ctx.finish()
        }
        Command::Cluster { common, regions, region, k, pings, include_idle, annotated } => {
            let mut ctx = Ctx::new(
                "cluster",
                &common,
                serde_json::json!({ "regions": regions, "region": region, "k": k, "include_idle": include_idle }),
            )?;
            let input = ctx.input(&common, "trips CSV")?;
            let out = ctx.output(&common, "station JSON")?;
            let seed = ctx.seed();
            let trips = io::read_trips(io::open(&input)?)?;
            if trips.is_empty() {
                bail!("{} contains no trips", input.display());
            }
            let seg = segment_regions(&trips, regions, seed)?;
            let chosen = region.unwrap_or_else(|| seg.largest_region());
            if chosen >= regions {
                return Err(usage(format!("--region {chosen} is out of range for {regions} regions")));
            }
            ctx.config_value("region", chosen)?;
            let kept = filter_region(&trips, &seg, chosen);
            if kept.is_empty() {
                bail!("region {chosen} has no trips that start and end inside it");
            }
            let (mut stations, kept) = build_stations(&kept, k, seed, Some(chosen))?;
            let active: BTreeSet<String> = kept.iter().map(|t| t.bike_id.clone()).collect();
            let filter = (!include_idle).then_some(&active);
            stations.initial_inventory = match &pings {
                Some(p) => {
                    ctx.manifest.inputs.push(p.clone());
                    let (all, _) = io::read_pings(io::open(p)?, ParseMode::Lenient)?;
                    let (histories, _) = group_by_bike(all);
                    assign_initial_inventory(histories.iter().filter_map(|h| h.first()), &stations, filter)?
                }
                None => {
                    let mut first: BTreeMap<&str, Ping> = BTreeMap::new();
                    for t in &kept {
                        let p = Ping { bike_id: t.bike_id.clone(), t: t.t_start, pos: t.origin };
                        first
                            .entry(&t.bike_id)
                            .and_modify(|f| {
                                if p.t < f.t {
                                    *f = p.clone()
                                }
                            })
                            .or_insert(p);
                    }
                    assign_initial_inventory(first.values(), &stations, None)?
                }
            };
            io::write_stations(&out, &stations)?;
            ctx.wrote(&out);
            if let Some(p) = annotated {
                io::write_with(&p, |w| io::write_trips(w, &kept))?;
                ctx.wrote(&p);
            }
            eprintln!(
                "region {chosen}: {} of {} trips, {} stations, {} bikes",
                kept.len(),
                trips.len(),
                stations.len(),
                stations.total_bikes()
            );
            ctx.finish()
        }
        Command::BuildDemand { common, stations, utc_offset_hours } => {
            let mut ctx =
                Ctx::new("build-demand", &common, serde_json::json!({ "utc_offset_hours": utc_offset_hours }))?;
            let input = ctx.input(&common, "annotated trips CSV")?;
            let stations_path = ctx.extra_input(stations, ctx.file.stations.clone(), "stations")?;
            let out = ctx.output(&common, "demand model JSON")?;
            let set = io::read_stations(&stations_path)?;
            let trips = io::read_trips(io::open(&input)?)?;
            let clock = LocalClock::new(utc_offset_hours * SECONDS_PER_HOUR);
            let window = ObservationDays::spanning(&trips, &clock).context("no trips to estimate from")?;
            let model = estimate(&trips, set.len(), &clock, window)?;
            io::write_json(&out, &model)?;
            ctx.wrote(&out);
            eprintln!("{} trips over {} days, {} stations", trips.len(), window.days, set.len());
            ctx.finish()
        }
        Command::Solve { common, vehicles, alpha, beta, node_limit } => {
            let mut ctx = Ctx::new(
                "solve",
                &common,
                serde_json::json!({ "vehicles": vehicles, "alpha": alpha, "beta": beta, "node_limit": node_limit }),
            )?;
            let input = ctx.input(&common, "instance JSON")?;
            let out = ctx.output(&common, "plan JSON")?;
            let mut p: ProblemInstance = io::read_json(&input)?;
            let vehicles = pick(vehicles, &ctx.file.vehicles);
            let alpha = pick(alpha, &ctx.file.alpha);
            let beta = pick(beta, &ctx.file.beta);
            if let Some(v) = vehicles {
                p.vehicles = v;
            }
            if alpha.is_some() || beta.is_some() {
                let w = p.weights;
                p.weights = CostWeights::from_f64(alpha.unwrap_or(w.alpha_f64()), beta.unwrap_or(w.beta_f64()))?;
            }
            p.validate()?;
            let limit = pick(node_limit, &ctx.file.node_limit).filter(|&n| n > 0);
            let (plan, stats) = solve_with(&p, &SolveOptions { node_limit: limit })?;
            let evaluation = evaluate(&plan, &p)?;
            let doc = PlanFile { objective: plan.objective.value(), trips: plan.trips(), stats, evaluation, plan };
            io::write_json(&out, &doc)?;
            ctx.wrote(&out);
            eprintln!(
                "objective {} with {} trips{}",
                doc.objective,
                doc.trips,
                if stats.proven_optimal { "" } else { " (node limit reached; not proven optimal)" }
            );
            ctx.finish()
        }
        Command::Simulate { common, strategy, model, vehicles, fleet_factor } => {
            let file = ConfigFile::load_optional(common.config.as_deref())?;
            let cfg = resolve_strategy(&overrides(&strategy, vehicles, common.seed), &file);
            let factor = pick(fleet_factor, &file.fleet_factor).unwrap_or(1.0);
            let mut ctx =
                Ctx::new("simulate", &common, serde_json::json!({ "strategy": cfg, "fleet_factor": factor }))?;
            let stations = ctx.input(&common, "station JSON")?;
            let model_path = ctx.extra_input(model, ctx.file.model.clone(), "model")?;
            let out = ctx.output(&common, "results CSV")?;
            let set = io::read_stations(&stations)?;
            let model: DemandModel = io::read_json(&model_path)?;
            if set.len() != model.station_count {
                bail!("{} has {} stations but the model has {}", stations.display(), set.len(), model.station_count);
            }
            let state = run_from(scale_fleet(&set.initial_inventory, factor)?, &model, &cfg)?;
            io::write_with(&out, |w| io::write_results(w, &state.series))?;
            ctx.wrote(&out);
            eprintln!(
                "{} steps: lost demand {}, repositioning trips {}{}",
                state.series.len(),
                state.lost_demand_total,
                state.reposition_trip_total,
                unproven_note(state.unproven_solves)
            );
            ctx.finish()
        }
        Command::Sweep { common, strategy, model, vehicles, fleet_factor, replicates } => {
            let file = ConfigFile::load_optional(common.config.as_deref())?;
            let cfg = resolve_strategy(&overrides(&strategy, None, common.seed), &file);
            let vehicle_counts = pick(vehicles, &file.vehicle_counts).unwrap_or_else(|| vec![cfg.vehicles]);
            let factors = pick(fleet_factor, &file.fleet_factors).unwrap_or_else(|| vec![1.0]);
            let replicates = pick(replicates, &file.replicates).unwrap_or(1);
            let mut ctx = Ctx::new(
                "sweep",
                &common,
                serde_json::json!({
                    "strategy": cfg, "vehicle_counts": vehicle_counts, "fleet_factors": factors, "replicates": replicates,
                }),
            )?;
            let stations = ctx.input(&common, "station JSON")?;
            let model_path = ctx.extra_input(model, ctx.file.model.clone(), "model")?;
            let out = ctx.output(&common, "sweep CSV")?;
            let set = io::read_stations(&stations)?;
            let model: DemandModel = io::read_json(&model_path)?;
            if set.len() != model.station_count {
                bail!("{} has {} stations but the model has {}", stations.display(), set.len(), model.station_count);
            }
            let results =
                crate::sweep::sweep(&set.initial_inventory, &model, &cfg, &factors, &vehicle_counts, replicates)?;
            let rows: Vec<SweepRow> = results.iter().map(SweepRow::from).collect();
            io::write_with(&out, |w| io::write_sweep(w, &rows))?;
            ctx.wrote(&out);
            eprintln!("{} runs", rows.len());
            ctx.finish()
        }
        Command::Report { common } => {
            let mut ctx = Ctx::new("report", &common, serde_json::json!({}))?;
            let input = ctx.input(&common, "sweep CSV")?;
            let rows = io::read_sweep(io::open(&input)?)?;
            let report = summarize(&rows)?;
            std::io::stdout().lock().write_all(report.render().as_bytes())?;
            match pick(common.output.clone(), &ctx.file.output) {
                Some(out) => {
                    io::write_json(&out, &report)?;
                    ctx.wrote(&out);
                    ctx.finish()
                }
                None => Ok(()),
            }
        }
    }
}

fn unproven_note(n: u64) -> String {
    if n == 0 {
        String::new()
    } else {
        format!(" ({n} plans hit the node limit before proving optimality)")
    }
}

/// `solve` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub objective: f64,
    pub trips: usize,
    pub stats: SolveStats,
    pub evaluation: Evaluation,
    pub plan: RepositionPlan,
}
