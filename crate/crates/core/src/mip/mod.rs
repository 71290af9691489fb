//! The single-step repositioning program.
//!
//! Given current bikes `d_s`, `K` demand scenarios (net flow per station
//! over the planning horizon) and a fleet of identical vehicles, choose for
//! every vehicle one pickup station, one drop-off station and a quantity so
//! as to minimise
//!
//! ```text
//! K * alpha * (number of (station, vehicle) drop-offs with y+ >= 1)
//!     - beta * sum_{s,k} L[s][k],    L[s][k] = min(0, d_s + net[k][s] + r_s)
//! ```
//!
//! where `r_s` is the net repositioning at `s`. [`solve`] is an exact
//! branch-and-bound; [`solve_exhaustive`] enumerates every assignment and
//! serves as its oracle on small instances.

mod bnb;
mod relax;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::demand::ScenarioSet;
use crate::{Error, Result};

pub use bnb::{solve, solve_with, solve_with_stats, SolveOptions, SolveStats};

/// `alpha` and `beta` as integers over a common denominator, so objective
/// values compare exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostWeights {
    pub alpha: i64,
    pub beta: i64,
    pub denom: i64,
}

impl CostWeights {
    pub fn new(alpha: i64, beta: i64, denom: i64) -> Result<Self> {
        if denom <= 0 {
            return Err(Error::InvalidWeights("denominator must be positive"));
        }
        if alpha < 0 || beta < 0 {
            return Err(Error::InvalidWeights("alpha and beta must be non-negative"));
        }
        if alpha == 0 && beta == 0 {
            return Err(Error::InvalidWeights("alpha and beta cannot both be zero"));
        }
        Ok(CostWeights { alpha, beta, denom })
    }

    pub fn integers(alpha: i64, beta: i64) -> Result<Self> {
        Self::new(alpha, beta, 1)
    }

    /// Exact rational form of decimal weights with up to six fractional
    /// digits.
    pub fn from_f64(alpha: f64, beta: f64) -> Result<Self> {
        const SCALE: i64 = 1_000_000;
        let to_int = |x: f64| -> Result<i64> {
            let scaled = x * SCALE as f64;
            let r = libm::round(scaled);
            if !x.is_finite() || (scaled - r).abs() > 1e-6 * scaled.abs().max(1.0) || r.abs() > 1e15 {
                return Err(Error::InvalidWeights("weights need at most six decimal places"));
            }
            Ok(r as i64)
        };
        let (a, b) = (to_int(alpha)?, to_int(beta)?);
        let g = gcd(gcd(a.unsigned_abs(), b.unsigned_abs()), SCALE as u64).max(1) as i64;
        Self::new(a / g, b / g, SCALE / g)
    }

    pub fn alpha_f64(&self) -> f64 {
        self.alpha as f64 / self.denom as f64
    }

    pub fn beta_f64(&self) -> f64 {
        self.beta as f64 / self.denom as f64
    }

    /// Same weights multiplied by `factor`.
    pub fn scaled(&self, factor: i64) -> Result<Self> {
        Self::new(self.alpha * factor, self.beta * factor, self.denom)
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights { alpha: 1, beta: 1, denom: 1 }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// One time step of the repositioning problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub vehicles: usize,
    /// Bike slots per vehicle.
    pub capacity: u32,
    /// Bikes currently at each station.
    pub bikes: Vec<u32>,
    /// `net_flow[k][s]`: bikes in minus bikes out at `s` over the planning
    /// horizon in scenario `k`.
    pub net_flow: Vec<Vec<i64>>,
    /// Maximum pickup / drop-off stations per vehicle.
    pub max_pickups: usize,
    pub max_dropoffs: usize,
    pub weights: CostWeights,
}

impl ProblemInstance {
    pub fn new(bikes: Vec<u32>, net_flow: Vec<Vec<i64>>, vehicles: usize, capacity: u32, weights: CostWeights) -> Self {
        ProblemInstance { vehicles, capacity, bikes, net_flow, max_pickups: 1, max_dropoffs: 1, weights }
    }

    pub fn from_scenarios(
        bikes: Vec<u32>,
        scenarios: &ScenarioSet,
        vehicles: usize,
        capacity: u32,
        weights: CostWeights,
    ) -> Self {
        Self::new(bikes, scenarios.net_flows(), vehicles, capacity, weights)
    }

    pub fn stations(&self) -> usize {
        self.bikes.len()
    }

    pub fn scenarios(&self) -> usize {
        self.net_flow.len()
    }

    /// Objective cost of one repositioning trip, `K * alpha`, in scaled units.
    pub fn trip_cost(&self) -> i64 {
        self.scenarios() as i64 * self.weights.alpha
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.stations();
        if s == 0 {
            return Err(Error::Empty("station set"));
        }
        if self.net_flow.is_empty() {
            return Err(Error::Empty("scenario set"));
        }
        if let Some(row) = self.net_flow.iter().find(|r| r.len() != s) {
            return Err(Error::StationCountMismatch { expected: s, found: row.len() });
        }
        if self.capacity == 0 {
            return Err(Error::InvalidParameter("vehicle capacity must be at least 1"));
        }
        CostWeights::new(self.weights.alpha, self.weights.beta, self.weights.denom)?;
        Ok(())
    }

    fn validate_for_solver(&self) -> Result<()> {
        self.validate()?;
        if self.max_pickups != 1 || self.max_dropoffs != 1 {
            return Err(Error::UnsupportedVisitLimit { pickups: self.max_pickups, dropoffs: self.max_dropoffs });
        }
        Ok(())
    }
}

/// Lost demand at a station for one scenario: the shortfall (as a
/// non-positive number) once current bikes, demand and repositioning are
/// netted. This is the optimal `L` for fixed repositioning.
pub fn closed_form_lost_demand(bikes: i64, net_flow: i64, repositioned: i64) -> i64 {
    (bikes + net_flow + repositioned).min(0)
}

/// One vehicle's trip. `bikes == 0` means the vehicle stays idle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleMove {
    pub pickup: usize,
    pub dropoff: usize,
    pub bikes: u32,
}

impl VehicleMove {
    pub const IDLE: VehicleMove = VehicleMove { pickup: 0, dropoff: 0, bikes: 0 };
}

/// Exact objective as `scaled / denom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Objective {
    pub scaled: i64,
    pub denom: i64,
}

impl Objective {
    pub fn value(&self) -> f64 {
        self.scaled as f64 / self.denom as f64
    }
}

/// Decision variables of a solved (or hand-built) instance, indexed
/// `[station][vehicle]` and `[station][scenario]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepositionPlan {
    pub moves: Vec<VehicleMove>,
    pub y_plus: Vec<Vec<u32>>,
    pub y_minus: Vec<Vec<u32>>,
    pub b_plus: Vec<Vec<bool>>,
    pub b_minus: Vec<Vec<bool>>,
    pub lost: Vec<Vec<i64>>,
    pub objective: Objective,
}

impl RepositionPlan {
    /// Plan realising `moves` (one per vehicle) with optimal lost demand.
    pub fn from_moves(p: &ProblemInstance, moves: Vec<VehicleMove>) -> Self {
        let (s_count, v_count) = (p.stations(), moves.len());
        let mut plan = RepositionPlan {
            moves,
            y_plus: vec![vec![0; v_count]; s_count],
            y_minus: vec![vec![0; v_count]; s_count],
            b_plus: vec![vec![false; v_count]; s_count],
            b_minus: vec![vec![false; v_count]; s_count],
            lost: vec![vec![0; p.scenarios()]; s_count],
            objective: Objective { scaled: 0, denom: p.weights.denom },
        };
        for (v, m) in plan.moves.iter().enumerate() {
            plan.b_minus[m.pickup][v] = true;
            plan.b_plus[m.dropoff][v] = true;
            plan.y_minus[m.pickup][v] += m.bikes;
            plan.y_plus[m.dropoff][v] += m.bikes;
        }
        let net = plan.net_repositioning();
        for s in 0..s_count {
            for k in 0..p.scenarios() {
                plan.lost[s][k] = closed_form_lost_demand(p.bikes[s] as i64, p.net_flow[k][s], net[s]);
            }
        }
        plan.objective = objective_of(&plan, p);
        plan
    }

    /// `sum_v (y+ - y-)` per station.
    pub fn net_repositioning(&self) -> Vec<i64> {
        self.y_plus
            .iter()
            .zip(&self.y_minus)
            .map(|(plus, minus)| {
                plus.iter().map(|&y| y as i64).sum::<i64>() - minus.iter().map(|&y| y as i64).sum::<i64>()
            })
            .collect()
    }

    /// Drop-offs with at least one bike.
    pub fn trips(&self) -> usize {
        self.y_plus.iter().flatten().filter(|&&y| y >= 1).count()
    }

    pub fn total_lost(&self) -> i64 {
        self.lost.iter().flatten().sum()
    }
}

fn objective_of(plan: &RepositionPlan, p: &ProblemInstance) -> Objective {
    Objective {
        scaled: p.trip_cost() * plan.trips() as i64 - p.weights.beta * plan.total_lost(),
        denom: p.weights.denom,
    }
}

/// Outcome of checking one constraint family; `first_violation` holds the
/// first offending index pair (e.g. `(station, vehicle)`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub constraint: u8,
    pub first_violation: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objective: Objective,
    pub trips: usize,
    pub checks: Vec<ConstraintCheck>,
}

impl Evaluation {
    pub fn violations(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| c.first_violation.is_some())
    }

    pub fn is_feasible(&self) -> bool {
        self.violations().next().is_none()
    }

    pub fn violated(&self, constraint: u8) -> bool {
        self.checks.iter().any(|c| c.constraint == constraint && c.first_violation.is_some())
    }
}

/// Recomputes the objective of `plan` from its variables and checks
/// constraint families 2-10. Trips are counted from `y+`, so a set `b+`
/// with zero bikes costs nothing.
pub fn evaluate(plan: &RepositionPlan, p: &ProblemInstance) -> Result<Evaluation> {
    let (s_count, v_count) = (p.stations(), plan.y_plus.first().map_or(0, |r| r.len()));
    let matrices_ok =
        [&plan.y_plus, &plan.y_minus].iter().all(|m| m.len() == s_count && m.iter().all(|r| r.len() == v_count))
            && [&plan.b_plus, &plan.b_minus].iter().all(|m| m.len() == s_count && m.iter().all(|r| r.len() == v_count));
    if !matrices_ok || plan.lost.len() != s_count || plan.lost.iter().any(|r| r.len() != p.scenarios()) {
        return Err(Error::InvalidParameter("plan dimensions do not match the instance"));
    }
    let cap = p.capacity;
    let d = |s: usize| p.bikes[s];
    let net = plan.net_repositioning();
    let first = |pred: &dyn Fn(usize, usize) -> bool, rows: usize, cols: usize| -> Option<(usize, usize)> {
        (0..rows).flat_map(|a| (0..cols).map(move |b| (a, b))).find(|&(a, b)| pred(a, b))
    };
    let k_count = p.scenarios();
    let col = |m: &Vec<Vec<u32>>, v: usize| -> u64 { m.iter().map(|r| r[v] as u64).sum() };
    let ones = |m: &Vec<Vec<bool>>, v: usize| -> usize { m.iter().filter(|r| r[v]).count() };

    let mut checks = Vec::with_capacity(9);
    let mut push =
        |c: u8, v: Option<(usize, usize)>| checks.push(ConstraintCheck { constraint: c, first_violation: v });
    push(2, first(&|s, k| plan.lost[s][k] > d(s) as i64 + p.net_flow[k][s] + net[s], s_count, k_count));
    push(3, first(&|s, v| plan.y_minus[s][v] > if plan.b_minus[s][v] { d(s) } else { 0 }, s_count, v_count));
    push(4, first(&|v, _| col(&plan.y_minus, v) > cap as u64, v_count, 1));
    push(5, first(&|s, _| plan.y_minus[s].iter().map(|&y| y as u64).sum::<u64>() > d(s) as u64, s_count, 1));
    push(6, first(&|s, v| plan.y_plus[s][v] > if plan.b_plus[s][v] { cap } else { 0 }, s_count, v_count));
    push(7, first(&|v, _| col(&plan.y_plus, v) != col(&plan.y_minus, v), v_count, 1));
    push(8, first(&|v, _| ones(&plan.b_minus, v) != p.max_pickups, v_count, 1));
    push(9, first(&|v, _| ones(&plan.b_plus, v) != p.max_dropoffs, v_count, 1));
    push(
        10,
        first(&|s, v| plan.y_plus[s][v] > cap || plan.y_minus[s][v] > cap, s_count, v_count)
            .or_else(|| first(&|s, k| plan.lost[s][k] > 0, s_count, k_count)),
    );
    Ok(Evaluation { objective: objective_of(plan, p), trips: plan.trips(), checks })
}

/// Largest search space [`solve_exhaustive`] accepts.
pub const EXHAUSTIVE_LIMIT: u128 = 10_000_000;

/// Tries every joint assignment of `(pickup, dropoff, bikes)` per vehicle.
/// Among optimal assignments the lexicographically smallest vector wins.
pub fn solve_exhaustive(p: &ProblemInstance) -> Result<RepositionPlan> {
    p.validate_for_solver()?;
    let s_count = p.stations();
    let per_vehicle = (s_count * s_count) as u128 * (p.capacity as u128 + 1);
    let space =
        (0..p.vehicles).try_fold(1u128, |acc, _| acc.checked_mul(per_vehicle).filter(|&x| x <= EXHAUSTIVE_LIMIT));
    let Some(_) = space else {
        return Err(Error::SearchSpaceTooLarge {
            space: per_vehicle.saturating_pow(p.vehicles as u32),
            limit: EXHAUSTIVE_LIMIT,
        });
    };

    let decode = |code: u128| -> VehicleMove {
        let m = (code % (p.capacity as u128 + 1)) as u32;
        let pq = (code / (p.capacity as u128 + 1)) as usize;
        VehicleMove { pickup: pq / s_count, dropoff: pq % s_count, bikes: m }
    };
    let trip_cost = p.trip_cost();
    let mut digits = vec![0u128; p.vehicles];
    let mut best: Option<(i64, Vec<VehicleMove>)> = None;
    let mut picked = vec![0i64; s_count];
    let mut net = vec![0i64; s_count];
    loop {
        let moves: Vec<VehicleMove> = digits.iter().map(|&c| decode(c)).collect();
        picked.iter_mut().for_each(|x| *x = 0);
        net.iter_mut().for_each(|x| *x = 0);
        let mut trips = 0i64;
        for m in &moves {
            picked[m.pickup] += m.bikes as i64;
            net[m.pickup] -= m.bikes as i64;
            net[m.dropoff] += m.bikes as i64;
            trips += (m.bikes >= 1) as i64;
        }
        if (0..s_count).all(|s| picked[s] <= p.bikes[s] as i64) {
            let lost: i64 = (0..s_count)
                .map(|s| {
                    p.net_flow.iter().map(|row| closed_form_lost_demand(p.bikes[s] as i64, row[s], net[s])).sum::<i64>()
                })
                .sum();
            let value = trip_cost * trips - p.weights.beta * lost;
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, moves));
            }
        }
        // odometer, last vehicle fastest so iteration is lexicographic
        let mut i = p.vehicles;
        loop {
            if i == 0 {
                let (_, moves) = best.expect("the all-idle assignment is feasible");
                return Ok(RepositionPlan::from_moves(p, moves));
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < per_vehicle {
                break;
            }
            digits[i] = 0;
        }
    }
}
