//! Exact branch-and-bound for the repositioning program with one pickup and
//! one drop-off station per vehicle.
//!
//! The search relies on three properties of some optimal plan, obtained by
//! taking an optimum with the fewest vehicles and then the fewest bikes
//! moved:
//!
//! * no station is both a pickup and a drop-off station (a bike dropped at
//!   `s` and another picked up at `s` can be rerouted without extra trips);
//! * every vehicle still gains more than its trip cost, and every bike it
//!   carries has positive marginal value, when evaluated against the plan
//!   built so far (later vehicles only lower drop-off gains and raise pickup
//!   losses);
//! * vehicles can be ordered by drop-off station, then by decreasing load,
//!   and interchangeable stations can be used in index order.
//!
//! Phase one enumerates drop-offs `(station, bikes)` per vehicle under that
//! order. Each partial plan is bounded from below by the exact drop-off
//! gain, the cheapest possible pickup losses, and an optimistic value for
//! the remaining vehicles. Phase two assigns pickup stations to a complete
//! drop-off plan by a second exact search.
//!
//! Ties are broken towards fewer vehicles by running the search on the
//! objective scaled by `V + 1` plus one unit per vehicle.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::relax::Relaxation;
use super::{ProblemInstance, RepositionPlan, VehicleMove};
use crate::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Drop-off search nodes.
    pub nodes: u64,
    /// Pickup assignment searches started.
    pub pickup_searches: u64,
    pub pickup_nodes: u64,
    /// Objective of the greedy starting plan, scaled as
    /// [`super::Objective::scaled`].
    pub initial_objective: i64,
    /// Lower bound on the optimum proven at the root.
    pub root_bound: i64,
    /// False when the node limit stopped the search early.
    pub proven_optimal: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop after this many search nodes (drop-off and pickup nodes
    /// together) and return the best plan found.
    pub node_limit: Option<u64>,
}

/// Provably optimal plan for `p`. Unused vehicles are idle.
pub fn solve(p: &ProblemInstance) -> Result<RepositionPlan> {
    solve_with_stats(p).map(|(plan, _)| plan)
}

pub fn solve_with_stats(p: &ProblemInstance) -> Result<(RepositionPlan, SolveStats)> {
    solve_with(p, &SolveOptions::default())
}

/// [`solve`] with a search budget. Without a node limit the result is
/// optimal; with one, `proven_optimal` tells whether it still is.
pub fn solve_with(p: &ProblemInstance, opts: &SolveOptions) -> Result<(RepositionPlan, SolveStats)> {
    p.validate_for_solver()?;
    if p.vehicles == 0 || p.weights.beta == 0 {
        let idle = vec![VehicleMove::IDLE; p.vehicles];
        let plan = RepositionPlan::from_moves(p, idle);
        let value = plan.objective.scaled;
        let stats =
            SolveStats { initial_objective: value, root_bound: value, proven_optimal: true, ..SolveStats::default() };
        return Ok((plan, stats));
    }
    let mut search = Search::new(p);
    search.node_limit = opts.node_limit.unwrap_or(u64::MAX);
    search.run();
    let mut moves = search.best_moves.clone();
    moves.sort();
    moves.resize(p.vehicles, VehicleMove::IDLE);
    let mut stats = search.stats;
    let scale = p.vehicles as i64 + 1;
    // keys are cost * scale + vehicles
    stats.initial_objective = search.initial_key.div_euclid(scale);
    stats.root_bound = (search.root_key - p.vehicles as i64).div_euclid(scale)
        + ((search.root_key - p.vehicles as i64).rem_euclid(scale) > 0) as i64;
    stats.proven_optimal = !search.aborted;
    Ok((RepositionPlan::from_moves(p, moves), stats))
}

/// Marks a load no single station can supply.
const NONE: i64 = i64::MAX / 4;

struct Search {
    stations: usize,
    cap: i64,
    vehicles: usize,
    levels: usize,
    /// `d_s + net[k][s]`, sorted per station.
    base: Vec<Vec<i64>>,
    bikes: Vec<i64>,
    /// Stations with identical behaviour under any plan.
    class_peers: Vec<Vec<usize>>,
    trip: i64,
    beta: i64,
    /// Pickup units per loss level for each station when untouched.
    pick_levels: Vec<Vec<i64>>,
    base_cost: i64,
    /// `gain_prefix[s][x]`: drop-off gain (unscaled) of the first `x` bikes.
    gain_prefix: Vec<Vec<i64>>,
    /// `pick_loss[s][m]`: loss (unscaled) of picking `m` bikes from an
    /// untouched station, for `m <= min(d_s, cap)`.
    pick_loss: Vec<Vec<i64>>,
    /// `(lambda, remaining)` -> `suffix[q]`: best slot values among fresh
    /// stations above `q`, descending.
    suffix_cache: BTreeMap<(usize, usize), Vec<Vec<i64>>>,
    relax: Option<Relaxation>,

    best: i64,
    best_moves: Vec<VehicleMove>,

    added: Vec<i64>,
    is_drop: Vec<bool>,
    drops: Vec<(usize, u32)>,
    units: i64,
    gain: i64,
    levels_avail: Vec<i64>,

    stats: SolveStats,
    node_limit: u64,
    aborted: bool,
    initial_key: i64,
    root_key: i64,
}

impl Search {
    fn new(p: &ProblemInstance) -> Self {
        let stations = p.stations();
        let k = p.scenarios();
        let scale = p.vehicles as i64 + 1;
        let cap = p.capacity as i64;
        let unit_cap = cap * p.vehicles as i64;
        let bikes: Vec<i64> = p.bikes.iter().map(|&b| b as i64).collect();
        let base: Vec<Vec<i64>> = (0..stations)
            .map(|s| {
                let mut c: Vec<i64> = p.net_flow.iter().map(|row| bikes[s] + row[s]).collect();
                c.sort_unstable();
                c
            })
            .collect();

        let mut classes: BTreeMap<(i64, Vec<i64>), Vec<usize>> = BTreeMap::new();
        for s in 0..stations {
            let clamp = |x: i64| x.clamp(-unit_cap - 1, unit_cap + 1);
            let key = (bikes[s].min(unit_cap), base[s].iter().map(|&c| clamp(c)).collect());
            classes.entry(key).or_default().push(s);
        }
        let mut class_peers = vec![Vec::new(); stations];
        for members in classes.values() {
            for &s in members {
                class_peers[s] = members.iter().copied().filter(|&t| t < s).collect();
            }
        }

        let mut search = Search {
            stations,
            cap,
            vehicles: p.vehicles,
            levels: k + 1,
            base,
            bikes,
            class_peers,
            trip: p.trip_cost() * scale + 1,
            beta: p.weights.beta * scale,
            pick_levels: Vec::new(),
            base_cost: 0,
            gain_prefix: Vec::new(),
            pick_loss: Vec::new(),
            suffix_cache: BTreeMap::new(),
            relax: None,
            best: 0,
            best_moves: Vec::new(),
            added: vec![0; stations],
            is_drop: vec![false; stations],
            drops: Vec::new(),
            units: 0,
            gain: 0,
            levels_avail: vec![0; k + 1],
            stats: SolveStats::default(),
            node_limit: u64::MAX,
            aborted: false,
            initial_key: 0,
            root_key: 0,
        };
        search.pick_levels = (0..stations)
            .map(|s| {
                let mut h = vec![0; k + 1];
                search.add_pick_levels(s, 0, search.bikes[s].min(unit_cap), &mut h);
                h
            })
            .collect();
        for h in &search.pick_levels {
            for (a, b) in search.levels_avail.iter_mut().zip(h) {
                *a += b;
            }
        }
        search.gain_prefix = (0..stations)
            .map(|s| {
                let mut acc = 0;
                let mut v = vec![0];
                for r in 0..unit_cap {
                    acc += search.gain_at(s, r);
                    v.push(acc);
                }
                v
            })
            .collect();
        search.pick_loss = (0..stations)
            .map(|s| {
                let top = search.bikes[s].min(cap);
                (0..=top).map(|m| search.shortfall(s, -m) - search.shortfall(s, 0)).collect()
            })
            .collect();
        search.base_cost = search.beta * (0..stations).map(|s| search.shortfall(s, 0)).sum::<i64>();
        search.best = search.base_cost;
        let full_loss: Vec<Vec<i64>> = (0..stations)
            .map(|s| {
                let top = search.bikes[s].min(unit_cap);
                (0..=top).map(|m| search.shortfall(s, -m) - search.shortfall(s, 0)).collect()
            })
            .collect();
        search.relax =
            Some(Relaxation::new(&search.gain_prefix, &full_loss, p.vehicles, cap as usize, search.trip, search.beta));
        search
    }

    /// `#{k : base_k < x}`.
    fn below(&self, s: usize, x: i64) -> i64 {
        self.base[s].partition_point(|&c| c < x) as i64
    }

    /// Scenarios short of bikes at `s` when `r` bikes were added (the gain,
    /// in units of beta, of one more bike).
    fn gain_at(&self, s: usize, r: i64) -> i64 {
        self.below(s, -r)
    }

    /// Total shortfall over scenarios with net repositioning `r`.
    fn shortfall(&self, s: usize, r: i64) -> i64 {
        self.base[s].iter().map(|&c| (-(c + r)).max(0)).sum()
    }

    fn drop_gain(&self, s: usize, from: i64, bikes: i64) -> i64 {
        (0..bikes).map(|i| self.gain_at(s, from + i)).sum()
    }

    /// Adds the loss levels of pickup units `j` in `(from, to]` at `s` to
    /// `hist`. Removing the `j`-th bike costs `#{k : base_k < j}`.
    fn add_pick_levels(&self, s: usize, from: i64, to: i64, hist: &mut [i64]) {
        if to <= from {
            return;
        }
        let c = &self.base[s];
        for (level, slot) in hist.iter_mut().enumerate() {
            let lo = if level == 0 { from } else { from.max(c[level - 1]) };
            let hi = if level == c.len() { to } else { to.min(c[level]) };
            if hi > lo {
                *slot += hi - lo;
            }
        }
    }

    /// Cheapest total loss (unscaled) of `units` pickups drawn from `hist`,
    /// and the level of the next unit after those.
    fn cheapest(hist: &[i64], units: i64) -> Option<(i64, Option<usize>)> {
        let mut left = units;
        let mut total = 0;
        for (level, &n) in hist.iter().enumerate() {
            if left < n {
                return Some((total + left * level as i64, Some(level)));
            }
            total += n * level as i64;
            left -= n;
        }
        (left == 0).then_some((total, None))
    }

    fn run(&mut self) {
        self.greedy_incumbent();
        self.initial_key = self.best;
        self.root_key = self.best;
        self.descend(None);
        if self.aborted {
            self.root_key = self.root_key.min(self.best);
        } else {
            self.root_key = self.best;
        }
    }

    fn objective_of(&self, moves: &[VehicleMove]) -> i64 {
        let mut net = vec![0i64; self.stations];
        let mut trips = 0;
        for m in moves {
            net[m.pickup] -= m.bikes as i64;
            net[m.dropoff] += m.bikes as i64;
            trips += (m.bikes > 0) as i64;
        }
        self.trip * trips + self.beta * (0..self.stations).map(|s| self.shortfall(s, net[s])).sum::<i64>()
    }

    /// Repeatedly adds the single most valuable vehicle.
    fn greedy_incumbent(&mut self) {
        let (n, cap) = (self.stations, self.cap);
        let mut net = vec![0i64; n];
        let mut is_pick = vec![false; n];
        let mut is_drop = vec![false; n];
        let mut moves = Vec::new();
        for _ in 0..self.vehicles {
            // two cheapest pickup options per load, so the drop-off station
            // itself can be excluded
            let mut cheapest: Vec<[(i64, usize); 2]> = vec![[(i64::MAX, usize::MAX); 2]; cap as usize + 1];
            for p in (0..n).filter(|&p| !is_drop[p]) {
                let load = -net[p];
                let mut loss = 0;
                for m in 1..=cap.min(self.bikes[p] - load) {
                    loss += self.below(p, load + m);
                    let e = &mut cheapest[m as usize];
                    if loss < e[0].0 {
                        e[1] = e[0];
                        e[0] = (loss, p);
                    } else if loss < e[1].0 {
                        e[1] = (loss, p);
                    }
                }
            }
            let mut best: Option<(i64, VehicleMove)> = None;
            for q in (0..n).filter(|&q| !is_pick[q]) {
                let mut gain = 0;
                for m in 1..=cap {
                    gain += self.gain_at(q, net[q] + m - 1);
                    let [first, second] = cheapest[m as usize];
                    let (loss, p) = if first.1 != q { first } else { second };
                    if p == usize::MAX {
                        continue;
                    }
                    let value = self.beta * (gain - loss) - self.trip;
                    if value > 0 && best.is_none_or(|(b, _)| value > b) {
                        best = Some((value, VehicleMove { pickup: p, dropoff: q, bikes: m as u32 }));
                    }
                }
            }
            let Some((_, mv)) = best else { break };
            net[mv.pickup] -= mv.bikes as i64;
            net[mv.dropoff] += mv.bikes as i64;
            is_pick[mv.pickup] = true;
            is_drop[mv.dropoff] = true;
            moves.push(mv);
        }
        let value = self.objective_of(&moves);
        if value < self.best {
            self.best = value;
            self.best_moves = moves;
        }
    }

    /// Slot values `(sum of (gain - lambda)^+ over `size` bikes) - trip` for
    /// successive vehicles at `s` starting at `from`, positive ones only.
    fn slots(&self, s: usize, from: i64, size: i64, lambda: i64, count: usize, out: &mut Vec<i64>) {
        out.clear();
        let mut r = from;
        for _ in 0..count {
            let mut v = 0;
            for _ in 0..size {
                let g = self.gain_at(s, r) - lambda;
                if g <= 0 {
                    break;
                }
                v += g;
                r += 1;
            }
            let value = self.beta * v - self.trip;
            if value <= 0 {
                break;
            }
            out.push(value);
            r = from + size * (out.len() as i64);
        }
    }

    fn suffix_tops(&mut self, lambda: usize, remaining: usize) -> &Vec<Vec<i64>> {
        if !self.suffix_cache.contains_key(&(lambda, remaining)) {
            let mut table = vec![Vec::new(); self.stations];
            let mut acc: Vec<i64> = Vec::new();
            let mut buf = Vec::new();
            for q in (0..self.stations).rev() {
                table[q] = acc.clone();
                self.slots(q, 0, self.cap, lambda as i64, remaining, &mut buf);
                acc.extend_from_slice(&buf);
                acc.sort_unstable_by(|a, b| b.cmp(a));
                acc.truncate(remaining);
            }
            self.suffix_cache.insert((lambda, remaining), table);
        }
        &self.suffix_cache[&(lambda, remaining)]
    }

    /// Cheapest loss of `m` bikes from one untouched station outside the
    /// drop-off set, per `m`. Loss is superadditive in the load, so the sum
    /// over vehicles bounds the total pickup loss from below.
    fn single_station_losses(&self) -> Vec<i64> {
        let mut best = vec![NONE; self.cap as usize + 1];
        best[0] = 0;
        for p in (0..self.stations).filter(|&p| !self.is_drop[p]) {
            for (b, &l) in best.iter_mut().zip(&self.pick_loss[p]).skip(1) {
                *b = (*b).min(l);
            }
        }
        best
    }

    /// Upper bound on what the `j`-th of further vehicles at `t` can save:
    /// it carries some `m <= max_m` bikes and every earlier one at `t`
    /// carries at least as many.
    fn vehicle_slots(&self, t: usize, from: i64, max_m: i64, lmin: &[i64], count: usize, out: &mut Vec<i64>) {
        out.clear();
        let gp = &self.gain_prefix[t];
        let top = gp.len() as i64 - 1;
        for j in 0..count as i64 {
            let mut best = 0;
            for m in 1..=max_m {
                let lo = from + j * m;
                if lo + m > top || lmin[m as usize] == NONE {
                    break;
                }
                let v = self.beta * (gp[(lo + m) as usize] - gp[lo as usize] - lmin[m as usize]) - self.trip;
                best = best.max(v);
            }
            if best <= 0 {
                break;
            }
            out.push(best);
        }
    }

    fn descend(&mut self, last: Option<(usize, u32)>) {
        if self.aborted || self.stats.nodes + self.stats.pickup_nodes >= self.node_limit {
            self.aborted = true;
            return;
        }
        self.stats.nodes += 1;
        let n = self.drops.len();
        let fixed = self.base_cost - self.gain + self.trip * n as i64;
        let Some((loss_lb, next_level)) = Self::cheapest(&self.levels_avail, self.units) else {
            return;
        };
        let lmin = self.single_station_losses();
        let mut placed = 0;
        for &(_, m) in &self.drops {
            if lmin[m as usize] == NONE {
                return;
            }
            placed += lmin[m as usize];
        }
        let pooled = self.relax.as_ref().and_then(|r| r.pickup_loss(n, self.units as usize));
        if n > 0 && pooled.is_some_and(|l| fixed + self.beta * loss_lb.max(placed).max(l) < self.best) {
            self.complete_with_pickups(fixed);
        }
        let remaining = self.vehicles - n;
        let Some(lambda) = next_level else { return };
        if remaining == 0 {
            return;
        }

        let rest = remaining - 1;
        let start = last.map_or(0, |(q, _)| q);
        let suffix = if rest > 0 { self.suffix_tops(lambda, rest).clone() } else { Vec::new() };
        let mut own = Vec::new();
        // the same bound with single-station pickup losses
        let mut suffix_b = vec![Vec::new(); self.stations];
        if rest > 0 {
            let mut acc: Vec<i64> = Vec::new();
            for q in (start..self.stations).rev() {
                suffix_b[q] = acc.clone();
                if self.is_drop[q] {
                    continue;
                }
                self.vehicle_slots(q, 0, self.cap, &lmin, rest, &mut own);
                acc.extend_from_slice(&own);
                acc.sort_unstable_by(|a, b| b.cmp(a));
                acc.truncate(rest);
            }
        }
        let mut children: Vec<(i64, usize, u32)> = Vec::new();
        let mut hist = self.levels_avail.clone();
        for q in start..self.stations {
            let same = last.is_some_and(|(lq, _)| lq == q);
            if !same && self.class_peers[q].iter().any(|&t| !self.is_drop[t]) {
                continue;
            }
            let from = self.added[q];
            if self.gain_at(q, from) <= 0 {
                continue;
            }
            let max_m = if same { last.unwrap().1 as i64 } else { self.cap };
            if !same {
                for (h, x) in hist.iter_mut().zip(&self.pick_levels[q]) {
                    *h -= x;
                }
            }
            let mut g = 0;
            for m in 1..=max_m {
                let unit = self.gain_at(q, from + m - 1);
                if unit <= 0 || lmin[m as usize] == NONE {
                    break;
                }
                g += unit;
                if self.beta * g <= self.trip {
                    continue;
                }
                let Some((loss, _)) = Self::cheapest(&hist, self.units + m) else { break };
                let common = self.base_cost - (self.gain + self.beta * g) + self.trip * (n as i64 + 1);
                let mut lb_a = common + self.beta * loss;
                let mut lb_b = common + self.beta * (placed + lmin[m as usize]);
                if rest > 0 {
                    self.slots(q, from + m, m, lambda as i64, rest, &mut own);
                    lb_a -= top_sum(&suffix[q], &own, rest);
                    self.vehicle_slots(q, from + m, m, &lmin, rest, &mut own);
                    lb_b -= top_sum(&suffix_b[q], &own, rest);
                }
                let mut lb = lb_a.max(lb_b);
                if lb < self.best {
                    let relax = self.relax.as_mut().expect("built in new");
                    match relax.bound(q, n + 1, (self.units + m) as usize) {
                        Some(rest_cost) => lb = lb.max(common + rest_cost),
                        None => continue,
                    }
                }
                if lb < self.best {
                    children.push((lb, q, m as u32));
                }
            }
            if !same {
                for (h, x) in hist.iter_mut().zip(&self.pick_levels[q]) {
                    *h += x;
                }
            }
        }
        children.sort_unstable();
        if n == 0 {
            self.root_key = children.first().map_or(self.best, |c| c.0.min(self.best));
        }
        for (lb, q, m) in children {
            if lb >= self.best {
                break;
            }
            let fresh = !self.is_drop[q];
            self.apply(q, m as i64, fresh, 1);
            self.descend(Some((q, m)));
            self.apply(q, m as i64, fresh, -1);
        }
    }

    fn apply(&mut self, q: usize, m: i64, fresh: bool, sign: i64) {
        if sign > 0 {
            self.gain += self.beta * self.drop_gain(q, self.added[q], m);
            self.added[q] += m;
            self.units += m;
            self.drops.push((q, m as u32));
        } else {
            self.drops.pop();
            self.units -= m;
            self.added[q] -= m;
            self.gain -= self.beta * self.drop_gain(q, self.added[q], m);
        }
        if fresh {
            self.is_drop[q] = sign > 0;
            for (h, x) in self.levels_avail.iter_mut().zip(&self.pick_levels[q]) {
                *h -= sign * x;
            }
        }
    }

    /// Optimal pickup stations for the current drop-offs, accepted only if
    /// the whole plan beats the incumbent.
    fn complete_with_pickups(&mut self, fixed: i64) {
        self.stats.pickup_searches += 1;
        let mut items: Vec<(u32, usize)> = self.drops.iter().enumerate().map(|(i, &(_, m))| (m, i)).collect();
        items.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let sizes: Vec<i64> = items.iter().map(|&(m, _)| m as i64).collect();
        let eligible: Vec<usize> = (0..self.stations).filter(|&s| !self.is_drop[s] && self.bikes[s] > 0).collect();
        let mut pickup = PickupSearch {
            search: self,
            sizes: &sizes,
            eligible: &eligible,
            loads: vec![0; eligible.len()],
            chosen: vec![0; sizes.len()],
            limit: 0,
            best: None,
            nodes: 0,
            budget: self.node_limit.saturating_sub(self.stats.nodes + self.stats.pickup_nodes),
            aborted: false,
        };
        pickup.limit = pickup.search.best - fixed;
        pickup.dfs(0, 0);
        let (nodes, best) = (pickup.nodes, pickup.best);
        self.aborted |= pickup.aborted;
        self.stats.pickup_nodes += nodes;
        if let Some((cost, chosen)) = best {
            let mut moves = vec![VehicleMove::IDLE; items.len()];
            for (slot, &(m, i)) in items.iter().enumerate() {
                moves[i] = VehicleMove { pickup: eligible[chosen[slot]], dropoff: self.drops[i].0, bikes: m };
            }
            debug_assert_eq!(self.objective_of(&moves), fixed + cost);
            self.best = fixed + cost;
            self.best_moves = moves;
        }
    }
}

/// Sum of the `count` largest values of two descending lists.
fn top_sum(a: &[i64], b: &[i64], count: usize) -> i64 {
    let (mut i, mut j, mut total) = (0, 0, 0);
    for _ in 0..count {
        match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x >= y => {
                total += x;
                i += 1;
            }
            (_, Some(&y)) => {
                total += y;
                j += 1;
            }
            (Some(&x), None) => {
                total += x;
                i += 1;
            }
            (None, None) => break,
        }
    }
    total
}

struct PickupSearch<'s> {
    search: &'s Search,
    /// Loads in decreasing order.
    sizes: &'s [i64],
    eligible: &'s [usize],
    loads: Vec<i64>,
    chosen: Vec<usize>,
    /// Only assignments cheaper than this are of interest.
    limit: i64,
    best: Option<(i64, Vec<usize>)>,
    nodes: u64,
    budget: u64,
    aborted: bool,
}

impl PickupSearch<'_> {
    fn bound(&self) -> i64 {
        self.best.as_ref().map_or(self.limit, |(c, _)| *c)
    }

    /// Lower bound on the cost of items `i..`: the better of the pooled
    /// cheapest-units bound and the sum of each item's cheapest station at
    /// current loads (loads only grow, and loss is convex).
    fn remaining_lb(&self, i: usize) -> Option<i64> {
        let s = self.search;
        let units: i64 = self.sizes[i..].iter().sum();
        let mut hist = vec![0; s.levels];
        for (e, &st) in self.eligible.iter().enumerate() {
            let load = self.loads[e];
            s.add_pick_levels(st, load, s.bikes[st].min(load + units), &mut hist);
        }
        let pooled = Search::cheapest(&hist, units)?.0;
        let mut single = 0;
        let mut prev: Option<(i64, i64)> = None;
        for &m in &self.sizes[i..] {
            let c = match prev {
                Some((pm, pc)) if pm == m => pc,
                _ => self
                    .eligible
                    .iter()
                    .zip(&self.loads)
                    .filter(|&(&st, &load)| load + m <= s.bikes[st])
                    .map(|(&st, &load)| s.shortfall(st, -(load + m)) - s.shortfall(st, -load))
                    .min()?,
            };
            prev = Some((m, c));
            single += c;
        }
        Some(s.beta * pooled.max(single))
    }

    fn dfs(&mut self, i: usize, cost: i64) {
        if self.nodes >= self.budget {
            self.aborted = true;
            return;
        }
        self.nodes += 1;
        if i == self.sizes.len() {
            if cost < self.bound() {
                self.best = Some((cost, self.chosen.clone()));
            }
            return;
        }
        match self.remaining_lb(i) {
            Some(lb) if cost + lb < self.bound() => {}
            _ => return,
        }
        let s = self.search;
        let m = self.sizes[i];
        let min_e = if i > 0 && self.sizes[i - 1] == m { self.chosen[i - 1] } else { 0 };
        let mut options: Vec<(i64, usize)> = Vec::new();
        for e in min_e..self.eligible.len() {
            let st = self.eligible[e];
            let load = self.loads[e];
            if load + m > s.bikes[st] {
                continue;
            }
            if load == 0
                && s.class_peers[st]
                    .iter()
                    .any(|&t| self.eligible.binary_search(&t).is_ok_and(|te| self.loads[te] == 0))
            {
                continue;
            }
            let inc = s.beta * (s.shortfall(st, -(load + m)) - s.shortfall(st, -load));
            options.push((inc, e));
        }
        options.sort_unstable();
        for (inc, e) in options {
            if cost + inc >= self.bound() {
                break;
            }
            self.loads[e] += m;
            self.chosen[i] = e;
            self.dfs(i + 1, cost + inc);
            self.loads[e] -= m;
        }
    }
}
