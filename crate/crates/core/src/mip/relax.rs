//! Vehicle-count relaxation used to bound the search.
//!
//! Drop-offs and pickups are optimised separately: a side that moves `R`
//! bikes at a station needs at least `ceil(R / cap)` vehicles there, and
//! both sides must use the same number of vehicles and bikes. Pairing the
//! individual vehicle loads across the two sides is what gets relaxed.

use alloc::vec;
use alloc::vec::Vec;

const NEG: i64 = i64::MIN / 4;
const INF: i64 = i64::MAX / 4;
const UNSET: i64 = i64::MIN;

pub(super) struct Relaxation {
    vehicles: usize,
    units: usize,
    trip: i64,
    beta: i64,
    /// Best drop-off gain at stations `q..` with at most `k` vehicles and
    /// exactly `w` bikes, `[(q, k, w)]`.
    suffix: Vec<i64>,
    /// Least pickup loss with at most `k` vehicles and exactly `w` bikes.
    loss: Vec<i64>,
    memo: Vec<i64>,
}

impl Relaxation {
    /// `gain_prefix[s][r]` and `pick_loss[s][r]` are the drop-off gain and
    /// pickup loss of `r` bikes at an untouched station (unscaled).
    pub(super) fn new(
        gain_prefix: &[Vec<i64>],
        pick_loss: &[Vec<i64>],
        vehicles: usize,
        cap: usize,
        trip: i64,
        beta: i64,
    ) -> Self {
        let stations = gain_prefix.len();
        let units = vehicles * cap;
        let (kw, w1) = ((vehicles + 1) * (units + 1), units + 1);
        let need = |r: usize| r.div_ceil(cap);

        let mut suffix = vec![NEG; (stations + 1) * kw];
        for k in 0..=vehicles {
            suffix[stations * kw + k * w1] = 0;
        }
        for q in (0..stations).rev() {
            let (head, tail) = suffix.split_at_mut((q + 1) * kw);
            let (row, next) = (&mut head[q * kw..], &tail[..kw]);
            row.copy_from_slice(next);
            let g = &gain_prefix[q];
            if g[units] == 0 {
                continue;
            }
            for k in 0..=vehicles {
                for w in 1..=units {
                    let mut best = row[k * w1 + w];
                    for r in 1..=w.min(k * cap) {
                        let prev = next[(k - need(r)) * w1 + w - r];
                        if prev != NEG {
                            best = best.max(prev + g[r]);
                        }
                    }
                    row[k * w1 + w] = best;
                }
            }
        }

        let mut loss = vec![INF; kw];
        for k in 0..=vehicles {
            loss[k * w1] = 0;
        }
        let mut next = loss.clone();
        for l in pick_loss {
            let top = (l.len() - 1).min(units);
            if top == 0 {
                continue;
            }
            next.copy_from_slice(&loss);
            for k in 1..=vehicles {
                for w in 1..=units {
                    let mut best = next[k * w1 + w];
                    for r in 1..=w.min(top).min(k * cap) {
                        let prev = loss[(k - need(r)) * w1 + w - r];
                        if prev != INF {
                            best = best.min(prev + l[r]);
                        }
                    }
                    next[k * w1 + w] = best;
                }
            }
            core::mem::swap(&mut loss, &mut next);
        }

        Relaxation { vehicles, units, trip, beta, suffix, loss, memo: vec![UNSET; (stations + 1) * kw] }
    }

    /// Lower bound on the cost still to come for a partial plan with `n`
    /// vehicles carrying `placed` bikes, when further drop-offs use
    /// stations `q..` only: future trips, minus future drop-off gain, plus
    /// the pickup loss of all bikes. `None` if no completion is feasible.
    pub(super) fn bound(&mut self, q: usize, n: usize, placed: usize) -> Option<i64> {
        let w1 = self.units + 1;
        let kw = (self.vehicles + 1) * w1;
        let key = q * kw + n * w1 + placed;
        if self.memo[key] == UNSET {
            let mut best = INF;
            for k in 0..=self.vehicles - n {
                for w in 0..=self.units - placed {
                    let g = self.suffix[q * kw + k * w1 + w];
                    let l = self.loss[(n + k) * w1 + placed + w];
                    if g == NEG || l == INF {
                        continue;
                    }
                    best = best.min(self.trip * k as i64 + self.beta * (l - g));
                }
            }
            self.memo[key] = best;
        }
        let v = self.memo[key];
        (v != INF).then_some(v)
    }

    /// Least pickup loss (unscaled) of `placed` bikes on `n` vehicles.
    pub(super) fn pickup_loss(&self, n: usize, placed: usize) -> Option<i64> {
        let v = self.loss[n * (self.units + 1) + placed];
        (v != INF).then_some(v)
    }
}
