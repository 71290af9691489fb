//! Hourly departures (30 Poisson draws of rate λ) against Poisson(30λ).

use dockless_core::demand::{DemandModel, DestTable, RateTable, ScenarioSampler};
use dockless_core::rng::stream;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

const SAMPLES: usize = 10_000;

/// Chi-square p-value of `counts` against Poisson(`mean`), pooling the
/// tails so every bin expects at least five observations.
fn poisson_gof(counts: &[u32], mean: f64) -> f64 {
    let dist = Poisson::new(mean).unwrap();
    let n = counts.len() as f64;
    let max = *counts.iter().max().unwrap() as u64;
    let mut lo = 0u64;
    while n * dist.cdf(lo) < 5.0 {
        lo += 1;
    }
    let mut hi = max.max(lo + 1);
    while n * (1.0 - dist.cdf(hi - 1)) < 5.0 {
        hi -= 1;
    }
    // bins: (-inf, lo], lo+1, ..., hi-1, [hi, inf)
    let expected: Vec<f64> = std::iter::once(dist.cdf(lo))
        .chain((lo + 1..hi).map(|k| dist.pmf(k)))
        .chain(std::iter::once(1.0 - dist.cdf(hi - 1)))
        .map(|p| p * n)
        .collect();
    let mut observed = vec![0.0; expected.len()];
    for &c in counts {
        let c = c as u64;
        let bin = if c <= lo {
            0
        } else if c >= hi {
            expected.len() - 1
        } else {
            (c - lo) as usize
        };
        observed[bin] += 1.0;
    }
    let stat: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = (expected.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

#[test]
fn hourly_departures_are_poisson_30_lambda() {
    let model = DemandModel::new(RateTable::zeros(2), DestTable::uniform(2)).unwrap();
    let sampler = ScenarioSampler::new(&model);
    for (i, lambda) in [0.05, 0.5, 2.0].into_iter().enumerate() {
        let mut rng = stream(77, &[i as u64]);
        let counts: Vec<u32> = (0..SAMPLES).map(|_| sampler.hourly_departures(lambda, &mut rng)).collect();
        let p = poisson_gof(&counts, 30.0 * lambda);
        assert!(p >= 0.001, "lambda {lambda}: chi-square p = {p}");
    }
}

#[test]
fn goodness_of_fit_rejects_a_wrong_mean() {
    let model = DemandModel::new(RateTable::zeros(2), DestTable::uniform(2)).unwrap();
    let sampler = ScenarioSampler::new(&model);
    let mut rng = stream(78, &[]);
    let counts: Vec<u32> = (0..SAMPLES).map(|_| sampler.hourly_departures(0.5, &mut rng)).collect();
    assert!(poisson_gof(&counts, 16.0) < 0.001);
}
