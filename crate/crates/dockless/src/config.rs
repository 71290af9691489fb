//! Run configuration: a JSON file of optional keys, overridden key by key
//! by command-line flags. Anything unset falls back to the strategy's
//! built-in default.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dockless_core::sim::{Strategy, StrategyConfig};
use serde::{Deserialize, Serialize};

use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    #[serde(alias = "STATIC")]
    Static,
    #[serde(alias = "DYNAMIC")]
    Dynamic,
}

impl From<StrategyName> for Strategy {
    fn from(s: StrategyName) -> Self {
        match s {
            StrategyName::Static => Strategy::Static,
            StrategyName::Dynamic => Strategy::Dynamic,
        }
    }
}

/// Strategy used when neither a flag nor the config names one.
pub const DEFAULT_STRATEGY: StrategyName = StrategyName::Dynamic;

/// Every key is optional. Paths are relative to the working directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub strategy: Option<StrategyName>,
    pub vehicles: Option<usize>,
    /// Rebalancing period and planning horizon, hours.
    pub period: Option<usize>,
    pub scenarios: Option<usize>,
    pub capacity: Option<u32>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    /// Solver node budget per planning step; 0 means unlimited.
    pub node_limit: Option<u64>,
    pub fleet_factor: Option<f64>,
    /// Sweep grid.
    pub fleet_factors: Option<Vec<f64>>,
    pub vehicle_counts: Option<Vec<usize>>,
    pub replicates: Option<u32>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub stations: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path).with_context(|| format!("loading config {}", path.display()))
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// Strategy settings given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StrategyOverrides {
    pub strategy: Option<StrategyName>,
    pub vehicles: Option<usize>,
    pub period: Option<usize>,
    pub scenarios: Option<usize>,
    pub capacity: Option<u32>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub node_limit: Option<u64>,
}

fn node_limit(v: u64) -> Option<u64> {
    (v > 0).then_some(v)
}

/// Flag, then config, then the default of the chosen strategy.
pub fn resolve_strategy(flags: &StrategyOverrides, file: &ConfigFile) -> StrategyConfig {
    let name = flags.strategy.or(file.strategy).unwrap_or(DEFAULT_STRATEGY);
    let d = StrategyConfig::for_strategy(name.into());
    StrategyConfig {
        name: name.into(),
        vehicles: flags.vehicles.or(file.vehicles).unwrap_or(d.vehicles),
        period: flags.period.or(file.period).unwrap_or(d.period),
        scenarios: flags.scenarios.or(file.scenarios).unwrap_or(d.scenarios),
        capacity: flags.capacity.or(file.capacity).unwrap_or(d.capacity),
        alpha: flags.alpha.or(file.alpha).unwrap_or(d.alpha),
        beta: flags.beta.or(file.beta).unwrap_or(d.beta),
        iterations: flags.iterations.or(file.iterations).unwrap_or(d.iterations),
        seed: flags.seed.or(file.seed).unwrap_or(d.seed),
        node_limit: flags.node_limit.or(file.node_limit).map_or(d.node_limit, node_limit),
    }
}

/// Flag, then config.
pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>) -> Option<T> {
    flag.or_else(|| file.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_strategy() {
        let none = ConfigFile::default();
        let d = resolve_strategy(&StrategyOverrides::default(), &none);
        assert_eq!(d, StrategyConfig::dynamic_default());
        let s =
            resolve_strategy(&StrategyOverrides { strategy: Some(StrategyName::Static), ..Default::default() }, &none);
        assert_eq!((s.vehicles, s.period), (15, 24));
    }

    #[test]
    fn config_keys_parse_and_reject_unknowns() {
        let c: ConfigFile = serde_json::from_str(r#"{"strategy": "static", "alpha": 2.5, "model": "m.json"}"#).unwrap();
        assert_eq!(c.strategy, Some(StrategyName::Static));
        assert_eq!(c.alpha, Some(2.5));
        assert_eq!(c.model, Some(PathBuf::from("m.json")));
        assert!(serde_json::from_str::<ConfigFile>(r#"{"vehicle": 3}"#).is_err());
        let upper: ConfigFile = serde_json::from_str(r#"{"strategy": "DYNAMIC"}"#).unwrap();
        assert_eq!(upper.strategy, Some(StrategyName::Dynamic));
    }

    #[test]
    fn node_limit_zero_means_unlimited() {
        let file = ConfigFile { node_limit: Some(0), ..Default::default() };
        assert_eq!(resolve_strategy(&StrategyOverrides::default(), &file).node_limit, None);
    }

    // Each key in turn: default alone, config beats default, flag beats config.
    macro_rules! precedence {
        ($name:ident, $key:ident, $file:expr, $flag:expr) => {
            #[test]
            fn $name() {
                let default = resolve_strategy(&StrategyOverrides::default(), &ConfigFile::default()).$key;
                let file = ConfigFile { $key: Some($file), ..Default::default() };
                let from_file = resolve_strategy(&StrategyOverrides::default(), &file).$key;
                let flags = StrategyOverrides { $key: Some($flag), ..Default::default() };
                let from_flag = resolve_strategy(&flags, &file).$key;
                assert_ne!(default, from_file);
                assert_ne!(from_file, from_flag);
                assert_eq!(from_flag, resolve_strategy(&flags, &ConfigFile::default()).$key);
            }
        };
    }

    precedence!(precedence_vehicles, vehicles, 7, 9);
    precedence!(precedence_period, period, 6, 12);
    precedence!(precedence_scenarios, scenarios, 2, 3);
    precedence!(precedence_capacity, capacity, 4, 6);
    precedence!(precedence_alpha, alpha, 2.0, 3.0);
    precedence!(precedence_beta, beta, 0.5, 4.0);
    precedence!(precedence_iterations, iterations, 48, 96);
    precedence!(precedence_seed, seed, 11, 12);

    #[test]
    fn precedence_strategy() {
        let file = ConfigFile { strategy: Some(StrategyName::Static), ..Default::default() };
        assert_eq!(resolve_strategy(&StrategyOverrides::default(), &file).name, Strategy::Static);
        let flags = StrategyOverrides { strategy: Some(StrategyName::Dynamic), ..Default::default() };
        let c = resolve_strategy(&flags, &file);
        assert_eq!((c.name, c.vehicles, c.period), (Strategy::Dynamic, 3, 1));
    }

    #[test]
    fn precedence_node_limit() {
        let file = ConfigFile { node_limit: Some(10), ..Default::default() };
        assert_eq!(resolve_strategy(&StrategyOverrides::default(), &file).node_limit, Some(10));
        let flags = StrategyOverrides { node_limit: Some(20), ..Default::default() };
        assert_eq!(resolve_strategy(&flags, &file).node_limit, Some(20));
    }

    #[test]
    fn pick_prefers_flag() {
        assert_eq!(pick(Some(1), &Some(2)), Some(1));
        assert_eq!(pick(None, &Some(2)), Some(2));
        assert_eq!(pick::<u8>(None, &None), None);
    }
}
