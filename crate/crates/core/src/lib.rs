//! Core algorithms for modelling repositioning in dockless bike-share systems.
//!
//! Everything here is allocation-only (`no_std` + `alloc`). File formats,
//! the command line and parallel sweeps live in the `dockless` crate.
//!
//! Pipeline: raw [`Ping`]s are turned into [`Trip`]s by [`ingest`], trip
//! endpoints are clustered into abstract stations by [`cluster`], a Poisson
//! demand model is fitted by [`demand`], and [`sim`] iterates the
//! single-step repositioning program of [`mip`] over an hourly horizon.
//! [`synth`] produces ping datasets with a known ground truth.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cluster;
pub mod demand;
mod error;
pub mod geo;
pub mod ingest;
pub mod mip;
pub mod rng;
pub mod sim;
pub mod synth;
pub mod time;

pub use error::{Error, Result};
pub use geo::{geodesic, GeoPoint, LocalProjection};
pub use ingest::{Ping, Trip};
pub use time::{day_category, DayCategory, LocalClock, TimeStep, Timestamp};
