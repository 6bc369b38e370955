//! Time-series anomaly detection with spectral-residual saliency and
//! echo-state reservoirs.
//!
//! The crate is organised along the processing pipeline:
//!
//! * [`series`]: labeled series, CSV ingestion, min-max scaling, hold-out split.
//! * [`saliency`]: sliding-window spectral residual saliency maps.
//! * [`reservoir`]: frozen random weights and leaky tanh reservoir dynamics.
//! * [`readout`]: logistic readouts (optionally class-weighted) and thresholding.
//! * [`benchgen`]: synthetic sinusoidal benchmarks with injected outliers.
//! * [`eval`]: confusion counts, mean F1 and run aggregation.
//! * [`hypersearch`]: Gaussian-process Bayesian optimisation over hyperparameters.
//! * [`experiment`]: seeded end-to-end runs, sweeps and model comparisons.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod benchgen;
pub mod error;
pub mod eval;
pub mod exec;
pub mod experiment;
pub mod hypersearch;
pub mod readout;
pub mod reservoir;
pub mod saliency;
pub mod seed;
pub mod series;
pub mod variant;

pub(crate) mod fmt;

pub use error::{Error, Result};
pub use variant::ModelVariant;
