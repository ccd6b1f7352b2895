//! Household energy-management engine.
//!
//! The crate covers the whole analysis chain for minute-resolution household
//! power measurements:
//!
//! * [`ingest`] parses the semicolon-delimited source file, resolves missing
//!   rows and resamples a feature column into a [`ingest::UnivariateSeries`].
//! * [`preprocess`] provides min-max scaling, lookback windowing and the
//!   chronological train/test split shared by every model.
//! * [`lstm`] is a single-layer LSTM trained by backpropagation through time,
//!   used for long-term forecasting.
//! * [`svr`] is an epsilon-insensitive support vector regressor (RBF kernel,
//!   SMO solver), used for short-term forecasting.
//! * [`anomaly`] scores sectioned windows by their k-th nearest neighbour
//!   distance and flags the top percentile.
//! * [`context`] is a CART classifier separating anomalies from adaptations
//!   using contextual features.
//! * [`evaluation`] computes error metrics, residuals and reports.

#![allow(clippy::needless_range_loop)]

pub mod anomaly;
pub mod context;
mod error;
pub mod evaluation;
pub mod ingest;
pub mod lstm;
pub mod preprocess;
pub mod svr;

pub use error::{Error, Result};

/// Version tag written into every model and report file.
pub const SCHEMA_VERSION: u32 = 1;
