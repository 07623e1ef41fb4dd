//! Growth-at-risk estimation with time-varying-parameter regressions.
//!
//! The crate covers the whole pipeline: quarterly data construction
//! ([`preprocess`], [`dataset`]), the TVP regression with stochastic
//! volatility and triple-gamma shrinkage ([`model`], [`sampler`]),
//! predictive simulation ([`forecast`]), quantile-regression baselines
//! ([`qr`]), quantile-score evaluation ([`evaluation`]) and rolling linear
//! posterior summaries ([`decomposition`]). [`synthetic`] generates data from
//! the model equations for verification.

pub mod dataset;
pub mod date;
pub mod decomposition;
pub mod dist;
pub mod error;
pub mod evaluation;
pub mod forecast;
pub mod linalg;
pub mod model;
pub mod preprocess;
pub mod qr;
pub mod sampler;
pub mod seed;
pub mod series;
pub mod stats;
pub mod synthetic;

pub use date::{Period, YearQuarter};
pub use error::{Error, Result};
