//! FCDNet: frequency-guided complementary dependency modeling for
//! multivariate time-series forecasting.
//!
//! Two lightweight extractors build complementary dependency graphs — a
//! static low-frequency graph from wavelet-filtered long history and a
//! dynamic high-frequency graph from FFT features of the current input
//! window — which drive a graph-recurrent forecaster and a gated
//! temporal-convolution forecaster, trained end-to-end with Adam on a
//! masked MAE objective.

pub mod config;
pub mod data;
pub mod error;
pub mod forecaster;
pub mod gradsuite;
pub mod graphops;
pub mod ltfe;
pub mod model;
pub mod numeric;
pub mod signal;
pub mod stfe;
pub mod training;

pub use error::{FcdError, Result};
