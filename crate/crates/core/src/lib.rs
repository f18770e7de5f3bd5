//! Traffic speed forecasting on road networks.
//!
//! The crate covers the whole chain from a raw 15-minute speed feed to a
//! multi-horizon benchmark: cleaning and regularisation ([`pipeline`]),
//! windowed and graph-structured features ([`features`]), wavelet-energy
//! clustering of links ([`wavelet`]), a small hand-differentiated numerical
//! kernel ([`nn`]), the forecasting methods themselves ([`predictors`]) and
//! the evaluation harness ([`eval`]).

pub mod codec;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod pipeline;
pub mod predictors;
pub mod roadnet;
pub mod wavelet;

pub use error::{Error, ErrorCategory, Result};
