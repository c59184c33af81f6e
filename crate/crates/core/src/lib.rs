//! Feedback-looped (rational ARMA) spectral graph filters.

pub mod alloc_track;
pub mod bench;
pub mod cli;
pub mod config;
pub mod data;
pub mod design;
pub mod engine;
pub mod error;
pub mod graph;
pub mod laplacian;
mod linalg;
pub mod model;
pub mod optim;
pub mod seed;
pub mod signal;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
