//! Spectral feature transforms, class balancing, classical classifiers,
//! hyperparameter search and benchmark statistics for fruit ripeness and
//! firmness prediction from hyperspectral feature tables.

pub mod balance;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod models;
pub mod pipeline;
pub mod seed;
pub mod transforms;
pub mod tune;

pub use error::{Error, Result};
