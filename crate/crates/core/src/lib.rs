//! Adaptive negative evidential deep learning for open-set semi-supervised
//! learning: Dirichlet evidence, trigamma-weighted losses, a two-head network
//! trained in two stages, and outlier-detection metrics.

pub mod cli;
pub mod data;
pub mod dirichlet;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod specfn;
pub mod training;

pub use error::{Error, Result};
