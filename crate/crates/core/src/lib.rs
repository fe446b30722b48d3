//! Desk-scale captioning with AoA attention gates.

pub mod ablation;
pub mod aoa;
pub mod attention;
pub mod autograd;
pub mod config_file;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod params;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
