//! Simulation and decoding of repetition codes built from dissipative cat qubits.

pub mod analysis;
pub mod catq;
pub mod decoder;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod lindblad;
pub mod noise;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
