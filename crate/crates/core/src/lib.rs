//! Simulation and post-processing for mode-pairing quantum key distribution.
//!
//! The pipeline runs from round-level detection data (simulated or ingested)
//! through pairing and sifting, reference-region frequency estimation,
//! finite-size decoy-state linear programs, and key-length accounting.

pub mod bounds;
pub mod config;
pub mod counts;
pub mod decoy;
pub mod error;
pub mod freq;
pub mod io;
pub mod keyrate;
pub mod lp;
pub mod math;
pub mod pairing;
pub mod pipeline;
pub mod reproduce;
pub mod sim;

pub use config::{validate_config, ChannelModel, FreqConfig, Intensity, ProtocolConfig, Side, TimingConfig};
pub use counts::{Basis, Cell, CountTable, Setting};
pub use error::{Error, Result};
