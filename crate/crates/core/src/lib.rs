//! Near-field acoustic holography laboratory.
//!
//! Synthesizes vibrating-plate datasets, propagates source velocity to a
//! hologram plane, trains a complex-valued U-Net on one plate family, adapts it
//! to single out-of-distribution measurements with a pressure-only physics
//! loss, and compares against a sparse equivalent-source baseline.

pub mod autodiff;
pub mod cesm;
pub mod config;
pub mod error;
pub mod eval;
pub mod field;
pub mod metrics;
pub mod model;
pub mod naht;
pub mod par;
pub mod propagate;
pub mod sample;
pub mod sim;
pub mod store;
pub mod train;

pub use config::{Grid, NahConfig};
pub use error::{NahError, Result};
pub use field::{BinaryMask, ComplexField, Quantity};
pub use par::Exec;
pub use propagate::{build_propagator, Propagator};
pub use sample::{Dataset, Family, Measurement, Sample, Split};

/// Version string recorded in generated manifests.
pub const GENERATOR_VERSION: &str = concat!("nah-core/", env!("CARGO_PKG_VERSION"));
