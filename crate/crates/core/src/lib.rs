//! Time-harmonic Maxwell scattering by bi-periodic layers with a local defect.

pub mod bloch;
pub mod checks;
pub mod cell_solver;
pub mod dtn;
pub mod error;
pub mod gauss;
pub mod lattice_modes;
pub mod linalg;
pub mod media;
pub mod oracles;
pub mod strip_solver;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
