//! Direct wavefunction reconstruction from weak values, and digital holography
//! built on the reconstructed complex field.
//!
//! The crate models a transverse optical field sampled on a regular grid, a
//! two-level pointer (the photon polarization) coupled to a single position
//! pixel or momentum bin, post-selection, and the estimators that turn pointer
//! readouts into the complex wavefunction. The holography module propagates
//! reconstructed fields between planes.

pub mod cli;
pub mod coupling;
pub mod error;
mod fft;
pub mod holography;
pub mod io;
pub mod metrics;
pub mod pointer;
pub mod reconstruction;
pub mod validate;
pub mod wavefield;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use wavefield::{
    fidelity, make_grid, make_mode, to_momentum, to_position, Domain, Grid2D, ModeKind, ModeSpec, Pixel, WaveField,
};
