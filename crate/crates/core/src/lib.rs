//! Electron-positron pair creation from a laser-assisted binding well in 1+1
//! dimensions, computed with the time-dependent Dirac equation.

pub mod analysis;
pub mod config;
pub mod error;
pub mod fields;
pub mod filling;
pub mod grid;
pub mod observables;
pub mod output;
pub mod pipeline;
pub mod propagator;
pub mod spectrum;

pub use error::{Error, Result};
pub use fields::FieldConfig;
pub use grid::{free_energy, Fourier, Grid};
pub use propagator::{Propagator, Schedule, Snapshot, SpinorField};
