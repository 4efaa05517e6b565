//! Numerical laboratory for learning sparse Boolean functions with two-layer
//! networks in the mean-field regime.
//!
//! The crate is organised around a handful of modules:
//!
//! * [`fourier`]: Walsh expansions, the merged-staircase property and its leap,
//!   the reachable closure of a set structure, and symmetry detection.
//! * [`numerics`]: hypercube expectations, Gauss quadrature and seeded RNG streams.
//! * [`linalg`]: a small dense symmetric eigensolver (cyclic Jacobi).
//! * [`dynamics`]: batch-SGD in ambient dimension, the dimension-free particle
//!   flow and its discrete-time counterpart, activations and traces.
//! * [`twophase`]: layer-wise training, kernel matrices and their spectrum.
//! * [`recurrence`]: coefficient recurrences for the first-layer weights.
//! * [`bounds`]: lower bounds for linear methods, Berry–Esseen and Legendre checks.
//! * [`config`]: experiment configuration and named presets.

pub mod bounds;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod fourier;
pub mod linalg;
pub mod numerics;
pub mod recurrence;
pub mod twophase;

pub use error::{Error, Result};
pub use fourier::{FourierFunction, SetStructure, Subset};
