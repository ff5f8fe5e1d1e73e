//! Resonant CARS signal synthesis and reconstruction of an excited-state
//! nuclear wavepacket (and the excited potential that drives it) from the
//! heterodyne third-order polarization.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: uniform periodic coordinate grid, complex fields, FFT helpers.
//! * [`potentials`]: Morse / repulsive-exponential / tabulated curves and presets.
//! * [`eigen`]: Fourier-grid Hamiltonian and its vibrational eigenpairs.
//! * [`propagator`]: Strang split-operator time evolution.
//! * [`synth`]: third-order polarization on the `(t, tau32)` delay lattice.
//! * [`inversion`]: windowed transform, per-peak sinc inversion, branch-tracked square root.
//! * [`signs`]: sign-vector search, candidate assembly and scoring.
//! * [`potinv`]: time-dependent Schrödinger inversion for `V(x)`.
//! * [`config`], [`io`], [`pipeline`], [`validate`]: run orchestration and persistence.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod inversion;
pub mod io;
pub mod pipeline;
pub mod potentials;
pub mod potinv;
pub mod propagator;
pub mod signs;
pub mod synth;
pub mod units;
pub mod validate;

pub use num_complex::Complex64;

pub use config::{RunConfig, SynthMode};
pub use eigen::EigenBasis;
pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use inversion::CorrelationSet;
pub use potentials::{PotentialModel, Preset};
pub use potinv::PotentialEstimate;
pub use propagator::{Direction, PropagationSpec, Propagator};
pub use signs::{ReconstructedField, SearchStrategy, SignCandidate, SignVector};
pub use synth::{DelayAxis, Lattice, PulseConfig, SignalCube};
