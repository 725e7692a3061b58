//! Simulation and verification toolkit for non-negative self-similar Markov
//! processes of self-similarity index one driven by spectrally negative Lévy
//! processes.
//!
//! The toolkit has three legs that must agree with each other:
//!
//! * [`levy`] — the driving process model: jump measures, the characteristic
//!   triplet, the Laplace exponent `psi` and regime classification;
//! * [`moments`] — exact entire moments `E_z(Z_t^n)` in closed form and via the
//!   integral recursion, plus moment-determinacy diagnostics;
//! * [`lamperti`] / [`sde`] — two independent simulators: the time-changed
//!   exponential representation (starts z > 0) and the jump-type SDE with
//!   state-dependent thinning (handles z = 0);
//!
//! with [`verify`] closing the loop: Monte Carlo moment estimation, statistical
//! comparison against the closed form, cross-validation of the simulators and
//! martingale test batteries. All stochastic entry points take explicit seeds
//! and derive one random stream per path, so ensembles are reproducible
//! bit-for-bit regardless of the worker count.

// negated comparisons like `!(x > 0.0)` are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod lamperti;
pub mod levy;
pub mod model_file;
pub mod moments;
pub mod path;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod verify;

pub use error::{Error, Result};
pub use levy::{A2Status, JumpMeasure, LaplaceExponent, LevyTriplet, Regime, RegimeReport};
