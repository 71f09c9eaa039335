//! Photon statistics of a driven whispering-gallery resonator whose two
//! counter-propagating modes are coupled by a pair of nanoscatterers.
//!
//! The scatterers make the inter-mode coupling nonreciprocal: the rate for
//! clockwise → counterclockwise scattering differs from its reverse, and at
//! particular scatterer angles one direction closes entirely.  Those angles
//! are exceptional points of the two-mode Hamiltonian.  Together with a Kerr
//! nonlinearity this reshapes the photon statistics of the driven mode, which
//! this crate computes two independent ways:
//!
//! * full density-matrix numerics ([`liouville`]): a trace-preserving master
//!   equation for the non-Hermitian Hamiltonian, solved either by time
//!   evolution or through the spectrum of the vectorized generator, and
//! * closed-form weak-drive amplitudes ([`analytics`]): stationary few-photon
//!   amplitudes and the interference conditions for conventional and
//!   unconventional photon blockade.
//!
//! [`hilbert`] supplies truncated Fock-space operators, [`model`] the
//! Hamiltonians, and [`observables`] correlation functions and photon-number
//! statistics extracted from steady states.

pub mod analytics;
pub mod error;
pub mod hilbert;
pub mod liouville;
pub mod model;
pub mod observables;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
