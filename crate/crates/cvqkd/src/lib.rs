//! Desk-scale simulation of continuous-variable quantum key distribution
//! with coherent states, balanced homodyne detection, and postselection.
//!
//! The crate models a family of discrete-modulation protocols in which the
//! sender draws a coherent state from a small alphabet, the receiver
//! measures one quadrature with a randomly chosen local-oscillator phase,
//! and a classical exchange sifts the rounds down to binary key material.
//! Security is assessed against a beam-splitting attack on a lossy channel:
//! the eavesdropper keeps the √(1-η) fraction of every pulse, and the key
//! fraction she can reach is bounded through the overlap of her two
//! bit-conditioned ensembles.
//!
//! Module map:
//!
//! - [`gaussian`]: quadrature statistics of coherent states (densities,
//!   means, sampling, overlaps) under the vacuum-variance-1/4 convention.
//! - [`quadrature`]: adaptive numerical integration used by every analytic
//!   check and by the key-gain integrals.
//! - [`rng`]: seedable, splittable random streams; every stochastic choice
//!   in a session has its own replayable stream.
//! - [`protocol`]: the signal alphabets, receiver phase sets, bit encoding,
//!   sifting announcements, and exact sifting efficiencies.
//! - [`security`]: eavesdropper ensembles, Uhlmann fidelity, purification
//!   overlaps, the key-fraction bound τ, and quadrature-moment inference.
//! - [`keygain`]: postselected bit-error rate, mutual information, and the
//!   secure key gain with its parameter sweeps.
//! - [`session`]: message-driven sender/receiver state machines over
//!   in-memory or TCP transports, with transcripts and statistical checks.

mod error;

pub mod gaussian;
pub mod keygain;
pub mod protocol;
pub mod quadrature;
pub mod rng;
pub mod security;
pub mod session;

pub use error::{Error, Result};
