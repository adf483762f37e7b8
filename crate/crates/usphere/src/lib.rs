//! Audio transport over inaudible ultrasonic AM carriers.
//!
//! The pipeline has four stages, each usable on its own:
//!
//! * [`modulator`]: band-limit audio programs and place them on ultrasonic
//!   amplitude-modulated carriers sharing one composite signal.
//! * [`scene`]: propagate the composite through air to a two-eared listener
//!   with per-ear delays, distance loss, directivity, ambient sound and noise.
//! * [`demodulator`]: recover audible audio per ear by band-pass isolation,
//!   rectification and low-pass envelope extraction (or a coherent reference
//!   path), then blend environmental sound back in.
//! * [`analysis`]: calibrated spectra, band energies, alignment, interaural
//!   delay measurement and pass/fail reporting.
//!
//! [`dsp`] carries the shared filter machinery and [`io`] the WAV and test
//! fixture plumbing. Everything is deterministic for a fixed seed.

pub mod analysis;
pub mod buffer;
pub mod config;
pub mod demodulator;
pub mod dsp;
pub mod error;
pub mod io;
pub mod modulator;
pub mod pipeline;
pub mod scene;
pub mod selftest;

#[cfg(test)]
pub(crate) mod testutil;

pub use buffer::AudioBuffer;
pub use error::{Error, Result};
