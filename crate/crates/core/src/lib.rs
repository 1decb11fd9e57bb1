//! Binaural multichannel Wiener filtering with interaural cue preservation.
//!
//! The crate is `no_std` (it needs `alloc`). It covers the whole numerical
//! pipeline of a two-device hearing-aid noise reduction experiment:
//!
//! - [`stft`]: short-time analysis and weighted overlap-add synthesis.
//! - [`scene`]: a parametric free-field head model that renders one speech
//!   and one directional noise source onto `2 × mics_per_ear` microphones.
//! - [`spatial`]: coherence-matrix estimation and the IPD / ITD / IC cue
//!   estimators.
//! - [`costs`]: the MWF cost, the IPD and IC penalties, and their gradients
//!   over a real parameterization of the filter pair.
//! - [`bfgs`] and [`solver`]: the closed-form MWF, quasi-Newton minimization
//!   of the penalized costs, alpha sweeps and alpha calibration.
//! - [`metrics`]: SNR, intelligibility-weighted SNR gain, ITD and MSC errors.
//! - [`phase_model`]: the phase distribution of a ratio of correlated
//!   circular complex normals, with a Monte-Carlo sampler.
//!
//! IO (WAV, CSV, JSON, config files) lives in the `cuemwf` companion crate.

#![no_std]

extern crate alloc;

pub mod bfgs;
pub mod costs;
mod error;
pub mod fft;
pub mod linalg;
pub mod metrics;
pub mod phase_model;
pub mod rng;
pub mod scene;
pub mod solver;
pub mod spatial;
pub mod stft;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;

/// Upper frequency limit of the ITD-valid band, in Hz.
pub const CUE_CUTOFF_HZ: f64 = 1500.0;
