//! Simulation and analysis of negative-group-delay (NGD) feedback circuits.
//!
//! An operational amplifier with a passive network `F` in its negative
//! feedback loop realizes `T = G / (1 + F G)`. When the loop gain `|F G|` is
//! large, `T ≈ 1/F`: the circuit inverts the passive network, and its group
//! delay is the negative of the network's. Placing a copy of the network in
//! front of the compensator cancels the network's delay.
//!
//! The crate is organized bottom-up:
//!
//! - [`lti`]: transfer blocks, grids, phase unwrapping, group delay, impulse responses.
//! - [`circuit`]: RC / RLC / op-amp elements, compensators, loop-gain and stability checks.
//! - [`signal`]: Gaussian pulses, square waves, truncation.
//! - [`propagation`]: FFT filtering and time-domain measurements.
//! - [`analysis`]: golden-rule residuals, inversion error, delay cancellation,
//!   minimum-phase reconstruction and front-causality tests.
//!
//! Time dependence is `e^{+iωt}`, so a pure delay `τ` has response `e^{-iωτ}`
//! and group delay is `-d arg T / dω` (positive means later arrival).

pub mod analysis;
pub mod circuit;
pub mod error;
pub mod lti;
pub mod propagation;
pub mod signal;
mod spectral;

pub use error::{Error, Result};
pub use lti::{FrequencyGrid, Spacing, SpectrumAnalysis, TransferBlock};
pub use signal::SampledSignal;
