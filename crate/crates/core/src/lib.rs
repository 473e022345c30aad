//! Modulation-domain Kalman filtering for single-channel speech enhancement.
//!
//! Each STFT frequency bin carries a Kalman filter over the temporal
//! trajectory of spectral amplitudes. The prediction step uses
//! modulation-domain LPC models of speech and noise; the update step
//! injects posterior amplitude moments computed by one of two Bayesian
//! rules:
//!
//! * [`gamma_update`]: a Gamma-distributed speech amplitude prior with
//!   stationary complex-Gaussian noise (MDKM).
//! * [`gaussring`]: ring-shaped Gaussian mixtures for both speech and noise,
//!   modelling their amplitude dynamics jointly (MDKR).
//!
//! The [`enhancer`] module wires everything together, from samples to
//! samples.

pub mod enhancer;
pub mod error;
pub mod gamma_update;
pub mod gaussring;
pub mod kalman;
pub mod logmmse;
pub mod lpc;
pub mod metrics;
pub mod specfun;
pub mod stft;
pub mod synth;

pub use enhancer::{diagnose, enhance, Diagnostics, EnhanceReport, EnhancerConfig, Mode};
pub use error::{Error, Result};
pub use kalman::{KalmanState, MomentPair};
pub use lpc::{ModFrameConfig, ModulationLpcModel};
pub use metrics::{seg_snr, SegSnrReport};
pub use stft::{ComplexSpectrogram, FrameConfig, Window};
