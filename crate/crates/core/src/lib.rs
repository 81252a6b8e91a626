//! Speech enhancement with a deep mixture of experts.
//!
//! Expert networks estimate per-frequency speech-presence probabilities
//! (SPP) from noisy log-spectra, a gating network weighs their decisions
//! from MFCC features, and the combined SPP drives a soft spectral
//! attenuation. Training maximizes the mixture likelihood either by joint
//! gradient ascent over all sub-networks or by EM; both trainers share the
//! same posterior-weighted gradient machinery.
//!
//! The crate is organized as a pipeline:
//!
//! * [`signal`] — STFT/ISTFT, log-spectrum, MFCC, per-utterance CMVN
//! * [`mask`] — oracle binary masks and SPP-driven attenuation
//! * [`dataset`] — SNR mixing, context-stacked feature corpora, a synthetic
//!   two-regime corpus generator, and the corpus file format
//! * [`network`] — dense layers with exact manual back-propagation and Adam
//! * [`dmoe`] — the mixture model: likelihood, gating posterior, joint and
//!   EM trainers, model checkpoints
//! * [`enhance`] — WAV in → SPP → attenuation → WAV out
//! * [`eval`] — segmental SNR, mask accuracy/AUC, log-spectral distortion
//! * [`analysis`] — gating routing statistics, all-ones expert probes, and
//!   expert-count sweeps

pub mod analysis;
pub mod config;
pub mod dataset;
pub mod dmoe;
pub mod enhance;
mod error;
pub mod eval;
pub mod mask;
pub mod network;
pub mod rng;
pub mod signal;

pub use config::FeatureConfig;
pub use error::{Error, Result};
