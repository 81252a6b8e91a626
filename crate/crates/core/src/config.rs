//! Pipeline configuration shared by corpus building, training, and
//! enhancement.

use serde::{Deserialize, Serialize};

use crate::signal::Window;
use crate::{Error, Result};

/// Time-frequency analysis and feature-extraction parameters.
///
/// A trained model records the configuration it was built with; the
/// enhancement pipeline refuses inputs that do not match it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    /// Analysis frame length in samples (even).
    pub frame_len: usize,
    /// Hop between frames in samples.
    pub hop: usize,
    pub window: Window,
    /// Number of triangular mel filters.
    pub num_mel_filters: usize,
    /// Number of cepstral coefficients kept after the DCT.
    pub num_ceps: usize,
    /// Context frames taken from each side of the current frame.
    pub context: usize,
}

impl Default for FeatureConfig {
    /// Wideband-speech defaults: 32 ms frames with 50% overlap at 16 kHz.
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_len: 512,
            hop: 256,
            window: Window::Hamming,
            num_mel_filters: 26,
            num_ceps: 13,
            context: 4,
        }
    }
}

impl FeatureConfig {
    /// Small configuration for fast experiments and the synthetic corpus.
    pub fn desk_scale() -> Self {
        Self {
            sample_rate: 8_000,
            frame_len: 128,
            hop: 64,
            window: Window::Hamming,
            num_mel_filters: 20,
            num_ceps: 13,
            context: 4,
        }
    }

    /// Frequency bins per frame (`frame_len / 2 + 1`).
    pub fn num_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Length of the context-stacked expert input.
    pub fn expert_dim(&self) -> usize {
        self.num_bins() * (2 * self.context + 1)
    }

    /// Length of the context-stacked gate input.
    pub fn gate_dim(&self) -> usize {
        self.num_ceps * (2 * self.context + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        if self.frame_len == 0 || !self.frame_len.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "frame_len must be even and positive, got {}",
                self.frame_len
            )));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::InvalidConfig(format!(
                "hop must be in 1..=frame_len, got {}",
                self.hop
            )));
        }
        if self.num_mel_filters < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 mel filters, got {}",
                self.num_mel_filters
            )));
        }
        if self.num_ceps == 0 || self.num_ceps > self.num_mel_filters {
            return Err(Error::InvalidConfig(format!(
                "num_ceps must be in 1..=num_mel_filters, got {}",
                self.num_ceps
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_dims() {
        let cfg = FeatureConfig::default();
        assert_eq!(cfg.num_bins(), 257);
        assert_eq!(cfg.expert_dim(), 257 * 9);
        assert_eq!(cfg.gate_dim(), 13 * 9);
        cfg.validate().unwrap();
        FeatureConfig::desk_scale().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = FeatureConfig::default();
        cfg.frame_len = 511;
        assert!(cfg.validate().is_err());
        let mut cfg = FeatureConfig::default();
        cfg.hop = 1024;
        assert!(cfg.validate().is_err());
        let mut cfg = FeatureConfig::default();
        cfg.num_ceps = 40;
        assert!(cfg.validate().is_err());
    }
}
