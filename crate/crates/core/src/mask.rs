//! Oracle binary masks and SPP-driven soft spectral attenuation.
//!
//! Under the max-approximation each noisy log-spectrum bin equals the
//! larger of the speech and noise log-spectra, so the oracle mask marks
//! the bins where speech wins. Enhancement interpolates between keeping a
//! bin and attenuating it by `beta`, weighted by the speech-presence
//! probability.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hard per-bin speech/noise labels for one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    bits: Vec<u8>,
}

impl BinaryMask {
    /// Build from raw bits; values must be strictly 0 or 1.
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|b| *b > 1) {
            return Err(Error::InvalidConfig("mask bits must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Fraction of bins labeled speech.
    pub fn active_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.bits.iter().map(|b| f64::from(*b)).sum::<f64>() / self.bits.len() as f64
    }
}

/// Per-bin speech-presence probabilities for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SppVector {
    probs: Vec<f64>,
}

impl SppVector {
    /// Build from probabilities; every value must be finite and in [0, 1].
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::InvalidConfig(
                "speech presence probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Hard decisions at threshold 0.5.
    pub fn threshold(&self) -> BinaryMask {
        BinaryMask {
            bits: self.probs.iter().map(|p| u8::from(*p >= 0.5)).collect(),
        }
    }
}

impl From<&BinaryMask> for SppVector {
    fn from(mask: &BinaryMask) -> Self {
        Self {
            probs: mask.bits.iter().map(|b| f64::from(*b)).collect(),
        }
    }
}

/// Attenuation level in natural-log units. The default corresponds to
/// exactly 10 dB of amplitude attenuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhanceConfig {
    pub beta: f64,
}

impl EnhanceConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "attenuation beta must be a non-negative real, got {beta}"
            )));
        }
        Ok(Self { beta })
    }
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        // 10 dB / (20·log10 e) in natural-log units.
        Self { beta: 1.1513 }
    }
}

/// Oracle mask from clean/noise log-spectra: bit k is 1 iff `s_k > n_k`.
/// Ties count as noise.
pub fn max_mask(s_frame: &[f64], n_frame: &[f64]) -> Result<BinaryMask> {
    if s_frame.len() != n_frame.len() {
        return Err(Error::LengthMismatch {
            context: "max_mask",
            expected: s_frame.len(),
            got: n_frame.len(),
        });
    }
    Ok(BinaryMask {
        bits: s_frame
            .iter()
            .zip(n_frame)
            .map(|(s, n)| u8::from(s > n))
            .collect(),
    })
}

fn attenuate(x_frame: &[f64], weights: impl Iterator<Item = f64>, beta: f64) -> Vec<f64> {
    // ŝ = ρ·x + (1−ρ)(x−β) = x − (1−ρ)β
    x_frame
        .iter()
        .zip(weights)
        .map(|(x, rho)| x - (1.0 - rho) * beta)
        .collect()
}

/// Soft attenuation: `ŝ_k = ρ_k·x_k + (1−ρ_k)(x_k − β)` per bin.
pub fn soft_attenuate(x_frame: &[f64], rho: &SppVector, cfg: &EnhanceConfig) -> Result<Vec<f64>> {
    if x_frame.len() != rho.len() {
        return Err(Error::LengthMismatch {
            context: "soft_attenuate",
            expected: x_frame.len(),
            got: rho.len(),
        });
    }
    Ok(attenuate(x_frame, rho.probs.iter().copied(), cfg.beta))
}

/// Hard-mask attenuation: [`soft_attenuate`] with the binary mask as ρ —
/// the oracle upper-bound mode.
pub fn hard_mask_apply(x_frame: &[f64], b: &BinaryMask, cfg: &EnhanceConfig) -> Result<Vec<f64>> {
    if x_frame.len() != b.len() {
        return Err(Error::LengthMismatch {
            context: "hard_mask_apply",
            expected: x_frame.len(),
            got: b.len(),
        });
    }
    Ok(attenuate(x_frame, b.bits.iter().map(|v| f64::from(*v)), cfg.beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn max_mask_direct_cases() {
        let m = max_mask(&[0.5, -1.0], &[-0.2, 0.3]).unwrap();
        assert_eq!(m.bits(), &[1, 0]);

        // Ties label 0.
        let v = vec![0.1, -2.0, 3.0];
        let m = max_mask(&v, &v).unwrap();
        assert_eq!(m.bits(), &[0, 0, 0]);

        assert!(max_mask(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn max_mask_matches_elementwise_oracle() {
        let mut r = rng::stream(31, "mask", &[]);
        let s: Vec<f64> = (0..257).map(|_| rng::uniform_in(&mut r, -5.0, 5.0)).collect();
        let n: Vec<f64> = (0..257).map(|_| rng::uniform_in(&mut r, -5.0, 5.0)).collect();
        let m = max_mask(&s, &n).unwrap();
        for k in 0..257 {
            let want = u8::from(s[k] > n[k]);
            assert_eq!(m.bits()[k], want, "bin {k}");
        }
    }

    #[test]
    fn complementary_except_ties() {
        let mut r = rng::stream(32, "mask", &[]);
        let s: Vec<f64> = (0..64).map(|_| rng::uniform_in(&mut r, -1.0, 1.0)).collect();
        let n: Vec<f64> = (0..64).map(|_| rng::uniform_in(&mut r, -1.0, 1.0)).collect();
        let a = max_mask(&s, &n).unwrap();
        let b = max_mask(&n, &s).unwrap();
        for k in 0..64 {
            if s[k] != n[k] {
                assert_eq!(a.bits()[k] + b.bits()[k], 1);
            } else {
                assert_eq!(a.bits()[k] + b.bits()[k], 0);
            }
        }
    }

    #[test]
    fn soft_attenuate_extremes_and_hand_case() {
        let x = vec![1.0, -0.5, 2.0];
        let cfg = EnhanceConfig::default();

        let ones = SppVector::from_probs(vec![1.0; 3]).unwrap();
        assert_eq!(soft_attenuate(&x, &ones, &cfg).unwrap(), x);

        let zeros = SppVector::from_probs(vec![0.0; 3]).unwrap();
        let out = soft_attenuate(&x, &zeros, &cfg).unwrap();
        for (o, xi) in out.iter().zip(&x) {
            assert!((o - (xi - 1.1513)).abs() < 1e-15);
        }

        let half = SppVector::from_probs(vec![0.5]).unwrap();
        let out = soft_attenuate(&[2.0], &half, &EnhanceConfig::new(2.0).unwrap()).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn binary_rho_equals_hard_mask_bit_for_bit() {
        let mut r = rng::stream(33, "mask", &[]);
        let x: Vec<f64> = (0..40).map(|_| rng::uniform_in(&mut r, -3.0, 3.0)).collect();
        let bits: Vec<u8> = (0..40).map(|_| u8::from(rng::uniform(&mut r) > 0.5)).collect();
        let mask = BinaryMask::from_bits(bits).unwrap();
        let rho = SppVector::from(&mask);
        let cfg = EnhanceConfig::new(0.7).unwrap();
        let soft = soft_attenuate(&x, &rho, &cfg).unwrap();
        let hard = hard_mask_apply(&x, &mask, &cfg).unwrap();
        assert_eq!(soft, hard);
    }

    #[test]
    fn attenuation_is_bounded_and_monotone() {
        let mut r = rng::stream(34, "mask", &[]);
        let x: Vec<f64> = (0..30).map(|_| rng::uniform_in(&mut r, -4.0, 4.0)).collect();
        let p: Vec<f64> = (0..30).map(|_| rng::uniform(&mut r)).collect();
        let cfg = EnhanceConfig::new(1.5).unwrap();
        let rho = SppVector::from_probs(p.clone()).unwrap();
        let out = soft_attenuate(&x, &rho, &cfg).unwrap();
        for k in 0..30 {
            assert!(out[k] <= x[k] + 1e-15);
            assert!(out[k] >= x[k] - cfg.beta - 1e-15);
        }
        // Raising one probability never lowers the output.
        let mut p2 = p;
        p2[7] = (p2[7] + 0.3).min(1.0);
        let out2 = soft_attenuate(&x, &SppVector::from_probs(p2).unwrap(), &cfg).unwrap();
        assert!(out2[7] >= out[7]);
    }

    #[test]
    fn constructors_validate() {
        assert!(BinaryMask::from_bits(vec![0, 1, 2]).is_err());
        assert!(SppVector::from_probs(vec![0.5, 1.2]).is_err());
        assert!(SppVector::from_probs(vec![f64::NAN]).is_err());
        assert!(EnhanceConfig::new(-1.0).is_err());
        assert!(EnhanceConfig::new(f64::INFINITY).is_err());
    }
}
