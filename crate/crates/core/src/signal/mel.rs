//! Mel filterbank and MFCC extraction.

use super::{magnitude_floor, MfccFrames, Stft};
use crate::{Error, Result};

/// Hz → mel, `2595 · log10(1 + f/700)`.
pub fn mel_from_hz(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

/// Mel → Hz, inverse of [`mel_from_hz`].
pub fn hz_from_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over the non-redundant FFT bins.
///
/// Filters are equally spaced on the mel scale from 0 Hz to Nyquist, with
/// unit peak weight (no area normalization).
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `num_filters × num_bins` weights.
    pub weights: Vec<Vec<f64>>,
    num_bins: usize,
}

impl MelFilterbank {
    pub fn new(num_filters: usize, frame_len: usize, sample_rate: u32) -> Result<Self> {
        if num_filters < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 mel filters, got {num_filters}"
            )));
        }
        if frame_len == 0 || !frame_len.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "frame_len must be even and positive, got {frame_len}"
            )));
        }
        let num_bins = frame_len / 2 + 1;
        let nyquist = f64::from(sample_rate) / 2.0;
        let mel_hi = mel_from_hz(nyquist);

        // num_filters + 2 edge points, equally spaced in mel.
        let edges: Vec<f64> = (0..num_filters + 2)
            .map(|j| hz_from_mel(mel_hi * j as f64 / (num_filters + 1) as f64))
            .collect();

        let bin_hz = f64::from(sample_rate) / frame_len as f64;
        let mut weights = vec![vec![0.0; num_bins]; num_filters];
        for (j, row) in weights.iter_mut().enumerate() {
            let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                if f > lo && f < mid {
                    *w = (f - lo) / (mid - lo);
                } else if (f - mid).abs() < 1e-12 {
                    *w = 1.0;
                } else if f > mid && f < hi {
                    *w = (hi - f) / (hi - mid);
                }
            }
        }
        Ok(Self { weights, num_bins })
    }

    pub fn num_filters(&self) -> usize {
        self.weights.len()
    }

    /// Filter energies for one power-spectrum frame.
    pub fn apply(&self, power: &[f64]) -> Result<Vec<f64>> {
        if power.len() != self.num_bins {
            return Err(Error::LengthMismatch {
                context: "mel filterbank input",
                expected: self.num_bins,
                got: power.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect())
    }
}

/// Orthonormal DCT-II, keeping the first `num_out` coefficients.
pub fn dct_ii_orthonormal(input: &[f64], num_out: usize) -> Vec<f64> {
    let m = input.len();
    let mut out = Vec::with_capacity(num_out);
    for i in 0..num_out {
        let scale = if i == 0 {
            (1.0 / m as f64).sqrt()
        } else {
            (2.0 / m as f64).sqrt()
        };
        let sum: f64 = input
            .iter()
            .enumerate()
            .map(|(j, v)| v * (std::f64::consts::PI * i as f64 * (2 * j + 1) as f64 / (2 * m) as f64).cos())
            .sum();
        out.push(scale * sum);
    }
    out
}

/// MFCC per frame: power spectrum → mel filterbank → floored log → DCT-II.
pub fn mfcc(s: &Stft, num_filters: usize, num_ceps: usize) -> Result<MfccFrames> {
    if num_ceps == 0 || num_ceps > num_filters {
        return Err(Error::InvalidConfig(format!(
            "num_ceps must be in 1..=num_filters, got {num_ceps} of {num_filters}"
        )));
    }
    let bank = MelFilterbank::new(num_filters, s.frame_len, s.sample_rate)?;
    let floor = magnitude_floor();
    let mut frames = Vec::with_capacity(s.num_frames());
    for frame in &s.frames {
        let power: Vec<f64> = frame.iter().map(|c| c.norm_sqr()).collect();
        let energies = bank.apply(&power)?;
        let logs: Vec<f64> = energies.iter().map(|e| e.max(floor).ln()).collect();
        frames.push(dct_ii_orthonormal(&logs, num_ceps));
    }
    Ok(MfccFrames { frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, Waveform, Window, LOG_FLOOR};

    #[test]
    fn all_zero_frame_yields_floor_dct() {
        let w = Waveform::new(vec![0.0; 64], 8000).unwrap();
        let s = stft(&w, 32, 16, Window::Hamming).unwrap();
        let m = mfcc(&s, 8, 5).unwrap();
        let expected_c0 = (1.0 / 8.0_f64).sqrt() * 8.0 * LOG_FLOOR;
        for frame in &m.frames {
            assert!((frame[0] - expected_c0).abs() < 1e-9, "c0 {}", frame[0]);
            for c in &frame[1..] {
                assert!(c.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flat_log_energies_concentrate_in_c0() {
        // DCT of a constant vector has everything in coefficient 0.
        let v = vec![3.7; 12];
        let c = dct_ii_orthonormal(&v, 12);
        assert!((c[0] - 12.0_f64.sqrt() * 3.7).abs() < 1e-12);
        for x in &c[1..] {
            assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        // Rows of the DCT matrix are orthonormal: transform of a unit
        // impulse recovers the matrix column; norms are preserved.
        let m = 9;
        let mut energy_in = 0.0;
        let mut energy_out = 0.0;
        for j in 0..m {
            let mut v = vec![0.0; m];
            v[j] = 1.0 + j as f64;
            energy_in += v.iter().map(|x| x * x).sum::<f64>();
            let c = dct_ii_orthonormal(&v, m);
            energy_out += c.iter().map(|x| x * x).sum::<f64>();
        }
        assert!((energy_in - energy_out).abs() < 1e-9);
    }

    #[test]
    fn filter_energies_match_matrix_oracle() {
        // Independent oracle: build the filterbank matrix from the mel
        // formulas here and apply it by brute force.
        let frame_len = 64;
        let rate = 8000;
        let num_filters = 10;
        let bank = MelFilterbank::new(num_filters, frame_len, rate).unwrap();

        let num_bins = frame_len / 2 + 1;
        let mel_hi = 2595.0 * (1.0 + 4000.0 / 700.0_f64).log10();
        let edge = |j: usize| 700.0 * (10f64.powf(mel_hi * j as f64 / 11.0 / 2595.0) - 1.0);
        let mut oracle = vec![vec![0.0; num_bins]; num_filters];
        for (j, row) in oracle.iter_mut().enumerate() {
            let (lo, mid, hi) = (edge(j), edge(j + 1), edge(j + 2));
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * f64::from(rate) / frame_len as f64;
                if f > lo && f < mid {
                    *w = (f - lo) / (mid - lo);
                } else if (f - mid).abs() < 1e-12 {
                    *w = 1.0;
                } else if f > mid && f < hi {
                    *w = (hi - f) / (hi - mid);
                }
            }
        }

        let mut r = crate::rng::stream(9, "mel-test", &[]);
        let power: Vec<f64> = (0..num_bins)
            .map(|_| crate::rng::uniform_in(&mut r, 0.0, 2.0))
            .collect();
        let got = bank.apply(&power).unwrap();
        for (j, row) in oracle.iter().enumerate() {
            let want: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
            assert!((got[j] - want).abs() < 1e-10, "filter {j}");
        }
    }

    #[test]
    fn pure_tone_at_filter_center_hits_that_filter() {
        let frame_len = 256;
        let rate = 8000;
        let num_filters = 12;
        let bank = MelFilterbank::new(num_filters, frame_len, rate).unwrap();
        // Put unit power exactly on the bin nearest filter 6's peak.
        let mel_hi = mel_from_hz(4000.0);
        let center = hz_from_mel(mel_hi * 7.0 / 13.0);
        let bin = (center * frame_len as f64 / f64::from(rate)).round() as usize;
        let mut power = vec![0.0; frame_len / 2 + 1];
        power[bin] = 1.0;
        let e = bank.apply(&power).unwrap();
        let best = e
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(best, 6, "energies {e:?}");
    }

    #[test]
    fn invalid_counts_are_rejected() {
        let w = Waveform::new(vec![0.1; 64], 8000).unwrap();
        let s = stft(&w, 32, 16, Window::Hamming).unwrap();
        assert!(mfcc(&s, 1, 1).is_err());
        assert!(mfcc(&s, 8, 9).is_err());
        assert!(mfcc(&s, 8, 0).is_err());
    }
}
