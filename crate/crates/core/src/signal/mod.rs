//! Time-frequency front end: STFT/ISTFT, log-spectrum, MFCC, CMVN.
//!
//! All operations are pure functions of their inputs. The log-spectrum is
//! the natural log of the STFT magnitude, floored at `LOG_FLOOR` so zeros
//! never produce `-inf`.

mod cmvn;
mod mel;
mod wav;

pub use cmvn::{cmvn, CmvnStats};
pub use mel::{dct_ii_orthonormal, hz_from_mel, mel_from_hz, mfcc, MelFilterbank};
pub use wav::{read_wav_mono, read_wav_mono_from, resample_linear, wav_bytes, write_wav_mono};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Natural-log magnitude floor (≈ −400 dB). Magnitudes below
/// `LOG_FLOOR.exp()` are clamped before taking the log.
pub const LOG_FLOOR: f64 = -46.05;

/// Smallest magnitude that survives the log floor.
pub fn magnitude_floor() -> f64 {
    LOG_FLOOR.exp()
}

/// Analysis window shape. Periodic (DFT-even) forms are used so that the
/// common hop sizes satisfy constant overlap-add exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    Hann,
    Hamming,
}

impl Window {
    /// Window coefficients of the given length.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let step = std::f64::consts::TAU / len as f64;
        (0..len)
            .map(|n| match self {
                Window::Rectangular => 1.0,
                Window::Hann => 0.5 - 0.5 * (step * n as f64).cos(),
                Window::Hamming => 0.54 - 0.46 * (step * n as f64).cos(),
            })
            .collect()
    }
}

/// A mono time-domain signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    /// Build a waveform, rejecting non-finite samples and a zero rate.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("waveform samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Mean power (mean of squared samples).
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// Complex STFT coefficients plus the framing that produced them.
#[derive(Debug, Clone)]
pub struct Stft {
    /// `num_frames × num_bins` complex coefficients, bins 0..=frame_len/2.
    pub frames: Vec<Vec<Complex<f64>>>,
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
    pub sample_rate: u32,
}

impl Stft {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    fn same_framing(&self, other: &Stft) -> bool {
        self.frame_len == other.frame_len
            && self.hop == other.hop
            && self.window == other.window
            && self.num_frames() == other.num_frames()
    }
}

/// Per-frame floored log-magnitudes, `num_frames × num_bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpectrum {
    pub frames: Vec<Vec<f64>>,
}

impl LogSpectrum {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_bins(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

/// Per-frame cepstral coefficients, `num_frames × num_ceps`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccFrames {
    pub frames: Vec<Vec<f64>>,
}

impl MfccFrames {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_ceps(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

/// Number of full analysis frames for a signal of `len` samples.
pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> usize {
    if len < frame_len {
        0
    } else {
        (len - frame_len) / hop + 1
    }
}

/// Short-time Fourier transform with the given framing.
///
/// Frames are windowed and transformed independently; only the
/// non-redundant bins `0..=frame_len/2` are kept.
pub fn stft(w: &Waveform, frame_len: usize, hop: usize, window: Window) -> Result<Stft> {
    if frame_len == 0 || !frame_len.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "frame_len must be even and positive, got {frame_len}"
        )));
    }
    if hop == 0 || hop > frame_len {
        return Err(Error::InvalidConfig(format!(
            "hop must be in 1..=frame_len, got {hop}"
        )));
    }
    if w.len() < frame_len {
        return Err(Error::TooShort {
            needed: frame_len,
            got: w.len(),
        });
    }

    let coeffs = window.coefficients(frame_len);
    let num_frames = frame_count(w.len(), frame_len, hop);
    let num_bins = frame_len / 2 + 1;

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(frame_len);
    let mut buf = vec![Complex::new(0.0, 0.0); frame_len];

    let mut frames = Vec::with_capacity(num_frames);
    for f in 0..num_frames {
        let start = f * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(w.samples[start + i] * coeffs[i], 0.0);
        }
        fft.process(&mut buf);
        frames.push(buf[..num_bins].to_vec());
    }

    Ok(Stft {
        frames,
        frame_len,
        hop,
        window,
        sample_rate: w.sample_rate,
    })
}

/// Steady-state overlap-add profile of a window at the given hop: the sum
/// of all shifted copies, sampled over one hop period.
fn ola_profile(coeffs: &[f64], hop: usize) -> Vec<f64> {
    let len = coeffs.len();
    let mut profile = vec![0.0; hop];
    for (n, p) in profile.iter_mut().enumerate() {
        let mut m = n;
        while m < len {
            *p += coeffs[m];
            m += hop;
        }
    }
    profile
}

/// Check that `window`/`hop` satisfy constant overlap-add within 1e-6
/// relative deviation.
pub fn cola_check(window: Window, frame_len: usize, hop: usize) -> Result<()> {
    let coeffs = window.coefficients(frame_len);
    let profile = ola_profile(&coeffs, hop);
    let mean = profile.iter().sum::<f64>() / profile.len() as f64;
    let max_dev = profile
        .iter()
        .map(|p| (p - mean).abs())
        .fold(0.0_f64, f64::max);
    if mean <= 0.0 || max_dev > 1e-6 * mean {
        return Err(Error::InvalidConfig(format!(
            "window {window:?} with frame_len {frame_len}, hop {hop} does not satisfy \
             constant overlap-add (deviation {max_dev:.3e} of mean {mean:.3e})"
        )));
    }
    Ok(())
}

/// Inverse STFT combining the magnitudes of `s` with the phases of
/// `phase_source`, reconstructed by overlap-add and normalized by the
/// per-sample window sum.
///
/// The output is trimmed or zero-padded to `original_len` when provided.
pub fn istft(s: &Stft, phase_source: &Stft, original_len: Option<usize>) -> Result<Waveform> {
    if !s.same_framing(phase_source) {
        return Err(Error::LengthMismatch {
            context: "istft: magnitude/phase grids",
            expected: s.num_frames(),
            got: phase_source.num_frames(),
        });
    }
    cola_check(s.window, s.frame_len, s.hop)?;

    let frame_len = s.frame_len;
    let num_bins = s.num_bins();
    let coeffs = s.window.coefficients(frame_len);

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(frame_len);
    let mut buf = vec![Complex::new(0.0, 0.0); frame_len];

    let out_len = (s.num_frames().max(1) - 1) * s.hop + frame_len;
    let mut acc = vec![0.0; out_len];
    let mut wsum = vec![0.0; out_len];

    for (f, (mag_frame, ph_frame)) in s.frames.iter().zip(&phase_source.frames).enumerate() {
        if mag_frame.len() != num_bins || ph_frame.len() != num_bins {
            return Err(Error::LengthMismatch {
                context: "istft: frame bins",
                expected: num_bins,
                got: mag_frame.len().min(ph_frame.len()),
            });
        }
        // Combine |s| with the unit phasor of the phase source; zero-phase
        // coefficients fall back to a real value.
        for k in 0..num_bins {
            let m = mag_frame[k].norm();
            let p = ph_frame[k];
            let pn = p.norm();
            buf[k] = if pn > 0.0 {
                p * (m / pn)
            } else {
                Complex::new(m, 0.0)
            };
        }
        // Hermitian symmetry for the redundant bins keeps the IFFT real.
        for k in num_bins..frame_len {
            buf[k] = buf[frame_len - k].conj();
        }
        ifft.process(&mut buf);
        let start = f * s.hop;
        for i in 0..frame_len {
            acc[start + i] += buf[i].re / frame_len as f64;
            wsum[start + i] += coeffs[i];
        }
    }

    let mut samples: Vec<f64> = acc
        .iter()
        .zip(&wsum)
        .map(|(a, w)| if *w > 1e-12 { a / w } else { 0.0 })
        .collect();
    if let Some(len) = original_len {
        samples.resize(len, 0.0);
    }
    Waveform::new(samples, s.sample_rate)
}

/// Element-wise floored natural log of the STFT magnitude.
pub fn log_spectrum(s: &Stft) -> LogSpectrum {
    let floor = magnitude_floor();
    let frames = s
        .frames
        .iter()
        .map(|frame| frame.iter().map(|c| c.norm().max(floor).ln()).collect())
        .collect();
    LogSpectrum { frames }
}
