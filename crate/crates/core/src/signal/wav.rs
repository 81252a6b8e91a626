//! WAV ingestion and emission (16-bit PCM mono).

use std::io::Read;
use std::path::Path;

use super::Waveform;
use crate::{Error, Result};

fn waveform_from_reader<R: Read>(mut reader: hound::WavReader<R>) -> Result<Waveform> {
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::InvalidConfig(format!(
            "expected mono wav, got {} channels",
            spec.channels
        )));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::InvalidConfig(format!(
            "expected 16-bit PCM wav, got {}-bit {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples: Vec<f64> = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<_, _>>()?;
    Waveform::new(samples, spec.sample_rate)
}

/// Read a 16-bit PCM mono WAV file, normalizing samples to [−1, 1).
pub fn read_wav_mono<P: AsRef<Path>>(path: P) -> Result<Waveform> {
    waveform_from_reader(hound::WavReader::open(path)?)
}

/// Read a 16-bit PCM mono WAV from any byte source (e.g. an in-memory
/// buffer in the browser).
pub fn read_wav_mono_from<R: Read>(reader: R) -> Result<Waveform> {
    waveform_from_reader(hound::WavReader::new(reader)?)
}

fn quantize(w: &Waveform) -> impl Iterator<Item = i16> + '_ {
    w.samples
        .iter()
        .map(|s| (s.clamp(-1.0, 1.0) * 32767.0).round() as i16)
}

/// Write a waveform as 16-bit PCM mono, clamping to [−1, 1].
pub fn write_wav_mono<P: AsRef<Path>>(path: P, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for s in quantize(w) {
        writer.write_sample(s)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Encode a waveform as WAV bytes (16-bit PCM mono).
pub fn wav_bytes(w: &Waveform) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec)?;
        for s in quantize(w) {
            writer.write_sample(s)?;
        }
        writer.finalize()?;
    }
    Ok(cursor.into_inner())
}

/// Linear resampling to `target_rate`.
pub fn resample_linear(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidConfig("target_rate must be positive".into()));
    }
    if target_rate == w.sample_rate || w.is_empty() {
        return Ok(Waveform {
            samples: w.samples.clone(),
            sample_rate: target_rate,
        });
    }
    let ratio = f64::from(w.sample_rate) / f64::from(target_rate);
    let out_len = ((w.len() as f64) / ratio).round() as usize;
    let mut samples = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 * ratio;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        let a = w.samples[lo.min(w.len() - 1)];
        let b = w.samples[(lo + 1).min(w.len() - 1)];
        samples.push(a + (b - a) * frac);
    }
    Waveform::new(samples, target_rate)
}
