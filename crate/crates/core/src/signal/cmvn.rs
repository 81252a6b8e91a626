//! Per-utterance mean/variance normalization.

use crate::{Error, Result};

/// Per-dimension statistics fitted on one utterance.
///
/// Constant dimensions get `inv_std = 0`, so they normalize to zero;
/// [`CmvnStats::invert`] still restores the original value via the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CmvnStats {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

const CONSTANT_VAR: f64 = 1e-24;

impl CmvnStats {
    /// Fit population (1/N) statistics over the frames of one utterance.
    pub fn fit(frames: &[Vec<f64>]) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "cmvn needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let dim = frames[0].len();
        for frame in frames {
            if frame.len() != dim {
                return Err(Error::LengthMismatch {
                    context: "cmvn frame",
                    expected: dim,
                    got: frame.len(),
                });
            }
        }
        let n = frames.len() as f64;
        let mut mean = vec![0.0; dim];
        for frame in frames {
            for (m, v) in mean.iter_mut().zip(frame) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for frame in frames {
            for ((v, x), m) in var.iter_mut().zip(frame).zip(&mean) {
                let d = x - m;
                *v += d * d;
            }
        }
        let inv_std = var
            .iter()
            .map(|v| {
                let v = v / n;
                if v < CONSTANT_VAR {
                    0.0
                } else {
                    1.0 / v.sqrt()
                }
            })
            .collect();
        Ok(Self { mean, inv_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Normalize one frame.
    pub fn apply(&self, frame: &[f64]) -> Vec<f64> {
        frame
            .iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((x, m), s)| (x - m) * s)
            .collect()
    }

    pub fn apply_all(&self, frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
        frames.iter().map(|f| self.apply(f)).collect()
    }

    /// Undo [`CmvnStats::apply`]; constant dimensions restore their mean.
    pub fn invert(&self, frame: &[f64]) -> Vec<f64> {
        frame
            .iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((z, m), s)| if *s > 0.0 { z / s + m } else { *m })
            .collect()
    }
}

/// Normalize every feature dimension across the utterance to mean 0 and
/// unit population variance; constant dimensions map to all-zero.
pub fn cmvn(frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    Ok(CmvnStats::fit(frames)?.apply_all(frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn column_stats(frames: &[Vec<f64>], dim: usize) -> (f64, f64) {
        let n = frames.len() as f64;
        let mean = frames.iter().map(|f| f[dim]).sum::<f64>() / n;
        let var = frames
            .iter()
            .map(|f| (f[dim] - mean) * (f[dim] - mean))
            .sum::<f64>()
            / n;
        (mean, var)
    }

    #[test]
    fn postconditions_hold_on_random_grid() {
        let mut r = rng::stream(17, "cmvn", &[]);
        let frames: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..6).map(|_| rng::uniform_in(&mut r, -5.0, 5.0)).collect())
            .collect();
        let out = cmvn(&frames).unwrap();
        for d in 0..6 {
            let (mean, var) = column_stats(&out, d);
            assert!(mean.abs() < 1e-10, "dim {d} mean {mean}");
            assert!((var - 1.0).abs() < 1e-10, "dim {d} var {var}");
        }
    }

    #[test]
    fn idempotent_on_normalized_grid() {
        let mut r = rng::stream(18, "cmvn", &[]);
        let frames: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..4).map(|_| rng::gaussian(&mut r)).collect())
            .collect();
        let once = cmvn(&frames).unwrap();
        let twice = cmvn(&once).unwrap();
        for (a, b) in once.iter().flatten().zip(twice.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_maps_to_zero_and_inverts_to_mean() {
        let frames: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![3.25, i as f64])
            .collect();
        let stats = CmvnStats::fit(&frames).unwrap();
        let out = stats.apply_all(&frames);
        assert!(out.iter().all(|f| f[0] == 0.0));
        let back = stats.invert(&out[3]);
        assert!((back[0] - 3.25).abs() < 1e-12);
        assert!((back[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_frame_is_rejected() {
        assert!(cmvn(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn invert_roundtrips() {
        let mut r = rng::stream(19, "cmvn", &[]);
        let frames: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..5).map(|_| rng::uniform_in(&mut r, -2.0, 9.0)).collect())
            .collect();
        let stats = CmvnStats::fit(&frames).unwrap();
        for frame in &frames {
            let back = stats.invert(&stats.apply(frame));
            for (a, b) in back.iter().zip(frame) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
