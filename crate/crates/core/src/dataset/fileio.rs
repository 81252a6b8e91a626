//! Corpus serialization: one little-endian f32 record per frame plus a
//! JSON manifest (schema `dmoe-corpus/1`).
//!
//! Record layout: `expert_input ‖ gate_input ‖ label bits ‖ regime tag`
//! (tag is −1 when absent). Audio is not stored; loaded corpora carry
//! features only.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusUtterance, FeaturePair};
use crate::config::FeatureConfig;
use crate::mask::BinaryMask;
use crate::{Error, Result};

pub const CORPUS_SCHEMA: &str = "dmoe-corpus/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema: String,
    pub feature: FeatureConfig,
    pub num_frames: usize,
    pub expert_dim: usize,
    pub gate_dim: usize,
    pub num_bins: usize,
    /// Frames per utterance, in order.
    pub utterance_frames: Vec<usize>,
    pub has_regime_tags: bool,
    /// Free-form provenance: seeds, SNR, input sources.
    pub provenance: serde_json::Value,
}

fn record_len(m: &CorpusManifest) -> usize {
    m.expert_dim + m.gate_dim + m.num_bins + 1
}

fn push_f32(buf: &mut Vec<u8>, v: f32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Serialize a corpus to raw feature bytes and the manifest JSON string.
pub fn corpus_to_bytes(corpus: &Corpus, provenance: serde_json::Value) -> Result<(Vec<u8>, String)> {
    let expert_dim = corpus.feature.expert_dim();
    let gate_dim = corpus.feature.gate_dim();
    let num_bins = corpus.feature.num_bins();

    let manifest = CorpusManifest {
        schema: CORPUS_SCHEMA.to_string(),
        feature: corpus.feature.clone(),
        num_frames: corpus.num_frames(),
        expert_dim,
        gate_dim,
        num_bins,
        utterance_frames: corpus.utterances.iter().map(|u| u.pairs.len()).collect(),
        has_regime_tags: corpus.has_regime_tags(),
        provenance,
    };

    let mut bytes = Vec::with_capacity(manifest.num_frames * record_len(&manifest) * 4);
    for pair in corpus.pairs() {
        if pair.expert_input.len() != expert_dim
            || pair.gate_input.len() != gate_dim
            || pair.label.len() != num_bins
        {
            return Err(Error::LengthMismatch {
                context: "corpus record",
                expected: expert_dim,
                got: pair.expert_input.len(),
            });
        }
        for v in &pair.expert_input {
            push_f32(&mut bytes, *v as f32);
        }
        for v in &pair.gate_input {
            push_f32(&mut bytes, *v as f32);
        }
        for b in pair.label.bits() {
            push_f32(&mut bytes, f32::from(*b));
        }
        push_f32(
            &mut bytes,
            pair.regime_tag.map_or(-1.0, |t| t as f32),
        );
    }

    let json = serde_json::to_string_pretty(&manifest)?;
    Ok((bytes, json))
}

/// Write `<stem>.f32` and `<stem>.json`.
pub fn save_corpus<P: AsRef<Path>>(
    corpus: &Corpus,
    stem: P,
    provenance: serde_json::Value,
) -> Result<()> {
    let (bytes, json) = corpus_to_bytes(corpus, provenance)?;
    let stem = stem.as_ref();
    std::fs::write(features_path(stem), bytes)?;
    std::fs::write(manifest_path(stem), json)?;
    Ok(())
}

pub fn features_path(stem: &Path) -> std::path::PathBuf {
    stem.with_extension("f32")
}

pub fn manifest_path(stem: &Path) -> std::path::PathBuf {
    stem.with_extension("json")
}

/// Parse a corpus back from raw bytes and manifest JSON.
pub fn corpus_from_bytes(bytes: &[u8], manifest_json: &str) -> Result<Corpus> {
    let manifest: CorpusManifest = serde_json::from_str(manifest_json)?;
    if manifest.schema != CORPUS_SCHEMA {
        return Err(Error::VersionMismatch {
            expected: CORPUS_SCHEMA.to_string(),
            found: manifest.schema.clone(),
        });
    }
    let rec = record_len(&manifest);
    let expected_bytes = manifest.num_frames * rec * 4;
    if bytes.len() != expected_bytes {
        return Err(Error::Corrupt(format!(
            "feature file holds {} bytes, manifest implies {expected_bytes}",
            bytes.len()
        )));
    }
    if manifest.utterance_frames.iter().sum::<usize>() != manifest.num_frames {
        return Err(Error::Corrupt(
            "utterance frame counts do not sum to num_frames".into(),
        ));
    }

    let mut floats = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut take = |n: usize| -> Vec<f64> { (0..n).map(|_| floats.next().unwrap() as f64).collect() };

    let mut utterances = Vec::with_capacity(manifest.utterance_frames.len());
    for &frames in &manifest.utterance_frames {
        let mut pairs = Vec::with_capacity(frames);
        for _ in 0..frames {
            let expert_input = take(manifest.expert_dim);
            let gate_input = take(manifest.gate_dim);
            let bits: Vec<u8> = take(manifest.num_bins)
                .iter()
                .map(|v| u8::from(*v >= 0.5))
                .collect();
            let tag = take(1)[0];
            pairs.push(FeaturePair {
                expert_input,
                gate_input,
                label: BinaryMask::from_bits(bits)?,
                regime_tag: if tag < 0.0 { None } else { Some(tag as u32) },
            });
        }
        utterances.push(CorpusUtterance { pairs, audio: None });
    }

    Ok(Corpus {
        feature: manifest.feature,
        utterances,
    })
}

/// Load a corpus saved by [`save_corpus`].
pub fn load_corpus<P: AsRef<Path>>(stem: P) -> Result<Corpus> {
    let stem = stem.as_ref();
    let bytes = std::fs::read(features_path(stem))?;
    let json = std::fs::read_to_string(manifest_path(stem))?;
    corpus_from_bytes(&bytes, &json)
}

/// Read just the manifest of a saved corpus.
pub fn load_manifest<P: AsRef<Path>>(stem: P) -> Result<CorpusManifest> {
    let json = std::fs::read_to_string(manifest_path(stem.as_ref()))?;
    let manifest: CorpusManifest = serde_json::from_str(&json)?;
    if manifest.schema != CORPUS_SCHEMA {
        return Err(Error::VersionMismatch {
            expected: CORPUS_SCHEMA.to_string(),
            found: manifest.schema,
        });
    }
    Ok(manifest)
}
