//! Model checkpoint format: magic `DMOE1`, a length-prefixed JSON
//! metadata block (architecture, feature configuration), then all
//! parameters as little-endian f64 in declared order (gate, then experts).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DmoeParams;
use crate::config::FeatureConfig;
use crate::network::{Activation, DenseLayer, MlpParams};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 5] = b"DMOE1";
pub const MODEL_VERSION: u32 = 1;

/// A trained model bundled with the feature configuration it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct DmoeModel {
    pub params: DmoeParams,
    pub feature: FeatureConfig,
    pub shared_gate_input: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelMeta {
    version: u32,
    num_experts: usize,
    gate_dims: Vec<usize>,
    gate_activations: Vec<Activation>,
    expert_dims: Vec<usize>,
    expert_activations: Vec<Activation>,
    feature: FeatureConfig,
    shared_gate_input: bool,
}

fn network_shape(p: &MlpParams) -> (Vec<usize>, Vec<Activation>) {
    let mut dims = vec![p.input_dim()];
    dims.extend(p.layers.iter().map(|l| l.out_dim));
    let acts = p.layers.iter().map(|l| l.activation).collect();
    (dims, acts)
}

fn network_from_shape(dims: &[usize], acts: &[Activation]) -> Result<MlpParams> {
    if dims.len() != acts.len() + 1 || acts.is_empty() {
        return Err(Error::Corrupt("inconsistent network shape in metadata".into()));
    }
    let layers = acts
        .iter()
        .enumerate()
        .map(|(i, &a)| DenseLayer::new(dims[i], dims[i + 1], a))
        .collect();
    Ok(MlpParams { layers })
}

/// Encode a model to bytes.
pub fn model_to_bytes(model: &DmoeModel) -> Result<Vec<u8>> {
    model.params.validate()?;
    model.feature.validate()?;
    let (gate_dims, gate_activations) = network_shape(&model.params.gate);
    let (expert_dims, expert_activations) = network_shape(&model.params.experts[0]);
    let meta = ModelMeta {
        version: MODEL_VERSION,
        num_experts: model.params.num_experts(),
        gate_dims,
        gate_activations,
        expert_dims,
        expert_activations,
        feature: model.feature.clone(),
        shared_gate_input: model.shared_gate_input,
    };
    let meta_json = serde_json::to_vec(&meta)?;

    let mut bytes = Vec::new();
    bytes.extend_from_slice(MODEL_MAGIC);
    bytes.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&meta_json);
    for v in model.params.flat() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Ok(bytes)
}

/// Decode a model; truncation, trailing garbage, or a version mismatch
/// fail without producing a partial model.
pub fn model_from_bytes(bytes: &[u8]) -> Result<DmoeModel> {
    if bytes.len() < MODEL_MAGIC.len() + 4 {
        return Err(Error::Corrupt("checkpoint shorter than its header".into()));
    }
    if &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(Error::Corrupt("bad checkpoint magic".into()));
    }
    let mut offset = MODEL_MAGIC.len();
    let meta_len =
        u32::from_le_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]])
            as usize;
    offset += 4;
    if bytes.len() < offset + meta_len {
        return Err(Error::Corrupt("checkpoint metadata truncated".into()));
    }
    let meta: ModelMeta = serde_json::from_slice(&bytes[offset..offset + meta_len])?;
    offset += meta_len;

    if meta.version != MODEL_VERSION {
        return Err(Error::VersionMismatch {
            expected: MODEL_VERSION.to_string(),
            found: meta.version.to_string(),
        });
    }
    if meta.num_experts == 0 {
        return Err(Error::Corrupt("checkpoint declares zero experts".into()));
    }

    let gate = network_from_shape(&meta.gate_dims, &meta.gate_activations)?;
    let expert_template = network_from_shape(&meta.expert_dims, &meta.expert_activations)?;
    let mut params = DmoeParams {
        gate,
        experts: vec![expert_template; meta.num_experts],
    };

    let expected_floats = params.num_params();
    let body = &bytes[offset..];
    if body.len() != expected_floats * 8 {
        return Err(Error::Corrupt(format!(
            "checkpoint holds {} parameter bytes, metadata implies {}",
            body.len(),
            expected_floats * 8
        )));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect();
    params.set_flat(&flat)?;
    params.validate()?;

    Ok(DmoeModel {
        params,
        feature: meta.feature,
        shared_gate_input: meta.shared_gate_input,
    })
}

pub fn save_model<P: AsRef<Path>>(model: &DmoeModel, path: P) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)?)?;
    Ok(())
}

pub fn load_model<P: AsRef<Path>>(path: P) -> Result<DmoeModel> {
    model_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::DmoeArch;
    use super::*;

    fn sample_model(m: usize, seed: u64) -> DmoeModel {
        let mut feature = FeatureConfig::desk_scale();
        feature.context = 1;
        let arch = DmoeArch {
            expert_input: feature.expert_dim(),
            gate_input: feature.gate_dim(),
            num_bins: feature.num_bins(),
            hidden: vec![12, 8],
            num_experts: m,
        };
        DmoeModel {
            params: arch.init(seed).unwrap(),
            feature,
            shared_gate_input: false,
        }
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let model = sample_model(2, 5);
        let bytes = model_to_bytes(&model).unwrap();
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back.feature, model.feature);
        assert_eq!(back.shared_gate_input, model.shared_gate_input);
        let a = model.params.flat();
        let b = back.params.flat();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(back.params.num_experts(), 2);
    }

    #[test]
    fn truncated_and_oversized_files_are_rejected() {
        let model = sample_model(2, 6);
        let bytes = model_to_bytes(&model).unwrap();

        let mut short = bytes.clone();
        short.truncate(bytes.len() - 5);
        assert!(matches!(model_from_bytes(&short), Err(Error::Corrupt(_))));

        let mut long = bytes.clone();
        long.extend_from_slice(&[0u8; 16]);
        assert!(matches!(model_from_bytes(&long), Err(Error::Corrupt(_))));

        let mut bad_magic = bytes;
        bad_magic[0] = b'X';
        assert!(matches!(model_from_bytes(&bad_magic), Err(Error::Corrupt(_))));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let model = sample_model(1, 7);
        let bytes = model_to_bytes(&model).unwrap();
        // Rewrite the embedded metadata with a bumped version.
        let meta_len =
            u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
        let mut meta: serde_json::Value =
            serde_json::from_slice(&bytes[9..9 + meta_len]).unwrap();
        meta["version"] = serde_json::json!(9);
        let new_meta = serde_json::to_vec(&meta).unwrap();
        let mut rebuilt = Vec::new();
        rebuilt.extend_from_slice(MODEL_MAGIC);
        rebuilt.extend_from_slice(&(new_meta.len() as u32).to_le_bytes());
        rebuilt.extend_from_slice(&new_meta);
        rebuilt.extend_from_slice(&bytes[9 + meta_len..]);
        assert!(matches!(
            model_from_bytes(&rebuilt),
            Err(Error::VersionMismatch { .. })
        ));
    }

    #[test]
    fn file_roundtrip(){
        let dir = std::env::temp_dir().join("dmoe-core-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.dmoe");
        let model = sample_model(3, 8);
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.params.num_experts(), 3);
        assert_eq!(back.params, model.params);
        std::fs::remove_file(&path).ok();
    }
}
