//! Shared CLI plumbing: config-file merging, run manifests, WAV loading.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dmoe_core::signal::{read_wav_mono, resample_linear, Waveform, Window};
use dmoe_core::FeatureConfig;

/// Optional config file (JSON). Precedence is flags > config file >
/// built-in defaults; the resolved configuration is echoed into the run
/// manifest.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct FileConfig {
    #[serde(default)]
    pub feature: FeaturePatch,
    #[serde(default)]
    pub train: TrainPatch,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct FeaturePatch {
    pub sample_rate: Option<u32>,
    pub frame_len: Option<usize>,
    pub hop: Option<usize>,
    pub window: Option<Window>,
    pub num_mel_filters: Option<usize>,
    pub num_ceps: Option<usize>,
    pub context: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct TrainPatch {
    pub experts: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub dropout: Option<f64>,
    pub em_inner_epochs: Option<usize>,
}

pub fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config file {}", p.display()))
        }
    }
}

/// Resolve one knob: flag beats config file beats default.
pub fn resolve<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Feature configuration from patch + flags, starting from the desk-scale
/// defaults when `--desk` style tools ask for it or the wideband defaults
/// otherwise.
pub fn resolve_feature(patch: &FeaturePatch, context_flag: Option<usize>, desk: bool) -> FeatureConfig {
    let base = if desk {
        FeatureConfig::desk_scale()
    } else {
        FeatureConfig::default()
    };
    FeatureConfig {
        sample_rate: patch.sample_rate.unwrap_or(base.sample_rate),
        frame_len: patch.frame_len.unwrap_or(base.frame_len),
        hop: patch.hop.unwrap_or(base.hop),
        window: patch.window.unwrap_or(base.window),
        num_mel_filters: patch.num_mel_filters.unwrap_or(base.num_mel_filters),
        num_ceps: patch.num_ceps.unwrap_or(base.num_ceps),
        context: resolve(context_flag, patch.context, base.context),
    }
}

/// FNV-1a over a file's bytes, hex-encoded — enough to detect changed
/// inputs in a run manifest.
pub fn hash_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("hashing input {}", path.display()))?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in &bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub fnv64: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub resolved_config: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, resolved_config: serde_json::Value) -> Self {
        Self {
            artifact: "dmoe",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            resolved_config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            fnv64: hash_file(path)?,
        });
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write `<beside>.run.json`.
    pub fn write_beside(&self, beside: &Path) -> Result<()> {
        let mut name = beside.file_name().unwrap_or_default().to_os_string();
        name.push(".run.json");
        let path = beside.with_file_name(name);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing run manifest {}", path.display()))?;
        Ok(())
    }
}

/// Load a mono 16-bit WAV, resampling to `target_rate` when allowed.
pub fn load_wav(path: &Path, target_rate: u32, allow_resample: bool) -> Result<Waveform> {
    let w = read_wav_mono(path).with_context(|| format!("reading {}", path.display()))?;
    if w.sample_rate == target_rate {
        return Ok(w);
    }
    if !allow_resample {
        bail!(
            "{} is sampled at {} Hz but the pipeline expects {} Hz (pass --resample to convert)",
            path.display(),
            w.sample_rate,
            target_rate
        );
    }
    Ok(resample_linear(&w, target_rate)?)
}

/// Sorted WAV files of a directory (deterministic order).
pub fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .wav files found in {}", dir.display());
    }
    Ok(files)
}

/// Parse a comma-separated list of numbers ("-5,0,5,10,15").
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("invalid list entry {tok:?}: {e}"))
        })
        .collect()
}

/// Worker-thread cap: `DMOE_THREADS` or the machine parallelism.
pub fn thread_cap() -> usize {
    std::env::var("DMOE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(std::num::NonZeroUsize::get)
                .unwrap_or(1)
        })
}

/// Write a little-endian f32 matrix with a JSON sidecar describing its
/// shape (used for SPP dumps and probe grids).
pub fn write_f32_matrix(path: &Path, rows: usize, cols: usize, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(rows * cols * 4);
    for v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    let sidecar = path.with_extension("json");
    let meta = serde_json::json!({
        "rows": rows,
        "cols": cols,
        "dtype": "f32le",
        "layout": "row-major",
    });
    std::fs::write(&sidecar, serde_json::to_string_pretty(&meta)?)
        .with_context(|| format!("writing {}", sidecar.display()))?;
    Ok(())
}
