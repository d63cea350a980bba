//! Model manifests, weight blobs, the reference AlexNet-style architecture
//! and the synthetic dataset.

pub mod blob;
pub mod dataset;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activation::{PolyActivation, SurrogateManifest};
use crate::nn::{LayerSpec, Model, ModelSpec, NnError, Padding, Preprocessing};
pub use dataset::{gen_synthetic, Dataset, GeneratorKind, SyntheticSpec};

pub const MANIFEST_FORMAT: &str = "hecnn-model";
pub const MANIFEST_SCHEMA: u32 = 1;

/// Relative data paths are resolved against this directory when it is set.
pub const DATA_DIR_ENV: &str = "HECNN_DATA_DIR";

/// Name of the surrogate used by every activation layer of [`table1_preset`].
pub const RELU_SURROGATE: &str = "relu_poly";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelIoError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{what} version {found} is not supported (expected {expected})")]
    VersionMismatch { what: &'static str, found: u32, expected: u32 },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("manifest and weight blob disagree: {0}")]
    ShapeDisagreement(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, ModelIoError> {
    std::fs::read(path).map_err(|e| io_error(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ModelIoError> {
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> ModelIoError {
    ModelIoError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Applies the data-directory override to relative paths.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsRef {
    file: String,
    values: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    schema: u32,
    input: [usize; 3],
    layers: Vec<LayerSpec>,
    activations: BTreeMap<String, PolyActivation>,
    preprocessing: Preprocessing,
    weights: WeightsRef,
}

/// Where the weight blob of a manifest at `path` is written.
pub fn weights_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("weights")
}

pub fn manifest_to_json(spec: &ModelSpec, weights_file: &str) -> Result<String, ModelIoError> {
    let m = Manifest {
        format: MANIFEST_FORMAT.into(),
        schema: MANIFEST_SCHEMA,
        input: spec.input,
        layers: spec.layers.clone(),
        activations: spec.activations.clone(),
        preprocessing: spec.preprocessing.clone(),
        weights: WeightsRef {
            file: weights_file.into(),
            values: spec.parameter_count()?,
        },
    };
    let mut text = serde_json::to_string_pretty(&m).map_err(|e| ModelIoError::Manifest(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Parses a manifest; returns the spec and the referenced blob file name.
pub fn manifest_from_json(text: &str) -> Result<(ModelSpec, String), ModelIoError> {
    // Check the version before the body so that a newer layout reports a
    // version error instead of a parse error.
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ModelIoError::Manifest(e.to_string()))?;
    if value.get("format").and_then(|f| f.as_str()) != Some(MANIFEST_FORMAT) {
        return Err(ModelIoError::Manifest(format!("`format` must be \"{MANIFEST_FORMAT}\"")));
    }
    let schema = value
        .get("schema")
        .and_then(|s| s.as_u64())
        .ok_or_else(|| ModelIoError::Manifest("missing `schema`".into()))?;
    if schema != MANIFEST_SCHEMA as u64 {
        return Err(ModelIoError::VersionMismatch {
            what: "model manifest",
            found: schema.min(u32::MAX as u64) as u32,
            expected: MANIFEST_SCHEMA,
        });
    }
    let m: Manifest = serde_json::from_str(text).map_err(|e| ModelIoError::Manifest(e.to_string()))?;
    if m.preprocessing.scale.len() != m.input[2] || m.preprocessing.offset.len() != m.input[2] {
        return Err(ModelIoError::Manifest("preprocessing needs one scale and offset per input channel".into()));
    }
    for p in m.activations.values() {
        PolyActivation::new(p.coefficients.clone(), p.interval, p.source.clone())
            .map_err(|e| ModelIoError::Manifest(e.to_string()))?;
    }
    let spec = ModelSpec {
        input: m.input,
        layers: m.layers,
        activations: m.activations,
        preprocessing: m.preprocessing,
    };
    let count = spec.parameter_count()?;
    if count != m.weights.values {
        return Err(ModelIoError::ShapeDisagreement(format!(
            "manifest declares {} weight values, architecture needs {count}",
            m.weights.values
        )));
    }
    Ok((spec, m.weights.file))
}

/// Writes the manifest to `path` and the weights next to it.
pub fn save_model(model: &Model, path: &Path) -> Result<(), ModelIoError> {
    let blob_path = weights_path(path);
    let name = blob_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| ModelIoError::Manifest(format!("cannot derive a weight file name from {}", path.display())))?
        .to_string();
    let text = manifest_to_json(&model.spec, &name)?;
    write_file(&blob_path, &blob::encode(&model.params))?;
    write_file(path, text.as_bytes())
}

pub fn load_model(path: &Path) -> Result<Model, ModelIoError> {
    let text = String::from_utf8(read_file(path)?).map_err(|e| ModelIoError::Manifest(e.to_string()))?;
    let (spec, file) = manifest_from_json(&text)?;
    let blob_path = path.parent().unwrap_or(Path::new("")).join(file);
    let shapes = spec.parameter_shapes()?;
    let params = blob::decode(&read_file(&blob_path)?, &shapes)?;
    Ok(Model::new(spec, params)?)
}

/// Reads a surrogate manifest such as the one the `approx` command writes.
pub fn load_surrogates(path: &Path) -> Result<SurrogateManifest, ModelIoError> {
    let text = String::from_utf8(read_file(path)?).map_err(|e| ModelIoError::Manifest(e.to_string()))?;
    SurrogateManifest::from_json(&text).map_err(|e| ModelIoError::Manifest(e.to_string()))
}

/// Adds or replaces the spec's surrogates with those of `m`.
pub fn apply_surrogates(spec: &mut ModelSpec, m: &SurrogateManifest) {
    for (name, p) in &m.surrogates {
        spec.activations.insert(name.clone(), p.clone());
    }
}

fn conv(filters: usize, k: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        filters,
        kernel: [k, k],
        stride: [1, 1],
        padding: Padding::Same,
    }
}

/// The 21-layer AlexNet-style network for 32x32 RGB tiles, row for row:
/// four same-padded convolutions, four 2x2 average pools, three 1-pixel
/// zero pads, dense 4096/4096/1 and a final sigmoid. Every hidden
/// activation uses the published degree-2 ReLU surrogate. Pad/pool order is
/// kept exactly as listed, so the pooled sizes are 16, 8, 5 and 4.
pub fn table1_preset() -> ModelSpec {
    let act = || LayerSpec::activation(RELU_SURROGATE);
    let layers = vec![
        conv(96, 11),
        act(),
        LayerSpec::pool(2),
        conv(256, 5),
        act(),
        LayerSpec::pool(2),
        LayerSpec::pad(1),
        conv(384, 3),
        act(),
        LayerSpec::pool(2),
        LayerSpec::pad(1),
        conv(384, 3),
        act(),
        LayerSpec::pad(1),
        LayerSpec::pool(2),
        LayerSpec::Dense { units: 4096 },
        act(),
        LayerSpec::Dense { units: 4096 },
        act(),
        LayerSpec::Dense { units: 1 },
        LayerSpec::Sigmoid,
    ];
    let mut spec = ModelSpec::new([32, 32, 3], layers).with_activation(RELU_SURROGATE, PolyActivation::published_relu());
    spec.preprocessing = Preprocessing::unit_range(3);
    spec
}
