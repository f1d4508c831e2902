//! Trained model files: a JSON index plus two `f64` tensors in the dataset
//! tensor container.
//!
//! `model.json` sits next to `model.visual.zsae` and `model.text.zsae`
//! (names derived from the index file stem). The index carries the
//! training config and a SHA-256 over the config text and dimensions, so
//! a damaged or hand-edited file is rejected on load and evaluation can
//! refuse a dataset whose dims disagree with the model.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::AlignmentModel;
use crate::data::tensor::{read_tensor, write_tensor, DType, Tensor};
use crate::error::{Error, Result};
use crate::train::TrainConfig;

const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub format_version: u32,
    pub tau: f64,
    pub shared_dim: usize,
    pub visual_dim: usize,
    pub text_dim: usize,
    /// Canonical `key = value` text of the training config.
    pub config: String,
    pub config_hash: String,
    pub visual_proj: String,
    pub text_proj: String,
}

pub fn config_hash(
    config_text: &str,
    shared_dim: usize,
    visual_dim: usize,
    text_dim: usize,
) -> String {
    let mut h = Sha256::new();
    h.update(config_text.as_bytes());
    h.update(
        format!("shared_dim={shared_dim}\nvisual_dim={visual_dim}\ntext_dim={text_dim}\n")
            .as_bytes(),
    );
    hex::encode(h.finalize())
}

fn sibling(path: &Path, suffix: &str) -> (PathBuf, String) {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let name = format!("{stem}.{suffix}.zsae");
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    (dir.join(&name), name)
}

fn matrix_tensor(m: ndarray::ArrayView2<'_, f64>) -> Tensor {
    let (r, c) = m.dim();
    Tensor::new(
        DType::F64,
        vec![r as u64, c as u64],
        m.iter().copied().collect(),
    )
    .expect("shape matches")
}

pub fn save_model(model: &AlignmentModel, config: &TrainConfig, path: &Path) -> Result<()> {
    let (visual_path, visual_name) = sibling(path, "visual");
    let (text_path, text_name) = sibling(path, "text");
    write_tensor(&visual_path, &matrix_tensor(model.visual_proj()))?;
    write_tensor(&text_path, &matrix_tensor(model.text_proj()))?;
    let config_text = config.to_string();
    let header = ModelHeader {
        format_version: MODEL_VERSION,
        tau: model.tau(),
        shared_dim: model.shared_dim(),
        visual_dim: model.visual_dim(),
        text_dim: model.text_dim(),
        config_hash: config_hash(
            &config_text,
            model.shared_dim(),
            model.visual_dim(),
            model.text_dim(),
        ),
        config: config_text,
        visual_proj: visual_name,
        text_proj: text_name,
    };
    let mut json = serde_json::to_string_pretty(&header).expect("header serializes");
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(AlignmentModel, ModelHeader)> {
    let malformed = |reason: String| Error::MalformedManifest {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: ModelHeader =
        serde_json::from_str(&text).map_err(|e| malformed(format!("model file: {e}")))?;
    if header.format_version != MODEL_VERSION {
        return Err(malformed(format!(
            "unsupported model format_version {}",
            header.format_version
        )));
    }
    let expected = config_hash(
        &header.config,
        header.shared_dim,
        header.visual_dim,
        header.text_dim,
    );
    if expected != header.config_hash {
        return Err(malformed(
            "config hash does not match config and dims".into(),
        ));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let load = |name: &str, cols: usize| -> Result<Array2<f64>> {
        let p = dir.join(name);
        let t = read_tensor(&p)?;
        if t.dtype != DType::F64 {
            return Err(malformed(format!("{name}: model tensors must be f64")));
        }
        match t.matrix_dims() {
            Some((r, c)) if r == header.shared_dim && c == cols => {
                Ok(Array2::from_shape_vec((r, c), t.values).expect("shape checked"))
            }
            other => Err(malformed(format!(
                "{name}: shape {other:?} disagrees with header ({}, {cols})",
                header.shared_dim
            ))),
        }
    };
    let visual = load(&header.visual_proj, header.visual_dim)?;
    let text_proj = load(&header.text_proj, header.text_dim)?;
    let model = AlignmentModel::new(visual, text_proj, header.tau)?;
    Ok((model, header))
}
