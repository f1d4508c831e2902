//! JSON index plus per-record tensor files.
//!
//! The index stores relative tensor paths; they are resolved against the
//! directory that contains the index file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor::{read_tensor, write_tensor, DType, Tensor};
use super::{ClassSemantics, DatasetManifest, EmbeddingVector, VideoSample};
use crate::error::{Error, Result};

const INDEX_VERSION: u32 = 1;
const TENSOR_DIR: &str = "tensors";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexFile {
    format_version: u32,
    name: String,
    visual_dim: usize,
    text_dim: usize,
    #[serde(default)]
    encoder_provenance: String,
    classes: Vec<ClassRecord>,
    videos: Vec<VideoRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassRecord {
    class_id: String,
    descriptions: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description_texts: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoRecord {
    video_id: String,
    class_id: String,
    clips: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_frames: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clip_length: Option<u32>,
}

/// Reads and validates a manifest index and all the tensors it points to.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let index: IndexFile = serde_json::from_str(&text).map_err(|e| Error::MalformedManifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if index.format_version != INDEX_VERSION {
        return Err(Error::MalformedManifest {
            path: path.to_path_buf(),
            reason: format!("unsupported format_version {}", index.format_version),
        });
    }
    let root = path.parent().unwrap_or_else(|| Path::new("."));

    let mut classes = Vec::with_capacity(index.classes.len());
    for rec in index.classes {
        let context = format!("descriptions of class {:?}", rec.class_id);
        let rows = read_matrix(&root.join(&rec.descriptions), index.text_dim, &context)?;
        let class = ClassSemantics::new(rec.class_id, rows)?;
        classes.push(match rec.description_texts {
            Some(texts) => class.with_texts(texts)?,
            None => class,
        });
    }

    let mut videos = Vec::with_capacity(index.videos.len());
    for rec in index.videos {
        let context = format!("clips of video {:?}", rec.video_id);
        let rows = read_matrix(&root.join(&rec.clips), index.visual_dim, &context)?;
        videos.push(
            VideoSample::new(rec.video_id, rec.class_id, rows)?
                .with_frame_info(rec.num_frames, rec.clip_length),
        );
    }

    DatasetManifest::new(
        index.name,
        index.visual_dim,
        index.text_dim,
        videos,
        classes,
        index.encoder_provenance,
    )
}

fn read_matrix(path: &Path, dim: usize, context: &str) -> Result<Vec<EmbeddingVector>> {
    let tensor = read_tensor(path)?;
    if tensor.dtype != DType::F32 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "dataset tensors must be f32".into(),
        });
    }
    let (rows, cols) = tensor.matrix_dims().ok_or_else(|| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: format!("expected rank 2, found rank {}", tensor.shape.len()),
    })?;
    if cols != dim {
        return Err(Error::mismatch(context, dim, cols));
    }
    if rows == 0 {
        return Err(Error::invalid(format!("{context}: tensor has zero rows")));
    }
    tensor
        .rows()
        .enumerate()
        .map(|(i, row)| {
            EmbeddingVector::new(row.to_vec()).map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFinite {
                    context: format!("{context}, row {i} ({})", path.display()),
                },
                other => other,
            })
        })
        .collect()
}

fn matrix_tensor(rows: &[EmbeddingVector]) -> Result<Tensor> {
    let cols = rows[0].dim();
    let values = rows
        .iter()
        .flat_map(|r| r.as_slice().iter().copied())
        .collect();
    Tensor::new(DType::F32, vec![rows.len() as u64, cols as u64], values)
}

/// Writes `manifest` as a JSON index at `path` with tensors in a sibling
/// `tensors/` directory.
///
/// Values are stored as `f32`; anything loaded from disk or produced by
/// the synthetic generator reloads bit-for-bit.
pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let root = path.parent().unwrap_or_else(|| Path::new("."));
    let tensor_dir = root.join(TENSOR_DIR);
    fs::create_dir_all(&tensor_dir).map_err(|e| Error::io(&tensor_dir, e))?;

    let mut classes = Vec::with_capacity(manifest.classes().len());
    for (i, class) in manifest.classes().iter().enumerate() {
        let rel = PathBuf::from(TENSOR_DIR).join(format!("class_{i:05}.zsae"));
        write_tensor(&root.join(&rel), &matrix_tensor(class.descriptions())?)?;
        classes.push(ClassRecord {
            class_id: class.class_id().to_owned(),
            descriptions: rel_string(&rel),
            description_texts: class.description_texts().map(<[String]>::to_vec),
        });
    }

    let mut videos = Vec::with_capacity(manifest.videos().len());
    for (i, video) in manifest.videos().iter().enumerate() {
        let rel = PathBuf::from(TENSOR_DIR).join(format!("video_{i:06}.zsae"));
        write_tensor(&root.join(&rel), &matrix_tensor(video.clips())?)?;
        videos.push(VideoRecord {
            video_id: video.video_id().to_owned(),
            class_id: video.class_id().to_owned(),
            clips: rel_string(&rel),
            num_frames: video.num_frames(),
            clip_length: video.clip_length(),
        });
    }

    let index = IndexFile {
        format_version: INDEX_VERSION,
        name: manifest.name().to_owned(),
        visual_dim: manifest.visual_dim(),
        text_dim: manifest.text_dim(),
        encoder_provenance: manifest.encoder_provenance().to_owned(),
        classes,
        videos,
    };
    let mut json = serde_json::to_string_pretty(&index).expect("index serializes");
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

// Forward slashes keep index files portable.
fn rel_string(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}
