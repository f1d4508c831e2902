//! Domain types for embedding datasets, plus the on-disk format and the
//! synthetic generator.
//!
//! Everything here is immutable once constructed: constructors check the
//! invariants and the accessors hand out shared references only.

mod manifest;
mod split;
mod synthetic;
pub mod tensor;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

pub use manifest::{load_manifest, save_manifest};
pub use split::{validate_split, SplitSpec};
pub use synthetic::{generate_synthetic, SyntheticSpec, SyntheticTruth};

/// A finite, non-empty real vector.
///
/// Values are held in `f64`. Vectors read from disk originate from `f32`
/// payloads, so they convert back without loss when saved.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding vector must have length > 0"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("embedding coordinate {i}"),
            });
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multiplies every coordinate by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn uniform_dim(vectors: &[EmbeddingVector], context: &str) -> Result<usize> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::invalid(format!("{context}: needs at least one vector")))?
        .dim();
    for v in vectors {
        if v.dim() != first {
            return Err(Error::mismatch(context, first, v.dim()));
        }
    }
    Ok(first)
}

/// One labelled video: a bag of pre-encoded clip embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    video_id: String,
    class_id: String,
    clips: Vec<EmbeddingVector>,
    num_frames: Option<u32>,
    clip_length: Option<u32>,
}

impl VideoSample {
    pub fn new(
        video_id: impl Into<String>,
        class_id: impl Into<String>,
        clips: Vec<EmbeddingVector>,
    ) -> Result<Self> {
        let video_id = video_id.into();
        uniform_dim(&clips, &format!("clips of video {video_id:?}"))?;
        Ok(Self {
            video_id,
            class_id: class_id.into(),
            clips,
            num_frames: None,
            clip_length: None,
        })
    }

    /// Attaches frame count and clip length. Both are informational only.
    pub fn with_frame_info(mut self, num_frames: Option<u32>, clip_length: Option<u32>) -> Self {
        self.num_frames = num_frames;
        self.clip_length = clip_length;
        self
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn class_id(&self) -> &str {
        &self.class_id
    }

    pub fn clips(&self) -> &[EmbeddingVector] {
        &self.clips
    }

    pub fn dim(&self) -> usize {
        self.clips[0].dim()
    }

    pub fn num_frames(&self) -> Option<u32> {
        self.num_frames
    }

    pub fn clip_length(&self) -> Option<u32> {
        self.clip_length
    }

    /// Same sample with every clip vector scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let clips = self
            .clips
            .iter()
            .map(|c| c.scaled(factor))
            .collect::<Result<_>>()?;
        Ok(Self {
            clips,
            ..self.clone()
        })
    }
}

/// The description embeddings attached to one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSemantics {
    class_id: String,
    descriptions: Vec<EmbeddingVector>,
    description_texts: Option<Vec<String>>,
}

impl ClassSemantics {
    pub fn new(class_id: impl Into<String>, descriptions: Vec<EmbeddingVector>) -> Result<Self> {
        let class_id = class_id.into();
        uniform_dim(
            &descriptions,
            &format!("descriptions of class {class_id:?}"),
        )?;
        Ok(Self {
            class_id,
            descriptions,
            description_texts: None,
        })
    }

    /// Attaches the source texts. Must have one entry per description.
    pub fn with_texts(mut self, texts: Vec<String>) -> Result<Self> {
        if texts.len() != self.descriptions.len() {
            return Err(Error::mismatch(
                format!("description texts of class {:?}", self.class_id),
                self.descriptions.len(),
                texts.len(),
            ));
        }
        self.description_texts = Some(texts);
        Ok(self)
    }

    pub fn class_id(&self) -> &str {
        &self.class_id
    }

    pub fn descriptions(&self) -> &[EmbeddingVector] {
        &self.descriptions
    }

    pub fn description_texts(&self) -> Option<&[String]> {
        self.description_texts.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.descriptions[0].dim()
    }
}

/// A validated dataset of video and class embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    name: String,
    visual_dim: usize,
    text_dim: usize,
    videos: Vec<VideoSample>,
    classes: Vec<ClassSemantics>,
    encoder_provenance: String,
}

impl DatasetManifest {
    pub fn new(
        name: impl Into<String>,
        visual_dim: usize,
        text_dim: usize,
        videos: Vec<VideoSample>,
        classes: Vec<ClassSemantics>,
        encoder_provenance: impl Into<String>,
    ) -> Result<Self> {
        if visual_dim == 0 || text_dim == 0 {
            return Err(Error::invalid("visual_dim and text_dim must be positive"));
        }
        let mut class_ids = BTreeSet::new();
        for class in &classes {
            if !class_ids.insert(class.class_id()) {
                return Err(Error::invalid(format!(
                    "duplicate class_id {:?}",
                    class.class_id()
                )));
            }
            if class.dim() != text_dim {
                return Err(Error::mismatch(
                    format!("descriptions of class {:?}", class.class_id()),
                    text_dim,
                    class.dim(),
                ));
            }
        }
        let mut video_ids = BTreeSet::new();
        for video in &videos {
            if !video_ids.insert(video.video_id()) {
                return Err(Error::invalid(format!(
                    "duplicate video_id {:?}",
                    video.video_id()
                )));
            }
            if !class_ids.contains(video.class_id()) {
                return Err(Error::UnknownClass {
                    video_id: video.video_id().to_owned(),
                    class_id: video.class_id().to_owned(),
                });
            }
            if video.dim() != visual_dim {
                return Err(Error::mismatch(
                    format!("clips of video {:?}", video.video_id()),
                    visual_dim,
                    video.dim(),
                ));
            }
        }
        Ok(Self {
            name: name.into(),
            visual_dim,
            text_dim,
            videos,
            classes,
            encoder_provenance: encoder_provenance.into(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn visual_dim(&self) -> usize {
        self.visual_dim
    }

    pub fn text_dim(&self) -> usize {
        self.text_dim
    }

    pub fn videos(&self) -> &[VideoSample] {
        &self.videos
    }

    pub fn classes(&self) -> &[ClassSemantics] {
        &self.classes
    }

    pub fn encoder_provenance(&self) -> &str {
        &self.encoder_provenance
    }

    pub fn class(&self, class_id: &str) -> Option<&ClassSemantics> {
        self.classes.iter().find(|c| c.class_id() == class_id)
    }

    pub fn class_ids(&self) -> BTreeSet<&str> {
        self.classes.iter().map(|c| c.class_id()).collect()
    }

    /// Videos grouped by class, in manifest order within each class.
    pub fn videos_by_class(&self) -> BTreeMap<&str, Vec<&VideoSample>> {
        let mut out: BTreeMap<&str, Vec<&VideoSample>> = BTreeMap::new();
        for v in &self.videos {
            out.entry(v.class_id()).or_default().push(v);
        }
        out
    }

    /// Total number of stored vectors (clips plus descriptions).
    pub fn vector_count(&self) -> usize {
        self.videos.iter().map(|v| v.clips().len()).sum::<usize>()
            + self
                .classes
                .iter()
                .map(|c| c.descriptions().len())
                .sum::<usize>()
    }
}
