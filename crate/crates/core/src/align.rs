//! The deterministic half of the method: pooling, description aggregation,
//! linear projection into the shared space, normalization and cosine
//! similarity.
//!
//! Every function here is pure. Accumulation happens in `f64`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::data::{ClassSemantics, EmbeddingVector, VideoSample};
use crate::error::{Error, Result};

/// Norms at or below this are treated as a collapsed embedding.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Visual,
    Text,
}

/// Projection matrices into the shared space plus the softmax temperature.
///
/// `visual_proj` is `shared_dim x visual_dim`, `text_proj` is
/// `shared_dim x text_dim`. There are no bias terms.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentModel {
    visual_proj: Array2<f64>,
    text_proj: Array2<f64>,
    tau: f64,
}

impl AlignmentModel {
    pub fn new(visual_proj: Array2<f64>, text_proj: Array2<f64>, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be > 0, got {tau}"
            )));
        }
        if visual_proj.nrows() != text_proj.nrows() {
            return Err(Error::mismatch(
                "shared dimension of text projection",
                visual_proj.nrows(),
                text_proj.nrows(),
            ));
        }
        if visual_proj.is_empty() || text_proj.is_empty() {
            return Err(Error::invalid("projection matrices must be non-empty"));
        }
        if visual_proj
            .iter()
            .chain(text_proj.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite {
                context: "projection matrix".into(),
            });
        }
        Ok(Self {
            visual_proj,
            text_proj,
            tau,
        })
    }

    /// Entries drawn i.i.d. from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn seeded_uniform(
        shared_dim: usize,
        visual_dim: usize,
        text_dim: usize,
        tau: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut draw = |rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
        };
        let visual = draw(shared_dim, visual_dim);
        let text = draw(shared_dim, text_dim);
        Self::new(visual, text, tau)
    }

    /// Identity in the leading block, zeros elsewhere.
    pub fn identity_padded(
        shared_dim: usize,
        visual_dim: usize,
        text_dim: usize,
        tau: f64,
    ) -> Result<Self> {
        let eye = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |(r, c)| if r == c { 1.0 } else { 0.0 })
        };
        Self::new(eye(shared_dim, visual_dim), eye(shared_dim, text_dim), tau)
    }

    pub fn shared_dim(&self) -> usize {
        self.visual_proj.nrows()
    }

    pub fn visual_dim(&self) -> usize {
        self.visual_proj.ncols()
    }

    pub fn text_dim(&self) -> usize {
        self.text_proj.ncols()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn visual_proj(&self) -> ArrayView2<'_, f64> {
        self.visual_proj.view()
    }

    pub fn text_proj(&self) -> ArrayView2<'_, f64> {
        self.text_proj.view()
    }

    pub fn projection(&self, modality: Modality) -> ArrayView2<'_, f64> {
        match modality {
            Modality::Visual => self.visual_proj.view(),
            Modality::Text => self.text_proj.view(),
        }
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>, f64) {
        (self.visual_proj, self.text_proj, self.tau)
    }
}

fn mean(vectors: &[EmbeddingVector], what: &str) -> Result<EmbeddingVector> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::invalid(format!("{what}: empty input")))?;
    let dim = first.dim();
    let mut acc = vec![0.0f64; dim];
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::mismatch(what, dim, v.dim()));
        }
        for (a, x) in acc.iter_mut().zip(v.as_slice()) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    EmbeddingVector::new(acc.into_iter().map(|a| a / n).collect())
}

/// Coordinatewise mean of clip embeddings.
pub fn pool_clips(clips: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    mean(clips, "pool_clips")
}

/// Coordinatewise mean of a class's description embeddings. This is the
/// class's semantic prompt before projection.
pub fn aggregate_descriptions(semantics: &ClassSemantics) -> Result<EmbeddingVector> {
    mean(semantics.descriptions(), "aggregate_descriptions")
}

/// Plain matrix-vector product with the projection for `modality`.
pub fn project(
    model: &AlignmentModel,
    v: &EmbeddingVector,
    modality: Modality,
) -> Result<EmbeddingVector> {
    let w = model.projection(modality);
    if v.dim() != w.ncols() {
        let what = match modality {
            Modality::Visual => "visual projection input",
            Modality::Text => "text projection input",
        };
        return Err(Error::mismatch(what, w.ncols(), v.dim()));
    }
    let x = v.as_slice();
    let out = w
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect();
    EmbeddingVector::new(out)
}

pub fn l2_normalize(v: &EmbeddingVector) -> Result<EmbeddingVector> {
    let norm = v.norm();
    if norm <= NORM_FLOOR {
        return Err(Error::DegenerateEmbedding {
            context: "l2_normalize".into(),
        });
    }
    if !norm.is_finite() {
        return Err(Error::Numerical("norm overflow in l2_normalize".into()));
    }
    EmbeddingVector::new(v.as_slice().iter().map(|x| x / norm).collect())
}

pub fn cosine_sim(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::mismatch("cosine_sim", a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na <= NORM_FLOOR || nb <= NORM_FLOOR {
        return Err(Error::DegenerateEmbedding {
            context: "cosine_sim".into(),
        });
    }
    if !(na * nb).is_finite() {
        return Err(Error::Numerical("norm overflow in cosine_sim".into()));
    }
    let dot: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum();
    Ok(dot / (na * nb))
}

/// Unit-norm class prototypes in the shared space, sorted by class id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototypeTable {
    entries: Vec<(String, EmbeddingVector)>,
}

impl ClassPrototypeTable {
    /// Builds a table from pre-computed prototypes. Entries are sorted by id;
    /// each must be unit-norm within `1e-9` and ids must be unique.
    pub fn from_entries(mut entries: Vec<(String, EmbeddingVector)>) -> Result<Self> {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(format!("duplicate class_id {:?}", w[0].0)));
        }
        if let Some((id, v)) = entries.iter().find(|(_, v)| (v.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::invalid(format!(
                "prototype for {id:?} has norm {}, expected 1",
                v.norm()
            )));
        }
        if let Some(first) = entries.first() {
            let dim = first.1.dim();
            if let Some((_, v)) = entries.iter().find(|(_, v)| v.dim() != dim) {
                return Err(Error::mismatch("prototype table", dim, v.dim()));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.entries.iter().map(|(id, v)| (id.as_str(), v))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn get(&self, class_id: &str) -> Option<&EmbeddingVector> {
        self.entries
            .binary_search_by(|(id, _)| id.as_str().cmp(class_id))
            .ok()
            .map(|i| &self.entries[i].1)
    }
}

/// Aggregate, project with the text matrix, normalize; once per class.
pub fn build_prototypes(
    model: &AlignmentModel,
    classes: &[ClassSemantics],
) -> Result<ClassPrototypeTable> {
    let entries = classes
        .iter()
        .map(|class| {
            let s = aggregate_descriptions(class)?;
            let projected = project(model, &s, Modality::Text)?;
            let unit = l2_normalize(&projected).map_err(|e| match e {
                Error::DegenerateEmbedding { .. } => Error::DegenerateEmbedding {
                    context: format!("prototype of class {:?}", class.class_id()),
                },
                other => other,
            })?;
            Ok((class.class_id().to_owned(), unit))
        })
        .collect::<Result<Vec<_>>>()?;
    ClassPrototypeTable::from_entries(entries)
}

/// Pool, project with the visual matrix, normalize.
pub fn embed_video(model: &AlignmentModel, video: &VideoSample) -> Result<EmbeddingVector> {
    let pooled = pool_clips(video.clips())?;
    let projected = project(model, &pooled, Modality::Visual)?;
    l2_normalize(&projected).map_err(|e| match e {
        Error::DegenerateEmbedding { .. } => Error::DegenerateEmbedding {
            context: format!("embedding of video {:?}", video.video_id()),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn pooling_small_cases() {
        assert_eq!(
            pool_clips(&[v(&[1.0, 2.0, 3.0])]).unwrap(),
            v(&[1.0, 2.0, 3.0])
        );
        assert_eq!(
            pool_clips(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap(),
            v(&[0.5, 0.5])
        );
        assert!(pool_clips(&[]).is_err());
        assert!(matches!(
            pool_clips(&[v(&[1.0]), v(&[1.0, 2.0])]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn aggregation_small_cases() {
        let one = ClassSemantics::new("a", vec![v(&[0.3, -2.0])]).unwrap();
        assert_eq!(aggregate_descriptions(&one).unwrap(), v(&[0.3, -2.0]));
        let twin = ClassSemantics::new("a", vec![v(&[0.3, -2.0]), v(&[0.3, -2.0])]).unwrap();
        assert_eq!(aggregate_descriptions(&twin).unwrap(), v(&[0.3, -2.0]));
    }

    #[test]
    fn projection_small_cases() {
        let model = AlignmentModel::identity_padded(2, 2, 2, 1.0).unwrap();
        assert_eq!(
            project(&model, &v(&[0.2, -1.0]), Modality::Visual).unwrap(),
            v(&[0.2, -1.0])
        );
        let zero = AlignmentModel::new(Array2::zeros((2, 2)), Array2::zeros((2, 3)), 1.0).unwrap();
        assert_eq!(
            project(&zero, &v(&[0.2, -1.0]), Modality::Visual).unwrap(),
            v(&[0.0, 0.0])
        );
        assert!(matches!(
            project(&zero, &v(&[0.2, -1.0]), Modality::Text),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2,
                ..
            })
        ));
    }

    #[test]
    fn rectangular_identity_padding() {
        let m = AlignmentModel::identity_padded(2, 3, 4, 0.5).unwrap();
        assert_eq!(m.visual_proj(), array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(m.text_dim(), 4);
        assert_eq!(m.shared_dim(), 2);
    }

    #[test]
    fn model_validation() {
        assert!(AlignmentModel::new(Array2::eye(2), Array2::eye(2), 0.0).is_err());
        assert!(AlignmentModel::new(Array2::eye(2), Array2::eye(3), 1.0).is_err());
        let mut bad = Array2::eye(2);
        bad[[0, 1]] = f64::NAN;
        assert!(AlignmentModel::new(bad, Array2::eye(2), 1.0).is_err());
    }

    #[test]
    fn normalization_cases() {
        let n = l2_normalize(&v(&[3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(n.as_slice()[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(n.as_slice()[1], 0.8, epsilon = 1e-15);
        let unit = v(&[0.0, 1.0, 0.0]);
        assert_eq!(l2_normalize(&unit).unwrap(), unit);
        assert!(matches!(
            l2_normalize(&v(&[0.0, 0.0])),
            Err(Error::DegenerateEmbedding { .. })
        ));
    }

    #[test]
    fn cosine_cases() {
        let a = v(&[0.3, -0.7, 2.0]);
        assert_abs_diff_eq!(cosine_sim(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(cosine_sim(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert!(cosine_sim(&v(&[0.0, 0.0]), &v(&[0.0, 1.0])).is_err());
        assert!(cosine_sim(&v(&[1.0]), &v(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn prototypes_single_class_identity() {
        let model = AlignmentModel::identity_padded(3, 3, 3, 1.0).unwrap();
        let class = ClassSemantics::new("a", vec![v(&[3.0, 0.0, 4.0])]).unwrap();
        let table = build_prototypes(&model, &[class]).unwrap();
        let p = table.get("a").unwrap();
        assert_abs_diff_eq!(p.as_slice()[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p.as_slice()[2], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn prototypes_zero_projection_names_class() {
        let model = AlignmentModel::new(Array2::eye(2), Array2::zeros((2, 2)), 1.0).unwrap();
        let class = ClassSemantics::new("jump", vec![v(&[1.0, 1.0])]).unwrap();
        match build_prototypes(&model, &[class]).unwrap_err() {
            Error::DegenerateEmbedding { context } => assert!(context.contains("jump")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn prototypes_sorted_by_class_id() {
        let model = AlignmentModel::identity_padded(2, 2, 2, 1.0).unwrap();
        let classes: Vec<_> = ["zeta", "alpha", "mid"]
            .iter()
            .map(|id| ClassSemantics::new(*id, vec![v(&[1.0, 0.5])]).unwrap())
            .collect();
        let table = build_prototypes(&model, &classes).unwrap();
        assert_eq!(table.ids().collect::<Vec<_>>(), ["alpha", "mid", "zeta"]);
    }

    #[test]
    fn video_embedding_single_clip_identity_and_zero_error() {
        let model = AlignmentModel::identity_padded(2, 2, 2, 1.0).unwrap();
        let video = VideoSample::new("x", "a", vec![v(&[0.0, 2.0])]).unwrap();
        assert_eq!(embed_video(&model, &video).unwrap(), v(&[0.0, 1.0]));
        let zero = AlignmentModel::new(Array2::zeros((2, 2)), Array2::eye(2), 1.0).unwrap();
        assert!(matches!(
            embed_video(&zero, &video),
            Err(Error::DegenerateEmbedding { .. })
        ));
    }

    #[test]
    fn table_rejects_non_unit_and_duplicates() {
        assert!(ClassPrototypeTable::from_entries(vec![("a".into(), v(&[2.0]))]).is_err());
        assert!(ClassPrototypeTable::from_entries(vec![
            ("a".into(), v(&[1.0])),
            ("a".into(), v(&[1.0]))
        ])
        .is_err());
    }
}
