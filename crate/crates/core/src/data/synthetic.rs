//! Seeded synthetic datasets drawn from a shared linear latent model.
//!
//! Each class gets a unit latent prototype `m`. Clip vectors are `A m + e`
//! and description vectors are `B m + e`, where `A` and `B` have
//! orthonormal columns and `e` is i.i.d. Gaussian noise. Because both
//! modalities are linear images of the same latent, a pair of linear
//! projections can align them perfectly, which makes training success a
//! checkable property.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ClassSemantics, DatasetManifest, EmbeddingVector, VideoSample};
use crate::error::{Error, Result};

/// Upper bound on the cosine between any two latent prototypes.
pub const MAX_PROTOTYPE_COSINE: f64 = 0.8;
const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub videos_per_class: usize,
    pub descriptions_per_class: usize,
    pub clips_per_video: usize,
    pub latent_dim: usize,
    pub visual_dim: usize,
    pub text_dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            videos_per_class: 20,
            descriptions_per_class: 5,
            clips_per_video: 4,
            latent_dim: 8,
            visual_dim: 16,
            text_dim: 16,
            noise_sigma: 0.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_classes", self.num_classes),
            ("videos_per_class", self.videos_per_class),
            ("descriptions_per_class", self.descriptions_per_class),
            ("clips_per_video", self.clips_per_video),
            ("latent_dim", self.latent_dim),
            ("visual_dim", self.visual_dim),
            ("text_dim", self.text_dim),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.latent_dim > self.visual_dim.min(self.text_dim) {
            return Err(Error::invalid(format!(
                "latent_dim ({}) must not exceed min(visual_dim, text_dim) = {}",
                self.latent_dim,
                self.visual_dim.min(self.text_dim)
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Everything the generator knows that the manifest does not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    /// video_id -> class_id
    pub assignments: BTreeMap<String, String>,
    /// class_id -> unit latent prototype
    pub latent_prototypes: BTreeMap<String, Vec<f64>>,
    /// `visual_dim x latent_dim`, orthonormal columns
    pub visual_map: Vec<Vec<f64>>,
    /// `text_dim x latent_dim`, orthonormal columns
    pub text_map: Vec<Vec<f64>>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(DatasetManifest, SyntheticTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let visual_map = orthonormal_columns(&mut rng, spec.visual_dim, spec.latent_dim);
    let text_map = orthonormal_columns(&mut rng, spec.text_dim, spec.latent_dim);
    let prototypes = latent_prototypes(&mut rng, spec.num_classes, spec.latent_dim)?;
    let noise = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma validated"));

    let class_width = digits(spec.num_classes);
    let video_width = digits(spec.videos_per_class);
    let class_ids: Vec<String> = (0..spec.num_classes)
        .map(|i| format!("class_{i:0class_width$}"))
        .collect();

    let mut sample = |map: &Array2<f64>, latent: &Array1<f64>| -> Result<EmbeddingVector> {
        let clean = map.dot(latent);
        let values = clean
            .iter()
            .map(|&x| {
                let noisy = match &noise {
                    Some(n) => x + n.sample(&mut rng),
                    None => x,
                };
                f64::from(noisy as f32)
            })
            .collect();
        EmbeddingVector::new(values)
    };

    let mut classes = Vec::with_capacity(spec.num_classes);
    let mut videos = Vec::with_capacity(spec.num_classes * spec.videos_per_class);
    let mut assignments = BTreeMap::new();
    for (class_id, proto) in class_ids.iter().zip(&prototypes) {
        let descriptions = (0..spec.descriptions_per_class)
            .map(|_| sample(&text_map, proto))
            .collect::<Result<_>>()?;
        classes.push(ClassSemantics::new(class_id.clone(), descriptions)?);
        for j in 0..spec.videos_per_class {
            let video_id = format!("{class_id}_v{j:0video_width$}");
            let clips = (0..spec.clips_per_video)
                .map(|_| sample(&visual_map, proto))
                .collect::<Result<_>>()?;
            videos.push(VideoSample::new(video_id.clone(), class_id.clone(), clips)?);
            assignments.insert(video_id, class_id.clone());
        }
    }

    let manifest = DatasetManifest::new(
        format!("synthetic-seed{}", spec.seed),
        spec.visual_dim,
        spec.text_dim,
        videos,
        classes,
        format!(
            "synthetic linear latent model (latent_dim={}, noise_sigma={}, seed={})",
            spec.latent_dim, spec.noise_sigma, spec.seed
        ),
    )?;
    let truth = SyntheticTruth {
        assignments,
        latent_prototypes: class_ids
            .into_iter()
            .zip(prototypes.iter().map(|p| p.to_vec()))
            .collect(),
        visual_map: rows_of(&visual_map),
        text_map: rows_of(&text_map),
    };
    Ok((manifest, truth))
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len().max(2)
}

fn rows_of(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn gaussian_vector(rng: &mut impl Rng, n: usize) -> Array1<f64> {
    Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Gaussian draws orthonormalized by modified Gram-Schmidt; a column that
/// collapses is redrawn.
fn orthonormal_columns(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(cols);
    while basis.len() < cols {
        let mut v = gaussian_vector(rng, rows);
        for b in &basis {
            let proj = b.dot(&v);
            v.scaled_add(-proj, b);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            basis.push(v / norm);
        }
    }
    Array2::from_shape_fn((rows, cols), |(r, c)| basis[c][r])
}

fn latent_prototypes(rng: &mut impl Rng, count: usize, dim: usize) -> Result<Vec<Array1<f64>>> {
    let mut out: Vec<Array1<f64>> = Vec::with_capacity(count);
    let mut rejections = 0;
    while out.len() < count {
        let v = gaussian_vector(rng, dim);
        let norm = v.dot(&v).sqrt();
        if norm < 1e-9 {
            continue;
        }
        let v = v / norm;
        if out.iter().all(|p| p.dot(&v) <= MAX_PROTOTYPE_COSINE) {
            out.push(v);
        } else {
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(Error::invalid(format!(
                    "cannot place {count} prototypes in {dim} dimensions with pairwise cosine <= {MAX_PROTOTYPE_COSINE}"
                )));
            }
        }
    }
    Ok(out)
}
