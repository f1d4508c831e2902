#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use zsar::align::AlignmentModel;
use zsar::data::{ClassSemantics, EmbeddingVector, VideoSample};

pub fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    EmbeddingVector::new(gaussian_vec(rng, dim)).unwrap()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

pub fn random_model(
    rng: &mut ChaCha8Rng,
    shared: usize,
    dv: usize,
    dt: usize,
    tau: f64,
) -> AlignmentModel {
    AlignmentModel::new(
        gaussian_matrix(rng, shared, dv),
        gaussian_matrix(rng, shared, dt),
        tau,
    )
    .unwrap()
}

/// Class ids are `c0`, `c1`, ... so lexicographic order matches index order
/// only below ten classes; callers that care sort explicitly.
pub fn random_classes(
    rng: &mut ChaCha8Rng,
    k: usize,
    dt: usize,
    max_descs: usize,
) -> Vec<ClassSemantics> {
    (0..k)
        .map(|i| {
            let m = rng.random_range(1..=max_descs);
            ClassSemantics::new(format!("c{i}"), (0..m).map(|_| gaussian(rng, dt)).collect())
                .unwrap()
        })
        .collect()
}

pub fn random_video(rng: &mut ChaCha8Rng, id: &str, class: &str, dv: usize) -> VideoSample {
    let n = rng.random_range(1..=5);
    VideoSample::new(id, class, (0..n).map(|_| gaussian(rng, dv)).collect()).unwrap()
}

// Plain-loop reference implementations, written independently of the crate.

pub fn ref_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, x) in acc.iter_mut().zip(r) {
            *a += x;
        }
    }
    acc.iter().map(|a| a / rows.len() as f64).collect()
}

pub fn ref_matvec(w: &Array2<f64>, v: &[f64]) -> Vec<f64> {
    let (rows, cols) = w.dim();
    let mut out = vec![0.0; rows];
    for i in 0..rows {
        for j in 0..cols {
            out[i] += w[[i, j]] * v[j];
        }
    }
    out
}

pub fn ref_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn ref_unit(v: &[f64]) -> Vec<f64> {
    let n = ref_dot(v, v).sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn ref_cosine(a: &[f64], b: &[f64]) -> f64 {
    ref_dot(a, b) / (ref_dot(a, a).sqrt() * ref_dot(b, b).sqrt())
}

pub fn rows_of(vs: &[EmbeddingVector]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.as_slice().to_vec()).collect()
}

/// Mean cross-entropy, computed term by term from the textbook formula.
/// `classes` must already be in the label order used by `labels`.
pub fn ref_loss(
    wv: &Array2<f64>,
    wt: &Array2<f64>,
    tau: f64,
    videos: &[Vec<f64>],
    labels: &[usize],
    classes: &[ClassSemantics],
) -> f64 {
    let protos: Vec<Vec<f64>> = classes
        .iter()
        .map(|c| ref_unit(&ref_matvec(wt, &ref_mean(&rows_of(c.descriptions())))))
        .collect();
    let mut total = 0.0;
    for (v, &y) in videos.iter().zip(labels) {
        let u = ref_unit(&ref_matvec(wv, v));
        let logits: Vec<f64> = protos.iter().map(|p| ref_dot(&u, p) / tau).collect();
        let mut denom = 0.0;
        for l in &logits {
            denom += l.exp();
        }
        total += -(logits[y].exp() / denom).ln();
    }
    total / videos.len() as f64
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
