//! Temperature-scaled softmax cross-entropy over seen-class prototypes and
//! its exact gradient with respect to both projection matrices.
//!
//! Forward pass for a batch of pooled videos `v_i` with labels `y_i` and
//! class anchors `s_c` (aggregated description vectors):
//!
//! ```text
//! x_i = W_v v_i      u_i = x_i / |x_i|
//! z_c = W_t s_c      p_c = z_c / |z_c|
//! l_ic = <u_i, p_c> / tau
//! loss = mean_i [ logsumexp_c(l_ic) - l_{i,y_i} ]
//! ```
//!
//! Backward pass, with `G = (softmax(l) - onehot(y)) / N`:
//!
//! ```text
//! dL/du_i = sum_c G_ic p_c / tau        dL/dp_c = sum_i G_ic u_i / tau
//! dL/dx_i = (I - u_i u_i^T) dL/du_i / |x_i|      (same for z_c)
//! dW_v = sum_i dL/dx_i v_i^T                     dW_t = sum_c dL/dz_c s_c^T
//! ```

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::align::{aggregate_descriptions, AlignmentModel, NORM_FLOOR};
use crate::data::{ClassSemantics, EmbeddingVector};
use crate::error::{Error, Result};

/// Pooled video vectors paired with indices into the seen-class ordering
/// (lexicographic by class id).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    samples: Vec<(EmbeddingVector, usize)>,
}

impl Batch {
    pub fn new(samples: Vec<(EmbeddingVector, usize)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("batch must contain at least one sample"));
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[(EmbeddingVector, usize)] {
        &self.samples
    }
}

/// Gradients of the loss with respect to the two projection matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub visual: Array2<f64>,
    pub text: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// `batch_len x num_classes`; each row sums to one.
    pub probs: Array2<f64>,
}

/// Seen-class anchors, aggregated once and reused across steps. Only the
/// projection of the anchors depends on the trainable parameters.
#[derive(Debug, Clone)]
pub struct ContrastiveObjective {
    class_ids: Vec<String>,
    anchors: Array2<f64>,
}

struct Forward {
    loss: f64,
    probs: Array2<f64>,
    videos: Array2<f64>,
    units: Array2<f64>,
    norms: Array1<f64>,
    protos: Array2<f64>,
    proto_norms: Array1<f64>,
}

impl ContrastiveObjective {
    pub fn from_classes(classes: &[ClassSemantics]) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("need at least one seen class"));
        }
        let mut sorted: Vec<&ClassSemantics> = classes.iter().collect();
        sorted.sort_by(|a, b| a.class_id().cmp(b.class_id()));
        let dim = sorted[0].dim();
        let mut anchors = Array2::zeros((sorted.len(), dim));
        for (mut row, class) in anchors.rows_mut().into_iter().zip(&sorted) {
            let s = aggregate_descriptions(class)?;
            if s.dim() != dim {
                return Err(Error::mismatch("seen-class descriptions", dim, s.dim()));
            }
            row.assign(&ArrayView1::from(s.as_slice()));
        }
        Ok(Self {
            class_ids: sorted.iter().map(|c| c.class_id().to_owned()).collect(),
            anchors,
        })
    }

    pub fn class_ids(&self) -> &[String] {
        &self.class_ids
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn loss(&self, model: &AlignmentModel, batch: &Batch) -> Result<LossOutput> {
        let f = self.forward(model, batch)?;
        Ok(LossOutput {
            loss: f.loss,
            probs: f.probs,
        })
    }

    pub fn gradients(&self, model: &AlignmentModel, batch: &Batch) -> Result<GradientPair> {
        Ok(self.loss_and_gradients(model, batch)?.1)
    }

    pub fn loss_and_gradients(
        &self,
        model: &AlignmentModel,
        batch: &Batch,
    ) -> Result<(f64, GradientPair)> {
        let f = self.forward(model, batch)?;
        let n = batch.len() as f64;
        let inv_tau = 1.0 / model.tau();

        let mut g = f.probs.clone();
        for (mut row, (_, label)) in g.rows_mut().into_iter().zip(batch.samples()) {
            row[*label] -= 1.0;
        }
        g.mapv_inplace(|x| x / n);

        let d_units = g.dot(&f.protos) * inv_tau;
        let d_protos = g.t().dot(&f.units) * inv_tau;
        let d_x = through_normalization(&f.units, &f.norms, &d_units);
        let d_z = through_normalization(&f.protos, &f.proto_norms, &d_protos);

        let grads = GradientPair {
            visual: d_x.t().dot(&f.videos),
            text: d_z.t().dot(&self.anchors),
        };
        if grads
            .visual
            .iter()
            .chain(grads.text.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        Ok((f.loss, grads))
    }

    fn forward(&self, model: &AlignmentModel, batch: &Batch) -> Result<Forward> {
        if model.text_dim() != self.anchors.ncols() {
            return Err(Error::mismatch(
                "text projection input",
                model.text_dim(),
                self.anchors.ncols(),
            ));
        }
        let k = self.num_classes();
        let mut videos = Array2::zeros((batch.len(), model.visual_dim()));
        for (mut row, (v, label)) in videos.rows_mut().into_iter().zip(batch.samples()) {
            if v.dim() != model.visual_dim() {
                return Err(Error::mismatch(
                    "visual projection input",
                    model.visual_dim(),
                    v.dim(),
                ));
            }
            if *label >= k {
                return Err(Error::invalid(format!(
                    "class index {label} out of range for {k} seen classes"
                )));
            }
            row.assign(&ArrayView1::from(v.as_slice()));
        }

        let projected = videos.dot(&model.visual_proj().t());
        let (units, norms) = normalize_rows(projected, |i| format!("video {i} of batch"))?;
        let projected = self.anchors.dot(&model.text_proj().t());
        let (protos, proto_norms) = normalize_rows(projected, |c| {
            format!("prototype of class {:?}", self.class_ids[c])
        })?;

        let logits = units.dot(&protos.t()) / model.tau();
        let mut probs = Array2::zeros(logits.raw_dim());
        let mut total = 0.0;
        for (i, (row, (_, label))) in logits.rows().into_iter().zip(batch.samples()).enumerate() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
            let lse = max + sum.ln();
            total += lse - row[*label];
            for (p, &x) in probs.row_mut(i).iter_mut().zip(row) {
                *p = (x - lse).exp();
            }
        }
        let loss = total / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss {loss}")));
        }
        Ok(Forward {
            loss,
            probs,
            videos,
            units,
            norms,
            protos,
            proto_norms,
        })
    }
}

fn normalize_rows(
    mut m: Array2<f64>,
    describe: impl Fn(usize) -> String,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let mut norms = Array1::zeros(m.nrows());
    for (i, mut row) in m.axis_iter_mut(Axis(0)).enumerate() {
        let n = row.dot(&row).sqrt();
        if n <= NORM_FLOOR {
            return Err(Error::DegenerateEmbedding {
                context: describe(i),
            });
        }
        if !n.is_finite() {
            return Err(Error::Numerical(format!(
                "norm overflow in {}",
                describe(i)
            )));
        }
        row.mapv_inplace(|x| x / n);
        norms[i] = n;
    }
    Ok((m, norms))
}

/// Gradient through `u = x / |x|`: `(g - (u.g) u) / |x|`, row by row.
fn through_normalization(
    units: &Array2<f64>,
    norms: &Array1<f64>,
    upstream: &Array2<f64>,
) -> Array2<f64> {
    let mut out = upstream.clone();
    for ((mut row, u), &n) in out.rows_mut().into_iter().zip(units.rows()).zip(norms) {
        let radial = u.dot(&row);
        row.scaled_add(-radial, &u);
        row.mapv_inplace(|x| x / n);
    }
    out
}

/// Mean softmax cross-entropy of each video against all seen classes.
/// Returns the loss and the per-sample class probabilities.
pub fn contrastive_loss(
    model: &AlignmentModel,
    batch: &Batch,
    seen_classes: &[ClassSemantics],
) -> Result<(f64, Array2<f64>)> {
    let out = ContrastiveObjective::from_classes(seen_classes)?.loss(model, batch)?;
    Ok((out.loss, out.probs))
}

pub fn loss_gradients(
    model: &AlignmentModel,
    batch: &Batch,
    seen_classes: &[ClassSemantics],
) -> Result<GradientPair> {
    ContrastiveObjective::from_classes(seen_classes)?.gradients(model, batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    fn class(id: &str, d: &[f64]) -> ClassSemantics {
        ClassSemantics::new(id, vec![v(d)]).unwrap()
    }

    fn model() -> AlignmentModel {
        let w = Array2::from_shape_fn((2, 3), |(r, c)| 0.3 * r as f64 - 0.2 * c as f64 + 0.5);
        let t = Array2::from_shape_fn((2, 2), |(r, c)| if r == c { 1.0 } else { 0.25 });
        AlignmentModel::new(w, t, 0.5).unwrap()
    }

    #[test]
    fn single_class_loss_and_gradient_are_exactly_zero() {
        let batch = Batch::new(vec![(v(&[1.0, 2.0, 3.0]), 0), (v(&[-1.0, 0.5, 0.0]), 0)]).unwrap();
        let classes = [class("a", &[0.3, 0.9])];
        let (loss, probs) = contrastive_loss(&model(), &batch, &classes).unwrap();
        assert_eq!(loss, 0.0);
        assert!(probs.iter().all(|&p| p == 1.0));
        let g = loss_gradients(&model(), &batch, &classes).unwrap();
        assert!(g.visual.iter().chain(g.text.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn identical_prototypes_give_log_k() {
        let batch = Batch::new(vec![(v(&[1.0, 2.0, 3.0]), 2), (v(&[0.2, -0.5, 1.0]), 0)]).unwrap();
        let classes: Vec<_> = ["a", "b", "c", "d"]
            .iter()
            .map(|id| class(id, &[0.4, -1.0]))
            .collect();
        let (loss, probs) = contrastive_loss(&model(), &batch, &classes).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-9);
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let batch = Batch::new(vec![(v(&[1.0, 2.0, 3.0]), 5)]).unwrap();
        assert!(contrastive_loss(&model(), &batch, &[class("a", &[1.0, 0.0])]).is_err());
    }

    #[test]
    fn degenerate_video_is_reported() {
        let batch = Batch::new(vec![(v(&[0.0, 0.0, 0.0]), 0)]).unwrap();
        let err = contrastive_loss(&model(), &batch, &[class("a", &[1.0, 0.0])]).unwrap_err();
        assert!(matches!(err, Error::DegenerateEmbedding { .. }));
    }

    #[test]
    fn tiny_temperature_does_not_overflow() {
        let m = model();
        let (w, t, _) = m.into_parts();
        let cold = AlignmentModel::new(w, t, 1e-4).unwrap();
        let batch = Batch::new(vec![(v(&[1.0, 2.0, 3.0]), 1)]).unwrap();
        let classes = [class("a", &[1.0, 0.0]), class("b", &[0.0, 1.0])];
        let (loss, probs) = contrastive_loss(&cold, &batch, &classes).unwrap();
        assert!(loss.is_finite());
        assert!((probs.row(0).sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(Batch::new(vec![]).is_err());
    }
}
