//! Zero-shot prediction, top-1 accuracy per split, and mean ± std
//! aggregation across splits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::{
    build_prototypes, cosine_sim, embed_video, AlignmentModel, ClassPrototypeTable,
};
use crate::data::{validate_split, DatasetManifest, EmbeddingVector, SplitSpec, VideoSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Seen,
    Unseen,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Seen => "seen",
            Side::Unseen => "unseen",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen" => Ok(Side::Seen),
            "unseen" => Ok(Side::Unseen),
            other => Err(Error::invalid(format!(
                "side must be seen or unseen, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub video_id: String,
    pub predicted_class: String,
    /// One score per candidate, in table order.
    pub similarity_scores: Vec<(String, f64)>,
}

/// Index and score of the best candidate. Scanning in table order with a
/// strict comparison resolves ties to the lexicographically smallest id.
pub(crate) fn best_candidate(
    unit: &EmbeddingVector,
    table: &ClassPrototypeTable,
) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (_, proto)) in table.iter().enumerate() {
        let s = cosine_sim(unit, proto)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.ok_or_else(|| Error::invalid("candidate table is empty"))
}

pub fn predict(
    model: &AlignmentModel,
    video: &VideoSample,
    candidates: &ClassPrototypeTable,
) -> Result<Prediction> {
    if candidates.is_empty() {
        return Err(Error::invalid("candidate table is empty"));
    }
    let unit = embed_video(model, video)?;
    let (best, _) = best_candidate(&unit, candidates)?;
    let similarity_scores = candidates
        .iter()
        .map(|(id, proto)| Ok((id.to_owned(), cosine_sim(&unit, proto)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prediction {
        video_id: video.video_id().to_owned(),
        predicted_class: similarity_scores[best].0.clone(),
        similarity_scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub split_id: String,
    pub side: Side,
    pub num_videos: usize,
    pub num_correct: usize,
    pub top1_accuracy: f64,
    /// Classes of the evaluated side that have at least one video.
    pub per_class_accuracy: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("report serializes");
        json.push('\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedManifest {
            path: path.to_path_buf(),
            reason: format!("report file: {e}"),
        })
    }

    pub fn write_per_class_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let to_io = |e: csv::Error| Error::io(path, e.into());
        w.write_record(["class_id", "accuracy"]).map_err(to_io)?;
        for (class, acc) in &self.per_class_accuracy {
            w.write_record([class.clone(), acc.to_string()])
                .map_err(to_io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Top-1 accuracy on one side of a split, with candidates drawn only from
/// that side's classes.
pub fn evaluate_split(
    model: &AlignmentModel,
    manifest: &DatasetManifest,
    split: &SplitSpec,
    side: Side,
) -> Result<EvalReport> {
    validate_split(split, manifest)?;
    if model.visual_dim() != manifest.visual_dim() {
        return Err(Error::mismatch(
            "model visual_dim",
            manifest.visual_dim(),
            model.visual_dim(),
        ));
    }
    if model.text_dim() != manifest.text_dim() {
        return Err(Error::mismatch(
            "model text_dim",
            manifest.text_dim(),
            model.text_dim(),
        ));
    }
    let side_classes = match side {
        Side::Seen => &split.seen,
        Side::Unseen => &split.unseen,
    };
    let candidates: Vec<_> = side_classes
        .iter()
        .map(|id| manifest.class(id).expect("split validated").clone())
        .collect();
    let table = build_prototypes(model, &candidates)?;

    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for video in manifest.videos() {
        if !side_classes.contains(video.class_id()) {
            continue;
        }
        let p = predict(model, video, &table)?;
        let entry = tally.entry(video.class_id().to_owned()).or_default();
        entry.0 += 1;
        if p.predicted_class == video.class_id() {
            entry.1 += 1;
        }
    }
    let num_videos: usize = tally.values().map(|t| t.0).sum();
    if num_videos == 0 {
        return Err(Error::invalid(format!(
            "split {:?} has no videos on the {} side",
            split.split_id,
            side.as_str()
        )));
    }
    let num_correct: usize = tally.values().map(|t| t.1).sum();
    Ok(EvalReport {
        dataset: manifest.name().to_owned(),
        split_id: split.split_id.clone(),
        side,
        num_videos,
        num_correct,
        top1_accuracy: num_correct as f64 / num_videos as f64,
        per_class_accuracy: tally
            .into_iter()
            .map(|(id, (n, c))| (id, c as f64 / n as f64))
            .collect(),
    })
}

/// Mean and population standard deviation of top-1 accuracy across splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub dataset: String,
    pub reports: Vec<EvalReport>,
    /// Fraction in `[0, 1]`.
    pub mean: f64,
    /// Population std (divisor = number of splits), as a fraction.
    pub std: f64,
}

impl AggregateReport {
    /// `"MM.M ± S.S"` on the percent scale.
    pub fn render(&self) -> String {
        format_mean_std(self.mean, self.std)
    }
}

/// Formats fractional accuracies as percentages with one decimal.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{:.1} ± {:.1}", mean * 100.0, std * 100.0)
}

pub fn aggregate_splits(reports: &[EvalReport]) -> Result<AggregateReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::invalid("no reports to aggregate"))?;
    if let Some(r) = reports.iter().find(|r| r.dataset != first.dataset) {
        return Err(Error::invalid(format!(
            "cannot aggregate reports from datasets {:?} and {:?}",
            first.dataset, r.dataset
        )));
    }
    let n = reports.len() as f64;
    let mean = reports.iter().map(|r| r.top1_accuracy).sum::<f64>() / n;
    let var = reports
        .iter()
        .map(|r| (r.top1_accuracy - mean).powi(2))
        .sum::<f64>()
        / n;
    Ok(AggregateReport {
        dataset: first.dataset.clone(),
        reports: reports.to_vec(),
        mean,
        std: var.sqrt(),
    })
}

/// Human-readable table with one row per aggregate.
pub fn render_table(aggregates: &[AggregateReport]) -> String {
    let width = aggregates
        .iter()
        .map(|a| a.dataset.chars().count())
        .max()
        .unwrap_or(0)
        .max("dataset".len());
    let mut out = String::new();
    writeln!(
        out,
        "# top-1 accuracy (%), mean ± population std over splits"
    )
    .unwrap();
    writeln!(
        out,
        "{:<width$}  {:>6}  {:<6}  top-1",
        "dataset", "splits", "side"
    )
    .unwrap();
    for a in aggregates {
        let side = a.reports.first().map_or("-", |r| r.side.as_str());
        writeln!(
            out,
            "{:<width$}  {:>6}  {:<6}  {}",
            a.dataset,
            a.reports.len(),
            side,
            a.render()
        )
        .unwrap();
    }
    out
}
