use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use zsar::data::{
    generate_synthetic, load_manifest, save_manifest, validate_split, DatasetManifest, SplitSpec,
    SyntheticSpec,
};
use zsar::eval::{aggregate_splits, evaluate_split, render_table, EvalReport};
use zsar::model_io::{load_model, save_model};
use zsar::train::TrainConfig;

use crate::{EvalArgs, IngestArgs, ReportArgs, SplitArgs, SynthArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| zsar::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
        .context("cannot create output directory")
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| zsar::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        num_classes: a.classes,
        videos_per_class: a.videos_per_class,
        descriptions_per_class: a.descs_per_class,
        clips_per_video: a.clips_per_video,
        latent_dim: a.latent_dim,
        visual_dim: a.visual_dim,
        text_dim: a.text_dim,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let (manifest, truth) = generate_synthetic(&spec)?;
    create_dir(&a.out)?;
    save_manifest(&manifest, &a.out.join("manifest.json"))?;
    write_json(
        &a.out.join("ground_truth.json"),
        &serde_json::json!({ "spec": spec, "truth": truth }),
    )?;
    println!(
        "wrote {} classes, {} videos to {}",
        manifest.classes().len(),
        manifest.videos().len(),
        a.out.display()
    );
    Ok(())
}

fn range(values: impl Iterator<Item = usize>) -> String {
    let (lo, hi) = values.fold((usize::MAX, 0), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo == hi {
        lo.to_string()
    } else {
        format!("{lo}..{hi}")
    }
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    let m = load_manifest(&a.manifest)?;
    println!("dataset:              {}", m.name());
    println!("classes:              {}", m.classes().len());
    println!("videos:               {}", m.videos().len());
    println!("visual_dim:           {}", m.visual_dim());
    println!("text_dim:             {}", m.text_dim());
    println!(
        "descriptions/class:   {}",
        range(m.classes().iter().map(|c| c.descriptions().len()))
    );
    println!(
        "clips/video:          {}",
        range(m.videos().iter().map(|v| v.clips().len()))
    );
    let by_class = m.videos_by_class();
    println!(
        "videos/class:         {}",
        range(
            m.classes()
                .iter()
                .map(|c| by_class.get(c.class_id()).map_or(0, Vec::len))
        )
    );
    println!("vectors:              {}", m.vector_count());
    if !m.encoder_provenance().is_empty() {
        println!("encoder_provenance:   {}", m.encoder_provenance());
    }
    if a.validate {
        println!("manifest is valid");
    }
    Ok(())
}

fn split_path(dir: &Path, split: &SplitSpec) -> std::path::PathBuf {
    dir.join(format!("{}.json", split.split_id))
}

pub fn split(a: SplitArgs) -> Result<()> {
    let m = load_manifest(&a.manifest)?;
    let splits = if a.imports.is_empty() {
        SplitSpec::random_partitions(&m, a.unseen_fraction, a.count, a.seed)?
    } else {
        a.imports
            .iter()
            .map(|p| {
                let s = SplitSpec::load(p)?;
                validate_split(&s, &m).with_context(|| format!("split file {}", p.display()))?;
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?
    };
    let mut ids: Vec<&str> = splits.iter().map(|s| s.split_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        bail!(zsar::Error::Invalid(format!(
            "duplicate split_id {:?}",
            w[0]
        )));
    }
    create_dir(&a.out_dir)?;
    for s in &splits {
        s.save(&split_path(&a.out_dir, s))?;
        println!(
            "{}: {} seen, {} unseen",
            s.split_id,
            s.seen.len(),
            s.unseen.len()
        );
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let m = load_manifest(&a.manifest)?;
    let split = SplitSpec::load(&a.split)?;
    let config = match &a.config {
        Some(p) => TrainConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => TrainConfig::default(),
    };
    let (model, log) = zsar::train::train(&m, &split, &config)?;
    save_model(&model, &config, &a.out_model)?;
    if let Some(p) = &a.log {
        log.write_csv(p)?;
    }
    match log.best() {
        Some(best) => println!(
            "{}: stopped after epoch {}, best epoch {} (val_acc {:.4}, train_loss {:.6})",
            split.split_id, log.stopping_epoch, best.epoch, best.val_acc, best.train_loss
        ),
        None => println!("{}: no epochs run, saved initial model", split.split_id),
    }
    Ok(())
}

fn check_dims(model: &zsar::align::AlignmentModel, m: &DatasetManifest) -> Result<()> {
    if (model.visual_dim(), model.text_dim()) != (m.visual_dim(), m.text_dim()) {
        bail!(zsar::Error::Invalid(format!(
            "model expects visual/text dims {}/{}, manifest {:?} has {}/{}",
            model.visual_dim(),
            model.text_dim(),
            m.name(),
            m.visual_dim(),
            m.text_dim()
        )));
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let m = load_manifest(&a.manifest)?;
    let split = SplitSpec::load(&a.split)?;
    let (model, _) = load_model(&a.model)?;
    check_dims(&model, &m)?;
    let report = evaluate_split(&model, &m, &split, a.side)?;
    report.save_json(&a.out_report)?;
    if let Some(p) = &a.per_class_csv {
        report.write_per_class_csv(p)?;
    }
    println!(
        "{} {}: top-1 {:.1}% ({}/{})",
        report.split_id,
        report.side.as_str(),
        report.top1_accuracy * 100.0,
        report.num_correct,
        report.num_videos
    );
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<()> {
    let paths = glob::glob(&a.reports)
        .map_err(|e| zsar::Error::Invalid(format!("bad glob {:?}: {e}", a.reports)))?
        .collect::<std::result::Result<Vec<_>, _>>()
        .context("cannot expand report glob")?;
    if paths.is_empty() {
        bail!(zsar::Error::Invalid(format!(
            "no reports match {:?}",
            a.reports
        )));
    }
    let mut groups: BTreeMap<(String, &'static str), Vec<EvalReport>> = BTreeMap::new();
    for p in &paths {
        let r = EvalReport::load_json(p)?;
        groups
            .entry((r.dataset.clone(), r.side.as_str()))
            .or_default()
            .push(r);
    }
    let aggregates = groups
        .into_values()
        .map(|mut reports| {
            reports.sort_by(|x, y| x.split_id.cmp(&y.split_id));
            aggregate_splits(&reports)
        })
        .collect::<zsar::Result<Vec<_>>>()?;
    print!("{}", render_table(&aggregates));
    Ok(())
}
