//! Zero-shot action recognition on precomputed embeddings.
//!
//! Videos arrive as bags of clip embeddings and classes as sets of
//! description embeddings, both produced by external encoders. The crate
//! pools clips, averages descriptions into a class prompt, learns two
//! linear maps into a shared space with a temperature-scaled contrastive
//! loss, and classifies videos of unseen classes by the most similar class
//! prompt.
//!
//! ```
//! use zsar::data::{generate_synthetic, SplitSpec, SyntheticSpec};
//! use zsar::eval::{evaluate_split, Side};
//! use zsar::train::{train, TrainConfig};
//!
//! let (dataset, _) = generate_synthetic(&SyntheticSpec { num_classes: 5, ..Default::default() })?;
//! let split = SplitSpec::new("demo", ["class_00", "class_01", "class_02"], ["class_03", "class_04"]);
//! let (model, _log) = train(&dataset, &split, &TrainConfig::default())?;
//! let report = evaluate_split(&model, &dataset, &split, Side::Unseen)?;
//! assert!(report.top1_accuracy >= 0.0);
//! # Ok::<(), zsar::Error>(())
//! ```
//!
//! The `book/` directory holds a longer guide; its code samples are
//! compiled and run as doc-tests of this crate.

pub mod align;
pub mod data;
mod error;
pub mod eval;
pub mod model_io;
pub mod train;

pub use error::{Error, ErrorKind, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/alignment.md")]
    mod alignment {}
    #[doc = include_str!("../../../book/src/objective.md")]
    mod objective {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
