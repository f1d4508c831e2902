use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetManifest;
use crate::error::{Error, Result};

/// A seen/unseen partition of class ids.
///
/// Serialized as `{"split_id": ..., "seen": [...], "unseen": [...]}`, which
/// lets published splits be dropped in as plain JSON files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub split_id: String,
    pub seen: BTreeSet<String>,
    pub unseen: BTreeSet<String>,
}

impl SplitSpec {
    pub fn new<S, I, J>(split_id: impl Into<String>, seen: I, unseen: J) -> Self
    where
        S: Into<String>,
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = S>,
    {
        Self {
            split_id: split_id.into(),
            seen: seen.into_iter().map(Into::into).collect(),
            unseen: unseen.into_iter().map(Into::into).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedManifest {
            path: path.to_path_buf(),
            reason: format!("split file: {e}"),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("split serializes");
        json.push('\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Draws `count` random partitions of the manifest's classes, each with
    /// `round(unseen_fraction * K)` unseen classes (clamped to `1..K`).
    pub fn random_partitions(
        manifest: &DatasetManifest,
        unseen_fraction: f64,
        count: usize,
        seed: u64,
    ) -> Result<Vec<SplitSpec>> {
        if !(unseen_fraction > 0.0 && unseen_fraction < 1.0) {
            return Err(Error::invalid("unseen fraction must lie in (0, 1)"));
        }
        let ids: Vec<&str> = manifest.class_ids().into_iter().collect();
        if ids.len() < 2 {
            return Err(Error::invalid("need at least two classes to split"));
        }
        let k = ids.len();
        let n_unseen = ((unseen_fraction * k as f64).round() as usize).clamp(1, k - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let splits = (0..count)
            .map(|i| {
                let mut order = ids.clone();
                order.shuffle(&mut rng);
                let (unseen, seen) = order.split_at(n_unseen);
                SplitSpec::new(
                    format!("split_{i:02}"),
                    seen.iter().copied(),
                    unseen.iter().copied(),
                )
            })
            .collect();
        Ok(splits)
    }
}

/// Checks that both sides are non-empty, disjoint, and drawn from the
/// manifest's classes.
pub fn validate_split(split: &SplitSpec, manifest: &DatasetManifest) -> Result<()> {
    if split.seen.is_empty() {
        return Err(Error::SplitEmptySide { side: "seen" });
    }
    if split.unseen.is_empty() {
        return Err(Error::SplitEmptySide { side: "unseen" });
    }
    let overlap: Vec<String> = split.seen.intersection(&split.unseen).cloned().collect();
    if !overlap.is_empty() {
        return Err(Error::SplitOverlap { classes: overlap });
    }
    let known = manifest.class_ids();
    let unknown: Vec<String> = split
        .seen
        .iter()
        .chain(&split.unseen)
        .filter(|c| !known.contains(c.as_str()))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::SplitUnknownClass { classes: unknown });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClassSemantics, EmbeddingVector};
    use proptest::prelude::*;

    fn manifest(ids: &[&str]) -> DatasetManifest {
        let classes = ids
            .iter()
            .map(|id| {
                ClassSemantics::new(*id, vec![EmbeddingVector::new(vec![1.0]).unwrap()]).unwrap()
            })
            .collect();
        DatasetManifest::new("m", 1, 1, vec![], classes, "").unwrap()
    }

    #[test]
    fn accepts_disjoint_cover() {
        let m = manifest(&["a", "b", "c"]);
        validate_split(&SplitSpec::new("s", ["a", "b"], ["c"]), &m).unwrap();
    }

    #[test]
    fn overlap_names_offending_class() {
        let m = manifest(&["a", "b", "c"]);
        let err = validate_split(&SplitSpec::new("s", ["a", "b"], ["b", "c"]), &m).unwrap_err();
        match err {
            Error::SplitOverlap { classes } => assert_eq!(classes, vec!["b".to_string()]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_side_is_rejected() {
        let m = manifest(&["a", "b"]);
        let err = validate_split(&SplitSpec::new("s", ["a", "b"], Vec::<&str>::new()), &m);
        assert!(matches!(err, Err(Error::SplitEmptySide { side: "unseen" })));
        let err = validate_split(&SplitSpec::new("s", Vec::<&str>::new(), ["a"]), &m);
        assert!(matches!(err, Err(Error::SplitEmptySide { side: "seen" })));
    }

    #[test]
    fn unknown_class_is_rejected() {
        let m = manifest(&["a", "b"]);
        let err = validate_split(&SplitSpec::new("s", ["a"], ["z"]), &m).unwrap_err();
        assert!(matches!(err, Error::SplitUnknownClass { .. }));
    }

    #[test]
    fn random_partitions_are_valid_and_seeded() {
        let ids: Vec<String> = (0..10).map(|i| format!("c{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let m = manifest(&refs);
        let a = SplitSpec::random_partitions(&m, 0.3, 5, 7).unwrap();
        let b = SplitSpec::random_partitions(&m, 0.3, 5, 7).unwrap();
        assert_eq!(a, b);
        for s in &a {
            validate_split(s, &m).unwrap();
            assert_eq!(s.unseen.len(), 3);
            assert_eq!(s.seen.len(), 7);
        }
        assert_ne!(a[0], a[1]);
    }

    proptest! {
        // Each class is assigned to seen, unseen, both, or neither; a fifth
        // option injects an id the manifest lacks.
        #[test]
        fn validation_matches_set_definition(
            assign in proptest::collection::vec(0u8..4, 1..8),
            stray in proptest::option::of(0u8..2),
        ) {
            let ids: Vec<String> = (0..assign.len()).map(|i| format!("k{i}")).collect();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let m = manifest(&refs);
            let mut seen = BTreeSet::new();
            let mut unseen = BTreeSet::new();
            for (id, a) in ids.iter().zip(&assign) {
                if *a == 1 || *a == 3 { seen.insert(id.clone()); }
                if *a == 2 || *a == 3 { unseen.insert(id.clone()); }
            }
            match stray {
                Some(0) => { seen.insert("stray".into()); }
                Some(_) => { unseen.insert("stray".into()); }
                None => {}
            }
            let expected = !seen.is_empty()
                && !unseen.is_empty()
                && seen.is_disjoint(&unseen)
                && stray.is_none();
            let split = SplitSpec { split_id: "p".into(), seen, unseen };
            prop_assert_eq!(validate_split(&split, &m).is_ok(), expected);
        }
    }
}
