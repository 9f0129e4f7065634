//! Label manifest: newline-delimited JSON, append-only, one entry per line.
//!
//! A later line for the same image (same dataset, m/z and ppm) revises the
//! earlier one; readers keep the latest class per image.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::MsiError;
use crate::classes::StructuralClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub dataset_id: String,
    pub mz: f64,
    pub ppm: f64,
    pub class: StructuralClass,
    pub annotator: String,
    pub split: Split,
    /// RFC 3339, UTC.
    pub timestamp: String,
}

impl ManifestEntry {
    pub fn image_id(&self) -> String {
        image_id(&self.dataset_id, self.mz, self.ppm)
    }
}

/// Identifier of the ion image for `(dataset_id, mz, ppm)`.
pub fn image_id(dataset_id: &str, mz: f64, ppm: f64) -> String {
    format!("{dataset_id}@{mz}@{ppm}")
}

pub fn now_timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// All entries of a manifest file, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelManifest {
    pub entries: Vec<ManifestEntry>,
}

impl LabelManifest {
    /// Reads a manifest. A missing file is an empty manifest. A final line
    /// without a trailing newline is treated as a torn write and dropped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MsiError> {
        let path = path.as_ref();
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(MsiError::io(path, e)),
        };
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, MsiError> {
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        if complete.len() < text.len() {
            log::warn!("dropping torn trailing manifest line");
        }
        let mut entries = Vec::new();
        for (i, line) in complete.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| MsiError::Manifest {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        let manifest = LabelManifest { entries };
        manifest.check_splits()?;
        Ok(manifest)
    }

    /// Every dataset must carry one split value across all its entries.
    pub fn check_splits(&self) -> Result<(), MsiError> {
        let mut seen: HashMap<&str, Split> = HashMap::new();
        for e in &self.entries {
            match seen.get(e.dataset_id.as_str()) {
                Some(&first) if first != e.split => {
                    return Err(MsiError::SplitInconsistent {
                        dataset_id: e.dataset_id.clone(),
                        first,
                        second: e.split,
                    })
                }
                Some(_) => {}
                None => {
                    seen.insert(&e.dataset_id, e.split);
                }
            }
        }
        Ok(())
    }

    /// Latest entry per image id, keyed by image id.
    pub fn latest(&self) -> BTreeMap<String, &ManifestEntry> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            out.insert(e.image_id(), e);
        }
        out
    }

    /// Number of images per class after applying revisions.
    pub fn class_counts(&self) -> [usize; StructuralClass::COUNT] {
        let mut counts = [0; StructuralClass::COUNT];
        for e in self.latest().values() {
            counts[e.class.index()] += 1;
        }
        counts
    }
}

/// Merges several annotators' manifests into one consensus label per image.
///
/// Each annotator contributes their latest label for an image. The class with
/// a strict majority of votes wins; anything else (ties, no majority) becomes
/// `Unstructured`. Output is ordered by image id and attributed to
/// `"consensus"`.
pub fn merge_consensus(manifests: &[LabelManifest]) -> LabelManifest {
    let mut votes: BTreeMap<String, (Vec<StructuralClass>, ManifestEntry)> = BTreeMap::new();
    for m in manifests {
        for (id, entry) in m.latest() {
            let slot = votes.entry(id).or_insert_with(|| (Vec::new(), entry.clone()));
            slot.0.push(entry.class);
        }
    }
    let entries = votes
        .into_values()
        .map(|(classes, mut template)| {
            let mut tally = [0usize; StructuralClass::COUNT];
            for c in &classes {
                tally[c.index()] += 1;
            }
            template.class = tally
                .iter()
                .position(|&n| 2 * n > classes.len())
                .and_then(StructuralClass::from_index)
                .unwrap_or(StructuralClass::Unstructured);
            template.annotator = "consensus".into();
            template
        })
        .collect();
    LabelManifest { entries }
}

/// Single appender for a manifest, holding `<manifest>.lock` while alive.
#[derive(Debug)]
pub struct ManifestWriter {
    path: PathBuf,
    lock_path: PathBuf,
    file: File,
}

impl ManifestWriter {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, MsiError> {
        let path = path.as_ref().to_path_buf();
        let mut lock_name = path.file_name().unwrap_or_default().to_os_string();
        lock_name.push(".lock");
        let lock_path = path.with_file_name(lock_name);
        match OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(mut lock) => {
                let _ = writeln!(lock, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(MsiError::ManifestLocked(path))
            }
            Err(e) => return Err(MsiError::io(&lock_path, e)),
        }
        let file = OpenOptions::new().create(true).append(true).open(&path);
        let file = match file {
            Ok(f) => f,
            Err(e) => {
                let _ = std::fs::remove_file(&lock_path);
                return Err(MsiError::io(&path, e));
            }
        };
        Ok(ManifestWriter { path, lock_path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one line with a single write, then flushes and syncs it.
    pub fn append(&mut self, entry: &ManifestEntry) -> Result<(), MsiError> {
        let mut line = serde_json::to_vec(entry).expect("manifest entries serialize");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.flush())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| MsiError::io(&self.path, e))
    }
}

impl Drop for ManifestWriter {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock_path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(ds: &str, mz: f64, class: StructuralClass, split: Split) -> ManifestEntry {
        ManifestEntry {
            dataset_id: ds.into(),
            mz,
            ppm: 5.0,
            class,
            annotator: "a".into(),
            split,
            timestamp: "2024-01-01T00:00:00.000Z".into(),
        }
    }

    #[test]
    fn round_trip_and_revisions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.ndjson");
        {
            let mut w = ManifestWriter::open(&path).unwrap();
            w.append(&entry("d1", 100.0, StructuralClass::Structured, Split::Train)).unwrap();
            w.append(&entry("d1", 200.0, StructuralClass::Negative, Split::Train)).unwrap();
            w.append(&entry("d1", 100.0, StructuralClass::Localized, Split::Train)).unwrap();
        }
        let m = LabelManifest::load(&path).unwrap();
        assert_eq!(m.entries.len(), 3);
        let counts = m.class_counts();
        assert_eq!(counts[StructuralClass::Localized.index()], 1);
        assert_eq!(counts[StructuralClass::Negative.index()], 1);
        assert_eq!(counts[StructuralClass::Structured.index()], 0);
    }

    #[test]
    fn field_names_are_exact() {
        let json = serde_json::to_value(entry("d", 1.5, StructuralClass::WeaklyStructured, Split::Val)).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["annotator", "class", "dataset_id", "mz", "ppm", "split", "timestamp"]);
        assert_eq!(json["class"], "weakly_structured");
        assert_eq!(json["split"], "val");
    }

    #[test]
    fn split_constancy_is_enforced() {
        let a = serde_json::to_string(&entry("d", 1.0, StructuralClass::Structured, Split::Train)).unwrap();
        let b = serde_json::to_string(&entry("d", 2.0, StructuralClass::Structured, Split::Test)).unwrap();
        let err = LabelManifest::parse(&format!("{a}\n{b}\n")).unwrap_err();
        assert!(matches!(err, MsiError::SplitInconsistent { .. }));
    }

    #[test]
    fn torn_trailing_line_is_dropped() {
        let a = serde_json::to_string(&entry("d", 1.0, StructuralClass::Structured, Split::Train)).unwrap();
        let text = format!("{a}\n{}", &a[..a.len() / 2]);
        assert_eq!(LabelManifest::parse(&text).unwrap().entries.len(), 1);
        assert!(LabelManifest::parse("{\"bad\": 1}\n").is_err());
    }

    #[test]
    fn lock_excludes_second_writer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.ndjson");
        let w = ManifestWriter::open(&path).unwrap();
        assert!(matches!(ManifestWriter::open(&path), Err(MsiError::ManifestLocked(_))));
        drop(w);
        assert!(ManifestWriter::open(&path).is_ok());
    }

    #[test]
    fn consensus_majority_else_unstructured() {
        use StructuralClass::*;
        let m = |classes: [StructuralClass; 2]| LabelManifest {
            entries: vec![entry("d", 1.0, classes[0], Split::Train), entry("d", 2.0, classes[1], Split::Train)],
        };
        let merged = merge_consensus(&[m([Structured, Negative]), m([Structured, Localized]), m([Fragmented, Structured])]);
        assert_eq!(merged.entries.len(), 2);
        assert_eq!(merged.entries[0].class, Structured);
        assert_eq!(merged.entries[1].class, Unstructured);
        let two = merge_consensus(&[m([Structured, Negative]), m([Localized, Negative])]);
        assert_eq!(two.entries[0].class, Unstructured);
        assert_eq!(two.entries[1].class, Negative);
    }
}
