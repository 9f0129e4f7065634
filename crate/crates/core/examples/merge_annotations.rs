//! Appends labels to manifests from two annotators and merges them.

use ionmorph::msi_io::{image_id, merge_consensus, now_timestamp, LabelManifest, ManifestEntry, ManifestWriter, Split};
use ionmorph::StructuralClass;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let votes = [
        ("alice", [StructuralClass::Structured, StructuralClass::Negative, StructuralClass::Localized]),
        ("bob", [StructuralClass::Structured, StructuralClass::Fragmented, StructuralClass::Localized]),
        ("carol", [StructuralClass::Structured, StructuralClass::Unstructured, StructuralClass::Negative]),
    ];
    let mut manifests = Vec::new();
    for (annotator, classes) in votes {
        let path = tmp.path().join(format!("{annotator}.jsonl"));
        let mut writer = ManifestWriter::open(&path)?;
        for (mz, class) in [200.0, 250.0, 300.0].into_iter().zip(classes) {
            writer.append(&ManifestEntry {
                dataset_id: "section1".into(),
                mz,
                ppm: 10.0,
                class,
                annotator: annotator.into(),
                split: Split::Train,
                timestamp: now_timestamp(),
            })?;
        }
        drop(writer);
        manifests.push(LabelManifest::load(&path)?);
    }

    let merged = merge_consensus(&manifests);
    for e in &merged.entries {
        println!("{:<22} {}", e.image_id(), e.class.name());
    }
    println!("counts {:?}", merged.class_counts());
    assert!(merged.latest().contains_key(&image_id("section1", 200.0, 10.0)));
    Ok(())
}
