//! The small bundled data set: a slice of the classification around
//! diabetes, kidney disease and pregnancy, with the reference tree.

use std::io;
use std::path::Path;

use super::{load_bundle, Bundle, IngestError, Manifest, MemoryOpener};

pub const BUILTIN_MANIFEST: &str = include_str!("../../fixtures/manifest.txt");

/// `(manifest path, contents)` of every bundled source.
pub const BUILTIN_FILES: &[(&str, &str)] = &[
    ("systematic.tsv", include_str!("../../fixtures/systematic.tsv")),
    ("alphabetical.tsv", include_str!("../../fixtures/alphabetical.tsv")),
    ("neoplasm.tsv", include_str!("../../fixtures/neoplasm.tsv")),
    ("glossary_physicians.tsv", include_str!("../../fixtures/glossary_physicians.tsv")),
    ("glossary_rare_diseases.tsv", include_str!("../../fixtures/glossary_rare_diseases.tsv")),
    ("glossary_emergency_sei.tsv", include_str!("../../fixtures/glossary_emergency_sei.tsv")),
    ("glossary_mesh.tsv", include_str!("../../fixtures/glossary_mesh.tsv")),
    ("glossary_other.tsv", include_str!("../../fixtures/glossary_other.tsv")),
    ("procedure_sets.tsv", include_str!("../../fixtures/procedure_sets.tsv")),
    ("decision_tree.toml", include_str!("../../fixtures/decision_tree.toml")),
];

pub fn builtin_opener() -> MemoryOpener {
    MemoryOpener {
        files: BUILTIN_FILES
            .iter()
            .map(|(p, t)| (p.to_string(), t.to_string()))
            .collect(),
    }
}

pub fn builtin_bundle() -> Result<Bundle, IngestError> {
    let manifest = Manifest::parse(BUILTIN_MANIFEST, "manifest.txt")?;
    load_bundle(&manifest, &builtin_opener())
}

/// Writes the bundled sources and `manifest.txt` into `dir`.
pub fn write_builtin(dir: &Path) -> io::Result<()> {
    std::fs::write(dir.join("manifest.txt"), BUILTIN_MANIFEST)?;
    for (path, text) in BUILTIN_FILES {
        std::fs::write(dir.join(path), text)?;
    }
    Ok(())
}
