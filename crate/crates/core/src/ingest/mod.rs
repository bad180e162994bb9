//! Loading the knowledge base, procedure sets and decision tree from a
//! manifest of tab-separated files.
//!
//! A manifest line is `path<TAB>kind[<TAB>declared_count]`; `#` starts a
//! comment. Paths are relative to the manifest. Kinds: `systematic`,
//! `alphabetical`, `neoplasm`, `glossary:<name>`, `procedure_sets`,
//! `decision_tree`. A declared count is the number of data rows (tree
//! nodes for the decision tree) and is checked after loading.

mod fixture;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Cursor};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use fixture::{builtin_bundle, builtin_opener, write_builtin, BUILTIN_FILES, BUILTIN_MANIFEST};

use crate::engine::{validate_tree, DecisionTree, ProcedureClass, ProcedureSets, TreeDefect, KNOWN_PREDICATES};
use crate::kb::{
    ClassNode, EntrySource, EntryTerm, Exclusion, GlossaryKind, GlossaryTerm, HierarchyIssue, KnowledgeBase, Level,
    MappingQuality, Note, NoteKind, Section,
};

/// Separator inside list-valued TSV cells.
pub const LIST_SEPARATOR: &str = "||";

pub const SYSTEMATIC_HEADER: &[&str] = &[
    "code",
    "parent_code",
    "level",
    "section",
    "title",
    "additional_title_terms",
    "inclusions",
    "exclusions",
    "notes",
];
pub const CONDITION_KIND_COLUMN: &str = "condition_kind";
pub const ENTRY_HEADER: &[&str] = &["text", "target_code", "indentation", "source"];
pub const GLOSSARY_HEADER: &[&str] = &["text", "target_code", "glossary", "mapping_quality"];
pub const PROCEDURE_SETS_HEADER: &[&str] = &["code", "set"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Systematic,
    Alphabetical,
    Neoplasm,
    Glossary(GlossaryKind),
    ProcedureSets,
    DecisionTree,
}

impl SourceKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "systematic" => SourceKind::Systematic,
            "alphabetical" => SourceKind::Alphabetical,
            "neoplasm" => SourceKind::Neoplasm,
            "procedure_sets" => SourceKind::ProcedureSets,
            "decision_tree" => SourceKind::DecisionTree,
            other => SourceKind::Glossary(other.strip_prefix("glossary:")?.parse().ok()?),
        })
    }

    pub fn name(self) -> String {
        match self {
            SourceKind::Systematic => "systematic".into(),
            SourceKind::Alphabetical => "alphabetical".into(),
            SourceKind::Neoplasm => "neoplasm".into(),
            SourceKind::Glossary(g) => format!("glossary:{}", g.as_str()),
            SourceKind::ProcedureSets => "procedure_sets".into(),
            SourceKind::DecisionTree => "decision_tree".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: SourceKind,
    pub declared_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    Parse { file: String, line: usize, reason: String },
    #[error("{source_name}: declared {declared} records, found {actual}")]
    CountMismatch {
        source_name: String,
        declared: usize,
        actual: usize,
    },
    #[error("inconsistent hierarchy: {}", join_issues(.0))]
    InconsistentHierarchy(Vec<HierarchyIssue>),
    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,
    #[error("manifest lists no {0} source")]
    MissingSource(String),
    #[error("{file}: {source}")]
    TreeParse {
        file: String,
        #[source]
        source: crate::engine::TreeParseError,
    },
    #[error("decision tree failed validation: {}", join_issues(.0))]
    InvalidTree(Vec<TreeDefect>),
    #[error("procedure {code} in {file} is not a procedure code of the knowledge base")]
    UnknownProcedure { file: String, code: String },
}

fn join_issues<T: std::fmt::Display>(issues: &[T]) -> String {
    const SHOWN: usize = 5;
    let mut parts: Vec<String> = issues.iter().take(SHOWN).map(ToString::to_string).collect();
    if issues.len() > SHOWN {
        parts.push(format!("and {} more", issues.len() - SHOWN));
    }
    parts.join("; ")
}

/// Resolves manifest paths to readers.
pub trait SourceOpener {
    fn open(&self, path: &str) -> io::Result<Box<dyn BufRead + '_>>;
}

/// Files under a base directory.
#[derive(Debug, Clone)]
pub struct DirOpener {
    pub base: PathBuf,
}

impl SourceOpener for DirOpener {
    fn open(&self, path: &str) -> io::Result<Box<dyn BufRead + '_>> {
        Ok(Box::new(BufReader::new(File::open(self.base.join(path))?)))
    }
}

/// In-memory files, keyed by manifest path.
#[derive(Debug, Clone, Default)]
pub struct MemoryOpener {
    pub files: BTreeMap<String, String>,
}

impl SourceOpener for MemoryOpener {
    fn open(&self, path: &str) -> io::Result<Box<dyn BufRead + '_>> {
        self.files
            .get(path)
            .map(|text| Box::new(Cursor::new(text.as_bytes())) as Box<dyn BufRead>)
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("no file {path}")))
    }
}

impl Manifest {
    pub fn parse(text: &str, file: &str) -> Result<Self, IngestError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim_end();
            if line.trim().is_empty() {
                continue;
            }
            let err = |reason: String| IngestError::Parse {
                file: file.to_string(),
                line: i + 1,
                reason,
            };
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            let (path, kind, count) = match fields.as_slice() {
                [p, k] => (*p, *k, None),
                [p, k, c] => (*p, *k, Some(*c)),
                _ => return Err(err(format!("expected 2 or 3 tab-separated fields, got {}", fields.len()))),
            };
            if path.is_empty() {
                return Err(err("empty path".into()));
            }
            let kind = SourceKind::parse(kind).ok_or_else(|| err(format!("unknown source kind {kind:?}")))?;
            let declared_count = match count {
                None | Some("") => None,
                Some(c) => Some(c.parse().map_err(|_| err(format!("bad declared count {c:?}")))?),
            };
            entries.push(ManifestEntry {
                path: path.to_string(),
                kind,
                declared_count,
            });
        }
        if entries.is_empty() {
            return Err(IngestError::Parse {
                file: file.to_string(),
                line: 0,
                reason: "manifest lists no source".into(),
            });
        }
        Ok(Manifest { entries })
    }

    pub fn read(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            file: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    fn of_kind(&self, kind: SourceKind) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }
}

/// Knowledge base plus the data the decision engine needs.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub kb: KnowledgeBase,
    pub procedure_sets: ProcedureSets,
    pub tree: DecisionTree,
}

/// Streams one TSV file row by row, checking the header.
struct TsvReader<'a> {
    file: &'a str,
    lines: io::Lines<Box<dyn BufRead + 'a>>,
    line_no: usize,
    width: usize,
}

impl<'a> TsvReader<'a> {
    /// `header` must match exactly; `optional` columns may follow it.
    fn open(
        opener: &'a dyn SourceOpener,
        file: &'a str,
        header: &[&str],
        optional: &[&str],
    ) -> Result<Self, IngestError> {
        let reader = opener.open(file).map_err(|source| IngestError::Io {
            file: file.to_string(),
            source,
        })?;
        let mut tsv = TsvReader {
            file,
            lines: reader.lines(),
            line_no: 0,
            width: 0,
        };
        let found = tsv
            .next_line()?
            .ok_or_else(|| tsv.error(1, "missing header".into()))?;
        let found: Vec<&str> = found.split('\t').collect();
        let known = found.len() >= header.len()
            && found[..header.len()] == *header
            && found[header.len()..].iter().zip(optional).all(|(a, b)| a == b)
            && found.len() <= header.len() + optional.len();
        if !known {
            return Err(tsv.error(1, format!("header {found:?} does not match {header:?}")));
        }
        tsv.width = found.len();
        Ok(tsv)
    }

    fn error(&self, line: usize, reason: String) -> IngestError {
        IngestError::Parse {
            file: self.file.to_string(),
            line,
            reason,
        }
    }

    fn next_line(&mut self) -> Result<Option<String>, IngestError> {
        match self.lines.next() {
            None => Ok(None),
            Some(Err(source)) => Err(IngestError::Io {
                file: self.file.to_string(),
                source,
            }),
            Some(Ok(line)) => {
                self.line_no += 1;
                Ok(Some(line.strip_suffix('\r').unwrap_or(&line).to_string()))
            }
        }
    }

    /// Next non-blank data row, split into exactly `width` cells.
    fn next_row(&mut self) -> Result<Option<(usize, Vec<String>)>, IngestError> {
        loop {
            let Some(line) = self.next_line()? else { return Ok(None) };
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<String> = line.split('\t').map(|c| c.trim().to_string()).collect();
            if cells.len() != self.width {
                return Err(self.error(
                    self.line_no,
                    format!("expected {} fields, got {}", self.width, cells.len()),
                ));
            }
            return Ok(Some((self.line_no, cells)));
        }
    }
}

fn split_list(cell: &str) -> Vec<String> {
    cell.split(LIST_SEPARATOR)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn check_count(entry: &ManifestEntry, actual: usize) -> Result<(), IngestError> {
    match entry.declared_count {
        Some(declared) if declared != actual => Err(IngestError::CountMismatch {
            source_name: entry.path.clone(),
            declared,
            actual,
        }),
        _ => Ok(()),
    }
}

fn required<T: std::str::FromStr<Err = E>, E: std::fmt::Display>(
    tsv: &TsvReader<'_>,
    line: usize,
    column: &str,
    cell: &str,
) -> Result<T, IngestError> {
    cell.parse()
        .map_err(|e| tsv.error(line, format!("column {column}: {e}")))
}

fn non_empty(tsv: &TsvReader<'_>, line: usize, column: &str, cell: &str) -> Result<String, IngestError> {
    if cell.is_empty() {
        return Err(tsv.error(line, format!("column {column} is empty")));
    }
    Ok(cell.to_string())
}

fn load_systematic(opener: &dyn SourceOpener, entry: &ManifestEntry, out: &mut Vec<ClassNode>) -> Result<(), IngestError> {
    let mut tsv = TsvReader::open(opener, &entry.path, SYSTEMATIC_HEADER, &[CONDITION_KIND_COLUMN])?;
    let mut count = 0;
    while let Some((line, cells)) = tsv.next_row()? {
        let code = non_empty(&tsv, line, "code", &cells[0])?;
        let level: Level = required(&tsv, line, "level", &cells[2])?;
        let section: Section = required(&tsv, line, "section", &cells[3])?;
        let title = non_empty(&tsv, line, "title", &cells[4])?;
        let parent = (!cells[1].is_empty()).then_some(cells[1].as_str());
        let mut node = ClassNode::new(section, level, &code, parent, &title);
        node.additional_title_terms = split_list(&cells[5]);
        node.inclusions = split_list(&cells[6]);
        node.exclusions = split_list(&cells[7]).iter().map(|t| Exclusion::parse(t)).collect();
        for note in split_list(&cells[8]) {
            let (kind, text) = note
                .split_once(':')
                .ok_or_else(|| tsv.error(line, format!("note {note:?} lacks a `kind:` prefix")))?;
            let kind: NoteKind = required(&tsv, line, "notes", kind.trim())?;
            node.notes.push(Note::parse(kind, text.trim()));
        }
        if let Some(kind) = cells.get(9) {
            node.pathological = match kind.as_str() {
                "" | "pathological" => true,
                "condition" => false,
                other => return Err(tsv.error(line, format!("column condition_kind: unknown value {other:?}"))),
            };
        }
        out.push(node);
        count += 1;
    }
    check_count(entry, count)
}

fn load_entries(opener: &dyn SourceOpener, entry: &ManifestEntry, out: &mut Vec<EntryTerm>) -> Result<(), IngestError> {
    let expected = match entry.kind {
        SourceKind::Neoplasm => EntrySource::NeoplasmTable,
        _ => EntrySource::AlphabeticalIndex,
    };
    let mut tsv = TsvReader::open(opener, &entry.path, ENTRY_HEADER, &[])?;
    let mut count = 0;
    while let Some((line, cells)) = tsv.next_row()? {
        let source: EntrySource = required(&tsv, line, "source", &cells[3])?;
        if source != expected {
            return Err(tsv.error(line, format!("source {} in a {} file", source.as_str(), entry.kind.name())));
        }
        out.push(EntryTerm {
            text: non_empty(&tsv, line, "text", &cells[0])?,
            target_code: non_empty(&tsv, line, "target_code", &cells[1])?,
            indentation: required(&tsv, line, "indentation", &cells[2])?,
            source,
        });
        count += 1;
    }
    check_count(entry, count)
}

fn load_glossary(
    opener: &dyn SourceOpener,
    entry: &ManifestEntry,
    kind: GlossaryKind,
    out: &mut Vec<GlossaryTerm>,
) -> Result<(), IngestError> {
    let mut tsv = TsvReader::open(opener, &entry.path, GLOSSARY_HEADER, &[])?;
    let mut count = 0;
    while let Some((line, cells)) = tsv.next_row()? {
        let glossary: GlossaryKind = required(&tsv, line, "glossary", &cells[2])?;
        if glossary != kind {
            return Err(tsv.error(line, format!("glossary {} in a {} file", glossary.as_str(), kind.as_str())));
        }
        let mapping_quality: MappingQuality = required(&tsv, line, "mapping_quality", &cells[3])?;
        out.push(GlossaryTerm {
            text: non_empty(&tsv, line, "text", &cells[0])?,
            target_code: non_empty(&tsv, line, "target_code", &cells[1])?,
            glossary,
            mapping_quality,
        });
        count += 1;
    }
    check_count(entry, count)
}

/// Loads every knowledge-base source in the manifest and checks hierarchy
/// consistency. Other source kinds are ignored.
pub fn load_kb(manifest: &Manifest, opener: &dyn SourceOpener) -> Result<KnowledgeBase, IngestError> {
    let mut nodes = Vec::new();
    let mut entries = Vec::new();
    let mut glossary = Vec::new();
    let mut saw_systematic = false;
    for entry in &manifest.entries {
        match entry.kind {
            SourceKind::Systematic => {
                saw_systematic = true;
                load_systematic(opener, entry, &mut nodes)?
            }
            SourceKind::Alphabetical | SourceKind::Neoplasm => load_entries(opener, entry, &mut entries)?,
            SourceKind::Glossary(kind) => load_glossary(opener, entry, kind, &mut glossary)?,
            SourceKind::ProcedureSets | SourceKind::DecisionTree => {}
        }
    }
    if !saw_systematic {
        return Err(IngestError::MissingSource("systematic".into()));
    }
    if nodes.is_empty() {
        return Err(IngestError::EmptyKnowledgeBase);
    }
    let kb = KnowledgeBase::new(nodes, entries, glossary);
    let issues = kb.validate_hierarchy();
    if !issues.is_empty() {
        return Err(IngestError::InconsistentHierarchy(issues));
    }
    Ok(kb)
}

fn single_source(manifest: &Manifest, kind: SourceKind) -> Result<&ManifestEntry, IngestError> {
    let mut found = manifest.of_kind(kind);
    let first = found.next().ok_or_else(|| IngestError::MissingSource(kind.name()))?;
    if found.next().is_some() {
        return Err(IngestError::Parse {
            file: first.path.clone(),
            line: 0,
            reason: format!("manifest lists more than one {} source", kind.name()),
        });
    }
    Ok(first)
}

/// Procedure partition; every code must be a procedure class of `kb`.
pub fn load_procedure_sets(
    manifest: &Manifest,
    opener: &dyn SourceOpener,
    kb: &KnowledgeBase,
) -> Result<ProcedureSets, IngestError> {
    let entry = single_source(manifest, SourceKind::ProcedureSets)?;
    let mut tsv = TsvReader::open(opener, &entry.path, PROCEDURE_SETS_HEADER, &[])?;
    let mut pairs = Vec::new();
    while let Some((line, cells)) = tsv.next_row()? {
        let code = non_empty(&tsv, line, "code", &cells[0])?;
        let class: ProcedureClass = required(&tsv, line, "set", &cells[1])?;
        if !kb.contains(Section::Procedures, &code) {
            return Err(IngestError::UnknownProcedure {
                file: entry.path.clone(),
                code,
            });
        }
        pairs.push((line, code, class));
    }
    check_count(entry, pairs.len())?;
    let lines: BTreeMap<String, usize> = pairs.iter().map(|(l, c, _)| (c.clone(), *l)).collect();
    ProcedureSets::from_pairs(pairs.into_iter().map(|(_, c, k)| (c, k))).map_err(|dup| IngestError::Parse {
        file: entry.path.clone(),
        line: lines.get(&dup.code).copied().unwrap_or(0),
        reason: dup.to_string(),
    })
}

/// Decision tree, rejected unless it validates cleanly.
pub fn load_tree(manifest: &Manifest, opener: &dyn SourceOpener) -> Result<DecisionTree, IngestError> {
    let entry = single_source(manifest, SourceKind::DecisionTree)?;
    let mut text = String::new();
    opener
        .open(&entry.path)
        .and_then(|mut r| r.read_to_string(&mut text))
        .map_err(|source| IngestError::Io {
            file: entry.path.clone(),
            source,
        })?;
    let tree = parse_tree(&text, &entry.path)?;
    check_count(entry, tree.len())?;
    Ok(tree)
}

/// Decision tree from a standalone file, e.g. a corrected tree that
/// replaces the one in the manifest.
pub fn load_tree_file(path: &Path) -> Result<DecisionTree, IngestError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        file: file.clone(),
        source,
    })?;
    parse_tree(&text, &file)
}

fn parse_tree(text: &str, file: &str) -> Result<DecisionTree, IngestError> {
    let tree = DecisionTree::from_toml_str(text).map_err(|source| IngestError::TreeParse {
        file: file.to_string(),
        source,
    })?;
    let defects = validate_tree(&tree, KNOWN_PREDICATES);
    if !defects.is_empty() {
        return Err(IngestError::InvalidTree(defects));
    }
    Ok(tree)
}

/// Loads everything the manifest lists. With `tree`, the manifest need not
/// list a decision tree and any it lists is ignored.
pub fn load_bundle_with(
    manifest: &Manifest,
    opener: &dyn SourceOpener,
    tree: Option<DecisionTree>,
) -> Result<Bundle, IngestError> {
    let kb = load_kb(manifest, opener)?;
    let procedure_sets = load_procedure_sets(manifest, opener, &kb)?;
    let tree = match tree {
        Some(tree) => tree,
        None => load_tree(manifest, opener)?,
    };
    Ok(Bundle {
        kb,
        procedure_sets,
        tree,
    })
}

pub fn load_bundle(manifest: &Manifest, opener: &dyn SourceOpener) -> Result<Bundle, IngestError> {
    load_bundle_with(manifest, opener, None)
}

/// Reads the manifest at `path` and the sources next to it.
pub fn load_bundle_from_path(path: &Path) -> Result<Bundle, IngestError> {
    load_configured(Some(path), None)
}

/// Bundle for a service or CLI invocation: the manifest at `manifest`
/// (bundled fixture when `None`), optionally with its tree replaced by the
/// file at `tree`.
pub fn load_configured(manifest: Option<&Path>, tree: Option<&Path>) -> Result<Bundle, IngestError> {
    let tree = tree.map(load_tree_file).transpose()?;
    match manifest {
        Some(path) => {
            let m = Manifest::read(path)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            load_bundle_with(&m, &DirOpener { base }, tree)
        }
        None => {
            let m = Manifest::parse(BUILTIN_MANIFEST, "manifest.txt")?;
            load_bundle_with(&m, &builtin_opener(), tree)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lines() {
        let m = Manifest::parse(
            "# comment\n\nsys.tsv\tsystematic\t3\ngl.tsv\tglossary:mesh\ntree.toml\tdecision_tree\t\n",
            "m",
        )
        .unwrap();
        assert_eq!(m.entries.len(), 3);
        assert_eq!(m.entries[0].declared_count, Some(3));
        assert_eq!(m.entries[1].kind, SourceKind::Glossary(GlossaryKind::Mesh));
        assert_eq!(m.entries[2].declared_count, None);
    }

    #[test]
    fn manifest_errors() {
        assert!(matches!(Manifest::parse("# nothing\n", "m"), Err(IngestError::Parse { line: 0, .. })));
        assert!(matches!(
            Manifest::parse("a.tsv\tglossary:klingon\n", "m"),
            Err(IngestError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Manifest::parse("a.tsv\tsystematic\tmany\n", "m"),
            Err(IngestError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn source_kind_names_round_trip() {
        let kinds = [
            SourceKind::Systematic,
            SourceKind::Alphabetical,
            SourceKind::Neoplasm,
            SourceKind::Glossary(GlossaryKind::RareDiseases),
            SourceKind::ProcedureSets,
            SourceKind::DecisionTree,
        ];
        for k in kinds {
            assert_eq!(SourceKind::parse(&k.name()), Some(k));
        }
    }

    #[test]
    fn list_cells() {
        assert_eq!(split_list(" a || b ||"), vec!["a", "b"]);
        assert!(split_list("").is_empty());
    }
}
