//! In-memory model of the ICD-9-CM classification.
//!
//! The systematic index is kept as a flat list of [`ClassNode`]s plus two
//! lookup tables per section (code -> node, parent -> children). Entry terms
//! from the alphabetical index / neoplasm table and glossary terms hang off
//! the nodes by target code. Everything is immutable once built.
//!
//! Chapter and block codes are ranges (`240-279`, `249-259`); a child of a
//! range node must fall inside the range. Below block level a parent's code
//! (dot removed) must be a strict prefix of the child's code.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Diagnoses,
    Procedures,
}

impl Section {
    pub const ALL: [Section; 2] = [Section::Diagnoses, Section::Procedures];

    pub fn as_str(self) -> &'static str {
        match self {
            Section::Diagnoses => "diagnoses",
            Section::Procedures => "procedures",
        }
    }

    pub(crate) fn slot(self) -> usize {
        match self {
            Section::Diagnoses => 0,
            Section::Procedures => 1,
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown section {0:?} (expected diagnoses or procedures)")]
pub struct UnknownSection(pub String);

impl FromStr for Section {
    type Err = UnknownSection;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diagnoses" => Ok(Section::Diagnoses),
            "procedures" => Ok(Section::Procedures),
            other => Err(UnknownSection(other.to_string())),
        }
    }
}

/// Depth in the systematic index. Ordered from the top (`Chapter`) down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Chapter,
    Block,
    Category,
    Subcategory,
    Subclassification,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Chapter => "chapter",
            Level::Block => "block",
            Level::Category => "category",
            Level::Subcategory => "subcategory",
            Level::Subclassification => "subclassification",
        }
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "chapter" => Level::Chapter,
            "block" => Level::Block,
            "category" => Level::Category,
            "subcategory" => Level::Subcategory,
            "subclassification" => Level::Subclassification,
            other => return Err(format!("unknown level {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub text: String,
    pub referenced_codes: Vec<String>,
}

impl Exclusion {
    pub fn parse(text: &str) -> Self {
        Exclusion {
            text: text.to_string(),
            referenced_codes: parse_references(text),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteKind {
    UseAdditionalCode,
    CodeBasicDiseaseFirst,
    Other,
}

impl NoteKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoteKind::UseAdditionalCode => "use_additional_code",
            NoteKind::CodeBasicDiseaseFirst => "code_basic_disease_first",
            NoteKind::Other => "other",
        }
    }
}

impl FromStr for NoteKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "use_additional_code" => NoteKind::UseAdditionalCode,
            "code_basic_disease_first" => NoteKind::CodeBasicDiseaseFirst,
            "other" => NoteKind::Other,
            other => return Err(format!("unknown note kind {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub kind: NoteKind,
    pub text: String,
    pub referenced_codes: Vec<String>,
}

impl Note {
    pub fn parse(kind: NoteKind, text: &str) -> Self {
        Note {
            kind,
            text: text.to_string(),
            referenced_codes: parse_references(text),
        }
    }
}

/// One class of the systematic index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassNode {
    pub code: String,
    pub title: String,
    pub additional_title_terms: Vec<String>,
    pub inclusions: Vec<String>,
    pub exclusions: Vec<Exclusion>,
    pub notes: Vec<Note>,
    pub section: Section,
    pub level: Level,
    pub parent_code: Option<String>,
    /// `false` for "conditions" (normal physiological changes, contact
    /// reasons) as opposed to pathological conditions.
    pub pathological: bool,
}

impl ClassNode {
    pub fn new(section: Section, level: Level, code: &str, parent: Option<&str>, title: &str) -> Self {
        ClassNode {
            code: code.to_string(),
            title: title.to_string(),
            additional_title_terms: Vec::new(),
            inclusions: Vec::new(),
            exclusions: Vec::new(),
            notes: Vec::new(),
            section,
            level,
            parent_code: parent.map(str::to_string),
            pathological: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntrySource {
    AlphabeticalIndex,
    NeoplasmTable,
}

impl EntrySource {
    pub fn as_str(self) -> &'static str {
        match self {
            EntrySource::AlphabeticalIndex => "alphabetical_index",
            EntrySource::NeoplasmTable => "neoplasm_table",
        }
    }
}

impl FromStr for EntrySource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alphabetical_index" => Ok(EntrySource::AlphabeticalIndex),
            "neoplasm_table" => Ok(EntrySource::NeoplasmTable),
            other => Err(format!("unknown entry source {other:?}")),
        }
    }
}

/// Alphabetical-index (or neoplasm-table) term. Indentation 0 is the main
/// entry term, 1..=6 are indented sub-entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryTerm {
    pub text: String,
    pub target_code: String,
    pub indentation: u8,
    pub source: EntrySource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlossaryKind {
    Physicians,
    RareDiseases,
    EmergencySei,
    Mesh,
    Other,
}

impl GlossaryKind {
    pub const ALL: [GlossaryKind; 5] = [
        GlossaryKind::Physicians,
        GlossaryKind::RareDiseases,
        GlossaryKind::EmergencySei,
        GlossaryKind::Mesh,
        GlossaryKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GlossaryKind::Physicians => "physicians",
            GlossaryKind::RareDiseases => "rare_diseases",
            GlossaryKind::EmergencySei => "emergency_sei",
            GlossaryKind::Mesh => "mesh",
            GlossaryKind::Other => "other",
        }
    }
}

impl FromStr for GlossaryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GlossaryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown glossary {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingQuality {
    Exact,
    Approximate,
}

impl FromStr for MappingQuality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(MappingQuality::Exact),
            "approximate" => Ok(MappingQuality::Approximate),
            other => Err(format!("unknown mapping quality {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlossaryTerm {
    pub text: String,
    pub target_code: String,
    pub glossary: GlossaryKind,
    pub mapping_quality: MappingQuality,
}

/// Term counts per source, keyed by manifest source kind
/// (`systematic`, `alphabetical`, `neoplasm`, `glossary:<name>`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Provenance(pub BTreeMap<String, usize>);

impl Provenance {
    pub fn get(&self, source: &str) -> usize {
        self.0.get(source).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeDetails {
    pub code: String,
    pub section: Section,
    pub title: String,
    pub level: Level,
    pub is_leaf: bool,
    pub exclusions: Vec<Exclusion>,
    pub use_additional_code: Vec<Note>,
    pub basic_disease: Vec<Note>,
    pub children: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KbError {
    #[error("code {code} not found in {section}")]
    NotFound { section: Section, code: String },
}

/// One violated consistency rule, as found by [`KnowledgeBase::validate_hierarchy`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HierarchyIssue {
    DuplicateCode { section: Section, code: String },
    MalformedCode { section: Section, code: String },
    OrphanParent { section: Section, code: String, parent: String },
    NonPrefixChild { section: Section, code: String, parent: String },
    LevelInversion { section: Section, code: String, parent: String },
    RootNotChapter { section: Section, code: String },
    UnresolvedReference { section: Section, code: String, reference: String },
    UnknownEntryTarget { text: String, target: String },
    IndentationOutOfRange { text: String, indentation: u8 },
    UnknownGlossaryTarget { text: String, target: String },
}

impl fmt::Display for HierarchyIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use HierarchyIssue::*;
        match self {
            DuplicateCode { section, code } => write!(f, "{section}: duplicate code {code}"),
            MalformedCode { section, code } => write!(f, "{section}: malformed code {code:?}"),
            OrphanParent { section, code, parent } => {
                write!(f, "{section}: {code} has unknown parent {parent}")
            }
            NonPrefixChild { section, code, parent } => {
                write!(f, "{section}: {code} is not contained in its parent {parent}")
            }
            LevelInversion { section, code, parent } => {
                write!(f, "{section}: {code} is not below the level of its parent {parent}")
            }
            RootNotChapter { section, code } => {
                write!(f, "{section}: {code} has no parent but is not a chapter")
            }
            UnresolvedReference { section, code, reference } => {
                write!(f, "{section}: {code} references unknown code {reference}")
            }
            UnknownEntryTarget { text, target } => {
                write!(f, "entry term {text:?} targets unknown code {target}")
            }
            IndentationOutOfRange { text, indentation } => {
                write!(f, "entry term {text:?} has indentation {indentation} (max 6)")
            }
            UnknownGlossaryTarget { text, target } => {
                write!(f, "glossary term {text:?} targets unknown code {target}")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    nodes: Vec<ClassNode>,
    by_code: [HashMap<String, usize>; 2],
    children: [HashMap<String, Vec<usize>>; 2],
    entry_terms: Vec<EntryTerm>,
    glossary_terms: Vec<GlossaryTerm>,
    provenance: Provenance,
}

impl KnowledgeBase {
    /// Builds lookup tables; does not validate. Duplicate codes keep the
    /// first occurrence in the lookup tables and are reported by
    /// [`validate_hierarchy`](Self::validate_hierarchy).
    pub fn new(nodes: Vec<ClassNode>, entry_terms: Vec<EntryTerm>, glossary_terms: Vec<GlossaryTerm>) -> Self {
        let mut by_code: [HashMap<String, usize>; 2] = Default::default();
        let mut children: [HashMap<String, Vec<usize>>; 2] = Default::default();
        for (i, node) in nodes.iter().enumerate() {
            let slot = node.section.slot();
            if by_code[slot].contains_key(&node.code) {
                continue;
            }
            by_code[slot].insert(node.code.clone(), i);
            if let Some(parent) = &node.parent_code {
                children[slot].entry(parent.clone()).or_default().push(i);
            }
        }
        for table in &mut children {
            for list in table.values_mut() {
                list.sort_by(|a, b| nodes[*a].code.cmp(&nodes[*b].code));
            }
        }

        let mut counts = BTreeMap::new();
        counts.insert("systematic".to_string(), nodes.len());
        for term in &entry_terms {
            let key = match term.source {
                EntrySource::AlphabeticalIndex => "alphabetical",
                EntrySource::NeoplasmTable => "neoplasm",
            };
            *counts.entry(key.to_string()).or_insert(0) += 1;
        }
        for term in &glossary_terms {
            *counts.entry(format!("glossary:{}", term.glossary.as_str())).or_insert(0) += 1;
        }

        KnowledgeBase {
            nodes,
            by_code,
            children,
            entry_terms,
            glossary_terms,
            provenance: Provenance(counts),
        }
    }

    pub fn nodes(&self) -> &[ClassNode] {
        &self.nodes
    }

    pub fn nodes_in(&self, section: Section) -> impl Iterator<Item = &ClassNode> {
        self.nodes.iter().filter(move |n| n.section == section)
    }

    pub fn entry_terms(&self) -> &[EntryTerm] {
        &self.entry_terms
    }

    pub fn glossary_terms(&self) -> &[GlossaryTerm] {
        &self.glossary_terms
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn total_terms(&self) -> usize {
        self.nodes.len() + self.entry_terms.len() + self.glossary_terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, section: Section, code: &str) -> Option<&ClassNode> {
        self.by_code[section.slot()].get(code).map(|&i| &self.nodes[i])
    }

    pub fn node(&self, section: Section, code: &str) -> Result<&ClassNode, KbError> {
        self.get(section, code).ok_or_else(|| KbError::NotFound {
            section,
            code: code.to_string(),
        })
    }

    pub fn contains(&self, section: Section, code: &str) -> bool {
        self.by_code[section.slot()].contains_key(code)
    }

    /// Section a code lives in; diagnoses win if a code exists in both.
    pub fn section_of(&self, code: &str) -> Option<Section> {
        Section::ALL.into_iter().find(|s| self.contains(*s, code))
    }

    pub fn is_leaf(&self, section: Section, code: &str) -> Result<bool, KbError> {
        self.node(section, code)?;
        Ok(!self.children[section.slot()].contains_key(code))
    }

    pub fn children(&self, section: Section, code: &str) -> Result<Vec<String>, KbError> {
        self.node(section, code)?;
        Ok(self.child_nodes(section, code).map(|n| n.code.clone()).collect())
    }

    pub(crate) fn child_nodes<'a>(&'a self, section: Section, code: &str) -> impl Iterator<Item = &'a ClassNode> + 'a {
        self.children[section.slot()]
            .get(code)
            .into_iter()
            .flatten()
            .map(|&i| &self.nodes[i])
    }

    /// Parent chain starting at the node's parent, nearest first.
    pub fn ancestors<'a>(&'a self, section: Section, code: &str) -> impl Iterator<Item = &'a ClassNode> + 'a {
        // Bounded by the number of levels so a malformed parent loop cannot spin.
        let mut next = self.get(section, code).and_then(|n| n.parent_code.clone());
        let mut steps = 0;
        std::iter::from_fn(move || {
            if steps > 8 {
                return None;
            }
            steps += 1;
            let node = self.get(section, next.as_deref()?)?;
            next = node.parent_code.clone();
            Some(node)
        })
    }

    /// Chapter code (e.g. `630-679`) the code belongs to.
    pub fn chapter_of(&self, section: Section, code: &str) -> Option<&str> {
        let node = self.get(section, code)?;
        if node.level == Level::Chapter {
            return Some(&node.code);
        }
        self.ancestors(section, code)
            .find(|n| n.level == Level::Chapter)
            .map(|n| n.code.as_str())
    }

    /// True when `ancestor` is `code` itself or one of its ancestors.
    pub fn is_same_or_descendant(&self, section: Section, code: &str, ancestor: &str) -> bool {
        code == ancestor || self.ancestors(section, code).any(|n| n.code == ancestor)
    }

    pub fn code_details(&self, section: Section, code: &str) -> Result<CodeDetails, KbError> {
        let node = self.node(section, code)?;
        let children: Vec<String> = self.child_nodes(section, code).map(|n| n.code.clone()).collect();
        let notes_of = |kind| node.notes.iter().filter(|n| n.kind == kind).cloned().collect();
        Ok(CodeDetails {
            code: node.code.clone(),
            section,
            title: node.title.clone(),
            level: node.level,
            is_leaf: children.is_empty(),
            exclusions: node.exclusions.clone(),
            use_additional_code: notes_of(NoteKind::UseAdditionalCode),
            basic_disease: notes_of(NoteKind::CodeBasicDiseaseFirst),
            children,
        })
    }

    /// Reports every violated structural rule. Empty on a consistent KB.
    pub fn validate_hierarchy(&self) -> Vec<HierarchyIssue> {
        let mut issues = Vec::new();
        let mut seen: [HashMap<&str, usize>; 2] = Default::default();

        for node in &self.nodes {
            let section = node.section;
            let count = seen[section.slot()].entry(node.code.as_str()).or_insert(0);
            *count += 1;
            if *count == 2 {
                issues.push(HierarchyIssue::DuplicateCode {
                    section,
                    code: node.code.clone(),
                });
            }
            if *count > 1 {
                continue;
            }
            if !is_well_formed(&node.code, node.level) {
                issues.push(HierarchyIssue::MalformedCode {
                    section,
                    code: node.code.clone(),
                });
            }
            match &node.parent_code {
                None if node.level != Level::Chapter => issues.push(HierarchyIssue::RootNotChapter {
                    section,
                    code: node.code.clone(),
                }),
                None => {}
                Some(parent_code) => match self.get(section, parent_code) {
                    None => issues.push(HierarchyIssue::OrphanParent {
                        section,
                        code: node.code.clone(),
                        parent: parent_code.clone(),
                    }),
                    Some(parent) => {
                        if !code_contains(&parent.code, &node.code) {
                            issues.push(HierarchyIssue::NonPrefixChild {
                                section,
                                code: node.code.clone(),
                                parent: parent.code.clone(),
                            });
                        }
                        if node.level <= parent.level {
                            issues.push(HierarchyIssue::LevelInversion {
                                section,
                                code: node.code.clone(),
                                parent: parent.code.clone(),
                            });
                        }
                    }
                },
            }
            let references = node
                .exclusions
                .iter()
                .flat_map(|e| &e.referenced_codes)
                .chain(node.notes.iter().flat_map(|n| &n.referenced_codes));
            for reference in references {
                if self.section_of(reference).is_none() {
                    issues.push(HierarchyIssue::UnresolvedReference {
                        section,
                        code: node.code.clone(),
                        reference: reference.clone(),
                    });
                }
            }
        }

        for term in &self.entry_terms {
            if self.section_of(&term.target_code).is_none() {
                issues.push(HierarchyIssue::UnknownEntryTarget {
                    text: term.text.clone(),
                    target: term.target_code.clone(),
                });
            }
            if term.indentation > 6 {
                issues.push(HierarchyIssue::IndentationOutOfRange {
                    text: term.text.clone(),
                    indentation: term.indentation,
                });
            }
        }
        for term in &self.glossary_terms {
            if self.section_of(&term.target_code).is_none() {
                issues.push(HierarchyIssue::UnknownGlossaryTarget {
                    text: term.text.clone(),
                    target: term.target_code.clone(),
                });
            }
        }
        issues
    }
}

fn split_range(code: &str) -> Option<(&str, &str)> {
    let (lo, hi) = code.split_once('-')?;
    (!lo.is_empty() && !hi.is_empty()).then_some((lo, hi))
}

fn strip_dot(code: &str) -> String {
    code.chars().filter(|c| *c != '.').collect()
}

/// `E849.0` -> `E849`
fn category_part(code: &str) -> &str {
    code.split('.').next().unwrap_or(code)
}

fn within(lo: &str, hi: &str, key: &str) -> bool {
    key.len() == lo.len() && key.len() == hi.len() && lo <= key && key <= hi
}

/// Hierarchy containment: ranges contain whatever falls between their
/// bounds, plain codes contain codes they strictly prefix (dot removed).
pub(crate) fn code_contains(parent: &str, child: &str) -> bool {
    match split_range(parent) {
        Some((lo, hi)) => match split_range(child) {
            Some((clo, chi)) => within(lo, hi, clo) && within(lo, hi, chi),
            None => within(lo, hi, category_part(child)),
        },
        None => {
            if split_range(child).is_some() {
                return false;
            }
            let (p, c) = (strip_dot(parent), strip_dot(child));
            c.len() > p.len() && c.starts_with(&p)
        }
    }
}

/// Single code: optional `E`/`V` prefix, 2-4 digits, optional dot with 1-2
/// digits. Chapters and blocks may be ranges of category codes.
fn is_plain_code(code: &str) -> bool {
    let body = code.strip_prefix(['E', 'V']).unwrap_or(code);
    let (head, tail) = match body.split_once('.') {
        Some((h, t)) => (h, Some(t)),
        None => (body, None),
    };
    let digits = |s: &str, min: usize, max: usize| {
        (min..=max).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_digit())
    };
    digits(head, 2, 4) && tail.is_none_or(|t| digits(t, 1, 2))
}

fn is_well_formed(code: &str, level: Level) -> bool {
    match (split_range(code), level) {
        (Some((lo, hi)), Level::Chapter | Level::Block) => {
            is_plain_code(lo) && is_plain_code(hi) && !lo.contains('.') && !hi.contains('.') && lo <= hi
        }
        (Some(_), _) => false,
        (None, _) => is_plain_code(code),
    }
}

/// Codes cited in parentheses: `diabete gestazionale (648.8)` -> `["648.8"]`.
/// Ranges keep both endpoints; anything that is not code-shaped is ignored.
pub fn parse_references(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('(') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(')') else { break };
        for piece in after[..close].split([',', ';']) {
            let piece = piece.trim();
            let candidates: Vec<&str> = match piece.split_once('-') {
                Some((a, b)) => vec![a.trim(), b.trim()],
                None => vec![piece],
            };
            if candidates.iter().all(|c| is_plain_code(c)) {
                for c in candidates {
                    if !out.iter().any(|o: &String| o == c) {
                        out.push(c.to_string());
                    }
                }
            }
        }
        rest = &after[close + 1..];
    }
    out
}
