//! Coding-rule alerts for a code the user is about to select.
//!
//! Alerts are advisory: the caller decides whether to block the selection.

use serde::Serialize;

use crate::kb::{KbError, KnowledgeBase, NoteKind, Section};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AlertKind {
    NotLeaf,
    ExclusionConflict,
    UseAdditionalCode,
    CodeBasicDiseaseFirst,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SelectionAlert {
    pub kind: AlertKind,
    pub code: String,
    pub referenced_codes: Vec<String>,
    pub message: String,
}

/// Exclusion references in force for `code`: its own plus those inherited
/// from its ancestors.
fn effective_exclusions<'a>(kb: &'a KnowledgeBase, section: Section, code: &str) -> Vec<(&'a str, &'a str)> {
    let own = kb.get(section, code).into_iter();
    own.chain(kb.ancestors(section, code))
        .flat_map(|n| {
            n.exclusions
                .iter()
                .flat_map(move |e| e.referenced_codes.iter().map(move |r| (r.as_str(), e.text.as_str())))
        })
        .collect()
}

/// The exclusion text of `excluding` that covers `other`, if any. A
/// reference covers the referenced code and all its descendants.
fn excluded_by<'a>(kb: &'a KnowledgeBase, section: Section, excluding: &str, other: &str) -> Option<(&'a str, &'a str)> {
    effective_exclusions(kb, section, excluding)
        .into_iter()
        .find(|(reference, _)| kb.is_same_or_descendant(section, other, reference))
}

/// Checks `code` against the leaf rule, its notes, and mutual exclusions
/// with each code in `already_selected`.
pub fn validate_selection(
    kb: &KnowledgeBase,
    section: Section,
    code: &str,
    already_selected: &[String],
) -> Result<Vec<SelectionAlert>, KbError> {
    let node = kb.node(section, code)?;
    for other in already_selected {
        kb.node(section, other)?;
    }
    let mut alerts = Vec::new();

    if !kb.is_leaf(section, code)? {
        let children = kb.children(section, code)?;
        alerts.push(SelectionAlert {
            kind: AlertKind::NotLeaf,
            code: code.to_string(),
            message: format!("{code} non è un codice foglia: selezionare uno dei codici più specifici"),
            referenced_codes: children,
        });
    }

    for other in already_selected.iter().filter(|o| o.as_str() != code) {
        let hit = excluded_by(kb, section, code, other)
            .map(|(_, text)| format!("{code} esclude {other}: {text}"))
            .or_else(|| excluded_by(kb, section, other, code).map(|(_, text)| format!("{other} esclude {code}: {text}")));
        if let Some(message) = hit {
            alerts.push(SelectionAlert {
                kind: AlertKind::ExclusionConflict,
                code: code.to_string(),
                referenced_codes: vec![other.clone()],
                message,
            });
        }
    }

    let notes = std::iter::once(node).chain(kb.ancestors(section, code)).flat_map(|n| &n.notes);
    for note in notes {
        let kind = match note.kind {
            NoteKind::UseAdditionalCode => AlertKind::UseAdditionalCode,
            NoteKind::CodeBasicDiseaseFirst => AlertKind::CodeBasicDiseaseFirst,
            NoteKind::Other => continue,
        };
        alerts.push(SelectionAlert {
            kind,
            code: code.to_string(),
            referenced_codes: note.referenced_codes.clone(),
            message: note.text.clone(),
        });
    }
    Ok(alerts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{ClassNode, Exclusion, Level, Note};

    fn kb() -> KnowledgeBase {
        let d = Section::Diagnoses;
        let mut n250 = ClassNode::new(d, Level::Category, "250", Some("240-279"), "Diabete mellito");
        n250.exclusions.push(Exclusion::parse("diabete in gravidanza (648.8)"));
        let mut n2504 = ClassNode::new(d, Level::Subcategory, "250.4", Some("250"), "Renale");
        n2504.notes.push(Note::parse(NoteKind::UseAdditionalCode, "Usare un codice aggiuntivo (585.9)"));
        KnowledgeBase::new(
            vec![
                ClassNode::new(d, Level::Chapter, "240-279", None, "Endocrine"),
                n250,
                n2504,
                ClassNode::new(d, Level::Subclassification, "250.40", Some("250.4"), "Tipo II"),
                ClassNode::new(d, Level::Chapter, "580-629", None, "Genitourinario"),
                ClassNode::new(d, Level::Category, "585", Some("580-629"), "Renale cronica"),
                ClassNode::new(d, Level::Subcategory, "585.9", Some("585"), "Non specificata"),
                ClassNode::new(d, Level::Chapter, "630-679", None, "Gravidanza"),
                ClassNode::new(d, Level::Category, "648", Some("630-679"), "Altre"),
                ClassNode::new(d, Level::Subcategory, "648.8", Some("648"), "Glucosio"),
                ClassNode::new(d, Level::Subclassification, "648.83", Some("648.8"), "Antepartum"),
            ],
            vec![],
            vec![],
        )
    }

    fn kinds(alerts: &[SelectionAlert]) -> Vec<AlertKind> {
        alerts.iter().map(|a| a.kind).collect()
    }

    #[test]
    fn not_leaf() {
        let alerts = validate_selection(&kb(), Section::Diagnoses, "250", &[]).unwrap();
        assert_eq!(kinds(&alerts), vec![AlertKind::NotLeaf]);
        assert_eq!(alerts[0].referenced_codes, vec!["250.4"]);
    }

    #[test]
    fn inherited_note_and_exclusion() {
        let kb = kb();
        let alerts = validate_selection(&kb, Section::Diagnoses, "250.40", &["648.83".into()]).unwrap();
        assert_eq!(kinds(&alerts), vec![AlertKind::ExclusionConflict, AlertKind::UseAdditionalCode]);
        assert_eq!(alerts[0].referenced_codes, vec!["648.83"]);
        let back = validate_selection(&kb, Section::Diagnoses, "648.83", &["250.40".into()]).unwrap();
        assert_eq!(kinds(&back), vec![AlertKind::ExclusionConflict]);
    }

    #[test]
    fn clean_and_unknown() {
        let kb = kb();
        assert!(validate_selection(&kb, Section::Diagnoses, "585.9", &["250.40".into()]).unwrap().is_empty());
        assert!(validate_selection(&kb, Section::Diagnoses, "nope", &[]).is_err());
        assert!(validate_selection(&kb, Section::Diagnoses, "585.9", &["nope".into()]).is_err());
    }
}
