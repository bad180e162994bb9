//! Guided selection of the main condition: procedure classification,
//! decision tree and interactive sessions.

mod script;
mod session;
mod tree;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use script::{run_scripted, ScriptError, Transcript, TranscriptStep};
pub use session::{
    DecisionEngine, HistoryEntry, Interaction, InteractionType, ProgressEntry, ProgressStatus, SessionState,
    SessionStatus, ANSWER_NO, ANSWER_YES,
};
pub use tree::{
    validate_tree, CandidateRule, DecisionTree, Node, NodeKind, PredicateArg, PredicateCall, PredicateSig, TreeDefect,
    TreeParseError, VerdictRule, KNOWN_PREDICATES,
};

use crate::kb::Section;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProcedureClass {
    #[serde(rename = "relevant")]
    RelevantSurgery,
    #[serde(rename = "selected_nonrelevant")]
    SelectedNonRelevant,
    #[serde(rename = "residual")]
    ResidualNonRelevant,
}

impl ProcedureClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcedureClass::RelevantSurgery => "relevant",
            ProcedureClass::SelectedNonRelevant => "selected_nonrelevant",
            ProcedureClass::ResidualNonRelevant => "residual",
        }
    }
}

impl fmt::Display for ProcedureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProcedureClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relevant" => Ok(ProcedureClass::RelevantSurgery),
            "selected_nonrelevant" => Ok(ProcedureClass::SelectedNonRelevant),
            "residual" => Ok(ProcedureClass::ResidualNonRelevant),
            other => Err(format!("unknown procedure set {other:?}")),
        }
    }
}

/// Partition of procedure codes into the three procedure classes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProcedureSets {
    classes: HashMap<String, ProcedureClass>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("procedure {code} listed both as {first} and {second}")]
pub struct DuplicateProcedure {
    pub code: String,
    pub first: ProcedureClass,
    pub second: ProcedureClass,
}

impl ProcedureSets {
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self, DuplicateProcedure>
    where
        I: IntoIterator<Item = (S, ProcedureClass)>,
        S: Into<String>,
    {
        let mut classes = HashMap::new();
        for (code, class) in pairs {
            let code = code.into();
            if let Some(&first) = classes.get(&code) {
                return Err(DuplicateProcedure {
                    code,
                    first,
                    second: class,
                });
            }
            classes.insert(code, class);
        }
        Ok(ProcedureSets { classes })
    }

    pub fn classify(&self, code: &str) -> Result<ProcedureClass, EngineError> {
        self.classes
            .get(code)
            .copied()
            .ok_or_else(|| EngineError::UnclassifiedProcedure { code: code.to_string() })
    }

    /// Codes sorted, with their class.
    pub fn entries(&self) -> Vec<(&str, ProcedureClass)> {
        let mut out: Vec<_> = self.classes.iter().map(|(c, k)| (c.as_str(), *k)).collect();
        out.sort();
        out
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("at least one condition code is required")]
    EmptyConditionList,
    #[error("code {code} not found in {section}")]
    UnknownCode { section: Section, code: String },
    #[error("procedure {code} is in no procedure set")]
    UnclassifiedProcedure { code: String },
    #[error("answer is for node {got} but the session is at node {expected}")]
    StaleNode { expected: u32, got: u32 },
    #[error("invalid answer: {0}")]
    InvalidAnswer(String),
    #[error("session is already {0}")]
    SessionFinished(SessionStatus),
    #[error("decision tree defect at runtime: {0}")]
    TreeDefect(String),
}
