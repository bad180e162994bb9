use std::fmt;

use serde::{Deserialize, Serialize};

use super::tree::{CandidateRule, DecisionTree, Node, NodeKind, PredicateCall, VerdictRule};
use super::{EngineError, ProcedureClass, ProcedureSets};
use crate::kb::{KnowledgeBase, Section};

pub const ANSWER_YES: &str = "YES";
pub const ANSWER_NO: &str = "NO";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingAnswer,
    Finished,
    Cancelled,
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionStatus::AwaitingAnswer => "awaiting_answer",
            SessionStatus::Finished => "finished",
            SessionStatus::Cancelled => "cancelled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub node: u32,
    pub answer: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub pc: Vec<String>,
    pub pi: Vec<String>,
    pub current: u32,
    pub history: Vec<HistoryEntry>,
    /// Every node entered, automatic ones included.
    pub path: Vec<u32>,
    pub status: SessionStatus,
    pub verdict: Option<Vec<String>>,
}

impl SessionState {
    fn answers(&self, node: u32) -> &[String] {
        self.history
            .iter()
            .rev()
            .find(|h| h.node == node)
            .map(|h| h.answer.as_slice())
            .unwrap_or(&[])
    }

    pub fn cancel(&mut self) -> Result<(), EngineError> {
        match self.status {
            SessionStatus::AwaitingAnswer => {
                self.status = SessionStatus::Cancelled;
                Ok(())
            }
            closed => Err(EngineError::SessionFinished(closed)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionType {
    AskBinary,
    AskMulticode,
    AskSingleCode,
    Result,
}

/// What the client shows next: a question with its allowed answers, or
/// the verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub id: String,
    pub state: u32,
    pub message: String,
    #[serde(rename = "type")]
    pub kind: InteractionType,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub allowed_answers: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verdict: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgressStatus {
    Done,
    Current,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressEntry {
    /// `None` for the closing "main condition" step before it is reached.
    pub node: Option<u32>,
    pub label: String,
    pub status: ProgressStatus,
}

const FINAL_STEP_LABEL: &str = "Condizione principale";

/// Runs sessions over one tree, one procedure partition and one KB.
#[derive(Debug, Clone, Copy)]
pub struct DecisionEngine<'a> {
    tree: &'a DecisionTree,
    sets: &'a ProcedureSets,
    kb: &'a KnowledgeBase,
}

impl<'a> DecisionEngine<'a> {
    pub fn new(tree: &'a DecisionTree, sets: &'a ProcedureSets, kb: &'a KnowledgeBase) -> Self {
        DecisionEngine { tree, sets, kb }
    }

    pub fn tree(&self) -> &'a DecisionTree {
        self.tree
    }

    /// Validates the code lists and walks automatic nodes up to the first
    /// question (or straight to a verdict).
    pub fn start_session(
        &self,
        id: impl Into<String>,
        pc: &[String],
        pi: &[String],
    ) -> Result<(SessionState, Interaction), EngineError> {
        let mut conditions: Vec<String> = Vec::new();
        for code in pc {
            let code = code.trim();
            if !self.kb.contains(Section::Diagnoses, code) {
                return Err(EngineError::UnknownCode {
                    section: Section::Diagnoses,
                    code: code.to_string(),
                });
            }
            if !conditions.iter().any(|c| c == code) {
                conditions.push(code.to_string());
            }
        }
        if conditions.is_empty() {
            return Err(EngineError::EmptyConditionList);
        }
        let mut procedures: Vec<String> = Vec::new();
        for code in pi {
            let code = code.trim();
            if !self.kb.contains(Section::Procedures, code) {
                return Err(EngineError::UnknownCode {
                    section: Section::Procedures,
                    code: code.to_string(),
                });
            }
            self.sets.classify(code)?;
            if !procedures.iter().any(|c| c == code) {
                procedures.push(code.to_string());
            }
        }

        let mut session = SessionState {
            id: id.into(),
            pc: conditions,
            pi: procedures,
            current: self.tree.root(),
            history: Vec::new(),
            path: Vec::new(),
            status: SessionStatus::AwaitingAnswer,
            verdict: None,
        };
        let interaction = self.advance(&mut session, self.tree.root())?;
        Ok((session, interaction))
    }

    /// Applies the answer to the node the session is waiting on.
    pub fn answer(&self, session: &mut SessionState, node: u32, answer: &[String]) -> Result<Interaction, EngineError> {
        if session.status != SessionStatus::AwaitingAnswer {
            return Err(EngineError::SessionFinished(session.status));
        }
        if node != session.current {
            return Err(EngineError::StaleNode {
                expected: session.current,
                got: node,
            });
        }
        let current = self.node(node)?;
        let (recorded, next) = match &current.kind {
            NodeKind::AskBinary { yes, no } => match answer {
                [a] if a == ANSWER_YES => (vec![ANSWER_YES.to_string()], *yes),
                [a] if a == ANSWER_NO => (vec![ANSWER_NO.to_string()], *no),
                _ => {
                    return Err(EngineError::InvalidAnswer(format!(
                        "expected {ANSWER_YES} or {ANSWER_NO}, got {answer:?}"
                    )))
                }
            },
            NodeKind::AskSingleCode { candidates, next } => {
                let allowed = self.candidates(session, candidates);
                match answer {
                    [a] if allowed.contains(a) => (vec![a.clone()], *next),
                    [a] => return Err(EngineError::InvalidAnswer(format!("{a} is not among {allowed:?}"))),
                    _ => {
                        return Err(EngineError::InvalidAnswer(format!(
                            "exactly one code expected, got {}",
                            answer.len()
                        )))
                    }
                }
            }
            NodeKind::AskMulticode { candidates, next } => {
                let allowed = self.candidates(session, candidates);
                if answer.is_empty() {
                    return Err(EngineError::InvalidAnswer("at least one code expected".into()));
                }
                for (i, a) in answer.iter().enumerate() {
                    if !allowed.contains(a) {
                        return Err(EngineError::InvalidAnswer(format!("{a} is not among {allowed:?}")));
                    }
                    if answer[..i].contains(a) {
                        return Err(EngineError::InvalidAnswer(format!("{a} given twice")));
                    }
                }
                let chosen = allowed.into_iter().filter(|c| answer.contains(c)).collect();
                (chosen, *next)
            }
            other => {
                return Err(EngineError::TreeDefect(format!(
                    "session waits on non-question node {node} ({})",
                    other.tag()
                )))
            }
        };
        session.history.push(HistoryEntry { node, answer: recorded });
        self.advance(session, next)
    }

    /// The interaction matching the session's present state.
    pub fn current_interaction(&self, session: &SessionState) -> Result<Interaction, EngineError> {
        let node = self.node(session.current)?;
        match session.status {
            SessionStatus::AwaitingAnswer => self.question(session, node),
            SessionStatus::Finished => Ok(Interaction {
                id: session.id.clone(),
                state: node.id,
                message: node.message.clone(),
                kind: InteractionType::Result,
                allowed_answers: None,
                verdict: session.verdict.clone(),
            }),
            SessionStatus::Cancelled => Err(EngineError::SessionFinished(SessionStatus::Cancelled)),
        }
    }

    /// Asked questions, the current one, and the questions still reachable
    /// from it, closed by the final main-condition step.
    pub fn progress(&self, session: &SessionState) -> Vec<ProgressEntry> {
        let label = |id: u32| self.tree.node(id).map(|n| n.message.clone()).unwrap_or_default();
        let mut out: Vec<ProgressEntry> = session
            .history
            .iter()
            .map(|h| ProgressEntry {
                node: Some(h.node),
                label: label(h.node),
                status: ProgressStatus::Done,
            })
            .collect();
        match session.status {
            SessionStatus::AwaitingAnswer => {
                out.push(ProgressEntry {
                    node: Some(session.current),
                    label: label(session.current),
                    status: ProgressStatus::Current,
                });
                for id in self.tree.reachable_asks(session.current) {
                    out.push(ProgressEntry {
                        node: Some(id),
                        label: label(id),
                        status: ProgressStatus::Pending,
                    });
                }
                out.push(ProgressEntry {
                    node: None,
                    label: FINAL_STEP_LABEL.to_string(),
                    status: ProgressStatus::Pending,
                });
            }
            SessionStatus::Finished => out.push(ProgressEntry {
                node: Some(session.current),
                label: label(session.current),
                status: ProgressStatus::Done,
            }),
            SessionStatus::Cancelled => {}
        }
        out
    }

    fn node(&self, id: u32) -> Result<&'a Node, EngineError> {
        self.tree
            .node(id)
            .ok_or_else(|| EngineError::TreeDefect(format!("missing node {id}")))
    }

    fn advance(&self, session: &mut SessionState, mut id: u32) -> Result<Interaction, EngineError> {
        // An acyclic tree enters each node at most once per session.
        for _ in 0..=self.tree.len() {
            let node = self.node(id)?;
            session.current = id;
            session.path.push(id);
            match &node.kind {
                NodeKind::Predicate { predicate, yes, no } => {
                    id = if self.evaluate(session, predicate)? { *yes } else { *no };
                }
                NodeKind::Leaf { verdict } => {
                    let codes = self.verdict(session, verdict);
                    if codes.is_empty() {
                        return Err(EngineError::TreeDefect(format!("leaf {id} yields no code")));
                    }
                    session.status = SessionStatus::Finished;
                    session.verdict = Some(codes);
                    return self.current_interaction(session);
                }
                _ => return self.question(session, node),
            }
        }
        Err(EngineError::TreeDefect("no question or leaf reached; the tree has a cycle".into()))
    }

    fn question(&self, session: &SessionState, node: &Node) -> Result<Interaction, EngineError> {
        let (kind, allowed) = match &node.kind {
            NodeKind::AskBinary { .. } => (
                InteractionType::AskBinary,
                vec![ANSWER_YES.to_string(), ANSWER_NO.to_string()],
            ),
            NodeKind::AskSingleCode { candidates, .. } => {
                (InteractionType::AskSingleCode, self.candidates(session, candidates))
            }
            NodeKind::AskMulticode { candidates, .. } => {
                (InteractionType::AskMulticode, self.candidates(session, candidates))
            }
            other => {
                return Err(EngineError::TreeDefect(format!(
                    "node {} ({}) is not a question",
                    node.id,
                    other.tag()
                )))
            }
        };
        if allowed.is_empty() {
            return Err(EngineError::TreeDefect(format!("node {} offers no candidate", node.id)));
        }
        Ok(Interaction {
            id: session.id.clone(),
            state: node.id,
            message: node.message.clone(),
            kind,
            allowed_answers: Some(allowed),
            verdict: None,
        })
    }

    fn in_chapter(&self, code: &str, chapter: &str) -> bool {
        self.kb.chapter_of(Section::Diagnoses, code) == Some(chapter)
    }

    fn is_pathological(&self, code: &str) -> bool {
        self.kb.get(Section::Diagnoses, code).is_some_and(|n| n.pathological)
    }

    fn has_procedure(&self, session: &SessionState, class: ProcedureClass) -> bool {
        session.pi.iter().any(|p| self.sets.classify(p) == Ok(class))
    }

    fn evaluate(&self, session: &SessionState, call: &PredicateCall) -> Result<bool, EngineError> {
        let arg = |i: usize| {
            call.args
                .get(i)
                .map(String::as_str)
                .ok_or_else(|| EngineError::TreeDefect(format!("{call} is missing an argument")))
        };
        let node_arg = |i: usize| {
            arg(i)?
                .parse::<u32>()
                .map_err(|_| EngineError::TreeDefect(format!("{call} needs a node id")))
        };
        Ok(match call.name.as_str() {
            "pc_count_is_one" => session.pc.len() == 1,
            "any_pc_in_chapter" => {
                let ch = arg(0)?;
                session.pc.iter().any(|c| self.in_chapter(c, ch))
            }
            "chapter_pc_count_is_one" => {
                let ch = arg(0)?;
                session.pc.iter().filter(|c| self.in_chapter(c, ch)).count() == 1
            }
            "pathological_pc_count_is_one" => session.pc.iter().filter(|c| self.is_pathological(c)).count() == 1,
            "has_relevant_surgery" => self.has_procedure(session, ProcedureClass::RelevantSurgery),
            "has_selected_nonrelevant" => self.has_procedure(session, ProcedureClass::SelectedNonRelevant),
            "answer_count_is_one" => session.answers(node_arg(0)?).len() == 1,
            "answer_count_gt_one" => session.answers(node_arg(0)?).len() > 1,
            other => return Err(EngineError::TreeDefect(format!("unknown predicate {other}"))),
        })
    }

    fn candidates(&self, session: &SessionState, rule: &CandidateRule) -> Vec<String> {
        match rule {
            CandidateRule::Pc => session.pc.clone(),
            CandidateRule::PcInChapter { chapter } => self.pc_in_chapter(session, chapter),
            CandidateRule::Answer { node } => session.answers(*node).to_vec(),
            CandidateRule::PcMinusAnswer { node } => {
                let taken = session.answers(*node);
                session.pc.iter().filter(|c| !taken.contains(c)).cloned().collect()
            }
        }
    }

    fn verdict(&self, session: &SessionState, rule: &VerdictRule) -> Vec<String> {
        match rule {
            VerdictRule::OnlyPc if session.pc.len() == 1 => session.pc.clone(),
            VerdictRule::OnlyPc => Vec::new(),
            VerdictRule::PcInChapter { chapter } => self.pc_in_chapter(session, chapter),
            VerdictRule::Answer { node } => session.answers(*node).to_vec(),
            VerdictRule::PathologicalPc => session.pc.iter().filter(|c| self.is_pathological(c)).cloned().collect(),
        }
    }

    fn pc_in_chapter(&self, session: &SessionState, chapter: &str) -> Vec<String> {
        session.pc.iter().filter(|c| self.in_chapter(c, chapter)).cloned().collect()
    }
}
