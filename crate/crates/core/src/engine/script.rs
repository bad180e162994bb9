use serde::Serialize;
use thiserror::Error;

use super::{DecisionEngine, EngineError, Interaction, SessionState};

/// Every interaction of a scripted session, in order, with the answers
/// given in between.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transcript {
    pub pc: Vec<String>,
    pub pi: Vec<String>,
    pub steps: Vec<TranscriptStep>,
    pub verdict: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptStep {
    pub interaction: Interaction,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("session could not start: {0}")]
    Start(EngineError),
    /// `step` is the 1-based index of the offending scripted answer.
    #[error("step {step} (node {node}): {error}")]
    Answer { step: usize, node: u32, error: EngineError },
    #[error("script ended after {given} answers but the session still waits at node {node}")]
    Exhausted { given: usize, node: u32 },
    #[error("{extra} scripted answers left after the session finished")]
    Leftover { extra: usize },
}

/// Runs a session to the end, feeding `answers` in order.
pub fn run_scripted(
    engine: &DecisionEngine<'_>,
    id: &str,
    pc: &[String],
    pi: &[String],
    answers: &[Vec<String>],
) -> Result<(Transcript, SessionState), ScriptError> {
    let (mut session, first) = engine.start_session(id, pc, pi).map_err(ScriptError::Start)?;
    let mut steps = vec![TranscriptStep {
        interaction: first,
        answer: None,
    }];
    let mut given = 0;
    while session.verdict.is_none() {
        let Some(answer) = answers.get(given) else {
            return Err(ScriptError::Exhausted {
                given,
                node: session.current,
            });
        };
        let node = session.current;
        let next = engine.answer(&mut session, node, answer).map_err(|error| ScriptError::Answer {
            step: given + 1,
            node,
            error,
        })?;
        given += 1;
        if let Some(last) = steps.last_mut() {
            last.answer = Some(answer.clone());
        }
        steps.push(TranscriptStep {
            interaction: next,
            answer: None,
        });
    }
    if given < answers.len() {
        return Err(ScriptError::Leftover {
            extra: answers.len() - given,
        });
    }
    Ok((
        Transcript {
            pc: session.pc.clone(),
            pi: session.pi.clone(),
            steps,
            verdict: session.verdict.clone(),
        },
        session,
    ))
}
