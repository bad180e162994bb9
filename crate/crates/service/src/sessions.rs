//! Live decision sessions, idle expiry and the optional append-only
//! journal that lets sessions survive a restart.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use sisco_core::engine::{DecisionEngine, EngineError, Interaction, SessionState, SessionStatus};

use crate::error::ApiError;

/// One journal line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum JournalEvent {
    Start {
        id: String,
        pc: Vec<String>,
        pi: Vec<String>,
        at: u64,
    },
    Answer {
        id: String,
        state: u32,
        answer: Vec<String>,
        at: u64,
    },
    Cancel {
        id: String,
        at: u64,
    },
}

fn unix_secs(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug)]
struct Entry {
    state: SessionState,
    touched: SystemTime,
}

#[derive(Debug)]
pub struct SessionStore {
    sessions: HashMap<String, Entry>,
    ttl: Duration,
    journal: Option<File>,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        SessionStore {
            sessions: HashMap::new(),
            ttl,
            journal: None,
        }
    }

    /// Replays `path` (if it exists) and keeps appending to it.
    pub fn with_journal(
        ttl: Duration,
        path: &Path,
        engine: &DecisionEngine<'_>,
        now: SystemTime,
    ) -> io::Result<(Self, ReplayReport)> {
        let mut store = Self::new(ttl);
        let mut report = ReplayReport::default();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let outcome = serde_json::from_str::<JournalEvent>(&line)
                    .map_err(|e| e.to_string())
                    .and_then(|event| store.apply(engine, event).map_err(|e| e.message));
                match outcome {
                    Ok(()) => report.applied += 1,
                    Err(reason) => report.skipped.push((i + 1, reason)),
                }
            }
            store.sweep(now);
        }
        store.journal = Some(OpenOptions::new().create(true).append(true).open(path)?);
        Ok((store, report))
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Idle live sessions past the TTL are cancelled; terminal ones idle
    /// for twice the TTL are dropped.
    pub fn sweep(&mut self, now: SystemTime) {
        let ttl = self.ttl;
        self.sessions.retain(|_, entry| {
            let idle = now.duration_since(entry.touched).unwrap_or_default();
            if idle > ttl && entry.state.status == SessionStatus::AwaitingAnswer {
                entry.state.status = SessionStatus::Cancelled;
            }
            idle <= ttl.saturating_mul(2)
        });
    }

    fn record(&mut self, event: &JournalEvent) -> Result<(), ApiError> {
        let Some(file) = self.journal.as_mut() else { return Ok(()) };
        let mut line = serde_json::to_string(event).expect("journal events serialize");
        line.push('\n');
        file.write_all(line.as_bytes())
            .and_then(|()| file.flush())
            .map_err(|e| ApiError::new(axum::http::StatusCode::INTERNAL_SERVER_ERROR, "JournalError", e.to_string()))
    }

    fn apply(&mut self, engine: &DecisionEngine<'_>, event: JournalEvent) -> Result<(), ApiError> {
        match event {
            JournalEvent::Start { id, pc, pi, at } => {
                let (state, _) = engine.start_session(id.clone(), &pc, &pi)?;
                self.insert(state, at);
            }
            JournalEvent::Answer { id, state, answer, at } => {
                let entry = self.sessions.get_mut(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
                engine.answer(&mut entry.state, state, &answer)?;
                entry.touched = UNIX_EPOCH + Duration::from_secs(at);
            }
            JournalEvent::Cancel { id, at } => {
                let entry = self.sessions.get_mut(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
                entry.state.cancel()?;
                entry.touched = UNIX_EPOCH + Duration::from_secs(at);
            }
        }
        Ok(())
    }

    fn insert(&mut self, state: SessionState, at: u64) {
        self.sessions.insert(
            state.id.clone(),
            Entry {
                state,
                touched: UNIX_EPOCH + Duration::from_secs(at),
            },
        );
    }

    pub fn start(
        &mut self,
        engine: &DecisionEngine<'_>,
        id: String,
        pc: &[String],
        pi: &[String],
        now: SystemTime,
    ) -> Result<Interaction, ApiError> {
        self.sweep(now);
        let (state, interaction) = engine.start_session(id.clone(), pc, pi)?;
        self.record(&JournalEvent::Start {
            id,
            pc: pc.to_vec(),
            pi: pi.to_vec(),
            at: unix_secs(now),
        })?;
        self.sessions.insert(state.id.clone(), Entry { state, touched: now });
        Ok(interaction)
    }

    pub fn answer(
        &mut self,
        engine: &DecisionEngine<'_>,
        id: &str,
        state: u32,
        answer: &[String],
        now: SystemTime,
    ) -> Result<Interaction, ApiError> {
        self.sweep(now);
        let entry = self.sessions.get_mut(id).ok_or_else(|| ApiError::session_not_found(id))?;
        let mut next = entry.state.clone();
        let interaction = engine.answer(&mut next, state, answer)?;
        self.record(&JournalEvent::Answer {
            id: id.to_string(),
            state,
            answer: answer.to_vec(),
            at: unix_secs(now),
        })?;
        let entry = self.sessions.get_mut(id).expect("checked above");
        entry.state = next;
        entry.touched = now;
        Ok(interaction)
    }

    pub fn cancel(&mut self, id: &str, now: SystemTime) -> Result<(), ApiError> {
        self.sweep(now);
        let entry = self.sessions.get_mut(id).ok_or_else(|| ApiError::session_not_found(id))?;
        if entry.state.status != SessionStatus::AwaitingAnswer {
            return Err(EngineError::SessionFinished(entry.state.status).into());
        }
        self.record(&JournalEvent::Cancel {
            id: id.to_string(),
            at: unix_secs(now),
        })?;
        let entry = self.sessions.get_mut(id).expect("checked above");
        entry.state.cancel()?;
        entry.touched = now;
        Ok(())
    }

    pub fn get(&mut self, id: &str, now: SystemTime) -> Result<SessionState, ApiError> {
        self.sweep(now);
        self.sessions
            .get(id)
            .map(|e| e.state.clone())
            .ok_or_else(|| ApiError::session_not_found(id))
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub applied: usize,
    /// `(line, reason)` of journal lines that no longer apply.
    pub skipped: Vec<(usize, String)>,
}
