//! Character agents: identity metadata plus a chronological memory bank.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CharacterIdentity;
use crate::screenplay::CharacterEvidence;
use crate::support::{file_stem, write_json_atomic};

/// Agents with fewer memory nodes than this are not surveyed.
pub const DEFAULT_MIN_MEMORY: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("no dialogue lines or action mentions for {0}")]
    EmptyEvidence(String),
    #[error("invalid agent {agent}: {reason}")]
    InvariantViolation { agent: String, reason: String },
    #[error("agent store: {0}")]
    Io(#[from] std::io::Error),
    #[error("agent store: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemoryKind {
    Dialogue,
    Action,
}

impl fmt::Display for MemoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemoryKind::Dialogue => "Dialogue",
            MemoryKind::Action => "Action",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryNode {
    pub kind: MemoryKind,
    pub text: String,
    pub sequence_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterAgent {
    pub identity: CharacterIdentity,
    /// Release year of the film.
    pub time_period: i32,
    pub memory: Vec<MemoryNode>,
}

impl CharacterAgent {
    pub fn id(&self) -> String {
        self.identity.agent_id()
    }

    pub fn count(&self, kind: MemoryKind) -> usize {
        self.memory.iter().filter(|m| m.kind == kind).count()
    }

    /// Name, age and time period, one per line. Gender is left out.
    pub fn metadata_block(&self) -> String {
        let age = match self.identity.age_at_release {
            Some(a) => a.to_string(),
            None => "unknown".to_string(),
        };
        format!(
            "Name: {}\nAge: {age}\nTime period: {}",
            self.identity.character, self.time_period
        )
    }
}

/// Merges dialogue and action evidence by script position into one stream.
pub fn build_memory_bank(evidence: &CharacterEvidence) -> Result<Vec<MemoryNode>, AgentError> {
    if evidence.is_empty() {
        return Err(AgentError::EmptyEvidence(evidence.character.clone()));
    }
    let mut merged: Vec<(usize, MemoryKind, &str)> = evidence
        .dialogue_lines
        .iter()
        .map(|(i, t)| (*i, MemoryKind::Dialogue, t.as_str()))
        .chain(
            evidence
                .action_mentions
                .iter()
                .map(|(i, t)| (*i, MemoryKind::Action, t.as_str())),
        )
        .collect();
    merged.sort_by_key(|(line, _, _)| *line);
    Ok(merged
        .into_iter()
        .enumerate()
        .map(|(sequence_index, (_, kind, text))| MemoryNode {
            kind,
            text: text.to_string(),
            sequence_index,
        })
        .collect())
}

pub fn build_agent(
    identity: CharacterIdentity,
    release_year: i32,
    memory: Vec<MemoryNode>,
) -> Result<CharacterAgent, AgentError> {
    let violation = |reason: String| AgentError::InvariantViolation {
        agent: identity.agent_id(),
        reason,
    };
    if identity.film_id.is_empty() || identity.character.is_empty() {
        return Err(violation("identity is incomplete".into()));
    }
    if memory.is_empty() {
        return Err(violation("memory bank is empty".into()));
    }
    for pair in memory.windows(2) {
        if pair[1].sequence_index <= pair[0].sequence_index {
            return Err(violation(format!(
                "sequence index {} follows {} (must be strictly increasing)",
                pair[1].sequence_index, pair[0].sequence_index
            )));
        }
    }
    if let Some(node) = memory.iter().find(|m| m.text.trim().is_empty()) {
        return Err(violation(format!(
            "memory node {} has empty text",
            node.sequence_index
        )));
    }
    Ok(CharacterAgent {
        identity,
        time_period: release_year,
        memory,
    })
}

/// On-disk layout `agents/<film_id>/<character>.json`.
#[derive(Debug, Clone)]
pub struct AgentStore {
    root: PathBuf,
}

impl AgentStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        AgentStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn file(&self, film_id: &str, character: &str, suffix: &str) -> PathBuf {
        self.root
            .join(file_stem(film_id))
            .join(format!("{}{suffix}", file_stem(character)))
    }

    pub fn agent_path(&self, film_id: &str, character: &str) -> PathBuf {
        self.file(film_id, character, ".json")
    }

    pub fn reflections_path(&self, film_id: &str, character: &str) -> PathBuf {
        self.file(film_id, character, ".reflections.json")
    }

    pub fn save(&self, agent: &CharacterAgent) -> Result<(), AgentError> {
        let path = self.agent_path(&agent.identity.film_id, &agent.identity.character);
        write_json_atomic(&path, agent)?;
        Ok(())
    }

    pub fn load(&self, film_id: &str, character: &str) -> Result<CharacterAgent, AgentError> {
        let text = std::fs::read_to_string(self.agent_path(film_id, character))?;
        Ok(serde_json::from_str(&text)?)
    }
}
