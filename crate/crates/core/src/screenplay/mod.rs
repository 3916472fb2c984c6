//! Screenplay parsing and per-character evidence extraction.
//!
//! Two input paths produce the same [`Screenplay`] structure:
//!
//! * raw screenplay text, classified line by line with conventional
//!   formatting rules (see [`parse_screenplay`]);
//! * pre-tagged JSON where dialogue and scene descriptions are already
//!   separated (see [`parse_tagged`]).
//!
//! Evidence for one character is then pulled out with
//! [`extract_character_evidence`]: every line the character speaks plus every
//! action block that names them.

mod evidence;
mod names;
mod raw;
mod tagged;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use evidence::{extract_character_evidence, mentions_alias, CharacterEvidence};
pub use names::normalize_character_name;
pub use raw::parse_screenplay;
pub use tagged::parse_tagged;

#[derive(Debug, thiserror::Error)]
pub enum ScreenplayError {
    #[error("screenplay source is empty")]
    EmptyInput,
    #[error("character cue `{0}` is empty after normalization")]
    EmptyAfterNormalization(String),
    #[error("character `{0}` has no dialogue and no action mentions")]
    UnknownCharacter(String),
    #[error("tagged screenplay {location}: {message}")]
    Tagged { location: String, message: String },
    #[error("tagged screenplay is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    SceneHeading,
    Action,
    CharacterCue,
    Dialogue,
    Transition,
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One classified block of a screenplay.
///
/// Consecutive lines of the same action paragraph or the same speech are
/// merged into one element; `line_index` is the 0-based source line where
/// the block starts and `text` joins its lines with single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptElement {
    pub kind: ElementKind,
    pub text: String,
    pub scene_index: usize,
    pub line_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screenplay {
    pub film_id: String,
    pub elements: Vec<ScriptElement>,
    pub character_cues: BTreeSet<String>,
}

impl Screenplay {
    /// Builds a screenplay, deriving `character_cues` from the dialogue speakers.
    pub fn from_elements(film_id: impl Into<String>, elements: Vec<ScriptElement>) -> Self {
        let character_cues = elements
            .iter()
            .filter(|e| e.kind == ElementKind::Dialogue)
            .filter_map(|e| e.speaker.clone())
            .collect();
        Screenplay {
            film_id: film_id.into(),
            elements,
            character_cues,
        }
    }

    pub fn count(&self, kind: ElementKind) -> usize {
        self.elements.iter().filter(|e| e.kind == kind).count()
    }
}

/// A recoverable problem found while parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub line_index: usize,
    pub message: String,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line_index + 1, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parsed {
    pub screenplay: Screenplay,
    pub warnings: Vec<ParseWarning>,
}
