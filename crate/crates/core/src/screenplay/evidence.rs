use serde::{Deserialize, Serialize};

use super::{ElementKind, Screenplay, ScreenplayError};

/// Narrative evidence for one character, in script order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterEvidence {
    pub character: String,
    pub dialogue_lines: Vec<(usize, String)>,
    pub action_mentions: Vec<(usize, String)>,
}

impl CharacterEvidence {
    pub fn len(&self) -> usize {
        self.dialogue_lines.len() + self.action_mentions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Case-insensitive whole-word match of `alias` in `text`.
///
/// A match must not be preceded or followed by an alphanumeric character, so
/// `Ann` does not match `Anniversary` but does match `Ann's`.
pub fn mentions_alias(text: &str, alias: &str) -> bool {
    let alias: Vec<char> = alias.trim().chars().flat_map(char::to_lowercase).collect();
    if alias.is_empty() {
        return false;
    }
    let hay: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    if hay.len() < alias.len() {
        return false;
    }
    (0..=hay.len() - alias.len()).any(|start| {
        let end = start + alias.len();
        hay[start..end] == alias[..]
            && (start == 0 || !hay[start - 1].is_alphanumeric())
            && (end == hay.len() || !hay[end].is_alphanumeric())
    })
}

/// Collects the dialogue spoken by `character` and the action blocks that
/// mention any of `aliases`.
pub fn extract_character_evidence<S: AsRef<str>>(
    screenplay: &Screenplay,
    character: &str,
    aliases: &[S],
) -> Result<CharacterEvidence, ScreenplayError> {
    let mut dialogue_lines = Vec::new();
    let mut action_mentions = Vec::new();
    for element in &screenplay.elements {
        match element.kind {
            ElementKind::Dialogue if element.speaker.as_deref() == Some(character) => {
                dialogue_lines.push((element.line_index, element.text.clone()));
            }
            ElementKind::Action
                if aliases
                    .iter()
                    .any(|a| mentions_alias(&element.text, a.as_ref())) =>
            {
                action_mentions.push((element.line_index, element.text.clone()));
            }
            _ => {}
        }
    }
    let evidence = CharacterEvidence {
        character: character.to_string(),
        dialogue_lines,
        action_mentions,
    };
    if evidence.is_empty() {
        return Err(ScreenplayError::UnknownCharacter(character.to_string()));
    }
    Ok(evidence)
}
