//! Single-pass line classifier for plain-text screenplays.
//!
//! Grammar, checked in this order for each non-blank line:
//!
//! * scene heading: starts with `INT.`, `EXT.`, `INT./EXT.` or `I/E.`;
//! * transition: uppercase and ends with `TO:`;
//! * character cue: uppercase name (trailing parentheticals ignored), at most
//!   40 characters, no terminal punctuation, and immediately followed by a
//!   non-blank line that is not a scene heading;
//! * dialogue: lines after a cue, up to a blank line or the next
//!   cue, heading or transition;
//! * action: everything else. Adjacent action lines form one paragraph.

use super::names::{normalize_character_name, strip_parentheticals};
use super::{ElementKind, ParseWarning, Parsed, Screenplay, ScreenplayError, ScriptElement};

const HEADING_PREFIXES: [&str; 4] = ["INT.", "EXT.", "INT./EXT.", "I/E."];
const MAX_CUE_CHARS: usize = 40;

pub(crate) fn is_scene_heading(line: &str) -> bool {
    HEADING_PREFIXES.iter().any(|p| line.starts_with(p))
}

fn is_uppercase_text(text: &str) -> bool {
    text.chars().any(char::is_alphabetic) && !text.chars().any(char::is_lowercase)
}

pub(crate) fn is_transition(line: &str) -> bool {
    is_uppercase_text(line) && line.ends_with("TO:")
}

/// Shape test for a cue line, without the look-ahead requirement.
pub(crate) fn looks_like_cue(line: &str) -> bool {
    if line.chars().count() > MAX_CUE_CHARS || line.starts_with('(') {
        return false;
    }
    if line.ends_with(['.', '!', '?', ':']) {
        return false;
    }
    is_uppercase_text(strip_parentheticals(line))
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    Idle,
    Action(usize),
    Cue(usize),
    Dialogue(usize),
}

/// Parses plain screenplay text into ordered [`ScriptElement`]s.
///
/// Line endings are normalized to LF first. A cue that ends up with no
/// dialogue (it is directly followed by another cue or a transition) is kept
/// as an action element and reported in [`Parsed::warnings`].
pub fn parse_screenplay(source_text: &str, film_id: &str) -> Result<Parsed, ScreenplayError> {
    let normalized = source_text.replace("\r\n", "\n").replace('\r', "\n");
    if normalized.trim().is_empty() {
        return Err(ScreenplayError::EmptyInput);
    }
    let lines: Vec<&str> = normalized.split('\n').map(str::trim).collect();

    let is_cue_at = |i: usize| -> bool {
        looks_like_cue(lines[i])
            && lines
                .get(i + 1)
                .is_some_and(|next| !next.is_empty() && !is_scene_heading(next))
    };

    let mut elements: Vec<ScriptElement> = Vec::new();
    let mut warnings = Vec::new();
    let mut scene_index = 0usize;
    let mut mode = Mode::Idle;

    for (i, &line) in lines.iter().enumerate() {
        if line.is_empty() {
            mode = Mode::Idle;
            continue;
        }

        let structural = if is_scene_heading(line) {
            Some(ElementKind::SceneHeading)
        } else if is_transition(line) {
            Some(ElementKind::Transition)
        } else if is_cue_at(i) {
            Some(ElementKind::CharacterCue)
        } else {
            None
        };

        if let Mode::Cue(cue_idx) = mode {
            if structural.is_some() {
                let cue = &mut elements[cue_idx];
                cue.kind = ElementKind::Action;
                warnings.push(ParseWarning {
                    line_index: cue.line_index,
                    message: format!(
                        "character cue `{}` has no dialogue; kept as action",
                        cue.text
                    ),
                });
            }
        }

        match structural {
            Some(ElementKind::SceneHeading) => {
                scene_index += 1;
                push(
                    &mut elements,
                    ElementKind::SceneHeading,
                    line,
                    scene_index,
                    i,
                    None,
                );
                mode = Mode::Idle;
            }
            Some(ElementKind::Transition) => {
                push(
                    &mut elements,
                    ElementKind::Transition,
                    line,
                    scene_index,
                    i,
                    None,
                );
                mode = Mode::Idle;
            }
            Some(_) => {
                push(
                    &mut elements,
                    ElementKind::CharacterCue,
                    line,
                    scene_index,
                    i,
                    None,
                );
                mode = Mode::Cue(elements.len() - 1);
            }
            None => match mode {
                Mode::Cue(cue_idx) => {
                    let speaker = normalize_character_name(&elements[cue_idx].text)?;
                    push(
                        &mut elements,
                        ElementKind::Dialogue,
                        line,
                        scene_index,
                        i,
                        Some(speaker),
                    );
                    mode = Mode::Dialogue(elements.len() - 1);
                }
                Mode::Dialogue(idx) | Mode::Action(idx) => append(&mut elements[idx], line),
                Mode::Idle => {
                    push(
                        &mut elements,
                        ElementKind::Action,
                        line,
                        scene_index,
                        i,
                        None,
                    );
                    mode = Mode::Action(elements.len() - 1);
                }
            },
        }
    }

    Ok(Parsed {
        screenplay: Screenplay::from_elements(film_id, elements),
        warnings,
    })
}

fn push(
    elements: &mut Vec<ScriptElement>,
    kind: ElementKind,
    text: &str,
    scene_index: usize,
    line_index: usize,
    speaker: Option<String>,
) {
    elements.push(ScriptElement {
        kind,
        text: text.to_string(),
        scene_index,
        line_index,
        speaker,
    });
}

fn append(element: &mut ScriptElement, line: &str) {
    element.text.push(' ');
    element.text.push_str(line);
}
