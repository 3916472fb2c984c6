use serde::Deserialize;
use serde_json::Value;

use super::names::normalize_character_name;
use super::{ElementKind, Parsed, Screenplay, ScreenplayError, ScriptElement};

#[derive(Deserialize)]
struct TaggedDocument {
    film_id: String,
    scenes: Vec<TaggedScene>,
}

#[derive(Deserialize)]
struct TaggedScene {
    heading: String,
    elements: Vec<Value>,
}

fn tagged_err(location: String, message: impl Into<String>) -> ScreenplayError {
    ScreenplayError::Tagged {
        location,
        message: message.into(),
    }
}

fn required_str<'a>(
    element: &'a Value,
    field: &str,
    location: &str,
) -> Result<&'a str, ScreenplayError> {
    match element.get(field).and_then(Value::as_str) {
        Some(s) if !s.trim().is_empty() => Ok(s.trim()),
        _ => Err(tagged_err(
            location.to_string(),
            format!("missing or empty `{field}`"),
        )),
    }
}

/// Parses a pre-tagged screenplay document.
///
/// Each scene contributes a heading element; each dialogue entry becomes a
/// cue element followed by its dialogue element. `line_index` is the ordinal
/// position of the element in the document since there are no source lines.
pub fn parse_tagged(json: &str) -> Result<Parsed, ScreenplayError> {
    if json.trim().is_empty() {
        return Err(ScreenplayError::EmptyInput);
    }
    let doc: TaggedDocument = serde_json::from_str(json)?;
    let mut elements = Vec::new();
    let mut next_index = 0usize;
    let mut push = |kind, text: &str, scene_index, speaker: Option<String>| {
        elements.push(ScriptElement {
            kind,
            text: text.to_string(),
            scene_index,
            line_index: next_index,
            speaker,
        });
        next_index += 1;
    };

    for (s, scene) in doc.scenes.iter().enumerate() {
        let scene_index = s + 1;
        let heading = scene.heading.trim();
        if heading.is_empty() {
            return Err(tagged_err(format!("scenes[{s}]"), "empty heading"));
        }
        push(ElementKind::SceneHeading, heading, scene_index, None);

        for (e, element) in scene.elements.iter().enumerate() {
            let location = format!("scenes[{s}].elements[{e}]");
            let kind = element
                .get("type")
                .and_then(Value::as_str)
                .ok_or_else(|| tagged_err(location.clone(), "missing `type`"))?;
            match kind {
                "dialogue" => {
                    let character = required_str(element, "character", &location)?;
                    let text = required_str(element, "text", &location)?;
                    let speaker = normalize_character_name(character)?;
                    push(ElementKind::CharacterCue, character, scene_index, None);
                    push(ElementKind::Dialogue, text, scene_index, Some(speaker));
                }
                "action" => {
                    let text = required_str(element, "text", &location)?;
                    push(ElementKind::Action, text, scene_index, None);
                }
                other => {
                    return Err(tagged_err(
                        location,
                        format!("unknown element type `{other}`"),
                    ));
                }
            }
        }
    }

    Ok(Parsed {
        screenplay: Screenplay::from_elements(doc.film_id, elements),
        warnings: Vec::new(),
    })
}
