use super::ScreenplayError;

/// Canonical form of a character cue: trailing parentheticals such as
/// `(V.O.)`, `(O.S.)` or `(CONT'D)` removed, whitespace collapsed, uppercased.
///
/// Any trailing group matching `\(.*\)$` is stripped, so unknown decorations
/// like `(into phone)` are handled the same way as the common extensions.
pub fn normalize_character_name(cue_text: &str) -> Result<String, ScreenplayError> {
    let trimmed = cue_text.trim();
    let name = strip_parentheticals(trimmed);
    let canonical = name
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_uppercase();
    if canonical.is_empty() {
        return Err(ScreenplayError::EmptyAfterNormalization(
            cue_text.to_string(),
        ));
    }
    Ok(canonical)
}

pub(crate) fn strip_parentheticals(text: &str) -> &str {
    if text.ends_with(')') {
        if let Some(open) = text.find('(') {
            return text[..open].trim_end();
        }
    }
    text
}
