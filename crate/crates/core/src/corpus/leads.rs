use std::collections::BTreeSet;

use super::{decade_of, CharacterIdentity, FilmMetadata};
use crate::screenplay::{normalize_character_name, Screenplay};

/// Top-billed actors considered per film.
pub const DEFAULT_MAX_LEADS: usize = 5;

#[derive(Debug, Clone, Default)]
pub struct LeadResolution {
    pub leads: Vec<CharacterIdentity>,
    pub diagnostics: Vec<String>,
}

fn name_tokens(name: &str) -> BTreeSet<String> {
    name.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_uppercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn match_cue(credited: &str, cues: &BTreeSet<String>) -> Result<String, String> {
    let normalized = normalize_character_name(credited).map_err(|e| e.to_string())?;
    if cues.contains(&normalized) {
        return Ok(normalized);
    }
    let wanted = name_tokens(&normalized);
    let hits: Vec<&String> = cues
        .iter()
        .filter(|cue| !name_tokens(cue).is_disjoint(&wanted))
        .collect();
    match hits.as_slice() {
        [single] => Ok((*single).clone()),
        [] => Err(format!("no cue matches `{credited}`")),
        many => Err(format!(
            "`{credited}` is ambiguous between {}",
            many.iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )),
    }
}

/// Maps the first `max_leads` credited actors onto screenplay cues.
///
/// Matching is exact on the normalized name first, then falls back to the
/// unique cue sharing a name token (`Det. Reed` finds `REED`). Actors that do
/// not match, match ambiguously, or have unknown gender are skipped with a
/// diagnostic.
pub fn resolve_lead_characters(
    metadata: &FilmMetadata,
    screenplay: &Screenplay,
    max_leads: usize,
) -> LeadResolution {
    let mut out = LeadResolution::default();
    let decade = match decade_of(metadata.release_year) {
        Ok(d) => d,
        Err(e) => {
            out.diagnostics.push(format!("{}: {e}", metadata.film_id));
            return out;
        }
    };
    let mut taken = BTreeSet::new();
    for actor in metadata.credited_actors.iter().take(max_leads) {
        let skip = |why: String| {
            format!(
                "{}: skipped {} ({}): {why}",
                metadata.film_id, actor.actor_name, actor.character_name
            )
        };
        let Some(gender) = actor.gender.known() else {
            out.diagnostics.push(skip("unknown gender".into()));
            continue;
        };
        let character = match match_cue(&actor.character_name, &screenplay.character_cues) {
            Ok(c) => c,
            Err(why) => {
                out.diagnostics.push(skip(why));
                continue;
            }
        };
        if !taken.insert(character.clone()) {
            out.diagnostics.push(skip(format!(
                "cue {character} already assigned to a higher-billed actor"
            )));
            continue;
        }
        let age_at_release = actor
            .birth_year
            .filter(|&b| b <= metadata.release_year)
            .map(|b| (metadata.release_year - b) as u32);
        out.leads.push(CharacterIdentity {
            film_id: metadata.film_id.clone(),
            character,
            gender,
            age_at_release,
            decade,
            credited_as: actor.character_name.clone(),
        });
    }
    for d in &out.diagnostics {
        log::info!("{d}");
    }
    out
}
