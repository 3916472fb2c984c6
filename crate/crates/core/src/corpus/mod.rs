//! Film metadata, lead-character resolution and decade/genre sampling.

mod leads;
mod omdb;
mod sample;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use leads::{resolve_lead_characters, LeadResolution, DEFAULT_MAX_LEADS};
pub use omdb::{
    fetch_film_metadata, fetch_many, film_from_omdb, MetadataClient, MetadataError,
    OMDB_ENDPOINT_ENV, OMDB_KEY_ENV,
};
pub use sample::{stratified_sample, SampleOutcome, Shortfall};

pub const STUDY_START: i32 = 1990;
pub const STUDY_END: i32 = 2019;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("year {0} is outside the 1990-2019 study window")]
    OutOfWindow(i32),
    #[error("no films to sample from")]
    EmptyCorpus,
    #[error("per-decade quota must be at least 1")]
    InvalidQuota,
    #[error("unknown decade label `{0}`")]
    BadDecade(String),
    #[error("reading metadata file {path}: {source}")]
    MetadataFile {
        path: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Decade {
    #[serde(rename = "1990s")]
    Nineties,
    #[serde(rename = "2000s")]
    Noughties,
    #[serde(rename = "2010s")]
    Tens,
}

impl Decade {
    pub const ALL: [Decade; 3] = [Decade::Nineties, Decade::Noughties, Decade::Tens];

    pub fn label(self) -> &'static str {
        match self {
            Decade::Nineties => "1990s",
            Decade::Noughties => "2000s",
            Decade::Tens => "2010s",
        }
    }
}

impl fmt::Display for Decade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Decade {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Decade::ALL
            .into_iter()
            .find(|d| d.label() == s)
            .ok_or_else(|| CorpusError::BadDecade(s.to_string()))
    }
}

pub fn decade_of(year: i32) -> Result<Decade, CorpusError> {
    match year {
        1990..=1999 => Ok(Decade::Nineties),
        2000..=2009 => Ok(Decade::Noughties),
        2010..=2019 => Ok(Decade::Tens),
        _ => Err(CorpusError::OutOfWindow(year)),
    }
}

/// Gender of a character admitted to analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
}

impl Gender {
    pub fn label(self) -> &'static str {
        match self {
            Gender::F => "F",
            Gender::M => "M",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "F" | "f" => Ok(Gender::F),
            "M" | "m" => Ok(Gender::M),
            other => Err(format!("unknown gender `{other}` (expected F or M)")),
        }
    }
}

/// Gender as recorded for a credited actor; may be unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum CastGender {
    F,
    M,
    #[default]
    #[serde(rename = "unknown")]
    Unknown,
}

impl CastGender {
    pub fn known(self) -> Option<Gender> {
        match self {
            CastGender::F => Some(Gender::F),
            CastGender::M => Some(Gender::M),
            CastGender::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreditedActor {
    pub actor_name: String,
    #[serde(default)]
    pub character_name: String,
    #[serde(default)]
    pub gender: CastGender,
    #[serde(default)]
    pub birth_year: Option<i32>,
}

/// Film-level metadata. `credited_actors` is in billing order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilmMetadata {
    pub film_id: String,
    pub title: String,
    pub release_year: i32,
    #[serde(default)]
    pub genres: Vec<String>,
    #[serde(default)]
    pub credited_actors: Vec<CreditedActor>,
    #[serde(default)]
    pub imdb_votes: Option<u64>,
}

impl FilmMetadata {
    /// Bucket used for genre stratification: the first listed genre.
    pub fn genre_bucket(&self) -> &str {
        self.genres.first().map(String::as_str).unwrap_or("Unknown")
    }

    pub fn in_window(&self) -> bool {
        decade_of(self.release_year).is_ok()
    }

    /// Fills genres and vote counts missing locally from a fetched record.
    /// Year and cast always stay local: the remote record has no character
    /// names or genders. Returns true if anything changed.
    pub fn enrich_from(&mut self, fetched: &FilmMetadata) -> bool {
        let mut changed = false;
        if self.genres.is_empty() && !fetched.genres.is_empty() {
            self.genres = fetched.genres.clone();
            changed = true;
        }
        if self.imdb_votes.is_none() && fetched.imdb_votes.is_some() {
            self.imdb_votes = fetched.imdb_votes;
            changed = true;
        }
        changed
    }

    pub fn needs_enrichment(&self) -> bool {
        self.genres.is_empty() || self.imdb_votes.is_none()
    }
}

/// Loads a local metadata override file (a JSON array of [`FilmMetadata`]).
pub fn load_metadata_file(path: &Path) -> Result<Vec<FilmMetadata>, CorpusError> {
    let wrap = |e: Box<dyn std::error::Error + Send + Sync>| CorpusError::MetadataFile {
        path: path.display().to_string(),
        source: e,
    };
    let text = std::fs::read_to_string(path).map_err(|e| wrap(e.into()))?;
    let films: Vec<FilmMetadata> = serde_json::from_str(&text).map_err(|e| wrap(e.into()))?;
    let mut seen = BTreeSet::new();
    for film in &films {
        if !seen.insert(film.film_id.as_str()) {
            return Err(wrap(format!("duplicate film_id `{}`", film.film_id).into()));
        }
    }
    Ok(films)
}

/// A lead character admitted to analysis, with demographic proxies taken
/// from the credited actor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterIdentity {
    pub film_id: String,
    pub character: String,
    pub gender: Gender,
    pub age_at_release: Option<u32>,
    pub decade: Decade,
    /// Character name as credited in the metadata, used as an extra alias.
    #[serde(default)]
    pub credited_as: String,
}

impl CharacterIdentity {
    pub fn agent_id(&self) -> String {
        format!("{}/{}", self.film_id, self.character)
    }

    /// Names used to find the character in scene descriptions.
    pub fn aliases(&self) -> Vec<String> {
        let mut aliases = vec![self.character.clone()];
        let credited = self.credited_as.trim();
        if !credited.is_empty() && !credited.eq_ignore_ascii_case(&self.character) {
            aliases.push(credited.to_string());
        }
        aliases
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decade_boundaries() {
        assert_eq!(decade_of(1990).unwrap(), Decade::Nineties);
        assert_eq!(decade_of(1999).unwrap(), Decade::Nineties);
        assert_eq!(decade_of(2000).unwrap(), Decade::Noughties);
        assert_eq!(decade_of(2009).unwrap(), Decade::Noughties);
        assert_eq!(decade_of(2010).unwrap(), Decade::Tens);
        assert_eq!(decade_of(2019).unwrap(), Decade::Tens);
        assert!(matches!(
            decade_of(1989),
            Err(CorpusError::OutOfWindow(1989))
        ));
        assert!(matches!(
            decade_of(2020),
            Err(CorpusError::OutOfWindow(2020))
        ));
    }

    #[test]
    fn decade_partitions_window() {
        let mut counts = [0; 3];
        for year in STUDY_START..=STUDY_END {
            let d = decade_of(year).unwrap();
            counts[Decade::ALL.iter().position(|x| *x == d).unwrap()] += 1;
            assert_eq!(d.label()[..3], year.to_string()[..3]);
        }
        assert_eq!(counts, [10, 10, 10]);
    }

    #[test]
    fn labels_round_trip() {
        for d in Decade::ALL {
            assert_eq!(d.label().parse::<Decade>().unwrap(), d);
            assert_eq!(
                serde_json::to_string(&d).unwrap(),
                format!("\"{}\"", d.label())
            );
        }
    }

    #[test]
    fn enrichment_fills_gaps_only() {
        let mut local: FilmMetadata =
            serde_json::from_str(r#"{"film_id": "heat", "title": "Heat", "release_year": 1995}"#)
                .unwrap();
        assert!(local.needs_enrichment());
        let fetched = FilmMetadata {
            film_id: "tt0113277".into(),
            title: "Heat".into(),
            release_year: 1996,
            genres: vec!["Crime".into()],
            credited_actors: vec![CreditedActor {
                actor_name: "A".into(),
                character_name: String::new(),
                gender: CastGender::Unknown,
                birth_year: None,
            }],
            imdb_votes: Some(10),
        };
        assert!(local.enrich_from(&fetched));
        assert_eq!(local.genres, vec!["Crime"]);
        assert_eq!(local.imdb_votes, Some(10));
        assert_eq!(local.release_year, 1995);
        assert_eq!(local.film_id, "heat");
        assert!(local.credited_actors.is_empty());
        assert!(!local.needs_enrichment());
        assert!(!local.enrich_from(&fetched));
    }

    #[test]
    fn cast_gender_json() {
        let actor: CreditedActor = serde_json::from_str(
            r#"{"actor_name": "A", "character_name": "B", "gender": "unknown"}"#,
        )
        .unwrap();
        assert_eq!(actor.gender, CastGender::Unknown);
        assert_eq!(actor.birth_year, None);
    }
}
