use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::{decade_of, CorpusError, Decade, FilmMetadata};
use crate::seed::stream_rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Shortfall {
    pub decade: Decade,
    pub requested: usize,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampleOutcome {
    pub film_ids: Vec<String>,
    pub shortfalls: Vec<Shortfall>,
    /// Films dropped because their release year is outside the study window.
    pub out_of_window: Vec<String>,
}

/// Draws up to `per_decade` films from each decade, round-robin across genre
/// buckets (first listed genre) so no single genre dominates a decade.
///
/// The result depends only on the set of films, the quota and the seed; the
/// input order does not matter.
pub fn stratified_sample(
    films: &[FilmMetadata],
    per_decade: usize,
    seed: u64,
) -> Result<SampleOutcome, CorpusError> {
    if per_decade == 0 {
        return Err(CorpusError::InvalidQuota);
    }
    if films.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }

    let mut by_decade: BTreeMap<Decade, BTreeMap<&str, Vec<&FilmMetadata>>> = BTreeMap::new();
    let mut out_of_window = Vec::new();
    for film in films {
        match decade_of(film.release_year) {
            Ok(d) => by_decade
                .entry(d)
                .or_default()
                .entry(film.genre_bucket())
                .or_default()
                .push(film),
            Err(_) => out_of_window.push(film.film_id.clone()),
        }
    }
    out_of_window.sort();
    if by_decade.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }

    let mut film_ids = Vec::new();
    let mut shortfalls = Vec::new();
    for decade in Decade::ALL {
        let mut buckets: Vec<Vec<&FilmMetadata>> = by_decade
            .remove(&decade)
            .unwrap_or_default()
            .into_values()
            .collect();
        let mut rng = stream_rng(seed, &format!("sample/{decade}"));
        for bucket in &mut buckets {
            bucket.sort_by(|a, b| a.film_id.cmp(&b.film_id));
            bucket.shuffle(&mut rng);
            bucket.reverse(); // pop() takes from the shuffled front
        }
        let available: usize = buckets.iter().map(Vec::len).sum();
        let mut taken = 0;
        while taken < per_decade && buckets.iter().any(|b| !b.is_empty()) {
            for bucket in &mut buckets {
                if taken == per_decade {
                    break;
                }
                if let Some(film) = bucket.pop() {
                    film_ids.push(film.film_id.clone());
                    taken += 1;
                }
            }
        }
        if taken < per_decade {
            shortfalls.push(Shortfall {
                decade,
                requested: per_decade,
                available,
            });
        }
    }

    Ok(SampleOutcome {
        film_ids,
        shortfalls,
        out_of_window,
    })
}
