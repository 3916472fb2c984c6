//! OMDb-style metadata client with an on-disk response cache.
//!
//! Cached responses are authoritative: when a cache file exists for a
//! (title, year) pair no request is made, which keeps repeated runs
//! reproducible offline.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;

use super::{CastGender, CreditedActor, FilmMetadata};
use crate::support::{file_stem, write_atomic, Sleeper, ThreadSleeper, TokenBucket};

pub const OMDB_KEY_ENV: &str = "CINE_OMDB_KEY";
pub const OMDB_ENDPOINT_ENV: &str = "CINE_OMDB_ENDPOINT";
const DEFAULT_ENDPOINT: &str = "https://www.omdbapi.com/";
const MAX_RATE_LIMIT_WAITS: u32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum MetadataError {
    #[error("no film found for `{title}` ({year})")]
    NotFound { title: String, year: i32 },
    #[error("metadata transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("metadata server kept rate limiting the client")]
    RateLimited,
    #[error("metadata server rejected the request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("unexpected metadata response: {0}")]
    Parse(String),
    #[error("metadata cache: {0}")]
    Cache(#[from] std::io::Error),
    #[error("{OMDB_KEY_ENV} is not set")]
    MissingKey,
}

enum Attempt {
    Body(String),
    Retry(String),
    RateLimited(Option<Duration>),
    Fatal(MetadataError),
}

pub struct MetadataClient {
    endpoint: String,
    api_key: String,
    cache_dir: PathBuf,
    agent: ureq::Agent,
    retry_delays: Vec<Duration>,
    limiter: Option<Arc<TokenBucket>>,
    sleeper: Arc<dyn Sleeper>,
}

impl MetadataClient {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: impl Into<String>,
        cache_dir: impl Into<PathBuf>,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        MetadataClient {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            cache_dir: cache_dir.into(),
            agent,
            retry_delays: vec![
                Duration::from_millis(500),
                Duration::from_secs(1),
                Duration::from_secs(2),
            ],
            limiter: None,
            sleeper: Arc::new(ThreadSleeper),
        }
    }

    /// Client against the public endpoint with the key from `CINE_OMDB_KEY`.
    pub fn from_env(cache_dir: impl Into<PathBuf>) -> Result<Self, MetadataError> {
        let key = std::env::var(OMDB_KEY_ENV).map_err(|_| MetadataError::MissingKey)?;
        let endpoint =
            std::env::var(OMDB_ENDPOINT_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string());
        Ok(Self::new(endpoint, key, cache_dir))
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_rate_limiter(mut self, limiter: Arc<TokenBucket>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn cache_path(&self, title: &str, year: i32) -> PathBuf {
        self.cache_dir
            .join(format!("{}_{year}.json", file_stem(&title.to_lowercase())))
    }

    fn attempt(&self, title: &str, year: i32) -> Attempt {
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        let result = self
            .agent
            .get(&self.endpoint)
            .query("t", title)
            .query("y", year.to_string())
            .query("apikey", &self.api_key)
            .call();
        let mut response = match result {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(Duration::from_secs_f64);
        let body = match response.body_mut().read_to_string() {
            Ok(b) => b,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        match status {
            200 => Attempt::Body(body),
            429 => Attempt::RateLimited(retry_after),
            408 | 500..=599 => Attempt::Retry(format!("HTTP {status}")),
            _ => Attempt::Fatal(MetadataError::Rejected { status, body }),
        }
    }

    fn request(&self, title: &str, year: i32) -> Result<String, MetadataError> {
        let mut failures = 0u32;
        let mut waits = 0u32;
        loop {
            match self.attempt(title, year) {
                Attempt::Body(body) => return Ok(body),
                Attempt::Fatal(e) => return Err(e),
                Attempt::RateLimited(hint) => {
                    waits += 1;
                    if waits > MAX_RATE_LIMIT_WAITS {
                        return Err(MetadataError::RateLimited);
                    }
                    self.sleeper.sleep(hint.unwrap_or(Duration::from_secs(1)));
                }
                Attempt::Retry(message) => {
                    let Some(delay) = self.retry_delays.get(failures as usize).copied() else {
                        return Err(MetadataError::Transport {
                            attempts: failures + 1,
                            message,
                        });
                    };
                    failures += 1;
                    log::warn!("metadata request for {title} ({year}) failed: {message}; retrying");
                    self.sleeper.sleep(delay);
                }
            }
        }
    }
}

/// Looks up one film, serving from the cache when possible.
pub fn fetch_film_metadata(
    title: &str,
    year: i32,
    client: &MetadataClient,
) -> Result<FilmMetadata, MetadataError> {
    let path = client.cache_path(title, year);
    let body = match std::fs::read_to_string(&path) {
        Ok(body) => body,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let body = client.request(title, year)?;
            let film = film_from_omdb(&body, title, year)?;
            write_atomic(&path, &body)?;
            return Ok(film);
        }
        Err(e) => return Err(e.into()),
    };
    film_from_omdb(&body, title, year)
}

/// Looks up many films with at most `concurrency` requests in flight.
/// Results are returned in input order.
pub fn fetch_many(
    requests: &[(String, i32)],
    client: &MetadataClient,
    concurrency: usize,
) -> Vec<Result<FilmMetadata, MetadataError>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        requests
            .par_iter()
            .map(|(title, year)| fetch_film_metadata(title, *year, client))
            .collect()
    })
}

fn field<'a>(v: &'a Value, name: &str) -> Option<&'a str> {
    v.get(name)
        .and_then(Value::as_str)
        .filter(|s| *s != "N/A" && !s.is_empty())
}

/// Maps an OMDb JSON body onto [`FilmMetadata`].
///
/// OMDb lists actor names only; character names, genders and birth years
/// are left for a local cast supplement to fill in.
pub fn film_from_omdb(body: &str, title: &str, year: i32) -> Result<FilmMetadata, MetadataError> {
    let v: Value = serde_json::from_str(body).map_err(|e| MetadataError::Parse(e.to_string()))?;
    if v.get("Response").and_then(Value::as_str) == Some("False") {
        let message = field(&v, "Error").unwrap_or("");
        if message.to_lowercase().contains("limit") {
            return Err(MetadataError::RateLimited);
        }
        return Err(MetadataError::NotFound {
            title: title.to_string(),
            year,
        });
    }
    let release_year = field(&v, "Year")
        .and_then(|y| y.get(..4))
        .and_then(|y| y.parse().ok())
        .ok_or_else(|| MetadataError::Parse("missing Year".into()))?;
    let split = |s: Option<&str>| -> Vec<String> {
        s.map(|s| {
            s.split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect()
        })
        .unwrap_or_default()
    };
    let credited_actors = split(field(&v, "Actors"))
        .into_iter()
        .map(|actor_name| CreditedActor {
            actor_name,
            character_name: String::new(),
            gender: CastGender::Unknown,
            birth_year: None,
        })
        .collect();
    let imdb_votes = field(&v, "imdbVotes").and_then(|s| s.replace(',', "").parse().ok());
    let film_id = field(&v, "imdbID")
        .map(str::to_string)
        .unwrap_or_else(|| format!("{}_{release_year}", file_stem(&title.to_lowercase())));
    Ok(FilmMetadata {
        film_id,
        title: field(&v, "Title").unwrap_or(title).to_string(),
        release_year,
        genres: split(field(&v, "Genre")),
        credited_actors,
        imdb_votes,
    })
}
