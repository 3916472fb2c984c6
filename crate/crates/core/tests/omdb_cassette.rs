mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use filmvalues::corpus::{
    fetch_film_metadata, FilmMetadata, MetadataClient, MetadataError, OMDB_ENDPOINT_ENV,
    OMDB_KEY_ENV,
};
use filmvalues::pipeline::{cmd_parse, cmd_sample, RunConfig};
use serde::Deserialize;

#[derive(Deserialize)]
struct Cassette {
    request: BTreeMap<String, String>,
    status: u16,
    headers: BTreeMap<String, String>,
    body: String,
}

/// Serves the cassette to matching requests and 404s everything else.
fn replay(cassette: Cassette) -> (String, Arc<AtomicUsize>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for request in server.incoming_requests() {
            counter.fetch_add(1, Ordering::SeqCst);
            let query: BTreeMap<String, String> = request
                .url()
                .split_once('?')
                .map(|(_, q)| q)
                .unwrap_or("")
                .split('&')
                .filter_map(|kv| kv.split_once('='))
                .map(|(k, v)| (k.to_string(), v.replace('+', " ").replace("%20", " ")))
                .collect();
            let matches = cassette
                .request
                .iter()
                .all(|(k, v)| query.get(k) == Some(v));
            let response = if matches {
                let mut r = tiny_http::Response::from_string(cassette.body.clone())
                    .with_status_code(cassette.status);
                for (k, v) in &cassette.headers {
                    r.add_header(
                        tiny_http::Header::from_bytes(k.as_bytes(), v.as_bytes()).unwrap(),
                    );
                }
                r
            } else {
                tiny_http::Response::from_string("{}").with_status_code(404)
            };
            let _ = request.respond(response);
        }
    });
    (endpoint, hits)
}

fn load() -> Cassette {
    let path = common::fixtures().join("cassettes/omdb_heat_1995.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn heat_replays_to_metadata() {
    let (endpoint, hits) = replay(load());
    let cache = tempfile::tempdir().unwrap();
    let client = MetadataClient::new(endpoint, "test-key", cache.path());
    let film = fetch_film_metadata("Heat", 1995, &client).unwrap();
    assert_eq!(film.release_year, 1995);
    assert_eq!(film.title, "Heat");
    assert_eq!(film.film_id, "tt0113277");
    assert_eq!(film.genres, vec!["Action", "Crime", "Drama"]);
    assert_eq!(film.imdb_votes, Some(740_115));
    assert_eq!(film.credited_actors.len(), 3);
    assert_eq!(hits.load(Ordering::SeqCst), 1);

    // second lookup is served from the cache
    let again = fetch_film_metadata("Heat", 1995, &client).unwrap();
    assert_eq!(again, film);
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    assert!(client.cache_path("Heat", 1995).exists());
}

#[test]
fn unmatched_request_is_rejected() {
    let (endpoint, _) = replay(load());
    let cache = tempfile::tempdir().unwrap();
    let client = MetadataClient::new(endpoint, "test-key", cache.path());
    let err = fetch_film_metadata("Heat", 1996, &client).unwrap_err();
    assert!(
        matches!(err, MetadataError::Rejected { status: 404, .. }),
        "{err:?}"
    );
}

#[test]
fn sample_fills_missing_metadata_from_omdb() {
    let (endpoint, hits) = replay(load());
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    std::fs::write(
        corpus.join("heat.txt"),
        "INT. DINER - NIGHT\n\nNEIL\nI am alone. I am not lonely.\n",
    )
    .unwrap();
    std::fs::write(
        corpus.join("metadata.json"),
        r#"[{"film_id": "heat", "title": "Heat", "release_year": 1995,
             "credited_actors": [{"actor_name": "Robert De Niro",
                                  "character_name": "Neil", "gender": "M"}]}]"#,
    )
    .unwrap();
    std::env::set_var(OMDB_KEY_ENV, "test-key");
    std::env::set_var(OMDB_ENDPOINT_ENV, &endpoint);
    let mut config = RunConfig::new(dir.path());
    config.omdb = true;
    cmd_parse(&config.corpus_dir, &config.parsed_dir()).unwrap();
    let sample = cmd_sample(&config).unwrap();
    assert!(sample.enrichment_errors.is_empty());
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    let films: Vec<FilmMetadata> =
        serde_json::from_str(&std::fs::read_to_string(config.run_file("films.json")).unwrap())
            .unwrap();
    assert_eq!(films[0].film_id, "heat");
    assert_eq!(films[0].imdb_votes, Some(740_115));
    assert_eq!(films[0].genres, vec!["Action", "Crime", "Drama"]);
    assert_eq!(films[0].credited_actors.len(), 1);
    assert_eq!(films[0].credited_actors[0].character_name, "Neil");
}
