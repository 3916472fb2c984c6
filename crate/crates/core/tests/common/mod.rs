#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use filmvalues::gateway::{
    stage, ChatProvider, ChatRequest, MockProvider, ProviderError, RuleEntry,
};
use filmvalues::pipeline::{cmd_pipeline, PipelineOutcome, RunConfig};
use filmvalues::seed::derive_seed;
use serde_json::json;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn goldens() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/goldens")
}

pub fn updating_goldens() -> bool {
    std::env::var_os("UPDATE_GOLDENS").is_some()
}

/// Compares `actual` with the golden file, or rewrites the file when
/// `UPDATE_GOLDENS` is set.
pub fn check_golden(path: &Path, actual: &str) -> Result<(), String> {
    if updating_goldens() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{} differs from output", path.display()))
    }
}

/// Config for the bundled three-film corpus.
pub fn fixture_config(workdir: &Path, seed: u64) -> RunConfig {
    let mut c = RunConfig::new(workdir);
    c.corpus_dir = fixtures().join("corpus");
    c.reference_csv = Some(fixtures().join("reference.csv"));
    c.run_id = "fixture".into();
    c.seed = seed;
    c
}

pub const PIPELINE_OUTPUTS: [&str; 4] = ["responses.csv", "cells.csv", "plot.csv", "report.json"];

pub fn mock(config: &RunConfig) -> Arc<MockProvider> {
    Arc::new(MockProvider::new(
        derive_seed(config.seed, "mock"),
        Vec::new(),
    ))
}

pub fn run_fixture(workdir: &Path, seed: u64) -> (RunConfig, PipelineOutcome, Arc<MockProvider>) {
    let config = fixture_config(workdir, seed);
    let provider = mock(&config);
    let outcome = cmd_pipeline(&config, Some(provider.clone())).expect("pipeline");
    (config, outcome, provider)
}

/// Mock provider that fails every survey request after the first
/// `survey_budget`, as if the process had been stopped.
pub struct Interrupting {
    inner: MockProvider,
    survey_budget: usize,
    survey_calls: AtomicUsize,
}

impl Interrupting {
    pub fn new(inner: MockProvider, survey_budget: usize) -> Self {
        Interrupting {
            inner,
            survey_budget,
            survey_calls: AtomicUsize::new(0),
        }
    }
}

impl ChatProvider for Interrupting {
    fn name(&self) -> &str {
        "mock"
    }

    fn send(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        if request.stage().starts_with(stage::SURVEY)
            && self.survey_calls.fetch_add(1, Ordering::SeqCst) >= self.survey_budget
        {
            return Err(ProviderError::Cancelled);
        }
        self.inner.send(request)
    }
}

pub const SYNTHETIC_LEVELS: [(char, [u8; 3]); 4] = [
    ('F', [1, 2, 1]),
    ('F', [2, 1, 2]),
    ('M', [4, 5, 4]),
    ('M', [5, 4, 5]),
];

/// Rulebook for the synthetic corpus: a behaviour marker in the script turns
/// into a trait marker in every reflection, which in turn fixes the answers.
pub fn synthetic_rulebook() -> Vec<RuleEntry> {
    let mut rules = Vec::new();
    for (k, (_, answers)) in SYNTHETIC_LEVELS.iter().enumerate() {
        let reflections: String = (1..=5)
            .map(|i| {
                format!(
                    "{i}. Observation {i}: the character shows trait-{k}-marker in how they act.\n"
                )
            })
            .collect();
        rules.push(RuleEntry::new(format!("behaviour-{k}-marker"), reflections));
        let survey: String = answers
            .iter()
            .enumerate()
            .map(|(q, v)| format!("Q{}\nReasoning: fits the notes.\nResponse: {v}\n\n", q + 1))
            .collect();
        rules.push(RuleEntry::new(format!("trait-{k}-marker"), survey));
    }
    rules
}

const NAMES: [&str; 5] = ["ALBA", "BRUNO", "CELIA", "DORIAN", "ELSA"];

/// Writes `films` one-scene scripts with five leads each. Lead `j` of film
/// `i` carries behaviour marker `(i + j) % 4`, whose gender comes from
/// [`SYNTHETIC_LEVELS`].
pub fn write_synthetic_corpus(dir: &Path, films: usize) {
    std::fs::create_dir_all(dir).unwrap();
    let mut metadata = Vec::new();
    for i in 0..films {
        let film_id = format!("synth_{i:03}");
        let year = 1990 + (i % 30) as i32;
        let mut script = String::from("INT. HALL - DAY\n\n");
        let mut cast = Vec::new();
        for (j, name) in NAMES.iter().enumerate() {
            let k = (i + j) % SYNTHETIC_LEVELS.len();
            let gender = SYNTHETIC_LEVELS[k].0;
            let proper = format!("{}{}", &name[..1], name[1..].to_lowercase());
            script.push_str(&format!(
                "{proper} enters and shows behaviour-{k}-marker.\n\n"
            ));
            for line in 0..10 {
                script.push_str(&format!("{name}\nLine {line} from {proper}, film {i}.\n\n"));
            }
            cast.push(json!({
                "actor_name": format!("Actor {i}-{j}"),
                "character_name": proper,
                "gender": gender.to_string(),
                "birth_year": 1950 + j as i32,
            }));
        }
        std::fs::write(dir.join(format!("{film_id}.txt")), script).unwrap();
        metadata.push(json!({
            "film_id": film_id,
            "title": format!("Synthetic {i}"),
            "release_year": year,
            "genres": ["Drama"],
            "imdb_votes": 1000 + i,
            "credited_actors": cast,
        }));
    }
    std::fs::write(
        dir.join("metadata.json"),
        serde_json::to_string_pretty(&metadata).unwrap(),
    )
    .unwrap();
}
