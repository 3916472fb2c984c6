//! Run orchestration and on-disk layout.
//!
//! ```text
//! <workdir>/parsed/<film_id>.json
//! <workdir>/agents/<film_id>/<character>.json
//! <workdir>/agents/<film_id>/<character>.reflections.json
//! <workdir>/runs/<run_id>/{config.json, sample.json, agents.json, reflect.json,
//!     survey.json, responses.csv, cells.csv, plot.csv, report.json, report.txt,
//!     metadata.json, llm_log.jsonl, raw/}
//! ```
//!
//! Every stage reads its inputs from disk, so each can run on its own and a
//! rerun picks up where an earlier one stopped.

mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use report::{
    build_report, emit_plot_data, plot_csv, render_report_text, CorpusSummary, ItemReport,
    MissingSummary, PlotRow, RunReport, CAVEATS, PLOT_README,
};

use crate::agent::{
    build_agent, build_memory_bank, AgentStore, CharacterAgent, MemoryKind, DEFAULT_MIN_MEMORY,
};
use crate::corpus::{
    fetch_many, load_metadata_file, resolve_lead_characters, stratified_sample, CorpusError,
    Decade, FilmMetadata, Gender, MetadataClient, Shortfall, DEFAULT_MAX_LEADS, OMDB_KEY_ENV,
};
use crate::gateway::{
    ChatProvider, Gateway, HttpChatProvider, MockProvider, RuleEntry, RunLog, DEFAULT_CHAR_BUDGET,
    DEFAULT_CONCURRENCY,
};
use crate::reflection::{condense_all, load_reflections, CondenseOutcome, ReflectionConfig};
use crate::screenplay::{extract_character_evidence, parse_screenplay, parse_tagged, Parsed};
use crate::seed::derive_seed;
use crate::stats::{
    aggregate_cells, load_reference_csv, CellStats, Observation, Source, StatsError,
};
use crate::support::{file_stem, write_atomic, write_json_atomic};
use crate::survey::{
    item, read_responses_csv, responses_csv, run_survey, ItemId, MissingItem, SurveyConfig,
    SurveyError, DEFAULT_SURVEY_TEMPERATURE,
};

pub const METADATA_FILE: &str = "metadata.json";
pub const DEFAULT_PER_DECADE: usize = 54;

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const FATAL: i32 = 1;
    pub const PARTIAL: i32 = 2;
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("no scripts found in {0}")]
    NoScripts(String),
    #[error("no agents admitted to the survey")]
    NoAgents,
    #[error("missing stage output {path}; run `{stage}` first")]
    MissingStage { stage: &'static str, path: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Http,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::Mock => "mock",
            ProviderKind::Http => "http",
        })
    }
}

impl FromStr for ProviderKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(ProviderKind::Mock),
            "http" => Ok(ProviderKind::Http),
            other => Err(format!(
                "unknown provider `{other}` (expected mock or http)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    pub provider: ProviderKind,
    pub model_name: String,
    pub concurrency: usize,
    pub per_decade: usize,
    pub items: Vec<ItemId>,
    pub workdir: PathBuf,
    pub corpus_dir: PathBuf,
    pub reference_csv: Option<PathBuf>,
    pub rulebook: Option<PathBuf>,
    pub force: bool,
    pub per_item_prompts: bool,
    pub survey_temperature: f64,
    pub min_memory: usize,
    pub max_leads: usize,
    pub char_budget: usize,
    /// Fill missing genres and vote counts from OMDb during `sample`.
    #[serde(default)]
    pub omdb: bool,
}

impl RunConfig {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        let workdir = workdir.into();
        RunConfig {
            run_id: "default".into(),
            seed: 0,
            provider: ProviderKind::Mock,
            model_name: "mock-model".into(),
            concurrency: DEFAULT_CONCURRENCY,
            per_decade: DEFAULT_PER_DECADE,
            items: ItemId::ALL.to_vec(),
            corpus_dir: workdir.join("corpus"),
            workdir,
            reference_csv: None,
            rulebook: None,
            force: false,
            per_item_prompts: false,
            survey_temperature: DEFAULT_SURVEY_TEMPERATURE,
            min_memory: DEFAULT_MIN_MEMORY,
            max_leads: DEFAULT_MAX_LEADS,
            char_budget: DEFAULT_CHAR_BUDGET,
            omdb: false,
        }
    }

    pub fn parsed_dir(&self) -> PathBuf {
        self.workdir.join("parsed")
    }

    pub fn agents_dir(&self) -> PathBuf {
        self.workdir.join("agents")
    }

    pub fn run_dir(&self) -> PathBuf {
        self.workdir.join("runs").join(file_stem(&self.run_id))
    }

    pub fn run_file(&self, name: &str) -> PathBuf {
        self.run_dir().join(name)
    }

    /// Identifies who wrote a reflection set, so a different provider,
    /// model or seed regenerates instead of reusing it.
    pub fn producer(&self) -> String {
        format!("{}:{}:seed={}", self.provider, self.model_name, self.seed)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.run_id.trim().is_empty() {
            return bad("run id is empty");
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1");
        }
        if self.per_decade == 0 {
            return bad("per-decade quota must be at least 1");
        }
        if self.items.is_empty() {
            return bad("no survey items selected");
        }
        if !(0.0..=2.0).contains(&self.survey_temperature) {
            return bad("survey temperature must be in [0, 2]");
        }
        if self.provider == ProviderKind::Http {
            HttpChatProvider::from_env().map_err(PipelineError::Config)?;
        }
        if self.omdb && std::env::var_os(OMDB_KEY_ENV).is_none() {
            return Err(PipelineError::Config(format!("{OMDB_KEY_ENV} is not set")));
        }
        Ok(())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(
    path: &Path,
    stage: &'static str,
) -> Result<T, PipelineError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(PipelineError::MissingStage {
                stage,
                path: path.display().to_string(),
            })
        }
        Err(e) => return Err(io_err(path)(e)),
    };
    serde_json::from_str(&text).map_err(|source| PipelineError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), PipelineError> {
    write_json_atomic(path, value).map_err(io_err(path))
}

pub fn load_rulebook(path: &Path) -> Result<Vec<RuleEntry>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Provider named by the config: the seeded mock or the HTTP client.
pub fn make_provider(config: &RunConfig) -> Result<Arc<dyn ChatProvider>, PipelineError> {
    match config.provider {
        ProviderKind::Mock => {
            let rules = match &config.rulebook {
                Some(p) => load_rulebook(p)?,
                None => Vec::new(),
            };
            Ok(Arc::new(MockProvider::new(
                derive_seed(config.seed, "mock"),
                rules,
            )))
        }
        ProviderKind::Http => Ok(Arc::new(
            HttpChatProvider::from_env().map_err(PipelineError::Config)?,
        )),
    }
}

pub fn make_gateway(
    config: &RunConfig,
    provider: Arc<dyn ChatProvider>,
) -> Result<Gateway, PipelineError> {
    let log_path = config.run_file("llm_log.jsonl");
    let log = RunLog::create(&log_path).map_err(io_err(&log_path))?;
    Ok(Gateway::new(provider)
        .with_concurrency(config.concurrency)
        .with_char_budget(config.char_budget)
        .with_seed(derive_seed(config.seed, "gateway"))
        .with_log(Arc::new(log)))
}

// ---------------------------------------------------------------- parse

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseSummary {
    pub documents: Vec<String>,
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
}

impl ParseSummary {
    pub fn exit_code(&self) -> i32 {
        if self.errors.is_empty() {
            exit::SUCCESS
        } else {
            exit::FATAL
        }
    }
}

/// Parses every `.txt` (plain screenplay) and `.json` (tagged) script in
/// `corpus_dir` into `parsed_dir`. Bad files are reported and skipped.
pub fn cmd_parse(corpus_dir: &Path, parsed_dir: &Path) -> Result<ParseSummary, PipelineError> {
    let metadata_path = corpus_dir.join(METADATA_FILE);
    load_metadata_file(&metadata_path)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus_dir)
        .map_err(io_err(corpus_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().and_then(|n| n.to_str()) != Some(METADATA_FILE))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("txt" | "json")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(PipelineError::NoScripts(corpus_dir.display().to_string()));
    }
    let mut summary = ParseSummary::default();
    let mut seen = BTreeSet::new();
    for path in files {
        let name = path
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .to_string();
        let parsed = std::fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|text| {
                if path.extension().and_then(|e| e.to_str()) == Some("json") {
                    parse_tagged(&text).map_err(|e| e.to_string())
                } else {
                    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                    parse_screenplay(&text, &stem).map_err(|e| e.to_string())
                }
            });
        let parsed: Parsed = match parsed {
            Ok(p) => p,
            Err(e) => {
                log::error!("{name}: {e}");
                summary.errors.push(format!("{name}: {e}"));
                continue;
            }
        };
        let film_id = parsed.screenplay.film_id.clone();
        if !seen.insert(film_id.clone()) {
            summary.errors.push(format!(
                "{name}: film `{film_id}` already parsed from another file"
            ));
            continue;
        }
        for w in &parsed.warnings {
            summary.warnings.push(format!("{name}: {w}"));
        }
        write_json(
            &parsed_dir.join(format!("{}.json", file_stem(&film_id))),
            &parsed,
        )?;
        summary.documents.push(film_id);
    }
    Ok(summary)
}

fn load_parsed(parsed_dir: &Path, film_id: &str) -> Result<Option<Parsed>, PipelineError> {
    let path = parsed_dir.join(format!("{}.json", file_stem(film_id)));
    if !path.exists() {
        return Ok(None);
    }
    read_json(&path, "parse").map(Some)
}

// ---------------------------------------------------------------- sample

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub film_ids: Vec<String>,
    /// Metadata lookups that failed during enrichment.
    #[serde(default)]
    pub enrichment_errors: Vec<String>,
    pub shortfalls: Vec<ShortfallRecord>,
    pub out_of_window: Vec<String>,
    /// Metadata entries with no parsed script.
    pub unparsed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortfallRecord {
    pub decade: Decade,
    pub requested: usize,
    pub available: usize,
}

impl From<&Shortfall> for ShortfallRecord {
    fn from(s: &Shortfall) -> Self {
        ShortfallRecord {
            decade: s.decade,
            requested: s.requested,
            available: s.available,
        }
    }
}

fn load_films(config: &RunConfig) -> Result<Vec<FilmMetadata>, PipelineError> {
    Ok(load_metadata_file(&config.corpus_dir.join(METADATA_FILE))?)
}

fn enrich(config: &RunConfig, films: &mut [FilmMetadata]) -> Result<Vec<String>, PipelineError> {
    let client = MetadataClient::from_env(config.workdir.join("cache").join("omdb"))
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let wanted: Vec<usize> = (0..films.len())
        .filter(|&i| films[i].needs_enrichment())
        .collect();
    let requests: Vec<(String, i32)> = wanted
        .iter()
        .map(|&i| (films[i].title.clone(), films[i].release_year))
        .collect();
    let mut errors = Vec::new();
    for (i, result) in wanted
        .into_iter()
        .zip(fetch_many(&requests, &client, config.concurrency))
    {
        match result {
            Ok(fetched) => {
                films[i].enrich_from(&fetched);
            }
            Err(e) => errors.push(format!("{}: {e}", films[i].film_id)),
        }
    }
    Ok(errors)
}

/// Draws the sample and snapshots the (possibly enriched) metadata into
/// `films.json` for the later stages.
pub fn cmd_sample(config: &RunConfig) -> Result<SampleRecord, PipelineError> {
    let mut films = load_films(config)?;
    let enrichment_errors = if config.omdb {
        enrich(config, &mut films)?
    } else {
        Vec::new()
    };
    write_json(&config.run_file("films.json"), &films)?;
    let parsed_dir = config.parsed_dir();
    let (available, unparsed): (Vec<FilmMetadata>, Vec<FilmMetadata>) =
        films.into_iter().partition(|f| {
            parsed_dir
                .join(format!("{}.json", file_stem(&f.film_id)))
                .exists()
        });
    let outcome = stratified_sample(
        &available,
        config.per_decade,
        derive_seed(config.seed, "sample"),
    )?;
    for s in &outcome.shortfalls {
        log::warn!(
            "{}: {} films requested, {} available",
            s.decade,
            s.requested,
            s.available
        );
    }
    let record = SampleRecord {
        film_ids: outcome.film_ids,
        enrichment_errors,
        shortfalls: outcome
            .shortfalls
            .iter()
            .map(ShortfallRecord::from)
            .collect(),
        out_of_window: outcome.out_of_window,
        unparsed: unparsed.into_iter().map(|f| f.film_id).collect(),
    };
    write_json(&config.run_file("sample.json"), &record)?;
    Ok(record)
}

// ---------------------------------------------------------------- agents

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub film_id: String,
    pub character: String,
    pub gender: Gender,
    pub decade: Decade,
    pub dialogue_nodes: usize,
    pub action_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roster {
    pub admitted: Vec<RosterEntry>,
    pub excluded: Vec<String>,
    pub imdb_votes: Vec<u64>,
    pub films: usize,
}

/// Resolves leads in each sampled film, builds their memory banks and
/// admits agents with at least `min_memory` nodes.
pub fn cmd_agents(config: &RunConfig) -> Result<Roster, PipelineError> {
    let sample: SampleRecord = read_json(&config.run_file("sample.json"), "sample")?;
    let films: Vec<FilmMetadata> = read_json(&config.run_file("films.json"), "sample")?;
    let films: BTreeMap<String, FilmMetadata> =
        films.into_iter().map(|f| (f.film_id.clone(), f)).collect();
    let store = AgentStore::new(config.agents_dir());
    let mut roster = Roster {
        admitted: Vec::new(),
        excluded: Vec::new(),
        imdb_votes: Vec::new(),
        films: 0,
    };
    let mut ids = sample.film_ids.clone();
    ids.sort();
    for film_id in ids {
        let Some(meta) = films.get(&film_id) else {
            roster.excluded.push(format!("{film_id}: no metadata"));
            continue;
        };
        let Some(parsed) = load_parsed(&config.parsed_dir(), &film_id)? else {
            roster.excluded.push(format!("{film_id}: no parsed script"));
            continue;
        };
        roster.films += 1;
        roster.imdb_votes.extend(meta.imdb_votes);
        let leads = resolve_lead_characters(meta, &parsed.screenplay, config.max_leads);
        roster.excluded.extend(leads.diagnostics);
        for identity in leads.leads {
            let id = identity.agent_id();
            let evidence = match extract_character_evidence(
                &parsed.screenplay,
                &identity.character,
                &identity.aliases(),
            ) {
                Ok(ev) => ev,
                Err(e) => {
                    roster.excluded.push(format!("{id}: {e}"));
                    continue;
                }
            };
            let memory = match build_memory_bank(&evidence) {
                Ok(m) => m,
                Err(e) => {
                    roster.excluded.push(format!("{id}: {e}"));
                    continue;
                }
            };
            let agent = match build_agent(identity, meta.release_year, memory) {
                Ok(a) => a,
                Err(e) => {
                    roster.excluded.push(format!("{id}: {e}"));
                    continue;
                }
            };
            store
                .save(&agent)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            if agent.memory.len() < config.min_memory {
                roster.excluded.push(format!(
                    "{id}: {} memory nodes, below the threshold of {}",
                    agent.memory.len(),
                    config.min_memory
                ));
                continue;
            }
            roster.admitted.push(RosterEntry {
                film_id: agent.identity.film_id.clone(),
                character: agent.identity.character.clone(),
                gender: agent.identity.gender,
                decade: agent.identity.decade,
                dialogue_nodes: agent.count(MemoryKind::Dialogue),
                action_nodes: agent.count(MemoryKind::Action),
            });
        }
    }
    write_json(&config.run_file("agents.json"), &roster)?;
    Ok(roster)
}

fn load_roster_agents(config: &RunConfig) -> Result<(Roster, Vec<CharacterAgent>), PipelineError> {
    let roster: Roster = read_json(&config.run_file("agents.json"), "agents")?;
    let store = AgentStore::new(config.agents_dir());
    let agents = roster
        .admitted
        .iter()
        .map(|e| {
            store.load(&e.film_id, &e.character).map_err(|err| {
                PipelineError::Config(format!("agent {}/{}: {err}", e.film_id, e.character))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((roster, agents))
}

// ---------------------------------------------------------------- reflect

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReflectSummary {
    pub generated: usize,
    pub cached: usize,
    pub failed: Vec<String>,
}

fn reflection_config(config: &RunConfig) -> ReflectionConfig {
    ReflectionConfig {
        model_name: config.model_name.clone(),
        producer: config.producer(),
        ..ReflectionConfig::default()
    }
}

pub fn cmd_reflect(config: &RunConfig, gateway: &Gateway) -> Result<ReflectSummary, PipelineError> {
    let (_, agents) = load_roster_agents(config)?;
    if agents.is_empty() {
        return Err(PipelineError::NoAgents);
    }
    let store = AgentStore::new(config.agents_dir());
    let results = condense_all(
        &agents,
        gateway,
        &store,
        &reflection_config(config),
        config.force,
        config.concurrency,
    );
    let mut summary = ReflectSummary::default();
    for (agent, result) in agents.iter().zip(results) {
        match result {
            Ok(CondenseOutcome::Generated(_)) => summary.generated += 1,
            Ok(CondenseOutcome::Cached(_)) => summary.cached += 1,
            Err(e) => summary.failed.push(format!("{}: {e}", agent.id())),
        }
    }
    write_json(&config.run_file("reflect.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- survey

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurveySummary {
    pub responses: usize,
    pub missing: Vec<MissingItem>,
    pub failed: Vec<String>,
    /// Agents without a complete reflection set.
    pub skipped: Vec<String>,
    pub surveyed: usize,
    pub resumed: usize,
}

pub fn cmd_survey(config: &RunConfig, gateway: &Gateway) -> Result<SurveySummary, PipelineError> {
    let (_, agents) = load_roster_agents(config)?;
    let store = AgentStore::new(config.agents_dir());
    let producer = config.producer();
    let mut ready = Vec::new();
    let mut summary = SurveySummary::default();
    for agent in agents {
        match load_reflections(&store, &agent, &producer) {
            Ok(Some(r)) => ready.push((agent, r)),
            Ok(None) => summary
                .skipped
                .push(format!("{}: no reflections", agent.id())),
            Err(e) => summary.skipped.push(format!("{}: {e}", agent.id())),
        }
    }
    let items: Vec<_> = config.items.iter().map(|i| item(*i)).collect();
    let survey_config = SurveyConfig {
        model_name: config.model_name.clone(),
        temperature: config.survey_temperature,
        per_item_prompts: config.per_item_prompts,
        run_id: config.run_id.clone(),
    };
    let raw_dir = config.run_file("raw");
    if config.force && raw_dir.exists() {
        std::fs::remove_dir_all(&raw_dir).map_err(io_err(&raw_dir))?;
    }
    let run = run_survey(
        &ready,
        &items,
        gateway,
        &raw_dir,
        &survey_config,
        config.concurrency,
    );
    let csv_path = config.run_file("responses.csv");
    write_atomic(&csv_path, responses_csv(&run.responses)?).map_err(io_err(&csv_path))?;
    summary.responses = run.responses.len();
    summary.missing = run.missing;
    summary.failed = run
        .failed_agents
        .into_iter()
        .map(|(id, e)| format!("{id}: {e}"))
        .collect();
    summary.surveyed = run.surveyed;
    summary.resumed = run.resumed;
    write_json(&config.run_file("survey.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- analyze

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub simulated: Vec<Observation>,
    pub real: Vec<Observation>,
    pub real_out_of_window: usize,
    pub sim_cells: Vec<CellStats>,
    pub real_cells: Vec<CellStats>,
}

pub fn load_analysis(config: &RunConfig) -> Result<Analysis, PipelineError> {
    let csv_path = config.run_file("responses.csv");
    if !csv_path.exists() {
        return Err(PipelineError::MissingStage {
            stage: "survey",
            path: csv_path.display().to_string(),
        });
    }
    let simulated: Vec<Observation> = read_responses_csv(&csv_path)?
        .iter()
        .map(Observation::from)
        .filter(|o| config.items.contains(&o.item_id))
        .collect();
    let (real, real_out_of_window) = match &config.reference_csv {
        Some(p) => {
            let data = load_reference_csv(p)?;
            let obs = data
                .observations
                .into_iter()
                .filter(|o| config.items.contains(&o.item_id))
                .collect();
            (obs, data.out_of_window)
        }
        None => (Vec::new(), 0),
    };
    Ok(Analysis {
        sim_cells: aggregate_cells(&simulated, Source::Simulated),
        real_cells: aggregate_cells(&real, Source::Real),
        simulated,
        real,
        real_out_of_window,
    })
}

fn cells_csv(cells: &[&CellStats]) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["item_id", "source", "decade", "gender", "n", "mean", "sd"])
        .map_err(SurveyError::from)?;
    for c in cells {
        w.write_record([
            c.item_id.to_string(),
            c.source.to_string(),
            c.decade.to_string(),
            c.gender.to_string(),
            c.n.to_string(),
            c.mean.to_string(),
            c.sd.to_string(),
        ])
        .map_err(SurveyError::from)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| SurveyError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `cells.csv` and `plot.csv` for the run.
pub fn cmd_analyze(config: &RunConfig) -> Result<Analysis, PipelineError> {
    let analysis = load_analysis(config)?;
    let mut cells: Vec<&CellStats> = analysis
        .sim_cells
        .iter()
        .chain(&analysis.real_cells)
        .collect();
    cells.sort_by_key(|c| (c.item_id, c.source, c.decade, c.gender));
    let path = config.run_file("cells.csv");
    write_atomic(&path, cells_csv(&cells)?).map_err(io_err(&path))?;
    let path = config.run_file("plot.csv");
    write_atomic(
        &path,
        plot_csv(&emit_plot_data(&analysis.sim_cells, &analysis.real_cells))?,
    )
    .map_err(io_err(&path))?;
    let path = config.run_file("plot_README.md");
    write_atomic(&path, PLOT_README).map_err(io_err(&path))?;
    Ok(analysis)
}

// ---------------------------------------------------------------- report

pub fn cmd_report(config: &RunConfig) -> Result<RunReport, PipelineError> {
    let roster: Roster = read_json(&config.run_file("agents.json"), "agents")?;
    let sample: SampleRecord = read_json(&config.run_file("sample.json"), "sample")?;
    let reflect: ReflectSummary = read_json(&config.run_file("reflect.json"), "reflect")?;
    let survey: SurveySummary = read_json(&config.run_file("survey.json"), "survey")?;
    let analysis = load_analysis(config)?;
    let report = build_report(config, &sample, &roster, &reflect, &survey, &analysis);
    write_json(&config.run_file("report.json"), &report)?;
    let path = config.run_file("report.txt");
    write_atomic(&path, render_report_text(&report)).map_err(io_err(&path))?;
    Ok(report)
}

#[derive(Debug, Serialize)]
struct RunMetadata<'a> {
    run_id: &'a str,
    started_at: String,
    finished_at: String,
    tool_version: &'static str,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: RunReport,
    pub parse: ParseSummary,
    pub reflect: ReflectSummary,
    pub survey: SurveySummary,
    pub exit_code: i32,
}

/// Runs every stage in order. Pass `provider` to override the one named by
/// the config.
pub fn cmd_pipeline(
    config: &RunConfig,
    provider: Option<Arc<dyn ChatProvider>>,
) -> Result<PipelineOutcome, PipelineError> {
    config.validate()?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let provider = match provider {
        Some(p) => p,
        None => make_provider(config)?,
    };
    write_json(&config.run_file("config.json"), config)?;
    let parse = cmd_parse(&config.corpus_dir, &config.parsed_dir())?;
    if parse.documents.is_empty() {
        return Err(PipelineError::NoScripts(
            config.corpus_dir.display().to_string(),
        ));
    }
    cmd_sample(config)?;
    let roster = cmd_agents(config)?;
    if roster.admitted.is_empty() {
        return Err(PipelineError::NoAgents);
    }
    let gateway = make_gateway(config, provider)?;
    let reflect = cmd_reflect(config, &gateway)?;
    let survey = cmd_survey(config, &gateway)?;
    cmd_analyze(config)?;
    let report = cmd_report(config)?;
    let metadata = RunMetadata {
        run_id: &config.run_id,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        tool_version: env!("CARGO_PKG_VERSION"),
    };
    write_json(&config.run_file("metadata.json"), &metadata)?;
    let partial =
        !parse.errors.is_empty() || !reflect.failed.is_empty() || !survey.failed.is_empty();
    Ok(PipelineOutcome {
        report,
        parse,
        reflect,
        survey,
        exit_code: if partial {
            exit::PARTIAL
        } else {
            exit::SUCCESS
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new("/tmp/x");
        c.validate().unwrap();
        c.concurrency = 0;
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
        let mut c = RunConfig::new("/tmp/x");
        c.items.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn layout() {
        let mut c = RunConfig::new("/w");
        c.run_id = "r 1".into();
        assert_eq!(
            c.run_file("report.json"),
            PathBuf::from("/w/runs/r_1/report.json")
        );
        assert_eq!(c.corpus_dir, PathBuf::from("/w/corpus"));
        assert_eq!(c.producer(), "mock:mock-model:seed=0");
        assert_eq!("http".parse::<ProviderKind>().unwrap(), ProviderKind::Http);
    }

    #[test]
    fn parse_reports_bad_files_and_empty_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        std::fs::create_dir_all(&corpus).unwrap();
        std::fs::write(corpus.join(METADATA_FILE), "[]").unwrap();
        assert!(matches!(
            cmd_parse(&corpus, &dir.path().join("parsed")),
            Err(PipelineError::NoScripts(_))
        ));
        std::fs::write(corpus.join("a.txt"), "INT. ROOM - DAY\nAMY\nHello.\n").unwrap();
        std::fs::write(corpus.join("b.json"), "{not json").unwrap();
        let s = cmd_parse(&corpus, &dir.path().join("parsed")).unwrap();
        assert_eq!(s.documents, vec!["a"]);
        assert_eq!(s.errors.len(), 1);
        assert_eq!(s.exit_code(), exit::FATAL);
        assert!(dir.path().join("parsed/a.json").exists());
        std::fs::write(corpus.join(METADATA_FILE), "{").unwrap();
        assert!(matches!(
            cmd_parse(&corpus, &dir.path().join("parsed")),
            Err(PipelineError::Corpus(_))
        ));
    }
}
