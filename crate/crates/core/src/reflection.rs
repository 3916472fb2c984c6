//! Condensing a memory bank into fifteen expert reflections.

use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentError, AgentStore, CharacterAgent, MemoryNode};
use crate::gateway::{stage, ChatMessage, ChatRequest, Gateway, GatewayError};
use crate::support::write_json_atomic;

pub const REFLECTION_TEMPERATURE: f64 = 0.1;
pub const REFLECTIONS_PER_PERSONA: usize = 5;
pub const DEFAULT_CHUNK_CHARS: usize = 40_000;
pub const DEFAULT_MAX_REFLECTION_CHARS: usize = 2_000;
pub const PERSONA_VERSION: &str = "personas-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    Psychology,
    Linguistics,
    Sociology,
}

impl Discipline {
    pub const ALL: [Discipline; 3] = [
        Discipline::Psychology,
        Discipline::Linguistics,
        Discipline::Sociology,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Discipline::Psychology => "psychology",
            Discipline::Linguistics => "linguistics",
            Discipline::Sociology => "sociology",
        }
    }

    pub fn expert(self) -> &'static str {
        match self {
            Discipline::Psychology => "Psychologist",
            Discipline::Linguistics => "Linguist",
            Discipline::Sociology => "Sociologist",
        }
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Discipline {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Discipline::ALL
            .into_iter()
            .find(|d| d.label() == s)
            .ok_or_else(|| format!("unknown discipline `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpertPersona {
    pub discipline: Discipline,
    pub system_instruction: &'static str,
}

const PSYCHOLOGY: &str = "You are a psychologist reading evidence about one film character. \
Describe the character's traits, motivations, social roles and implied value orientations as they \
show in the character's own words and actions. Stay close to the evidence and cite the bracketed \
node labels you rely on. Do not speculate beyond what the evidence supports.";

const LINGUISTICS: &str = "You are a linguist reading evidence about one film character. \
Describe the character's traits, motivations, social roles and implied value orientations as they \
show in word choice, register, politeness, directness and turn-taking. Stay close to the evidence \
and cite the bracketed node labels you rely on. Do not speculate beyond what the evidence supports.";

const SOCIOLOGY: &str = "You are a sociologist reading evidence about one film character. \
Describe the character's traits, motivations, social roles and implied value orientations as they \
show in relationships, group membership, status and the expectations others place on the character. \
Stay close to the evidence and cite the bracketed node labels you rely on. Do not speculate beyond \
what the evidence supports.";

pub fn personas() -> [ExpertPersona; 3] {
    Discipline::ALL.map(persona)
}

pub fn persona(discipline: Discipline) -> ExpertPersona {
    let system_instruction = match discipline {
        Discipline::Psychology => PSYCHOLOGY,
        Discipline::Linguistics => LINGUISTICS,
        Discipline::Sociology => SOCIOLOGY,
    };
    ExpertPersona {
        discipline,
        system_instruction,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub discipline: Discipline,
    /// 1 to 5 within the discipline.
    pub index: u8,
    pub text: String,
}

/// Persisted form, `agents/<film>/<character>.reflections.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionSet {
    pub agent_id: String,
    pub persona_version: String,
    /// Provider, model and seed that produced the set.
    #[serde(default)]
    pub producer: String,
    pub reflections: Vec<Reflection>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReflectionError {
    #[error("agent {0} has an empty memory bank")]
    EmptyMemory(String),
    #[error("expected {expected} numbered reflections, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("reflection {index} is empty")]
    EmptyReflection { index: usize },
    #[error("reflection {index} has {chars} characters, limit is {limit}")]
    TooLong {
        index: usize,
        chars: usize,
        limit: usize,
    },
    #[error("{0} reflections on file, expected 15 with 5 per discipline")]
    Incomplete(usize),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone)]
pub struct ReflectionConfig {
    pub model_name: String,
    pub temperature: f64,
    pub chunk_chars: usize,
    pub max_reflection_chars: usize,
    /// Stored with the reflections; sets from another producer are regenerated.
    pub producer: String,
}

impl Default for ReflectionConfig {
    fn default() -> Self {
        ReflectionConfig {
            model_name: "mock-model".into(),
            temperature: REFLECTION_TEMPERATURE,
            chunk_chars: DEFAULT_CHUNK_CHARS,
            max_reflection_chars: DEFAULT_MAX_REFLECTION_CHARS,
            producer: String::new(),
        }
    }
}

const INSTRUCTION: &str = "Write exactly five numbered reflections about this character, \
numbered 1. to 5., each a single paragraph. Base every reflection on the memory above.";

const FINAL_INSTRUCTION: &str = "The notes above were written about consecutive parts of this \
character's memory. Condense them into exactly five numbered reflections about the whole character, \
numbered 1. to 5., each a single paragraph.";

const COUNT_REMINDER: &str = "Your previous answer could not be used. Reply with exactly five \
numbered reflections, 1. to 5., and nothing else.";

fn render_node(node: &MemoryNode) -> String {
    format!("[{} {}] {}", node.kind, node.sequence_index, node.text)
}

fn tag(stage_name: &str, agent: &CharacterAgent, persona: &ExpertPersona) -> String {
    format!("{stage_name}:{}/{}", agent.id(), persona.discipline)
}

fn build_prompt(
    agent: &CharacterAgent,
    persona: &ExpertPersona,
    nodes: &[MemoryNode],
    config: &ReflectionConfig,
) -> ChatRequest {
    let mut user = agent.metadata_block();
    user.push_str("\n\nMemory:\n");
    for node in nodes {
        user.push_str(&render_node(node));
        user.push('\n');
    }
    user.push('\n');
    user.push_str(INSTRUCTION);
    ChatRequest {
        model_name: config.model_name.clone(),
        messages: vec![
            ChatMessage::system(persona.system_instruction),
            ChatMessage::user(user),
        ],
        temperature: config.temperature,
        request_tag: tag(stage::REFLECT, agent, persona),
    }
}

pub fn render_reflection_prompt(
    agent: &CharacterAgent,
    persona: &ExpertPersona,
    config: &ReflectionConfig,
) -> Result<ChatRequest, ReflectionError> {
    if agent.memory.is_empty() {
        return Err(ReflectionError::EmptyMemory(agent.id()));
    }
    Ok(build_prompt(agent, persona, &agent.memory, config))
}

/// Extracts the five numbered items of a reflection reply. Continuation
/// lines are joined into their item; text before item 1 is ignored.
pub fn parse_reflections(
    content: &str,
    discipline: Discipline,
) -> Result<Vec<Reflection>, ReflectionError> {
    parse_reflections_with_limit(content, discipline, DEFAULT_MAX_REFLECTION_CHARS)
}

pub fn parse_reflections_with_limit(
    content: &str,
    discipline: Discipline,
    max_chars: usize,
) -> Result<Vec<Reflection>, ReflectionError> {
    let item = Regex::new(r"^\s*(?:\*\*)?(\d+)[.)](?:\*\*)?\s*(.*)$").unwrap();
    let mut items: Vec<(usize, Vec<String>)> = Vec::new();
    for line in content.lines() {
        if let Some(c) = item.captures(line) {
            let n: usize = c[1].parse().unwrap_or(0);
            if n == items.len() + 1 {
                items.push((n, vec![c[2].to_string()]));
                continue;
            }
        }
        if let Some((_, parts)) = items.last_mut() {
            parts.push(line.to_string());
        }
    }
    if items.len() != REFLECTIONS_PER_PERSONA {
        return Err(ReflectionError::CountMismatch {
            expected: REFLECTIONS_PER_PERSONA,
            found: items.len(),
        });
    }
    items
        .into_iter()
        .map(|(n, parts)| {
            let text = parts
                .join(" ")
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ");
            if text.is_empty() {
                return Err(ReflectionError::EmptyReflection { index: n });
            }
            let chars = text.chars().count();
            if chars > max_chars {
                return Err(ReflectionError::TooLong {
                    index: n,
                    chars,
                    limit: max_chars,
                });
            }
            Ok(Reflection {
                discipline,
                index: n as u8,
                text,
            })
        })
        .collect()
}

fn is_format_error(e: &ReflectionError) -> bool {
    matches!(
        e,
        ReflectionError::CountMismatch { .. }
            | ReflectionError::EmptyReflection { .. }
            | ReflectionError::TooLong { .. }
    )
}

/// One completion plus parsing; a malformed reply earns one retry with a
/// reminder appended.
fn complete_five(
    request: ChatRequest,
    discipline: Discipline,
    gateway: &Gateway,
    config: &ReflectionConfig,
) -> Result<Vec<Reflection>, ReflectionError> {
    let reply = gateway.complete(&request)?;
    match parse_reflections_with_limit(&reply.content, discipline, config.max_reflection_chars) {
        Err(e) if is_format_error(&e) => {
            log::warn!("{}: {e}; retrying once", request.request_tag);
            let mut retry = request;
            retry.messages.push(ChatMessage::user(COUNT_REMINDER));
            let reply = gateway.complete(&retry)?;
            parse_reflections_with_limit(&reply.content, discipline, config.max_reflection_chars)
        }
        other => other,
    }
}

/// Splits memory into contiguous chunks whose rendered lines stay under
/// `chunk_chars`. A node larger than the limit gets a chunk of its own.
pub fn split_memory(memory: &[MemoryNode], chunk_chars: usize) -> Vec<&[MemoryNode]> {
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut size = 0;
    for (i, node) in memory.iter().enumerate() {
        let len = render_node(node).chars().count() + 1;
        if i > start && size + len > chunk_chars {
            chunks.push(&memory[start..i]);
            start = i;
            size = 0;
        }
        size += len;
    }
    if start < memory.len() {
        chunks.push(&memory[start..]);
    }
    chunks
}

/// Condenses a long memory bank part by part, then condenses the interim
/// notes into the final five reflections. With a single chunk this is the
/// same as the direct path.
pub fn chunked_condense(
    agent: &CharacterAgent,
    persona: &ExpertPersona,
    gateway: &Gateway,
    config: &ReflectionConfig,
) -> Result<Vec<Reflection>, ReflectionError> {
    if agent.memory.is_empty() {
        return Err(ReflectionError::EmptyMemory(agent.id()));
    }
    let chunks = split_memory(&agent.memory, config.chunk_chars);
    if chunks.len() == 1 {
        let request = render_reflection_prompt(agent, persona, config)?;
        return complete_five(request, persona.discipline, gateway, config);
    }
    let mut notes = String::new();
    for (k, chunk) in chunks.iter().enumerate() {
        let mut request = build_prompt(agent, persona, chunk, config);
        request.request_tag = format!("{}/{}", tag(stage::REFLECT_CHUNK, agent, persona), k + 1);
        let interim = complete_five(request, persona.discipline, gateway, config)?;
        for r in interim {
            notes.push_str(&format!("[Part {} note {}] {}\n", k + 1, r.index, r.text));
        }
    }
    let user = format!(
        "{}\n\nNotes:\n{notes}\n{FINAL_INSTRUCTION}",
        agent.metadata_block()
    );
    let request = ChatRequest {
        model_name: config.model_name.clone(),
        messages: vec![
            ChatMessage::system(persona.system_instruction),
            ChatMessage::user(user),
        ],
        temperature: config.temperature,
        request_tag: tag(stage::REFLECT_FINAL, agent, persona),
    };
    complete_five(request, persona.discipline, gateway, config)
}

/// Five reflections from one persona, switching to the chunked path when
/// the direct prompt would exceed the gateway budget.
pub fn condense_persona(
    agent: &CharacterAgent,
    persona: &ExpertPersona,
    gateway: &Gateway,
    config: &ReflectionConfig,
) -> Result<Vec<Reflection>, ReflectionError> {
    let request = render_reflection_prompt(agent, persona, config)?;
    if request.total_chars() > gateway.char_budget() {
        log::info!(
            "{}: prompt over budget, condensing in chunks",
            request.request_tag
        );
        return chunked_condense(agent, persona, gateway, config);
    }
    complete_five(request, persona.discipline, gateway, config)
}

pub fn validate_reflections(reflections: &[Reflection]) -> Result<(), ReflectionError> {
    let complete = reflections.len() == 15
        && Discipline::ALL.iter().all(|d| {
            reflections.iter().filter(|r| r.discipline == *d).count() == REFLECTIONS_PER_PERSONA
        });
    if complete {
        Ok(())
    } else {
        Err(ReflectionError::Incomplete(reflections.len()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CondenseOutcome {
    Generated(Vec<Reflection>),
    /// Reflections were already on file.
    Cached(Vec<Reflection>),
}

impl CondenseOutcome {
    pub fn reflections(&self) -> &[Reflection] {
        match self {
            CondenseOutcome::Generated(r) | CondenseOutcome::Cached(r) => r,
        }
    }
}

/// Stored reflections for `agent`, if they exist and came from `producer`.
pub fn load_reflections(
    store: &AgentStore,
    agent: &CharacterAgent,
    producer: &str,
) -> Result<Option<Vec<Reflection>>, ReflectionError> {
    let path = store.reflections_path(&agent.identity.film_id, &agent.identity.character);
    match std::fs::read_to_string(&path) {
        Ok(text) => {
            let set: ReflectionSet = serde_json::from_str(&text).map_err(AgentError::from)?;
            if set.producer != producer || set.persona_version != PERSONA_VERSION {
                return Ok(None);
            }
            validate_reflections(&set.reflections)?;
            Ok(Some(set.reflections))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(AgentError::from(e).into()),
    }
}

/// Produces and stores the fifteen reflections for one agent. Disciplines
/// run in a fixed order. Existing reflections are reused unless `force`.
pub fn condense_agent(
    agent: &CharacterAgent,
    gateway: &Gateway,
    store: &AgentStore,
    config: &ReflectionConfig,
    force: bool,
) -> Result<CondenseOutcome, ReflectionError> {
    if !force {
        if let Some(existing) = load_reflections(store, agent, &config.producer)? {
            return Ok(CondenseOutcome::Cached(existing));
        }
    }
    let mut all = Vec::with_capacity(15);
    for persona in personas() {
        all.extend(condense_persona(agent, &persona, gateway, config)?);
    }
    validate_reflections(&all)?;
    let set = ReflectionSet {
        agent_id: agent.id(),
        persona_version: PERSONA_VERSION.into(),
        producer: config.producer.clone(),
        reflections: all.clone(),
    };
    let path = store.reflections_path(&agent.identity.film_id, &agent.identity.character);
    write_json_atomic(&path, &set).map_err(AgentError::from)?;
    Ok(CondenseOutcome::Generated(all))
}

/// Condenses many agents with up to `concurrency` in flight. Results come
/// back in input order.
pub fn condense_all(
    agents: &[CharacterAgent],
    gateway: &Gateway,
    store: &AgentStore,
    config: &ReflectionConfig,
    force: bool,
    concurrency: usize,
) -> Vec<Result<CondenseOutcome, ReflectionError>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        agents
            .par_iter()
            .map(|agent| {
                let result = condense_agent(agent, gateway, store, config, force);
                if let Err(e) = &result {
                    log::error!("reflections for {} failed: {e}", agent.id());
                }
                result
            })
            .collect()
    })
}
