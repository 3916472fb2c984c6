//! Simulated answers to the three gender-attitude items.
//!
//! Codes run 1 = strongly disagree to 5 = strongly agree with the statement
//! as worded, so a lower mean is a more egalitarian answer.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agent::CharacterAgent;
use crate::corpus::{Decade, Gender};
use crate::gateway::{stage, ChatMessage, ChatRequest, Gateway, GatewayError};
use crate::reflection::{validate_reflections, Discipline, Reflection};
use crate::support::{file_stem, write_json_atomic};

pub const SURVEY_TEMPLATE: &str = include_str!("../assets/survey_template.txt");
pub const DEFAULT_SURVEY_TEMPERATURE: f64 = 0.0;

/// The four numbered steps closing the template.
pub const FOUR_STEP_BLOCK: &str = "As you answer, I want you to take the following steps:
Step 1) Describe in a few sentences the kind of person that would choose each of the response options. (\"Option Interpretation\")
Step 2) For each response options, reason about why the person might answer with the particular option. (\"Option Choice\")
Step 3) Write a few sentences reasoning on which of the option best predicts the person's response (\"Reasoning\")
Step 4) Predict how the person will actually respond in the survey. Predict based on the expert observation notes and your thoughts, but ultimately, DON'T over think it. Use your system 1 (fast, intuitive) thinking. (\"Response\")";

pub const SCALE: [&str; 5] = [
    "Strongly disagree",
    "Disagree",
    "Neither agree nor disagree",
    "Agree",
    "Strongly agree",
];

const FORMAT_NOTE: &str =
    "Answer each question in its own block. Start the block with the question label \
(for example Q1) and end it with a line of the form \"Response: <option number>\".";

const FORMAT_REMINDER: &str = "Your previous answer could not be read. Repeat your answer with one block \
per question, each starting with its label (Q1, Q2, ...) and ending with a line \"Response: <option number>\" \
where the number is between 1 and 5.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemId {
    JobPriority,
    PoliticalLeaders,
    UniversityEducation,
}

impl ItemId {
    pub const ALL: [ItemId; 3] = [
        ItemId::JobPriority,
        ItemId::PoliticalLeaders,
        ItemId::UniversityEducation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ItemId::JobPriority => "job_priority",
            ItemId::PoliticalLeaders => "political_leaders",
            ItemId::UniversityEducation => "university_education",
        }
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ItemId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ItemId::ALL
            .into_iter()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| format!("unknown item `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurveyItem {
    pub item_id: ItemId,
    pub statement: &'static str,
    pub scale: [&'static str; 5],
}

pub fn item(item_id: ItemId) -> SurveyItem {
    let statement = match item_id {
        ItemId::JobPriority => {
            "When jobs are scarce, men should have more right to a job than women."
        }
        ItemId::PoliticalLeaders => {
            "On the whole, men make better political leaders than women do."
        }
        ItemId::UniversityEducation => {
            "A university education is more important for a boy than for a girl."
        }
    };
    SurveyItem {
        item_id,
        statement,
        scale: SCALE,
    }
}

pub fn items() -> [SurveyItem; 3] {
    ItemId::ALL.map(item)
}

#[derive(Debug, thiserror::Error)]
pub enum SurveyError {
    #[error("agent {agent} has {found} reflections, 15 required")]
    MissingReflections { agent: String, found: usize },
    #[error("no items to ask")]
    NoItems,
    #[error("item {item_id}: {reason}")]
    Unparseable { item_id: ItemId, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("survey store: {0}")]
    Io(#[from] std::io::Error),
    #[error("survey store: {0}")]
    Json(#[from] serde_json::Error),
    #[error("responses file: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone)]
pub struct SurveyConfig {
    pub model_name: String,
    pub temperature: f64,
    pub per_item_prompts: bool,
    pub run_id: String,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        SurveyConfig {
            model_name: "mock-model".into(),
            temperature: DEFAULT_SURVEY_TEMPERATURE,
            per_item_prompts: false,
            run_id: "run".into(),
        }
    }
}

/// Metadata followed by the fifteen reflections grouped by expert.
pub fn render_input0(agent: &CharacterAgent, reflections: &[Reflection]) -> String {
    let mut out = agent.metadata_block();
    for d in Discipline::ALL {
        out.push_str(&format!("\n\n{} notes:", d.expert()));
        for r in reflections.iter().filter(|r| r.discipline == d) {
            out.push_str(&format!("\n{}. {}", r.index, r.text));
        }
    }
    out
}

pub fn render_input1(items: &[SurveyItem]) -> String {
    let mut out = String::new();
    for (k, it) in items.iter().enumerate() {
        out.push_str(&format!("Q{} ({}): {}\n", k + 1, it.item_id, it.statement));
        for (v, label) in it.scale.iter().enumerate() {
            out.push_str(&format!("{}) {label}\n", v + 1));
        }
        out.push('\n');
    }
    out.push_str(FORMAT_NOTE);
    out
}

pub fn render_survey_prompt(
    agent: &CharacterAgent,
    reflections: &[Reflection],
    items: &[SurveyItem],
    config: &SurveyConfig,
) -> Result<ChatRequest, SurveyError> {
    if validate_reflections(reflections).is_err() {
        return Err(SurveyError::MissingReflections {
            agent: agent.id(),
            found: reflections.len(),
        });
    }
    if items.is_empty() {
        return Err(SurveyError::NoItems);
    }
    let content = SURVEY_TEMPLATE
        .replacen("!<INPUT 0>!", &render_input0(agent, reflections), 1)
        .replacen("!<INPUT 1>!", &render_input1(items), 1);
    let mut request_tag = format!("{}:{}", stage::SURVEY, agent.id());
    if let [single] = items {
        if config.per_item_prompts {
            request_tag.push_str(&format!("/{}", single.item_id));
        }
    }
    Ok(ChatRequest {
        model_name: config.model_name.clone(),
        messages: vec![ChatMessage::user(content)],
        temperature: config.temperature,
        request_tag,
    })
}

fn parse_value(raw: &str, item: &SurveyItem) -> Result<u8, String> {
    let cleaned = raw
        .trim()
        .trim_matches(|c: char| c == '*' || c == '"' || c == '\'' || c == '.' || c.is_whitespace());
    let digits: String = cleaned.chars().take_while(|c| c.is_ascii_digit()).collect();
    if !digits.is_empty() {
        return match digits.parse::<u32>() {
            Ok(v @ 1..=5) => Ok(v as u8),
            _ => Err(format!("response `{cleaned}` is outside 1..5")),
        };
    }
    let lowered = cleaned.to_lowercase();
    item.scale
        .iter()
        .position(|label| label.to_lowercase() == lowered)
        .map(|p| p as u8 + 1)
        .ok_or_else(|| format!("response `{cleaned}` is not a scale option"))
}

/// Per-item parse result: the final `Response:` line inside each `Q<k>` block.
pub fn parse_item_responses(
    content: &str,
    items: &[SurveyItem],
) -> Vec<(ItemId, Result<u8, String>)> {
    let header = Regex::new(r"^[\s#*>_-]*Q(\d+)\b").unwrap();
    let response = Regex::new(r"(?i)^[\s#*>_-]*response[\s*_]*:[\s*_]*(.+)$").unwrap();
    let mut blocks: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    let mut current: Option<usize> = None;
    for line in content.lines() {
        if let Some(c) = header.captures(line) {
            let k: usize = c[1].parse().unwrap_or(0);
            blocks.insert(k, Vec::new());
            current = Some(k);
        }
        if let Some(k) = current {
            blocks.get_mut(&k).expect("block exists").push(line);
        }
    }
    items
        .iter()
        .enumerate()
        .map(|(pos, it)| {
            let outcome = match blocks.get(&(pos + 1)) {
                None => Err(format!("no Q{} block", pos + 1)),
                Some(lines) => match lines.iter().rev().find_map(|l| response.captures(l)) {
                    None => Err(format!("no Response line in Q{} block", pos + 1)),
                    Some(c) => parse_value(&c[1], it),
                },
            };
            (it.item_id, outcome)
        })
        .collect()
}

/// Strict form: every item must parse.
pub fn parse_survey_output(
    content: &str,
    items: &[SurveyItem],
) -> Result<Vec<(ItemId, u8)>, SurveyError> {
    parse_item_responses(content, items)
        .into_iter()
        .map(|(item_id, r)| {
            r.map(|v| (item_id, v))
                .map_err(|reason| SurveyError::Unparseable { item_id, reason })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemAnswer {
    pub item_id: ItemId,
    /// `None` when the reply could not be read after the retry.
    pub response: Option<u8>,
}

/// Everything one agent produced, stored under `raw/` so runs can resume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSurvey {
    pub agent_id: String,
    pub film_id: String,
    pub character: String,
    pub gender: Gender,
    pub decade: Decade,
    pub run_id: String,
    pub answers: Vec<ItemAnswer>,
    pub raw_outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub film_id: String,
    pub character: String,
    pub gender: Gender,
    pub decade: Decade,
    pub item_id: ItemId,
    pub response: u8,
    pub raw_output: String,
    pub run_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingItem {
    pub agent_id: String,
    pub item_id: ItemId,
}

#[derive(Debug, Default)]
pub struct SurveyRun {
    pub responses: Vec<SurveyResponse>,
    pub missing: Vec<MissingItem>,
    pub failed_agents: Vec<(String, String)>,
    /// Agents answered in this call, as opposed to loaded from `raw/`.
    pub surveyed: usize,
    pub resumed: usize,
}

pub fn raw_path(raw_dir: &Path, agent: &CharacterAgent) -> PathBuf {
    raw_dir
        .join(file_stem(&agent.identity.film_id))
        .join(format!("{}.json", file_stem(&agent.identity.character)))
}

/// Asks, parses, and retries once with a reminder for any unreadable item.
fn ask(
    agent: &CharacterAgent,
    reflections: &[Reflection],
    items: &[SurveyItem],
    gateway: &Gateway,
    config: &SurveyConfig,
    raw_outputs: &mut Vec<String>,
) -> Result<Vec<ItemAnswer>, SurveyError> {
    let request = render_survey_prompt(agent, reflections, items, config)?;
    let first = gateway.complete(&request)?;
    raw_outputs.push(first.content.clone());
    let mut parsed = parse_item_responses(&first.content, items);
    if parsed.iter().any(|(_, r)| r.is_err()) {
        for (item_id, r) in &parsed {
            if let Err(why) = r {
                log::warn!("{} {item_id}: {why}; retrying once", agent.id());
            }
        }
        let mut retry = request;
        retry.messages.push(ChatMessage::user(FORMAT_REMINDER));
        let second = gateway.complete(&retry)?;
        raw_outputs.push(second.content.clone());
        let again = parse_item_responses(&second.content, items);
        for ((_, slot), (_, fresh)) in parsed.iter_mut().zip(again) {
            if slot.is_err() {
                *slot = fresh;
            }
        }
    }
    Ok(parsed
        .into_iter()
        .map(|(item_id, r)| ItemAnswer {
            item_id,
            response: r.ok(),
        })
        .collect())
}

pub fn survey_agent(
    agent: &CharacterAgent,
    reflections: &[Reflection],
    items: &[SurveyItem],
    gateway: &Gateway,
    config: &SurveyConfig,
) -> Result<AgentSurvey, SurveyError> {
    let mut raw_outputs = Vec::new();
    let answers = if config.per_item_prompts {
        let mut all = Vec::new();
        for it in items {
            all.extend(ask(
                agent,
                reflections,
                std::slice::from_ref(it),
                gateway,
                config,
                &mut raw_outputs,
            )?);
        }
        all
    } else {
        ask(agent, reflections, items, gateway, config, &mut raw_outputs)?
    };
    Ok(AgentSurvey {
        agent_id: agent.id(),
        film_id: agent.identity.film_id.clone(),
        character: agent.identity.character.clone(),
        gender: agent.identity.gender,
        decade: agent.identity.decade,
        run_id: config.run_id.clone(),
        answers,
        raw_outputs,
    })
}

fn load_agent_survey(path: &Path) -> Result<Option<AgentSurvey>, SurveyError> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Surveys every agent not already on file in `raw_dir`, then collects all
/// per-agent results in input order.
pub fn run_survey(
    agents: &[(CharacterAgent, Vec<Reflection>)],
    items: &[SurveyItem],
    gateway: &Gateway,
    raw_dir: &Path,
    config: &SurveyConfig,
    concurrency: usize,
) -> SurveyRun {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<(bool, Result<AgentSurvey, SurveyError>)> = pool.install(|| {
        agents
            .par_iter()
            .map(|(agent, reflections)| {
                let path = raw_path(raw_dir, agent);
                match load_agent_survey(&path) {
                    Ok(Some(done)) => return (true, Ok(done)),
                    Ok(None) => {}
                    Err(e) => return (false, Err(e)),
                }
                let result =
                    survey_agent(agent, reflections, items, gateway, config).and_then(|s| {
                        write_json_atomic(&path, &s)
                            .map(|_| s)
                            .map_err(SurveyError::from)
                    });
                (false, result)
            })
            .collect()
    });

    let mut run = SurveyRun::default();
    for ((agent, _), (resumed, result)) in agents.iter().zip(results) {
        match result {
            Ok(survey) => {
                if resumed {
                    run.resumed += 1;
                } else {
                    run.surveyed += 1;
                }
                let raw_output = survey.raw_outputs.join("\n---\n");
                for answer in &survey.answers {
                    match answer.response {
                        Some(response) => run.responses.push(SurveyResponse {
                            film_id: survey.film_id.clone(),
                            character: survey.character.clone(),
                            gender: survey.gender,
                            decade: survey.decade,
                            item_id: answer.item_id,
                            response,
                            raw_output: raw_output.clone(),
                            run_id: survey.run_id.clone(),
                        }),
                        None => run.missing.push(MissingItem {
                            agent_id: survey.agent_id.clone(),
                            item_id: answer.item_id,
                        }),
                    }
                }
            }
            Err(e) => {
                log::error!("survey for {} failed: {e}", agent.id());
                run.failed_agents.push((agent.id(), e.to_string()));
            }
        }
    }
    run.responses.sort_by(|a, b| {
        (&a.film_id, &a.character, a.item_id).cmp(&(&b.film_id, &b.character, b.item_id))
    });
    run
}

/// One row of `responses.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub film_id: String,
    pub character: String,
    pub gender: Gender,
    pub decade: Decade,
    pub item_id: ItemId,
    pub response: u8,
}

impl From<&SurveyResponse> for ResponseRow {
    fn from(r: &SurveyResponse) -> Self {
        ResponseRow {
            film_id: r.film_id.clone(),
            character: r.character.clone(),
            gender: r.gender,
            decade: r.decade,
            item_id: r.item_id,
            response: r.response,
        }
    }
}

pub fn responses_csv(responses: &[SurveyResponse]) -> Result<String, SurveyError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in responses {
        w.serialize(ResponseRow::from(r))?;
    }
    if responses.is_empty() {
        w.write_record([
            "film_id",
            "character",
            "gender",
            "decade",
            "item_id",
            "response",
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| SurveyError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_responses_csv(path: &Path) -> Result<Vec<ResponseRow>, SurveyError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{MemoryKind, MemoryNode};
    use crate::corpus::CharacterIdentity;
    use crate::gateway::{ChatProvider, MockProvider, ProviderError, RuleEntry};
    use crate::support::RecordingSleeper;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn agent(name: &str, gender: Gender) -> CharacterAgent {
        CharacterAgent {
            identity: CharacterIdentity {
                film_id: "f9".into(),
                character: name.into(),
                gender,
                age_at_release: Some(41),
                decade: Decade::Tens,
                credited_as: String::new(),
            },
            time_period: 2012,
            memory: vec![MemoryNode {
                kind: MemoryKind::Dialogue,
                text: "hi".into(),
                sequence_index: 0,
            }],
        }
    }

    fn reflections() -> Vec<Reflection> {
        Discipline::ALL
            .iter()
            .flat_map(|d| {
                (1..=5).map(move |i| Reflection {
                    discipline: *d,
                    index: i,
                    text: format!("{} note {i}", d.label()),
                })
            })
            .collect()
    }

    fn gateway(p: Arc<dyn ChatProvider>) -> Gateway {
        Gateway::new(p).with_sleeper(Arc::new(RecordingSleeper::new()))
    }

    #[test]
    fn registry() {
        let all = items();
        assert_eq!(all.len(), 3);
        assert!(all.iter().all(|i| i.scale.len() == 5));
        assert_eq!(all[0].item_id.as_str(), "job_priority");
        assert_eq!(
            "political_leaders".parse::<ItemId>().unwrap(),
            ItemId::PoliticalLeaders
        );
    }

    #[test]
    fn template_carries_four_steps() {
        assert!(SURVEY_TEMPLATE.contains(FOUR_STEP_BLOCK));
        assert!(SURVEY_TEMPLATE.lines().all(|l| l == l.trim_end()));
    }

    #[test]
    fn prompt_substitution() {
        let req = render_survey_prompt(
            &agent("ANA", Gender::F),
            &reflections(),
            &items(),
            &SurveyConfig::default(),
        )
        .unwrap();
        let text = &req.messages[0].content;
        assert!(!text.contains("!<INPUT"));
        assert!(text.starts_with(
            "Name: ANA\nAge: 41\nTime period: 2012\n\nPsychologist notes:\n1. psychology note 1\n"
        ));
        assert!(text.contains("Q2 (political_leaders): On the whole, men make better political leaders than women do.\n1) Strongly disagree\n"));
        assert!(text.contains(FOUR_STEP_BLOCK));
        assert!(!text.to_lowercase().contains("gender"));
        assert_eq!(req.request_tag, "survey:f9/ANA");
        assert_eq!(req.temperature, 0.0);
    }

    #[test]
    fn prompt_needs_reflections() {
        let r = render_survey_prompt(
            &agent("ANA", Gender::F),
            &reflections()[..14],
            &items(),
            &SurveyConfig::default(),
        );
        assert!(matches!(
            r,
            Err(SurveyError::MissingReflections { found: 14, .. })
        ));
    }

    #[test]
    fn parse_numeric_and_labels() {
        let its = items();
        let content = "Q1\nOption Interpretation: ...\nResponse: 2\nResponse: 4\n\nQ2\n**Response:** Strongly disagree\n\nQ3\nReasoning: x\nResponse: 5.";
        let parsed = parse_survey_output(content, &its).unwrap();
        assert_eq!(
            parsed,
            vec![
                (ItemId::JobPriority, 4),
                (ItemId::PoliticalLeaders, 1),
                (ItemId::UniversityEducation, 5)
            ]
        );
    }

    #[test]
    fn parse_rejects_out_of_range_and_missing() {
        let its = items();
        let err = parse_survey_output("Q1\nResponse: 7\nQ2\nResponse: 1\nQ3\nResponse: 1", &its)
            .unwrap_err();
        assert!(matches!(
            err,
            SurveyError::Unparseable {
                item_id: ItemId::JobPriority,
                ..
            }
        ));
        let per_item = parse_item_responses("Q1\nResponse: 3\nQ3\nResponse: maybe", &its);
        assert_eq!(per_item[0].1, Ok(3));
        assert!(per_item[1].1.is_err());
        assert!(per_item[2].1.is_err());
    }

    #[test]
    fn rule_reply_flows_through() {
        let rules = vec![RuleEntry::new(
            "note 3",
            "Q1\nResponse: 2\nQ2\nResponse: 2\nQ3\nResponse: 3",
        )];
        let g = gateway(Arc::new(MockProvider::new(7, rules)));
        let s = survey_agent(
            &agent("ANA", Gender::F),
            &reflections(),
            &items(),
            &g,
            &SurveyConfig::default(),
        )
        .unwrap();
        let values: Vec<_> = s.answers.iter().map(|a| a.response).collect();
        assert_eq!(values, vec![Some(2), Some(2), Some(3)]);
    }

    #[test]
    fn unparseable_twice_marks_missing() {
        let rules = vec![RuleEntry::new(
            "ODD",
            "Q1\nResponse: 9\nQ2\nResponse: 2\nQ3\nResponse: 1",
        )];
        let p = Arc::new(MockProvider::new(7, rules));
        let g = gateway(p.clone());
        let mut odd = agent("ODD", Gender::M);
        odd.identity.film_id = "f0".into();
        let agents = vec![
            (odd, reflections()),
            (agent("ANA", Gender::F), reflections()),
        ];
        let dir = tempfile::tempdir().unwrap();
        let run = run_survey(
            &agents,
            &items(),
            &g,
            dir.path(),
            &SurveyConfig::default(),
            2,
        );
        assert_eq!(run.responses.len(), 5);
        assert_eq!(
            run.missing,
            vec![MissingItem {
                agent_id: "f0/ODD".into(),
                item_id: ItemId::JobPriority
            }]
        );
        assert_eq!(p.calls(), 3);
    }

    #[test]
    fn resume_skips_finished_agents() {
        let dir = tempfile::tempdir().unwrap();
        let agents: Vec<_> = ["A", "B", "C"]
            .iter()
            .map(|n| (agent(n, Gender::F), reflections()))
            .collect();
        let p = Arc::new(MockProvider::new(7, vec![]));
        let g = gateway(p.clone());
        let first = run_survey(
            &agents,
            &items(),
            &g,
            dir.path(),
            &SurveyConfig::default(),
            3,
        );
        assert_eq!(first.responses.len(), 9);
        assert_eq!(p.calls(), 3);
        let second = run_survey(
            &agents,
            &items(),
            &g,
            dir.path(),
            &SurveyConfig::default(),
            3,
        );
        assert_eq!(p.calls(), 3);
        assert_eq!(second.resumed, 3);
        assert_eq!(second.responses, first.responses);
    }

    struct CancelAfter {
        allowed: usize,
        inner: MockProvider,
        seen: AtomicUsize,
    }

    impl ChatProvider for CancelAfter {
        fn name(&self) -> &str {
            "mock"
        }
        fn send(&self, r: &ChatRequest) -> Result<String, ProviderError> {
            if self.seen.fetch_add(1, Ordering::SeqCst) >= self.allowed {
                return Err(ProviderError::Cancelled);
            }
            self.inner.send(r)
        }
    }

    #[test]
    fn cancelled_agents_are_reported_not_written() {
        let dir = tempfile::tempdir().unwrap();
        let agents: Vec<_> = ["A", "B", "C"]
            .iter()
            .map(|n| (agent(n, Gender::M), reflections()))
            .collect();
        let p = Arc::new(CancelAfter {
            allowed: 1,
            inner: MockProvider::new(7, vec![]),
            seen: AtomicUsize::new(0),
        });
        let run = run_survey(
            &agents,
            &items(),
            &gateway(p),
            dir.path(),
            &SurveyConfig::default(),
            1,
        );
        assert_eq!(run.surveyed, 1);
        assert_eq!(run.failed_agents.len(), 2);
        assert!(raw_path(dir.path(), &agents[0].0).exists());
        assert!(!raw_path(dir.path(), &agents[1].0).exists());
    }

    #[test]
    fn per_item_prompts_ask_three_times() {
        let p = Arc::new(MockProvider::new(7, vec![]));
        let g = gateway(p.clone());
        let cfg = SurveyConfig {
            per_item_prompts: true,
            ..SurveyConfig::default()
        };
        let s = survey_agent(&agent("ANA", Gender::F), &reflections(), &items(), &g, &cfg).unwrap();
        assert_eq!(p.calls(), 3);
        assert!(s.answers.iter().all(|a| a.response.is_some()));
        let order: Vec<_> = s.answers.iter().map(|a| a.item_id).collect();
        assert_eq!(order, ItemId::ALL.to_vec());
    }

    #[test]
    fn csv_layout() {
        let r = SurveyResponse {
            film_id: "f".into(),
            character: "ANA".into(),
            gender: Gender::F,
            decade: Decade::Tens,
            item_id: ItemId::UniversityEducation,
            response: 2,
            raw_output: "x".into(),
            run_id: "r".into(),
        };
        assert_eq!(
            responses_csv(&[r]).unwrap(),
            "film_id,character,gender,decade,item_id,response\nf,ANA,F,2010s,university_education,2\n"
        );
        assert_eq!(
            responses_csv(&[]).unwrap(),
            "film_id,character,gender,decade,item_id,response\n"
        );
    }
}
