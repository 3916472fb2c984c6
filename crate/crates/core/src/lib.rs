//! Screenplay character agents, simulated attitude surveys, and the
//! statistics that compare them with real survey data.

pub mod agent;
pub mod corpus;
pub mod gateway;
pub mod pipeline;
pub mod reflection;
pub mod screenplay;
pub mod seed;
pub mod stats;
pub mod support;
pub mod survey;

pub use agent::{CharacterAgent, MemoryKind, MemoryNode};
pub use corpus::{CharacterIdentity, Decade, FilmMetadata, Gender};
pub use gateway::{ChatProvider, ChatRequest, ChatResponse, Gateway, MockProvider, RuleEntry};
pub use pipeline::{RunConfig, RunReport};
pub use reflection::{Discipline, Reflection};
pub use screenplay::{ElementKind, Screenplay, ScriptElement};
pub use stats::{CellStats, Source, TestResult};
pub use survey::{ItemId, SurveyItem, SurveyResponse};
