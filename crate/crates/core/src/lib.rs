//! Census-grounded synthetic personas for LLM opinion simulation.
//!
//! The pipeline samples demographic meta personas from a joint census table,
//! expands them into richer persona tiers with a chat model, asks personas
//! forced-choice survey questions, and scores the aggregated answers against
//! reference distributions.

pub mod backend;
pub mod catalog;
pub mod census;
pub mod exec;
pub mod generation;
pub mod metrics;
pub mod persona;
pub mod prompts;
pub mod simulation;
pub mod text;

pub use backend::{BackendError, BackendId, ChatBackend, ChatRequest, Decoding, HttpBackendConfig, HttpChatBackend, ScriptedBackend};
pub use catalog::ValueCatalog;
pub use census::{load_joint_table, sample_meta_personas, CensusError, JointDistribution, MetaPersona};
pub use exec::{Attempt, AuditEntry};
pub use generation::{generate_personas, GenerationJob, GenerationOutcome};
pub use metrics::{alignment_score, cross_simulation, topic_variance_ranking, wasserstein_1d, CrossSimMatrix, Distribution, GroundTruth};
pub use persona::{DescriptivePersona, FieldValue, Persona, PersonaTier, TabularPersona, ValidationReport, Violation};
pub use simulation::{aggregate, parse_answer, run_survey, ChoiceDistribution, ResponseRecord, SurveyQuestion};
pub use text::{analyze_sentiment, word_frequencies, SentimentLexicon, SentimentScore};
