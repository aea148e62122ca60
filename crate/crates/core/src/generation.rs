//! Persona generation: render prompt, call the backend, parse and validate,
//! retrying with a full re-prompt on failure.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{ChatBackend, ChatRequest, Decoding};
use crate::catalog::ValueCatalog;
use crate::census::MetaPersona;
use crate::exec::{run_bounded, Attempt, AuditEntry, AuditLog};
use crate::persona::{
    validate_subjective_generation, validate_tabular, DescriptivePersona, FieldValue, Persona,
    PersonaError, PersonaTier, TabularPersona, ValidationReport,
};
use crate::prompts::{PromptError, PromptTemplate};

pub const DEFAULT_RETRY_LIMIT: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseFailure {
    #[error("response has no 'Persona:' marker")]
    MarkerAbsent,
    #[error("persona body is empty")]
    Empty,
    #[error("could not read key-value pairs: {0}")]
    Format(String),
    #[error(transparent)]
    Persona(#[from] PersonaError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerationError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("retry limit must be at least 1")]
    RetryLimit,
    #[error("concurrency bound must be at least 1")]
    Concurrency,
}

#[derive(Debug, Clone)]
pub struct GenerationJob {
    pub metas: Vec<MetaPersona>,
    pub tier: PersonaTier,
    pub retry_limit: usize,
    pub decoding: Decoding,
    pub concurrency: usize,
    /// Indices already generated in an earlier run; skipped entirely.
    pub skip: BTreeSet<usize>,
}

impl GenerationJob {
    pub fn new(metas: Vec<MetaPersona>, tier: PersonaTier) -> Self {
        Self {
            metas,
            tier,
            retry_limit: DEFAULT_RETRY_LIMIT,
            decoding: Decoding::GENERATION,
            concurrency: 1,
            skip: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPersona {
    pub index: usize,
    pub persona: Persona,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub index: usize,
    pub reason: String,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetaOutcome {
    Generated(GeneratedPersona),
    Failed(GenerationFailure),
}

#[derive(Debug, Default)]
pub struct GenerationOutcome {
    pub personas: Vec<GeneratedPersona>,
    pub failures: Vec<GenerationFailure>,
    /// One entry per attempted meta, in meta order.
    pub audit: Vec<AuditEntry>,
}

/// Text after the first case-insensitive `Persona:` marker.
fn after_marker(text: &str) -> Result<&str, ParseFailure> {
    let lower = text.to_ascii_lowercase();
    let pos = lower.find("persona:").ok_or(ParseFailure::MarkerAbsent)?;
    Ok(&text[pos + "persona:".len()..])
}

fn strip_fences(body: &str) -> String {
    body.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses a generation response into a persona of `tier` derived from `meta`.
pub fn parse_persona_response(text: &str, tier: PersonaTier, meta: &MetaPersona) -> Result<Persona, ParseFailure> {
    let body = strip_fences(after_marker(text)?);
    let body = body.trim();
    if body.is_empty() {
        return Err(ParseFailure::Empty);
    }
    match tier {
        PersonaTier::Meta => Err(ParseFailure::Format("meta personas are not generated".into())),
        PersonaTier::Descriptive => Ok(Persona::Descriptive(DescriptivePersona::new(meta.clone(), body)?)),
        PersonaTier::ObjectiveTabular | PersonaTier::SubjectiveTabular => {
            let fields = parse_fields(body)?;
            Ok(Persona::Tabular(TabularPersona::new(tier, meta.clone(), fields)?))
        }
    }
}

/// Reads tabular fields from either a JSON object or `"KEY": "value"` lines.
fn parse_fields(body: &str) -> Result<IndexMap<String, FieldValue>, ParseFailure> {
    if let Some(obj) = json_object(body) {
        let mut out = IndexMap::new();
        for (k, v) in obj {
            out.insert(k.clone(), FieldValue::from_json(&k, &v)?);
        }
        return Ok(out);
    }
    parse_lines(body)
}

fn json_object(body: &str) -> Option<serde_json::Map<String, serde_json::Value>> {
    // bare template fragment first: its nested group would otherwise parse
    // as the whole object
    let candidates = [
        Some(format!("{{{}}}", body.trim_end().trim_end_matches(','))),
        body.find('{')
            .zip(body.rfind('}'))
            .filter(|(a, b)| a < b)
            .map(|(a, b)| body[a..=b].to_string()),
    ];
    candidates
        .into_iter()
        .flatten()
        .find_map(|c| match serde_json::from_str::<serde_json::Value>(&c) {
            Ok(serde_json::Value::Object(m)) => Some(m),
            _ => None,
        })
}

fn parse_lines(body: &str) -> Result<IndexMap<String, FieldValue>, ParseFailure> {
    let mut out = IndexMap::new();
    let mut group: Option<(String, IndexMap<String, String>)> = None;
    for raw in body.lines() {
        let line = raw.trim().trim_end_matches(',').trim();
        if line.is_empty() || line == "{" {
            continue;
        }
        if line == "}" {
            if let Some((key, g)) = group.take() {
                out.insert(key, FieldValue::Group(g));
            }
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(ParseFailure::Format(format!("no key in line {line:?}")));
        };
        let key = unquote(key.trim()).trim().to_string();
        if key.is_empty() {
            return Err(ParseFailure::Format(format!("empty key in line {line:?}")));
        }
        let value = value.trim();
        if value == "{" {
            group = Some((key, IndexMap::new()));
            continue;
        }
        let value = unquote(value).to_string();
        match &mut group {
            Some((_, g)) => {
                g.insert(key, value);
            }
            None => {
                out.insert(key, FieldValue::Text(value));
            }
        }
    }
    if let Some((key, _)) = group {
        return Err(ParseFailure::Format(format!("unterminated group {key}")));
    }
    Ok(out)
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(s)
}

/// Checks a parsed persona before it may enter the success list.
pub fn acceptance_report(persona: &Persona, catalog: &ValueCatalog) -> ValidationReport {
    match persona {
        Persona::Tabular(t) if t.tier() == PersonaTier::ObjectiveTabular => validate_tabular(t, catalog),
        Persona::Tabular(t) => validate_subjective_generation(t, catalog),
        _ => ValidationReport::from_violations(Vec::new()),
    }
}

pub fn generate_personas(
    job: &GenerationJob,
    backend: &dyn ChatBackend,
    catalog: &ValueCatalog,
) -> Result<GenerationOutcome, GenerationError> {
    generate_personas_with(job, backend, catalog, &|_, _| {})
}

/// Like [`generate_personas`], calling `sink` with each meta's outcome and
/// audit entry as it finishes (from worker threads, in completion order).
pub fn generate_personas_with(
    job: &GenerationJob,
    backend: &dyn ChatBackend,
    catalog: &ValueCatalog,
    sink: &(dyn Fn(&MetaOutcome, &AuditEntry) + Sync),
) -> Result<GenerationOutcome, GenerationError> {
    let template = PromptTemplate::for_tier(job.tier)?;
    if job.retry_limit == 0 {
        return Err(GenerationError::RetryLimit);
    }
    if job.concurrency == 0 {
        return Err(GenerationError::Concurrency);
    }
    let pending: Vec<usize> = (0..job.metas.len()).filter(|i| !job.skip.contains(i)).collect();
    let log = AuditLog::new();
    let results = run_bounded(pending.len(), job.concurrency, |slot| {
        let index = pending[slot];
        let (outcome, entry) = generate_one(index, &job.metas[index], job, &template, backend, catalog);
        sink(&outcome, &entry);
        log.append(entry);
        outcome
    });

    let mut out = GenerationOutcome::default();
    for r in results {
        match r {
            MetaOutcome::Generated(p) => out.personas.push(p),
            MetaOutcome::Failed(f) => out.failures.push(f),
        }
    }
    let mut audit = log.into_entries();
    audit.sort_by_key(|e| task_index(&e.task));
    out.audit = audit;
    Ok(out)
}

pub fn meta_task(index: usize) -> String {
    format!("meta:{index}")
}

fn task_index(task: &str) -> usize {
    task.strip_prefix("meta:").and_then(|s| s.parse().ok()).unwrap_or(usize::MAX)
}

fn generate_one(
    index: usize,
    meta: &MetaPersona,
    job: &GenerationJob,
    template: &PromptTemplate,
    backend: &dyn ChatBackend,
    catalog: &ValueCatalog,
) -> (MetaOutcome, AuditEntry) {
    let prompt = template.render(meta);
    let request = ChatRequest {
        system: Some(&prompt.system),
        user: &prompt.user,
        decoding: job.decoding,
    };
    let mut attempts = Vec::with_capacity(job.retry_limit);
    let mut last_reason = String::new();
    for attempt in 1..=job.retry_limit {
        let mut record = Attempt { attempt, response: None, error: None, violations: Vec::new() };
        match backend.complete(&request) {
            Err(e) => {
                last_reason = e.to_string();
                record.error = Some(last_reason.clone());
            }
            Ok(text) => {
                record.response = Some(text.clone());
                match parse_persona_response(&text, job.tier, meta) {
                    Err(e) => {
                        last_reason = e.to_string();
                        record.error = Some(last_reason.clone());
                    }
                    Ok(persona) => {
                        let report = acceptance_report(&persona, catalog);
                        if report.is_valid() {
                            attempts.push(record);
                            let entry = AuditEntry { task: meta_task(index), success: true, attempts };
                            let generated = GeneratedPersona { index, persona, attempts: attempt };
                            return (MetaOutcome::Generated(generated), entry);
                        }
                        last_reason = format!("catalog violations in {}", report.fields().join(", "));
                        record.error = Some(last_reason.clone());
                        record.violations = report.violations().to_vec();
                    }
                }
            }
        }
        attempts.push(record);
    }
    let failure = GenerationFailure { index, reason: last_reason, attempts: job.retry_limit };
    let entry = AuditEntry { task: meta_task(index), success: false, attempts };
    (MetaOutcome::Failed(failure), entry)
}
