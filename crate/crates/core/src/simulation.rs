//! Forced-choice opinion simulation and cohort aggregation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{ChatBackend, ChatRequest, Decoding};
use crate::exec::{run_bounded, Attempt, AuditEntry, AuditLog};
use crate::persona::{Persona, PersonaTier};
use crate::prompts::{self, PromptError, MAX_CHOICES};

/// Cohort label for population-wide aggregates.
pub const NATIONAL_COHORT: &str = "ALL";

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum QuestionError {
    #[error("question {id}: needs 2 to {MAX_CHOICES} choices, has {count}")]
    ChoiceCount { id: String, count: usize },
    #[error("question {id}: ground truth has {got} entries for {expected} choices")]
    TruthLength { id: String, got: usize, expected: usize },
    #[error("question {id}: ground truth is not a probability vector (sum {sum})")]
    TruthNotNormalized { id: String, sum: f64 },
    #[error("question id is empty")]
    EmptyId,
    #[error("{path}:{line}: {message}")]
    File { path: String, line: usize, message: String },
    #[error("duplicate question id {0}")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyQuestion {
    pub id: String,
    #[serde(default)]
    pub topic: String,
    pub text: String,
    pub choices: Vec<String>,
    /// Whether the choices form an ordered scale.
    #[serde(default = "default_ordinal")]
    pub ordinal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<f64>>,
}

fn default_ordinal() -> bool {
    true
}

impl SurveyQuestion {
    pub fn validate(&self) -> Result<(), QuestionError> {
        if self.id.trim().is_empty() {
            return Err(QuestionError::EmptyId);
        }
        let n = self.choices.len();
        if !(2..=MAX_CHOICES).contains(&n) {
            return Err(QuestionError::ChoiceCount { id: self.id.clone(), count: n });
        }
        if let Some(gt) = &self.ground_truth {
            if gt.len() != n {
                return Err(QuestionError::TruthLength { id: self.id.clone(), got: gt.len(), expected: n });
            }
            let sum: f64 = gt.iter().sum();
            if gt.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(QuestionError::TruthNotNormalized { id: self.id.clone(), sum });
            }
        }
        Ok(())
    }
}

/// Reads a question JSONL file, validating each question.
pub fn load_questions(path: impl AsRef<Path>) -> Result<Vec<SurveyQuestion>, QuestionError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| QuestionError::File {
        path: display.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    read_questions(std::io::BufReader::new(file), &display)
}

pub fn read_questions<R: BufRead>(reader: R, source: &str) -> Result<Vec<SurveyQuestion>, QuestionError> {
    let mut out: Vec<SurveyQuestion> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let file_err = |message: String| QuestionError::File { path: source.to_string(), line: i + 1, message };
        let line = line.map_err(|e| file_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: SurveyQuestion = serde_json::from_str(&line).map_err(|e| file_err(e.to_string()))?;
        q.validate().map_err(|e| file_err(e.to_string()))?;
        if !seen.insert(q.id.clone()) {
            return Err(QuestionError::Duplicate(q.id));
        }
        out.push(q);
    }
    Ok(out)
}

pub fn render_simulation_prompt(persona: &Persona, question: &SurveyQuestion) -> Result<String, PromptError> {
    prompts::render_simulation_prompt(persona, &question.text, &question.choices)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnswerError {
    #[error("no answer letter found")]
    NoAnswer,
    #[error("answer {letter} is beyond the {n_choices} choices")]
    OutOfRange { letter: char, n_choices: usize },
    #[error("choice count {0} outside 2..=26")]
    ChoiceCount(usize),
}

fn answer_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?i)\banswer[\s*_]*:[\s*_]*[\[\(\{"'`]*\s*([a-z])(?:[^a-z0-9]|$)"#).expect("valid regex")
    })
}

/// Extracts the chosen option index from a simulation response.
///
/// Rules, in order:
/// 1. The last `Answer: <letter>` occurrence, case-insensitive. Markdown
///    emphasis around the colon, opening brackets/quotes before the letter
///    and any punctuation after it are allowed; the letter must not be
///    followed by another letter or digit.
/// 2. Otherwise the last line that is a single letter once brackets, quotes,
///    emphasis and trailing `.`/`)`/`:` are stripped.
///
/// A letter past the last choice is an error, never a fallback.
pub fn parse_answer(text: &str, n_choices: usize) -> Result<usize, AnswerError> {
    if !(2..=MAX_CHOICES).contains(&n_choices) {
        return Err(AnswerError::ChoiceCount(n_choices));
    }
    let letter = answer_pattern()
        .captures_iter(text)
        .last()
        .and_then(|c| c.get(1))
        .and_then(|m| m.as_str().chars().next())
        .or_else(|| lone_letter_line(text))
        .ok_or(AnswerError::NoAnswer)?;
    let upper = letter.to_ascii_uppercase();
    let index = (upper as u8 - b'A') as usize;
    if index >= n_choices {
        return Err(AnswerError::OutOfRange { letter: upper, n_choices });
    }
    Ok(index)
}

fn lone_letter_line(text: &str) -> Option<char> {
    text.lines().rev().find_map(|line| {
        let core = line
            .trim()
            .trim_matches(|c: char| matches!(c, '*' | '_' | '`' | '"' | '\'' | '[' | ']' | '(' | ')' | '{' | '}'))
            .trim_end_matches(['.', ':', ')'])
            .trim();
        let mut chars = core.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_alphabetic() => Some(c),
            _ => None,
        }
    })
}

/// Identifies a persona across pipeline artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PersonaRef {
    pub tier: PersonaTier,
    /// Index of the source meta persona.
    pub index: usize,
    /// Backend that generated the persona; `None` for sampled meta personas.
    pub generator: Option<String>,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyPersona {
    pub reference: PersonaRef,
    pub persona: Persona,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub question_id: String,
    pub persona: PersonaRef,
    pub simulator: String,
    pub n_choices: usize,
    /// 0-based choice index.
    pub chosen: usize,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyFailure {
    pub persona_index: usize,
    pub question_id: String,
    pub reason: String,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PairOutcome {
    Answered(ResponseRecord),
    Failed(SurveyFailure),
}

#[derive(Debug, Clone)]
pub struct SurveyConfig {
    pub retry_limit: usize,
    pub decoding: Decoding,
    pub concurrency: usize,
    /// (persona index, question id) pairs already answered.
    pub skip: HashSet<(usize, String)>,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            retry_limit: 3,
            decoding: Decoding::SIMULATION,
            concurrency: 1,
            skip: HashSet::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SurveyError {
    #[error("survey needs at least one persona and one question")]
    Empty,
    #[error(transparent)]
    Question(#[from] QuestionError),
    #[error("retry limit must be at least 1")]
    RetryLimit,
    #[error("concurrency bound must be at least 1")]
    Concurrency,
}

#[derive(Debug, Default)]
pub struct SurveyOutcome {
    /// Records in persona-major, question-minor order.
    pub records: Vec<ResponseRecord>,
    pub failures: Vec<SurveyFailure>,
    pub audit: Vec<AuditEntry>,
}

pub fn pair_task(persona_index: usize, question_id: &str) -> String {
    format!("persona:{persona_index}/question:{question_id}")
}

pub fn run_survey(
    personas: &[SurveyPersona],
    questions: &[SurveyQuestion],
    backend: &dyn ChatBackend,
    config: &SurveyConfig,
) -> Result<SurveyOutcome, SurveyError> {
    run_survey_with(personas, questions, backend, config, &|_, _| {})
}

/// Like [`run_survey`], calling `sink` with each pair's outcome and audit
/// entry as it finishes.
pub fn run_survey_with(
    personas: &[SurveyPersona],
    questions: &[SurveyQuestion],
    backend: &dyn ChatBackend,
    config: &SurveyConfig,
    sink: &(dyn Fn(&PairOutcome, &AuditEntry) + Sync),
) -> Result<SurveyOutcome, SurveyError> {
    if personas.is_empty() || questions.is_empty() {
        return Err(SurveyError::Empty);
    }
    if config.retry_limit == 0 {
        return Err(SurveyError::RetryLimit);
    }
    if config.concurrency == 0 {
        return Err(SurveyError::Concurrency);
    }
    for q in questions {
        q.validate()?;
    }
    let mut pairs = Vec::new();
    for (pi, p) in personas.iter().enumerate() {
        for (qi, q) in questions.iter().enumerate() {
            if !config.skip.contains(&(p.reference.index, q.id.clone())) {
                pairs.push((pi, qi));
            }
        }
    }
    let log = AuditLog::new();
    let outcomes = run_bounded(pairs.len(), config.concurrency, |slot| {
        let (pi, qi) = pairs[slot];
        let (outcome, entry) = ask(&personas[pi], &questions[qi], backend, config);
        sink(&outcome, &entry);
        log.append(entry);
        (slot, outcome)
    });
    let mut out = SurveyOutcome::default();
    for (_, o) in outcomes {
        match o {
            PairOutcome::Answered(r) => out.records.push(r),
            PairOutcome::Failed(f) => out.failures.push(f),
        }
    }
    let order: HashMap<String, usize> = pairs
        .iter()
        .enumerate()
        .map(|(slot, &(pi, qi))| (pair_task(personas[pi].reference.index, &questions[qi].id), slot))
        .collect();
    let mut audit = log.into_entries();
    audit.sort_by_key(|e| order.get(&e.task).copied().unwrap_or(usize::MAX));
    out.audit = audit;
    Ok(out)
}

fn ask(
    persona: &SurveyPersona,
    question: &SurveyQuestion,
    backend: &dyn ChatBackend,
    config: &SurveyConfig,
) -> (PairOutcome, AuditEntry) {
    let task = pair_task(persona.reference.index, &question.id);
    let prompt = match render_simulation_prompt(&persona.persona, question) {
        Ok(p) => p,
        Err(e) => {
            let failure = SurveyFailure {
                persona_index: persona.reference.index,
                question_id: question.id.clone(),
                reason: e.to_string(),
                attempts: 0,
            };
            return (PairOutcome::Failed(failure), AuditEntry { task, success: false, attempts: Vec::new() });
        }
    };
    let request = ChatRequest { system: None, user: &prompt, decoding: config.decoding };
    let mut attempts = Vec::new();
    let mut reason = String::new();
    for attempt in 1..=config.retry_limit {
        let mut rec = Attempt { attempt, response: None, error: None, violations: Vec::new() };
        match backend.complete(&request) {
            Err(e) => reason = e.to_string(),
            Ok(text) => {
                rec.response = Some(text.clone());
                match parse_answer(&text, question.choices.len()) {
                    Ok(chosen) => {
                        attempts.push(rec);
                        let record = ResponseRecord {
                            question_id: question.id.clone(),
                            persona: persona.reference.clone(),
                            simulator: backend.id().to_string(),
                            n_choices: question.choices.len(),
                            chosen,
                            raw: text,
                        };
                        return (PairOutcome::Answered(record), AuditEntry { task, success: true, attempts });
                    }
                    Err(e) => reason = e.to_string(),
                }
            }
        }
        rec.error = Some(reason.clone());
        attempts.push(rec);
    }
    let failure = SurveyFailure {
        persona_index: persona.reference.index,
        question_id: question.id.clone(),
        reason,
        attempts: config.retry_limit,
    };
    (PairOutcome::Failed(failure), AuditEntry { task, success: false, attempts })
}

/// Distribution of chosen options for one question within one cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDistribution {
    pub question_id: String,
    pub cohort: String,
    pub probabilities: Vec<f64>,
    pub counts: Vec<u64>,
    pub support: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggregateError {
    #[error("question {question_id} has records with {first} and {second} choices")]
    MixedChoiceCounts { question_id: String, first: usize, second: usize },
    #[error("record for {question_id} chose {chosen} of {n_choices} choices")]
    ChoiceOutOfRange { question_id: String, chosen: usize, n_choices: usize },
}

/// Raw per-(question, cohort) choice counts. Merging two tallies is the same
/// as tallying the concatenated records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChoiceTally {
    counts: BTreeMap<(String, String), Vec<u64>>,
    n_choices: HashMap<String, usize>,
}

impl ChoiceTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, record: &ResponseRecord, cohort: String) -> Result<(), AggregateError> {
        let n = record.n_choices;
        match self.n_choices.get(&record.question_id) {
            Some(&existing) if existing != n => {
                return Err(AggregateError::MixedChoiceCounts {
                    question_id: record.question_id.clone(),
                    first: existing,
                    second: n,
                })
            }
            _ => {
                self.n_choices.insert(record.question_id.clone(), n);
            }
        }
        if record.chosen >= n {
            return Err(AggregateError::ChoiceOutOfRange {
                question_id: record.question_id.clone(),
                chosen: record.chosen,
                n_choices: n,
            });
        }
        self.counts
            .entry((record.question_id.clone(), cohort))
            .or_insert_with(|| vec![0; n])[record.chosen] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ChoiceTally) -> Result<(), AggregateError> {
        for (q, &n) in &other.n_choices {
            if let Some(&existing) = self.n_choices.get(q) {
                if existing != n {
                    return Err(AggregateError::MixedChoiceCounts { question_id: q.clone(), first: existing, second: n });
                }
            }
            self.n_choices.insert(q.clone(), n);
        }
        for (key, counts) in &other.counts {
            let slot = self.counts.entry(key.clone()).or_insert_with(|| vec![0; counts.len()]);
            for (s, c) in slot.iter_mut().zip(counts) {
                *s += c;
            }
        }
        Ok(())
    }

    /// Distributions sorted by (question id, cohort).
    pub fn distributions(&self) -> Vec<ChoiceDistribution> {
        self.counts
            .iter()
            .filter_map(|((q, cohort), counts)| {
                let support: u64 = counts.iter().sum();
                (support > 0).then(|| ChoiceDistribution {
                    question_id: q.clone(),
                    cohort: cohort.clone(),
                    probabilities: counts.iter().map(|&c| c as f64 / support as f64).collect(),
                    counts: counts.clone(),
                    support,
                })
            })
            .collect()
    }
}

/// Groups records by question and `cohort_of(record)` and normalizes counts.
pub fn aggregate<F>(records: &[ResponseRecord], cohort_of: F) -> Result<Vec<ChoiceDistribution>, AggregateError>
where
    F: Fn(&ResponseRecord) -> String,
{
    let mut tally = ChoiceTally::new();
    for r in records {
        tally.add(r, cohort_of(r))?;
    }
    Ok(tally.distributions())
}

/// Cohort by the persona's state.
pub fn by_state(record: &ResponseRecord) -> String {
    record.persona.state.clone()
}

/// Single population-wide cohort.
pub fn national(_: &ResponseRecord) -> String {
    NATIONAL_COHORT.to_string()
}

/// Writes `question_id,cohort,choice_index,probability,count` rows.
pub fn write_aggregates_csv<W: std::io::Write>(writer: W, dists: &[ChoiceDistribution]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["question_id", "cohort", "choice_index", "probability", "count"])?;
    for d in dists {
        for (i, (p, c)) in d.probabilities.iter().zip(&d.counts).enumerate() {
            w.write_record([
                d.question_id.as_str(),
                d.cohort.as_str(),
                &i.to_string(),
                &p.to_string(),
                &c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendId, FnBackend, ScriptedBackend};
    use crate::census::MetaPersona;
    use proptest::prelude::*;

    fn question(id: &str, n: usize) -> SurveyQuestion {
        SurveyQuestion {
            id: id.into(),
            topic: "t".into(),
            text: format!("Question {id}?"),
            choices: (0..n).map(|i| format!("option {i}")).collect(),
            ordinal: true,
            ground_truth: None,
        }
    }

    fn persona(index: usize, state: &str) -> SurveyPersona {
        let meta = MetaPersona { age: 30 + index as u32, sex: "Male".into(), race: "White".into(), state: state.into() };
        SurveyPersona {
            reference: PersonaRef { tier: PersonaTier::Meta, index, generator: None, state: state.into() },
            persona: Persona::Meta(meta),
        }
    }

    fn record(q: &str, state: &str, chosen: usize, n: usize) -> ResponseRecord {
        ResponseRecord {
            question_id: q.into(),
            persona: persona(0, state).reference,
            simulator: "mock/m".into(),
            n_choices: n,
            chosen,
            raw: String::new(),
        }
    }

    #[test]
    fn parse_answer_basic_forms() {
        assert_eq!(parse_answer("Answer: B", 4), Ok(1));
        assert_eq!(parse_answer("answer: [a]", 4), Ok(0));
        assert_eq!(parse_answer("Reasoning... Answer: C", 4), Ok(2));
        assert_eq!(parse_answer("Answer: A\nActually, Answer: D.", 4), Ok(3));
        assert_eq!(parse_answer("**Answer:** (b)", 2), Ok(1));
        assert_eq!(parse_answer("B", 2), Ok(1));
        assert_eq!(parse_answer("I pick\n(c).", 3), Ok(2));
    }

    #[test]
    fn parse_answer_failures() {
        assert_eq!(parse_answer("Answer: [Letter]", 4), Err(AnswerError::NoAnswer));
        assert_eq!(parse_answer("No idea", 4), Err(AnswerError::NoAnswer));
        assert_eq!(parse_answer("Answer: E", 4), Err(AnswerError::OutOfRange { letter: 'E', n_choices: 4 }));
        assert_eq!(parse_answer("Answer: A", 1), Err(AnswerError::ChoiceCount(1)));
    }

    #[test]
    fn question_validation() {
        assert!(question("q", 2).validate().is_ok());
        assert!(matches!(question("q", 1).validate(), Err(QuestionError::ChoiceCount { .. })));
        let mut q = question("q", 2);
        q.ground_truth = Some(vec![0.5, 0.4]);
        assert!(matches!(q.validate(), Err(QuestionError::TruthNotNormalized { .. })));
        q.ground_truth = Some(vec![1.0]);
        assert!(matches!(q.validate(), Err(QuestionError::TruthLength { .. })));
    }

    #[test]
    fn question_file_format() {
        let text = r#"{"id":"q1","topic":"climate","text":"Which car?","choices":["Eco","Cheap"],"ordinal":false,"ground_truth":[0.4,0.6]}

{"id":"q2","text":"Rate it","choices":["Low","Mid","High"]}
"#;
        let qs = read_questions(text.as_bytes(), "mem").unwrap();
        assert_eq!(qs.len(), 2);
        assert!(!qs[0].ordinal);
        assert!(qs[1].ordinal);
        assert_eq!(qs[1].ground_truth, None);
        let dup = "{\"id\":\"a\",\"text\":\"t\",\"choices\":[\"x\",\"y\"]}\n".repeat(2);
        assert_eq!(read_questions(dup.as_bytes(), "mem").unwrap_err(), QuestionError::Duplicate("a".into()));
        let bad = read_questions("{\"id\":\"a\"}\n".as_bytes(), "mem").unwrap_err();
        assert!(matches!(bad, QuestionError::File { line: 1, .. }));
    }

    #[test]
    fn always_a_closed_loop() {
        let backend = FnBackend::new(BackendId::new("mock", "a"), |_: &ChatRequest<'_>| Ok("Answer: A".into()));
        let personas: Vec<_> = (0..3).map(|i| persona(i, "Ohio")).collect();
        let qs = vec![question("q1", 3), question("q2", 2)];
        let out = run_survey(&personas, &qs, &backend, &SurveyConfig::default()).unwrap();
        assert_eq!(out.records.len(), 6);
        assert!(out.records.iter().all(|r| r.chosen == 0));
        assert_eq!(
            out.records.iter().map(|r| (r.persona.index, r.question_id.as_str())).collect::<Vec<_>>(),
            vec![(0, "q1"), (0, "q2"), (1, "q1"), (1, "q2"), (2, "q1"), (2, "q2")]
        );
    }

    #[test]
    fn scripted_letters_recount() {
        let script = ["Answer: A", "Answer: B", "Answer: B", "Answer: A", "Answer: C", "Answer: B"];
        let backend = ScriptedBackend::from_responses(BackendId::new("mock", "s"), script);
        let personas: Vec<_> = (0..6).map(|i| persona(i, "Utah")).collect();
        let out = run_survey(&personas, &[question("q", 3)], &backend, &SurveyConfig::default()).unwrap();
        let dists = aggregate(&out.records, by_state).unwrap();
        // recount the script's letters directly
        let mut expected = [0u64; 3];
        for s in script {
            expected[(s.as_bytes()[s.len() - 1] - b'A') as usize] += 1;
        }
        assert_eq!(dists[0].counts, expected.to_vec());
    }

    #[test]
    fn unparsable_answers_retry_then_fail() {
        let backend = ScriptedBackend::from_responses(BackendId::new("mock", "s"), ["hmm", "Answer: B", "?", "?", "?"]);
        let personas = vec![persona(0, "Ohio"), persona(1, "Ohio")];
        let out = run_survey(&personas, &[question("q", 2)], &backend, &SurveyConfig::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].chosen, 1);
        assert_eq!(out.audit[0].attempts.len(), 2);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].persona_index, 1);
        assert_eq!(out.failures[0].attempts, 3);
    }

    #[test]
    fn skip_set_is_honored() {
        let backend = FnBackend::new(BackendId::new("mock", "a"), |_: &ChatRequest<'_>| Ok("Answer: B".into()));
        let personas: Vec<_> = (0..2).map(|i| persona(i, "Ohio")).collect();
        let mut cfg = SurveyConfig { concurrency: 3, ..Default::default() };
        cfg.skip.insert((1, "q1".into()));
        let out = run_survey(&personas, &[question("q1", 2), question("q2", 2)], &backend, &cfg).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(!out.records.iter().any(|r| r.persona.index == 1 && r.question_id == "q1"));
    }

    #[test]
    fn aggregate_point_mass_and_symmetry() {
        let recs: Vec<_> = (0..10).map(|_| record("q", "Ohio", 0, 3)).collect();
        let d = aggregate(&recs, national).unwrap();
        assert_eq!(d[0].probabilities, vec![1.0, 0.0, 0.0]);
        assert_eq!(d[0].support, 10);
        let recs: Vec<_> = (0..6).map(|i| record("q", "Ohio", i % 2, 2)).collect();
        assert_eq!(aggregate(&recs, national).unwrap()[0].probabilities, vec![0.5, 0.5]);
    }

    #[test]
    fn aggregate_rejects_mixed_choice_counts() {
        let recs = vec![record("q", "Ohio", 0, 2), record("q", "Ohio", 0, 3)];
        assert!(matches!(aggregate(&recs, national), Err(AggregateError::MixedChoiceCounts { .. })));
    }

    #[test]
    fn aggregates_csv() {
        let recs = vec![record("q", "Ohio", 0, 2), record("q", "Ohio", 1, 2), record("q", "Utah", 1, 2)];
        let mut buf = Vec::new();
        write_aggregates_csv(&mut buf, &aggregate(&recs, by_state).unwrap()).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "question_id,cohort,choice_index,probability,count\n\
             q,Ohio,0,0.5,1\nq,Ohio,1,0.5,1\nq,Utah,0,0,0\nq,Utah,1,1,1\n"
        );
    }

    proptest! {
        #[test]
        fn aggregation_is_linear(a in prop::collection::vec((0usize..3, 0usize..4), 0..40),
                                 b in prop::collection::vec((0usize..3, 0usize..4), 0..40)) {
            let states = ["Ohio", "Utah", "Iowa"];
            let to_recs = |v: &[(usize, usize)]| -> Vec<ResponseRecord> {
                v.iter().map(|&(s, c)| record("q", states[s], c, 4)).collect()
            };
            let (ra, rb) = (to_recs(&a), to_recs(&b));
            let mut ta = ChoiceTally::new();
            for r in &ra { ta.add(r, by_state(r)).unwrap(); }
            let mut tb = ChoiceTally::new();
            for r in &rb { tb.add(r, by_state(r)).unwrap(); }
            ta.merge(&tb).unwrap();
            let all: Vec<_> = ra.into_iter().chain(rb).collect();
            prop_assert_eq!(ta.distributions(), aggregate(&all, by_state).unwrap());
        }

        #[test]
        fn conformant_outputs_always_parse(n in 2usize..=26, pick in 0usize..26, lower in any::<bool>(),
                                           prefix in "[a-zA-Z ,.]{0,30}", bracket in any::<bool>()) {
            let idx = pick % n;
            let mut letter = prompts::choice_letter(idx).to_string();
            if lower { letter = letter.to_lowercase(); }
            if bracket { letter = format!("[{letter}]"); }
            let text = format!("{prefix}\nAnswer: {letter}");
            prop_assert_eq!(parse_answer(&text, n), Ok(idx));
        }
    }
}
