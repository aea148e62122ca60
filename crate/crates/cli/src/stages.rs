//! The sample, generate, simulate and validate commands.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use personasim_core::catalog::ValueCatalog;
use personasim_core::census::{load_joint_table, read_meta_jsonl, sample_meta_personas, write_meta_jsonl, MetaPersona};
use personasim_core::exec::AuditEntry;
use personasim_core::generation::{generate_personas_with, GenerationFailure, GenerationJob, MetaOutcome};
use personasim_core::persona::{
    persona_from_json, persona_to_json, persona_to_record, record_to_persona, validate_tabular, Persona, PersonaRecord,
    PersonaTier, Violation,
};
use personasim_core::simulation::{
    load_questions, run_survey_with, PairOutcome, PersonaRef, ResponseRecord, SurveyConfig, SurveyFailure,
    SurveyPersona, SurveyQuestion,
};
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    file_digest, jsonl_bytes, read_jsonl, sha256_hex, unix_now, verify_upstream, with_suffix, write_atomic, Journal,
    RunLayout, RunManifest, Stage,
};
use crate::config::{BackendSpec, RunConfig};
use crate::error::{CliError, Result};

/// Generator directory and label for sampled meta personas.
pub const SAMPLED: &str = "sampled";

/// Persona sets simulated by `simulate`, written next to the records.
pub const SETS_INDEX: &str = "sets.json";

pub fn layout(cfg: &RunConfig) -> RunLayout {
    RunLayout::new(cfg.run_dir())
}

pub fn config_snapshot(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config always serializes")
}

fn external_key(path: &Path) -> String {
    path.display().to_string()
}

/// Counts of work done by a generate or simulate run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageSummary {
    pub produced: usize,
    pub resumed: usize,
    pub failed: usize,
    /// Failures whose last attempt never got a response from the backend.
    pub transport_failures: usize,
    pub outputs: Vec<PathBuf>,
}

impl StageSummary {
    fn absorb(&mut self, other: StageSummary) {
        self.produced += other.produced;
        self.resumed += other.resumed;
        self.failed += other.failed;
        self.transport_failures += other.transport_failures;
        self.outputs.extend(other.outputs);
    }
}

fn is_transport_failure(entry: &AuditEntry) -> bool {
    !entry.success && entry.attempts.last().is_some_and(|a| a.response.is_none())
}

pub fn cmd_sample(cfg: &RunConfig) -> Result<StageSummary> {
    let started = unix_now();
    let layout = layout(cfg);
    let table = &cfg.joint_table;
    let dist = load_joint_table(table).map_err(|e| CliError::Data(format!("{}: {e}", table.display())))?;
    let metas = sample_meta_personas(&dist, cfg.per_state, cfg.seed).map_err(|e| CliError::Data(e.to_string()))?;
    let mut bytes = Vec::new();
    write_meta_jsonl(&mut bytes, &metas).map_err(|e| CliError::Data(e.to_string()))?;
    let out = layout.metas();
    write_atomic(&out, &bytes)?;

    let mut manifest = RunManifest::new(Stage::Sample, config_snapshot(cfg), started);
    manifest.inputs.insert(external_key(table), file_digest(table)?);
    manifest.record_output(&layout, &out)?;
    manifest.notes.insert("per_state".into(), cfg.per_state.to_string());
    manifest.notes.insert("seed".into(), cfg.seed.to_string());
    manifest.write(&layout, Stage::Sample)?;
    Ok(StageSummary { produced: metas.len(), outputs: vec![out], ..Default::default() })
}

fn load_metas(layout: &RunLayout) -> Result<Vec<MetaPersona>> {
    let path = layout.metas();
    let file = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
    read_meta_jsonl(BufReader::new(file)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
struct GenerationEntry {
    index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    persona: Option<PersonaRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failure: Option<GenerationFailure>,
    audit: AuditEntry,
}

/// Generates every configured (generator, tier) persona set, optionally
/// restricted to one tier and/or generator. Completed personas recorded in
/// each set's journal are not regenerated.
pub fn cmd_generate(cfg: &RunConfig, tier: Option<PersonaTier>, generator: Option<&str>) -> Result<StageSummary> {
    let started = unix_now();
    let layout = layout(cfg);
    let sample = verify_upstream(&layout, Stage::Sample)?;
    let metas = load_metas(&layout)?;
    let metas_rel = layout.relative(&layout.metas());
    let metas_digest = sample.outputs.get(&metas_rel).cloned().unwrap_or_default();

    let tiers: Vec<PersonaTier> = cfg.generated_tiers().into_iter().filter(|t| tier.is_none_or(|f| f == *t)).collect();
    if let Some(t) = tier {
        if tiers.is_empty() {
            return Err(CliError::Config(format!("tier {t} is not listed in the config")));
        }
    }
    let specs: Vec<&BackendSpec> = cfg.generators.iter().filter(|g| generator.is_none_or(|n| n == g.name)).collect();
    if let Some(n) = generator {
        if specs.is_empty() {
            return Err(CliError::Config(format!("generator {n} is not configured")));
        }
    }

    let mut manifest = RunManifest::new(Stage::Generate, config_snapshot(cfg), started);
    manifest.inputs.insert(metas_rel.clone(), metas_digest.clone());
    // keep outputs of sets not regenerated now, if they came from the same metas
    if let Some(prev) = RunManifest::read(&layout, Stage::Generate)? {
        if prev.inputs.get(&metas_rel) == Some(&metas_digest) {
            for (rel, digest) in prev.outputs {
                if layout.absolute(&rel).exists() {
                    manifest.outputs.insert(rel, digest);
                }
            }
        }
    }

    let catalog = ValueCatalog::census();
    let mut summary = StageSummary::default();
    for spec in specs {
        let backend = spec.build()?;
        for &t in &tiers {
            let key = sha256_hex(
                serde_json::json!({
                    "metas": metas_digest,
                    "tier": t,
                    "generator": spec,
                    "retries": cfg.retries.generation,
                    "decoding": cfg.decoding.generation,
                })
                .to_string()
                .as_bytes(),
            );
            let out = layout.personas(&spec.name, t.as_str());
            let s = generate_set(&metas, t, backend.as_ref(), &catalog, cfg, &out, &key)?;
            manifest.record_output(&layout, &out)?;
            manifest.record_output(&layout, &with_suffix(&out, "audit"))?;
            summary.absorb(s);
        }
    }
    manifest.write(&layout, Stage::Generate)?;
    Ok(summary)
}

fn generate_set(
    metas: &[MetaPersona],
    tier: PersonaTier,
    backend: &dyn personasim_core::backend::ChatBackend,
    catalog: &ValueCatalog,
    cfg: &RunConfig,
    out: &Path,
    key: &str,
) -> Result<StageSummary> {
    let (journal, prior) = Journal::open::<GenerationEntry>(&with_suffix(out, "journal"), key)?;
    let mut done: BTreeMap<usize, GenerationEntry> = BTreeMap::new();
    let mut latest_failures: BTreeMap<usize, GenerationEntry> = BTreeMap::new();
    for e in prior {
        if e.persona.is_some() {
            latest_failures.remove(&e.index);
            done.insert(e.index, e);
        } else if !done.contains_key(&e.index) {
            latest_failures.insert(e.index, e);
        }
    }
    let resumed = done.len();
    let mut job = GenerationJob::new(metas.to_vec(), tier);
    job.retry_limit = cfg.retries.generation;
    job.decoding = cfg.decoding.generation;
    job.concurrency = cfg.concurrency;
    job.skip = done.keys().copied().collect();

    let journal_error: Mutex<Option<CliError>> = Mutex::new(None);
    let sink = |outcome: &MetaOutcome, audit: &AuditEntry| {
        let entry = match outcome {
            MetaOutcome::Generated(g) => GenerationEntry {
                index: g.index,
                persona: Some(persona_to_record(&g.persona)),
                failure: None,
                audit: audit.clone(),
            },
            MetaOutcome::Failed(f) => {
                GenerationEntry { index: f.index, persona: None, failure: Some(f.clone()), audit: audit.clone() }
            }
        };
        if let Err(e) = journal.append(&entry) {
            journal_error.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(e);
        }
    };
    let outcome = generate_personas_with(&job, backend, catalog, &sink)
        .map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(e) = journal_error.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e);
    }

    let produced = outcome.personas.len();
    for (p, audit) in outcome.personas.iter().zip(outcome.audit.iter().filter(|a| a.success)) {
        latest_failures.remove(&p.index);
        done.insert(
            p.index,
            GenerationEntry { index: p.index, persona: Some(persona_to_record(&p.persona)), failure: None, audit: audit.clone() },
        );
    }
    for (f, audit) in outcome.failures.iter().zip(outcome.audit.iter().filter(|a| !a.success)) {
        latest_failures.insert(
            f.index,
            GenerationEntry { index: f.index, persona: None, failure: Some(f.clone()), audit: audit.clone() },
        );
    }

    let mut lines = Vec::new();
    for (&index, e) in &done {
        let record = e.persona.as_ref().expect("done entries hold personas");
        let persona = record_to_persona(record).map_err(|err| CliError::Data(format!("journal entry {index}: {err}")))?;
        lines.push(persona_to_json(&persona, Some(index)));
    }
    let mut bytes = lines.join("\n").into_bytes();
    if !bytes.is_empty() {
        bytes.push(b'\n');
    }
    write_atomic(out, &bytes)?;

    let mut audit: BTreeMap<usize, &AuditEntry> = done.iter().map(|(i, e)| (*i, &e.audit)).collect();
    audit.extend(latest_failures.iter().map(|(i, e)| (*i, &e.audit)));
    let audit: Vec<&AuditEntry> = audit.into_values().collect();
    let audit_path = with_suffix(out, "audit");
    write_atomic(&audit_path, &jsonl_bytes(&audit))?;

    Ok(StageSummary {
        produced,
        resumed,
        failed: latest_failures.len(),
        transport_failures: latest_failures.values().filter(|e| is_transport_failure(&e.audit)).count(),
        outputs: vec![out.to_path_buf(), audit_path],
    })
}

/// Loads and concatenates question files, rejecting ids repeated across files.
pub fn load_all_questions(files: &[PathBuf]) -> Result<Vec<SurveyQuestion>> {
    let mut out: Vec<SurveyQuestion> = Vec::new();
    let mut seen = HashSet::new();
    for f in files {
        for q in load_questions(f).map_err(|e| CliError::Data(e.to_string()))? {
            if !seen.insert(q.id.clone()) {
                return Err(CliError::Data(format!("{}: question id {} repeats an earlier file", f.display(), q.id)));
            }
            out.push(q);
        }
    }
    Ok(out)
}

/// One simulated persona set, as listed in `records/sets.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetEntry {
    /// Simulator config name and backend label.
    pub simulator: String,
    pub simulator_label: String,
    /// Generator config name, or `sampled` for meta personas.
    pub generator: String,
    /// Generator backend label; absent for meta personas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_label: Option<String>,
    pub tier: PersonaTier,
    /// Run-relative persona source and record paths.
    pub personas: String,
    pub records: String,
}

struct PersonaSet {
    generator: String,
    generator_label: Option<String>,
    tier: PersonaTier,
    source: PathBuf,
    personas: Vec<SurveyPersona>,
}

fn persona_sets(cfg: &RunConfig, layout: &RunLayout) -> Result<Vec<PersonaSet>> {
    let metas = load_metas(layout)?;
    let mut sets = vec![PersonaSet {
        generator: SAMPLED.to_string(),
        generator_label: None,
        tier: PersonaTier::Meta,
        source: layout.metas(),
        personas: metas
            .into_iter()
            .enumerate()
            .map(|(index, m)| SurveyPersona {
                reference: PersonaRef { tier: PersonaTier::Meta, index, generator: None, state: m.state.clone() },
                persona: Persona::Meta(m),
            })
            .collect(),
    }];
    for spec in &cfg.generators {
        let label = spec.build()?.id().to_string();
        for tier in cfg.generated_tiers() {
            let path = layout.personas(&spec.name, tier.as_str());
            let personas = read_persona_file(&path)?
                .into_iter()
                .map(|(line, persona, index)| {
                    let index = index.ok_or_else(|| {
                        CliError::Data(format!("{}:{line}: persona has no meta index", path.display()))
                    })?;
                    Ok(SurveyPersona {
                        reference: PersonaRef {
                            tier,
                            index,
                            generator: Some(label.clone()),
                            state: persona.meta().state.clone(),
                        },
                        persona,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            sets.push(PersonaSet {
                generator: spec.name.clone(),
                generator_label: Some(label.clone()),
                tier,
                source: path,
                personas,
            });
        }
    }
    Ok(sets)
}

/// Reads a persona JSONL file as (line number, persona, meta index).
pub fn read_persona_file(path: &Path) -> Result<Vec<(usize, Persona, Option<usize>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (p, idx) = persona_from_json(l).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
            Ok((i + 1, p, idx))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct SurveyEntry {
    persona_index: usize,
    question_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    record: Option<ResponseRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failure: Option<SurveyFailure>,
    audit: AuditEntry,
}

/// Asks every persona set every question on every simulator. Answered pairs
/// recorded in a set's journal are not asked again.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<StageSummary> {
    let started = unix_now();
    let layout = layout(cfg);
    let sample = verify_upstream(&layout, Stage::Sample)?;
    let mut manifest = RunManifest::new(Stage::Simulate, config_snapshot(cfg), started);
    manifest.inputs.extend(sample.outputs.clone());
    if !cfg.generated_tiers().is_empty() {
        let generate = verify_upstream(&layout, Stage::Generate)?;
        let metas_rel = layout.relative(&layout.metas());
        if generate.inputs.get(&metas_rel) != sample.outputs.get(&metas_rel) {
            return Err(CliError::Data(format!(
                "stale upstream: personas were generated from a different {metas_rel}; rerun `personasim generate`"
            )));
        }
        for spec in &cfg.generators {
            for tier in cfg.generated_tiers() {
                let rel = layout.relative(&layout.personas(&spec.name, tier.as_str()));
                let digest = generate.outputs.get(&rel).ok_or_else(|| {
                    CliError::Data(format!("{rel} is not in the generate manifest; run `personasim generate`"))
                })?;
                manifest.inputs.insert(rel, digest.clone());
            }
        }
    }
    let questions = load_all_questions(&cfg.questions)?;
    for q in &cfg.questions {
        manifest.inputs.insert(external_key(q), file_digest(q)?);
    }
    let question_digest = sha256_hex(serde_json::to_string(&questions).expect("serializable").as_bytes());
    let sets = persona_sets(cfg, &layout)?;

    let mut summary = StageSummary::default();
    let mut index = Vec::new();
    for spec in &cfg.simulators {
        let backend = spec.build()?;
        for set in &sets {
            let out = layout.records(&spec.name, &set.generator, set.tier.as_str());
            let key = sha256_hex(
                serde_json::json!({
                    "personas": file_digest(&set.source)?,
                    "questions": question_digest,
                    "simulator": spec,
                    "retries": cfg.retries.simulation,
                    "decoding": cfg.decoding.simulation,
                })
                .to_string()
                .as_bytes(),
            );
            summary.absorb(simulate_set(set, &questions, backend.as_ref(), cfg, &out, &key)?);
            manifest.record_output(&layout, &out)?;
            manifest.record_output(&layout, &with_suffix(&out, "audit"))?;
            index.push(SetEntry {
                simulator: spec.name.clone(),
                simulator_label: backend.id().to_string(),
                generator: set.generator.clone(),
                generator_label: set.generator_label.clone(),
                tier: set.tier,
                personas: layout.relative(&set.source),
                records: layout.relative(&out),
            });
        }
    }
    let index_path = layout.stage_dir(Stage::Simulate).join(SETS_INDEX);
    let mut bytes = serde_json::to_vec_pretty(&index).expect("serializable");
    bytes.push(b'\n');
    write_atomic(&index_path, &bytes)?;
    manifest.record_output(&layout, &index_path)?;
    manifest
        .notes
        .insert("choices".into(), "question files are used as given, including any refusal options".into());
    manifest.write(&layout, Stage::Simulate)?;
    Ok(summary)
}

fn simulate_set(
    set: &PersonaSet,
    questions: &[SurveyQuestion],
    backend: &dyn personasim_core::backend::ChatBackend,
    cfg: &RunConfig,
    out: &Path,
    key: &str,
) -> Result<StageSummary> {
    let (journal, prior) = Journal::open::<SurveyEntry>(&with_suffix(out, "journal"), key)?;
    let mut done: BTreeMap<(usize, String), SurveyEntry> = BTreeMap::new();
    let mut failures: BTreeMap<(usize, String), SurveyEntry> = BTreeMap::new();
    for e in prior {
        let k = (e.persona_index, e.question_id.clone());
        if e.record.is_some() {
            failures.remove(&k);
            done.insert(k, e);
        } else if !done.contains_key(&k) {
            failures.insert(k, e);
        }
    }
    let resumed = done.len();
    let mut produced = 0;
    if !set.personas.is_empty() {
        let config = SurveyConfig {
            retry_limit: cfg.retries.simulation,
            decoding: cfg.decoding.simulation,
            concurrency: cfg.concurrency,
            skip: done.keys().cloned().collect(),
        };
        let journal_error: Mutex<Option<CliError>> = Mutex::new(None);
        let sink = |outcome: &PairOutcome, audit: &AuditEntry| {
            let entry = match outcome {
                PairOutcome::Answered(r) => SurveyEntry {
                    persona_index: r.persona.index,
                    question_id: r.question_id.clone(),
                    record: Some(r.clone()),
                    failure: None,
                    audit: audit.clone(),
                },
                PairOutcome::Failed(f) => SurveyEntry {
                    persona_index: f.persona_index,
                    question_id: f.question_id.clone(),
                    record: None,
                    failure: Some(f.clone()),
                    audit: audit.clone(),
                },
            };
            if let Err(e) = journal.append(&entry) {
                journal_error.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(e);
            }
        };
        let outcome = run_survey_with(&set.personas, questions, backend, &config, &sink)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(e) = journal_error.into_inner().unwrap_or_else(|p| p.into_inner()) {
            return Err(e);
        }
        produced = outcome.records.len();
        let audits: BTreeMap<&str, &AuditEntry> = outcome.audit.iter().map(|a| (a.task.as_str(), a)).collect();
        let audit_for = |pi: usize, q: &str| {
            audits
                .get(personasim_core::simulation::pair_task(pi, q).as_str())
                .map(|a| (*a).clone())
                .expect("every pair has an audit entry")
        };
        for r in outcome.records {
            let k = (r.persona.index, r.question_id.clone());
            failures.remove(&k);
            let audit = audit_for(k.0, &k.1);
            done.insert(k.clone(), SurveyEntry { persona_index: k.0, question_id: k.1, record: Some(r), failure: None, audit });
        }
        for f in outcome.failures {
            let k = (f.persona_index, f.question_id.clone());
            let audit = audit_for(k.0, &k.1);
            failures.insert(k.clone(), SurveyEntry { persona_index: k.0, question_id: k.1, record: None, failure: Some(f), audit });
        }
    }

    // canonical order: persona order within the set, then question order
    let question_pos: BTreeMap<&str, usize> = questions.iter().enumerate().map(|(i, q)| (q.id.as_str(), i)).collect();
    let persona_pos: BTreeMap<usize, usize> =
        set.personas.iter().enumerate().map(|(i, p)| (p.reference.index, i)).collect();
    let order = |k: &(usize, String)| {
        (
            persona_pos.get(&k.0).copied().unwrap_or(usize::MAX),
            question_pos.get(k.1.as_str()).copied().unwrap_or(usize::MAX),
        )
    };
    let mut records: Vec<(&(usize, String), &SurveyEntry)> =
        done.iter().filter(|(k, _)| persona_pos.contains_key(&k.0) && question_pos.contains_key(k.1.as_str())).collect();
    records.sort_by_key(|(k, _)| order(k));
    let record_lines: Vec<&ResponseRecord> = records.iter().map(|(_, e)| e.record.as_ref().expect("answered")).collect();
    write_atomic(out, &jsonl_bytes(&record_lines))?;

    let mut audit: Vec<(&(usize, String), &AuditEntry)> =
        records.iter().map(|(k, e)| (*k, &e.audit)).chain(failures.iter().map(|(k, e)| (k, &e.audit))).collect();
    audit.sort_by_key(|(k, _)| order(k));
    let audit: Vec<&AuditEntry> = audit.into_iter().map(|(_, a)| a).collect();
    let audit_path = with_suffix(out, "audit");
    write_atomic(&audit_path, &jsonl_bytes(&audit))?;

    Ok(StageSummary {
        produced,
        resumed,
        failed: failures.len(),
        transport_failures: failures.values().filter(|e| is_transport_failure(&e.audit)).count(),
        outputs: vec![out.to_path_buf(), audit_path],
    })
}

pub fn read_records(path: &Path) -> Result<Vec<ResponseRecord>> {
    read_jsonl(path)
}

/// Catalog check of an external persona file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationSummary {
    pub total: usize,
    pub tabular: usize,
    pub valid: usize,
    pub invalid: usize,
    pub unreadable: usize,
    /// Field → number of personas violating it.
    pub violations_by_field: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize)]
struct ValidationLine {
    line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    tier: Option<PersonaTier>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    violations: Vec<Violation>,
}

/// Validates every tabular persona in `path` against the census catalog.
/// Per-persona problems are written as JSONL to `report` when given.
pub fn cmd_validate(path: &Path, report: Option<&Path>) -> Result<ValidationSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let catalog = ValueCatalog::census();
    let mut summary = ValidationSummary::default();
    let mut problems = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        summary.total += 1;
        let persona = match persona_from_json(line) {
            Ok((p, _)) => p,
            Err(e) => {
                summary.unreadable += 1;
                problems.push(ValidationLine { line: i + 1, tier: None, error: Some(e.to_string()), violations: vec![] });
                continue;
            }
        };
        let Persona::Tabular(t) = &persona else {
            continue;
        };
        summary.tabular += 1;
        let r = validate_tabular(t, &catalog);
        if r.is_valid() {
            summary.valid += 1;
        } else {
            summary.invalid += 1;
            for f in r.fields().into_iter().collect::<BTreeSet<_>>() {
                *summary.violations_by_field.entry(f.to_string()).or_insert(0) += 1;
            }
            problems.push(ValidationLine {
                line: i + 1,
                tier: Some(t.tier()),
                error: None,
                violations: r.violations().to_vec(),
            });
        }
    }
    if let Some(report) = report {
        write_atomic(report, &jsonl_bytes(&problems))?;
    }
    Ok(summary)
}
