//! The evaluate and report commands.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use personasim_core::metrics::{
    cross_simulation, election_rows, question_tier_scores, score_aggregates, topic_variance_ranking, AlignmentScore,
    GroundTruth, SimulationSet, SAMPLED_GENERATOR,
};
use personasim_core::persona::{Persona, PersonaTier};
use personasim_core::simulation::{
    aggregate, by_state, write_aggregates_csv, ChoiceDistribution, SurveyQuestion, NATIONAL_COHORT,
};
use personasim_core::text::{builtin_stopwords, sentiment_by_tier, word_frequencies, word_list, SentimentLexicon};
use serde::{Deserialize, Serialize};

use crate::artifacts::{file_digest, unix_now, verify_upstream, write_atomic, RunManifest, Stage};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::stages::{config_snapshot, layout, load_all_questions, read_persona_file, read_records, SetEntry, SETS_INDEX};

pub const ALIGNMENT_CSV: &str = "alignment.csv";
pub const EVALUATION_INDEX: &str = "evaluation.json";
pub const ELECTION_CSV: &str = "election_map.csv";
pub const CROSS_SIM_JSON: &str = "cross_sim.json";
pub const TOPIC_CSV: &str = "topic_ranking.csv";
pub const SENTIMENT_CSV: &str = "sentiment.csv";
pub const WORD_FREQ_CSV: &str = "word_freq.csv";

/// One evaluated set, listed in `reports/evaluation.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedSet {
    #[serde(flatten)]
    pub set: SetEntry,
    /// Run-relative aggregates CSV.
    pub aggregates: String,
}

impl EvaluatedSet {
    fn generator_column(&self) -> &str {
        self.set.generator_label.as_deref().unwrap_or(SAMPLED_GENERATOR)
    }
}

pub fn ground_truth(cfg: &RunConfig, questions: &[SurveyQuestion]) -> Result<GroundTruth> {
    let mut truth = GroundTruth::from_questions(questions).map_err(|e| CliError::Data(e.to_string()))?;
    for path in &cfg.election_truth {
        let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        truth.add_election_csv(f).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    if truth.is_empty() {
        let files: Vec<String> = cfg.questions.iter().map(|p| p.display().to_string()).collect();
        return Err(CliError::Data(format!(
            "no ground truth: no question in {} has a ground_truth vector and no election_truth file is configured",
            files.join(", ")
        )));
    }
    Ok(truth)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Aggregates each record set by state and nationally, and scores the
/// aggregates against the ground truth.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<usize> {
    let started = unix_now();
    let layout = layout(cfg);
    let simulate = verify_upstream(&layout, Stage::Simulate)?;
    let questions = load_all_questions(&cfg.questions)?;
    let truth = ground_truth(cfg, &questions)?;
    let sets: Vec<SetEntry> = serde_json::from_slice(
        &std::fs::read(layout.stage_dir(Stage::Simulate).join(SETS_INDEX))
            .map_err(|e| CliError::io(&layout.stage_dir(Stage::Simulate), e))?,
    )
    .map_err(|e| CliError::Data(format!("{SETS_INDEX}: {e}")))?;

    let mut manifest = RunManifest::new(Stage::Evaluate, config_snapshot(cfg), started);
    manifest.inputs.extend(simulate.outputs.clone());
    for p in cfg.questions.iter().chain(&cfg.election_truth) {
        manifest.inputs.insert(p.display().to_string(), file_digest(p)?);
    }

    let mut scores: Vec<AlignmentScore> = Vec::new();
    let mut evaluated = Vec::new();
    for set in sets {
        let records = read_records(&layout.absolute(&set.records))?;
        let mut dists = aggregate(&records, by_state).map_err(|e| CliError::Data(format!("{}: {e}", set.records)))?;
        dists.extend(aggregate(&records, |_| NATIONAL_COHORT.to_string()).map_err(|e| CliError::Data(e.to_string()))?);
        dists.sort_by(|a, b| (&a.question_id, &a.cohort).cmp(&(&b.question_id, &b.cohort)));
        let agg_path = layout
            .stage_dir(Stage::Evaluate)
            .join("aggregates")
            .join(&set.simulator)
            .join(&set.generator)
            .join(format!("{}.csv", set.tier.as_str()));
        let mut bytes = Vec::new();
        write_aggregates_csv(&mut bytes, &dists).map_err(csv_err(&agg_path))?;
        write_atomic(&agg_path, &bytes)?;
        manifest.record_output(&layout, &agg_path)?;
        scores.extend(
            score_aggregates(&dists, &truth, set.tier, set.generator_label.as_deref(), &set.simulator_label)
                .map_err(|e| CliError::Data(format!("{}: {e}", set.records)))?,
        );
        evaluated.push(EvaluatedSet { set, aggregates: layout.relative(&agg_path) });
    }

    scores.sort_by(|a, b| score_key(a).cmp(&score_key(b)));
    let path = layout.stage_dir(Stage::Evaluate).join(ALIGNMENT_CSV);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["generator", "tier", "simulator", "question_id", "cohort", "metric", "alignment"])
        .map_err(csv_err(&path))?;
    for s in &scores {
        w.write_record([
            s.generator.as_deref().unwrap_or(SAMPLED_GENERATOR),
            s.tier.as_str(),
            &s.simulator,
            &s.question_id,
            &s.cohort,
            s.metric.as_str(),
            &s.value.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    write_atomic(&path, &w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)?;
    manifest.record_output(&layout, &path)?;

    let index_path = layout.stage_dir(Stage::Evaluate).join(EVALUATION_INDEX);
    let mut bytes = serde_json::to_vec_pretty(&evaluated).expect("serializable");
    bytes.push(b'\n');
    write_atomic(&index_path, &bytes)?;
    manifest.record_output(&layout, &index_path)?;
    manifest.notes.insert(
        "cohorts".into(),
        format!("per-state aggregates plus a national cohort labelled {NATIONAL_COHORT}"),
    );
    manifest.write(&layout, Stage::Evaluate)?;
    Ok(scores.len())
}

fn score_key(s: &AlignmentScore) -> (Option<&str>, PersonaTier, &str, &str, &str) {
    (s.generator.as_deref(), s.tier, s.simulator.as_str(), s.question_id.as_str(), s.cohort.as_str())
}

/// Reads an aggregates CSV written by `evaluate`.
pub fn read_aggregates_csv(path: &Path) -> Result<Vec<ChoiceDistribution>> {
    #[derive(Deserialize)]
    struct Row {
        question_id: String,
        cohort: String,
        choice_index: usize,
        probability: f64,
        count: u64,
    }
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out: Vec<ChoiceDistribution> = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(csv_err(path))?;
        let same = out.last().is_some_and(|d| d.question_id == row.question_id && d.cohort == row.cohort);
        if !same {
            out.push(ChoiceDistribution {
                question_id: row.question_id.clone(),
                cohort: row.cohort.clone(),
                probabilities: Vec::new(),
                counts: Vec::new(),
                support: 0,
            });
        }
        let d = out.last_mut().expect("just pushed");
        if row.choice_index != d.counts.len() {
            return Err(CliError::Data(format!(
                "{}: choice_index {} out of sequence for {} / {}",
                path.display(),
                row.choice_index,
                row.question_id,
                row.cohort
            )));
        }
        d.probabilities.push(row.probability);
        d.counts.push(row.count);
        d.support += row.count;
    }
    Ok(out)
}

fn lexicon(cfg: &RunConfig) -> Result<SentimentLexicon> {
    match (&cfg.text.lexicon, &cfg.text.negators, &cfg.text.intensifiers) {
        (Some(l), Some(n), Some(i)) => SentimentLexicon::load(l, n, i).map_err(|e| CliError::Data(e.to_string())),
        _ => Ok(SentimentLexicon::builtin().clone()),
    }
}

fn stopwords(cfg: &RunConfig) -> Result<HashSet<String>> {
    match &cfg.text.stopwords {
        Some(p) => Ok(word_list(&std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)),
        None => Ok(builtin_stopwords().clone()),
    }
}

/// Writes the election map, cross-simulation matrix, topic ranking,
/// sentiment and word-frequency reports. Output depends only on the
/// evaluation artifacts, the question files and the persona files.
pub fn cmd_report(cfg: &RunConfig) -> Result<Vec<String>> {
    let started = unix_now();
    let layout = layout(cfg);
    let evaluate = verify_upstream(&layout, Stage::Evaluate)?;
    let index_path = layout.stage_dir(Stage::Evaluate).join(EVALUATION_INDEX);
    let evaluated: Vec<EvaluatedSet> =
        serde_json::from_slice(&std::fs::read(&index_path).map_err(|e| CliError::io(&index_path, e))?)
            .map_err(|e| CliError::Data(format!("{}: {e}", index_path.display())))?;
    let questions = load_all_questions(&cfg.questions)?;
    let truth = ground_truth(cfg, &questions)?;

    let mut manifest = RunManifest::new(Stage::Report, config_snapshot(cfg), started);
    manifest.inputs.extend(evaluate.outputs.clone());
    let dir = layout.reports();
    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>, manifest: &mut RunManifest| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        manifest.record_output(&layout, &path)?;
        written.push(layout.relative(&path));
        Ok(())
    };

    let mut sets = Vec::new();
    for e in &evaluated {
        sets.push((
            e,
            SimulationSet {
                generator: e.set.generator_label.clone(),
                tier: e.set.tier,
                simulator: e.set.simulator_label.clone(),
                aggregates: read_aggregates_csv(&layout.absolute(&e.aggregates))?,
            },
        ));
    }

    // election map
    let mut rows = Vec::new();
    for (_, s) in &sets {
        rows.extend(election_rows(s, &truth).map_err(|e| CliError::Data(e.to_string()))?);
    }
    rows.sort_by(|a, b| {
        (&a.generator, a.tier, &a.simulator, &a.question_id, &a.state)
            .cmp(&(&b.generator, b.tier, &b.simulator, &b.question_id, &b.state))
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["generator", "tier", "simulator", "question_id", "state", "dem_share", "rep_share", "alignment"])
        .map_err(csv_err(&dir))?;
    for r in &rows {
        w.write_record([
            r.generator.as_str(),
            r.tier.as_str(),
            &r.simulator,
            &r.question_id,
            &r.state,
            &r.dem_share.to_string(),
            &r.rep_share.to_string(),
            &r.alignment.to_string(),
        ])
        .map_err(csv_err(&dir))?;
    }
    emit(ELECTION_CSV, w.into_inner().map_err(|e| CliError::Data(e.to_string()))?, &mut manifest)?;

    // cross-simulation matrix
    let sim_sets: Vec<SimulationSet> = sets.iter().map(|(_, s)| s.clone()).collect();
    let matrix = cross_simulation(&sim_sets, &truth).map_err(|e| CliError::Data(e.to_string()))?;
    let doc = serde_json::json!({
        "dimensions": {
            "generators": matrix.generators.len(),
            "simulators": matrix.simulators.len(),
            "tiers": matrix.tiers.len(),
        },
        "matrix": matrix,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("serializable");
    bytes.push(b'\n');
    emit(CROSS_SIM_JSON, bytes, &mut manifest)?;

    // topic variance ranking over questions scored under all four tiers
    let mut scores = Vec::new();
    for (_, s) in &sets {
        scores.extend(
            score_aggregates(&s.aggregates, &truth, s.tier, s.generator.as_deref(), &s.simulator)
                .map_err(|e| CliError::Data(e.to_string()))?,
        );
    }
    let per_question = question_tier_scores(&scores, &questions);
    let mut topics: Vec<String> = Vec::new();
    for q in &per_question {
        if !topics.contains(&q.topic) {
            topics.push(q.topic.clone());
        }
    }
    let ranking = topic_variance_ranking(&per_question, &topics).map_err(|e| CliError::Data(e.to_string()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["rank".to_string(), "topic".into(), "variance".into(), "questions".into()];
    header.extend(PersonaTier::ALL.iter().map(|t| format!("mean_{}", t.as_str())));
    w.write_record(&header).map_err(csv_err(&dir))?;
    for (rank, t) in ranking.topics.iter().enumerate() {
        let mut rec = vec![(rank + 1).to_string(), t.topic.clone(), t.variance.to_string(), t.questions.to_string()];
        rec.extend(t.tier_means.iter().map(|m| m.to_string()));
        w.write_record(&rec).map_err(csv_err(&dir))?;
    }
    emit(TOPIC_CSV, w.into_inner().map_err(|e| CliError::Data(e.to_string()))?, &mut manifest)?;

    // sentiment and word frequencies of generated personas
    let lex = lexicon(cfg)?;
    let stop = stopwords(cfg)?;
    let mut sources: BTreeMap<(String, PersonaTier), String> = BTreeMap::new();
    for e in &evaluated {
        if e.set.tier != PersonaTier::Meta {
            sources.insert((e.generator_column().to_string(), e.set.tier), e.set.personas.clone());
        }
    }
    let mut sw = csv::Writer::from_writer(Vec::new());
    sw.write_record(["generator", "tier", "polarity", "subjectivity", "count"]).map_err(csv_err(&dir))?;
    let mut fw = csv::Writer::from_writer(Vec::new());
    fw.write_record(["cohort", "token", "count"]).map_err(csv_err(&dir))?;
    for ((generator, tier), rel) in &sources {
        let path = layout.absolute(rel);
        manifest.inputs.insert(rel.clone(), file_digest(&path)?);
        let personas: Vec<Persona> = read_persona_file(&path)?.into_iter().map(|(_, p, _)| p).collect();
        if personas.is_empty() {
            continue;
        }
        let by_state = group_by_state(&personas);
        let groups = BTreeMap::from([(*tier, personas)]);
        for t in sentiment_by_tier(&groups, &lex).map_err(|e| CliError::Data(e.to_string()))? {
            sw.write_record([
                generator.as_str(),
                t.tier.as_str(),
                &t.polarity.to_string(),
                &t.subjectivity.to_string(),
                &t.count.to_string(),
            ])
            .map_err(csv_err(&dir))?;
        }
        for (state, texts) in by_state {
            let cohort = format!("{generator}/{}/{state}", tier.as_str());
            for (token, count) in word_frequencies(texts.iter().map(String::as_str), &stop, cfg.text.top_n) {
                fw.write_record([cohort.as_str(), &token, &count.to_string()]).map_err(csv_err(&dir))?;
            }
        }
    }
    emit(SENTIMENT_CSV, sw.into_inner().map_err(|e| CliError::Data(e.to_string()))?, &mut manifest)?;
    emit(WORD_FREQ_CSV, fw.into_inner().map_err(|e| CliError::Data(e.to_string()))?, &mut manifest)?;

    manifest.notes.insert("cross_sim_aggregation".into(), matrix.aggregation.clone());
    manifest.write(&layout, Stage::Report)?;
    Ok(written)
}

fn group_by_state(personas: &[Persona]) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for p in personas {
        out.entry(p.meta().state.clone()).or_default().push(p.text_content());
    }
    out
}
