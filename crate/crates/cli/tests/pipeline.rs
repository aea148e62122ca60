mod common;

use std::process::Command;

use common::{artifact_bytes, csv_rows, fixture, Setup};
use personasim_cli::artifacts::{with_suffix, RunLayout};
use personasim_cli::{
    cmd_evaluate, cmd_generate, cmd_report, cmd_sample, cmd_simulate, cmd_validate, CliError, RunConfig,
};
use personasim_core::census::read_meta_jsonl;

fn run_all(cfg: &RunConfig) {
    cmd_sample(cfg).unwrap();
    if !cfg.generated_tiers().is_empty() {
        let s = cmd_generate(cfg, None, None).unwrap();
        assert_eq!(s.failed, 0);
    }
    let s = cmd_simulate(cfg).unwrap();
    assert_eq!(s.failed, 0);
    cmd_evaluate(cfg).unwrap();
    cmd_report(cfg).unwrap();
}

fn metas(cfg: &RunConfig) -> Vec<personasim_core::MetaPersona> {
    let bytes = std::fs::read(RunLayout::new(cfg.run_dir()).metas()).unwrap();
    read_meta_jsonl(bytes.as_slice()).unwrap()
}

#[test]
fn sample_is_exact_per_state_and_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let setup = Setup { per_state: 25, ..Setup::default() };
    let (_, cfg_a) = setup.write(a.path());
    let (_, cfg_b) = setup.write(b.path());
    assert_eq!(cmd_sample(&cfg_a).unwrap().produced, 50);
    cmd_sample(&cfg_b).unwrap();
    let m = metas(&cfg_a);
    assert_eq!(m.iter().filter(|p| p.state == "Florida").count(), 25);
    assert_eq!(m.iter().filter(|p| p.state == "Ohio").count(), 25);
    assert_eq!(m, metas(&cfg_b));

    let c = tempfile::tempdir().unwrap();
    let (_, cfg_c) = Setup { per_state: 25, seed: 12, ..Setup::default() }.write(c.path());
    cmd_sample(&cfg_c).unwrap();
    assert_ne!(m, metas(&cfg_c));
}

#[test]
fn missing_joint_table_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let setup = Setup { joint_table: dir.path().join("nope.csv"), ..Setup::default() };
    let path = dir.path().join("run.toml");
    std::fs::write(&path, setup.toml(dir.path())).unwrap();
    let err = RunConfig::load(&path).unwrap_err();
    assert!(matches!(err, CliError::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn full_pipeline_produces_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = Setup::default().write(dir.path());
    run_all(&cfg);
    let layout = RunLayout::new(cfg.run_dir());
    for tier in ["OBJECTIVE_TABULAR", "SUBJECTIVE_TABULAR", "DESCRIPTIVE"] {
        let text = std::fs::read_to_string(layout.personas("gen_a", tier)).unwrap();
        assert_eq!(text.lines().count(), 6, "{tier}");
        let records = std::fs::read_to_string(layout.records("sim_x", "gen_a", tier)).unwrap();
        assert_eq!(records.lines().count(), 18, "{tier}");
    }
    let reports = layout.reports();
    for f in [
        "alignment.csv",
        "evaluation.json",
        "election_map.csv",
        "cross_sim.json",
        "topic_ranking.csv",
        "sentiment.csv",
        "word_freq.csv",
        "evaluate.manifest.json",
        "report.manifest.json",
    ] {
        assert!(reports.join(f).exists(), "{f}");
    }

    // sim_x answers B in Florida and A in Ohio on the election question
    let election = csv_rows(&reports.join("election_map.csv"));
    assert_eq!(election.len(), 4 * 2);
    for row in &election {
        let (dem, truth): (f64, f64) = match row["state"].as_str() {
            "Florida" => (0.0, 0.43 / 0.99),
            "Ohio" => (1.0, 0.44 / 0.99),
            s => panic!("unexpected state {s}"),
        };
        assert_eq!(row["dem_share"].parse::<f64>().unwrap(), dem);
        let alignment: f64 = row["alignment"].parse().unwrap();
        assert!((alignment - (1.0 - (dem - truth).abs())).abs() < 1e-12);
    }

    let sentiment = csv_rows(&reports.join("sentiment.csv"));
    assert_eq!(sentiment.len(), 3);
    let words = std::fs::read_to_string(reports.join("word_freq.csv")).unwrap();
    assert!(words.contains("gen_a/mock/DESCRIPTIVE/Florida,"));
}

#[test]
fn interrupted_simulation_resumes_without_repeating_work() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = Setup { tiers: vec!["OBJECTIVE_TABULAR"], ..Setup::default() }.write(dir.path());
    cmd_sample(&cfg).unwrap();
    cmd_generate(&cfg, None, None).unwrap();
    let first = cmd_simulate(&cfg).unwrap();
    assert_eq!((first.produced, first.resumed), (36, 0));
    let layout = RunLayout::new(cfg.run_dir());
    let records = layout.records("sim_x", "sampled", "META");
    let before = artifact_bytes(&layout.root);

    // keep the header and the first half of the entries, plus a torn line
    let journal = with_suffix(&records, "journal");
    let text = std::fs::read_to_string(&journal).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 19);
    let mut kept = lines[..10].join("\n");
    kept.push_str("\n{\"persona_index\": 4, \"quest");
    std::fs::write(&journal, kept).unwrap();
    std::fs::remove_file(&records).unwrap();

    let second = cmd_simulate(&cfg).unwrap();
    assert_eq!((second.produced, second.resumed), (9, 27));
    assert_eq!(artifact_bytes(&layout.root), before);
}

#[test]
fn stale_upstream_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (path, cfg) = Setup { tiers: vec!["DESCRIPTIVE"], ..Setup::default() }.write(dir.path());
    cmd_sample(&cfg).unwrap();
    cmd_generate(&cfg, None, None).unwrap();

    // resampling with another seed invalidates the generated personas
    let text = std::fs::read_to_string(&path).unwrap().replace("seed = 11", "seed = 99");
    std::fs::write(&path, text).unwrap();
    let reseeded = RunConfig::load(&path).unwrap();
    cmd_sample(&reseeded).unwrap();
    let err = cmd_simulate(&reseeded).unwrap_err();
    assert!(err.to_string().contains("stale upstream"), "{err}");
    assert_eq!(err.exit_code(), 3);

    // a hand-edited artifact is caught by its digest
    cmd_generate(&reseeded, None, None).unwrap();
    let metas = RunLayout::new(reseeded.run_dir()).metas();
    let mut bytes = std::fs::read(&metas).unwrap();
    bytes.extend_from_slice(b"{\"AGE\":40,\"SEX\":\"Male\",\"RACE\":\"White\",\"STATE\":\"Ohio\"}\n");
    std::fs::write(&metas, bytes).unwrap();
    let err = cmd_simulate(&reseeded).unwrap_err();
    assert!(err.to_string().contains("stale upstream"), "{err}");
}

#[test]
fn evaluation_without_any_ground_truth_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = Setup {
        tiers: vec![],
        generators: vec![],
        questions: vec![fixture("election_questions.jsonl")],
        election: vec![],
        ..Setup::default()
    }
    .write(dir.path());
    cmd_sample(&cfg).unwrap();
    cmd_simulate(&cfg).unwrap();
    let err = cmd_evaluate(&cfg).unwrap_err();
    assert!(err.to_string().contains("election_questions.jsonl"), "{err}");
}

#[test]
fn single_row_election_truth_covers_one_state() {
    let dir = tempfile::tempdir().unwrap();
    let election = dir.path().join("one.csv");
    std::fs::write(&election, "question_id,state,dem_share,rep_share\npres_vote,Ohio,0.44,0.55\n").unwrap();
    let (_, cfg) = Setup { tiers: vec![], generators: vec![], election: vec![election], ..Setup::default() }
        .write(dir.path());
    run_all(&cfg);
    let rows = csv_rows(&RunLayout::new(cfg.run_dir()).reports().join("election_map.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["state"], "Ohio");
    assert_eq!(rows[0]["tier"], "META");
}

#[test]
fn cross_sim_report_replicates_meta_across_generators() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = Setup {
        generators: vec![("gen_a".into(), fixture("gen_a.jsonl")), ("gen_b".into(), fixture("gen_b.jsonl"))],
        simulators: vec![("sim_x".into(), fixture("sim_x.jsonl")), ("sim_y".into(), fixture("sim_y.jsonl"))],
        ..Setup::default()
    }
    .write(dir.path());
    run_all(&cfg);
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(RunLayout::new(cfg.run_dir()).reports().join("cross_sim.json")).unwrap())
            .unwrap();
    assert_eq!(doc["dimensions"], serde_json::json!({"generators": 2, "simulators": 2, "tiers": 4}));
    let cells = doc["matrix"]["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 16);
    for sim in ["sim_x/mock", "sim_y/mock"] {
        let meta: Vec<f64> = cells
            .iter()
            .filter(|c| c["simulator"] == sim && c["tier"] == "META")
            .map(|c| c["mean_alignment"].as_f64().unwrap())
            .collect();
        assert_eq!(meta.len(), 2);
        assert_eq!(meta[0], meta[1]);
    }
}

#[test]
fn report_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = Setup::default().write(dir.path());
    run_all(&cfg);
    let before = artifact_bytes(&cfg.run_dir());
    cmd_report(&cfg).unwrap();
    cmd_evaluate(&cfg).unwrap();
    cmd_report(&cfg).unwrap();
    assert_eq!(artifact_bytes(&cfg.run_dir()), before);
}

fn write_personas(dir: &std::path::Path) -> std::path::PathBuf {
    let good = r#"{"tier":"OBJECTIVE_TABULAR","meta":{"AGE":34,"SEX":"Female","RACE":"White","STATE":"Florida"},"fields":{"AGE":"34","SEX":"Female","RACE":"White","STATE":"Florida","ANCESTRY":"Irish","HOUSEHOLD_LANGUAGE":"English","EDUCATION":"Bachelor's","EMPLOYMENT_STATUS":"Employed","CLASS_OF_WORKER":"Private","INDUSTRY_CATEGORY":"Service occupations","OCCUPATION_CATEGORY":"Healthcare support occupations","INCOME":"52000","MARITAL_STATUS":"Married","HOUSEHOLD_TYPE":"Family","FAMILY_PRESENCE_AND_AGE":"Two children under 10","PLACE_OF_BIRTH":"Ohio","CITIZENSHIP":"US citizen by birth","VETERAN_STATUS":"Non-veteran","DISABILITY":"None","HEALTH_INSURANCE":"Private"}}"#;
    let bad = good.replace("Bachelor's", "PhD").replace("\"52000\"", "\"2000000\"");
    let path = dir.join("personas.jsonl");
    std::fs::write(&path, format!("{good}\n{bad}\nnot json\n")).unwrap();
    path
}

#[test]
fn validate_counts_violations_by_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_personas(dir.path());
    let report = dir.path().join("report.jsonl");
    let s = cmd_validate(&path, Some(&report)).unwrap();
    assert_eq!((s.total, s.tabular, s.valid, s.invalid, s.unreadable), (3, 2, 1, 1, 1));
    assert_eq!(s.violations_by_field.get("EDUCATION"), Some(&1));
    assert_eq!(s.violations_by_field.get("INCOME"), Some(&1));
    assert!(std::fs::read_to_string(report).unwrap().contains("PhD"));
}

fn personasim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_personasim")).args(args).output().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(personasim(&["sample", "-c", missing.to_str().unwrap()]).status.code(), Some(2));

    let personas = write_personas(dir.path());
    let out = personasim(&["validate", personas.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"invalid\": 1"));

    let (path, _) = Setup::default().write(dir.path());
    let out = personasim(&["run", "-c", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let offline = dir.path().join("offline.jsonl");
    std::fs::write(&offline, "{\"error\": \"connection reset\", \"repeat\": 1000}\n").unwrap();
    let sub = dir.path().join("offline");
    std::fs::create_dir(&sub).unwrap();
    let (path, _) = Setup { tiers: vec![], generators: vec![], simulators: vec![("down".into(), offline)], ..Setup::default() }
        .write(&sub);
    let out = personasim(&["run", "-c", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn relative_config_path_works_from_any_directory() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = dir.path().join("inputs");
    std::fs::create_dir(&inputs).unwrap();
    for f in ["joint.csv", "questions.jsonl", "election_questions.jsonl", "election.csv", "gen_a.jsonl", "sim_x.jsonl"] {
        std::fs::copy(fixture(f), inputs.join(f)).unwrap();
    }
    std::fs::create_dir(dir.path().join("cfg")).unwrap();
    std::fs::write(
        dir.path().join("cfg/run.toml"),
        r#"name = "rel"
output_dir = "../runs"
seed = 3
joint_table = "../inputs/joint.csv"
per_state = 2
questions = ["../inputs/questions.jsonl", "../inputs/election_questions.jsonl"]
election_truth = ["../inputs/election.csv"]

[[generators]]
name = "gen_a"
kind = "mock"
script = "../inputs/gen_a.jsonl"

[[simulators]]
name = "sim_x"
kind = "mock"
script = "../inputs/sim_x.jsonl"
"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_personasim"))
        .current_dir(dir.path())
        .args(["run", "-c", "cfg/run.toml"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("runs/rel/reports/cross_sim.json").exists());
}
