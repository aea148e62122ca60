#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use personasim_cli::RunConfig;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Builder for a run config written into a scratch directory.
pub struct Setup {
    pub name: String,
    pub seed: u64,
    pub per_state: usize,
    pub joint_table: PathBuf,
    pub tiers: Vec<&'static str>,
    pub generators: Vec<(String, PathBuf)>,
    pub simulators: Vec<(String, PathBuf)>,
    pub questions: Vec<PathBuf>,
    pub election: Vec<PathBuf>,
    pub concurrency: usize,
}

impl Default for Setup {
    fn default() -> Self {
        Self {
            name: "test".into(),
            seed: 11,
            per_state: 3,
            joint_table: fixture("joint.csv"),
            tiers: vec!["OBJECTIVE_TABULAR", "SUBJECTIVE_TABULAR", "DESCRIPTIVE"],
            generators: vec![("gen_a".into(), fixture("gen_a.jsonl"))],
            simulators: vec![("sim_x".into(), fixture("sim_x.jsonl"))],
            questions: vec![fixture("questions.jsonl"), fixture("election_questions.jsonl")],
            election: vec![fixture("election.csv")],
            concurrency: 2,
        }
    }
}

fn q(p: &Path) -> String {
    format!("{:?}", p.display().to_string())
}

impl Setup {
    pub fn toml(&self, output_dir: &Path) -> String {
        let list = |ps: &[PathBuf]| ps.iter().map(|p| q(p)).collect::<Vec<_>>().join(", ");
        let mut s = format!(
            "name = {:?}\noutput_dir = {}\nseed = {}\njoint_table = {}\nper_state = {}\nconcurrency = {}\n",
            self.name,
            q(output_dir),
            self.seed,
            q(&self.joint_table),
            self.per_state,
            self.concurrency
        );
        s += &format!(
            "tiers = [{}]\nquestions = [{}]\nelection_truth = [{}]\n",
            self.tiers.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>().join(", "),
            list(&self.questions),
            list(&self.election)
        );
        for (table, backends) in [("generators", &self.generators), ("simulators", &self.simulators)] {
            for (name, script) in backends {
                s += &format!("\n[[{table}]]\nname = {name:?}\nkind = \"mock\"\nscript = {}\n", q(script));
            }
        }
        s
    }

    /// Writes `<dir>/run.toml` and loads it.
    pub fn write(&self, dir: &Path) -> (PathBuf, RunConfig) {
        let path = dir.join("run.toml");
        std::fs::write(&path, self.toml(&dir.join("runs"))).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        (path, cfg)
    }
}

/// Manifests carry timestamps; journals are resume state in completion order.
fn is_bookkeeping(path: &Path) -> bool {
    let name = path.to_string_lossy();
    name.ends_with(".manifest.json") || name.ends_with(".journal.jsonl")
}

/// All files under `root` except manifests and journals, keyed by relative path.
pub fn artifact_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if !is_bookkeeping(&path) {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Rows of a CSV file as header-keyed maps.
pub fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}
