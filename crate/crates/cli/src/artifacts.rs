//! Run directory layout, content digests, atomic writes, stage manifests and
//! append-only journals.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Sample,
    Generate,
    Simulate,
    Evaluate,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Sample => "sample",
            Stage::Generate => "generate",
            Stage::Simulate => "simulate",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    fn dir(self) -> &'static str {
        match self {
            Stage::Sample => "metas",
            Stage::Generate => "personas",
            Stage::Simulate => "records",
            Stage::Evaluate | Stage::Report => "reports",
        }
    }
}

/// Paths inside `runs/<name>/`.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.dir())
    }

    pub fn manifest(&self, stage: Stage) -> PathBuf {
        self.stage_dir(stage).join(format!("{}.manifest.json", stage.name()))
    }

    pub fn metas(&self) -> PathBuf {
        self.stage_dir(Stage::Sample).join("metas.jsonl")
    }

    pub fn personas(&self, generator: &str, tier: &str) -> PathBuf {
        self.stage_dir(Stage::Generate).join(generator).join(format!("{tier}.jsonl"))
    }

    pub fn records(&self, simulator: &str, generator: &str, tier: &str) -> PathBuf {
        self.stage_dir(Stage::Simulate).join(simulator).join(generator).join(format!("{tier}.jsonl"))
    }

    pub fn reports(&self) -> PathBuf {
        self.stage_dir(Stage::Report)
    }

    /// Path relative to the run root, with `/` separators.
    pub fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn absolute(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }
}

/// Sibling file with an extra suffix, e.g. `X.jsonl` → `X.audit.jsonl`.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.{ext}"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Writes via a temporary sibling and rename, so readers never see a
/// partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let tmp = path.with_file_name(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    let mut f = File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Serializes values one JSON object per line.
pub fn jsonl_bytes<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("artifact types always serialize");
        out.push(b'\n');
    }
    out
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Record of one stage run: what it read, what it wrote, and with which config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub started_at: u64,
    pub finished_at: u64,
    /// Run-relative path → SHA-256 of inputs read by the stage.
    pub inputs: BTreeMap<String, String>,
    /// Run-relative path → SHA-256 of every artifact the stage owns.
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(stage: Stage, config: serde_json::Value, started_at: u64) -> Self {
        Self {
            stage: stage.name().to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config,
            started_at,
            finished_at: started_at,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn record_output(&mut self, layout: &RunLayout, path: &Path) -> Result<()> {
        self.outputs.insert(layout.relative(path), file_digest(path)?);
        Ok(())
    }

    pub fn write(&mut self, layout: &RunLayout, stage: Stage) -> Result<()> {
        self.finished_at = unix_now();
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifests always serialize");
        bytes.push(b'\n');
        write_atomic(&layout.manifest(stage), &bytes)
    }

    pub fn read(layout: &RunLayout, stage: Stage) -> Result<Option<Self>> {
        let path = layout.manifest(stage);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// Loads the manifest of a finished upstream stage and checks that every
/// artifact it read or wrote still has the recorded digest.
pub fn verify_upstream(layout: &RunLayout, stage: Stage) -> Result<RunManifest> {
    let manifest = RunManifest::read(layout, stage)?.ok_or_else(|| {
        CliError::Data(format!(
            "missing {} manifest at {}; run `personasim {}` first",
            stage.name(),
            layout.manifest(stage).display(),
            stage.name()
        ))
    })?;
    for (rel, recorded) in &manifest.outputs {
        let path = layout.absolute(rel);
        if !path.exists() {
            return Err(CliError::Data(format!(
                "stale upstream: {rel} listed in the {} manifest is missing; rerun `personasim {}`",
                stage.name(),
                stage.name()
            )));
        }
        let actual = file_digest(&path)?;
        if &actual != recorded {
            return Err(CliError::Data(format!(
                "stale upstream: {rel} has digest {actual} but the {} manifest records {recorded}; rerun `personasim {}`",
                stage.name(),
                stage.name()
            )));
        }
    }
    for (key, recorded) in &manifest.inputs {
        let path = if Path::new(key).is_absolute() { PathBuf::from(key) } else { layout.absolute(key) };
        let actual = if path.exists() { Some(file_digest(&path)?) } else { None };
        if actual.as_ref() != Some(recorded) {
            return Err(CliError::Data(format!(
                "stale upstream: {} read {key} with digest {recorded}, which has since {}; rerun `personasim {}`",
                stage.name(),
                if actual.is_some() { "changed" } else { "disappeared" },
                stage.name()
            )));
        }
    }
    Ok(manifest)
}

/// Append-only JSONL journal of finished work items. The first line holds a
/// key identifying the inputs; a journal with a different key is discarded.
pub struct Journal {
    file: std::sync::Mutex<File>,
    path: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct JournalHeader {
    journal_key: String,
}

impl Journal {
    /// Opens `path`, returning the entries written under the same `key` by
    /// earlier runs. A torn final line from an interrupted run is dropped.
    pub fn open<T: DeserializeOwned>(path: &Path, key: &str) -> Result<(Self, Vec<T>)> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let mut entries = Vec::new();
        let mut valid_bytes = 0usize;
        let mut reusable = false;
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let mut offset = 0usize;
            for (i, line) in text.split_inclusive('\n').enumerate() {
                let complete = line.ends_with('\n');
                let body = line.trim_end_matches('\n');
                if i == 0 {
                    reusable = complete
                        && serde_json::from_str::<JournalHeader>(body).map(|h| h.journal_key == key).unwrap_or(false);
                    if !reusable {
                        break;
                    }
                } else if !complete {
                    break;
                } else {
                    let entry = serde_json::from_str(body)
                        .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
                    entries.push(entry);
                }
                offset += line.len();
                valid_bytes = offset;
            }
        }
        let file = if reusable {
            let f = OpenOptions::new().write(true).open(path).map_err(|e| CliError::io(path, e))?;
            f.set_len(valid_bytes as u64).map_err(|e| CliError::io(path, e))?;
            let mut f = OpenOptions::new().append(true).open(path).map_err(|e| CliError::io(path, e))?;
            f.flush().map_err(|e| CliError::io(path, e))?;
            f
        } else {
            entries.clear();
            let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
            let header = serde_json::to_string(&JournalHeader { journal_key: key.to_string() }).expect("serializable");
            writeln!(f, "{header}").map_err(|e| CliError::io(path, e))?;
            f
        };
        Ok((Self { file: std::sync::Mutex::new(file), path: path.to_path_buf() }, entries))
    }

    /// Appends one entry as a single line.
    pub fn append<T: Serialize>(&self, entry: &T) -> Result<()> {
        let mut line = serde_json::to_vec(entry).expect("journal entries always serialize");
        line.push(b'\n');
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(&line).map_err(|e| CliError::io(&self.path, e))?;
        f.flush().map_err(|e| CliError::io(&self.path, e))
    }
}
