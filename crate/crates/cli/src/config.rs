//! Run configuration, read from a TOML file.
//!
//! Relative paths are resolved against the directory of the config file.
//! Credentials never appear in the file; HTTP backends name an environment
//! variable holding the API key.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use personasim_core::backend::{BackendId, ChatBackend, Decoding, HttpBackendConfig, HttpChatBackend, ScriptedBackend};
use personasim_core::persona::PersonaTier;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Run name; artifacts go to `<output_dir>/<name>/`.
    pub name: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub seed: u64,
    pub joint_table: PathBuf,
    pub per_state: usize,
    /// Generated tiers. Meta personas are always sampled and simulated.
    #[serde(default = "default_tiers")]
    pub tiers: Vec<PersonaTier>,
    #[serde(default)]
    pub generators: Vec<BackendSpec>,
    pub simulators: Vec<BackendSpec>,
    pub questions: Vec<PathBuf>,
    /// Per-state election CSVs: `question_id,state,dem_share,rep_share`.
    #[serde(default)]
    pub election_truth: Vec<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub retries: RetryConfig,
    #[serde(default)]
    pub decoding: DecodingConfig,
    #[serde(default)]
    pub text: TextConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: BackendKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendKind {
    /// Scripted JSONL mock.
    Mock { script: PathBuf },
    /// OpenAI-compatible chat-completion endpoint.
    Http {
        endpoint: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_secs: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_retries: Option<u32>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryConfig {
    pub generation: usize,
    pub simulation: usize,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self { generation: 3, simulation: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodingConfig {
    pub generation: Decoding,
    pub simulation: Decoding,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self { generation: Decoding::GENERATION, simulation: Decoding::SIMULATION }
    }
}

/// Optional replacements for the built-in sentiment lexicon and stopwords.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negators: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensifiers: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self { lexicon: None, negators: None, intensifiers: None, stopwords: None, top_n: default_top_n() }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_tiers() -> Vec<PersonaTier> {
    vec![PersonaTier::ObjectiveTabular, PersonaTier::SubjectiveTabular, PersonaTier::Descriptive]
}

fn default_concurrency() -> usize {
    1
}

fn default_top_n() -> usize {
    50
}

impl RunConfig {
    /// Reads, resolves and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // absolute, so manifests do not depend on the working directory
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::fs::canonicalize(parent).map_err(|e| CliError::Config(format!("{}: {e}", parent.display())))?;
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.joint_table);
        self.questions.iter_mut().for_each(fix);
        self.election_truth.iter_mut().for_each(fix);
        for spec in self.generators.iter_mut().chain(self.simulators.iter_mut()) {
            if let BackendKind::Mock { script } = &mut spec.kind {
                fix(script);
            }
        }
        for p in [&mut self.text.lexicon, &mut self.text.negators, &mut self.text.intensifiers, &mut self.text.stopwords]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !is_safe_name(&self.name) {
            return bad(format!("run name {:?} must use only letters, digits, '.', '_' or '-'", self.name));
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.per_state == 0 {
            return bad("per_state must be at least 1".into());
        }
        if self.retries.generation == 0 || self.retries.simulation == 0 {
            return bad("retry limits must be at least 1".into());
        }
        if self.text.top_n == 0 {
            return bad("text.top_n must be at least 1".into());
        }
        if self.tiers.contains(&PersonaTier::Meta) {
            return bad("META personas are sampled, not generated; remove it from tiers".into());
        }
        if !self.tiers.is_empty() && self.generators.is_empty() {
            return bad("tiers are listed but no generators are configured".into());
        }
        if self.simulators.is_empty() {
            return bad("at least one simulator is required".into());
        }
        if self.questions.is_empty() {
            return bad("at least one question file is required".into());
        }
        for (role, specs) in [("generator", &self.generators), ("simulator", &self.simulators)] {
            let mut seen = HashSet::new();
            for s in specs {
                if !is_safe_name(&s.name) {
                    return bad(format!("{role} name {:?} must use only letters, digits, '.', '_' or '-'", s.name));
                }
                if !seen.insert(&s.name) {
                    return bad(format!("duplicate {role} name {}", s.name));
                }
                if let BackendKind::Mock { script } = &s.kind {
                    require_file(script, &format!("{role} {} script", s.name))?;
                }
            }
        }
        require_file(&self.joint_table, "joint_table")?;
        for q in &self.questions {
            require_file(q, "question file")?;
        }
        for e in &self.election_truth {
            require_file(e, "election_truth file")?;
        }
        for (label, p) in [
            ("text.lexicon", &self.text.lexicon),
            ("text.negators", &self.text.negators),
            ("text.intensifiers", &self.text.intensifiers),
            ("text.stopwords", &self.text.stopwords),
        ] {
            if let Some(p) = p {
                require_file(p, label)?;
            }
        }
        let custom = [&self.text.lexicon, &self.text.negators, &self.text.intensifiers];
        if custom.iter().any(|p| p.is_some()) && !custom.iter().all(|p| p.is_some()) {
            return bad("text.lexicon, text.negators and text.intensifiers must be given together".into());
        }
        Ok(())
    }

    /// Generated tiers, deduplicated and in tier order.
    pub fn generated_tiers(&self) -> Vec<PersonaTier> {
        let mut t = self.tiers.clone();
        t.sort();
        t.dedup();
        t
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }
}

fn is_safe_name(s: &str) -> bool {
    !s.is_empty() && s != "." && s != ".." && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

fn require_file(path: &Path, label: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{label} {} does not exist", path.display())))
    }
}

impl BackendSpec {
    /// Builds the backend. HTTP keys are read from the named environment variable.
    pub fn build(&self) -> Result<Box<dyn ChatBackend>> {
        match &self.kind {
            BackendKind::Mock { script } => {
                let b = ScriptedBackend::load(BackendId::new(&self.name, "mock"), script)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                Ok(Box::new(b))
            }
            BackendKind::Http { endpoint, model, api_key_env, timeout_secs, max_retries } => {
                let mut cfg = HttpBackendConfig::new(endpoint, model);
                if let Some(var) = api_key_env {
                    let key = std::env::var(var).map_err(|_| {
                        CliError::Config(format!("backend {}: environment variable {var} is not set", self.name))
                    })?;
                    cfg.api_key = Some(key);
                }
                if let Some(t) = timeout_secs {
                    cfg.timeout_secs = *t;
                }
                if let Some(r) = max_retries {
                    cfg.max_retries = *r;
                }
                Ok(Box::new(HttpChatBackend::new(&self.name, cfg)))
            }
        }
    }
}
