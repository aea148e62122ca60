//! Census joint tables and state-stratified meta persona sampling.
//!
//! A joint table is a delimited text file whose header names the demographic
//! axes (in any order) followed by a trailing weight column:
//!
//! ```text
//! AGE,SEX,RACE,STATE,WEIGHT
//! 18-24,Male,White,Florida,10
//! ```
//!
//! Sampling is conditional per state: each state's slice of the table is
//! renormalized and drawn from independently, so every state receives exactly
//! the requested number of personas.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const AGE: &str = "AGE";
pub const SEX: &str = "SEX";
pub const RACE: &str = "RACE";
pub const STATE: &str = "STATE";

/// Axes a meta persona needs, in canonical output order.
pub const META_AXES: [&str; 4] = [AGE, SEX, RACE, STATE];

/// Ages above an open-ended bracket such as `85+` are drawn up to this bound.
pub const OPEN_BRACKET_MAX_AGE: u32 = 99;

#[derive(Debug, Error)]
pub enum CensusError {
    #[error("io error reading joint table: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("joint table is missing the {0} axis column")]
    MissingAxis(String),
    #[error("line {line}: negative weight {weight}")]
    NegativeWeight { line: u64, weight: f64 },
    #[error("joint table has zero total mass")]
    ZeroMass,
    #[error("unknown axis {0:?}")]
    UnknownAxis(String),
    #[error("duplicate category {category:?} on axis {axis}")]
    DuplicateCategory { axis: String, category: String },
    #[error("state {0:?} has zero conditional mass")]
    EmptyState(String),
    #[error("per-state count must be at least 1")]
    ZeroCount,
    #[error("invalid age bracket {0:?}")]
    AgeBracket(String),
}

/// One demographic dimension of a joint table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemographicAxis {
    name: String,
    categories: Vec<String>,
}

impl DemographicAxis {
    pub fn new(name: impl Into<String>, categories: Vec<String>) -> Result<Self, CensusError> {
        let name = name.into();
        if categories.is_empty() {
            return Err(CensusError::Malformed {
                line: 0,
                message: format!("axis {name} has no categories"),
            });
        }
        for (i, c) in categories.iter().enumerate() {
            if categories[..i].contains(c) {
                return Err(CensusError::DuplicateCategory {
                    axis: name,
                    category: c.clone(),
                });
            }
        }
        Ok(Self { name, categories })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    fn index_of(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }
}

/// Probability table over combinations of demographic categories.
///
/// Cells are keyed by one category index per axis. Weights are stored raw;
/// [`JointDistribution::probability`] gives the normalized view.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    axes: Vec<DemographicAxis>,
    cells: BTreeMap<Vec<usize>, f64>,
    total: f64,
}

impl JointDistribution {
    /// Builds a distribution from labelled cells. Duplicate tuples are summed.
    pub fn from_cells<I>(axes: Vec<DemographicAxis>, cells: I) -> Result<Self, CensusError>
    where
        I: IntoIterator<Item = (Vec<String>, f64)>,
    {
        let mut map: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (labels, weight) in cells {
            if labels.len() != axes.len() {
                return Err(CensusError::Malformed {
                    line: 0,
                    message: format!("cell has {} categories, expected {}", labels.len(), axes.len()),
                });
            }
            if !weight.is_finite() || weight < 0.0 {
                return Err(CensusError::NegativeWeight { line: 0, weight });
            }
            let mut key = Vec::with_capacity(axes.len());
            for (axis, label) in axes.iter().zip(&labels) {
                let idx = axis.index_of(label).ok_or_else(|| CensusError::Malformed {
                    line: 0,
                    message: format!("category {label:?} not on axis {}", axis.name),
                })?;
                key.push(idx);
            }
            *map.entry(key).or_insert(0.0) += weight;
        }
        let total: f64 = map.values().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(CensusError::ZeroMass);
        }
        Ok(Self {
            axes,
            cells: map,
            total,
        })
    }

    pub fn axes(&self) -> &[DemographicAxis] {
        &self.axes
    }

    pub fn axis(&self, name: &str) -> Option<&DemographicAxis> {
        self.axes.iter().find(|a| a.name == name)
    }

    fn axis_position(&self, name: &str) -> Result<usize, CensusError> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| CensusError::UnknownAxis(name.to_string()))
    }

    /// Number of distinct (merged) cells.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    /// Raw weight of a labelled cell, zero when absent.
    pub fn weight(&self, labels: &[&str]) -> f64 {
        self.key_of(labels)
            .and_then(|k| self.cells.get(&k).copied())
            .unwrap_or(0.0)
    }

    /// Normalized probability of a labelled cell.
    pub fn probability(&self, labels: &[&str]) -> f64 {
        self.weight(labels) / self.total
    }

    fn key_of(&self, labels: &[&str]) -> Option<Vec<usize>> {
        if labels.len() != self.axes.len() {
            return None;
        }
        self.axes
            .iter()
            .zip(labels)
            .map(|(a, l)| a.index_of(l))
            .collect()
    }

    /// Iterates cells as (category labels, normalized probability).
    pub fn cells(&self) -> impl Iterator<Item = (Vec<&str>, f64)> + '_ {
        self.cells.iter().map(move |(key, w)| {
            let labels = key
                .iter()
                .zip(&self.axes)
                .map(|(&i, a)| a.categories[i].as_str())
                .collect();
            (labels, w / self.total)
        })
    }

    /// Probability vector over the categories of `axis`, in axis order.
    pub fn marginal(&self, axis: &str) -> Result<Vec<f64>, CensusError> {
        let pos = self.axis_position(axis)?;
        let mut out = vec![0.0; self.axes[pos].categories.len()];
        for (key, w) in &self.cells {
            out[key[pos]] += w;
        }
        for v in &mut out {
            *v /= self.total;
        }
        Ok(out)
    }

    /// Distribution restricted to cells where `axis == category`, renormalized.
    pub fn conditional(&self, axis: &str, category: &str) -> Result<JointDistribution, CensusError> {
        let pos = self.axis_position(axis)?;
        let idx = self.axes[pos]
            .index_of(category)
            .ok_or_else(|| CensusError::UnknownAxis(format!("{axis}={category}")))?;
        let cells: BTreeMap<Vec<usize>, f64> = self
            .cells
            .iter()
            .filter(|(k, w)| k[pos] == idx && **w > 0.0)
            .map(|(k, w)| (k.clone(), *w))
            .collect();
        let total: f64 = cells.values().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(CensusError::EmptyState(category.to_string()));
        }
        Ok(JointDistribution {
            axes: self.axes.clone(),
            cells,
            total,
        })
    }
}

/// Reads a joint table from a file.
pub fn load_joint_table(path: impl AsRef<Path>) -> Result<JointDistribution, CensusError> {
    let file = std::fs::File::open(path)?;
    read_joint_table(file)
}

/// Parses a joint table: header row of axis names with the weight column last.
pub fn read_joint_table<R: Read>(reader: R) -> Result<JointDistribution, CensusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| malformed(1, e))?
        .iter()
        .map(|h| h.to_ascii_uppercase())
        .collect::<Vec<_>>();
    if header.len() < 2 {
        return Err(CensusError::Malformed {
            line: 1,
            message: "header needs at least one axis and a weight column".into(),
        });
    }
    let axis_names = &header[..header.len() - 1];
    for required in META_AXES {
        if !axis_names.iter().any(|h| h == required) {
            return Err(CensusError::MissingAxis(required.to_string()));
        }
    }

    let mut categories: Vec<Vec<String>> = vec![Vec::new(); axis_names.len()];
    let mut rows: Vec<(Vec<String>, f64)> = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e)
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != header.len() {
            return Err(CensusError::Malformed {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let raw_weight = &record[header.len() - 1];
        let weight: f64 = raw_weight.parse().map_err(|_| CensusError::Malformed {
            line,
            message: format!("weight {raw_weight:?} is not a number"),
        })?;
        if !weight.is_finite() {
            return Err(CensusError::Malformed {
                line,
                message: format!("weight {raw_weight:?} is not finite"),
            });
        }
        if weight < 0.0 {
            return Err(CensusError::NegativeWeight { line, weight });
        }
        let mut labels = Vec::with_capacity(axis_names.len());
        for (i, field) in record.iter().take(axis_names.len()).enumerate() {
            if field.is_empty() {
                return Err(CensusError::Malformed {
                    line,
                    message: format!("empty {} category", axis_names[i]),
                });
            }
            if axis_names[i] == AGE {
                AgeBracket::parse(field)?;
            }
            if !categories[i].iter().any(|c| c == field) {
                categories[i].push(field.to_string());
            }
            labels.push(field.to_string());
        }
        rows.push((labels, weight));
    }
    if rows.is_empty() {
        return Err(CensusError::ZeroMass);
    }
    let axes = axis_names
        .iter()
        .zip(categories)
        .map(|(n, c)| DemographicAxis::new(n.clone(), c))
        .collect::<Result<Vec<_>, _>>()?;
    JointDistribution::from_cells(axes, rows)
}

fn malformed(line: u64, e: impl fmt::Display) -> CensusError {
    CensusError::Malformed {
        line,
        message: e.to_string(),
    }
}

/// Inclusive integer age range parsed from a census bracket label.
///
/// Accepted forms: `18-24`, `18 to 24`, `85+`, `85 and over`, `Under 5`, `34`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgeBracket {
    pub low: u32,
    pub high: u32,
}

impl AgeBracket {
    pub fn parse(label: &str) -> Result<Self, CensusError> {
        let err = || CensusError::AgeBracket(label.to_string());
        let s = label.trim().to_ascii_lowercase();
        let num = |t: &str| t.trim().parse::<u32>().map_err(|_| err());
        let bracket = if let Some(rest) = s.strip_suffix('+') {
            let low = num(rest)?;
            AgeBracket { low, high: OPEN_BRACKET_MAX_AGE.max(low) }
        } else if let Some(rest) = s
            .strip_suffix("and over")
            .or_else(|| s.strip_suffix("and older"))
        {
            let low = num(rest)?;
            AgeBracket { low, high: OPEN_BRACKET_MAX_AGE.max(low) }
        } else if let Some(rest) = s.strip_prefix("under") {
            let bound = num(rest)?;
            if bound == 0 {
                return Err(err());
            }
            AgeBracket { low: 0, high: bound - 1 }
        } else if let Some((a, b)) = s.split_once(" to ").or_else(|| s.split_once('-')) {
            AgeBracket { low: num(a)?, high: num(b)? }
        } else {
            let v = num(&s)?;
            AgeBracket { low: v, high: v }
        };
        if bracket.low > bracket.high {
            return Err(err());
        }
        Ok(bracket)
    }

    pub fn contains(&self, age: u32) -> bool {
        (self.low..=self.high).contains(&age)
    }
}

/// Minimal persona sampled straight from the census table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetaPersona {
    #[serde(rename = "AGE")]
    pub age: u32,
    #[serde(rename = "SEX")]
    pub sex: String,
    #[serde(rename = "RACE")]
    pub race: String,
    #[serde(rename = "STATE")]
    pub state: String,
}

impl MetaPersona {
    /// Fields as (key, value) in canonical AGE, SEX, RACE, STATE order.
    pub fn fields(&self) -> [(&'static str, String); 4] {
        [
            (AGE, self.age.to_string()),
            (SEX, self.sex.clone()),
            (RACE, self.race.clone()),
            (STATE, self.state.clone()),
        ]
    }
}

/// Seed for one state's sampler: SHA-256 over the run seed (little-endian)
/// followed by the state label bytes, used as a ChaCha20 key.
pub fn derive_state_seed(seed: u64, state: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(state.as_bytes());
    hasher.finalize().into()
}

/// Draws `per_state` personas for every state, in STATE axis order.
///
/// Each state uses an independent ChaCha20 stream keyed by
/// [`derive_state_seed`], so states can be sampled in any order (or in
/// parallel) with identical results.
pub fn sample_meta_personas(
    dist: &JointDistribution,
    per_state: usize,
    seed: u64,
) -> Result<Vec<MetaPersona>, CensusError> {
    if per_state == 0 {
        return Err(CensusError::ZeroCount);
    }
    let state_axis = dist
        .axis(STATE)
        .ok_or_else(|| CensusError::MissingAxis(STATE.to_string()))?;
    let mut out = Vec::with_capacity(per_state * state_axis.categories.len());
    for state in &state_axis.categories {
        out.extend(sample_state(dist, state, per_state, seed)?);
    }
    Ok(out)
}

/// Draws `count` personas from the conditional slice of one state.
pub fn sample_state(
    dist: &JointDistribution,
    state: &str,
    count: usize,
    seed: u64,
) -> Result<Vec<MetaPersona>, CensusError> {
    let slice = dist.conditional(STATE, state)?;
    let pos: Vec<usize> = META_AXES
        .iter()
        .map(|a| slice.axis_position(a))
        .collect::<Result<_, _>>()?;
    let cells: Vec<(&Vec<usize>, f64)> = slice.cells.iter().map(|(k, w)| (k, *w)).collect();
    let index = WeightedIndex::new(cells.iter().map(|(_, w)| *w))
        .map_err(|_| CensusError::EmptyState(state.to_string()))?;
    let mut rng = ChaCha20Rng::from_seed(derive_state_seed(seed, state));

    let label = |axis: usize, key: &[usize]| slice.axes[pos[axis]].categories[key[pos[axis]]].clone();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let key = cells[index.sample(&mut rng)].0;
        let bracket = AgeBracket::parse(&label(0, key))?;
        let age = rng.random_range(bracket.low..=bracket.high);
        out.push(MetaPersona {
            age,
            sex: label(1, key),
            race: label(2, key),
            state: label(3, key),
        });
    }
    Ok(out)
}

/// Serializes meta personas as JSONL with keys AGE, SEX, RACE, STATE.
pub fn write_meta_jsonl<W: std::io::Write>(
    mut writer: W,
    metas: &[MetaPersona],
) -> std::io::Result<()> {
    for m in metas {
        serde_json::to_writer(&mut writer, m)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_meta_jsonl<R: std::io::BufRead>(reader: R) -> Result<Vec<MetaPersona>, CensusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| malformed(i as u64 + 1, e))?);
    }
    Ok(out)
}
