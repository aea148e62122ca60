//! Persona tiers, tabular templates, catalog validation and the persona
//! JSONL record format.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{self, ValueCatalog};
use crate::census::MetaPersona;

/// Keys of the objective tabular template, in template order.
pub const OBJECTIVE_KEYS: [&str; 20] = [
    "AGE",
    "SEX",
    "RACE",
    "STATE",
    "ANCESTRY",
    "HOUSEHOLD_LANGUAGE",
    "EDUCATION",
    "EMPLOYMENT_STATUS",
    "CLASS_OF_WORKER",
    "INDUSTRY_CATEGORY",
    "OCCUPATION_CATEGORY",
    "INCOME",
    "MARITAL_STATUS",
    "HOUSEHOLD_TYPE",
    "FAMILY_PRESENCE_AND_AGE",
    "PLACE_OF_BIRTH",
    "CITIZENSHIP",
    "VETERAN_STATUS",
    "DISABILITY",
    "HEALTH_INSURANCE",
];

/// Keys of the subjective tabular template, in template order.
pub const SUBJECTIVE_KEYS: [&str; 34] = [
    "AGE",
    "SEX",
    "RACE",
    "STATE",
    "ANCESTRY",
    "HOUSEHOLD_LANGUAGE",
    "EDUCATION",
    "EMPLOYMENT_STATUS",
    "CLASS_OF_WORKER",
    "INDUSTRY_CATEGORY",
    "OCCUPATION_CATEGORY",
    "DETAILED_JOB_DESCRIPTION",
    "INCOME",
    "MARITAL_STATUS",
    "HOUSEHOLD_TYPE",
    "FAMILY_PRESENCE_AND_AGE",
    "PLACE_OF_BIRTH",
    "CITIZENSHIP",
    "VETERAN_STATUS",
    "DISABILITY",
    "HEALTH_INSURANCE",
    "BIG_FIVE_SCORES",
    "DEFINING_QUIRKS",
    "MANNERISMS",
    "PERSONAL_TIME",
    "LIFESTYLE",
    "IDEOLOGY",
    "POLITICAL_VIEWS",
    "RELIGION",
    "COGNITIVE_DIFFICULTY",
    "ABILITY_TO_SPEAK_ENGLISH",
    "VISION_DIFFICULTY",
    "FERTILITY",
    "HEARING_DIFFICULTY",
];

pub const BIG_FIVE_KEY: &str = "BIG_FIVE_SCORES";

/// Subjective-tier fields that carry a catalog.
pub const SUBJECTIVE_CATALOG_FIELDS: [&str; 2] = ["IDEOLOGY", "POLITICAL_VIEWS"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PersonaError {
    #[error("unknown persona tier {0:?}")]
    UnknownTier(String),
    #[error("missing template key {0}")]
    MissingKey(String),
    #[error("unexpected key {0} not in the {1} template")]
    UnexpectedKey(String, PersonaTier),
    #[error("field {0} has the wrong shape: {1}")]
    FieldShape(String, String),
    #[error("{0} record has no {1}")]
    MissingSection(PersonaTier, &'static str),
    #[error("descriptive narrative is empty")]
    EmptyNarrative,
    #[error("invalid persona record: {0}")]
    Json(String),
}

/// Persona tiers ordered by how much of the persona a model writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PersonaTier {
    Meta,
    ObjectiveTabular,
    SubjectiveTabular,
    Descriptive,
}

impl PersonaTier {
    pub const ALL: [PersonaTier; 4] = [
        PersonaTier::Meta,
        PersonaTier::ObjectiveTabular,
        PersonaTier::SubjectiveTabular,
        PersonaTier::Descriptive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PersonaTier::Meta => "META",
            PersonaTier::ObjectiveTabular => "OBJECTIVE_TABULAR",
            PersonaTier::SubjectiveTabular => "SUBJECTIVE_TABULAR",
            PersonaTier::Descriptive => "DESCRIPTIVE",
        }
    }

    pub fn is_tabular(self) -> bool {
        matches!(self, PersonaTier::ObjectiveTabular | PersonaTier::SubjectiveTabular)
    }

    /// Template keys for tabular tiers.
    pub fn template_keys(self) -> Option<&'static [&'static str]> {
        match self {
            PersonaTier::ObjectiveTabular => Some(&OBJECTIVE_KEYS),
            PersonaTier::SubjectiveTabular => Some(&SUBJECTIVE_KEYS),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PersonaTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PersonaTier {
    type Err = PersonaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PersonaTier::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PersonaError::UnknownTier(s.to_string()))
    }
}

/// A tabular field value: plain text, or a nested group (BIG_FIVE_SCORES).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Text(String),
    Group(IndexMap<String, String>),
}

impl FieldValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            FieldValue::Text(s) => Some(s),
            FieldValue::Group(_) => None,
        }
    }

    /// Converts a JSON value from model output. Scalars become text; one level
    /// of object nesting is kept.
    pub fn from_json(key: &str, v: &serde_json::Value) -> Result<Self, PersonaError> {
        use serde_json::Value;
        let scalar = |v: &Value| -> Option<String> {
            match v {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                Value::Bool(b) => Some(b.to_string()),
                Value::Null => Some(String::new()),
                _ => None,
            }
        };
        if let Some(s) = scalar(v) {
            return Ok(FieldValue::Text(s));
        }
        match v {
            Value::Object(map) => {
                let mut group = IndexMap::new();
                for (k, inner) in map {
                    let s = scalar(inner).ok_or_else(|| {
                        PersonaError::FieldShape(format!("{key}.{k}"), "nested too deeply".into())
                    })?;
                    group.insert(k.clone(), s);
                }
                Ok(FieldValue::Group(group))
            }
            _ => Err(PersonaError::FieldShape(key.to_string(), "arrays are not allowed".into())),
        }
    }
}

/// A meta persona extended with template fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabularPersona {
    tier: PersonaTier,
    meta: MetaPersona,
    fields: IndexMap<String, FieldValue>,
}

impl TabularPersona {
    /// Checks the field set against the tier's template and stores fields in
    /// template order.
    pub fn new(
        tier: PersonaTier,
        meta: MetaPersona,
        mut fields: IndexMap<String, FieldValue>,
    ) -> Result<Self, PersonaError> {
        let keys = tier
            .template_keys()
            .ok_or_else(|| PersonaError::UnknownTier(tier.to_string()))?;
        let mut ordered = IndexMap::with_capacity(keys.len());
        for &key in keys {
            let value = fields
                .shift_remove(key)
                .ok_or_else(|| PersonaError::MissingKey(key.to_string()))?;
            match (&value, key == BIG_FIVE_KEY) {
                (FieldValue::Group(group), true) => {
                    for t in catalog::BIG_FIVE_TRAITS {
                        if !group.contains_key(t) {
                            return Err(PersonaError::MissingKey(format!("{BIG_FIVE_KEY}.{t}")));
                        }
                    }
                    if let Some(extra) = group.keys().find(|k| !catalog::BIG_FIVE_TRAITS.contains(&k.as_str())) {
                        return Err(PersonaError::UnexpectedKey(format!("{BIG_FIVE_KEY}.{extra}"), tier));
                    }
                }
                (FieldValue::Text(_), true) => {
                    return Err(PersonaError::FieldShape(key.into(), "expected the five trait scores".into()))
                }
                (FieldValue::Group(_), false) => {
                    return Err(PersonaError::FieldShape(key.into(), "expected text".into()))
                }
                (FieldValue::Text(_), false) => {}
            }
            ordered.insert(key.to_string(), value);
        }
        if let Some((extra, _)) = fields.into_iter().next() {
            return Err(PersonaError::UnexpectedKey(extra, tier));
        }
        Ok(Self {
            tier,
            meta,
            fields: ordered,
        })
    }

    pub fn tier(&self) -> PersonaTier {
        self.tier
    }

    pub fn meta(&self) -> &MetaPersona {
        &self.meta
    }

    pub fn fields(&self) -> &IndexMap<String, FieldValue> {
        &self.fields
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        self.fields.get(key).and_then(FieldValue::as_text)
    }
}

/// Free-form narrative persona.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptivePersona {
    meta: MetaPersona,
    narrative: String,
}

impl DescriptivePersona {
    pub fn new(meta: MetaPersona, narrative: impl Into<String>) -> Result<Self, PersonaError> {
        let narrative = narrative.into();
        if narrative.trim().is_empty() {
            return Err(PersonaError::EmptyNarrative);
        }
        Ok(Self { meta, narrative })
    }

    pub fn meta(&self) -> &MetaPersona {
        &self.meta
    }

    pub fn narrative(&self) -> &str {
        &self.narrative
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Persona {
    Meta(MetaPersona),
    Tabular(TabularPersona),
    Descriptive(DescriptivePersona),
}

impl Persona {
    pub fn tier(&self) -> PersonaTier {
        match self {
            Persona::Meta(_) => PersonaTier::Meta,
            Persona::Tabular(t) => t.tier,
            Persona::Descriptive(_) => PersonaTier::Descriptive,
        }
    }

    /// The meta persona this persona was sampled as or generated from.
    pub fn meta(&self) -> &MetaPersona {
        match self {
            Persona::Meta(m) => m,
            Persona::Tabular(t) => &t.meta,
            Persona::Descriptive(d) => &d.meta,
        }
    }

    /// All persona text, used for sentiment and word statistics: tabular
    /// field values joined by newlines, or the narrative.
    pub fn text_content(&self) -> String {
        match self {
            Persona::Meta(m) => m.fields().map(|(_, v)| v).join("\n"),
            Persona::Tabular(t) => {
                let mut parts = Vec::new();
                for v in t.fields.values() {
                    match v {
                        FieldValue::Text(s) => parts.push(s.clone()),
                        FieldValue::Group(g) => parts.extend(g.values().cloned()),
                    }
                }
                parts.join("\n")
            }
            Persona::Descriptive(d) => d.narrative.clone(),
        }
    }
}

/// One line of a persona JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaRecord {
    pub tier: String,
    /// Position of the source meta persona; written by the pipeline, absent
    /// in external datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub meta: MetaPersona,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<IndexMap<String, FieldValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narrative: Option<String>,
}

pub fn persona_to_record(persona: &Persona) -> PersonaRecord {
    let mut record = PersonaRecord {
        tier: persona.tier().as_str().to_string(),
        index: None,
        meta: persona.meta().clone(),
        fields: None,
        narrative: None,
    };
    match persona {
        Persona::Meta(_) => {}
        Persona::Tabular(t) => record.fields = Some(t.fields.clone()),
        Persona::Descriptive(d) => record.narrative = Some(d.narrative.clone()),
    }
    record
}

pub fn record_to_persona(record: &PersonaRecord) -> Result<Persona, PersonaError> {
    let tier: PersonaTier = record.tier.parse()?;
    let meta = record.meta.clone();
    match tier {
        PersonaTier::Meta => Ok(Persona::Meta(meta)),
        PersonaTier::ObjectiveTabular | PersonaTier::SubjectiveTabular => {
            let fields = record
                .fields
                .clone()
                .ok_or(PersonaError::MissingSection(tier, "fields"))?;
            Ok(Persona::Tabular(TabularPersona::new(tier, meta, fields)?))
        }
        PersonaTier::Descriptive => {
            let narrative = record
                .narrative
                .clone()
                .ok_or(PersonaError::MissingSection(tier, "narrative"))?;
            Ok(Persona::Descriptive(DescriptivePersona::new(meta, narrative)?))
        }
    }
}

/// Serializes a persona as one JSONL line (without the newline).
pub fn persona_to_json(persona: &Persona, index: Option<usize>) -> String {
    let mut record = persona_to_record(persona);
    record.index = index;
    serde_json::to_string(&record).expect("persona records always serialize")
}

pub fn persona_from_json(line: &str) -> Result<(Persona, Option<usize>), PersonaError> {
    let record: PersonaRecord =
        serde_json::from_str(line).map_err(|e| PersonaError::Json(e.to_string()))?;
    Ok((record_to_persona(&record)?, record.index))
}

/// A single failed check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub value: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    valid: bool,
    violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            valid: violations.is_empty(),
            violations,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.valid
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    /// Names of the fields with at least one violation, in report order.
    pub fn fields(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for v in &self.violations {
            if !out.contains(&v.field.as_str()) {
                out.push(&v.field);
            }
        }
        out
    }
}

/// Checks every field of a tabular persona against the catalog. Reports all
/// failures.
pub fn validate_tabular(persona: &TabularPersona, catalog: &ValueCatalog) -> ValidationReport {
    let mut violations = Vec::new();
    let mut flag = |field: &str, value: &str, reason: String| {
        violations.push(Violation {
            field: field.to_string(),
            value: value.to_string(),
            reason,
        })
    };

    for (key, value) in &persona.fields {
        let text = match value {
            FieldValue::Text(t) => t.as_str(),
            FieldValue::Group(group) => {
                for (trait_name, score) in group {
                    if catalog::big_five_score(score).is_none() {
                        flag(
                            &format!("{key}.{trait_name}"),
                            score,
                            "expected a score from 0 to 100 or Low/Medium/High".into(),
                        );
                    }
                }
                continue;
            }
        };
        let meta = &persona.meta;
        match key.as_str() {
            "AGE" => match text.trim().parse::<u32>() {
                Ok(age) if age == meta.age => {}
                Ok(_) => flag(key, text, format!("does not match meta persona AGE {}", meta.age)),
                Err(_) => flag(key, text, "not an integer age".into()),
            },
            "SEX" | "RACE" | "STATE" => {
                let expected = match key.as_str() {
                    "SEX" => &meta.sex,
                    "RACE" => &meta.race,
                    _ => &meta.state,
                };
                if text != expected {
                    flag(key, text, format!("does not match meta persona {key} {expected:?}"));
                }
            }
            "INDUSTRY_CATEGORY" => {
                if !catalog.industries().any(|i| i == text) {
                    flag(key, text, "not a catalog value".into());
                }
            }
            "OCCUPATION_CATEGORY" => match catalog.industry_of(text) {
                None => flag(key, text, "not a catalog value".into()),
                Some(parent) => {
                    let industry = persona.text("INDUSTRY_CATEGORY").unwrap_or_default();
                    if catalog.industries().any(|i| i == industry) && parent != industry {
                        flag(key, text, format!("not nested under INDUSTRY_CATEGORY {industry:?}"));
                    }
                }
            },
            "INCOME" => {
                let (lo, hi) = catalog.income_range();
                match catalog::parse_income(text) {
                    Some(v) if (lo..=hi).contains(&v) => {}
                    Some(_) => flag(key, text, format!("outside the range {lo}..={hi}")),
                    None => flag(key, text, "not an integer amount".into()),
                }
            }
            "PLACE_OF_BIRTH" => {
                let foreign = persona
                    .text("CITIZENSHIP")
                    .is_some_and(catalog::indicates_foreign_birth);
                if !(catalog.is_us_birthplace(text) || (foreign && !text.trim().is_empty())) {
                    flag(key, text, "not a US state and CITIZENSHIP does not indicate foreign birth".into());
                }
            }
            _ => match catalog.allowed(key) {
                Some(allowed) => {
                    if !allowed.iter().any(|a| a == text) {
                        flag(key, text, "not a catalog value".into());
                    }
                }
                None => {
                    if text.trim().is_empty() {
                        flag(key, text, "empty".into());
                    }
                }
            },
        }
    }
    ValidationReport::from_violations(violations)
}

/// Subset of [`validate_tabular`] applied to generated subjective personas:
/// meta consistency, IDEOLOGY and POLITICAL_VIEWS, Big Five scores and
/// non-empty free text. The remaining catalog fields are left to the model.
pub fn validate_subjective_generation(persona: &TabularPersona, catalog: &ValueCatalog) -> ValidationReport {
    let full = validate_tabular(persona, catalog);
    let kept = full
        .violations
        .into_iter()
        .filter(|v| {
            ["AGE", "SEX", "RACE", "STATE"].contains(&v.field.as_str())
                || SUBJECTIVE_CATALOG_FIELDS.contains(&v.field.as_str())
                || v.field.starts_with(BIG_FIVE_KEY)
                || v.reason == "empty"
        })
        .collect();
    ValidationReport::from_violations(kept)
}
