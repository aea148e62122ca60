//! Generation and simulation prompt templates.
//!
//! Template bodies live in `data/prompts/` and are reproduced byte for byte;
//! rendering only substitutes the `{METADATA}`, `{TEMPLATE}`, `{PERSONA}` and
//! `{QUESTION}` slots.

use thiserror::Error;

use crate::census::MetaPersona;
use crate::persona::{FieldValue, Persona, PersonaTier};

pub const GENERATION_SYSTEM: &str = include_str!("../data/prompts/generation_system.txt");
pub const OBJECTIVE_INSTRUCTIONS: &str = include_str!("../data/prompts/objective_tabular.txt");
pub const OBJECTIVE_TEMPLATE: &str = include_str!("../data/prompts/objective_template.txt");
pub const SUBJECTIVE_INSTRUCTIONS: &str = include_str!("../data/prompts/subjective_tabular.txt");
pub const SUBJECTIVE_TEMPLATE: &str = include_str!("../data/prompts/subjective_template.txt");
pub const DESCRIPTIVE_INSTRUCTIONS: &str = include_str!("../data/prompts/descriptive.txt");
pub const SIMULATION: &str = include_str!("../data/prompts/simulation.txt");

const METADATA_SLOT: &str = "{METADATA}";
const TEMPLATE_SLOT: &str = "{TEMPLATE}";
const PERSONA_SLOT: &str = "{PERSONA}";
const QUESTION_SLOT: &str = "{QUESTION}";

/// Maximum number of lettered choices.
pub const MAX_CHOICES: usize = 26;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("meta personas are sampled, not generated")]
    MetaTier,
    #[error("{0} choices exceed the {MAX_CHOICES} available letters")]
    TooManyChoices(usize),
    #[error("a question needs at least two choices, got {0}")]
    TooFewChoices(usize),
}

/// System and user text for one generation call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

/// Generation prompt template for one persona tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub tier: PersonaTier,
    pub system_text: &'static str,
    pub user_text: &'static str,
    /// Filled-in template body for tabular tiers.
    pub template: Option<&'static str>,
}

impl PromptTemplate {
    pub fn for_tier(tier: PersonaTier) -> Result<Self, PromptError> {
        let (user_text, template) = match tier {
            PersonaTier::Meta => return Err(PromptError::MetaTier),
            PersonaTier::ObjectiveTabular => (OBJECTIVE_INSTRUCTIONS, Some(OBJECTIVE_TEMPLATE)),
            PersonaTier::SubjectiveTabular => (SUBJECTIVE_INSTRUCTIONS, Some(SUBJECTIVE_TEMPLATE)),
            PersonaTier::Descriptive => (DESCRIPTIVE_INSTRUCTIONS, None),
        };
        Ok(Self {
            tier,
            system_text: GENERATION_SYSTEM.trim_end_matches('\n'),
            user_text,
            template,
        })
    }

    pub fn render(&self, meta: &MetaPersona) -> RenderedPrompt {
        let metadata = meta_block(meta);
        let mut slots = vec![(METADATA_SLOT, metadata.as_str())];
        if let Some(t) = self.template {
            slots.push((TEMPLATE_SLOT, t.trim_end_matches('\n')));
        }
        RenderedPrompt {
            system: self.system_text.to_string(),
            user: fill_slots(self.user_text, &slots),
        }
    }
}

pub fn render_generation_prompt(tier: PersonaTier, meta: &MetaPersona) -> Result<RenderedPrompt, PromptError> {
    Ok(PromptTemplate::for_tier(tier)?.render(meta))
}

/// Renders the single-message opinion simulation prompt.
pub fn render_simulation_prompt(
    persona: &Persona,
    question_text: &str,
    choices: &[String],
) -> Result<String, PromptError> {
    let question = question_block(question_text, choices)?;
    let persona = persona_block(persona);
    Ok(fill_slots(SIMULATION, &[(PERSONA_SLOT, &persona), (QUESTION_SLOT, &question)]))
}

/// Question text followed by `A. ...`, `B. ...` choice lines.
pub fn question_block(text: &str, choices: &[String]) -> Result<String, PromptError> {
    if choices.len() > MAX_CHOICES {
        return Err(PromptError::TooManyChoices(choices.len()));
    }
    if choices.len() < 2 {
        return Err(PromptError::TooFewChoices(choices.len()));
    }
    let mut out = text.to_string();
    for (i, c) in choices.iter().enumerate() {
        out.push('\n');
        out.push(choice_letter(i));
        out.push_str(". ");
        out.push_str(c);
    }
    Ok(out)
}

pub fn choice_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// Meta persona in the template's `"KEY": "value"` line style.
pub fn meta_block(meta: &MetaPersona) -> String {
    meta.fields()
        .iter()
        .map(|(k, v)| kv_line(k, v))
        .collect::<Vec<_>>()
        .join(",\n")
}

/// Persona text inserted into the simulation prompt.
pub fn persona_block(persona: &Persona) -> String {
    match persona {
        Persona::Meta(m) => meta_block(m),
        Persona::Tabular(t) => t
            .fields()
            .iter()
            .map(|(k, v)| match v {
                FieldValue::Text(s) => kv_line(k, s),
                FieldValue::Group(g) => {
                    let inner: Vec<String> = g.iter().map(|(gk, gv)| kv_line(gk, gv)).collect();
                    format!("{}: {{\n{}\n}}", quote(k), inner.join(",\n"))
                }
            })
            .collect::<Vec<_>>()
            .join(",\n"),
        Persona::Descriptive(d) => d.narrative().to_string(),
    }
}

fn kv_line(key: &str, value: &str) -> String {
    format!("{}: {}", quote(key), quote(value))
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Replaces each slot once, scanning the template a single time so slot
/// markers inside substituted values are left alone.
fn fill_slots(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    loop {
        let next = slots
            .iter()
            .filter_map(|(slot, value)| rest.find(slot).map(|pos| (pos, *slot, *value)))
            .min_by_key(|(pos, _, _)| *pos);
        match next {
            Some((pos, slot, value)) => {
                out.push_str(&rest[..pos]);
                out.push_str(value);
                rest = &rest[pos + slot.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::fixtures;

    fn other_meta() -> MetaPersona {
        MetaPersona {
            age: 71,
            sex: "Male".into(),
            race: "Black or African American".into(),
            state: "Ohio".into(),
        }
    }

    #[test]
    fn meta_tier_has_no_prompt() {
        assert_eq!(render_generation_prompt(PersonaTier::Meta, &fixtures::meta()), Err(PromptError::MetaTier));
    }

    #[test]
    fn objective_prompt_instructions() {
        let p = render_generation_prompt(PersonaTier::ObjectiveTabular, &fixtures::meta()).unwrap();
        assert!(p.user.lines().any(|l| l.contains("DO NOT ADD EXTRA FEATURES TO THE TEMPLATE.")));
        assert!(p.user.contains("### VALUE RANGES AND CATEGORIES ###"));
        assert!(p.user.contains("\"HEALTH_INSURANCE\": \"\"\n\n### PERSONA GENERATION ###\n"));
        assert!(p.system.starts_with("You are an AI assistant specialized in detailed and unbiased persona generation"));
        assert!(!p.user.contains(METADATA_SLOT) && !p.user.contains(TEMPLATE_SLOT));
    }

    #[test]
    fn descriptive_prompt_instructions() {
        let p = render_generation_prompt(PersonaTier::Descriptive, &fixtures::meta()).unwrap();
        assert!(p.user.contains("create a detailed, diverse, and vivid persona"));
        assert!(!p.user.contains("### FINAL PERSONA TEMPLATE ###"));
    }

    #[test]
    fn substitution_is_local_to_metadata() {
        for tier in [PersonaTier::ObjectiveTabular, PersonaTier::SubjectiveTabular, PersonaTier::Descriptive] {
            let a = render_generation_prompt(tier, &fixtures::meta()).unwrap().user;
            let b = render_generation_prompt(tier, &other_meta()).unwrap().user;
            let (ma, mb) = (meta_block(&fixtures::meta()), meta_block(&other_meta()));
            let start = a.find(&ma).unwrap();
            assert_eq!(b.find(&mb).unwrap(), start);
            assert_eq!(&a[..start], &b[..start]);
            assert_eq!(&a[start + ma.len()..], &b[start + mb.len()..]);
        }
    }

    #[test]
    fn simulation_prompt_letters() {
        let choices: Vec<String> = ["Yes", "No", "Maybe", "Unsure"].map(String::from).to_vec();
        let p = render_simulation_prompt(&Persona::Meta(fixtures::meta()), "Do you?", &choices).unwrap();
        for l in ["A.", "B.", "C.", "D."] {
            assert!(p.lines().any(|line| line.starts_with(l)), "{l}");
        }
        assert!(p.contains("Always pick an option, even in unclear cases"));
        assert!(p.contains("Be Faithful to the Persona"));
        let persona_region = p
            .split("### PERSONA ###\n")
            .nth(1)
            .unwrap()
            .split("\n\n### QUESTION ###")
            .next()
            .unwrap();
        assert_eq!(
            persona_region,
            "\"AGE\": \"34\",\n\"SEX\": \"Female\",\n\"RACE\": \"White\",\n\"STATE\": \"Florida\""
        );
    }

    #[test]
    fn choice_count_limits() {
        let many: Vec<String> = (0..27).map(|i| i.to_string()).collect();
        let meta = Persona::Meta(fixtures::meta());
        assert_eq!(render_simulation_prompt(&meta, "q", &many), Err(PromptError::TooManyChoices(27)));
        assert!(render_simulation_prompt(&meta, "q", &many[..26]).unwrap().contains("\nZ. 25"));
        assert_eq!(render_simulation_prompt(&meta, "q", &many[..1]), Err(PromptError::TooFewChoices(1)));
    }

    #[test]
    fn slot_markers_in_values_survive() {
        let out = fill_slots("a {PERSONA} b {QUESTION} c", &[("{PERSONA}", "{QUESTION}"), ("{QUESTION}", "Q")]);
        assert_eq!(out, "a {QUESTION} b Q c");
    }

    #[test]
    fn tabular_persona_block_mirrors_template_style() {
        let block = persona_block(&Persona::Tabular(fixtures::subjective()));
        assert!(block.starts_with("\"AGE\": \"34\",\n\"SEX\": \"Female\""));
        assert!(block.contains("\"BIG_FIVE_SCORES\": {\n\"OPENNESS\": \"High\",\n"));
        assert!(block.contains("\"EDUCATION\": \"Bachelor's\""));
    }
}
