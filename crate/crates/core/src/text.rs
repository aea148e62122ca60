//! Lexicon-based sentiment scoring and word frequencies for persona text.
//!
//! The built-in lexicon (`data/lexicon/sentiment.csv`, about 300 entries) is
//! a small hand-assigned polarity/subjectivity table. Scores are comparable
//! across personas and tiers but not to any other sentiment tool.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persona::{Persona, PersonaTier};

const BUILTIN_LEXICON: &str = include_str!("../data/lexicon/sentiment.csv");
const BUILTIN_NEGATORS: &str = include_str!("../data/lexicon/negators.txt");
const BUILTIN_INTENSIFIERS: &str = include_str!("../data/lexicon/intensifiers.csv");
const BUILTIN_STOPWORDS: &str = include_str!("../data/lexicon/stopwords.txt");

/// Tokens before a lexicon hit that are searched for a negator.
const NEGATION_WINDOW: usize = 2;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("lexicon: {0}")]
    Csv(#[from] csv::Error),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("lexicon entry {token}: polarity {polarity} or subjectivity {subjectivity} out of range")]
    EntryRange { token: String, polarity: f64, subjectivity: f64 },
    #[error("intensifier {token}: multiplier {multiplier} must be positive")]
    Multiplier { token: String, multiplier: f64 },
    #[error("lexicon has no entries")]
    EmptyLexicon,
    #[error("no personas for tier {0}")]
    EmptyGroup(PersonaTier),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    /// In [-1, 1].
    pub polarity: f64,
    /// In [0, 1].
    pub subjectivity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SentimentLexicon {
    entries: HashMap<String, (f64, f64)>,
    negators: HashSet<String>,
    intensifiers: HashMap<String, f64>,
}

#[derive(Deserialize)]
struct EntryRow {
    token: String,
    polarity: f64,
    subjectivity: f64,
}

#[derive(Deserialize)]
struct IntensifierRow {
    token: String,
    multiplier: f64,
}

impl SentimentLexicon {
    pub fn builtin() -> &'static SentimentLexicon {
        static LEX: OnceLock<SentimentLexicon> = OnceLock::new();
        LEX.get_or_init(|| {
            Self::from_sources(BUILTIN_LEXICON.as_bytes(), BUILTIN_NEGATORS, BUILTIN_INTENSIFIERS.as_bytes())
                .expect("built-in lexicon is valid")
        })
    }

    pub fn new(
        entries: HashMap<String, (f64, f64)>,
        negators: HashSet<String>,
        intensifiers: HashMap<String, f64>,
    ) -> Result<Self, TextError> {
        if entries.is_empty() {
            return Err(TextError::EmptyLexicon);
        }
        for (token, &(polarity, subjectivity)) in &entries {
            if !(-1.0..=1.0).contains(&polarity) || !(0.0..=1.0).contains(&subjectivity) {
                return Err(TextError::EntryRange { token: token.clone(), polarity, subjectivity });
            }
        }
        for (token, &multiplier) in &intensifiers {
            if multiplier.is_nan() || multiplier <= 0.0 {
                return Err(TextError::Multiplier { token: token.clone(), multiplier });
            }
        }
        let lower = |s: &String| s.to_lowercase();
        Ok(Self {
            entries: entries.iter().map(|(k, v)| (lower(k), *v)).collect(),
            negators: negators.iter().map(lower).collect(),
            intensifiers: intensifiers.iter().map(|(k, v)| (lower(k), *v)).collect(),
        })
    }

    /// Reads a `token,polarity,subjectivity` CSV, a newline-separated negator
    /// list and a `token,multiplier` CSV.
    pub fn from_sources<L: Read, I: Read>(lexicon: L, negators: &str, intensifiers: I) -> Result<Self, TextError> {
        let mut entries = HashMap::new();
        for row in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(lexicon).deserialize() {
            let row: EntryRow = row?;
            entries.insert(row.token, (row.polarity, row.subjectivity));
        }
        let mut mults = HashMap::new();
        for row in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(intensifiers).deserialize() {
            let row: IntensifierRow = row?;
            mults.insert(row.token, row.multiplier);
        }
        Self::new(entries, word_list(negators), mults)
    }

    pub fn load(lexicon: &Path, negators: &Path, intensifiers: &Path) -> Result<Self, TextError> {
        let open = |p: &Path| {
            std::fs::read(p).map_err(|source| TextError::Io { path: p.display().to_string(), source })
        };
        let negators = String::from_utf8_lossy(&open(negators)?).into_owned();
        Self::from_sources(open(lexicon)?.as_slice(), &negators, open(intensifiers)?.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Non-empty trimmed lines, lowercased.
pub fn word_list(text: &str) -> HashSet<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_lowercase).collect()
}

pub fn builtin_stopwords() -> &'static HashSet<String> {
    static WORDS: OnceLock<HashSet<String>> = OnceLock::new();
    WORDS.get_or_init(|| word_list(BUILTIN_STOPWORDS))
}

/// Lowercased word tokens; apostrophes inside a word are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}]+(?:['’][\p{L}\p{N}]+)*").expect("valid regex"));
    re.find_iter(text).map(|m| m.as_str().replace('’', "'").to_lowercase()).collect()
}

/// Averages lexicon hits. An intensifier directly before a hit scales its
/// polarity, a negator among the two preceding tokens flips its sign, and the
/// result is clamped to [-1, 1]. Text without hits scores (0, 0).
pub fn analyze_sentiment(text: &str, lexicon: &SentimentLexicon) -> SentimentScore {
    let tokens = tokenize(text);
    let (mut pol, mut subj, mut hits) = (0.0, 0.0, 0usize);
    for (i, tok) in tokens.iter().enumerate() {
        let Some(&(p, s)) = lexicon.entries.get(tok) else {
            continue;
        };
        let mut p = p;
        if let Some(m) = i.checked_sub(1).and_then(|j| lexicon.intensifiers.get(&tokens[j])) {
            p *= m;
        }
        if tokens[i.saturating_sub(NEGATION_WINDOW)..i].iter().any(|t| lexicon.negators.contains(t)) {
            p = -p;
        }
        pol += p.clamp(-1.0, 1.0);
        subj += s;
        hits += 1;
    }
    if hits == 0 {
        return SentimentScore { polarity: 0.0, subjectivity: 0.0 };
    }
    SentimentScore {
        polarity: (pol / hits as f64).clamp(-1.0, 1.0),
        subjectivity: (subj / hits as f64).clamp(0.0, 1.0),
    }
}

/// Counts alphabetic tokens not in `stopwords`, most frequent first with ties
/// in lexicographic order, truncated to `top_n`.
pub fn word_frequencies<'a, I>(texts: I, stopwords: &HashSet<String>, top_n: usize) -> Vec<(String, u64)>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for text in texts {
        for tok in tokenize(text) {
            let alphabetic = tok.chars().all(|c| c.is_alphabetic() || c == '\'');
            if alphabetic && !stopwords.contains(&tok) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_n);
    ranked
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierSentiment {
    pub tier: PersonaTier,
    pub polarity: f64,
    pub subjectivity: f64,
    pub count: usize,
}

/// Mean sentiment per tier. Tabular personas are scored on their joined
/// field values, descriptive personas on the narrative.
pub fn sentiment_by_tier(
    groups: &BTreeMap<PersonaTier, Vec<Persona>>,
    lexicon: &SentimentLexicon,
) -> Result<Vec<TierSentiment>, TextError> {
    groups
        .iter()
        .map(|(&tier, personas)| {
            if personas.is_empty() {
                return Err(TextError::EmptyGroup(tier));
            }
            let scores: Vec<SentimentScore> =
                personas.iter().map(|p| analyze_sentiment(&p.text_content(), lexicon)).collect();
            Ok(mean_sentiment(tier, &scores))
        })
        .collect()
}

fn mean_sentiment(tier: PersonaTier, scores: &[SentimentScore]) -> TierSentiment {
    let n = scores.len() as f64;
    TierSentiment {
        tier,
        polarity: scores.iter().map(|s| s.polarity).sum::<f64>() / n,
        subjectivity: scores.iter().map(|s| s.subjectivity).sum::<f64>() / n,
        count: scores.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::census::MetaPersona;
    use crate::persona::{fixtures, DescriptivePersona};
    use proptest::prelude::*;

    fn love_only() -> SentimentLexicon {
        SentimentLexicon::new(
            HashMap::from([("love".to_string(), (0.5, 0.6))]),
            word_list("not\nnever"),
            HashMap::from([("very".to_string(), 1.3)]),
        )
        .unwrap()
    }

    #[test]
    fn single_entry_lexicon() {
        let lex = love_only();
        assert_eq!(analyze_sentiment("", &lex), SentimentScore { polarity: 0.0, subjectivity: 0.0 });
        assert_eq!(analyze_sentiment("love", &lex), SentimentScore { polarity: 0.5, subjectivity: 0.6 });
        assert_eq!(analyze_sentiment("not love", &lex).polarity, -0.5);
        assert_eq!(analyze_sentiment("never really love", &lex).polarity, -0.5);
        assert_eq!(analyze_sentiment("not at all love", &lex).polarity, 0.5);
        assert_eq!(analyze_sentiment("I LOVE it", &lex).polarity, 0.5);
        assert!((analyze_sentiment("very love", &lex).polarity - 0.65).abs() < 1e-12);
    }

    #[test]
    fn intensifier_then_clamp() {
        let lex = SentimentLexicon::new(
            HashMap::from([("great".to_string(), (0.9, 0.7))]),
            HashSet::new(),
            HashMap::from([("extremely".to_string(), 2.0)]),
        )
        .unwrap();
        assert_eq!(analyze_sentiment("extremely great", &lex).polarity, 1.0);
    }

    #[test]
    fn lexicon_validation() {
        let bad = HashMap::from([("x".to_string(), (1.5, 0.5))]);
        assert!(matches!(SentimentLexicon::new(bad, HashSet::new(), HashMap::new()), Err(TextError::EntryRange { .. })));
        let ok = HashMap::from([("x".to_string(), (0.5, 0.5))]);
        let zero = HashMap::from([("so".to_string(), 0.0)]);
        assert!(matches!(SentimentLexicon::new(ok, HashSet::new(), zero), Err(TextError::Multiplier { .. })));
        assert!(matches!(
            SentimentLexicon::new(HashMap::new(), HashSet::new(), HashMap::new()),
            Err(TextError::EmptyLexicon)
        ));
    }

    #[test]
    fn builtin_lexicon_shape() {
        let lex = SentimentLexicon::builtin();
        assert!((250..=350).contains(&lex.len()));
        assert!(analyze_sentiment("I love my family and am proud of my community", lex).polarity > 0.0);
        assert!(analyze_sentiment("a terrible, miserable day", lex).polarity < 0.0);
        assert!(builtin_stopwords().contains("the"));
    }

    #[test]
    fn tokenizer_keeps_inner_apostrophes() {
        assert_eq!(tokenize("Don't stop—'quoted' it’s 42!"), ["don't", "stop", "quoted", "it's", "42"]);
    }

    #[test]
    fn frequency_examples() {
        assert_eq!(word_frequencies(["a a b"], &HashSet::new(), 10), vec![("a".into(), 2), ("b".into(), 1)]);
        let stop = word_list("the");
        assert_eq!(
            word_frequencies(["The cat, the dog", "dog 7 cat bird"], &stop, 2),
            vec![("cat".into(), 2), ("dog".into(), 2)]
        );
    }

    #[test]
    fn frequencies_match_recount() {
        let docs: Vec<String> = (0..100)
            .map(|i| format!("family {} love community {} the and garden", ["proud"; 3].join(" "), "x".repeat(i % 4 + 1)))
            .collect();
        let stop = builtin_stopwords();
        let table = word_frequencies(docs.iter().map(String::as_str), stop, usize::MAX);
        // two-pass recount: collect vocabulary, then count each word by scanning every document
        let vocab: std::collections::BTreeSet<String> = docs
            .iter()
            .flat_map(|d| d.split_whitespace().map(str::to_string))
            .filter(|w| !stop.contains(w))
            .collect();
        for w in vocab {
            let n = docs.iter().map(|d| d.split_whitespace().filter(|t| *t == w).count() as u64).sum::<u64>();
            assert_eq!(table.iter().find(|(t, _)| *t == w).map(|e| e.1), Some(n), "{w}");
        }
    }

    #[test]
    fn tier_means() {
        let meta = MetaPersona { age: 40, sex: "Male".into(), race: "White".into(), state: "Ohio".into() };
        let lex = SentimentLexicon::new(
            HashMap::from([("calm".to_string(), (0.2, 0.4)), ("glad".to_string(), (0.6, 0.8))]),
            HashSet::new(),
            HashMap::new(),
        )
        .unwrap();
        let personas = vec![
            Persona::Descriptive(DescriptivePersona::new(meta.clone(), "calm").unwrap()),
            Persona::Descriptive(DescriptivePersona::new(meta, "glad").unwrap()),
        ];
        let groups = BTreeMap::from([(PersonaTier::Descriptive, personas)]);
        let out = sentiment_by_tier(&groups, &lex).unwrap();
        assert!((out[0].polarity - 0.4).abs() < 1e-12);
        assert!((out[0].subjectivity - 0.6).abs() < 1e-12);
        assert_eq!(out[0].count, 2);

        let neutral = BTreeMap::from([(PersonaTier::ObjectiveTabular, vec![Persona::Tabular(fixtures::objective())])]);
        let empty = HashMap::from([("zzz".to_string(), (1.0, 1.0))]);
        let lex = SentimentLexicon::new(empty, HashSet::new(), HashMap::new()).unwrap();
        let out = sentiment_by_tier(&neutral, &lex).unwrap();
        assert_eq!((out[0].polarity, out[0].subjectivity), (0.0, 0.0));

        let none = BTreeMap::from([(PersonaTier::Descriptive, Vec::new())]);
        assert!(matches!(sentiment_by_tier(&none, &lex), Err(TextError::EmptyGroup(_))));
    }

    proptest! {
        #[test]
        fn scores_stay_in_range(text in "\\PC{0,200}") {
            let s = analyze_sentiment(&text, SentimentLexicon::builtin());
            prop_assert!((-1.0..=1.0).contains(&s.polarity));
            prop_assert!((0.0..=1.0).contains(&s.subjectivity));
        }

        #[test]
        fn words_in_range(words in prop::collection::vec(prop::sample::select(vec![
            "not", "very", "love", "hate", "extremely", "terrible", "never", "happy", "sad", "the", "so"]), 0..30)) {
            let s = analyze_sentiment(&words.join(" "), SentimentLexicon::builtin());
            prop_assert!((-1.0..=1.0).contains(&s.polarity));
            prop_assert!((0.0..=1.0).contains(&s.subjectivity));
        }

        #[test]
        fn frequencies_ignore_document_order(docs in prop::collection::vec("[a-c ]{0,12}", 0..8)) {
            let stop = HashSet::new();
            let forward = word_frequencies(docs.iter().map(String::as_str), &stop, usize::MAX);
            let backward = word_frequencies(docs.iter().rev().map(String::as_str), &stop, usize::MAX);
            let total: u64 = forward.iter().map(|e| e.1).sum();
            let tokens: u64 = docs.iter().map(|d| d.split_whitespace().count() as u64).sum();
            prop_assert_eq!(forward, backward);
            prop_assert_eq!(total, tokens);
        }
    }
}
