//! Distributional alignment between simulated and reference answer
//! distributions, cross-simulation matrices and topic variance rankings.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persona::PersonaTier;
use crate::simulation::{ChoiceDistribution, SurveyQuestion, NATIONAL_COHORT};

const SUM_TOLERANCE: f64 = 1e-9;

/// Generator label used for the generator axis when only sampled personas
/// are present.
pub const SAMPLED_GENERATOR: &str = "sampled";

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("a distribution needs at least 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("probability {0} is negative or not finite")]
    InvalidProbability(f64),
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("category counts differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no simulation results for generator {generator}, simulator {simulator}, tier {tier}")]
    MissingCell { generator: String, simulator: String, tier: PersonaTier },
    #[error("no ground-truth questions for generator {generator}, simulator {simulator}, tier {tier}")]
    NoGroundTruth { generator: String, simulator: String, tier: PersonaTier },
    #[error("topic {0} has no questions")]
    EmptyTopic(String),
    #[error("question {question_id} has no score for tier {tier}")]
    MissingTierScore { question_id: String, tier: PersonaTier },
    #[error("question {question_id} has topic {topic}, which is not in the topic list")]
    UnknownTopic { question_id: String, topic: String },
    #[error("election truth line {line}: {message}")]
    ElectionTruth { line: usize, message: String },
}

/// Probability vector over K ≥ 2 ordered categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, MetricError> {
        if probabilities.len() < 2 {
            return Err(MetricError::TooFewCategories(probabilities.len()));
        }
        if let Some(&bad) = probabilities.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(MetricError::InvalidProbability(bad));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(MetricError::NotNormalized(sum));
        }
        Ok(Self(probabilities))
    }

    /// Normalizes nonnegative counts or weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self, MetricError> {
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(MetricError::NotNormalized(total));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = MetricError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.0
    }
}

fn check_lengths(p: &Distribution, q: &Distribution) -> Result<(), MetricError> {
    if p.len() != q.len() {
        return Err(MetricError::LengthMismatch(p.len(), q.len()));
    }
    Ok(())
}

/// Wasserstein-1 distance on the ordinal index scale, normalized by K−1 so
/// the result lies in [0, 1].
pub fn wasserstein_1d(p: &Distribution, q: &Distribution) -> Result<f64, MetricError> {
    check_lengths(p, q)?;
    let k = p.len();
    let (mut cp, mut cq, mut total) = (0.0, 0.0, 0.0);
    for i in 0..k - 1 {
        cp += p.0[i];
        cq += q.0[i];
        total += (cp - cq).abs();
    }
    Ok((total / (k - 1) as f64).clamp(0.0, 1.0))
}

/// Half the L1 distance; used for unordered categories.
pub fn total_variation(p: &Distribution, q: &Distribution) -> Result<f64, MetricError> {
    check_lengths(p, q)?;
    let l1: f64 = p.0.iter().zip(&q.0).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * l1).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    Wasserstein,
    TotalVariation,
}

impl DistanceKind {
    /// Wasserstein for ordinal scales, total variation otherwise.
    pub fn for_question(ordinal: bool) -> Self {
        if ordinal {
            Self::Wasserstein
        } else {
            Self::TotalVariation
        }
    }

    pub fn distance(self, p: &Distribution, q: &Distribution) -> Result<f64, MetricError> {
        match self {
            Self::Wasserstein => wasserstein_1d(p, q),
            Self::TotalVariation => total_variation(p, q),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Wasserstein => "wasserstein",
            Self::TotalVariation => "total_variation",
        }
    }
}

/// `1 − W(p̂, p)`.
pub fn alignment_score(simulated: &Distribution, reference: &Distribution) -> Result<f64, MetricError> {
    Ok(1.0 - wasserstein_1d(simulated, reference)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentScore {
    pub value: f64,
    pub metric: DistanceKind,
    pub question_id: String,
    pub cohort: String,
    pub tier: PersonaTier,
    /// `None` for sampled meta personas.
    pub generator: Option<String>,
    pub simulator: String,
}

/// Reference distributions keyed by (question id, cohort).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    cells: BTreeMap<(String, String), Distribution>,
    metrics: HashMap<String, DistanceKind>,
    election: BTreeSet<String>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    /// Question-level truths, attached to the national cohort.
    pub fn from_questions(questions: &[SurveyQuestion]) -> Result<Self, MetricError> {
        let mut gt = Self::new();
        for q in questions {
            gt.set_metric(&q.id, DistanceKind::for_question(q.ordinal));
            if let Some(p) = &q.ground_truth {
                gt.insert(&q.id, NATIONAL_COHORT, Distribution::new(p.clone())?);
            }
        }
        Ok(gt)
    }

    pub fn insert(&mut self, question_id: &str, cohort: &str, dist: Distribution) {
        self.cells.insert((question_id.to_string(), cohort.to_string()), dist);
    }

    pub fn set_metric(&mut self, question_id: &str, metric: DistanceKind) {
        self.metrics.insert(question_id.to_string(), metric);
    }

    /// Defaults to Wasserstein for questions without a recorded metric.
    pub fn metric(&self, question_id: &str) -> DistanceKind {
        self.metrics.get(question_id).copied().unwrap_or(DistanceKind::Wasserstein)
    }

    pub fn get(&self, question_id: &str, cohort: &str) -> Option<&Distribution> {
        self.cells.get(&(question_id.to_string(), cohort.to_string()))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_election(&self, question_id: &str) -> bool {
        self.election.contains(question_id)
    }

    /// Adds per-state two-party truths from `question_id,state,dem_share,rep_share`
    /// CSV rows. Shares are renormalized to the two-party total.
    pub fn add_election_csv<R: Read>(&mut self, reader: R) -> Result<(), MetricError> {
        #[derive(Deserialize)]
        struct Row {
            question_id: String,
            state: String,
            dem_share: f64,
            rep_share: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| MetricError::ElectionTruth { line, message: e.to_string() })?;
            let dist = Distribution::from_weights(&[row.dem_share, row.rep_share])
                .map_err(|e| MetricError::ElectionTruth { line, message: e.to_string() })?;
            self.insert(&row.question_id, &row.state, dist);
            self.set_metric(&row.question_id, DistanceKind::Wasserstein);
            self.election.insert(row.question_id);
        }
        Ok(())
    }
}

/// Scores every aggregate that has a matching reference cell.
pub fn score_aggregates(
    aggregates: &[ChoiceDistribution],
    truth: &GroundTruth,
    tier: PersonaTier,
    generator: Option<&str>,
    simulator: &str,
) -> Result<Vec<AlignmentScore>, MetricError> {
    let mut out = Vec::new();
    for agg in aggregates {
        let Some(reference) = truth.get(&agg.question_id, &agg.cohort) else {
            continue;
        };
        let simulated = Distribution::new(agg.probabilities.clone())?;
        let metric = truth.metric(&agg.question_id);
        out.push(AlignmentScore {
            value: 1.0 - metric.distance(&simulated, reference)?,
            metric,
            question_id: agg.question_id.clone(),
            cohort: agg.cohort.clone(),
            tier,
            generator: generator.map(str::to_string),
            simulator: simulator.to_string(),
        });
    }
    Ok(out)
}

/// Aggregated answers from one (generator, tier, simulator) run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSet {
    /// `None` for sampled meta personas.
    pub generator: Option<String>,
    pub tier: PersonaTier,
    pub simulator: String,
    pub aggregates: Vec<ChoiceDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSimCell {
    pub generator: String,
    pub simulator: String,
    pub tier: PersonaTier,
    pub mean_alignment: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSimMatrix {
    pub generators: Vec<String>,
    pub simulators: Vec<String>,
    pub tiers: Vec<PersonaTier>,
    /// Generator-major, then simulator, then tier.
    pub cells: Vec<CrossSimCell>,
    /// How scores within a cell are combined.
    pub aggregation: String,
}

impl CrossSimMatrix {
    pub fn cell(&self, generator: &str, simulator: &str, tier: PersonaTier) -> Option<&CrossSimCell> {
        self.cells
            .iter()
            .find(|c| c.generator == generator && c.simulator == simulator && c.tier == tier)
    }
}

/// Mean alignment per (generator, simulator, tier). Scores are averaged
/// without weights over every (question, cohort) pair with a reference. Meta
/// cells are computed once per simulator and repeated along the generator axis.
pub fn cross_simulation(sets: &[SimulationSet], truth: &GroundTruth) -> Result<CrossSimMatrix, MetricError> {
    let mut generators: Vec<String> = sets
        .iter()
        .filter(|s| s.tier != PersonaTier::Meta)
        .filter_map(|s| s.generator.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if generators.is_empty() {
        generators.push(SAMPLED_GENERATOR.to_string());
    }
    let simulators: Vec<String> = sets.iter().map(|s| s.simulator.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let tiers: Vec<PersonaTier> = sets.iter().map(|s| s.tier).collect::<BTreeSet<_>>().into_iter().collect();

    let mut meta_cache: HashMap<&str, (f64, usize)> = HashMap::new();
    let mut cells = Vec::new();
    for g in &generators {
        for sim in &simulators {
            for &tier in &tiers {
                let missing = || MetricError::MissingCell { generator: g.clone(), simulator: sim.clone(), tier };
                let (mean, count) = if tier == PersonaTier::Meta {
                    if let Some(&cached) = meta_cache.get(sim.as_str()) {
                        cached
                    } else {
                        let set = sets
                            .iter()
                            .find(|s| s.tier == tier && &s.simulator == sim)
                            .ok_or_else(missing)?;
                        let v = cell_mean(set, truth, g)?;
                        meta_cache.insert(sim.as_str(), v);
                        v
                    }
                } else {
                    let set = sets
                        .iter()
                        .find(|s| s.tier == tier && &s.simulator == sim && s.generator.as_deref() == Some(g.as_str()))
                        .ok_or_else(missing)?;
                    cell_mean(set, truth, g)?
                };
                cells.push(CrossSimCell {
                    generator: g.clone(),
                    simulator: sim.clone(),
                    tier,
                    mean_alignment: mean,
                    count,
                });
            }
        }
    }
    Ok(CrossSimMatrix {
        generators,
        simulators,
        tiers,
        cells,
        aggregation: "unweighted mean over (question, cohort) pairs".to_string(),
    })
}

fn cell_mean(set: &SimulationSet, truth: &GroundTruth, generator_label: &str) -> Result<(f64, usize), MetricError> {
    let scores = score_aggregates(&set.aggregates, truth, set.tier, set.generator.as_deref(), &set.simulator)?;
    if scores.is_empty() {
        return Err(MetricError::NoGroundTruth {
            generator: generator_label.to_string(),
            simulator: set.simulator.clone(),
            tier: set.tier,
        });
    }
    let sum: f64 = scores.iter().map(|s| s.value).sum();
    Ok((sum / scores.len() as f64, scores.len()))
}

/// Alignment of one question under each of the four tiers.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionTierScores {
    pub question_id: String,
    pub topic: String,
    pub scores: BTreeMap<PersonaTier, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicVariance {
    pub topic: String,
    /// Mean alignment per tier, in tier order.
    pub tier_means: [f64; 4],
    /// Population variance of `tier_means`.
    pub variance: f64,
    pub questions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicVarianceRanking {
    /// Least to most variance.
    pub topics: Vec<TopicVariance>,
}

/// Ranks `topics` by the variance of their per-tier mean alignment, ascending.
/// Ties keep the order of `topics`.
pub fn topic_variance_ranking(
    questions: &[QuestionTierScores],
    topics: &[String],
) -> Result<TopicVarianceRanking, MetricError> {
    let mut sums: Vec<([f64; 4], usize)> = vec![([0.0; 4], 0); topics.len()];
    let position: HashMap<&str, usize> = topics.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    for q in questions {
        let &slot = position.get(q.topic.as_str()).ok_or_else(|| MetricError::UnknownTopic {
            question_id: q.question_id.clone(),
            topic: q.topic.clone(),
        })?;
        for tier in PersonaTier::ALL {
            let score = q.scores.get(&tier).ok_or_else(|| MetricError::MissingTierScore {
                question_id: q.question_id.clone(),
                tier,
            })?;
            sums[slot].0[tier.index()] += score;
        }
        sums[slot].1 += 1;
    }
    let mut ranked = Vec::with_capacity(topics.len());
    for (topic, (sum, n)) in topics.iter().zip(sums) {
        if n == 0 {
            return Err(MetricError::EmptyTopic(topic.clone()));
        }
        let tier_means = sum.map(|s| s / n as f64);
        let mean = tier_means.iter().sum::<f64>() / 4.0;
        let variance = tier_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 4.0;
        ranked.push(TopicVariance { topic: topic.clone(), tier_means, variance, questions: n });
    }
    ranked.sort_by(|a, b| a.variance.total_cmp(&b.variance));
    Ok(TopicVarianceRanking { topics: ranked })
}

/// Averages scores per (question, tier) over cohorts, generators and
/// simulators, keeping only questions scored under all four tiers.
pub fn question_tier_scores(scores: &[AlignmentScore], questions: &[SurveyQuestion]) -> Vec<QuestionTierScores> {
    let mut acc: HashMap<(&str, PersonaTier), (f64, usize)> = HashMap::new();
    for s in scores {
        let e = acc.entry((s.question_id.as_str(), s.tier)).or_insert((0.0, 0));
        e.0 += s.value;
        e.1 += 1;
    }
    questions
        .iter()
        .filter_map(|q| {
            let scores: BTreeMap<PersonaTier, f64> = PersonaTier::ALL
                .iter()
                .filter_map(|&t| acc.get(&(q.id.as_str(), t)).map(|(sum, n)| (t, sum / *n as f64)))
                .collect();
            (scores.len() == PersonaTier::ALL.len()).then(|| QuestionTierScores {
                question_id: q.id.clone(),
                topic: q.topic.clone(),
                scores,
            })
        })
        .collect()
}

/// Per-state two-party share for an election question. Choice 0 is the
/// Democratic option and choice 1 the Republican option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionRow {
    pub generator: String,
    pub tier: PersonaTier,
    pub simulator: String,
    pub question_id: String,
    pub state: String,
    pub dem_share: f64,
    pub rep_share: f64,
    pub alignment: f64,
}

pub fn election_rows(set: &SimulationSet, truth: &GroundTruth) -> Result<Vec<ElectionRow>, MetricError> {
    let mut rows = Vec::new();
    for agg in set.aggregates.iter().filter(|a| truth.is_election(&a.question_id)) {
        let Some(reference) = truth.get(&agg.question_id, &agg.cohort) else {
            continue;
        };
        let two_party = agg.counts.first().copied().unwrap_or(0) + agg.counts.get(1).copied().unwrap_or(0);
        if two_party == 0 {
            continue;
        }
        let dem = agg.counts[0] as f64 / two_party as f64;
        let simulated = Distribution::new(vec![dem, 1.0 - dem])?;
        rows.push(ElectionRow {
            generator: set.generator.clone().unwrap_or_else(|| SAMPLED_GENERATOR.to_string()),
            tier: set.tier,
            simulator: set.simulator.clone(),
            question_id: agg.question_id.clone(),
            state: agg.cohort.clone(),
            dem_share: dem,
            rep_share: 1.0 - dem,
            alignment: alignment_score(&simulated, reference)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    /// Direct CDF partial-sum recomputation.
    fn oracle(p: &[f64], q: &[f64]) -> f64 {
        let k = p.len();
        (1..k)
            .map(|j| (p[..j].iter().sum::<f64>() - q[..j].iter().sum::<f64>()).abs())
            .sum::<f64>()
            / (k - 1) as f64
    }

    fn agg(q: &str, cohort: &str, probs: &[f64]) -> ChoiceDistribution {
        let counts: Vec<u64> = probs.iter().map(|p| (p * 100.0).round() as u64).collect();
        ChoiceDistribution {
            question_id: q.into(),
            cohort: cohort.into(),
            probabilities: probs.to_vec(),
            support: counts.iter().sum(),
            counts,
        }
    }

    #[test]
    fn distribution_validation() {
        assert_eq!(Distribution::new(vec![1.0]), Err(MetricError::TooFewCategories(1)));
        assert!(matches!(Distribution::new(vec![0.5, 0.4]), Err(MetricError::NotNormalized(_))));
        assert!(matches!(Distribution::new(vec![1.5, -0.5]), Err(MetricError::InvalidProbability(_))));
        assert_eq!(Distribution::from_weights(&[1.0, 3.0]).unwrap(), d(&[0.25, 0.75]));
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein_1d(&d(&[0.5, 0.5]), &d(&[0.5, 0.5])).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), 1.0);
        let (p, q) = ([0.2, 0.3, 0.5], [0.5, 0.3, 0.2]);
        assert!((wasserstein_1d(&d(&p), &d(&q)).unwrap() - oracle(&p, &q)).abs() < 1e-12);
        assert_eq!(wasserstein_1d(&d(&[0.5, 0.5]), &d(&[0.2, 0.3, 0.5])), Err(MetricError::LengthMismatch(2, 3)));
    }

    #[test]
    fn alignment_examples() {
        assert_eq!(alignment_score(&d(&[0.3, 0.7]), &d(&[0.3, 0.7])).unwrap(), 1.0);
        assert_eq!(alignment_score(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), 0.0);
        assert!((alignment_score(&d(&[0.6, 0.4]), &d(&[0.5, 0.5])).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn total_variation_ignores_order() {
        let p = d(&[1.0, 0.0, 0.0]);
        assert_eq!(total_variation(&p, &d(&[0.0, 1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(total_variation(&p, &d(&[0.0, 0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&p, &d(&[0.0, 1.0, 0.0])).unwrap(), 0.5);
    }

    #[test]
    fn non_ordinal_questions_use_total_variation() {
        let q = SurveyQuestion {
            id: "movie".into(),
            topic: "t".into(),
            text: "Which?".into(),
            choices: vec!["a".into(), "b".into(), "c".into()],
            ordinal: false,
            ground_truth: Some(vec![0.0, 0.0, 1.0]),
        };
        let gt = GroundTruth::from_questions(&[q]).unwrap();
        let scores =
            score_aggregates(&[agg("movie", "ALL", &[0.0, 1.0, 0.0])], &gt, PersonaTier::Meta, None, "s").unwrap();
        assert_eq!(scores[0].metric, DistanceKind::TotalVariation);
        assert_eq!(scores[0].value, 0.0);
    }

    #[test]
    fn single_cell_matrix() {
        let mut gt = GroundTruth::new();
        gt.insert("q", "ALL", d(&[0.3, 0.7]));
        let set = SimulationSet {
            generator: Some("g".into()),
            tier: PersonaTier::Descriptive,
            simulator: "s".into(),
            aggregates: vec![agg("q", "ALL", &[0.3, 0.7])],
        };
        let m = cross_simulation(&[set], &gt).unwrap();
        assert_eq!(m.cells.len(), 1);
        assert_eq!(m.cells[0].mean_alignment, 1.0);
    }

    #[test]
    fn meta_replicated_across_generators() {
        let mut gt = GroundTruth::new();
        gt.insert("q", "Ohio", d(&[0.5, 0.5]));
        let mut sets = vec![SimulationSet {
            generator: None,
            tier: PersonaTier::Meta,
            simulator: "s".into(),
            aggregates: vec![agg("q", "Ohio", &[0.8, 0.2])],
        }];
        for (g, p) in [("g1", 0.5), ("g2", 0.6), ("g3", 0.9)] {
            sets.push(SimulationSet {
                generator: Some(g.into()),
                tier: PersonaTier::ObjectiveTabular,
                simulator: "s".into(),
                aggregates: vec![agg("q", "Ohio", &[p, 1.0 - p])],
            });
        }
        let m = cross_simulation(&sets, &gt).unwrap();
        let metas: Vec<f64> = m.generators.iter().map(|g| m.cell(g, "s", PersonaTier::Meta).unwrap().mean_alignment).collect();
        assert_eq!(metas.len(), 3);
        assert!(metas.iter().all(|&v| v == metas[0]));
        assert!((metas[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn cell_without_truth_is_an_error() {
        let set = SimulationSet {
            generator: Some("g".into()),
            tier: PersonaTier::Descriptive,
            simulator: "s".into(),
            aggregates: vec![agg("q", "ALL", &[0.3, 0.7])],
        };
        assert!(matches!(cross_simulation(&[set], &GroundTruth::new()), Err(MetricError::NoGroundTruth { .. })));
    }

    fn tier_scores(q: &str, topic: &str, s: [f64; 4]) -> QuestionTierScores {
        QuestionTierScores {
            question_id: q.into(),
            topic: topic.into(),
            scores: PersonaTier::ALL.into_iter().zip(s).collect(),
        }
    }

    #[test]
    fn topic_variance_examples() {
        let topics = vec!["flat".to_string(), "skewed".to_string(), "also_flat".to_string()];
        let qs = vec![
            tier_scores("a", "flat", [0.5; 4]),
            tier_scores("b", "skewed", [1.0, 1.0, 1.0, 0.0]),
            tier_scores("c", "also_flat", [0.7; 4]),
        ];
        let r = topic_variance_ranking(&qs, &topics).unwrap();
        let order: Vec<&str> = r.topics.iter().map(|t| t.topic.as_str()).collect();
        assert_eq!(order, ["flat", "also_flat", "skewed"]);
        assert_eq!(r.topics[2].variance, 0.1875);
        assert_eq!(r.topics[0].variance, 0.0);
    }

    #[test]
    fn topic_ranking_errors() {
        let qs = vec![tier_scores("a", "x", [0.5; 4])];
        assert_eq!(
            topic_variance_ranking(&qs, &["x".into(), "y".into()]),
            Err(MetricError::EmptyTopic("y".into()))
        );
        let mut partial = tier_scores("a", "x", [0.5; 4]);
        partial.scores.remove(&PersonaTier::Descriptive);
        assert!(matches!(topic_variance_ranking(&[partial], &["x".into()]), Err(MetricError::MissingTierScore { .. })));
    }

    #[test]
    fn election_truth_and_rows() {
        let mut gt = GroundTruth::new();
        gt.add_election_csv("question_id,state,dem_share,rep_share\npres,Ohio,0.45,0.53\npres,Utah,0.4,0.6\n".as_bytes())
            .unwrap();
        assert!(gt.is_election("pres"));
        let ohio = gt.get("pres", "Ohio").unwrap().probabilities()[0];
        assert!((ohio - 0.45 / 0.98).abs() < 1e-12);
        let set = SimulationSet {
            generator: Some("g".into()),
            tier: PersonaTier::Descriptive,
            simulator: "s".into(),
            aggregates: vec![agg("pres", "Utah", &[0.4, 0.6])],
        };
        let rows = election_rows(&set, &gt).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].alignment - 1.0).abs() < 1e-12);
        assert!(gt.add_election_csv("question_id,state,dem_share,rep_share\np,Ohio,x,1\n".as_bytes()).is_err());
    }

    fn dist_strategy(k: usize) -> impl Strategy<Value = Distribution> {
        prop::collection::vec(0.0f64..1.0, k).prop_filter_map("nonzero mass", |w| Distribution::from_weights(&w).ok())
    }

    fn triple() -> impl Strategy<Value = (Distribution, Distribution, Distribution)> {
        (2usize..=10).prop_flat_map(|k| (dist_strategy(k), dist_strategy(k), dist_strategy(k)))
    }

    proptest! {
        #[test]
        fn metric_axioms((p, q, r) in triple()) {
            let pq = wasserstein_1d(&p, &q).unwrap();
            prop_assert!(pq >= 0.0);
            prop_assert_eq!(pq, wasserstein_1d(&q, &p).unwrap());
            prop_assert_eq!(wasserstein_1d(&p, &p).unwrap(), 0.0);
            let pr = wasserstein_1d(&p, &r).unwrap();
            let rq = wasserstein_1d(&r, &q).unwrap();
            prop_assert!(pq <= pr + rq + 1e-12);
            let a = alignment_score(&p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((pq - oracle(p.probabilities(), q.probabilities())).abs() < 1e-12);
        }

        #[test]
        fn binary_reduction(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (p, q) = (d(&[a, 1.0 - a]), d(&[b, 1.0 - b]));
            prop_assert_eq!(wasserstein_1d(&p, &q).unwrap(), (a - b).abs());
        }

        #[test]
        fn shifting_mass_one_step(k in 3usize..=10, from in 0usize..9, mass in 0.0f64..=1.0) {
            let from = from % (k - 1);
            let mut base = vec![0.0; k];
            base[from] = 1.0;
            let mut shifted = base.clone();
            shifted[from] -= mass;
            shifted[from + 1] += mass;
            let w = wasserstein_1d(&d(&base), &d(&shifted)).unwrap();
            prop_assert!((w - mass / (k - 1) as f64).abs() < 1e-12);
        }
    }
}
