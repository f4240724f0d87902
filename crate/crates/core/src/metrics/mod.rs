//! Per-anchor background and task scores, conceptual consistency as
//! average precision, and the breakdown and bias analyses built on them.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::decision::{AnchorDecision, Verdict};
use crate::extraction::BackgroundSet;
use crate::kb::{Concept, Fact, Polarity, RelationKind};

/// Concept breakdowns keep this many most frequent concepts.
pub const CONCEPT_BREAKDOWN_TOP: usize = 14;
pub const CONCEPT_BREAKDOWN_MIN_COUNT: usize = 28;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("average precision needs at least one positive label")]
    NoPositiveLabels,
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no anchor has a defined background score")]
    AllExcluded,
    #[error("no verdict for background fact {0}")]
    MissingVerdict(String),
}

/// An exact non-negative fraction in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Ratio {
        assert!(den > 0, "zero denominator");
        let g = gcd(num, den).max(1);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Correct/total counts of one anchor's verdicts, split by fact polarity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub positive_correct: u64,
    pub positive_total: u64,
    pub negative_correct: u64,
    pub negative_total: u64,
}

impl Tally {
    pub fn from_verdicts<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> Tally {
        let mut t = Tally::default();
        for v in verdicts {
            t.add(v.fact.polarity, v.correct);
        }
        t
    }

    pub fn add(&mut self, polarity: Polarity, correct: bool) {
        match polarity {
            Polarity::Positive => {
                self.positive_total += 1;
                self.positive_correct += correct as u64;
            }
            Polarity::Negative => {
                self.negative_total += 1;
                self.negative_correct += correct as u64;
            }
        }
    }

    pub fn positive_acc(&self) -> Option<Ratio> {
        (self.positive_total > 0).then(|| Ratio::new(self.positive_correct, self.positive_total))
    }

    pub fn negative_acc(&self) -> Option<Ratio> {
        (self.negative_total > 0).then(|| Ratio::new(self.negative_correct, self.negative_total))
    }

    /// Mean of the two accuracies, or the defined one alone.
    pub fn balanced(&self) -> Option<Ratio> {
        match (self.positive_acc(), self.negative_acc()) {
            (Some(p), Some(n)) => Some(Ratio::new(p.num * n.den + n.num * p.den, 2 * p.den * n.den)),
            (Some(x), None) | (None, Some(x)) => Some(x),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundScore {
    pub s_b: Option<f64>,
    pub positive_acc: Option<f64>,
    pub negative_acc: Option<f64>,
}

pub fn background_score<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> BackgroundScore {
    let t = Tally::from_verdicts(verdicts);
    BackgroundScore {
        s_b: t.balanced().map(Ratio::value),
        positive_acc: t.positive_acc().map(Ratio::value),
        negative_acc: t.negative_acc().map(Ratio::value),
    }
}

pub fn anchor_score(decision: &AnchorDecision) -> u8 {
    (decision.chosen_index == decision.answer_index) as u8
}

/// Everything the consistency analyses need about one anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub anchor_id: String,
    pub s_b: Option<f64>,
    pub s_a: u8,
    pub positive_acc: Option<f64>,
    pub negative_acc: Option<f64>,
    pub tally: Tally,
    /// Relations of positive and negative background facts.
    pub background_relations: BTreeSet<RelationKind>,
    /// Concepts of positive and negative background facts.
    pub background_concepts: BTreeSet<Concept>,
}

/// Joins an anchor's background, its decision and the run's verdicts. A
/// negative shared by several positives counts once.
pub fn score_record(
    background: &BackgroundSet,
    decision: &AnchorDecision,
    verdicts: &HashMap<Fact, Verdict>,
) -> Result<ScoreRecord, MetricsError> {
    let facts: BTreeSet<&Fact> = background.facts().collect();
    let mut tally = Tally::default();
    let mut relations = BTreeSet::new();
    let mut concepts = BTreeSet::new();
    for fact in facts {
        let v = verdicts
            .get(fact)
            .ok_or_else(|| MetricsError::MissingVerdict(fact.key()))?;
        tally.add(fact.polarity, v.correct);
        relations.insert(fact.relation);
        concepts.insert(fact.c1.clone());
        concepts.insert(fact.c2.clone());
    }
    Ok(ScoreRecord {
        anchor_id: background.anchor_id.clone(),
        s_b: tally.balanced().map(Ratio::value),
        s_a: anchor_score(decision),
        positive_acc: tally.positive_acc().map(Ratio::value),
        negative_acc: tally.negative_acc().map(Ratio::value),
        tally,
        background_relations: relations,
        background_concepts: concepts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall of `score >= t` at every distinct score `t`, from
/// the highest threshold down.
pub fn threshold_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<CurvePoint>, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let total_pos = labels.iter().filter(|&&l| l).count();
    if total_pos == 0 {
        return Err(MetricsError::NoPositiveLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut curve = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            tp += labels[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        curve.push(CurvePoint {
            threshold: t,
            precision: tp as f64 / seen as f64,
            recall: tp as f64 / total_pos as f64,
        });
    }
    Ok(curve)
}

fn ap_of_curve(curve: &[CurvePoint]) -> f64 {
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for p in curve {
        ap += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    ap
}

/// Step-wise average precision: the sum of precision weighted by recall
/// gained at each distinct threshold. Tied scores share one threshold.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    Ok(ap_of_curve(&threshold_curve(scores, labels)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degeneracy {
    /// Every anchor was answered correctly; precision is 1 everywhere.
    AllCorrect,
    /// No anchor was answered correctly; precision is undefined.
    NoneCorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub cc: f64,
    pub n_anchors: usize,
    pub positives: usize,
    /// Anchors without background, left out of the computation.
    pub excluded: usize,
    pub degenerate: Option<Degeneracy>,
    pub threshold_curve: Vec<CurvePoint>,
}

/// Average precision of predicting `s_a` by thresholding `s_b`.
pub fn conceptual_consistency<'a>(
    records: impl IntoIterator<Item = &'a ScoreRecord>,
) -> Result<ConsistencyResult, MetricsError> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut excluded = 0;
    for r in records {
        match r.s_b {
            Some(s) => {
                scores.push(s);
                labels.push(r.s_a == 1);
            }
            None => excluded += 1,
        }
    }
    if scores.is_empty() {
        return Err(MetricsError::AllExcluded);
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let threshold_curve = threshold_curve(&scores, &labels)?;
    let degenerate = (positives == labels.len()).then_some(Degeneracy::AllCorrect);
    if degenerate.is_some() {
        log::debug!("every scored anchor is correct; consistency is trivially 1");
    }
    Ok(ConsistencyResult {
        cc: ap_of_curve(&threshold_curve),
        n_anchors: scores.len(),
        positives,
        excluded,
        degenerate,
        threshold_curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BreakdownMode {
    Relation,
    Concept,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub key: String,
    pub subset_size: usize,
    pub cc_subset: Option<f64>,
    pub mean_s_b_subset: Option<f64>,
    pub degenerate: Option<Degeneracy>,
}

fn breakdown_row(key: String, subset: Vec<&ScoreRecord>) -> BreakdownRow {
    let defined: Vec<f64> = subset.iter().filter_map(|r| r.s_b).collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let (cc, degenerate) = match conceptual_consistency(subset.iter().copied()) {
        Ok(res) => (Some(res.cc), res.degenerate),
        Err(MetricsError::NoPositiveLabels) => (None, Some(Degeneracy::NoneCorrect)),
        Err(_) => (None, None),
    };
    BreakdownRow {
        key,
        subset_size: subset.len(),
        cc_subset: cc,
        mean_s_b_subset: mean,
        degenerate,
    }
}

/// One row per key whose subset has at least `min_count` anchors. Concept
/// mode keeps the `top` most frequent such concepts (count descending, then
/// label); relation mode lists relations in their canonical order.
pub fn breakdown(
    records: &[ScoreRecord],
    mode: BreakdownMode,
    min_count: usize,
    top: Option<usize>,
) -> Vec<BreakdownRow> {
    match mode {
        BreakdownMode::Relation => {
            let mut rows: Vec<BreakdownRow> = RelationKind::ALL
                .iter()
                .map(|&rel| {
                    let subset = records
                        .iter()
                        .filter(|r| r.background_relations.contains(&rel))
                        .collect();
                    breakdown_row(rel.name().to_owned(), subset)
                })
                .filter(|row| row.subset_size >= min_count.max(1))
                .collect();
            if let Some(top) = top {
                rows.sort_by_key(|r| std::cmp::Reverse(r.subset_size));
                rows.truncate(top);
            }
            rows
        }
        BreakdownMode::Concept => {
            let mut counts: BTreeMap<&Concept, usize> = BTreeMap::new();
            for r in records {
                for c in &r.background_concepts {
                    *counts.entry(c).or_default() += 1;
                }
            }
            let mut keys: Vec<(&Concept, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_count.max(1)).collect();
            keys.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            keys.truncate(top.unwrap_or(usize::MAX));
            keys.into_iter()
                .map(|(concept, _)| {
                    let subset = records
                        .iter()
                        .filter(|r| r.background_concepts.contains(concept))
                        .collect();
                    breakdown_row(concept.label().to_owned(), subset)
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationScore {
    pub relation: RelationKind,
    pub tally: Tally,
    pub balanced_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMean {
    pub mean: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    pub per_relation: Vec<RelationScore>,
    /// Relations without any verdict, left out of the mean.
    pub missing: Vec<RelationKind>,
}

/// Balanced accuracy per relation over all of its facts, then the
/// unweighted mean over relations with a normal-approximation interval
/// (zero width with fewer than two relations).
pub fn relation_mean_background<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> RelationMean {
    let mut tallies = [Tally::default(); 14];
    for v in verdicts {
        tallies[v.fact.relation.index()].add(v.fact.polarity, v.correct);
    }
    let per_relation: Vec<RelationScore> = RelationKind::ALL
        .iter()
        .map(|&relation| {
            let tally = tallies[relation.index()];
            RelationScore {
                relation,
                tally,
                balanced_acc: tally.balanced().map(Ratio::value),
            }
        })
        .collect();
    let values: Vec<f64> = per_relation.iter().filter_map(|r| r.balanced_acc).collect();
    let missing = per_relation
        .iter()
        .filter(|r| r.balanced_acc.is_none())
        .map(|r| r.relation)
        .collect();
    let n = values.len() as f64;
    let (mean, ci95) = if values.is_empty() {
        (None, None)
    } else {
        let mean = values.iter().sum::<f64>() / n;
        let half = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * var.sqrt() / n.sqrt()
        };
        (Some(mean), Some((mean - half, mean + half)))
    };
    RelationMean {
        mean,
        ci95,
        per_relation,
        missing,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub scope: String,
    pub positive_acc_mean: Option<f64>,
    pub negative_acc_mean: Option<f64>,
    pub n_positive: u64,
    pub n_negative: u64,
}

/// Accuracy on all positive and on all negative facts of a run.
pub fn bias_report<'a>(scope: &str, verdicts: impl IntoIterator<Item = &'a Verdict>) -> BiasRow {
    let t = Tally::from_verdicts(verdicts);
    BiasRow {
        scope: scope.to_owned(),
        positive_acc_mean: t.positive_acc().map(Ratio::value),
        negative_acc_mean: t.negative_acc().map(Ratio::value),
        n_positive: t.positive_total,
        n_negative: t.negative_total,
    }
}
