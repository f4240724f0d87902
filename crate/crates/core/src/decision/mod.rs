//! Scoring backends and the rules that turn variant scores into answers.
//!
//! A backend receives one [`ScoreBatch`] per fact or anchor holding every
//! prompt variant, and returns one log-likelihood per continuation. Fact
//! verdicts and anchor choices are then pure functions of those scores.

mod mock;
mod remote;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::extraction::AnchorExample;
use crate::kb::{Fact, Polarity};
use crate::prompt::{Candidate, PromptSet, PromptVariant};

pub use mock::{AnchorPolicy, MockOracle, MockOracleConfig};
pub use remote::{RemoteConfig, RemoteScorer, ScoreRequestWire, ScoreResponseWire, WireItem, WireResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Summed log-probability of the continuation's tokens.
    Sum,
    /// Sum divided by the continuation's token count.
    #[default]
    Mean,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Sum => "sum",
            Normalization::Mean => "mean",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionRule {
    /// The single best variant over all meta-prompts and answer pairs.
    #[default]
    GlobalArgmax,
    /// Best polarity within each meta-prompt, then a majority across them.
    /// Ties go to negative.
    PerMetaPromptVote,
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("invalid score query: {0}")]
    InvalidQuery(String),
    #[error("scorer unreachable after {attempts} attempts ({message}); first prompt: {prompt:?}")]
    Unreachable {
        attempts: u32,
        message: String,
        prompt: String,
    },
    #[error("scorer returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("scorer protocol violation: {0}")]
    Protocol(String),
    #[error("mock scorer: {0}")]
    Mock(String),
}

/// One prompt and the continuations to score after it. `candidates` is
/// run-side metadata aligned with `continuations`; it never leaves the
/// process.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreQuery {
    pub prompt: String,
    pub continuations: Vec<String>,
    pub candidates: Vec<Candidate>,
}

impl ScoreQuery {
    pub fn new(
        prompt: impl Into<String>,
        continuations: Vec<String>,
        candidates: Vec<Candidate>,
    ) -> Result<ScoreQuery, ScoreError> {
        if continuations.is_empty() {
            return Err(ScoreError::InvalidQuery("no continuations".into()));
        }
        if continuations.iter().any(|c| c.is_empty()) {
            return Err(ScoreError::InvalidQuery("empty continuation".into()));
        }
        if candidates.len() != continuations.len() {
            return Err(ScoreError::InvalidQuery(
                "candidate metadata does not match continuations".into(),
            ));
        }
        Ok(ScoreQuery {
            prompt: prompt.into(),
            continuations,
            candidates,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreResult {
    pub log_likelihoods: Vec<f64>,
}

/// What a batch is about, for backends that need to know.
#[derive(Debug, Clone, PartialEq)]
pub enum Subject {
    Fact(Fact),
    Anchor {
        id: String,
        answer_index: usize,
        /// Positive background facts of the anchor.
        background: Vec<Fact>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBatch {
    pub subject: Subject,
    pub normalization: Normalization,
    pub queries: Vec<ScoreQuery>,
}

impl ScoreBatch {
    /// Groups consecutive variants sharing a prompt text into one query, so
    /// flattening the results restores variant order.
    pub fn from_variants(
        subject: Subject,
        normalization: Normalization,
        variants: &[PromptVariant],
    ) -> Result<ScoreBatch, ScoreError> {
        let mut queries = Vec::new();
        let mut start = 0;
        while start < variants.len() {
            let prompt = &variants[start].prompt_text;
            let end = start
                + variants[start..]
                    .iter()
                    .take_while(|v| &v.prompt_text == prompt)
                    .count();
            let group = &variants[start..end];
            queries.push(ScoreQuery::new(
                prompt.clone(),
                group.iter().map(|v| v.candidate_word.clone()).collect(),
                group.iter().map(|v| v.candidate).collect(),
            )?);
            start = end;
        }
        Ok(ScoreBatch {
            subject,
            normalization,
            queries,
        })
    }

    pub fn continuation_count(&self) -> usize {
        self.queries.iter().map(|q| q.continuations.len()).sum()
    }
}

pub trait Scorer: Send + Sync {
    /// One result per query, each with one finite value per continuation.
    fn score(&self, batch: &ScoreBatch) -> Result<Vec<ScoreResult>, ScoreError>;

    /// Upper bound on concurrent `score` calls.
    fn max_in_flight(&self) -> usize {
        1
    }

    fn describe(&self) -> String;
}

/// Scores `batch` and flattens the results, checking arity and finiteness.
pub fn score_flat(scorer: &dyn Scorer, batch: &ScoreBatch) -> Result<Vec<f64>, ScoreError> {
    let results = scorer.score(batch)?;
    if results.len() != batch.queries.len() {
        return Err(ScoreError::Protocol(format!(
            "{} results for {} queries",
            results.len(),
            batch.queries.len()
        )));
    }
    let mut flat = Vec::with_capacity(batch.continuation_count());
    for (query, result) in batch.queries.iter().zip(results) {
        if result.log_likelihoods.len() != query.continuations.len() {
            return Err(ScoreError::Protocol(format!(
                "{} values for {} continuations",
                result.log_likelihoods.len(),
                query.continuations.len()
            )));
        }
        if let Some(bad) = result.log_likelihoods.iter().find(|x| !x.is_finite()) {
            return Err(ScoreError::Protocol(format!("non-finite score {bad}")));
        }
        flat.extend(result.log_likelihoods);
    }
    Ok(flat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinningVariant {
    pub meta_prompt_id: u8,
    pub answer_pair: usize,
    pub word: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub fact: Fact,
    pub decided: Polarity,
    pub winning_variant: WinningVariant,
    pub winning_score: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorDecision {
    pub anchor_id: String,
    pub chosen_index: usize,
    pub answer_index: usize,
    /// Per-choice maximum over meta-prompts.
    pub aggregate: Vec<f64>,
    pub correct: bool,
}

/// First index holding the maximum; `None` on an empty slice.
fn first_argmax(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn answer_of(variant: &PromptVariant) -> (usize, Polarity) {
    match variant.candidate {
        Candidate::Answer { pair, polarity } => (pair, polarity),
        Candidate::Choice(_) => panic!("fact variant carries a choice candidate"),
    }
}

/// Applies `rule` to per-variant scores. `variants` and `scores` must be
/// aligned and non-empty.
pub fn decide_from_scores(fact: &Fact, variants: &[PromptVariant], scores: &[f64], rule: DecisionRule) -> Verdict {
    assert_eq!(variants.len(), scores.len(), "variants and scores must align");
    let winner = match rule {
        DecisionRule::GlobalArgmax => first_argmax(scores.iter().copied()).expect("no variants"),
        DecisionRule::PerMetaPromptVote => {
            let mut metas: Vec<u8> = variants.iter().map(|v| v.meta_prompt_id).collect();
            metas.dedup();
            metas.sort_unstable();
            metas.dedup();
            let mut yes = 0usize;
            let mut no = 0usize;
            for meta in metas {
                let local = first_argmax(variants.iter().zip(scores).map(|(v, &s)| {
                    if v.meta_prompt_id == meta {
                        s
                    } else {
                        f64::NEG_INFINITY
                    }
                }))
                .expect("no variants");
                match answer_of(&variants[local]).1 {
                    Polarity::Positive => yes += 1,
                    Polarity::Negative => no += 1,
                }
            }
            let decided = if yes > no {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            first_argmax(variants.iter().zip(scores).map(|(v, &s)| {
                if answer_of(v).1 == decided {
                    s
                } else {
                    f64::NEG_INFINITY
                }
            }))
            .expect("no variants")
        }
    };
    let variant = &variants[winner];
    let (answer_pair, decided) = answer_of(variant);
    Verdict {
        fact: fact.clone(),
        decided,
        winning_variant: WinningVariant {
            meta_prompt_id: variant.meta_prompt_id,
            answer_pair,
            word: variant.candidate_word.clone(),
        },
        winning_score: scores[winner],
        correct: decided == fact.polarity,
    }
}

pub fn decide_fact(
    fact: &Fact,
    prompts: &PromptSet,
    scorer: &dyn Scorer,
    rule: DecisionRule,
    normalization: Normalization,
) -> Result<Verdict, ScoreError> {
    let variants = prompts.enumerate_fact_variants(fact);
    let batch = ScoreBatch::from_variants(Subject::Fact(fact.clone()), normalization, &variants)?;
    let scores = score_flat(scorer, &batch)?;
    Ok(decide_from_scores(fact, &variants, &scores, rule))
}

/// Aggregates each choice as its best score over meta-prompts and picks the
/// lowest index among the maxima.
pub fn decide_anchor_from_scores(anchor: &AnchorExample, variants: &[PromptVariant], scores: &[f64]) -> AnchorDecision {
    assert_eq!(variants.len(), scores.len(), "variants and scores must align");
    let mut aggregate = vec![f64::NEG_INFINITY; anchor.choices().len()];
    for (variant, &score) in variants.iter().zip(scores) {
        let Candidate::Choice(k) = variant.candidate else {
            panic!("anchor variant carries an answer candidate")
        };
        aggregate[k] = aggregate[k].max(score);
    }
    let chosen_index = first_argmax(aggregate.iter().copied()).expect("anchor has choices");
    AnchorDecision {
        anchor_id: anchor.id().to_owned(),
        chosen_index,
        answer_index: anchor.answer_index(),
        aggregate,
        correct: chosen_index == anchor.answer_index(),
    }
}

pub fn decide_anchor(
    anchor: &AnchorExample,
    background: &[Fact],
    prompts: &PromptSet,
    scorer: &dyn Scorer,
    normalization: Normalization,
) -> Result<AnchorDecision, ScoreError> {
    let variants = prompts.enumerate_anchor_variants(anchor);
    let subject = Subject::Anchor {
        id: anchor.id().to_owned(),
        answer_index: anchor.answer_index(),
        background: background.to_vec(),
    };
    let batch = ScoreBatch::from_variants(subject, normalization, &variants)?;
    let scores = score_flat(scorer, &batch)?;
    Ok(decide_anchor_from_scores(anchor, &variants, &scores))
}
