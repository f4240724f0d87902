//! A deterministic stand-in for a language model.
//!
//! The oracle answers "yes" to exactly the positive facts it knows, and
//! picks the gold anchor choice according to an [`AnchorPolicy`] that can
//! tie anchor correctness to how much of the anchor's background it knows.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ScoreBatch, ScoreError, ScoreResult, Scorer, Subject};
use crate::hashing::keyed_unit;
use crate::kb::{Fact, Polarity};
use crate::prompt::Candidate;

/// Gap added to positive-polarity words per unit of `yes_bias`. Above
/// roughly 0.7 every verdict is positive.
const YES_SHIFT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorPolicy {
    /// Probability that an anchor's correctness follows its background.
    pub coupling: f64,
    /// A coupled anchor is answered correctly iff the known fraction of its
    /// positive background is at least this.
    pub threshold: f64,
    /// Correctness probability for uncoupled anchors.
    pub base_rate: f64,
}

impl Default for AnchorPolicy {
    fn default() -> Self {
        AnchorPolicy {
            coupling: 1.0,
            threshold: 0.5,
            base_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockOracleConfig {
    /// Keys every draw; runs set it from the global seed.
    #[serde(skip)]
    pub seed: u64,
    /// Positive facts the oracle always knows.
    #[serde(skip)]
    pub known_facts: BTreeSet<Fact>,
    /// Probability that any other positive fact is known.
    pub knowledge_rate: f64,
    pub yes_bias: f64,
    /// Amplitude of the keyed per-continuation noise, below 0.1.
    pub jitter: f64,
    pub anchor_policy: AnchorPolicy,
}

impl Default for MockOracleConfig {
    fn default() -> Self {
        MockOracleConfig {
            seed: 0,
            known_facts: BTreeSet::new(),
            knowledge_rate: 0.6,
            yes_bias: 0.0,
            jitter: 0.05,
            anchor_policy: AnchorPolicy::default(),
        }
    }
}

impl MockOracleConfig {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("mock {name} must lie in [0, 1], got {v}"))
            }
        };
        unit("knowledge_rate", self.knowledge_rate)?;
        unit("yes_bias", self.yes_bias)?;
        unit("anchor_policy.coupling", self.anchor_policy.coupling)?;
        unit("anchor_policy.threshold", self.anchor_policy.threshold)?;
        unit("anchor_policy.base_rate", self.anchor_policy.base_rate)?;
        if !(0.0..0.1).contains(&self.jitter) {
            return Err(format!("mock jitter must lie in [0, 0.1), got {}", self.jitter));
        }
        if self.known_facts.iter().any(|f| f.polarity != Polarity::Positive) {
            return Err("mock known facts must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MockOracle {
    config: MockOracleConfig,
}

impl MockOracle {
    pub fn new(config: MockOracleConfig) -> Result<MockOracle, String> {
        config.validate()?;
        Ok(MockOracle { config })
    }

    pub fn config(&self) -> &MockOracleConfig {
        &self.config
    }

    pub fn knows(&self, fact: &Fact) -> bool {
        fact.polarity == Polarity::Positive
            && (self.config.known_facts.contains(fact)
                || keyed_unit(self.config.seed, &["know", &fact.key()]) < self.config.knowledge_rate)
    }

    /// Fraction of `background` the oracle knows; zero when empty.
    pub fn known_fraction(&self, background: &[Fact]) -> f64 {
        if background.is_empty() {
            return 0.0;
        }
        background.iter().filter(|f| self.knows(f)).count() as f64 / background.len() as f64
    }

    /// The choice the oracle will rank first.
    pub fn preferred_choice(&self, id: &str, answer_index: usize, choices: usize, background: &[Fact]) -> usize {
        let policy = &self.config.anchor_policy;
        let seed = self.config.seed;
        let coupled = keyed_unit(seed, &["coupling", id]) < policy.coupling;
        let correct = if coupled {
            self.known_fraction(background) >= policy.threshold
        } else {
            keyed_unit(seed, &["anchor", id]) < policy.base_rate
        };
        if correct || choices < 2 {
            answer_index
        } else {
            let offset = 1 + (keyed_unit(seed, &["wrong", id]) * (choices - 1) as f64) as usize;
            (answer_index + offset.min(choices - 1)) % choices
        }
    }

    fn jitter(&self, subject: &str, prompt: &str, continuation: &str) -> f64 {
        self.config.jitter * keyed_unit(self.config.seed, &["jitter", subject, prompt, continuation])
    }
}

impl Scorer for MockOracle {
    fn score(&self, batch: &ScoreBatch) -> Result<Vec<ScoreResult>, ScoreError> {
        match &batch.subject {
            Subject::Fact(fact) => {
                let says_yes = self.knows(fact);
                let key = fact.key();
                batch
                    .queries
                    .iter()
                    .map(|q| {
                        let log_likelihoods = q
                            .candidates
                            .iter()
                            .zip(&q.continuations)
                            .map(|(candidate, word)| {
                                let Candidate::Answer { polarity, .. } = candidate else {
                                    return Err(ScoreError::Mock(format!("choice candidate in fact batch {key}")));
                                };
                                let positive = *polarity == Polarity::Positive;
                                let base = if positive == says_yes { 1.0 } else { -1.0 };
                                let shift = if positive {
                                    YES_SHIFT * self.config.yes_bias
                                } else {
                                    0.0
                                };
                                Ok(base + shift + self.jitter(&key, &q.prompt, word))
                            })
                            .collect::<Result<_, _>>()?;
                        Ok(ScoreResult { log_likelihoods })
                    })
                    .collect()
            }
            Subject::Anchor {
                id,
                answer_index,
                background,
            } => {
                let choices = batch
                    .queries
                    .iter()
                    .flat_map(|q| &q.candidates)
                    .map(|c| match c {
                        Candidate::Choice(k) => Ok(k + 1),
                        Candidate::Answer { .. } => {
                            Err(ScoreError::Mock(format!("answer candidate in anchor batch {id}")))
                        }
                    })
                    .try_fold(0, |m, k| k.map(|k| m.max(k)))?;
                if *answer_index >= choices {
                    return Err(ScoreError::Mock(format!(
                        "anchor {id}: answer index outside the scored choices"
                    )));
                }
                let target = self.preferred_choice(id, *answer_index, choices, background);
                Ok(batch
                    .queries
                    .iter()
                    .map(|q| ScoreResult {
                        log_likelihoods: q
                            .candidates
                            .iter()
                            .zip(&q.continuations)
                            .map(|(c, word)| {
                                let base = if *c == Candidate::Choice(target) { 1.0 } else { -1.0 };
                                base + self.jitter(id, &q.prompt, word)
                            })
                            .collect(),
                    })
                    .collect())
            }
        }
    }

    fn max_in_flight(&self) -> usize {
        rayon::current_num_threads()
    }

    fn describe(&self) -> String {
        format!(
            "mock(knowledge_rate={}, yes_bias={}, coupling={})",
            self.config.knowledge_rate, self.config.yes_bias, self.config.anchor_policy.coupling
        )
    }
}
