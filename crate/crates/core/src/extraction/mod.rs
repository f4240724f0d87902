//! Background-fact extraction for anchor QA items.
//!
//! For each anchor we find the knowledge-base concepts mentioned in its
//! question and choices, collect every edge that directly connects two of
//! them (the positive background), and pair each positive with a mined
//! negative whose answer is "no".

mod background;
mod concepts;
mod negatives;

use serde::{Deserialize, Serialize};

pub use background::{build_background_set, extract_positive_background, BackgroundPair, BackgroundSet};
pub use concepts::{
    extract_concepts, is_stopword, tokenize, ConceptMatch, ConceptSet, ExtractionConfig, OverlapMode, SourceField,
    Token,
};
pub use negatives::{mine_negative, MiningError, NegativeCandidateSet};

pub const CHOICE_COUNT: usize = 5;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AnchorError {
    #[error("anchor `{id}` has {found} choices, expected {CHOICE_COUNT}")]
    ChoiceCount { id: String, found: usize },
    #[error("anchor `{id}` has answer index {index} outside 0..{CHOICE_COUNT}")]
    AnswerIndex { id: String, index: usize },
    #[error("anchor `{0}` has an empty question")]
    EmptyQuestion(String),
}

/// A multiple-choice QA item: question, five choices and the gold index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAnchor", into = "RawAnchor")]
pub struct AnchorExample {
    id: String,
    question: String,
    choices: Vec<String>,
    answer_index: usize,
}

#[derive(Serialize, Deserialize)]
struct RawAnchor {
    id: String,
    question: String,
    choices: Vec<String>,
    answer_index: usize,
}

impl TryFrom<RawAnchor> for AnchorExample {
    type Error = AnchorError;

    fn try_from(raw: RawAnchor) -> Result<Self, Self::Error> {
        AnchorExample::new(raw.id, raw.question, raw.choices, raw.answer_index)
    }
}

impl From<AnchorExample> for RawAnchor {
    fn from(a: AnchorExample) -> Self {
        RawAnchor {
            id: a.id,
            question: a.question,
            choices: a.choices,
            answer_index: a.answer_index,
        }
    }
}

impl AnchorExample {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        choices: Vec<String>,
        answer_index: usize,
    ) -> Result<AnchorExample, AnchorError> {
        let id = id.into();
        let question = question.into();
        if question.trim().is_empty() {
            return Err(AnchorError::EmptyQuestion(id));
        }
        if choices.len() != CHOICE_COUNT {
            return Err(AnchorError::ChoiceCount {
                id,
                found: choices.len(),
            });
        }
        if answer_index >= CHOICE_COUNT {
            return Err(AnchorError::AnswerIndex {
                id,
                index: answer_index,
            });
        }
        Ok(AnchorExample {
            id,
            question,
            choices,
            answer_index,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn choices(&self) -> &[String] {
        &self.choices
    }

    pub fn answer_index(&self) -> usize {
        self.answer_index
    }
}
