//! Natural-language rendering of facts and anchors.
//!
//! A fact becomes a yes/no question through its relation template; each
//! question is then wrapped by every meta-prompt and paired with every
//! answer pair's words to give the scoreable variants.

mod pattern;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::extraction::AnchorExample;
use crate::kb::{Fact, Polarity, RelationKind};
pub use pattern::{Pattern, Slot};

pub const PROMPT_FILE_VERSION: u32 = 1;
pub static BUILTIN_PROMPTS: &str = include_str!("../../data/prompts.toml");

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("reading prompt file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("prompt file is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("prompt file version {found} is not supported (expected {PROMPT_FILE_VERSION})")]
    Version { found: u32 },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerPair {
    pub positive: String,
    pub negative: String,
}

impl AnswerPair {
    pub fn word(&self, polarity: Polarity) -> &str {
        match polarity {
            Polarity::Positive => &self.positive,
            Polarity::Negative => &self.negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPrompt {
    pub id: u8,
    pattern: Pattern,
    anchor_pattern: Pattern,
}

impl MetaPrompt {
    pub fn has_labels(&self) -> bool {
        self.pattern.has_slot(Slot::LabelA)
    }

    /// Wraps a rendered fact question. A trailing `?` on the question is
    /// dropped since the meta-prompt supplies its own punctuation.
    pub fn render(&self, question: &str, pair: &AnswerPair) -> String {
        let q = strip_question_mark(question);
        self.pattern.render(|slot| match slot {
            Slot::Question => q,
            Slot::LabelA => &pair.positive,
            Slot::LabelB => &pair.negative,
            _ => "",
        })
    }

    pub fn render_anchor(&self, question: &str, choices: &[String]) -> String {
        let q = strip_question_mark(question);
        let listed = list_choices(choices);
        self.anchor_pattern.render(|slot| match slot {
            Slot::Question => q,
            Slot::Choices => &listed,
            _ => "",
        })
    }
}

fn strip_question_mark(question: &str) -> &str {
    let trimmed = question.trim_end();
    trimmed.strip_suffix('?').unwrap_or(trimmed).trim_end()
}

/// `'a', 'b', 'c', 'd' or 'e'`
fn list_choices(choices: &[String]) -> String {
    let quoted: Vec<String> = choices.iter().map(|c| format!("'{c}'")).collect();
    match quoted.split_last() {
        None => String::new(),
        Some((last, [])) => last.clone(),
        Some((last, init)) => format!("{} or {last}", init.join(", ")),
    }
}

/// What a variant's continuation stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidate {
    /// A word of answer pair `pair` with the given polarity.
    Answer { pair: usize, polarity: Polarity },
    /// Choice `k` of an anchor.
    Choice(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVariant {
    /// Fact key or anchor id.
    pub subject: String,
    pub meta_prompt_id: u8,
    pub candidate: Candidate,
    pub candidate_word: String,
    pub prompt_text: String,
}

/// Templates, meta-prompts and answer pairs loaded from a prompt file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<RelationKind, Pattern>,
    meta_prompts: Vec<MetaPrompt>,
    answer_pairs: Vec<AnswerPair>,
    cross_unlabeled_meta_prompts: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptFile {
    version: u32,
    #[serde(default = "yes")]
    cross_unlabeled_meta_prompts: bool,
    relation_templates: BTreeMap<String, String>,
    meta_prompts: Vec<MetaPromptEntry>,
    answer_pairs: Vec<AnswerPair>,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaPromptEntry {
    id: u8,
    pattern: String,
    anchor_pattern: Option<String>,
}

impl PromptSet {
    pub fn builtin() -> PromptSet {
        PromptSet::from_toml_str(BUILTIN_PROMPTS).expect("built-in prompt file is valid")
    }

    pub fn from_path(path: &Path) -> Result<PromptSet, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        PromptSet::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<PromptSet, PromptError> {
        let file: PromptFile = toml::from_str(text)?;
        if file.version != PROMPT_FILE_VERSION {
            return Err(PromptError::Version { found: file.version });
        }
        let invalid = |m: String| PromptError::Invalid(m);

        let mut templates = BTreeMap::new();
        for (name, text) in &file.relation_templates {
            let relation: RelationKind = name.parse().map_err(invalid)?;
            let pattern = Pattern::parse(text).map_err(invalid)?;
            if pattern.slot_count(Slot::C1) != 1 || pattern.slot_count(Slot::C2) != 1 {
                return Err(invalid(format!(
                    "template for {name} needs exactly one {{c1}} and one {{c2}}"
                )));
            }
            if pattern.slots().any(|s| !matches!(s, Slot::C1 | Slot::C2)) {
                return Err(invalid(format!("template for {name} uses a foreign slot")));
            }
            templates.insert(relation, pattern);
        }
        if let Some(missing) = RelationKind::ALL.iter().find(|r| !templates.contains_key(r)) {
            return Err(invalid(format!("no template for relation {missing}")));
        }

        let mut meta_prompts = Vec::new();
        for (i, entry) in file.meta_prompts.iter().enumerate() {
            if entry.id as usize != i + 1 {
                return Err(invalid(format!(
                    "meta-prompt ids must run 1..n in order, found {} at position {}",
                    entry.id,
                    i + 1
                )));
            }
            let pattern = Pattern::parse(&entry.pattern).map_err(invalid)?;
            if pattern.slot_count(Slot::Question) != 1 {
                return Err(invalid(format!("meta-prompt {} needs one {{question}}", entry.id)));
            }
            let a = pattern.slot_count(Slot::LabelA);
            let b = pattern.slot_count(Slot::LabelB);
            if a != b || a > 1 || pattern.has_slot(Slot::Choices) {
                return Err(invalid(format!(
                    "meta-prompt {} must use {{label_a}} and {{label_b}} together, once",
                    entry.id
                )));
            }
            let anchor_pattern = match &entry.anchor_pattern {
                Some(text) => Pattern::parse(text).map_err(invalid)?,
                None if a == 0 => pattern.clone(),
                None => {
                    return Err(invalid(format!(
                        "meta-prompt {} has label slots but no anchor_pattern",
                        entry.id
                    )))
                }
            };
            if anchor_pattern.slot_count(Slot::Question) != 1
                || anchor_pattern.has_slot(Slot::LabelA)
                || anchor_pattern.has_slot(Slot::LabelB)
            {
                return Err(invalid(format!(
                    "anchor pattern of meta-prompt {} needs one {{question}} and no label slots",
                    entry.id
                )));
            }
            meta_prompts.push(MetaPrompt {
                id: entry.id,
                pattern,
                anchor_pattern,
            });
        }
        if meta_prompts.is_empty() {
            return Err(invalid("at least one meta-prompt is required".into()));
        }
        if file.answer_pairs.is_empty()
            || file
                .answer_pairs
                .iter()
                .any(|p| p.positive.trim().is_empty() || p.negative.trim().is_empty())
        {
            return Err(invalid("answer pairs must be non-empty words".into()));
        }
        let mut words: Vec<&str> = file
            .answer_pairs
            .iter()
            .flat_map(|p| [p.positive.as_str(), p.negative.as_str()])
            .collect();
        words.sort_unstable();
        if words.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("answer words must be unique across pairs".into()));
        }

        Ok(PromptSet {
            templates,
            meta_prompts,
            answer_pairs: file.answer_pairs,
            cross_unlabeled_meta_prompts: file.cross_unlabeled_meta_prompts,
        })
    }

    pub fn meta_prompts(&self) -> &[MetaPrompt] {
        &self.meta_prompts
    }

    pub fn answer_pairs(&self) -> &[AnswerPair] {
        &self.answer_pairs
    }

    pub fn meta_prompt(&self, id: u8) -> Option<&MetaPrompt> {
        self.meta_prompts.get((id as usize).checked_sub(1)?)
    }

    /// Substitutes the fact's concepts into its relation template verbatim.
    pub fn render_fact_question(&self, fact: &Fact) -> String {
        self.templates[&fact.relation].render(|slot| match slot {
            Slot::C1 => fact.c1.label(),
            Slot::C2 => fact.c2.label(),
            _ => "",
        })
    }

    /// Answer pairs crossed with a meta-prompt.
    pub fn pairs_for(&self, meta: &MetaPrompt) -> std::ops::Range<usize> {
        if meta.has_labels() || self.cross_unlabeled_meta_prompts {
            0..self.answer_pairs.len()
        } else {
            0..1
        }
    }

    /// Meta-prompts × answer pairs × {positive, negative} words, in that
    /// nesting order.
    pub fn enumerate_fact_variants(&self, fact: &Fact) -> Vec<PromptVariant> {
        let question = self.render_fact_question(fact);
        let subject = fact.key();
        let mut out = Vec::with_capacity(self.meta_prompts.len() * self.answer_pairs.len() * 2);
        for meta in &self.meta_prompts {
            for pair_index in self.pairs_for(meta) {
                let pair = &self.answer_pairs[pair_index];
                let prompt_text = meta.render(&question, pair);
                for polarity in [Polarity::Positive, Polarity::Negative] {
                    out.push(PromptVariant {
                        subject: subject.clone(),
                        meta_prompt_id: meta.id,
                        candidate: Candidate::Answer {
                            pair: pair_index,
                            polarity,
                        },
                        candidate_word: pair.word(polarity).to_owned(),
                        prompt_text: prompt_text.clone(),
                    });
                }
            }
        }
        out
    }

    /// One variant per (meta-prompt, choice); the continuation is the choice
    /// text itself.
    pub fn enumerate_anchor_variants(&self, anchor: &AnchorExample) -> Vec<PromptVariant> {
        let mut out = Vec::with_capacity(self.meta_prompts.len() * anchor.choices().len());
        for meta in &self.meta_prompts {
            let prompt_text = meta.render_anchor(anchor.question(), anchor.choices());
            for (k, choice) in anchor.choices().iter().enumerate() {
                out.push(PromptVariant {
                    subject: anchor.id().to_owned(),
                    meta_prompt_id: meta.id,
                    candidate: Candidate::Choice(k),
                    candidate_word: choice.clone(),
                    prompt_text: prompt_text.clone(),
                });
            }
        }
        out
    }
}
