use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::AnchorExample;
use crate::kb::{Concept, ConceptId, FactStore};

static STOPWORDS_TXT: &str = include_str!("../../data/stopwords.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_TXT
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_stopword(word: &str) -> bool {
    stopwords().contains(word)
}

/// How span/concept word overlap is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// Shared words over the concept's distinct word count.
    #[default]
    ConceptCoverage,
    /// Shared words over the union of both word sets.
    Jaccard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    pub max_ngram: usize,
    pub overlap: OverlapMode,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            max_ngram: 4,
            overlap: OverlapMode::ConceptCoverage,
        }
    }
}

/// Where in the anchor a concept was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceField {
    Question,
    Choice(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptMatch {
    pub concept: Concept,
    pub field: SourceField,
    /// Byte range of the matched span within the field text.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptSet {
    pub anchor_id: String,
    pub matches: Vec<ConceptMatch>,
}

impl ConceptSet {
    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.matches.iter().map(|m| &m.concept)
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// A lowercased surface token with its byte range in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on whitespace and trims punctuation from token edges.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut piece_start = None;
    let push = |from: usize, to: usize, tokens: &mut Vec<Token>| {
        let piece = &text[from..to];
        let trimmed_front = piece.trim_start_matches(|c: char| !c.is_alphanumeric());
        let start = from + (piece.len() - trimmed_front.len());
        let core = trimmed_front.trim_end_matches(|c: char| !c.is_alphanumeric());
        if !core.is_empty() {
            tokens.push(Token {
                text: core.to_lowercase(),
                start,
                end: start + core.len(),
            });
        }
    };
    for (i, ch) in text.char_indices() {
        match (ch.is_whitespace(), piece_start) {
            (true, Some(s)) => {
                push(s, i, &mut tokens);
                piece_start = None;
            }
            (false, None) => piece_start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = piece_start {
        push(s, text.len(), &mut tokens);
    }
    tokens
}

fn concept_is_function_words(concept: &Concept) -> bool {
    concept.words().all(is_stopword)
}

fn overlap_holds(shared: usize, span_distinct: usize, concept_distinct: usize, mode: OverlapMode) -> bool {
    match mode {
        OverlapMode::ConceptCoverage => 2 * shared > concept_distinct,
        OverlapMode::Jaccard => 2 * shared > span_distinct + concept_distinct - shared,
    }
}

/// Vocabulary concepts matched by one span, after the longer-label rule.
fn match_span(store: &FactStore, words: &[&str], mode: OverlapMode) -> Vec<ConceptId> {
    let distinct: Vec<&str> = {
        let mut seen = HashSet::new();
        words.iter().copied().filter(|w| seen.insert(*w)).collect()
    };
    if distinct.iter().all(|w| is_stopword(w)) {
        return Vec::new();
    }
    // More than half of a concept's words must be shared, so it has fewer
    // than twice as many distinct words as the span.
    let max_words = 2 * distinct.len() - 1;
    let mut shared: HashMap<ConceptId, usize> = HashMap::new();
    for word in &distinct {
        for &id in store.concepts_with_word_up_to(word, max_words) {
            *shared.entry(id).or_insert(0) += 1;
        }
    }
    let label = words.join(" ");
    let exact = store.id_of_label(&label);
    let mut matched: Vec<ConceptId> = shared
        .into_iter()
        .filter(|&(id, n)| {
            Some(id) == exact
                || (overlap_holds(n, distinct.len(), store.distinct_word_count(id), mode)
                    && !concept_is_function_words(store.concept(id)))
        })
        .map(|(id, _)| id)
        .collect();
    matched.sort_unstable();

    let word_lists: Vec<Vec<&str>> = matched.iter().map(|&id| store.concept(id).words().collect()).collect();
    matched
        .iter()
        .zip(&word_lists)
        .filter(|&(&id, inner)| {
            Some(id) == exact
                || !word_lists
                    .iter()
                    .any(|outer| outer.len() > inner.len() && contains_run(outer, inner))
        })
        .map(|(&id, _)| id)
        .collect()
}

fn contains_run(outer: &[&str], inner: &[&str]) -> bool {
    outer.windows(inner.len()).any(|w| w == inner)
}

/// Finds every vocabulary concept mentioned in the anchor.
///
/// Candidate spans are word n-grams (n ≤ `max_ngram`) of the question and of
/// each choice; spans made only of stopwords are skipped. A span matches a
/// concept when more than half of the concept's distinct words occur in it
/// (or under Jaccard overlap, when configured). Exact label matches are
/// always kept; otherwise a concept whose words form a contiguous run inside
/// a longer concept matched by the same span is dropped. The result keeps
/// each concept once, at its shortest span in the earliest field.
pub fn extract_concepts(anchor: &AnchorExample, store: &FactStore, config: &ExtractionConfig) -> ConceptSet {
    let max_ngram = config.max_ngram.max(1);
    let fields = std::iter::once((SourceField::Question, anchor.question())).chain(
        anchor
            .choices()
            .iter()
            .enumerate()
            .map(|(k, c)| (SourceField::Choice(k), c.as_str())),
    );
    // per concept, the tightest span in the earliest field
    let mut best: HashMap<ConceptId, (SourceField, usize, usize, usize)> = HashMap::new();
    for (field, text) in fields {
        let tokens = tokenize(text);
        for i in 0..tokens.len() {
            for n in 1..=max_ngram.min(tokens.len() - i) {
                let span = &tokens[i..i + n];
                let words: Vec<&str> = span.iter().map(|t| t.text.as_str()).collect();
                let candidate = (field, n, span[0].start, span[n - 1].end);
                for id in match_span(store, &words, config.overlap) {
                    best.entry(id)
                        .and_modify(|cur| {
                            if (candidate.0, candidate.1, candidate.2) < (cur.0, cur.1, cur.2) {
                                *cur = candidate;
                            }
                        })
                        .or_insert(candidate);
                }
            }
        }
    }
    let mut matches: Vec<ConceptMatch> = best
        .into_iter()
        .map(|(id, (field, _, start, end))| ConceptMatch {
            concept: store.concept(id).clone(),
            field,
            start,
            end,
        })
        .collect();
    matches.sort_by(|a, b| (a.field, a.start, a.end, &a.concept).cmp(&(b.field, b.start, b.end, &b.concept)));
    ConceptSet {
        anchor_id: anchor.id().to_owned(),
        matches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{RelationKind, StoreBuilder};
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use std::collections::BTreeSet;

    fn c(s: &str) -> Concept {
        Concept::new(s).unwrap()
    }

    fn store_of(labels: &[&str]) -> FactStore {
        let mut b = StoreBuilder::new();
        for pair in labels.windows(2) {
            b.insert(c(pair[0]), RelationKind::RelatedTo, c(pair[1]));
        }
        if labels.len() == 1 {
            b.insert(c(labels[0]), RelationKind::RelatedTo, c(labels[0]));
        }
        b.build()
    }

    fn anchor(q: &str, choices: [&str; 5]) -> AnchorExample {
        AnchorExample::new("t", q, choices.iter().map(|s| s.to_string()).collect(), 0).unwrap()
    }

    fn labels(set: &ConceptSet) -> BTreeSet<String> {
        set.concepts().map(|c| c.label().to_owned()).collect()
    }

    #[test]
    fn tokenizer_trims_punctuation_and_tracks_offsets() {
        let text = "Where's the \"tree line\"?  (usually)";
        let toks = tokenize(text);
        let words: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(words, ["where's", "the", "tree", "line", "usually"]);
        for t in &toks {
            assert_eq!(text[t.start..t.end].to_lowercase(), t.text);
        }
        assert!(tokenize(" ?! ").is_empty());
    }

    #[test]
    fn exact_and_partial_matches() {
        let store = store_of(&["book", "tree", "mountain range", "school"]);
        let set = extract_concepts(
            &anchor(
                "Where is the book near the tree line?",
                ["x", "y", "z", "w", "mountain"],
            ),
            &store,
            &ExtractionConfig::default(),
        );
        let got = labels(&set);
        assert!(got.contains("book"));
        assert!(got.contains("tree"));
        // one of two words is exactly half, which is not a match
        assert!(!got.contains("mountain range"));
        let book = set.matches.iter().find(|m| m.concept == c("book")).unwrap();
        assert_eq!(book.field, SourceField::Question);
        assert_eq!(&"Where is the book near the tree line?"[book.start..book.end], "book");
    }

    #[test]
    fn longer_label_wins_within_a_span() {
        let store = store_of(&["tree line", "line", "tree line sign", "dog"]);
        let set = extract_concepts(
            &anchor("tree line", ["a", "b", "c", "d", "e"]),
            &store,
            &ExtractionConfig::default(),
        );
        // "tree line" is matched exactly, "line" survives from its own span,
        // "tree line sign" is covered 2/3 by the bigram.
        assert_eq!(
            labels(&set),
            ["line", "tree line", "tree line sign"]
                .iter()
                .map(|s| s.to_string())
                .collect()
        );
    }

    #[test]
    fn stopword_only_spans_and_concepts_never_match() {
        let store = store_of(&["the", "of the", "cat"]);
        let set = extract_concepts(
            &anchor("the cat of the house", ["a", "b", "c", "d", "e"]),
            &store,
            &ExtractionConfig::default(),
        );
        assert_eq!(labels(&set), BTreeSet::from(["cat".to_string()]));
    }

    #[test]
    fn empty_result_is_allowed() {
        let store = store_of(&["cat", "dog"]);
        let set = extract_concepts(
            &anchor("what is love?", ["a", "b", "c", "d", "e"]),
            &store,
            &ExtractionConfig::default(),
        );
        assert!(set.is_empty());
    }

    // Exhaustive oracle: every (span, concept) pair checked directly.
    fn brute_force(anchor: &AnchorExample, vocab: &[Concept], cfg: &ExtractionConfig) -> BTreeSet<String> {
        let stop = |w: &str| is_stopword(w);
        let mut out = BTreeSet::new();
        let mut texts = vec![anchor.question().to_string()];
        texts.extend(anchor.choices().iter().cloned());
        for text in texts {
            let toks: Vec<String> = tokenize(&text).into_iter().map(|t| t.text).collect();
            for i in 0..toks.len() {
                for n in 1..=cfg.max_ngram {
                    if i + n > toks.len() {
                        break;
                    }
                    let span = &toks[i..i + n];
                    if span.iter().all(|w| stop(w)) {
                        continue;
                    }
                    let span_set: BTreeSet<&str> = span.iter().map(String::as_str).collect();
                    let span_label = span.join(" ");
                    let mut hits: Vec<&Concept> = Vec::new();
                    for v in vocab {
                        let vset: BTreeSet<&str> = v.words().collect();
                        let shared = vset.intersection(&span_set).count() as f64;
                        let ratio = match cfg.overlap {
                            OverlapMode::ConceptCoverage => shared / vset.len() as f64,
                            OverlapMode::Jaccard => shared / vset.union(&span_set).count() as f64,
                        };
                        let exact = v.label() == span_label;
                        if exact || (ratio > 0.5 && !v.words().all(stop)) {
                            hits.push(v);
                        }
                    }
                    for v in &hits {
                        let exact = v.label() == span_label;
                        let vw: Vec<&str> = v.words().collect();
                        let dominated = hits.iter().any(|u| {
                            let uw: Vec<&str> = u.words().collect();
                            uw.len() > vw.len() && (0..=uw.len() - vw.len()).any(|k| uw[k..k + vw.len()] == vw[..])
                        });
                        if exact || !dominated {
                            out.insert(v.label().to_string());
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_exhaustive_scan_on_small_vocabularies() {
        let lexicon = [
            "tree", "line", "mountain", "range", "peak", "snow", "the", "of", "a", "book", "school", "bus", "river",
            "bank", "money", "grow", "on", "high",
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for round in 0..60 {
            let mut labels_v = BTreeSet::new();
            while labels_v.len() < rng.gen_range(5..100) {
                let n = rng.gen_range(1..=4);
                let words: Vec<&str> = (0..n).map(|_| *lexicon.choose(&mut rng).unwrap()).collect();
                labels_v.insert(words.join(" "));
            }
            let labels_v: Vec<&str> = labels_v.iter().map(String::as_str).collect();
            let store = store_of(&labels_v);
            let sentence = |rng: &mut rand_chacha::ChaCha8Rng, len: usize| {
                (0..len)
                    .map(|_| *lexicon.choose(rng).unwrap())
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let q = format!("{}?", sentence(&mut rng, 9));
            let chs: Vec<String> = (0..5)
                .map(|_| {
                    let len = rng.gen_range(1..4);
                    sentence(&mut rng, len)
                })
                .collect();
            let a = AnchorExample::new("r", q, chs, 0).unwrap();
            for overlap in [OverlapMode::ConceptCoverage, OverlapMode::Jaccard] {
                let cfg = ExtractionConfig {
                    max_ngram: 1 + round % 4,
                    overlap,
                };
                let got = labels(&extract_concepts(&a, &store, &cfg));
                assert_eq!(got, brute_force(&a, store.vocabulary(), &cfg), "round {round}");
            }
        }
    }

    #[test]
    fn matches_lie_in_vocabulary_and_spans_in_text() {
        let store = store_of(&["tree", "mountain", "tree line", "peak"]);
        let a = anchor(
            "The peak of a mountain is above the tree line.",
            ["tree", "b", "c", "d", "e"],
        );
        let set = extract_concepts(&a, &store, &ExtractionConfig::default());
        for m in &set.matches {
            assert!(store.contains(&m.concept));
            let text = match m.field {
                SourceField::Question => a.question(),
                SourceField::Choice(k) => &a.choices()[k],
            };
            assert!(m.end <= text.len() && m.start < m.end);
        }
    }
}
