use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{extract_concepts, mine_negative, AnchorExample, ConceptSet, ExtractionConfig, MiningError};
use crate::kb::{Concept, ConceptId, DictionaryPool, Fact, FactStore};

/// A positive background fact and its mined negative partner, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackgroundPair {
    pub positive: Fact,
    pub negative: Option<Fact>,
}

/// Background facts for one anchor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackgroundSet {
    pub anchor_id: String,
    /// Matched concept labels, in match order.
    pub concepts: Vec<Concept>,
    pub pairs: Vec<BackgroundPair>,
}

impl BackgroundSet {
    pub fn positives(&self) -> impl Iterator<Item = &Fact> {
        self.pairs.iter().map(|p| &p.positive)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &Fact> {
        self.pairs.iter().filter_map(|p| p.negative.as_ref())
    }

    /// Every fact, positives and negatives alike.
    pub fn facts(&self) -> impl Iterator<Item = &Fact> {
        self.positives().chain(self.negatives())
    }

    pub fn mining_failures(&self) -> usize {
        self.pairs.iter().filter(|p| p.negative.is_none()).count()
    }

    /// Anchors without positives carry no background and are excluded from
    /// consistency scoring.
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Every edge that connects two distinct matched concepts, once, sorted.
pub fn extract_positive_background(concepts: &ConceptSet, store: &FactStore) -> Vec<Fact> {
    let ids: Vec<ConceptId> = concepts
        .concepts()
        .filter_map(|c| store.id_of(c))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut edges = BTreeSet::new();
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            for &(relation, direction) in store.links(a, b) {
                let edge = match direction {
                    crate::kb::Direction::Forward => (a, relation, b),
                    crate::kb::Direction::Reverse => (b, relation, a),
                };
                edges.insert(edge);
            }
        }
    }
    edges
        .into_iter()
        .map(|(a, r, b)| Fact::positive(store.concept(a).clone(), r, store.concept(b).clone()))
        .collect()
}

/// Extracts positives for `anchor` and pairs each with its mined negative.
/// Positives whose eligible pool is empty keep `negative: None`.
pub fn build_background_set(
    anchor: &AnchorExample,
    store: &FactStore,
    pool: &DictionaryPool,
    global_seed: u64,
    config: &ExtractionConfig,
) -> Result<BackgroundSet, MiningError> {
    let concepts = extract_concepts(anchor, store, config);
    let positives = extract_positive_background(&concepts, store);
    let mut pairs = Vec::with_capacity(positives.len());
    for positive in positives {
        let negative = match mine_negative(&positive, store, pool, global_seed) {
            Ok(mined) => Some(mined.negative()),
            Err(MiningError::NoEligibleCandidate(fact)) => {
                log::warn!("anchor {}: no eligible negative for {fact}", anchor.id());
                None
            }
            Err(e) => return Err(e),
        };
        pairs.push(BackgroundPair { positive, negative });
    }
    Ok(BackgroundSet {
        anchor_id: anchor.id().to_owned(),
        concepts: concepts.concepts().cloned().collect(),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::{ConceptMatch, SourceField};
    use crate::kb::{RelationKind, StoreBuilder};
    use rand::{Rng, SeedableRng};

    fn c(s: &str) -> Concept {
        Concept::new(s).unwrap()
    }

    fn set_of(labels: &[&str]) -> ConceptSet {
        ConceptSet {
            anchor_id: "t".into(),
            matches: labels
                .iter()
                .map(|l| ConceptMatch {
                    concept: c(l),
                    field: SourceField::Question,
                    start: 0,
                    end: 1,
                })
                .collect(),
        }
    }

    fn anchor(id: &str, q: &str) -> AnchorExample {
        AnchorExample::new(id, q, ["x", "y", "z", "w", "v"].map(String::from).to_vec(), 0).unwrap()
    }

    #[test]
    fn single_pair_single_edge() {
        let mut b = StoreBuilder::new();
        b.insert(c("book"), RelationKind::UsedFor, c("school"));
        let store = b.build();
        assert_eq!(
            extract_positive_background(&set_of(&["book", "school"]), &store),
            vec![Fact::positive(c("book"), RelationKind::UsedFor, c("school"))]
        );
        assert!(extract_positive_background(&set_of(&["book"]), &store).is_empty());
    }

    #[test]
    fn matches_brute_force_on_random_thirty_node_store() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut b = StoreBuilder::new();
            let mut listed = Vec::new();
            for _ in 0..120 {
                let x = rng.gen_range(0..30);
                let y = rng.gen_range(0..30);
                let r = RelationKind::ALL[rng.gen_range(0..14)];
                b.insert(c(&format!("n{x}")), r, c(&format!("n{y}")));
                listed.push(Fact::positive(c(&format!("n{x}")), r, c(&format!("n{y}"))));
            }
            let store = b.build();
            let chosen: BTreeSet<String> = (0..5).map(|_| format!("n{}", rng.gen_range(0..30))).collect();
            let labels: Vec<&str> = chosen.iter().map(String::as_str).collect();
            let expected: BTreeSet<Fact> = listed
                .into_iter()
                .filter(|f| f.c1 != f.c2 && chosen.contains(f.c1.label()) && chosen.contains(f.c2.label()))
                .collect();
            let got = extract_positive_background(&set_of(&labels), &store);
            assert_eq!(got.len(), expected.len(), "no duplicates");
            assert_eq!(got.into_iter().collect::<BTreeSet<_>>(), expected);
        }
    }

    #[test]
    fn disconnected_concepts_give_empty_background() {
        let mut b = StoreBuilder::new();
        b.insert(c("book"), RelationKind::UsedFor, c("school"));
        b.insert(c("cat"), RelationKind::IsA, c("pet"));
        let store = b.build();
        let pool = DictionaryPool::from_ranked(vec![c("rain")]);
        let bg = build_background_set(
            &anchor("a", "book and cat"),
            &store,
            &pool,
            1,
            &ExtractionConfig::default(),
        )
        .unwrap();
        assert!(bg.is_empty());
        assert_eq!(bg.negatives().count(), 0);
        assert_eq!(bg.concepts.len(), 2);
    }

    #[test]
    fn shared_positive_gets_the_same_partner() {
        let mut b = StoreBuilder::new();
        b.insert(c("book"), RelationKind::UsedFor, c("school"));
        b.insert(c("bus"), RelationKind::AtLocation, c("school"));
        let store = b.build();
        let pool = DictionaryPool::from_ranked((0..500).map(|i| c(&format!("w{i}"))).collect());
        let cfg = ExtractionConfig::default();
        let first = build_background_set(&anchor("a1", "a book for school"), &store, &pool, 9, &cfg).unwrap();
        let second =
            build_background_set(&anchor("a2", "the school bus and the book"), &store, &pool, 9, &cfg).unwrap();
        let partner = |bg: &BackgroundSet| {
            bg.pairs
                .iter()
                .find(|p| p.positive.relation == RelationKind::UsedFor)
                .unwrap()
                .negative
                .clone()
        };
        assert!(partner(&first).is_some());
        assert_eq!(partner(&first), partner(&second));
        assert_eq!(second.pairs.len(), 2);
    }

    #[test]
    fn negative_count_equals_positives_minus_failures() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
        let mut b = StoreBuilder::new();
        b.insert(c(&words[0]), RelationKind::UsedFor, c(&words[1]));
        while b.len() < 50 {
            let x = rng.gen_range(0..12);
            let y = rng.gen_range(0..12);
            if x != y {
                b.insert(c(&words[x]), RelationKind::ALL[rng.gen_range(0..3)], c(&words[y]));
            }
        }
        let store = b.build();
        // a two-word pool: (w0, UsedFor, w1) can never be mined
        let pool = DictionaryPool::from_ranked(words[..2].iter().map(|w| c(w)).collect());
        let cfg = ExtractionConfig::default();
        let mut saw_failure = false;
        for i in 0..10 {
            let mut q: Vec<&str> = vec!["w0", "w1"];
            q.extend((0..4).map(|_| words[rng.gen_range(0..12)].as_str()));
            let bg = build_background_set(&anchor(&format!("a{i}"), &q.join(" ")), &store, &pool, 3, &cfg).unwrap();
            // independent eligible-set computation
            let expected_failures = bg
                .positives()
                .filter(|p| {
                    !pool
                        .entries()
                        .iter()
                        .any(|x| *x != p.c1 && *x != p.c2 && !store.has_fact(&p.c1, p.relation, x))
                })
                .count();
            saw_failure |= expected_failures > 0;
            assert_eq!(bg.mining_failures(), expected_failures);
            assert_eq!(bg.negatives().count(), bg.pairs.len() - expected_failures);
            for n in bg.negatives() {
                assert!(!store.has_fact(&n.c1, n.relation, &n.c2));
                assert_ne!(n.c1, n.c2);
                assert!(pool.contains(&n.c2));
            }
        }
        assert!(saw_failure, "fixture should exercise mining failures");
    }
}
