use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Concept, Fact, KbError, RelationKind};

/// Dense handle into the store vocabulary. Ids follow label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptId(pub(crate) u32);

impl ConceptId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Orientation of a stored edge relative to the `(a, b)` query order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Stored as `(a, r, b)`.
    Forward,
    /// Stored as `(b, r, a)`.
    Reverse,
}

type Edge = (ConceptId, RelationKind, ConceptId);

/// Read-only fact store. Build it with [`StoreBuilder`].
#[derive(Debug, Clone)]
pub struct FactStore {
    concepts: Vec<Concept>,
    ids: HashMap<String, ConceptId>,
    edges: Vec<Edge>,
    forward: HashMap<(ConceptId, RelationKind), Vec<ConceptId>>,
    reverse: HashMap<(ConceptId, RelationKind), Vec<ConceptId>>,
    pairs: HashMap<(ConceptId, ConceptId), Vec<(RelationKind, Direction)>>,
    // postings ordered by (distinct word count, id)
    word_index: HashMap<String, Vec<ConceptId>>,
    distinct_words: Vec<u32>,
}

/// Accumulates edges, collapsing duplicates, then freezes them into a
/// [`FactStore`].
#[derive(Debug, Default)]
pub struct StoreBuilder {
    labels: Vec<Concept>,
    interned: HashMap<Concept, u32>,
    edges: HashSet<(u32, RelationKind, u32)>,
}

impl StoreBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, concept: Concept) -> u32 {
        if let Some(&id) = self.interned.get(&concept) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(concept.clone());
        self.interned.insert(concept, id);
        id
    }

    /// Adds an edge. Returns `false` when the edge was already present.
    pub fn insert(&mut self, c1: Concept, relation: RelationKind, c2: Concept) -> bool {
        let a = self.intern(c1);
        let b = self.intern(c2);
        self.edges.insert((a, relation, b))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn build(self) -> FactStore {
        let mut order: Vec<u32> = (0..self.labels.len() as u32).collect();
        order.sort_by(|&x, &y| self.labels[x as usize].cmp(&self.labels[y as usize]));
        let mut remap = vec![ConceptId(0); order.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old as usize] = ConceptId(new as u32);
        }
        let mut labels: Vec<Option<Concept>> = self.labels.into_iter().map(Some).collect();
        let concepts: Vec<Concept> = order
            .iter()
            .map(|&old| labels[old as usize].take().expect("each label moved once"))
            .collect();
        let edges = self
            .edges
            .into_iter()
            .map(|(a, r, b)| (remap[a as usize], r, remap[b as usize]))
            .collect();
        FactStore::from_parts(concepts, edges)
    }
}

impl FactStore {
    /// Builds all indexes from a sorted vocabulary and an edge list.
    /// Every edge endpoint must index into `concepts`.
    pub(crate) fn from_parts(concepts: Vec<Concept>, mut edges: Vec<Edge>) -> FactStore {
        edges.sort_unstable();
        edges.dedup();

        let mut forward: HashMap<(ConceptId, RelationKind), Vec<ConceptId>> = HashMap::new();
        let mut reverse: HashMap<(ConceptId, RelationKind), Vec<ConceptId>> = HashMap::new();
        let mut pairs: HashMap<(ConceptId, ConceptId), Vec<(RelationKind, Direction)>> = HashMap::new();
        for &(a, r, b) in &edges {
            forward.entry((a, r)).or_default().push(b);
            reverse.entry((b, r)).or_default().push(a);
            pairs.entry((a, b)).or_default().push((r, Direction::Forward));
            pairs.entry((b, a)).or_default().push((r, Direction::Reverse));
        }
        for targets in reverse.values_mut() {
            targets.sort_unstable();
        }
        for links in pairs.values_mut() {
            links.sort_unstable();
            links.dedup();
        }

        let mut ids = HashMap::with_capacity(concepts.len());
        let mut word_index: HashMap<String, Vec<ConceptId>> = HashMap::new();
        let mut distinct_words = Vec::with_capacity(concepts.len());
        for (i, concept) in concepts.iter().enumerate() {
            let id = ConceptId(i as u32);
            ids.insert(concept.label().to_owned(), id);
            let mut seen = HashSet::new();
            for word in concept.words() {
                if seen.insert(word) {
                    word_index.entry(word.to_owned()).or_default().push(id);
                }
            }
            distinct_words.push(seen.len() as u32);
        }
        for postings in word_index.values_mut() {
            postings.sort_by_key(|id| (distinct_words[id.index()], *id));
        }

        FactStore {
            concepts,
            ids,
            edges,
            forward,
            reverse,
            pairs,
            word_index,
            distinct_words,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vocabulary(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn id_of(&self, concept: &Concept) -> Option<ConceptId> {
        self.ids.get(concept.label()).copied()
    }

    pub fn id_of_label(&self, label: &str) -> Option<ConceptId> {
        self.ids.get(label).copied()
    }

    pub fn concept(&self, id: ConceptId) -> &Concept {
        &self.concepts[id.index()]
    }

    pub fn contains(&self, concept: &Concept) -> bool {
        self.ids.contains_key(concept.label())
    }

    /// Concepts whose label contains `word` as a whole token, ordered by
    /// number of distinct words.
    pub fn concepts_with_word(&self, word: &str) -> &[ConceptId] {
        self.word_index.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Like [`concepts_with_word`](Self::concepts_with_word), restricted to
    /// concepts with at most `max_words` distinct words.
    pub fn concepts_with_word_up_to(&self, word: &str, max_words: usize) -> &[ConceptId] {
        let postings = self.concepts_with_word(word);
        let end = postings.partition_point(|id| self.distinct_words[id.index()] as usize <= max_words);
        &postings[..end]
    }

    pub fn distinct_word_count(&self, id: ConceptId) -> usize {
        self.distinct_words[id.index()] as usize
    }

    /// Targets `c2` of edges `(c1, relation, c2)`, sorted by id.
    pub fn targets(&self, c1: ConceptId, relation: RelationKind) -> &[ConceptId] {
        self.forward.get(&(c1, relation)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Sources `c1` of edges `(c1, relation, c2)`, sorted by id.
    pub fn sources(&self, c2: ConceptId, relation: RelationKind) -> &[ConceptId] {
        self.reverse.get(&(c2, relation)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_edge(&self, c1: ConceptId, relation: RelationKind, c2: ConceptId) -> bool {
        self.targets(c1, relation).binary_search(&c2).is_ok()
    }

    /// True iff the directed edge `(c1, relation, c2)` is stored. Unknown
    /// concepts are simply absent.
    pub fn has_fact(&self, c1: &Concept, relation: RelationKind, c2: &Concept) -> bool {
        match (self.id_of(c1), self.id_of(c2)) {
            (Some(a), Some(b)) => self.has_edge(a, relation, b),
            _ => false,
        }
    }

    /// Edges between `a` and `b` as `(relation, orientation)` pairs.
    pub fn links(&self, a: ConceptId, b: ConceptId) -> &[(RelationKind, Direction)] {
        self.pairs.get(&(a, b)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every stored edge between `a` and `b` in either orientation. Each fact
    /// is returned in its stored orientation.
    pub fn connecting_facts(&self, a: &Concept, b: &Concept) -> Result<Vec<(Fact, Direction)>, KbError> {
        if a == b {
            return Err(KbError::CyclicPair(a.label().to_owned()));
        }
        let (Some(ia), Some(ib)) = (self.id_of(a), self.id_of(b)) else {
            return Ok(Vec::new());
        };
        Ok(self
            .links(ia, ib)
            .iter()
            .map(|&(relation, direction)| {
                let fact = match direction {
                    Direction::Forward => Fact::positive(a.clone(), relation, b.clone()),
                    Direction::Reverse => Fact::positive(b.clone(), relation, a.clone()),
                };
                (fact, direction)
            })
            .collect())
    }

    pub fn edge_ids(&self) -> &[(ConceptId, RelationKind, ConceptId)] {
        &self.edges
    }

    /// All edges as positive facts, in `(c1, relation, c2)` id order.
    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.edges
            .iter()
            .map(|&(a, r, b)| Fact::positive(self.concept(a).clone(), r, self.concept(b).clone()))
    }

    /// Full cross-scan of the three indexes against the edge list.
    pub fn indexes_consistent(&self) -> bool {
        let fwd: usize = self.forward.values().map(Vec::len).sum();
        let rev: usize = self.reverse.values().map(Vec::len).sum();
        let pair: usize = self.pairs.values().map(Vec::len).sum();
        if fwd != self.edges.len() || rev != self.edges.len() || pair != 2 * self.edges.len() {
            return false;
        }
        self.edges.iter().all(|&(a, r, b)| {
            self.has_edge(a, r, b)
                && self.sources(b, r).binary_search(&a).is_ok()
                && self.links(a, b).contains(&(r, Direction::Forward))
                && self.links(b, a).contains(&(r, Direction::Reverse))
        })
    }
}

impl PartialEq for FactStore {
    fn eq(&self, other: &Self) -> bool {
        self.concepts == other.concepts && self.edges == other.edges
    }
}

impl Eq for FactStore {}
