//! Relation-indexed fact store built from a ConceptNet-style assertion dump.
//!
//! The store keeps only the fourteen commonsense relations used for probing,
//! interns every concept label, and answers the two queries the rest of the
//! pipeline needs: edge membership and "which edges connect these two
//! concepts" (path length one, either orientation).

mod ingest;
mod persist;
mod pool;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use ingest::{open_dump, parse_dump, parse_dump_file, IngestDiagnostics};
pub use persist::{decode_store, encode_store, load_store, save_store, StoreFile, FORMAT_VERSION, MAGIC};
pub use pool::{build_dictionary_pool, read_frequency_list, read_word_list, DictionaryPool};
pub use store::{ConceptId, Direction, FactStore, StoreBuilder};

/// Default size of the negative-candidate dictionary pool.
pub const DEFAULT_POOL_TOP_K: usize = 20_000;

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("I/O error reading {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("connecting_facts called with identical endpoints `{0}`")]
    CyclicPair(String),
    #[error("top_k must be positive")]
    InvalidTopK,
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("store file has version {found}, this build reads version {expected}")]
    IncompatibleVersion { found: u8, expected: u8 },
    #[error("store file is corrupt: {0}")]
    Corrupt(String),
}

impl KbError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        KbError::Io {
            context: context.into(),
            source,
        }
    }
}

/// A normalized concept label.
///
/// Labels are lowercased, underscores become spaces, and runs of whitespace
/// collapse to one space. A label is never empty.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Concept {
    label: String,
}

impl Concept {
    /// Normalizes `raw` into a concept, or `None` if nothing is left.
    pub fn new(raw: &str) -> Option<Concept> {
        let lowered = raw.to_lowercase().replace('_', " ");
        let label = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
        if label.is_empty() {
            None
        } else {
            Some(Concept { label })
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.label.split(' ')
    }

    pub fn word_count(&self) -> usize {
        self.label.split(' ').count()
    }
}

impl fmt::Debug for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Concept({:?})", self.label)
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl Serialize for Concept {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label)
    }
}

impl<'de> Deserialize<'de> for Concept {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        let concept = Concept::new(&raw).ok_or_else(|| serde::de::Error::custom("empty concept label"))?;
        if concept.label != raw {
            return Err(serde::de::Error::custom(format!(
                "concept label `{raw}` is not normalized"
            )));
        }
        Ok(concept)
    }
}

macro_rules! relations {
    ($($variant:ident),* $(,)?) => {
        /// The fourteen ConceptNet relations used for background probing.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum RelationKind {
            $($variant),*
        }

        impl RelationKind {
            pub const ALL: [RelationKind; 14] = [$(RelationKind::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(RelationKind::$variant => stringify!($variant)),*
                }
            }
        }
    };
}

relations!(
    Antonym, AtLocation, CapableOf, Causes, Desires, FormOf, HasA, IsA, MadeOf, PartOf, RelatedTo, SimilarTo, Synonym,
    UsedFor,
);

impl RelationKind {
    /// Parses a relation URI such as `/r/UsedFor`. Relations outside the
    /// fourteen return `None`.
    pub fn from_uri(uri: &str) -> Option<RelationKind> {
        uri.strip_prefix("/r/")?.parse().ok()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<RelationKind> {
        RelationKind::ALL.get(index).copied()
    }
}

impl FromStr for RelationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationKind::ALL
            .iter()
            .copied()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown relation `{s}`"))
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn flip(self) -> Polarity {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

/// A triple `(c1, relation, c2)`. Positive facts come from the store,
/// negative facts are mined and never present in it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fact {
    pub c1: Concept,
    pub relation: RelationKind,
    pub c2: Concept,
    pub polarity: Polarity,
}

impl Fact {
    pub fn positive(c1: Concept, relation: RelationKind, c2: Concept) -> Fact {
        Fact {
            c1,
            relation,
            c2,
            polarity: Polarity::Positive,
        }
    }

    pub fn negative(c1: Concept, relation: RelationKind, c2: Concept) -> Fact {
        Fact {
            c1,
            relation,
            c2,
            polarity: Polarity::Negative,
        }
    }

    /// Stable textual key, e.g. `+book|UsedFor|school`.
    pub fn key(&self) -> String {
        let sign = match self.polarity {
            Polarity::Positive => '+',
            Polarity::Negative => '-',
        };
        format!("{sign}{}|{}|{}", self.c1, self.relation, self.c2)
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.c1, self.relation, self.c2)
    }
}

/// Parses `c1<TAB>Relation<TAB>c2` lines, used for known-fact lists.
pub fn parse_fact_line(line: &str) -> Option<Fact> {
    let mut parts = line.split('\t');
    let c1 = Concept::new(parts.next()?)?;
    let relation = parts.next()?.trim().parse().ok()?;
    let c2 = Concept::new(parts.next()?)?;
    Some(Fact::positive(c1, relation, c2))
}
