use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hashing::{keyed_rng, seed_material};
use crate::kb::{Concept, DictionaryPool, Fact, FactStore, Polarity};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MiningError {
    #[error("negative mining needs a non-empty dictionary pool")]
    EmptyPool,
    #[error("no eligible negative for {0}")]
    NoEligibleCandidate(Fact),
    #[error("{0} is not a positive fact")]
    NotPositive(Fact),
}

/// Outcome of mining the negative partner of one positive fact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeCandidateSet {
    pub positive: Fact,
    /// Size of the eligible pool after all exclusions.
    pub eligible: usize,
    pub chosen: Concept,
    /// Bytes hashed to seed the draw.
    #[serde(with = "hex_bytes")]
    pub seed_material: Vec<u8>,
}

impl NegativeCandidateSet {
    pub fn negative(&self) -> Fact {
        Fact::negative(self.positive.c1.clone(), self.positive.relation, self.chosen.clone())
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        hex::decode(text).map_err(serde::de::Error::custom)
    }
}

/// Draws the negative partner `(c1, r, c̄)` of a positive `(c1, r, c2)`.
///
/// Eligible candidates are pool entries that are neither `c1` nor `c2` and
/// for which `(c1, r, c̄)` is not in the store. The draw is uniform over the
/// eligible entries and keyed only by `(global_seed, c1, r, c2)`, so the same
/// positive always gets the same partner and distinct `c2` draw independently.
pub fn mine_negative(
    positive: &Fact,
    store: &FactStore,
    pool: &DictionaryPool,
    global_seed: u64,
) -> Result<NegativeCandidateSet, MiningError> {
    if positive.polarity != Polarity::Positive {
        return Err(MiningError::NotPositive(positive.clone()));
    }
    if pool.is_empty() {
        return Err(MiningError::EmptyPool);
    }

    let mut excluded: Vec<usize> = [&positive.c1, &positive.c2]
        .into_iter()
        .filter_map(|c| pool.rank(c))
        .collect();
    if let Some(c1) = store.id_of(&positive.c1) {
        excluded.extend(
            store
                .targets(c1, positive.relation)
                .iter()
                .filter_map(|&t| pool.rank(store.concept(t))),
        );
    }
    excluded.sort_unstable();
    excluded.dedup();

    let eligible = pool.len() - excluded.len();
    if eligible == 0 {
        return Err(MiningError::NoEligibleCandidate(positive.clone()));
    }

    let material = seed_material(
        global_seed,
        &[
            "negative",
            positive.c1.label(),
            positive.relation.name(),
            positive.c2.label(),
        ],
    );
    let mut rng = keyed_rng(&material);
    let draw = rng.gen_range(0..eligible as u64) as usize;

    // Map the draw onto the draw-th pool rank that is not excluded.
    let mut rank = draw;
    for &skip in &excluded {
        if skip <= rank {
            rank += 1;
        } else {
            break;
        }
    }
    let chosen = pool.get(rank).expect("rank stays below pool length").clone();

    Ok(NegativeCandidateSet {
        positive: positive.clone(),
        eligible,
        chosen,
        seed_material: material,
    })
}
